//! Polynomial vector fields declared in JSON as lists of monomials.
//!
//! ```json
//! {"n": 1, "p": 1,
//!  "drift": [[{"coeff": 1.0, "exponents": [3]}]],
//!  "input": [[[{"coeff": 1.0, "exponents": [0]}]]]}
//! ```
//!
//! `drift` has one polynomial per state, `input` is an `n × p` array of
//! polynomials. An optional `structure` tag with a `split` index marks
//! strict-feedback or feedforward plants.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ControlAffineSystem;
use crate::error::{Error, Result};
use crate::numeric::{Mat, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<Monomial>);

impl Polynomial {
    pub fn eval(&self, x: &Vector) -> f64 {
        self.0
            .iter()
            .map(|m| {
                m.exponents
                    .iter()
                    .enumerate()
                    .fold(m.coeff, |acc, (i, &e)| acc * x[i].powi(e as i32))
            })
            .sum()
    }

    pub fn partial(&self, i: usize) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .filter(|m| m.exponents[i] > 0)
                .map(|m| {
                    let mut exponents = m.exponents.clone();
                    exponents[i] -= 1;
                    Monomial {
                        coeff: m.coeff * m.exponents[i] as f64,
                        exponents,
                    }
                })
                .collect(),
        )
    }

    fn check(&self, n: usize, what: &str) -> Result<()> {
        for m in &self.0 {
            if m.exponents.len() != n {
                return Err(Error::dim(format!(
                    "{what}: monomial has {} exponents, expected {n}",
                    m.exponents.len()
                )));
            }
            if !m.coeff.is_finite() {
                return Err(Error::invalid(format!("{what}: non-finite coefficient")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    StrictFeedback,
    Feedforward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySystemSpec {
    pub n: usize,
    pub p: usize,
    pub drift: Vec<Polynomial>,
    pub input: Vec<Vec<Polynomial>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<Structure>,
    /// Number of leading coordinates in the first block of the structure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<usize>,
}

impl PolySystemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::dim("n and p must be positive"));
        }
        if self.drift.len() != self.n {
            return Err(Error::dim(format!(
                "drift has {} rows, expected {}",
                self.drift.len(),
                self.n
            )));
        }
        if self.input.len() != self.n || self.input.iter().any(|r| r.len() != self.p) {
            return Err(Error::dim(format!("input must be {}x{}", self.n, self.p)));
        }
        for (i, poly) in self.drift.iter().enumerate() {
            poly.check(self.n, &format!("drift[{i}]"))?;
        }
        for (i, row) in self.input.iter().enumerate() {
            for (j, poly) in row.iter().enumerate() {
                poly.check(self.n, &format!("input[{i}][{j}]"))?;
            }
        }
        match (self.structure, self.split) {
            (Some(_), None) => Err(Error::invalid("a structure tag needs a split index")),
            (Some(_), Some(s)) if s == 0 || s >= self.n => Err(Error::invalid(format!(
                "split {s} must lie in 1..{}",
                self.n
            ))),
            _ => Ok(()),
        }
    }

    /// The system, with its linearization taken from the exact polynomial
    /// derivatives.
    pub fn to_system(&self) -> Result<ControlAffineSystem> {
        self.validate()?;
        let n = self.n;
        let p = self.p;
        let zero = Vector::zeros(n);
        let a_lin = Mat::from_fn(n, n, |i, j| self.drift[i].partial(j).eval(&zero));
        let b0 = Mat::from_fn(n, p, |i, j| self.input[i][j].eval(&zero));

        let drift = Arc::new(self.drift.clone());
        let input = Arc::new(self.input.clone());
        ControlAffineSystem::new(
            n,
            p,
            move |x: &Vector| Vector::from_iterator(n, drift.iter().map(|q| q.eval(x))),
            move |x: &Vector| Mat::from_fn(n, p, |i, j| input[i][j].eval(x)),
        )?
        .with_linearization(a_lin, b0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_evaluate() {
        let json = r#"{"n": 2, "p": 1,
            "drift": [[{"coeff": 1.0, "exponents": [2, 0]}, {"coeff": 1.0, "exponents": [0, 1]}],
                      [{"coeff": 1.0, "exponents": [1, 1]}]],
            "input": [[[]], [[{"coeff": 1.0, "exponents": [0, 0]}, {"coeff": 1.0, "exponents": [0, 2]}]]],
            "structure": "strict_feedback", "split": 1}"#;
        let spec: PolySystemSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.structure, Some(Structure::StrictFeedback));
        let sys = spec.to_system().unwrap();
        let x = Vector::from_vec(vec![2.0, 3.0]);
        assert_eq!(sys.drift(&x), Vector::from_vec(vec![7.0, 6.0]));
        assert_eq!(sys.input(&x), Mat::from_row_slice(2, 1, &[0.0, 10.0]));
        let lin = sys.linearization();
        assert_eq!(lin.a(), &Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn partial_derivative() {
        // 3 x² y
        let q = Polynomial(vec![Monomial {
            coeff: 3.0,
            exponents: vec![2, 1],
        }]);
        let x = Vector::from_vec(vec![2.0, 5.0]);
        assert_eq!(q.partial(0).eval(&x), 60.0);
        assert_eq!(q.partial(1).eval(&x), 12.0);
        assert!(q.partial(1).partial(1).0.is_empty());
    }

    #[test]
    fn rejects_bad_shapes() {
        let json = r#"{"n": 1, "p": 1, "drift": [[{"coeff": 1.0, "exponents": [1, 0]}]], "input": [[[]]]}"#;
        let spec: PolySystemSpec = serde_json::from_str(json).unwrap();
        assert!(spec.to_system().is_err());
        let json =
            r#"{"n": 1, "p": 1, "drift": [[{"coeff": 1.0, "exponents": [0]}]], "input": [[[]]]}"#;
        let spec: PolySystemSpec = serde_json::from_str(json).unwrap();
        // constant drift: the origin is not an equilibrium
        assert!(spec.to_system().is_err());
    }
}
