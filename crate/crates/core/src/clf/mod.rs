//! Control-affine systems, control Lyapunov functions and their sampled
//! certificates.

mod certify;
mod poly;
mod sampling;

pub use certify::{
    blend_profile, check_artstein_sampled, decrease_margin, find_r0, scan_levels, ArtsteinOptions,
    ArtsteinReport, BlendProfile, LevelScan, LevelStatus, LevelVerdict, SampleOptions,
};
pub use poly::{Monomial, PolySystemSpec, Polynomial, Structure};
pub use sampling::{halton, BoxRegion};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linear::LinearSystem;
use crate::numeric::{fd_gradient, fd_hessian, fd_jacobian, rel_diff, require_spd, Mat, Vector};

pub type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&Vector) -> Mat + Send + Sync>;

/// Step of the central differences used for linearizations.
const LIN_STEP: f64 = 1e-5;

/// `ẋ = a(x) + b(x) u` with `a(0) = 0`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    n: usize,
    p: usize,
    drift: VectorFn,
    input: MatrixFn,
    lin: LinearSystem,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("linearization", &self.lin)
            .finish()
    }
}

impl ControlAffineSystem {
    /// Linearization by central differences of `a` at the origin, `B = b(0)`.
    pub fn new(
        n: usize,
        p: usize,
        drift: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        input: impl Fn(&Vector) -> Mat + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::from_arcs(n, p, Arc::new(drift), Arc::new(input))
    }

    pub fn from_arcs(n: usize, p: usize, drift: VectorFn, input: MatrixFn) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::dim("state and input dimensions must be positive"));
        }
        let zero = Vector::zeros(n);
        let a0 = drift(&zero);
        if a0.len() != n {
            return Err(Error::dim(format!(
                "drift returns {} entries, expected {n}",
                a0.len()
            )));
        }
        if a0.norm() > 1e-12 {
            return Err(Error::invalid(format!(
                "origin is not an equilibrium: |a(0)| = {:.3e}",
                a0.norm()
            )));
        }
        let b0 = input(&zero);
        if b0.nrows() != n || b0.ncols() != p {
            return Err(Error::dim(format!(
                "input map returns {}x{}, expected {n}x{p}",
                b0.nrows(),
                b0.ncols()
            )));
        }
        let a_lin = fd_jacobian(&*drift, &zero, LIN_STEP);
        let lin = LinearSystem::unchecked(a_lin, b0)?;
        Ok(Self {
            n,
            p,
            drift,
            input,
            lin,
        })
    }

    /// Replaces the finite-difference linearization by a supplied one after
    /// checking that the two agree.
    pub fn with_linearization(mut self, a: Mat, b: Mat) -> Result<Self> {
        let given = LinearSystem::unchecked(a, b)?;
        if given.n() != self.n || given.p() != self.p {
            return Err(Error::dim("supplied linearization has the wrong shape"));
        }
        for (fd, sup, what) in [
            (self.lin.a(), given.a(), "A"),
            (self.lin.b(), given.b(), "B"),
        ] {
            let err = (fd - sup).norm();
            if err > 1e-5 * (1.0 + sup.norm()) {
                return Err(Error::invalid(format!(
                    "supplied {what} disagrees with finite differences by {err:.3e}"
                )));
            }
        }
        self.lin = given;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn drift(&self, x: &Vector) -> Vector {
        (self.drift)(x)
    }

    pub fn input(&self, x: &Vector) -> Mat {
        (self.input)(x)
    }

    pub fn field(&self, x: &Vector, u: &Vector) -> Vector {
        self.drift(x) + self.input(x) * u
    }

    pub fn linearization(&self) -> &LinearSystem {
        &self.lin
    }

    pub fn drift_fn(&self) -> &VectorFn {
        &self.drift
    }

    pub fn input_fn(&self) -> &MatrixFn {
        &self.input
    }
}

/// A candidate control Lyapunov function `V` with `V(0) = 0` and
/// `H(V)(0) = hessian_origin` positive definite.
#[derive(Clone)]
pub struct Clf {
    n: usize,
    value: ScalarFn,
    gradient: Option<VectorFn>,
    hessian_origin: Mat,
}

impl fmt::Debug for Clf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Clf")
            .field("n", &self.n)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("hessian_origin", &self.hessian_origin)
            .finish()
    }
}

impl Clf {
    /// Validates `V(0) = 0`, the Hessian against second differences and its
    /// definiteness. Without an analytic gradient, central differences are used.
    pub fn new(
        n: usize,
        value: ScalarFn,
        gradient: Option<VectorFn>,
        hessian_origin: Mat,
    ) -> Result<Self> {
        if hessian_origin.nrows() != n || hessian_origin.ncols() != n {
            return Err(Error::dim(format!("Hessian at the origin must be {n}x{n}")));
        }
        require_spd(&hessian_origin, "Hessian of V at the origin")?;
        let zero = Vector::zeros(n);
        let v0 = value(&zero);
        if v0.abs() > 1e-12 {
            return Err(Error::invalid(format!("V(0) = {v0:.3e}, expected 0")));
        }
        if let Some(g) = &gradient {
            let g0 = g(&zero);
            if g0.len() != n {
                return Err(Error::dim("gradient has the wrong length"));
            }
        }
        let clf = Self {
            n,
            value,
            gradient,
            hessian_origin,
        };
        let fd = clf.fd_hessian_origin();
        let mismatch = rel_diff(&fd, &clf.hessian_origin);
        if mismatch > 1e-3 {
            return Err(Error::invalid(format!(
                "declared Hessian at the origin differs from second differences by {mismatch:.3e} (relative)"
            )));
        }
        Ok(clf)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(&*self.value, x),
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn hessian_origin(&self) -> &Mat {
        &self.hessian_origin
    }

    /// `P = ½ H(V)(0)`.
    pub fn local_p(&self) -> Mat {
        &self.hessian_origin * 0.5
    }

    pub fn value_fn(&self) -> &ScalarFn {
        &self.value
    }

    pub fn fd_hessian_origin(&self) -> Mat {
        fd_hessian(&*self.value, &Vector::zeros(self.n), 1e-4)
    }

    /// Checks `V > 0` at sampled nonzero states and returns the largest level
    /// whose sublevel set stays inside the box, estimated as 0.95 times the
    /// smallest sampled value on the box boundary.
    pub fn check_on_box(&self, region: &BoxRegion, n_samples: usize, seed: u64) -> Result<f64> {
        if region.dim() != self.n {
            return Err(Error::dim("region and V have different dimensions"));
        }
        let bad: Vec<Vec<f64>> = region
            .sample_multiscale(n_samples, seed)
            .into_iter()
            .filter(|x| x.norm() > 0.0 && !(self.value(x) > 0.0))
            .take(20)
            .map(|x| x.iter().copied().collect())
            .collect();
        if !bad.is_empty() {
            return Err(Error::Certificate {
                what: "V is not positive on the box".into(),
                states: bad,
            });
        }
        let level = self.max_contained_level(region, n_samples, seed);
        if !(level > 0.0) {
            return Err(Error::Certificate {
                what: "V does not grow toward the box boundary".into(),
                states: vec![],
            });
        }
        Ok(level)
    }

    /// Sampled estimate of the largest `c` with `{V ≤ c}` inside the box.
    pub fn max_contained_level(&self, region: &BoxRegion, n_samples: usize, seed: u64) -> f64 {
        let min = region
            .sample_boundary(n_samples.max(4 * self.n), seed)
            .iter()
            .map(|x| self.value(x))
            .fold(f64::INFINITY, f64::min);
        0.95 * min
    }
}

/// `V(x) = xᵀPx`.
pub fn local_quadratic_clf(p: &Mat) -> Result<Clf> {
    require_spd(p, "P")?;
    let n = p.nrows();
    let pv = p.clone();
    let pg = p.clone();
    Clf::new(
        n,
        Arc::new(move |x: &Vector| (x.transpose() * &pv * x)[(0, 0)]),
        Some(Arc::new(move |x: &Vector| &pg * x * 2.0)),
        p * 2.0,
    )
}

/// `(L_aV(x), L_bV(x))`, the latter as a vector of length `p`.
pub fn lie_derivatives(v: &Clf, sys: &ControlAffineSystem, x: &Vector) -> (f64, Vector) {
    let g = v.gradient(x);
    let la = g.dot(&sys.drift(x));
    let lb = sys.input(x).transpose() * g;
    (la, lb)
}
