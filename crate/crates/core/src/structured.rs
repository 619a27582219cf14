//! Constructive CLFs for two triangular structures.
//!
//! Strict feedback: `ẏ = h1(y) + h2(y) x`, `ẋ = f(y,x) + g(y,x) u` with scalar
//! `x` and `g ≠ 0`. The composite `V = V_y(y) + P22 (x − α_y(y))²` is built
//! from a Schur-complement partition of a Lyapunov matrix `P`.
//!
//! Feedforward: `ẏ = h(x)`, `ẋ = f(x) + g(x) u` with scalar `y`. Only the
//! additive composition `V_x(x) + w·y²` is provided; general forwarding is
//! out of scope.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clf::{
    BoxRegion, Clf, ControlAffineSystem, PolySystemSpec, Polynomial, ScalarFn, Structure, VectorFn,
};
use crate::error::{Error, Result};
use crate::linear::{is_hurwitz, solve_lyapunov};
use crate::numeric::{
    fd_gradient, fd_jacobian, max_sym_eigenvalue, require_spd, spectral_abscissa, to_vec, Mat,
    Vector,
};
use crate::synthesis::{synthesize, Synthesis, SynthesisOptions};

const BLOCK_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-5;

/// `H1 = ∂h1/∂y(0)`, `H2 = h2(0)`, `F1 = ∂f/∂y(0)`, `F2 = ∂f/∂x(0)`, `G = g(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictFeedbackBlocks {
    #[serde(with = "crate::matrix_json")]
    pub h1: Mat,
    #[serde(with = "crate::matrix_json")]
    pub h2: Mat,
    #[serde(with = "crate::matrix_json")]
    pub f1: Mat,
    pub f2: f64,
    pub g: f64,
}

impl StrictFeedbackBlocks {
    pub fn a(&self) -> Mat {
        let n_y = self.h1.nrows();
        let mut a = Mat::zeros(n_y + 1, n_y + 1);
        a.view_mut((0, 0), (n_y, n_y)).copy_from(&self.h1);
        a.view_mut((0, n_y), (n_y, 1)).copy_from(&self.h2);
        a.view_mut((n_y, 0), (1, n_y)).copy_from(&self.f1);
        a[(n_y, n_y)] = self.f2;
        a
    }

    pub fn b(&self) -> Mat {
        let n_y = self.h1.nrows();
        let mut b = Mat::zeros(n_y + 1, 1);
        b[(n_y, 0)] = self.g;
        b
    }
}

/// State `χ = (y, x)` with `y ∈ ℝ^{n_y}` first and the scalar `x` last.
#[derive(Clone)]
pub struct StrictFeedbackSystem {
    n_y: usize,
    h1: VectorFn,
    h2: VectorFn,
    f: ScalarFn,
    g: ScalarFn,
    blocks: StrictFeedbackBlocks,
}

impl fmt::Debug for StrictFeedbackSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StrictFeedbackSystem")
            .field("n_y", &self.n_y)
            .field("blocks", &self.blocks)
            .finish()
    }
}

fn split(chi: &Vector, n_y: usize) -> (Vector, f64) {
    (chi.rows(0, n_y).into_owned(), chi[n_y])
}

impl StrictFeedbackSystem {
    /// `h1`, `h2` act on `y`; `f`, `g` on the full state `χ = (y, x)`.
    /// Blocks come from central differences.
    pub fn new(n_y: usize, h1: VectorFn, h2: VectorFn, f: ScalarFn, g: ScalarFn) -> Result<Self> {
        if n_y == 0 {
            return Err(Error::dim("n_y must be positive"));
        }
        let y0 = Vector::zeros(n_y);
        let chi0 = Vector::zeros(n_y + 1);
        if h1(&y0).len() != n_y || h2(&y0).len() != n_y {
            return Err(Error::dim(format!("h1 and h2 must return {n_y} entries")));
        }
        if h1(&y0).norm() > 1e-12 || f(&chi0).abs() > 1e-12 {
            return Err(Error::invalid("h1(0) and f(0, 0) must vanish"));
        }
        let g0 = g(&chi0);
        if !(g0 != 0.0 && g0.is_finite()) {
            return Err(Error::invalid("g(0, 0) must be nonzero"));
        }
        let fv = |c: &Vector| Vector::from_element(1, f(c));
        let jf = fd_jacobian(&fv, &chi0, FD_STEP);
        let blocks = StrictFeedbackBlocks {
            h1: fd_jacobian(&*h1, &y0, FD_STEP),
            h2: Mat::from_column_slice(n_y, 1, h2(&y0).as_slice()),
            f1: jf.view((0, 0), (1, n_y)).into_owned(),
            f2: jf[(0, n_y)],
            g: g0,
        };
        Ok(Self {
            n_y,
            h1,
            h2,
            f,
            g,
            blocks,
        })
    }

    /// Replaces the difference blocks by exact ones, within `1e−5`.
    pub fn with_blocks(mut self, blocks: StrictFeedbackBlocks) -> Result<Self> {
        let n_y = self.n_y;
        if blocks.h1.shape() != (n_y, n_y)
            || blocks.h2.shape() != (n_y, 1)
            || blocks.f1.shape() != (1, n_y)
        {
            return Err(Error::dim("linearization blocks have the wrong shapes"));
        }
        let err = (blocks.a() - self.blocks.a())
            .amax()
            .max((blocks.g - self.blocks.g).abs());
        if err > BLOCK_TOL * (1.0 + blocks.a().amax()) {
            return Err(Error::invalid(format!(
                "linearization blocks disagree with finite differences by {err:.3e}"
            )));
        }
        self.blocks = blocks;
        Ok(self)
    }

    /// Reads `ẏ` rows `0..n_y` and the `ẋ` row `n_y` of a single-input
    /// polynomial system tagged `strict_feedback` with split `n_y = n − 1`.
    pub fn from_spec(spec: &PolySystemSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n;
        let n_y = n - 1;
        if spec.structure != Some(Structure::StrictFeedback)
            || spec.split != Some(n_y)
            || spec.p != 1
        {
            return Err(Error::invalid(
                "strict-feedback systems need structure \"strict_feedback\", p = 1 and split = n − 1",
            ));
        }
        let is_zero = |poly: &Polynomial| poly.0.iter().all(|m| m.coeff == 0.0);
        if spec.input[..n_y].iter().any(|row| !is_zero(&row[0])) {
            return Err(Error::invalid("input must enter only the last row"));
        }
        let mut h1_rows = Vec::with_capacity(n_y);
        let mut h2_rows = Vec::with_capacity(n_y);
        for (i, row) in spec.drift[..n_y].iter().enumerate() {
            let mut h1 = Vec::new();
            let mut h2 = Vec::new();
            for m in &row.0 {
                match m.exponents[n_y] {
                    0 => h1.push(m.clone()),
                    1 => {
                        let mut m = m.clone();
                        m.exponents[n_y] = 0;
                        h2.push(m);
                    }
                    _ => return Err(Error::invalid(format!("ẏ row {i} is not affine in x"))),
                }
            }
            h1_rows.push(Polynomial(h1));
            h2_rows.push(Polynomial(h2));
        }
        // h1 and h2 see y padded with x = 0
        let pad = move |y: &Vector| y.clone().insert_row(n_y, 0.0);
        let (h1p, h2p) = (Arc::new(h1_rows), Arc::new(h2_rows));
        let (h1c, h2c) = (h1p.clone(), h2p.clone());
        let h1: VectorFn = Arc::new(move |y: &Vector| {
            let c = pad(y);
            Vector::from_iterator(n_y, h1c.iter().map(|q| q.eval(&c)))
        });
        let h2: VectorFn = Arc::new(move |y: &Vector| {
            let c = pad(y);
            Vector::from_iterator(n_y, h2c.iter().map(|q| q.eval(&c)))
        });
        let fpoly = spec.drift[n_y].clone();
        let gpoly = spec.input[n_y][0].clone();
        let zero = Vector::zeros(n);
        let blocks = StrictFeedbackBlocks {
            h1: Mat::from_fn(n_y, n_y, |i, j| h1p[i].partial(j).eval(&zero)),
            h2: Mat::from_fn(n_y, 1, |i, _| h2p[i].eval(&zero)),
            f1: Mat::from_fn(1, n_y, |_, j| fpoly.partial(j).eval(&zero)),
            f2: fpoly.partial(n_y).eval(&zero),
            g: gpoly.eval(&zero),
        };
        let (fp, gp) = (fpoly.clone(), gpoly.clone());
        Self::new(
            n_y,
            h1,
            h2,
            Arc::new(move |c: &Vector| fp.eval(c)),
            Arc::new(move |c: &Vector| gp.eval(c)),
        )?
        .with_blocks(blocks)
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn blocks(&self) -> &StrictFeedbackBlocks {
        &self.blocks
    }

    pub fn g(&self, chi: &Vector) -> f64 {
        (self.g)(chi)
    }

    /// Fails with the offending states if `g` vanishes at a sampled point.
    pub fn check_input_gain(&self, region: &BoxRegion, n_samples: usize, seed: u64) -> Result<()> {
        if region.dim() != self.n_y + 1 {
            return Err(Error::dim(
                "region dimension differs from the state dimension",
            ));
        }
        let bad: Vec<Vec<f64>> = region
            .sample_multiscale(n_samples, seed)
            .into_iter()
            .filter(|c| {
                let g = self.g(c);
                !(g != 0.0 && g.is_finite())
            })
            .take(20)
            .map(|c| to_vec(&c))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Certificate {
                what: "g vanishes on the box".into(),
                states: bad,
            })
        }
    }

    pub fn to_control_affine(&self) -> Result<ControlAffineSystem> {
        let n_y = self.n_y;
        let (h1, h2, f, g) = (
            self.h1.clone(),
            self.h2.clone(),
            self.f.clone(),
            self.g.clone(),
        );
        ControlAffineSystem::new(
            n_y + 1,
            1,
            move |c: &Vector| {
                let (y, x) = split(c, n_y);
                let dy = h1(&y) + h2(&y) * x;
                dy.insert_row(n_y, f(c))
            },
            move |c: &Vector| {
                let mut b = Mat::zeros(n_y + 1, 1);
                b[(n_y, 0)] = g(c);
                b
            },
        )?
        .with_linearization(self.blocks.a(), self.blocks.b())
    }
}

/// `H = ∂h/∂x(0)`, `F = ∂f/∂x(0)`, `G = g(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardBlocks {
    #[serde(with = "crate::matrix_json")]
    pub h: Mat,
    #[serde(with = "crate::matrix_json")]
    pub f: Mat,
    #[serde(with = "crate::matrix_json")]
    pub g: Mat,
}

impl FeedforwardBlocks {
    pub fn a(&self) -> Mat {
        let n_x = self.f.nrows();
        let mut a = Mat::zeros(n_x + 1, n_x + 1);
        a.view_mut((0, 1), (1, n_x)).copy_from(&self.h);
        a.view_mut((1, 1), (n_x, n_x)).copy_from(&self.f);
        a
    }

    pub fn b(&self) -> Mat {
        Mat::zeros(1, self.g.ncols())
            .insert_rows(1, self.g.nrows(), 0.0)
            .map_with_location(|i, j, _| if i == 0 { 0.0 } else { self.g[(i - 1, j)] })
    }
}

/// State `χ = (y, x)` with the scalar `y` first.
#[derive(Clone)]
pub struct FeedforwardSystem {
    n_x: usize,
    p: usize,
    h: ScalarFn,
    f: VectorFn,
    g: crate::clf::MatrixFn,
    blocks: FeedforwardBlocks,
}

impl fmt::Debug for FeedforwardSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedforwardSystem")
            .field("n_x", &self.n_x)
            .field("p", &self.p)
            .field("blocks", &self.blocks)
            .finish()
    }
}

impl FeedforwardSystem {
    /// `h`, `f`, `g` act on `x` only.
    pub fn new(
        n_x: usize,
        p: usize,
        h: ScalarFn,
        f: VectorFn,
        g: crate::clf::MatrixFn,
    ) -> Result<Self> {
        if n_x == 0 || p == 0 {
            return Err(Error::dim("n_x and p must be positive"));
        }
        let x0 = Vector::zeros(n_x);
        if f(&x0).len() != n_x || g(&x0).shape() != (n_x, p) {
            return Err(Error::dim("f or g has the wrong shape"));
        }
        if h(&x0).abs() > 1e-12 || f(&x0).norm() > 1e-12 {
            return Err(Error::invalid("h(0) and f(0) must vanish"));
        }
        let hv = |x: &Vector| Vector::from_element(1, h(x));
        let blocks = FeedforwardBlocks {
            h: fd_jacobian(&hv, &x0, FD_STEP),
            f: fd_jacobian(&*f, &x0, FD_STEP),
            g: g(&x0),
        };
        Ok(Self {
            n_x,
            p,
            h,
            f,
            g,
            blocks,
        })
    }

    pub fn with_blocks(mut self, blocks: FeedforwardBlocks) -> Result<Self> {
        if blocks.h.shape() != (1, self.n_x)
            || blocks.f.shape() != (self.n_x, self.n_x)
            || blocks.g.shape() != (self.n_x, self.p)
        {
            return Err(Error::dim("linearization blocks have the wrong shapes"));
        }
        let err = (blocks.a() - self.blocks.a())
            .amax()
            .max((&blocks.g - &self.blocks.g).amax());
        if err > BLOCK_TOL * (1.0 + blocks.a().amax()) {
            return Err(Error::invalid(format!(
                "linearization blocks disagree with finite differences by {err:.3e}"
            )));
        }
        self.blocks = blocks;
        Ok(self)
    }

    /// Polynomial system tagged `feedforward` with split 1; no row may depend
    /// on the first coordinate and the input must not enter it.
    pub fn from_spec(spec: &PolySystemSpec) -> Result<Self> {
        spec.validate()?;
        if spec.structure != Some(Structure::Feedforward) || spec.split != Some(1) {
            return Err(Error::invalid(
                "feedforward systems need structure \"feedforward\" and split = 1",
            ));
        }
        let depends_on_y =
            |poly: &Polynomial| poly.0.iter().any(|m| m.coeff != 0.0 && m.exponents[0] > 0);
        if spec
            .drift
            .iter()
            .chain(spec.input.iter().flatten())
            .any(depends_on_y)
        {
            return Err(Error::invalid("feedforward rows must not depend on y"));
        }
        if spec.input[0]
            .iter()
            .any(|q| q.0.iter().any(|m| m.coeff != 0.0))
        {
            return Err(Error::invalid("input must not enter the ẏ row"));
        }
        let sys = spec.to_system()?;
        let (n, p) = (spec.n, spec.p);
        let n_x = n - 1;
        let lift = move |x: &Vector| x.clone().insert_row(0, 0.0);
        let (s1, s2, s3) = (sys.clone(), sys.clone(), sys.clone());
        let lin = sys.linearization();
        let blocks = FeedforwardBlocks {
            h: lin.a().view((0, 1), (1, n_x)).into_owned(),
            f: lin.a().view((1, 1), (n_x, n_x)).into_owned(),
            g: lin.b().view((1, 0), (n_x, p)).into_owned(),
        };
        Self::new(
            n_x,
            p,
            Arc::new(move |x: &Vector| s1.drift(&lift(x))[0]),
            Arc::new(move |x: &Vector| s2.drift(&lift(x)).rows(1, n_x).into_owned()),
            Arc::new(move |x: &Vector| s3.input(&lift(x)).rows(1, n_x).into_owned()),
        )?
        .with_blocks(blocks)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn blocks(&self) -> &FeedforwardBlocks {
        &self.blocks
    }

    pub fn to_control_affine(&self) -> Result<ControlAffineSystem> {
        let (n_x, p) = (self.n_x, self.p);
        let (h, f, g) = (self.h.clone(), self.f.clone(), self.g.clone());
        ControlAffineSystem::new(
            n_x + 1,
            p,
            move |c: &Vector| {
                let x = c.rows(1, n_x).into_owned();
                f(&x).insert_row(0, h(&x))
            },
            move |c: &Vector| g(&c.rows(1, n_x).into_owned()).insert_row(0, 0.0),
        )?
        .with_linearization(self.blocks.a(), self.blocks.b())
    }
}

/// `P = [[P11, P12], [P12ᵀ, P22]]` split off its last coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacksteppingPartition {
    #[serde(with = "crate::matrix_json")]
    pub p11: Mat,
    #[serde(with = "crate::matrix_json")]
    pub p12: Mat,
    pub p22: f64,
    /// Schur complement `P11 − P12 P22⁻¹ P12ᵀ`.
    #[serde(with = "crate::matrix_json")]
    pub p_y: Mat,
    /// `[I; −P12ᵀ/P22]`.
    #[serde(with = "crate::matrix_json")]
    pub t: Mat,
    /// `−P12ᵀ/P22`.
    #[serde(with = "crate::matrix_json")]
    pub local_inner_gain: Mat,
}

impl BacksteppingPartition {
    /// Pure algebra: Schur complement, `T`, and the identity `TᵀP = [P_y 0]`.
    pub fn new(p: &Mat) -> Result<Self> {
        require_spd(p, "P")?;
        let n = p.nrows();
        if n < 2 {
            return Err(Error::dim("P must be at least 2x2"));
        }
        let n_y = n - 1;
        let p11 = p.view((0, 0), (n_y, n_y)).into_owned();
        let p12 = p.view((0, n_y), (n_y, 1)).into_owned();
        let p22 = p[(n_y, n_y)];
        let gain = p12.transpose() / -p22;
        let p_y = crate::numeric::symmetrize(&(&p11 - &p12 * p12.transpose() / p22));
        let mut t = Mat::zeros(n, n_y);
        t.view_mut((0, 0), (n_y, n_y)).fill_with_identity();
        t.view_mut((n_y, 0), (1, n_y)).copy_from(&gain);
        let part = Self {
            p11,
            p12,
            p22,
            p_y,
            t,
            local_inner_gain: gain,
        };
        require_spd(&part.p_y, "Schur complement P_y")?;
        let mut expect = Mat::zeros(n_y, n);
        expect.view_mut((0, 0), (n_y, n_y)).copy_from(&part.p_y);
        let err = (part.t.transpose() * p - expect).amax();
        if err > 1e-12 * p.amax().max(1.0) {
            return Err(Error::invalid(format!(
                "TᵀP differs from [P_y 0] by {err:.3e}"
            )));
        }
        Ok(part)
    }

    pub fn n_y(&self) -> usize {
        self.p11.nrows()
    }

    pub fn reassemble(&self) -> Mat {
        let n_y = self.n_y();
        let mut p = Mat::zeros(n_y + 1, n_y + 1);
        p.view_mut((0, 0), (n_y, n_y)).copy_from(&self.p11);
        p.view_mut((0, n_y), (n_y, 1)).copy_from(&self.p12);
        p.view_mut((n_y, 0), (1, n_y))
            .copy_from(&self.p12.transpose());
        p[(n_y, n_y)] = self.p22;
        p
    }

    /// `max |TᵀPB|` for `B` of the strict-feedback shape `(0, …, 0, G)ᵀ`.
    pub fn tpb(&self, g: f64) -> f64 {
        let n_y = self.n_y();
        let mut b = Mat::zeros(n_y + 1, 1);
        b[(n_y, 0)] = g;
        (self.t.transpose() * self.reassemble() * b).amax()
    }

    /// Largest eigenvalue of `P_y (H1 + H2 K_y) + (·)ᵀ P_y`, `K_y` the local
    /// inner gain.
    pub fn reduced_lyapunov_max_eig(&self, h1: &Mat, h2: &Mat) -> Result<f64> {
        let n_y = self.n_y();
        if h1.shape() != (n_y, n_y) || h2.shape() != (n_y, 1) {
            return Err(Error::dim("H1 and H2 do not match the partition"));
        }
        let a_y = h1 + h2 * &self.local_inner_gain;
        let m = &self.p_y * &a_y;
        Ok(max_sym_eigenvalue(&(&m + m.transpose())))
    }
}

/// Partition of `P` together with the reduced inequality for `(H1, H2)`.
pub fn backstepping_partition(p: &Mat, h1: &Mat, h2: &Mat) -> Result<BacksteppingPartition> {
    let part = BacksteppingPartition::new(p)?;
    let top = part.reduced_lyapunov_max_eig(h1, h2)?;
    if !(top < 0.0) {
        return Err(Error::Certificate {
            what: format!("reduced Lyapunov inequality fails (largest eigenvalue {top:.3e}): P does not certify this structure"),
            states: vec![],
        });
    }
    Ok(part)
}

/// Inner pair for the `y` subsystem: `V_y` with `H(V_y)(0) = 2P_y` and a
/// virtual control `α_y` with `∂α_y/∂y(0) = K_y`.
#[derive(Clone)]
pub struct InnerPair {
    pub v_y: Clf,
    pub alpha: ScalarFn,
    pub alpha_gradient: Option<VectorFn>,
}

/// Builds an inner pair from `(P_y, K_y)`.
pub type InnerFactory = dyn Fn(&Mat, &Mat) -> Result<InnerPair> + Send + Sync;

/// `V_y = yᵀP_y y`, `α_y = K_y y`.
pub fn quadratic_inner(p_y: &Mat, gain: &Mat) -> Result<InnerPair> {
    let v_y = crate::clf::local_quadratic_clf(p_y)?;
    let k = gain.row(0).transpose();
    let k2 = k.clone();
    Ok(InnerPair {
        v_y,
        alpha: Arc::new(move |y: &Vector| k.dot(y)),
        alpha_gradient: Some(Arc::new(move |_| k2.clone())),
    })
}

/// `V(y, x) = V_y(y) + P22 (x − α_y(y))²` with `H(V)(0) = 2P`.
pub fn backstepping_clf(inner: &InnerPair, part: &BacksteppingPartition) -> Result<Clf> {
    let n_y = part.n_y();
    if inner.v_y.n() != n_y {
        return Err(Error::dim("V_y dimension differs from the partition"));
    }
    let hy = inner.v_y.hessian_origin();
    let herr = (hy - &part.p_y * 2.0).amax();
    if herr > 1e-9 * (1.0 + part.p_y.amax()) {
        return Err(Error::invalid(format!(
            "H(V_y)(0) differs from 2P_y by {herr:.3e}"
        )));
    }
    let y0 = Vector::zeros(n_y);
    if inner.alpha.as_ref()(&y0).abs() > 1e-12 {
        return Err(Error::invalid("α_y(0) must vanish"));
    }
    let grad0 = fd_gradient(&*inner.alpha, &y0);
    let want = part.local_inner_gain.row(0).transpose();
    let gerr = (&grad0 - &want).amax();
    if gerr > 1e-6 * (1.0 + want.amax()) {
        return Err(Error::invalid(format!(
            "∂α_y/∂y(0) differs from −P12ᵀ/P22 by {gerr:.3e}"
        )));
    }
    let p22 = part.p22;
    let (vy, alpha) = (inner.v_y.clone(), inner.alpha.clone());
    let value: ScalarFn = Arc::new(move |c: &Vector| {
        let (y, x) = split(c, n_y);
        let e = x - alpha(&y);
        vy.value(&y) + p22 * e * e
    });
    let gradient: Option<VectorFn> = inner.alpha_gradient.clone().map(|ag| {
        let (vy, alpha) = (inner.v_y.clone(), inner.alpha.clone());
        Arc::new(move |c: &Vector| {
            let (y, x) = split(c, n_y);
            let e = 2.0 * p22 * (x - alpha(&y));
            (vy.gradient(&y) - ag(&y) * e).insert_row(n_y, e)
        }) as VectorFn
    });
    Clf::new(n_y + 1, value, gradient, part.reassemble() * 2.0)
}

/// Everything produced by [`backstepping_synthesize`].
#[derive(Clone)]
pub struct BacksteppingDesign {
    pub p: Mat,
    pub partition: BacksteppingPartition,
    pub clf: Clf,
    pub system: ControlAffineSystem,
    pub synthesis: Synthesis,
}

/// Lyapunov matrix `P` (given, or from `(A+BK_o)ᵀP + P(A+BK_o) = −I`),
/// partition, inner pair from `factory` (default [`quadratic_inner`]),
/// composite CLF, then the blended synthesis on `opts.region`.
pub fn backstepping_synthesize(
    sys: &StrictFeedbackSystem,
    k_o: &Mat,
    p: Option<&Mat>,
    factory: Option<&InnerFactory>,
    opts: &SynthesisOptions,
) -> Result<BacksteppingDesign> {
    let n = sys.n_y + 1;
    if k_o.shape() != (1, n) {
        return Err(Error::dim(format!("K_o must be 1x{n}")));
    }
    let blocks = sys.blocks();
    let a_cl = blocks.a() + blocks.b() * k_o;
    if !is_hurwitz(&a_cl)? {
        return Err(Error::NotHurwitz {
            what: "A + B K_o".into(),
            abscissa: spectral_abscissa(&a_cl),
        });
    }
    let p = match p {
        Some(p) => {
            require_spd(p, "P")?;
            let m = p * &a_cl;
            let top = max_sym_eigenvalue(&(&m + m.transpose()));
            if !(top < 0.0) {
                return Err(Error::Certificate {
                    what: format!(
                        "P is not a Lyapunov matrix for A + B K_o (largest eigenvalue {top:.3e})"
                    ),
                    states: vec![],
                });
            }
            p.clone()
        }
        None => solve_lyapunov(&a_cl, &Mat::identity(n, n))?.p,
    };
    let partition = backstepping_partition(&p, &blocks.h1, &blocks.h2)?;
    let inner = match factory {
        Some(f) => f(&partition.p_y, &partition.local_inner_gain)?,
        None => quadratic_inner(&partition.p_y, &partition.local_inner_gain)?,
    };
    let clf = backstepping_clf(&inner, &partition)?;
    sys.check_input_gain(&opts.region, opts.samples.n_samples, opts.samples.seed)?;
    let system = sys.to_control_affine()?;
    let synthesis = synthesize(&system, &clf, k_o, opts)?;
    Ok(BacksteppingDesign {
        p,
        partition,
        clf,
        system,
        synthesis,
    })
}

/// `V(χ) = V_x(χ without coordinate i) + weight·χ_i²`: inserts a new
/// coordinate at `position` with a quadratic penalty. Coordinates are
/// relative to the equilibrium, so an offset such as `χ₄ − p₀` is handled by
/// the caller's state shift.
pub fn additive_forward_clf(v_x: &Clf, weight: f64, position: usize) -> Result<Clf> {
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::invalid("weight must be positive"));
    }
    let n_x = v_x.n();
    if position > n_x {
        return Err(Error::dim(format!("position {position} exceeds {n_x}")));
    }
    let drop = move |c: &Vector| c.clone().remove_row(position);
    let vv = v_x.clone();
    let value: ScalarFn =
        Arc::new(move |c: &Vector| vv.value(&drop(c)) + weight * c[position] * c[position]);
    let vg = v_x.clone();
    let gradient: VectorFn = Arc::new(move |c: &Vector| {
        vg.gradient(&drop(c))
            .insert_row(position, 2.0 * weight * c[position])
    });
    let hx = v_x.hessian_origin();
    let hess = Mat::from_fn(n_x + 1, n_x + 1, |i, j| {
        match (i.cmp(&position), j.cmp(&position)) {
            (std::cmp::Ordering::Equal, std::cmp::Ordering::Equal) => 2.0 * weight,
            (std::cmp::Ordering::Equal, _) | (_, std::cmp::Ordering::Equal) => 0.0,
            _ => hx[(i - usize::from(i > position), j - usize::from(j > position))],
        }
    });
    Clf::new(n_x + 1, value, Some(gradient), hess)
}
