//! Named demo problems, each seeded by the LQ design of its linearization.

use std::sync::Arc;

use crate::clf::{
    local_quadratic_clf, BoxRegion, Clf, ControlAffineSystem, PolySystemSpec, Structure,
};
use crate::error::{Error, Result};
use crate::inverse_opt::{
    design_inverse_optimal, InverseDesign, InverseDesignOptions, LevelOptions,
};
use crate::linear::{lqr_gain, solve_care, QuadraticWeights};
use crate::numeric::{Mat, Vector};
use crate::orbital::{orbital_strict_feedback, OrbitalParams};
use crate::structured::{
    backstepping_clf, backstepping_partition, backstepping_synthesize, quadratic_inner,
    StrictFeedbackSystem,
};
use crate::synthesis::{synthesize, Synthesis, SynthesisOptions};

pub const DEMOS: [&str; 4] = [
    "scalar_lq",
    "scalar_cubic",
    "strict_feedback_demo",
    "reduced_orbital",
];

/// A plant with its Riccati solution `P`, LQR gain `K_o`, CLF and working box.
#[derive(Debug, Clone)]
pub struct Demo {
    pub name: String,
    pub system: ControlAffineSystem,
    pub strict_feedback: Option<StrictFeedbackSystem>,
    pub q: Mat,
    pub r: Mat,
    pub p: Mat,
    pub k_o: Mat,
    /// `xᵀPx`, or the backstepping composite for strict-feedback plants.
    pub clf: Clf,
    pub region: BoxRegion,
}

impl Demo {
    /// Solves the CARE of the linearization and builds the CLF.
    pub fn lq_seeded(
        name: &str,
        system: ControlAffineSystem,
        strict_feedback: Option<StrictFeedbackSystem>,
        q: Mat,
        r: Mat,
        region: BoxRegion,
    ) -> Result<Self> {
        let lin = crate::linear::LinearSystem::new(
            system.linearization().a().clone(),
            system.linearization().b().clone(),
        )?;
        let cert = solve_care(&lin, &QuadraticWeights::new(q.clone(), r.clone())?)?;
        let k_o = lqr_gain(&cert, &lin, &r)?;
        let clf = match &strict_feedback {
            Some(sf) => {
                let b = sf.blocks();
                let part = backstepping_partition(&cert.p, &b.h1, &b.h2)?;
                backstepping_clf(&quadratic_inner(&part.p_y, &part.local_inner_gain)?, &part)?
            }
            None => local_quadratic_clf(&cert.p)?,
        };
        if region.dim() != system.n() {
            return Err(Error::dim("working box and system differ in dimension"));
        }
        Ok(Self {
            name: name.to_string(),
            system,
            strict_feedback,
            q,
            r,
            p: cert.p,
            k_o,
            clf,
            region,
        })
    }

    /// Polynomial plant with `(Q, R)`; strict-feedback tags go through the
    /// backstepping composite.
    pub fn from_polynomial(
        name: &str,
        spec: &PolySystemSpec,
        q: Mat,
        r: Mat,
        region: BoxRegion,
    ) -> Result<Self> {
        let system = spec.to_system()?;
        let strict = match spec.structure {
            Some(Structure::StrictFeedback) => Some(StrictFeedbackSystem::from_spec(spec)?),
            _ => None,
        };
        Self::lq_seeded(name, system, strict, q, r, region)
    }

    pub fn synthesis_options(&self, n_samples: usize, seed: u64) -> SynthesisOptions {
        let mut opts = SynthesisOptions::new(self.region.clone());
        opts.artstein.n_samples = n_samples;
        opts.artstein.seed = seed;
        opts.samples.n_samples = n_samples;
        opts.samples.seed = seed;
        opts
    }

    /// Blended synthesis with local gain `K_o` (backstepping for
    /// strict-feedback plants).
    pub fn synthesize(&self, opts: &SynthesisOptions) -> Result<Synthesis> {
        match &self.strict_feedback {
            Some(sf) => {
                Ok(backstepping_synthesize(sf, &self.k_o, Some(&self.p), None, opts)?.synthesis)
            }
            None => synthesize(&self.system, &self.clf, &self.k_o, opts),
        }
    }

    /// Inverse-optimal cost `(q, r)` for `V` and `(Q, R)`.
    pub fn inverse_design(&self, levels: &LevelOptions) -> Result<InverseDesign> {
        design_inverse_optimal(
            &self.clf,
            &self.system,
            &self.q,
            &self.r,
            &InverseDesignOptions {
                region: self.region.clone(),
                grid: None,
                levels: *levels,
            },
        )
    }
}

fn scalar(name: &str, drift: fn(f64) -> f64, half_width: f64) -> Result<Demo> {
    let system = ControlAffineSystem::new(
        1,
        1,
        move |x: &Vector| Vector::from_element(1, drift(x[0])),
        |_| Mat::from_element(1, 1, 1.0),
    )?;
    Demo::lq_seeded(
        name,
        system,
        None,
        Mat::identity(1, 1),
        Mat::identity(1, 1),
        BoxRegion::symmetric(1, half_width),
    )
}

/// `ẏ = y² + x`, `ẋ = y x + (1 + x²) u`.
pub fn strict_feedback_demo_system() -> Result<StrictFeedbackSystem> {
    StrictFeedbackSystem::new(
        1,
        Arc::new(|y: &Vector| y.map(|v| v * v)),
        Arc::new(|y: &Vector| Vector::from_element(y.len(), 1.0)),
        Arc::new(|c: &Vector| c[0] * c[1]),
        Arc::new(|c: &Vector| 1.0 + c[1] * c[1]),
    )?
    .with_blocks(crate::structured::StrictFeedbackBlocks {
        h1: Mat::zeros(1, 1),
        h2: Mat::identity(1, 1),
        f1: Mat::zeros(1, 1),
        f2: 0.0,
        g: 1.0,
    })
}

/// Looks up a demo by name.
pub fn demo(name: &str) -> Result<Demo> {
    match name {
        // ẋ = x + u
        "scalar_lq" => scalar(name, |x| x, 3.0),
        // ẋ = x³ + u
        "scalar_cubic" => scalar(name, |x| x * x * x, 2.0),
        "strict_feedback_demo" => {
            let sf = strict_feedback_demo_system()?;
            let system = sf.to_control_affine()?;
            Demo::lq_seeded(
                name,
                system,
                Some(sf),
                Mat::identity(2, 2),
                Mat::identity(1, 1),
                BoxRegion::symmetric(2, 0.5),
            )
        }
        // (χ2, χ3) of the orbital model, unit parameters
        "reduced_orbital" => {
            let sf = orbital_strict_feedback(&OrbitalParams::default())?;
            let system = sf.to_control_affine()?;
            Demo::lq_seeded(
                name,
                system,
                Some(sf),
                Mat::identity(2, 2),
                Mat::identity(1, 1),
                BoxRegion::symmetric(2, 0.5),
            )
        }
        _ => Err(Error::invalid(format!(
            "unknown system {name:?}; known: {}",
            DEMOS.join(", ")
        ))),
    }
}
