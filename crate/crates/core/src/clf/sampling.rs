//! Deterministic low-discrepancy sampling of boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Vector;

/// Axis-aligned box `lo ≤ x ≤ hi` containing the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Scales of the nested boxes used by [`BoxRegion::sample_multiscale`].
const SHELLS: [f64; 6] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125];

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::dim("box bounds must have equal, positive length"));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(*l <= 0.0 && 0.0 <= *h && l < h))
        {
            return Err(Error::invalid(
                "box must contain the origin and have positive width",
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(n: usize, half_width: f64) -> Self {
        Self {
            lo: vec![-half_width; n],
            hi: vec![half_width; n],
        }
    }

    pub fn from_half_widths(half: &[f64]) -> Result<Self> {
        Self::new(half.iter().map(|h| -h).collect(), half.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|v| v * s).collect(),
            hi: self.hi.iter().map(|v| v * s).collect(),
        }
    }

    /// Halton points with a seeded Cranley–Patterson rotation.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vector> {
        let n = self.dim();
        let bases = primes(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        (1..=count)
            .map(|k| {
                Vector::from_fn(n, |i, _| {
                    let u = (halton(k as u64, bases[i]) + shift[i]).fract();
                    self.lo[i] + u * (self.hi[i] - self.lo[i])
                })
            })
            .collect()
    }

    /// Samples spread over nested copies of the box scaled by 1, 1/2, …, 1/32,
    /// so small sublevel sets still receive points.
    pub fn sample_multiscale(&self, count: usize, seed: u64) -> Vec<Vector> {
        let per = count.div_ceil(SHELLS.len());
        let mut out = Vec::with_capacity(count);
        for (j, s) in SHELLS.iter().enumerate() {
            let take = per.min(count - out.len());
            out.extend(self.scaled(*s).sample(take, seed.wrapping_add(j as u64)));
        }
        out
    }

    /// Points on the faces of the box, cycling through all `2n` faces.
    pub fn sample_boundary(&self, count: usize, seed: u64) -> Vec<Vector> {
        let n = self.dim();
        self.sample(count, seed ^ 0x005e_edb0)
            .into_iter()
            .enumerate()
            .map(|(k, mut x)| {
                let face = k % (2 * n);
                let i = face / 2;
                x[i] = if face.is_multiple_of(2) {
                    self.lo[i]
                } else {
                    self.hi[i]
                };
                x
            })
            .collect()
    }
}

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out
            .iter()
            .take_while(|p| *p * *p <= c)
            .all(|p| !c.is_multiple_of(*p))
        {
            out.push(c);
        }
        c += 1;
    }
    out
}
