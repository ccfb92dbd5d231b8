//! Lévy drivers: cumulants, moment data and seeded path sampling.
//!
//! A driver is described by a [`CumulantSpec`] holding a Gaussian scale, a
//! drift and at most one jump component. The cumulant follows
//!
//! ```text
//! Psi(l) = -sigma^2 l^2 / 2 + i l mu + c (phi_J(l) - 1)       (compound Poisson)
//! Psi(l) = -sigma^2 l^2 / 2 + i l mu - (scale |l|)^alpha      (symmetric stable)
//! ```
//!
//! so that `E exp(i l L(t)) = exp(t Psi(l))`. The compound Poisson part is not
//! compensated; `drift` is the full linear drift of the process.
//!
//! Sampling is reproducible: every path is a pure function of
//! `(spec, grid, seed, stream)`. The generator is ChaCha8 seeded from the
//! 64-bit seed with the stream index selecting an independent sub-sequence,
//! which is how Monte Carlo replicas are split.
//!
//! Draw order for one path:
//! 1. compound Poisson only: arrival gaps `Exp(c)` and, after each arrival,
//!    the jump size, until the horizon is passed;
//! 2. for each grid interval in order: one standard normal if `sigma > 0`,
//!    then (stable only) one uniform angle and one unit exponential.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Law of the individual jumps of a compound Poisson component. All laws are
/// symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpLaw {
    /// `+size` or `-size` with probability 1/2 each.
    TwoPoint { size: f64 },
    /// Centred normal with standard deviation `std`.
    Gaussian { std: f64 },
    /// Symmetric exponential (Laplace) with mean absolute jump `scale`.
    ExponentialSymmetric { scale: f64 },
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            JumpLaw::TwoPoint { size } => ("jump.law.size", size),
            JumpLaw::Gaussian { std } => ("jump.law.std", std),
            JumpLaw::ExponentialSymmetric { scale } => ("jump.law.scale", scale),
        };
        ensure(v.is_finite() && v > 0.0, || format!("{name} must be finite and > 0, got {v}"))
    }

    /// Characteristic function of a single jump.
    pub fn cf(&self, lambda: f64) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => (lambda * size).cos(),
            JumpLaw::Gaussian { std } => (-0.5 * (std * lambda).powi(2)).exp(),
            JumpLaw::ExponentialSymmetric { scale } => 1.0 / (1.0 + (scale * lambda).powi(2)),
        }
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => size * size,
            JumpLaw::Gaussian { std } => std * std,
            JumpLaw::ExponentialSymmetric { scale } => 2.0 * scale * scale,
        }
    }

    pub fn mean_abs(&self) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => size,
            JumpLaw::Gaussian { std } => std * (2.0 / PI).sqrt(),
            JumpLaw::ExponentialSymmetric { scale } => scale,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => {
                if rng.random_bool(0.5) {
                    size
                } else {
                    -size
                }
            }
            JumpLaw::Gaussian { std } => {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            }
            JumpLaw::ExponentialSymmetric { scale } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random_bool(0.5) {
                    scale * e
                } else {
                    -scale * e
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpComponent {
    #[default]
    None,
    CompoundPoisson { intensity: f64, law: JumpLaw },
    /// Symmetric alpha-stable component with cumulant `-(scale |l|)^alpha`.
    Stable { alpha: f64, scale: f64 },
}

/// Lévy triplet restricted to the classes the toolkit simulates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CumulantSpec {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub jump: JumpComponent,
}

impl Default for CumulantSpec {
    fn default() -> Self {
        Self::gaussian(1.0)
    }
}

/// First and second moment rates of `L(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SecondMoments {
    Finite { mean_rate: f64, variance_rate: f64 },
    Infinite,
}

impl CumulantSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self { sigma, drift: 0.0, jump: JumpComponent::None }
    }

    pub fn pure_drift(drift: f64) -> Self {
        Self { sigma: 0.0, drift, jump: JumpComponent::None }
    }

    pub fn stable(alpha: f64, scale: f64) -> Self {
        Self { sigma: 0.0, drift: 0.0, jump: JumpComponent::Stable { alpha, scale } }
    }

    pub fn compound_poisson(intensity: f64, law: JumpLaw) -> Self {
        Self {
            sigma: 0.0,
            drift: 0.0,
            jump: JumpComponent::CompoundPoisson { intensity, law },
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.sigma.is_finite() && self.sigma >= 0.0, || {
            format!("sigma must be finite and >= 0, got {}", self.sigma)
        })?;
        ensure(self.drift.is_finite(), || format!("drift must be finite, got {}", self.drift))?;
        match self.jump {
            JumpComponent::None => Ok(()),
            JumpComponent::CompoundPoisson { intensity, law } => {
                ensure(intensity.is_finite() && intensity > 0.0, || {
                    format!("jump.intensity must be finite and > 0, got {intensity}")
                })?;
                law.validate()
            }
            JumpComponent::Stable { alpha, scale } => {
                ensure(alpha > 0.0 && alpha < 2.0, || {
                    format!("jump.alpha must lie in (0, 2), got {alpha}")
                })?;
                ensure(scale.is_finite() && scale > 0.0, || {
                    format!("jump.scale must be finite and > 0, got {scale}")
                })
            }
        }
    }

    /// The cumulant `Psi(lambda)`.
    pub fn cumulant(&self, lambda: f64) -> Complex64 {
        let mut re = -0.5 * self.sigma * self.sigma * lambda * lambda;
        let im = self.drift * lambda;
        match self.jump {
            JumpComponent::None => {}
            JumpComponent::CompoundPoisson { intensity, law } => {
                re += intensity * (law.cf(lambda) - 1.0);
            }
            JumpComponent::Stable { alpha, scale } => {
                re -= (scale * lambda.abs()).powf(alpha);
            }
        }
        Complex64::new(re, im)
    }

    /// `-i Psi'(0)` and `-Psi''(0)`, or `Infinite` for a stable component.
    pub fn second_moment_data(&self) -> SecondMoments {
        match self.jump {
            JumpComponent::Stable { .. } => SecondMoments::Infinite,
            JumpComponent::None => SecondMoments::Finite {
                mean_rate: self.drift,
                variance_rate: self.sigma * self.sigma,
            },
            JumpComponent::CompoundPoisson { intensity, law } => SecondMoments::Finite {
                mean_rate: self.drift + intensity * law.mean(),
                variance_rate: self.sigma * self.sigma + intensity * law.second_moment(),
            },
        }
    }

    /// Smallest exponent `beta` with `|Psi(l)| = O(|l|^beta)` as `l -> 0`;
    /// infinite for the zero process.
    pub fn small_lambda_exponent(&self) -> f64 {
        let mut beta = f64::INFINITY;
        if self.sigma > 0.0 {
            beta = beta.min(2.0);
        }
        if self.drift != 0.0 {
            beta = beta.min(1.0);
        }
        match self.jump {
            JumpComponent::None => {}
            JumpComponent::CompoundPoisson { law, .. } => {
                beta = beta.min(if law.mean() != 0.0 { 1.0 } else { 2.0 });
            }
            JumpComponent::Stable { alpha, .. } => beta = beta.min(alpha),
        }
        beta
    }

    /// Power-law majorant `|Psi(u)| <= sum c_i |u|^p_i` as `(c_i, p_i)` pairs.
    pub fn abs_bound_terms(&self) -> Vec<(f64, f64)> {
        let mut terms = Vec::new();
        if self.sigma > 0.0 {
            terms.push((0.5 * self.sigma * self.sigma, 2.0));
        }
        if self.drift != 0.0 {
            terms.push((self.drift.abs(), 1.0));
        }
        match self.jump {
            JumpComponent::None => {}
            JumpComponent::CompoundPoisson { intensity, law } => {
                // |phi(u) - 1| <= E|J u|
                terms.push((intensity * law.mean_abs(), 1.0));
            }
            JumpComponent::Stable { alpha, scale } => terms.push((scale.powf(alpha), alpha)),
        }
        terms
    }

    pub fn stable_part(&self) -> Option<(f64, f64)> {
        match self.jump {
            JumpComponent::Stable { alpha, scale } => Some((alpha, scale)),
            _ => None,
        }
    }

    /// Coefficient of `-u^2/2` in the small-`u` expansion of `Psi`, excluding
    /// any stable part.
    pub fn quadratic_rate(&self) -> f64 {
        let jump = match self.jump {
            JumpComponent::CompoundPoisson { intensity, law } => intensity * law.second_moment(),
            _ => 0.0,
        };
        self.sigma * self.sigma + jump
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma == 0.0 && matches!(self.jump, JumpComponent::None)
    }
}

/// Seed and stream that produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream: u64,
}

/// One realisation of the driver on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyPath {
    pub grid: Vec<f64>,
    /// `increments[k] = L(grid[k+1]) - L(grid[k])`.
    pub increments: Vec<f64>,
    pub seed: Option<SeedRecord>,
}

/// Generator used for all sampling; `stream` selects an independent
/// sub-sequence of the seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "a grid needs at least two points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("grid contains non-finite times".into()));
    }
    if let Some(k) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "grid must be strictly increasing (grid[{}] = {} >= grid[{}] = {})",
            k,
            grid[k],
            k + 1,
            grid[k + 1]
        )));
    }
    Ok(())
}

/// `steps + 1` equally spaced points from `start` to `end`.
pub fn uniform_grid(start: f64, end: f64, steps: usize) -> Vec<f64> {
    let dt = (end - start) / steps as f64;
    (0..=steps).map(|k| start + k as f64 * dt).collect()
}

impl LevyPath {
    pub fn zero(grid: Vec<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        let increments = vec![0.0; grid.len() - 1];
        Ok(Self { grid, increments, seed: None })
    }

    /// Deterministic path `L(t) = drift * (t - t_0)`.
    pub fn linear(grid: Vec<f64>, drift: f64) -> Result<Self> {
        validate_grid(&grid)?;
        let increments = grid.windows(2).map(|w| drift * (w[1] - w[0])).collect();
        Ok(Self { grid, increments, seed: None })
    }

    pub fn from_increments(grid: Vec<f64>, increments: Vec<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        if increments.len() + 1 != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} increments do not match a grid of {} points",
                increments.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, increments, seed: None })
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// `L` at the grid points, starting from `L(t_0) = 0`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(acc);
        for dl in &self.increments {
            acc += dl;
            out.push(acc);
        }
        out
    }

    /// Common step if the grid is uniform to relative tolerance `rel_tol`.
    pub fn uniform_step(&self, rel_tol: f64) -> Option<f64> {
        let dt = (self.end() - self.start()) / self.steps() as f64;
        self.grid
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= rel_tol * dt)
            .then_some(dt)
    }

    /// Sums `factor` consecutive increments, keeping every `factor`-th grid point.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps()
            )));
        }
        let grid = self.grid.iter().step_by(factor).copied().collect();
        let increments = self.increments.chunks(factor).map(|c| c.iter().sum()).collect();
        Ok(Self { grid, increments, seed: self.seed })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            increments: self.increments.iter().map(|x| c * x).collect(),
            seed: self.seed,
        }
    }
}

/// Samples a path of `spec` on `grid` using stream 0 of `seed`.
pub fn sample_path(spec: &CumulantSpec, grid: Vec<f64>, seed: u64) -> Result<LevyPath> {
    sample_path_stream(spec, grid, seed, 0)
}

pub fn sample_path_stream(
    spec: &CumulantSpec,
    grid: Vec<f64>,
    seed: u64,
    stream: u64,
) -> Result<LevyPath> {
    spec.validate()?;
    validate_grid(&grid)?;
    let mut rng = seeded_rng(seed, stream);
    let mut increments = vec![0.0; grid.len() - 1];
    fill_increments(spec, &grid, &mut rng, &mut increments);
    Ok(LevyPath { grid, increments, seed: Some(SeedRecord { seed, stream }) })
}

/// Writes one realisation of the increments over `grid` into `out`.
///
/// `spec` and `grid` must already be validated and `out.len() == grid.len() - 1`.
pub fn fill_increments<R: Rng + ?Sized>(
    spec: &CumulantSpec,
    grid: &[f64],
    rng: &mut R,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len() + 1, grid.len());
    for (o, w) in out.iter_mut().zip(grid.windows(2)) {
        *o = spec.drift * (w[1] - w[0]);
    }

    if let JumpComponent::CompoundPoisson { intensity, law } = spec.jump {
        let end = grid[grid.len() - 1];
        let mut t = grid[0];
        let mut cell = 0;
        loop {
            let gap: f64 = Exp1.sample(rng);
            t += gap / intensity;
            if t > end {
                break;
            }
            let jump = law.sample(rng);
            while grid[cell + 1] < t {
                cell += 1;
            }
            out[cell] += jump;
        }
    }

    let stable = spec.stable_part();
    if spec.sigma > 0.0 || stable.is_some() {
        for (o, w) in out.iter_mut().zip(grid.windows(2)) {
            let dt = w[1] - w[0];
            if spec.sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                *o += spec.sigma * dt.sqrt() * z;
            }
            if let Some((alpha, scale)) = stable {
                *o += scale * dt.powf(1.0 / alpha) * standard_symmetric_stable(alpha, rng);
            }
        }
    }
}

/// Chambers–Mallows–Stuck draw with characteristic function `exp(-|l|^alpha)`.
pub fn standard_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let v = PI * (u - 0.5);
    let w: f64 = Exp1.sample(rng);
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    // keep away from the poles of the transform
    let v = v.clamp(-FRAC_PI_2 + 1e-15, FRAC_PI_2 - 1e-15);
    let w = w.max(f64::MIN_POSITIVE);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}
