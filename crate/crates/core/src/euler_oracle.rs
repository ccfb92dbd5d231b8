//! Explicit Euler stepping of the truncated shell system
//!
//! ```text
//! da_n = (a_{n-1} - a_{n+1} - nu a_n) dt + [n = 1] dL,   a_0 = a_{N+1} = 0
//! ```
//!
//! used as an independent check of the explicit solution. The driver
//! increment of a step is added after the drift update.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::exact_solver::InitialData;
use crate::levy_driver::LevyPath;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    pub shells: usize,
    pub nu: f64,
}

impl SchemeConfig {
    pub fn new(dt: f64, shells: usize, nu: f64) -> Result<Self> {
        let cfg = Self { dt, shells, nu };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.dt > 0.0 && self.dt.is_finite(), || format!("dt must be > 0, got {}", self.dt))?;
        ensure(self.shells >= 2, || format!("need at least 2 shells, got {}", self.shells))?;
        ensure(self.nu >= 0.0 && self.nu.is_finite(), || {
            format!("nu must be finite and >= 0, got {}", self.nu)
        })?;
        ensure(self.dt * (2.0 + self.nu) < 1.0, || {
            format!("dt * (2 + nu) must be < 1, got {}", self.dt * (2.0 + self.nu))
        })
    }
}

/// Shell values `(a_1, ..., a_N)` at a time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellState {
    pub values: Vec<f64>,
    pub nu: f64,
    pub time: f64,
}

impl ShellState {
    pub fn new(init: &InitialData, cfg: &SchemeConfig, time: f64) -> Self {
        Self { values: init.expand(cfg.shells), nu: cfg.nu, time }
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|a| a * a).sum()
    }
}

/// One Euler step in place.
pub fn step_in_place(values: &mut [f64], dl: f64, cfg: &SchemeConfig) -> Result<()> {
    let (dt, nu) = (cfg.dt, cfg.nu);
    let len = values.len();
    let mut prev_old = 0.0;
    for i in 0..len {
        let cur_old = values[i];
        let next_old = if i + 1 < len { values[i + 1] } else { 0.0 };
        values[i] = cur_old + dt * (prev_old - next_old - nu * cur_old);
        prev_old = cur_old;
    }
    values[0] += dl;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite shell value in Euler step".into()));
    }
    Ok(())
}

pub fn step(state: &ShellState, dl: f64, cfg: &SchemeConfig) -> Result<ShellState> {
    cfg.validate()?;
    ensure(state.values.len() == cfg.shells, || {
        format!("state has {} shells, scheme expects {}", state.values.len(), cfg.shells)
    })?;
    let mut next = state.clone();
    step_in_place(&mut next.values, dl, cfg)?;
    next.time += cfg.dt;
    Ok(next)
}

/// Steps along `path`, recording every `stride`-th grid point (including the first and last).
pub fn run_strided(
    init: &InitialData,
    path: &LevyPath,
    cfg: &SchemeConfig,
    stride: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    init.validate()?;
    ensure(stride >= 1, || "stride must be >= 1".into())?;
    let dt = path.uniform_step(1e-9).ok_or_else(|| {
        Error::InvalidGrid("the Euler oracle needs a uniform path grid".into())
    })?;
    if ((dt - cfg.dt) / cfg.dt).abs() > 1e-9 {
        return Err(Error::InvalidGrid(format!(
            "path grid step {dt} does not match scheme dt {}",
            cfg.dt
        )));
    }
    let mut values = init.expand(cfg.shells);
    let mut traj = Trajectory::zeros(Vec::new(), cfg.shells, cfg.nu);
    traj.times.push(path.grid[0]);
    traj.values.push(values.clone());
    let steps = path.steps();
    for (k, &dl) in path.increments.iter().enumerate() {
        step_in_place(&mut values, dl, cfg)?;
        if (k + 1) % stride == 0 || k + 1 == steps {
            traj.times.push(path.grid[k + 1]);
            traj.values.push(values.clone());
        }
    }
    Ok(traj)
}

/// Trajectory on every point of the path grid.
pub fn run(init: &InitialData, path: &LevyPath, cfg: &SchemeConfig) -> Result<Trajectory> {
    run_strided(init, path, cfg, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_driver::uniform_grid;

    #[test]
    fn config_bounds() {
        assert!(SchemeConfig::new(0.1, 4, 0.0).is_ok());
        assert!(SchemeConfig::new(0.5, 4, 0.0).is_err());
        assert!(SchemeConfig::new(0.1, 1, 0.0).is_err());
        assert!(SchemeConfig::new(-0.1, 4, 0.0).is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let cfg = SchemeConfig::new(0.01, 5, 0.3).unwrap();
        let s = ShellState::new(&InitialData::Zero, &cfg, 0.0);
        let next = step(&s, 0.0, &cfg).unwrap();
        assert!(next.values.iter().all(|&v| v == 0.0));
        assert!((next.time - 0.01).abs() < 1e-15);
    }

    #[test]
    fn unit_at_one_single_step() {
        let cfg = SchemeConfig::new(0.01, 5, 0.0).unwrap();
        let s = ShellState::new(&InitialData::UnitAt { m: 1 }, &cfg, 0.0);
        let next = step(&s, 0.0, &cfg).unwrap();
        assert_eq!(next.values[0], 1.0);
        assert_eq!(next.values[1], 0.01);
        assert_eq!(&next.values[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_ones_only_moves_at_the_boundary() {
        // with N even the hard zero at N + 1 breaks the pattern at shell N
        let cfg = SchemeConfig::new(0.01, 8, 0.0).unwrap();
        let s = ShellState::new(&InitialData::OddOnes, &cfg, 0.0);
        let next = step(&s, 0.0, &cfg).unwrap();
        assert_eq!(&next.values[..7], &s.values[..7]);
        assert_eq!(next.values[7], 0.01);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let cfg = SchemeConfig::new(0.01, 4, 0.0).unwrap();
        let path = LevyPath::zero(uniform_grid(0.0, 1.0, 50)).unwrap();
        assert!(run(&InitialData::Zero, &path, &cfg).is_err());
        let path = LevyPath::zero(uniform_grid(0.0, 1.0, 100)).unwrap();
        let traj = run(&InitialData::Zero, &path, &cfg).unwrap();
        assert_eq!(traj.times.len(), 101);
        assert!(traj.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn overflow_flags_divergence() {
        let cfg = SchemeConfig::new(0.01, 3, 0.0).unwrap();
        let mut v = vec![f64::MAX, f64::MAX, 0.0];
        assert!(matches!(step_in_place(&mut v, f64::MAX, &cfg), Err(Error::Divergence(_))));
    }
}
