//! Explicit solution of the shell system
//!
//! ```text
//! a_n(t) = sum_m a_m(s) G_{n,m}(t - s) + int_s^t H_n^nu(t - r) dL(r)
//! ```
//!
//! with the homogeneous propagator `G` and kernel `H` from
//! [`bessel_kernel`](crate::bessel_kernel). The time origin `s` is the first
//! point of the driving path's grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bessel_kernel::{bessel_j_seq, kernel_h, kernel_h_all, propagator_row};
use crate::error::{ensure, Error, Result};
use crate::levy_driver::LevyPath;
use crate::trajectory::Trajectory;

/// Tail tolerance of the truncation certificate.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;

/// Initial shell values `a_m(s)`, `m >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// `a_1, ..., a_N`; shells beyond `N` are zero.
    Vector { values: Vec<f64> },
    /// `a_{2n-1} = 1`, `a_{2n} = 0`.
    OddOnes,
    /// `a_{2n-1} = 0`, `a_{2n} = 1`.
    EvenOnes,
    UnitAt { m: u32 },
}

impl InitialData {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialData::Vector { values } => ensure(values.iter().all(|v| v.is_finite()), || {
                "initial values must be finite".into()
            }),
            InitialData::UnitAt { m } => ensure(*m >= 1, || "unit-at index must be >= 1".into()),
            _ => Ok(()),
        }
    }

    /// `a_m(s)` for `m >= 1`.
    pub fn value(&self, m: u32) -> f64 {
        match self {
            InitialData::Zero => 0.0,
            InitialData::Vector { values } => values.get(m as usize - 1).copied().unwrap_or(0.0),
            InitialData::OddOnes => (m % 2) as f64,
            InitialData::EvenOnes => ((m + 1) % 2) as f64,
            InitialData::UnitAt { m: k } => (m == *k) as u32 as f64,
        }
    }

    /// Index past which all entries vanish, if any.
    pub fn support(&self) -> Option<u32> {
        match self {
            InitialData::Zero => Some(0),
            InitialData::Vector { values } => Some(values.len() as u32),
            InitialData::UnitAt { m } => Some(*m),
            InitialData::OddOnes | InitialData::EvenOnes => None,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            InitialData::Zero => 0.0,
            InitialData::Vector { values } => values.iter().fold(0.0, |a, v| a.max(v.abs())),
            _ => 1.0,
        }
    }

    /// `(a_1, ..., a_n)`.
    pub fn expand(&self, n: usize) -> Vec<f64> {
        (1..=n as u32).map(|m| self.value(m)).collect()
    }
}

/// Smallest `M` such that shells `m > M` contribute less than `tol` to
/// `a_n(t)` for data bounded by `bound`, from `|J_k(2t)| <= t^k / k!`.
pub fn certified_truncation(n: u32, t: f64, bound: f64, tol: f64) -> u32 {
    if bound == 0.0 || t == 0.0 {
        return n;
    }
    // both J_{m-n} and J_{m+n} are bounded by the k = m - n term
    let log_budget = (tol / (2.0 * bound)).ln();
    let mut k = (2.0 * t).ceil().max(1.0) as u32 + 1;
    loop {
        let kf = k as f64;
        // sum_{j >= k} t^j / j! <= t^k/k! / (1 - t/(k+1))
        let log_tail = kf * t.ln() - ln_gamma(kf + 1.0) - (1.0 - t / (kf + 1.0)).ln();
        if log_tail <= log_budget {
            return n + k - 1;
        }
        k += 1;
    }
}

fn required_truncation(init: &InitialData, n: u32, t: f64) -> u32 {
    let cert = certified_truncation(n, t, init.sup_norm(), TRUNCATION_TOLERANCE);
    match init.support() {
        Some(s) => s.min(cert),
        None => cert,
    }
}

/// `sum_{m <= M} a_m(s) G_{n,m}(t)`. With `truncation = None` the certified
/// cutoff is used; an explicit `M` below it is refused.
pub fn homogeneous_solution(
    init: &InitialData,
    n: u32,
    nu: f64,
    t: f64,
    truncation: Option<u32>,
) -> Result<f64> {
    Ok(homogeneous_state_from(init, n, n, nu, t, truncation)?[0])
}

/// Homogeneous part for shells `1..=shells`.
pub fn homogeneous_state(
    init: &InitialData,
    shells: u32,
    nu: f64,
    t: f64,
    truncation: Option<u32>,
) -> Result<Vec<f64>> {
    homogeneous_state_from(init, 1, shells, nu, t, truncation)
}

fn homogeneous_state_from(
    init: &InitialData,
    first: u32,
    last: u32,
    nu: f64,
    t: f64,
    truncation: Option<u32>,
) -> Result<Vec<f64>> {
    init.validate()?;
    ensure(first >= 1, || "shell index must be >= 1".into())?;
    ensure(t >= 0.0 && t.is_finite(), || format!("t must be finite and >= 0, got {t}"))?;
    ensure(nu >= 0.0 && nu.is_finite(), || format!("nu must be finite and >= 0, got {nu}"))?;
    let required = required_truncation(init, last, t);
    let m_max = match truncation {
        Some(m) if m < required => {
            return Err(Error::TruncationInsufficient { required: required as usize, given: m as usize })
        }
        Some(m) => m,
        None => required,
    };
    let mut out = vec![0.0; (last - first + 1) as usize];
    if m_max == 0 {
        return Ok(out);
    }
    let weights: Vec<f64> = (1..=m_max).map(|m| init.value(m)).collect();
    let bessel = bessel_j_seq(last + m_max, 2.0 * t);
    let mut row = vec![0.0; m_max as usize];
    for (slot, n) in out.iter_mut().zip(first..=last) {
        propagator_row(n, m_max, nu, t, &bessel, &mut row);
        *slot = row.iter().zip(&weights).map(|(g, a)| g * a).sum();
    }
    Ok(out)
}

/// Where in each grid cell the kernel is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolutionRule {
    /// `H(t - t_k)` over cells with `t_k < t`.
    #[default]
    LeftPoint,
    /// `H(t - (t_k + t_{k+1})/2)` over cells with midpoint below `t`.
    Midpoint,
}

fn covers(path: &LevyPath, t: f64) -> Result<()> {
    let slack = 1e-9 * (path.end() - path.start()).abs().max(1.0);
    if !(t >= path.start() && t <= path.end() + slack) {
        return Err(Error::InvalidGrid(format!(
            "path grid [{}, {}] does not cover t = {t}",
            path.start(),
            path.end()
        )));
    }
    Ok(())
}

/// Kernel arguments `t - r_k` for the cells that contribute at `t`.
fn cell_lags(path: &LevyPath, t: f64, rule: ConvolutionRule) -> impl Iterator<Item = (usize, f64)> + '_ {
    let slack = 1e-12 * (path.end() - path.start()).abs().max(1.0);
    path.grid.windows(2).enumerate().filter_map(move |(k, w)| {
        let r = match rule {
            ConvolutionRule::LeftPoint => w[0],
            ConvolutionRule::Midpoint => 0.5 * (w[0] + w[1]),
        };
        (r < t - slack).then_some((k, t - r))
    })
}

/// `sum_k H_n^nu(t - t_k) dL_k` over grid cells with `t_k < t`.
pub fn stochastic_convolution(path: &LevyPath, n: u32, nu: f64, t: f64) -> Result<f64> {
    stochastic_convolution_with(path, n, nu, t, ConvolutionRule::LeftPoint)
}

pub fn stochastic_convolution_with(
    path: &LevyPath,
    n: u32,
    nu: f64,
    t: f64,
    rule: ConvolutionRule,
) -> Result<f64> {
    ensure(n >= 1, || "shell index must be >= 1".into())?;
    covers(path, t)?;
    Ok(cell_lags(path, t, rule)
        .filter(|&(k, _)| path.increments[k] != 0.0)
        .map(|(k, lag)| kernel_h(n, nu, lag) * path.increments[k])
        .sum())
}

/// Options for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub rule: ConvolutionRule,
    /// Explicit truncation for the homogeneous part; `None` certifies it.
    pub truncation: Option<u32>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { rule: ConvolutionRule::LeftPoint, truncation: None }
    }
}

/// Homogeneous plus convolution parts at each of `times` for shells `1..=shells`.
pub fn solve(
    init: &InitialData,
    path: &LevyPath,
    nu: f64,
    times: &[f64],
    shells: u32,
    opts: SolveOptions,
) -> Result<Trajectory> {
    let (hom, conv) = solve_parts(init, path, nu, times, shells, opts)?;
    let mut out = hom;
    for (a, b) in out.values.iter_mut().zip(&conv.values) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
    Ok(out)
}

/// The homogeneous and convolution parts of [`solve`] separately.
pub fn solve_parts(
    init: &InitialData,
    path: &LevyPath,
    nu: f64,
    times: &[f64],
    shells: u32,
    opts: SolveOptions,
) -> Result<(Trajectory, Trajectory)> {
    ensure(shells >= 1, || "at least one shell is required".into())?;
    ensure(nu >= 0.0 && nu.is_finite(), || format!("nu must be finite and >= 0, got {nu}"))?;
    for &t in times {
        covers(path, t)?;
    }
    let s = path.start();
    let hom_rows = times
        .par_iter()
        .map(|&t| homogeneous_state(init, shells, nu, t - s, opts.truncation))
        .collect::<Result<Vec<_>>>()?;
    let hom = Trajectory { times: times.to_vec(), shells: shells as usize, nu, values: hom_rows };
    let conv_rows = match uniform_indices(path, times) {
        Some(idx) => convolve_uniform(path, nu, &idx, shells, opts.rule),
        None => times
            .par_iter()
            .map(|&t| convolve_direct(path, nu, t, shells, opts.rule))
            .collect(),
    };
    let conv = Trajectory { times: times.to_vec(), shells: shells as usize, nu, values: conv_rows };
    Ok((hom, conv))
}

/// Grid indices of `times` when the grid is uniform and every time is a grid point.
fn uniform_indices(path: &LevyPath, times: &[f64]) -> Option<Vec<usize>> {
    let dt = path.uniform_step(1e-9)?;
    times
        .iter()
        .map(|&t| {
            let j = ((t - path.start()) / dt).round();
            ((t - path.start() - j * dt).abs() <= 1e-9 * dt && j >= 0.0).then_some(j as usize)
        })
        .collect()
}

fn convolve_direct(path: &LevyPath, nu: f64, t: f64, shells: u32, rule: ConvolutionRule) -> Vec<f64> {
    let mut acc = vec![0.0; shells as usize];
    let mut h = vec![0.0; shells as usize];
    let mut buf = Vec::new();
    for (k, lag) in cell_lags(path, t, rule) {
        let dl = path.increments[k];
        if dl == 0.0 {
            continue;
        }
        kernel_h_all(shells, nu, lag, &mut buf, &mut h);
        for (a, w) in acc.iter_mut().zip(&h) {
            *a += w * dl;
        }
    }
    acc
}

/// On a uniform grid the kernel weights depend only on the index lag, so they
/// are tabulated once and reused for every output time.
fn convolve_uniform(
    path: &LevyPath,
    nu: f64,
    idx: &[usize],
    shells: u32,
    rule: ConvolutionRule,
) -> Vec<Vec<f64>> {
    let dt = (path.end() - path.start()) / path.steps() as f64;
    let offset = match rule {
        ConvolutionRule::LeftPoint => 0.0,
        ConvolutionRule::Midpoint => 0.5,
    };
    let max_lag = idx.iter().copied().max().unwrap_or(0);
    let ns = shells as usize;
    let table: Vec<Vec<f64>> = (1..=max_lag)
        .into_par_iter()
        .map_init(Vec::new, |buf, d| {
            let mut h = vec![0.0; ns];
            kernel_h_all(shells, nu, (d as f64 - offset) * dt, buf, &mut h);
            h
        })
        .collect();
    idx.par_iter()
        .map(|&j| {
            let mut acc = vec![0.0; ns];
            for k in 0..j {
                let dl = path.increments[k];
                if dl == 0.0 {
                    continue;
                }
                let w = &table[j - k - 1];
                for (a, h) in acc.iter_mut().zip(w) {
                    *a += h * dl;
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel_kernel::bessel_j;
    use crate::levy_driver::uniform_grid;

    #[test]
    fn identity_at_time_zero() {
        for m in 1..6 {
            for n in 1..6 {
                let v = homogeneous_solution(&InitialData::UnitAt { m }, n, 0.4, 0.0, None).unwrap();
                assert_eq!(v, if n == m { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn odd_ones_is_a_fixed_point() {
        for t in [0.5, 3.0, 17.0] {
            for n in 1..9 {
                let v = homogeneous_solution(&InitialData::OddOnes, n, 0.0, t, None).unwrap();
                assert!((v - (n % 2) as f64).abs() < 1e-8, "n={n} t={t}: {v}");
            }
        }
    }

    #[test]
    fn even_ones_partial_bessel_sums() {
        let t = 5.0;
        let x = 2.0 * t;
        let v = homogeneous_solution(&InitialData::EvenOnes, 4, 0.0, t, None).unwrap();
        let expect = bessel_j(0, x) + 2.0 * bessel_j(2, x) + bessel_j(4, x);
        assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
        let v = homogeneous_solution(&InitialData::EvenOnes, 8, 0.0, t, None).unwrap();
        let expect = bessel_j(0, x) + 2.0 * (bessel_j(2, x) + bessel_j(4, x) + bessel_j(6, x)) + bessel_j(8, x);
        assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
    }

    #[test]
    fn short_truncation_is_refused() {
        let err = homogeneous_solution(&InitialData::OddOnes, 3, 0.0, 10.0, Some(10)).unwrap_err();
        assert!(matches!(err, Error::TruncationInsufficient { .. }));
        // finite data never needs more than its support
        assert!(homogeneous_solution(&InitialData::UnitAt { m: 2 }, 3, 0.0, 10.0, Some(2)).is_ok());
    }

    #[test]
    fn certificate_grows_with_time() {
        let a = certified_truncation(1, 1.0, 1.0, 1e-10);
        let b = certified_truncation(1, 50.0, 1.0, 1e-10);
        assert!(a < b && b > 100);
        assert_eq!(certified_truncation(4, 0.0, 1.0, 1e-10), 4);
    }

    #[test]
    fn zero_path_gives_zero_convolution() {
        let path = LevyPath::zero(uniform_grid(0.0, 2.0, 40)).unwrap();
        assert_eq!(stochastic_convolution(&path, 2, 0.1, 2.0).unwrap(), 0.0);
        assert!(stochastic_convolution(&path, 2, 0.1, 3.0).is_err());
    }

    #[test]
    fn uniform_and_direct_convolutions_agree() {
        let grid = uniform_grid(0.0, 3.0, 60);
        let incs: Vec<f64> = (0..60).map(|k| ((k * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let path = LevyPath::from_increments(grid, incs).unwrap();
        let times = [0.0, 1.0, 2.5, 3.0];
        for rule in [ConvolutionRule::LeftPoint, ConvolutionRule::Midpoint] {
            let opts = SolveOptions { rule, truncation: None };
            let traj = solve(&InitialData::Zero, &path, 0.3, &times, 4, opts).unwrap();
            for (i, &t) in times.iter().enumerate() {
                for n in 1..=4 {
                    let direct = stochastic_convolution_with(&path, n, 0.3, t, rule).unwrap();
                    assert!((traj.get(i, n as usize) - direct).abs() < 1e-13);
                }
            }
        }
    }
}
