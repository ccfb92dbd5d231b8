//! Continuum limit of the chain.
//!
//! With lattice spacing `h` and `x = n h`, the stationary shell value becomes
//! `int_0^inf K_h(x, r) dL(r)` with `K_h = (x/h) J_{x/h}(2r/h) / r e^{-nu r}`.
//! As `h -> 0` the kernel concentrates at `r = x/2`. The formal limit is tied
//! to the transport equation
//!
//! ```text
//! b_t + 2 b_x + nu b = delta(x - eps) dL/dt,   b(t, 0) = 0,   b(s, x) = phi(x)
//! ```
//!
//! which is solved along characteristics `x - 2t = const`. The point source
//! is always replaced by a mollifier of finite width.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel_kernel::{bessel_j_real, delta_approximant, kernel_h};
use crate::error::{ensure, Error, Result};
use crate::levy_driver::{CumulantSpec, LevyPath, SecondMoments};
use crate::quadrature::{gauss_kronrod, gauss_kronrod_panels, Tolerance};
use crate::stationary_analysis::{existence_check, kernel_abs_power_integral, kernel_product_integral};

/// Lattice spacing `h` and physical position `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeScaling {
    pub h: f64,
    pub x: f64,
}

impl LatticeScaling {
    pub fn new(h: f64, x: f64) -> Result<Self> {
        ensure(h > 0.0 && h.is_finite(), || format!("h must be finite and > 0, got {h}"))?;
        ensure(x > 0.0 && x.is_finite(), || format!("x must be finite and > 0, got {x}"))?;
        Ok(Self { h, x })
    }

    /// `x / h`.
    pub fn order(&self) -> f64 {
        self.x / self.h
    }

    /// The shell index when `x / h` is a positive integer.
    pub fn shell(&self) -> Option<u32> {
        let n = self.order();
        let k = n.round();
        ((n - k).abs() <= 1e-9 * n.max(1.0) && k >= 1.0 && k <= u32::MAX as f64).then_some(k as u32)
    }
}

/// `K_h(x, r) = (x/h) J_{x/h}(2r/h) / r e^{-nu r}`. For integer `x/h` this is
/// `H_n^{nu h}(r/h) / h`, so `h = 1` gives the lattice kernel itself.
pub fn rescaled_kernel(ls: LatticeScaling, nu: f64, r: f64) -> f64 {
    if let Some(n) = ls.shell() {
        return kernel_h(n, nu * ls.h, r / ls.h) / ls.h;
    }
    if r == 0.0 {
        return 0.0;
    }
    let mu = ls.order();
    mu * bessel_j_real(mu, 2.0 * r / ls.h) / r * (-nu * r).exp()
}

/// `int K_h(x, r) f(r) dr` over `[0, r_max]`.
pub fn rescaled_kernel_pairing(ls: LatticeScaling, nu: f64, f: impl Fn(f64) -> f64, r_max: f64) -> f64 {
    let panels = ((2.0 * r_max / ls.h).ceil() as usize).max(8);
    let points: Vec<f64> = (0..=panels).map(|i| r_max * i as f64 / panels as f64).collect();
    gauss_kronrod_panels(|r| rescaled_kernel(ls, nu, r) * f(r), &points, Tolerance::new(1e-14, 1e-11)).value
}

/// `int_{-1}^inf mu J_mu(mu (x + 1)) f(x) dx` for `f` supported in `[a, b]`.
pub fn delta_pairing(mu: f64, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    ensure(mu > 0.0 && mu.is_finite(), || format!("mu must be finite and > 0, got {mu}"))?;
    ensure(b > a, || "empty support".into())?;
    let a = a.max(-1.0);
    let panels = ((b - a) * mu / 2.0).ceil().max(8.0) as usize;
    let points: Vec<f64> = (0..=panels).map(|i| a + (b - a) * i as f64 / panels as f64).collect();
    let mut failed = None;
    let v = gauss_kronrod_panels(
        |x| match delta_approximant(mu, x) {
            Ok(d) => d * f(x),
            Err(e) => {
                failed = Some(e);
                0.0
            }
        },
        &points,
        Tolerance::new(1e-13, 1e-11),
    )
    .value;
    failed.map_or(Ok(v), Err)
}

/// `(35 / 32 w) (1 - (y/w)^2)^3` on `|y| < w`: a C^2 bump of unit mass.
pub fn mollifier(width: f64, y: f64) -> f64 {
    let u = y / width;
    if u.abs() >= 1.0 {
        0.0
    } else {
        35.0 / (32.0 * width) * (1.0 - u * u).powi(3)
    }
}

/// Initial profile of the transport equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    #[default]
    Zero,
    /// `height (1 - ((x - center)/radius)^2)^3` on `|x - center| < radius`.
    Bump { center: f64, radius: f64, height: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Bump { center, radius, height } => {
                let u = (x - center) / radius;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - u * u).powi(3)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Profile::Bump { center, radius, height } = *self {
            ensure(radius > 0.0 && center.is_finite() && height.is_finite(), || {
                "bump needs finite center/height and radius > 0".into()
            })?;
            ensure(center - radius >= 0.0, || {
                format!("profile must vanish at x = 0: bump covers [{}, {}]", center - radius, center + radius)
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    pub nu: f64,
    pub eps: f64,
    #[serde(default)]
    pub phi: Profile,
    /// Mollifier half-width; `eps / 8` when absent.
    #[serde(default)]
    pub mollifier_width: Option<f64>,
}

impl PdeConfig {
    pub fn new(nu: f64, eps: f64, phi: Profile, mollifier_width: Option<f64>) -> Result<Self> {
        let cfg = Self { nu, eps, phi, mollifier_width };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn width(&self) -> f64 {
        self.mollifier_width.unwrap_or(self.eps / 8.0)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.nu >= 0.0 && self.nu.is_finite(), || format!("nu must be finite and >= 0, got {}", self.nu))?;
        ensure(self.eps > 0.0 && self.eps.is_finite(), || format!("eps must be finite and > 0, got {}", self.eps))?;
        let w = self.width();
        ensure(w > 0.0 && w < self.eps / 2.0, || {
            format!("mollifier width must lie in (0, eps/2) = (0, {}), got {w}", self.eps / 2.0)
        })?;
        self.phi.validate()
    }

    /// Mollified source `m_w(x - eps)`.
    pub fn source(&self, x: f64) -> f64 {
        mollifier(self.width(), x - self.eps)
    }
}

/// `b(t, x; s)` along characteristics: `e^{-nu (t-s)} phi(x - 2(t-s))` while
/// the characteristic started inside the domain, plus
/// `int_s^t e^{-nu (t-r)} m_w(x - 2(t-r) - eps) dL(r)`. The forcing integral
/// is a midpoint sum over the path grid; for a smooth path it approaches
/// `(1/2) e^{-nu (x - eps)/2}` times the slope of `L` near `t - (x - eps)/2`.
pub fn pde_characteristics_solution(cfg: &PdeConfig, path: &LevyPath, t: f64, x: f64, s: f64) -> Result<f64> {
    cfg.validate()?;
    ensure(x >= 0.0, || format!("x must be >= 0, got {x}"))?;
    ensure(t >= s, || format!("t = {t} precedes the start time s = {s}"))?;
    ensure(path.start() <= s + 1e-12 && path.end() >= t - 1e-12, || {
        format!("path covers [{}, {}], need [{s}, {t}]", path.start(), path.end())
    })?;
    let foot = x - 2.0 * (t - s);
    let homogeneous = if foot >= 0.0 { (-cfg.nu * (t - s)).exp() * cfg.phi.eval(foot) } else { 0.0 };
    // the source is felt only while x - 2(t - r) lies in (eps - w, eps + w)
    let w = cfg.width();
    let lo = s.max(t - (x - cfg.eps + w) / 2.0);
    let hi = t.min(t - (x - cfg.eps - w) / 2.0);
    let mut forced = 0.0;
    if hi > lo {
        for (k, dl) in path.increments.iter().enumerate() {
            let (a, b) = (path.grid[k], path.grid[k + 1]);
            if b <= lo || a >= hi {
                continue;
            }
            let mid = 0.5 * (a + b);
            if mid < s || mid > t {
                continue;
            }
            forced += (-cfg.nu * (t - mid)).exp() * cfg.source(x - 2.0 * (t - mid)) * dl;
        }
    }
    Ok(homogeneous + forced)
}

/// Space-time field on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeField {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// `values[i][j]` is `b(times[i], xs[j])`.
    pub values: Vec<Vec<f64>>,
}

impl PdeField {
    pub fn last(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Upwind discretisation of the transport equation on `x_j = j dx`,
/// `j = 0..=round(x_max/dx)`, with the time step taken from the (uniform)
/// path grid. Every `record_every`-th step is stored, plus the first and last.
pub fn upwind_pde_oracle(
    cfg: &PdeConfig,
    path: &LevyPath,
    dx: f64,
    x_max: f64,
    record_every: usize,
) -> Result<PdeField> {
    cfg.validate()?;
    ensure(dx > 0.0 && x_max > dx, || format!("need 0 < dx < x_max, got dx = {dx}, x_max = {x_max}"))?;
    ensure(record_every >= 1, || "record_every must be >= 1".into())?;
    let dt = path
        .uniform_step(1e-9)
        .ok_or_else(|| Error::InvalidGrid("the upwind oracle needs a uniform path grid".into()))?;
    ensure(2.0 * dt <= dx * (1.0 + 1e-12), || format!("CFL violated: 2 dt = {} > dx = {dx}", 2.0 * dt))?;
    let cells = (x_max / dx).round() as usize;
    let xs: Vec<f64> = (0..=cells).map(|j| j as f64 * dx).collect();
    let source: Vec<f64> = xs.iter().map(|&x| cfg.source(x)).collect();
    let mut b: Vec<f64> = xs.iter().map(|&x| cfg.phi.eval(x)).collect();
    b[0] = 0.0;
    let courant = 2.0 * dt / dx;
    let damp = cfg.nu * dt;
    let mut field = PdeField { times: vec![path.start()], xs, values: vec![b.clone()] };
    let steps = path.steps();
    for (k, &dl) in path.increments.iter().enumerate() {
        for j in (1..b.len()).rev() {
            b[j] += -courant * (b[j] - b[j - 1]) - damp * b[j] + source[j] * dl;
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite value in upwind step".into()));
        }
        if (k + 1) % record_every == 0 || k + 1 == steps {
            field.times.push(path.grid[k + 1]);
            field.values.push(b.clone());
        }
    }
    Ok(field)
}

/// `sqrt(dx sum (u_j - v_j)^2)`.
pub fn l2_distance(u: &[f64], v: &[f64], dx: f64) -> f64 {
    (dx * u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sqrt()
}

/// `sum x b / sum b`.
pub fn centre_of_mass(xs: &[f64], values: &[f64]) -> f64 {
    let mass: f64 = values.iter().sum();
    xs.iter().zip(values).map(|(x, v)| x * v).sum::<f64>() / mass
}

/// What the comparison report tabulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportQuantity {
    Variance,
    StableScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub h: f64,
    pub n: u32,
    /// `None` when the lattice stationary law does not exist.
    pub lattice_value: Option<f64>,
    pub continuum_value: f64,
    pub ratio: Option<f64>,
    /// Mollifier width of the continuum value.
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub quantity: ReportQuantity,
    pub nu: f64,
    pub x: f64,
    pub eps: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "h,n,lattice_value,continuum_value,ratio,regularization")?;
        let opt = |v: Option<f64>| v.map_or_else(|| "non-existent".to_string(), |v| v.to_string());
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.h,
                r.n,
                opt(r.lattice_value),
                r.continuum_value,
                opt(r.ratio),
                r.regularization
            )?;
        }
        Ok(())
    }
}

/// `int_{-inf}^0 |e^{nu r} m_w(2r + x - eps)|^p dr`, the stationary continuum
/// functional at `x` (the source line crosses `x` at `r = -(x - eps)/2`).
fn continuum_functional(cfg: &PdeConfig, x: f64, p: f64) -> f64 {
    let w = cfg.width();
    let centre = -(x - cfg.eps) / 2.0;
    let (a, b) = (centre - w / 2.0, (centre + w / 2.0).min(0.0));
    if b <= a {
        return 0.0;
    }
    let g = |r: f64| ((cfg.nu * r).exp() * cfg.source(x + 2.0 * r)).abs().powf(p);
    gauss_kronrod(g, a, b, Tolerance::new(1e-14, 1e-12)).value
}

/// Lattice stationary variance (or stable scale) of shell `n = x/h` under
/// the rescaled kernel, next to the mollified continuum value at `x`.
pub fn discrete_vs_continuum_report(
    spec: &CumulantSpec,
    nu: f64,
    x: f64,
    hs: &[f64],
    cfg: &PdeConfig,
) -> Result<ComparisonReport> {
    spec.validate()?;
    cfg.validate()?;
    ensure(x > cfg.eps + cfg.width(), || {
        format!("x = {x} must lie beyond the mollified source at eps = {}", cfg.eps)
    })?;
    let (quantity, rate) = match (spec.second_moment_data(), spec.stable_part()) {
        (SecondMoments::Finite { variance_rate, .. }, _) => (ReportQuantity::Variance, variance_rate),
        (SecondMoments::Infinite, Some((_, scale))) if spec.sigma == 0.0 => (ReportQuantity::StableScale, scale),
        _ => {
            return Err(Error::InvalidParameter(
                "the comparison needs a finite second moment or a pure stable jump part".into(),
            ))
        }
    };
    let exists = existence_check(spec, nu).exists;
    let rows = hs
        .par_iter()
        .map(|&h| -> Result<ComparisonRow> {
            let ls = LatticeScaling::new(h, x)?;
            let n = ls.shell().ok_or_else(|| {
                Error::InvalidParameter(format!("x / h = {} is not a positive integer", ls.order()))
            })?;
            let (lattice, continuum) = match quantity {
                ReportQuantity::Variance => {
                    let lattice = exists.then(|| rate * kernel_product_integral(n, n, nu * h).value / h);
                    (lattice, rate * continuum_functional(cfg, x, 2.0))
                }
                ReportQuantity::StableScale => {
                    let alpha = spec.stable_part().map(|p| p.0).unwrap_or(2.0);
                    let lattice = exists.then(|| {
                        let i = kernel_abs_power_integral(n, nu * h, alpha).value;
                        rate * (h.powf(1.0 - alpha) * i).powf(1.0 / alpha)
                    });
                    (lattice, rate * continuum_functional(cfg, x, alpha).powf(1.0 / alpha))
                }
            };
            Ok(ComparisonRow {
                h,
                n,
                lattice_value: lattice,
                continuum_value: continuum,
                ratio: lattice.map(|l| l / continuum),
                regularization: cfg.width(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { quantity, nu, x, eps: cfg.eps, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_shell_detection() {
        assert_eq!(LatticeScaling::new(0.25, 2.0).unwrap().shell(), Some(8));
        assert_eq!(LatticeScaling::new(0.3, 1.0).unwrap().shell(), None);
        assert!(LatticeScaling::new(0.0, 1.0).is_err());
    }

    #[test]
    fn h_one_is_the_lattice_kernel() {
        let ls = LatticeScaling::new(1.0, 3.0).unwrap();
        for r in [0.1, 1.0, 7.5] {
            assert_eq!(rescaled_kernel(ls, 0.4, r).to_bits(), kernel_h(3, 0.4, r).to_bits());
        }
    }

    #[test]
    fn mollifier_mass() {
        let m = gauss_kronrod(|y| mollifier(0.3, y), -0.3, 0.3, Tolerance::default()).value;
        assert!((m - 1.0).abs() < 1e-13);
    }

    #[test]
    fn config_validation() {
        assert!(PdeConfig::new(0.0, 0.5, Profile::Zero, Some(0.25)).is_err());
        assert!(PdeConfig::new(0.0, 0.5, Profile::Zero, Some(0.2)).is_ok());
        assert!(PdeConfig::new(0.0, 0.5, Profile::Bump { center: 0.2, radius: 0.5, height: 1.0 }, None).is_err());
        assert!((PdeConfig::new(0.0, 0.8, Profile::Zero, None).unwrap().width() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn time_before_start_rejected() {
        let cfg = PdeConfig::new(0.0, 0.5, Profile::Zero, None).unwrap();
        let path = LevyPath::zero(crate::levy_driver::uniform_grid(0.0, 1.0, 10)).unwrap();
        assert!(pde_characteristics_solution(&cfg, &path, 0.2, 1.0, 0.5).is_err());
    }
}
