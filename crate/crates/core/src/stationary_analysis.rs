//! Stationary (pull-back) laws of the shells.
//!
//! The stationary value of shell `n` is `a_n = int_0^inf H_n^nu(r) dL(r)` in
//! law, with characteristic function `exp(int_0^inf Psi(lambda H_n^nu(r)) dr)`.
//! Everything here reduces to improper integrals of functionals of the kernel,
//! evaluated by panel quadrature on `[0, R]` plus a tail treatment:
//!
//! * `nu > 0`: `R` is chosen so that an explicit bound on the integrand
//!   (from `|J_k(x)| <= 0.6749 x^{-1/3}`) makes the tail negligible;
//! * otherwise the integrand's mean behaviour beyond `R_0` is a sum of terms
//!   `c r^{-p} e^{-k r}` derived from the large-argument Bessel asymptotics;
//!   these are integrated exactly and the oscillating remainder is removed by
//!   averaging the cut-off point over one period.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::bessel_kernel::kernel_h;
use crate::error::{ensure, Error, Result};
use crate::levy_driver::{fill_increments, seeded_rng, uniform_grid, CumulantSpec, SecondMoments};
use crate::quadrature::{gauss_kronrod, tanh_sinh, QuadValue, Tolerance};
use crate::stats::{self, Estimate};

/// Landau's bound `sup_{k, x} x^{1/3} |J_k(x)|`.
const LANDAU: f64 = 0.674_885_2;
const TAIL_TOLERANCE: f64 = 1e-13;
const MAX_EXPONENTIAL_CUTOFF: f64 = 20_000.0;
const AVERAGING_POINTS: usize = 32;
const SCAN_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMethod {
    ExponentialBound,
    OscillatoryAsymptotic,
    DeclaredDivergent,
}

/// Value of an improper integral over `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult<V> {
    pub value: V,
    pub abs_error_estimate: f64,
    pub converged: bool,
    pub tail_method: TailMethod,
}

impl<V: QuadValue> QuadratureResult<V> {
    fn divergent() -> Self {
        Self {
            value: V::default(),
            abs_error_estimate: f64::INFINITY,
            converged: false,
            tail_method: TailMethod::DeclaredDivergent,
        }
    }

    pub fn is_divergent(&self) -> bool {
        self.tail_method == TailMethod::DeclaredDivergent
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Existence {
    pub exists: bool,
    pub reason: String,
}

/// Whether the pull-back limit exists. The verdict does not depend on the shell.
pub fn existence_check(spec: &CumulantSpec, nu: f64) -> Existence {
    if nu > 0.0 {
        return Existence {
            exists: true,
            reason: format!("nu = {nu} > 0 damps the kernel exponentially"),
        };
    }
    let beta = spec.small_lambda_exponent();
    if beta.is_infinite() {
        return Existence { exists: true, reason: "the driver is identically zero".into() };
    }
    if beta > 2.0 / 3.0 {
        Existence {
            exists: true,
            reason: format!("|Psi(l)| = O(|l|^{beta}) near 0 with {beta} > 2/3"),
        }
    } else {
        Existence {
            exists: false,
            reason: format!(
                "|Psi(l)| ~ |l|^{beta} near 0 with {beta} <= 2/3: the kernel tail r^(-3/2) makes int Psi(H) dr diverge at nu = 0"
            ),
        }
    }
}

/// Linear combination `sum lambda_k H_{n_k}`.
#[derive(Debug, Clone)]
struct Combo {
    terms: Vec<(u32, f64)>,
}

impl Combo {
    fn eval(&self, nu: f64, r: f64) -> f64 {
        self.terms.iter().map(|&(n, l)| l * kernel_h(n, nu, r)).sum()
    }

    /// `A` with `|sum lambda H| <= A r^{-4/3} e^{-nu r}`.
    fn amplitude(&self) -> f64 {
        let c = LANDAU * 2f64.powf(-1.0 / 3.0);
        self.terms.iter().map(|&(n, l)| c * l.abs() * n as f64).sum()
    }

    /// `Z` with `sum lambda H ~ Re(Z e^{i(2r - pi/4)}) / (sqrt(pi) r^{3/2})`.
    fn asymptotic_phasor(&self) -> Complex64 {
        self.terms
            .iter()
            .map(|&(n, l)| Complex64::from_polar(l * n as f64, -(n as f64) * FRAC_PI_2))
            .sum()
    }

    fn max_shell(&self) -> u32 {
        self.terms.iter().map(|t| t.0).max().unwrap_or(1)
    }
}

/// `E|cos U|^alpha` for `U` uniform over a period.
pub fn cos_power_mean(alpha: f64) -> f64 {
    gamma(0.5 * (alpha + 1.0)) / (PI.sqrt() * gamma(0.5 * alpha + 1.0))
}

/// Mean tail behaviour `coef r^{-power} e^{-rate r}`.
#[derive(Debug, Clone, Copy)]
struct TailTerm<V> {
    coef: V,
    power: f64,
    rate: f64,
}

/// `int_R^inf r^{-p} e^{-k r} dr`, finite for `k > 0` or `p > 1`.
fn power_exp_tail(p: f64, k: f64, big_r: f64) -> f64 {
    if k == 0.0 {
        return big_r.powf(1.0 - p) / (p - 1.0);
    }
    // r = R / s maps the tail onto (0, 1]
    let f = |s: f64| {
        if s == 0.0 {
            0.0
        } else {
            s.powf(p - 2.0) * (-k * big_r / s).exp()
        }
    };
    big_r.powf(1.0 - p) * gauss_kronrod(f, 0.0, 1.0, Tolerance::new(1e-300, 1e-12)).value
}

/// Majorant `|g(r)| <= sum c r^{-q} e^{-k r}` for large `r`.
#[derive(Debug, Clone, Copy)]
struct BoundTerm {
    coef: f64,
    power: f64,
    rate: f64,
}

struct Problem<'a, V> {
    integrand: &'a (dyn Fn(f64) -> V + Sync),
    /// Function whose sign changes mark kinks of the integrand.
    kinks: Option<&'a (dyn Fn(f64) -> f64 + Sync)>,
    bound: Vec<BoundTerm>,
    tail: Vec<TailTerm<V>>,
    /// Start of the asymptotic regime.
    r0: f64,
}

fn exponential_cutoff(bound: &[BoundTerm]) -> Option<f64> {
    if bound.is_empty() {
        return Some(0.0);
    }
    if bound.iter().any(|b| b.rate <= 0.0) {
        return None;
    }
    let tail = |r: f64| -> f64 { bound.iter().map(|b| b.coef * r.powf(-b.power) * (-b.rate * r).exp() / b.rate).sum() };
    let mut hi = 10.0;
    while tail(hi) > TAIL_TOLERANCE {
        hi *= 2.0;
        if hi > 1e9 {
            return None;
        }
    }
    let mut lo = hi / 2.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > TAIL_TOLERANCE {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

fn bisect_root(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let mut fa = fa;
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Breakpoints on `[a, b]`: sign changes of `kinks`, the forced points, and
/// extra splits so no panel exceeds `pi / 2`.
fn breakpoints(a: f64, b: f64, kinks: Option<&(dyn Fn(f64) -> f64 + Sync)>, forced: &[f64]) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(forced.iter().copied().filter(|&x| x > a && x < b));
    if let Some(f) = kinks {
        let steps = ((b - a) / SCAN_STEP).ceil() as usize;
        let xs: Vec<f64> = (0..=steps).map(|i| (a + i as f64 * SCAN_STEP).min(b)).collect();
        let vals: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();
        let roots: Vec<f64> = (0..steps)
            .into_par_iter()
            .filter_map(|i| {
                let (fa, fb) = (vals[i], vals[i + 1]);
                if fa == 0.0 && i > 0 {
                    Some(xs[i])
                } else if fa != 0.0 && fb != 0.0 && (fa > 0.0) != (fb > 0.0) {
                    Some(bisect_root(f, xs[i], xs[i + 1], fa))
                } else {
                    None
                }
            })
            .collect();
        pts.extend(roots);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() < 1e-13 * x.abs().max(1.0));
    let mut out = Vec::with_capacity(pts.len() * 2);
    for w in pts.windows(2) {
        let pieces = ((w[1] - w[0]) / FRAC_PI_2).ceil().max(1.0) as usize;
        for i in 0..pieces {
            out.push(w[0] + (w[1] - w[0]) * i as f64 / pieces as f64);
        }
    }
    out.push(b);
    out
}

struct PanelSums<V> {
    points: Vec<f64>,
    /// Integral over each panel.
    values: Vec<V>,
    error: f64,
    converged: bool,
}

fn integrate_panels<V: QuadValue + Send + Sync>(
    g: &(dyn Fn(f64) -> V + Sync),
    kinked: bool,
    points: Vec<f64>,
) -> PanelSums<V> {
    let tol = Tolerance::new(1e-15, 1e-12);
    let parts: Vec<_> = points
        .par_windows(2)
        .map(|w| {
            if kinked {
                tanh_sinh(|x: f64, _| g(x), w[0], w[1], tol)
            } else {
                gauss_kronrod(|x: f64| g(x), w[0], w[1], tol)
            }
        })
        .collect();
    let error = parts.iter().map(|p| p.abs_error).sum();
    let converged = parts.iter().all(|p| p.converged || p.abs_error < 1e-13);
    PanelSums { points, values: parts.iter().map(|p| p.value).collect(), error, converged }
}

fn solve_problem<V: QuadValue + Send + Sync>(p: &Problem<'_, V>) -> QuadratureResult<V> {
    if let Some(cut) = exponential_cutoff(&p.bound).filter(|&c| c <= MAX_EXPONENTIAL_CUTOFF) {
        let cut = cut.max(1.0);
        let pts = breakpoints(0.0, cut, p.kinks, &[]);
        let sums = integrate_panels(p.integrand, p.kinks.is_some(), pts);
        let value = sums.values.iter().fold(V::default(), |a, &v| a + v);
        let err = sums.error + TAIL_TOLERANCE;
        return QuadratureResult {
            value,
            abs_error_estimate: err,
            converged: sums.converged && err <= 1e-9_f64.max(1e-8 * value.magnitude()),
            tail_method: TailMethod::ExponentialBound,
        };
    }
    if p.tail.iter().any(|t| t.rate == 0.0 && t.power <= 1.0 && t.coef.magnitude() > 0.0) {
        return QuadratureResult::divergent();
    }
    let r0 = p.r0;
    let avg_pts: Vec<f64> =
        (0..AVERAGING_POINTS).map(|j| r0 + PI * j as f64 / AVERAGING_POINTS as f64).collect();
    let end = r0 + PI;
    let pts = breakpoints(0.0, end, p.kinks, &avg_pts);
    let sums = integrate_panels(p.integrand, p.kinks.is_some(), pts);
    let mut estimates = Vec::with_capacity(AVERAGING_POINTS);
    let mut cum = V::default();
    let mut next = 0;
    for (w, v) in sums.points.windows(2).zip(&sums.values) {
        while next < avg_pts.len() && avg_pts[next] <= w[0] + 1e-12 {
            estimates.push(cum);
            next += 1;
        }
        cum = cum + *v;
    }
    while estimates.len() < avg_pts.len() {
        estimates.push(cum);
    }
    let mut with_tail = Vec::with_capacity(AVERAGING_POINTS);
    let mut tail_size = 0.0f64;
    for (e, &r) in estimates.iter().zip(&avg_pts) {
        let tail = p
            .tail
            .iter()
            .fold(V::default(), |a, t| a + t.coef * power_exp_tail(t.power, t.rate, r));
        tail_size = tail_size.max(tail.magnitude());
        with_tail.push(*e + tail);
    }
    let mean = |vals: &mut dyn Iterator<Item = V>, count: usize| -> V {
        vals.fold(V::default(), |a, v| a + v) * (1.0 / count as f64)
    };
    let all = mean(&mut with_tail.iter().copied(), AVERAGING_POINTS);
    let half = mean(&mut with_tail.iter().step_by(2).copied(), AVERAGING_POINTS / 2);
    let spread = (all - half).magnitude();
    // next asymptotic order is smaller by O(1/r^2)
    let err = sums.error + spread + tail_size / (r0 * r0);
    QuadratureResult {
        value: all,
        abs_error_estimate: err,
        converged: sums.converged && err <= 1e-9_f64.max(1e-8 * all.magnitude()),
        tail_method: TailMethod::OscillatoryAsymptotic,
    }
}

fn default_r0(max_shell: u32) -> f64 {
    2000f64.max(20.0 * max_shell as f64)
}

/// Bound terms for `Psi(sum lambda H)` given `|sum lambda H| <= A r^{-4/3} e^{-nu r}`.
fn cumulant_bound(spec: &CumulantSpec, amplitude: f64, nu: f64) -> Vec<BoundTerm> {
    spec.abs_bound_terms()
        .into_iter()
        .map(|(c, p)| BoundTerm { coef: c * amplitude.powf(p), power: 4.0 * p / 3.0, rate: p * nu })
        .collect()
}

fn cumulant_tail(spec: &CumulantSpec, z: Complex64, nu: f64) -> Vec<TailTerm<Complex64>> {
    let mut tail = Vec::new();
    let q = spec.quadratic_rate();
    if q > 0.0 {
        tail.push(TailTerm {
            coef: Complex64::from(-q * z.norm_sqr() / (4.0 * PI)),
            power: 3.0,
            rate: 2.0 * nu,
        });
    }
    if let Some((alpha, scale)) = spec.stable_part() {
        let c = -scale.powf(alpha) * z.norm().powf(alpha) * cos_power_mean(alpha) * PI.powf(-alpha / 2.0);
        tail.push(TailTerm { coef: Complex64::from(c), power: 1.5 * alpha, rate: alpha * nu });
    }
    tail
}

fn combo_functional(spec: &CumulantSpec, combo: &Combo, nu: f64) -> QuadratureResult<Complex64> {
    if combo.terms.iter().all(|&(_, l)| l == 0.0) {
        return QuadratureResult {
            value: Complex64::default(),
            abs_error_estimate: 0.0,
            converged: true,
            tail_method: if nu > 0.0 { TailMethod::ExponentialBound } else { TailMethod::OscillatoryAsymptotic },
        };
    }
    let g = |r: f64| spec.cumulant(combo.eval(nu, r));
    let h = |r: f64| combo.eval(nu, r);
    let problem = Problem {
        integrand: &g,
        kinks: spec.stable_part().map(|_| &h as &(dyn Fn(f64) -> f64 + Sync)),
        bound: cumulant_bound(spec, combo.amplitude(), nu),
        tail: cumulant_tail(spec, combo.asymptotic_phasor(), nu),
        r0: default_r0(combo.max_shell()),
    };
    solve_problem(&problem)
}

fn validate_inputs(spec: &CumulantSpec, nu: f64, shells: &[u32]) -> Result<()> {
    spec.validate()?;
    ensure(nu >= 0.0 && nu.is_finite(), || format!("nu must be finite and >= 0, got {nu}"))?;
    ensure(shells.iter().all(|&n| n >= 1), || "shell index must be >= 1".into())
}

/// `I_n(lambda) = int_0^inf Psi(lambda H_n^nu(r)) dr`; the CF is `exp(I_n)`.
pub fn cf_exponent(spec: &CumulantSpec, n: u32, nu: f64, lambda: f64) -> Result<QuadratureResult<Complex64>> {
    validate_inputs(spec, nu, &[n])?;
    if !existence_check(spec, nu).exists {
        return Ok(QuadratureResult::divergent());
    }
    Ok(combo_functional(spec, &Combo { terms: vec![(n, lambda)] }, nu))
}

/// `int_0^inf Psi(lambda_n H_n + lambda_m H_m) dr`.
pub fn joint_cf_exponent(
    spec: &CumulantSpec,
    (n, lambda_n): (u32, f64),
    (m, lambda_m): (u32, f64),
    nu: f64,
) -> Result<QuadratureResult<Complex64>> {
    validate_inputs(spec, nu, &[n, m])?;
    if !existence_check(spec, nu).exists {
        return Ok(QuadratureResult::divergent());
    }
    let terms = if lambda_m == 0.0 { vec![(n, lambda_n)] } else { vec![(n, lambda_n), (m, lambda_m)] };
    Ok(combo_functional(spec, &Combo { terms }, nu))
}

/// `int_0^inf H_n^nu(r) dr`.
pub fn kernel_integral(n: u32, nu: f64) -> QuadratureResult<f64> {
    let combo = Combo { terms: vec![(n, 1.0)] };
    let g = |r: f64| kernel_h(n, nu, r);
    let problem = Problem {
        integrand: &g,
        kinks: None,
        bound: vec![BoundTerm { coef: combo.amplitude(), power: 4.0 / 3.0, rate: nu }],
        tail: Vec::new(),
        r0: default_r0(n),
    };
    solve_problem(&problem)
}

/// `int_0^inf H_m^nu(r) H_n^nu(r) dr`.
pub fn kernel_product_integral(m: u32, n: u32, nu: f64) -> QuadratureResult<f64> {
    let am = Combo { terms: vec![(m, 1.0)] }.amplitude();
    let an = Combo { terms: vec![(n, 1.0)] }.amplitude();
    let g = |r: f64| kernel_h(m, nu, r) * kernel_h(n, nu, r);
    let coef = (m * n) as f64 / (2.0 * PI) * (PI * (m as f64 - n as f64) / 2.0).cos();
    let coef = if (m as i64 - n as i64) % 2 != 0 { 0.0 } else { coef };
    let problem = Problem {
        integrand: &g,
        kinks: None,
        bound: vec![BoundTerm { coef: am * an, power: 8.0 / 3.0, rate: 2.0 * nu }],
        tail: vec![TailTerm { coef, power: 3.0, rate: 2.0 * nu }],
        r0: default_r0(m.max(n)),
    };
    solve_problem(&problem)
}

/// `int_0^inf |H_n^nu(r)|^alpha dr` for `alpha` in `(0, 2]`.
pub fn kernel_abs_power_integral(n: u32, nu: f64, alpha: f64) -> QuadratureResult<f64> {
    let combo = Combo { terms: vec![(n, 1.0)] };
    let g = |r: f64| kernel_h(n, nu, r).abs().powf(alpha);
    let h = |r: f64| kernel_h(n, nu, r);
    let coef = (n as f64).powf(alpha) * cos_power_mean(alpha) * PI.powf(-alpha / 2.0);
    let problem = Problem {
        integrand: &g,
        kinks: (alpha < 2.0).then_some(&h as &(dyn Fn(f64) -> f64 + Sync)),
        bound: vec![BoundTerm {
            coef: combo.amplitude().powf(alpha),
            power: 4.0 * alpha / 3.0,
            rate: alpha * nu,
        }],
        tail: vec![TailTerm { coef, power: 1.5 * alpha, rate: alpha * nu }],
        r0: default_r0(n),
    };
    solve_problem(&problem)
}

/// `int_a^b |H_n^nu(r)|^alpha dr` evaluated at each of the increasing cut-offs `bs`.
pub fn truncated_abs_power_integrals(n: u32, nu: f64, alpha: f64, a: f64, bs: &[f64]) -> Vec<f64> {
    let g = |r: f64| kernel_h(n, nu, r).abs().powf(alpha);
    let h = |r: f64| kernel_h(n, nu, r);
    let end = bs.iter().copied().fold(a, f64::max);
    let pts = breakpoints(a, end, Some(&h), bs);
    let sums = integrate_panels(&g, true, pts);
    let mut out = Vec::with_capacity(bs.len());
    let mut cum = 0.0;
    let mut next = 0;
    for (w, v) in sums.points.windows(2).zip(&sums.values) {
        while next < bs.len() && bs[next] <= w[0] + 1e-12 {
            out.push(cum);
            next += 1;
        }
        cum += v;
    }
    while out.len() < bs.len() {
        out.push(cum);
    }
    out
}

/// Scale `s` of the stationary law `exp(-|lambda s|^alpha)` of shell `n`
/// under a symmetric stable driver with scale `base_scale`. `alpha = 2`
/// gives the Gaussian limit `exp(-lambda^2 s^2)`.
pub fn stable_scale(alpha: f64, base_scale: f64, n: u32, nu: f64) -> Result<QuadratureResult<f64>> {
    ensure(alpha > 0.0 && alpha <= 2.0, || format!("alpha must lie in (0, 2], got {alpha}"))?;
    ensure(base_scale > 0.0 && base_scale.is_finite(), || {
        format!("scale must be finite and > 0, got {base_scale}")
    })?;
    ensure(n >= 1, || "shell index must be >= 1".into())?;
    ensure(nu >= 0.0 && nu.is_finite(), || format!("nu must be finite and >= 0, got {nu}"))?;
    if nu == 0.0 && alpha <= 2.0 / 3.0 {
        return Ok(QuadratureResult::divergent());
    }
    let integral = kernel_abs_power_integral(n, nu, alpha);
    if integral.is_divergent() {
        return Ok(integral);
    }
    let s = base_scale * integral.value.powf(1.0 / alpha);
    Ok(QuadratureResult {
        value: s,
        abs_error_estimate: s / (alpha * integral.value) * integral.abs_error_estimate,
        converged: integral.converged,
        tail_method: integral.tail_method,
    })
}

/// First and second moments of the stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_n: f64,
    pub mean_m: f64,
    /// `Cov(a_n, a_m)`.
    pub covariance: f64,
    /// `E[a_n a_m]`.
    pub second_moment: f64,
    pub abs_error_estimate: f64,
}

pub fn moments(spec: &CumulantSpec, n: u32, m: u32, nu: f64) -> Result<Moments> {
    validate_inputs(spec, nu, &[n, m])?;
    let SecondMoments::Finite { mean_rate, variance_rate } = spec.second_moment_data() else {
        return Err(Error::MomentsUndefined(
            "the driver has no finite second moment (stable component)".into(),
        ));
    };
    let (mean_n, mean_m, mean_err) = if mean_rate == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let i_n = kernel_integral(n, nu);
        let i_m = if m == n { i_n } else { kernel_integral(m, nu) };
        (
            mean_rate * i_n.value,
            mean_rate * i_m.value,
            mean_rate.abs() * (i_n.abs_error_estimate + i_m.abs_error_estimate),
        )
    };
    let (covariance, cov_err) = if variance_rate == 0.0 {
        (0.0, 0.0)
    } else {
        let p = kernel_product_integral(m, n, nu);
        (variance_rate * p.value, variance_rate * p.abs_error_estimate)
    };
    Ok(Moments {
        mean_n,
        mean_m,
        covariance,
        second_moment: covariance + mean_n * mean_m,
        abs_error_estimate: cov_err + mean_err * (mean_n.abs() + mean_m.abs() + 1.0),
    })
}

/// Closed form of `int_0^inf H_m^0 H_n^0 dr`: for even `m - n` it is
/// `(2/pi) cos(pi (m - n)/2) [1/((m+n)^2 - 1) - 1/((m-n)^2 - 1)]`; adjacent
/// shells give `1/2` and other odd differences give `0`.
pub fn covariance_closed_form(m: u32, n: u32) -> f64 {
    let d = m as i64 - n as i64;
    if d.abs() == 1 {
        return 0.5;
    }
    if d % 2 != 0 {
        return 0.0;
    }
    let s = (m + n) as f64;
    let sign = if (d / 2) % 2 == 0 { 1.0 } else { -1.0 };
    2.0 / PI * sign * (1.0 / (s * s - 1.0) - 1.0 / ((d * d) as f64 - 1.0))
}

/// `int_0^inf H_n^nu dr = (nu/2 + sqrt(1 + nu^2/4))^{-n}`.
pub fn kernel_integral_closed_form(n: u32, nu: f64) -> f64 {
    (0.5 * nu + (1.0 + 0.25 * nu * nu).sqrt()).powi(-(n as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LawKind {
    Constant { value: f64 },
    Gaussian { mean: f64, variance: f64 },
    StableSymmetric { alpha: f64, scale: f64 },
    /// CF sampled on a grid of `lambda`.
    Empirical { lambdas: Vec<f64>, re: Vec<f64>, im: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub n: u32,
    pub nu: f64,
    pub kind: LawKind,
    pub abs_error_estimate: f64,
}

/// Classifies and evaluates the stationary law of shell `n`. Drivers outside
/// the closed Gaussian/stable families are reported through their CF on `lambdas`.
pub fn stationary_law(spec: &CumulantSpec, n: u32, nu: f64, lambdas: &[f64]) -> Result<StationaryLaw> {
    validate_inputs(spec, nu, &[n])?;
    let ex = existence_check(spec, nu);
    if !ex.exists {
        return Err(Error::NonExistentLaw(ex.reason));
    }
    let law = |kind, err| StationaryLaw { n, nu, kind, abs_error_estimate: err };
    match (spec.stable_part(), spec.jump) {
        (None, crate::levy_driver::JumpComponent::None) => {
            let m = moments(spec, n, n, nu)?;
            if spec.sigma == 0.0 {
                Ok(law(LawKind::Constant { value: m.mean_n }, m.abs_error_estimate))
            } else {
                Ok(law(LawKind::Gaussian { mean: m.mean_n, variance: m.covariance }, m.abs_error_estimate))
            }
        }
        (Some((alpha, scale)), _) if spec.sigma == 0.0 && spec.drift == 0.0 => {
            let s = stable_scale(alpha, scale, n, nu)?;
            Ok(law(LawKind::StableSymmetric { alpha, scale: s.value }, s.abs_error_estimate))
        }
        _ => {
            let mut re = Vec::with_capacity(lambdas.len());
            let mut im = Vec::with_capacity(lambdas.len());
            let mut err = 0.0f64;
            for &l in lambdas {
                let q = cf_exponent(spec, n, nu, l)?;
                let cf = q.value.exp();
                re.push(cf.re);
                im.push(cf.im);
                err = err.max(cf.norm() * q.abs_error_estimate);
            }
            Ok(law(LawKind::Empirical { lambdas: lambdas.to_vec(), re, im }, err))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlightsVerdict {
    Divergent,
    Marginal,
    Convergent,
}

/// Truncated `I(R) = int_0^R |H_n^nu|^alpha dr` on a cut-off grid and its growth rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightsScan {
    pub alpha: f64,
    pub nu: f64,
    pub n: u32,
    pub cutoffs: Vec<f64>,
    pub integrals: Vec<f64>,
    /// `I(R_{k+1}) - I(R_k)`.
    pub increments: Vec<f64>,
    /// Least-squares slope of `log increment` against `log R`; for dyadic
    /// cut-offs this is the growth exponent `1 - 3 alpha / 2` of `I`.
    pub slope: f64,
    pub verdict: FlightsVerdict,
    /// Geometric extrapolation of `I(inf) - I(R_last)` when convergent.
    pub remainder_estimate: Option<f64>,
}

/// Slopes within this distance of zero are reported as marginal.
pub const MARGINAL_BAND: f64 = 0.05;

/// Dyadic cut-offs `base * 2^k`, `k = 0..count`.
pub fn dyadic_cutoffs(base: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| base * 2f64.powi(k as i32)).collect()
}

pub fn flights_scan(alpha: f64, nu: f64, n: u32, cutoffs: &[f64]) -> Result<FlightsScan> {
    ensure(alpha > 0.0 && alpha <= 2.0, || format!("alpha must lie in (0, 2], got {alpha}"))?;
    ensure(nu >= 0.0 && nu.is_finite(), || format!("nu must be finite and >= 0, got {nu}"))?;
    ensure(n >= 1, || "shell index must be >= 1".into())?;
    ensure(cutoffs.len() >= 3, || "at least three cut-offs are needed".into())?;
    ensure(cutoffs.windows(2).all(|w| w[1] > w[0]) && cutoffs[0] > 0.0, || {
        "cut-offs must be positive and increasing".into()
    })?;
    let integrals = truncated_abs_power_integrals(n, nu, alpha, 0.0, cutoffs);
    let increments: Vec<f64> = integrals.windows(2).map(|w| w[1] - w[0]).collect();
    let pts: Vec<(f64, f64)> = cutoffs
        .iter()
        .zip(&increments)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, &d)| (r.ln(), d.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NEG_INFINITY
    };
    let verdict = if nu > 0.0 || slope < -MARGINAL_BAND {
        FlightsVerdict::Convergent
    } else if slope <= MARGINAL_BAND {
        FlightsVerdict::Marginal
    } else {
        FlightsVerdict::Divergent
    };
    let remainder_estimate = (verdict == FlightsVerdict::Convergent).then(|| {
        let last = *increments.last().unwrap_or(&0.0);
        let ratio = cutoffs[cutoffs.len() - 1] / cutoffs[cutoffs.len() - 2];
        let q = ratio.powf(slope).min(0.999);
        last.abs() * q / (1.0 - q)
    });
    Ok(FlightsScan {
        alpha,
        nu,
        n,
        cutoffs: cutoffs.to_vec(),
        integrals,
        increments,
        slope,
        verdict,
        remainder_estimate,
    })
}

/// Monte Carlo settings for pull-back sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Pull-back horizon `T`; chosen from the tail bound when absent.
    pub horizon: Option<f64>,
    pub dt: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Largest admissible truncation bias (variance, scale^alpha or mean).
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub shells: Vec<u32>,
    pub nu: f64,
    pub horizon: f64,
    pub dt: f64,
    pub replicas: usize,
    pub seed: u64,
    pub bias_estimate: f64,
    /// `samples[i][r]` is replica `r` of shell `shells[i]`.
    pub samples: Vec<Vec<f64>>,
}

impl McSample {
    pub fn shell(&self, n: u32) -> Option<&[f64]> {
        self.shells.iter().position(|&s| s == n).map(|i| self.samples[i].as_slice())
    }

    /// `(lambda, Re, Im)` of the empirical CF of shell `n`.
    pub fn empirical_cf(&self, n: u32, lambdas: &[f64]) -> Vec<(f64, Estimate, Estimate)> {
        let xs = self.shell(n).unwrap_or(&[]);
        lambdas
            .iter()
            .map(|&l| {
                let (re, im) = stats::empirical_cf(xs, l);
                (l, re, im)
            })
            .collect()
    }
}

/// Estimated bias of truncating the pull-back integral of shell `n` at `T`.
pub fn pullback_bias(spec: &CumulantSpec, n: u32, nu: f64, horizon: f64) -> f64 {
    let nf = n as f64;
    let t = horizon;
    let mut bias = 0.0f64;
    let q = spec.quadratic_rate();
    if q > 0.0 {
        // int_T^inf H_n^2 <= n^2 e^{-2 nu T} / (2 pi T^2)
        bias = bias.max(q * nf * nf * (-2.0 * nu * t).exp() / (2.0 * PI * t * t));
    }
    if let Some((alpha, scale)) = spec.stable_part() {
        let p = 1.5 * alpha;
        let c = scale.powf(alpha) * nf.powf(alpha) * cos_power_mean(alpha) * PI.powf(-alpha / 2.0);
        let tail = if nu > 0.0 {
            t.powf(-p) * (-alpha * nu * t).exp() / (alpha * nu)
        } else if p > 1.0 {
            t.powf(1.0 - p) / (p - 1.0)
        } else {
            f64::INFINITY
        };
        bias = bias.max(c * tail);
    }
    if let SecondMoments::Finite { mean_rate, .. } = spec.second_moment_data() {
        if mean_rate != 0.0 {
            // oscillatory r^{-3/2} tail integrates to O(T^{-3/2})
            bias = bias.max(mean_rate.abs() * nf * (-nu * t).exp() / (PI.sqrt() * t.powf(1.5)));
        }
    }
    bias
}

/// Smallest horizon whose [`pullback_bias`] is at most `tolerance`.
pub fn required_horizon(spec: &CumulantSpec, n: u32, nu: f64, tolerance: f64) -> Option<f64> {
    let mut hi = 1.0;
    while pullback_bias(spec, n, nu, hi) > tolerance {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if pullback_bias(spec, n, nu, mid) > tolerance {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Replicas of `int_0^T H_n^nu(T - r) dL(r)` for each shell, all shells
/// sharing one driver path per replica. Replica `r` uses stream `r` of `seed`.
/// The integral is a midpoint sum over a uniform grid of step `dt`.
pub fn mc_stationary_sample(spec: &CumulantSpec, shells: &[u32], nu: f64, cfg: &McConfig) -> Result<McSample> {
    validate_inputs(spec, nu, shells)?;
    ensure(!shells.is_empty(), || "at least one shell is required".into())?;
    ensure(cfg.dt > 0.0 && cfg.dt.is_finite(), || format!("dt must be > 0, got {}", cfg.dt))?;
    ensure(cfg.replicas >= 2, || format!("need at least 2 replicas, got {}", cfg.replicas))?;
    ensure(cfg.tolerance > 0.0, || "tolerance must be > 0".into())?;
    let ex = existence_check(spec, nu);
    if !ex.exists {
        return Err(Error::NonExistentLaw(ex.reason));
    }
    let n_max = *shells.iter().max().unwrap_or(&1);
    let required = required_horizon(spec, n_max, nu, cfg.tolerance).ok_or_else(|| {
        Error::HorizonTooShort { estimate: f64::INFINITY, tolerance: cfg.tolerance, required: f64::INFINITY }
    })?;
    let horizon = cfg.horizon.unwrap_or(required);
    ensure(horizon > 0.0 && horizon.is_finite(), || format!("horizon must be > 0, got {horizon}"))?;
    let steps = (horizon / cfg.dt).ceil().max(1.0) as usize;
    let horizon = steps as f64 * cfg.dt;
    let bias = shells.iter().map(|&n| pullback_bias(spec, n, nu, horizon)).fold(0.0, f64::max);
    if bias > cfg.tolerance {
        return Err(Error::HorizonTooShort { estimate: bias, tolerance: cfg.tolerance, required });
    }
    let grid = uniform_grid(0.0, horizon, steps);
    let weights: Vec<Vec<f64>> = shells
        .iter()
        .map(|&n| (0..steps).map(|k| kernel_h(n, nu, horizon - (k as f64 + 0.5) * cfg.dt)).collect())
        .collect();
    let per_replica: Vec<Vec<f64>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; steps],
            |incs, r| {
                let mut rng = seeded_rng(cfg.seed, r);
                fill_increments(spec, &grid, &mut rng, incs);
                weights
                    .iter()
                    .map(|w| {
                        let mut acc = 0.0;
                        for (wk, dl) in w.iter().zip(incs.iter()) {
                            acc += wk * dl;
                        }
                        acc
                    })
                    .collect()
            },
        )
        .collect();
    let samples = (0..shells.len()).map(|i| per_replica.iter().map(|row| row[i]).collect()).collect();
    Ok(McSample {
        shells: shells.to_vec(),
        nu,
        horizon,
        dt: cfg.dt,
        replicas: cfg.replicas,
        seed: cfg.seed,
        bias_estimate: bias,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_driver::JumpLaw;

    #[test]
    fn existence_examples() {
        assert!(!existence_check(&CumulantSpec::stable(0.5, 1.0), 0.0).exists);
        assert!(existence_check(&CumulantSpec::stable(0.5, 1.0), 0.1).exists);
        assert!(existence_check(&CumulantSpec::gaussian(1.0), 0.0).exists);
        assert!(existence_check(&CumulantSpec::stable(0.7, 1.0), 0.0).exists);
    }

    #[test]
    fn cos_power_mean_known_values() {
        assert!((cos_power_mean(2.0) - 0.5).abs() < 1e-14);
        assert!((cos_power_mean(1.0) - 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn closed_form_covariance_values() {
        assert!((covariance_closed_form(1, 1) - 8.0 / (3.0 * PI)).abs() < 1e-15);
        assert!((covariance_closed_form(1, 3) - 2.0 / PI * 4.0 / 15.0).abs() < 1e-15);
        assert_eq!(covariance_closed_form(1, 2), 0.5);
        assert_eq!(covariance_closed_form(1, 4), 0.0);
    }

    #[test]
    fn power_exp_tail_matches_closed_form_at_zero_rate() {
        let exact = 100f64.powf(-2.0) / 2.0;
        assert!((power_exp_tail(3.0, 0.0, 100.0) - exact).abs() < 1e-18);
        // small rate tends to the k = 0 value
        assert!((power_exp_tail(3.0, 1e-9, 100.0) - exact).abs() < 1e-6 * exact);
        // p = 0: e^{-kR}/k
        assert!((power_exp_tail(0.0, 0.5, 10.0) - (-5f64).exp() / 0.5).abs() < 1e-12);
    }

    #[test]
    fn moments_need_second_moment() {
        assert!(matches!(moments(&CumulantSpec::stable(1.5, 1.0), 1, 1, 0.0), Err(Error::MomentsUndefined(_))));
        let cp = CumulantSpec::compound_poisson(1.0, JumpLaw::TwoPoint { size: 1.0 });
        assert!(moments(&cp, 1, 1, 0.5).is_ok());
    }

    #[test]
    fn zero_lambda_gives_zero_exponent() {
        let q = cf_exponent(&CumulantSpec::stable(1.2, 1.0), 2, 0.0, 0.0).unwrap();
        assert_eq!(q.value, Complex64::default());
        assert!(q.converged);
    }

    #[test]
    fn divergent_cases_are_declared() {
        let q = cf_exponent(&CumulantSpec::stable(0.5, 1.0), 1, 0.0, 1.0).unwrap();
        assert!(q.is_divergent() && !q.converged);
        let s = stable_scale(0.6, 1.0, 1, 0.0).unwrap();
        assert!(s.is_divergent());
    }

    #[test]
    fn horizon_checks() {
        let spec = CumulantSpec::gaussian(1.0);
        let t = required_horizon(&spec, 1, 0.0, 1e-4).unwrap();
        assert!((pullback_bias(&spec, 1, 0.0, t) - 1e-4).abs() < 1e-8);
        let cfg = McConfig { horizon: Some(5.0), dt: 0.1, replicas: 10, seed: 1, tolerance: 1e-4 };
        assert!(matches!(
            mc_stationary_sample(&spec, &[1], 0.0, &cfg),
            Err(Error::HorizonTooShort { .. })
        ));
    }
}
