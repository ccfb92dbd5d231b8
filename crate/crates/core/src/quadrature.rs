//! Numerical integration on finite intervals.
//!
//! Two rules are provided: adaptive Gauss–Kronrod (7/15 points, error
//! estimate rescaled as in QUADPACK) for smooth or oscillatory integrands, and
//! tanh-sinh for integrands with algebraic endpoint behaviour such as the
//! cusps of `|J_n|^alpha` at Bessel zeros. Both are generic over real and
//! complex values.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

pub trait QuadValue:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Value of a finite-interval integral with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<V> {
    pub value: V,
    pub abs_error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-13, rel: 1e-12, max_intervals: 2000 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, ..Self::default() }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value)
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel: (estimate, error estimate, integral of |f|).
fn gk15<V: QuadValue, F: FnMut(f64) -> V>(f: &mut F, a: f64, b: f64) -> (V, f64) {
    let centr = 0.5 * (a + b);
    let hlgth = 0.5 * (b - a);
    let fc = f(centr);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut fv1 = [V::default(); 7];
    let mut fv2 = [V::default(); 7];
    for j in 0..7 {
        let dx = hlgth * XGK[j];
        let f1 = f(centr - dx);
        let f2 = f(centr + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk = resk + (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            resg = resg + (f1 + f2) * WG[j / 2];
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).magnitude();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).magnitude() + (fv2[j] - reskh).magnitude());
    }
    let result = resk * hlgth;
    resasc *= hlgth.abs();
    let mut err = ((resk - resg) * hlgth).magnitude();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * result.magnitude();
    (result, err.max(floor))
}

struct Segment<V> {
    a: f64,
    b: f64,
    value: V,
    err: f64,
}

impl<V> PartialEq for Segment<V> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<V> Eq for Segment<V> {}
impl<V> PartialOrd for Segment<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Segment<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn gauss_kronrod<V, F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Integral<V>
where
    V: QuadValue,
    F: FnMut(f64) -> V,
{
    if a == b {
        return Integral { value: V::default(), abs_error: 0.0, evaluations: 0, converged: true };
    }
    let (value, err) = gk15(&mut f, a, b);
    let mut evaluations = 15;
    let mut total = value;
    let mut total_err = err;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, err });
    let mut converged = total_err <= tol.target(total.magnitude());
    while !converged && heap.len() < tol.max_intervals {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // interval cannot be split further in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.err;
        heap.push(Segment { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, err: e2 });
        converged = total_err <= tol.target(total.magnitude());
    }
    // resum to shed accumulated cancellation in the running totals
    let mut value = V::default();
    let mut abs_error = 0.0;
    for s in heap.iter() {
        value = value + s.value;
        abs_error += s.err;
    }
    Integral { value, abs_error, evaluations, converged: abs_error <= tol.target(value.magnitude()) }
}

/// Gauss–Kronrod over consecutive panels `[p_0, p_1], [p_1, p_2], ...`.
pub fn gauss_kronrod_panels<V, F>(mut f: F, points: &[f64], tol: Tolerance) -> Integral<V>
where
    V: QuadValue,
    F: FnMut(f64) -> V,
{
    let mut acc = Integral { value: V::default(), abs_error: 0.0, evaluations: 0, converged: true };
    for w in points.windows(2) {
        let part = gauss_kronrod(&mut f, w[0], w[1], tol);
        acc.value = acc.value + part.value;
        acc.abs_error += part.abs_error;
        acc.evaluations += part.evaluations;
        acc.converged &= part.converged;
    }
    acc
}

/// Tanh-sinh integration over `[a, b]`, tolerant of integrable endpoint
/// singularities. `f` receives the abscissa and its distance to the nearest
/// endpoint, which stays accurate where `x` itself has rounded onto the
/// endpoint.
pub fn tanh_sinh<V, F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Integral<V>
where
    V: QuadValue,
    F: FnMut(f64, f64) -> V,
{
    const T_MAX: f64 = 3.5;
    const MAX_LEVEL: u32 = 9;
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    let mut evaluations = 0;

    let mut eval_pair = |t: f64, evaluations: &mut usize| -> V {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let cosh_u = u.cosh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / (cosh_u * cosh_u);
        if !(w > 0.0) || !w.is_finite() {
            return V::default();
        }
        // distance from the node to the nearer endpoint, in units of d
        let gap = 2.0 / ((2.0 * u.abs()).exp() + 1.0);
        if t == 0.0 {
            *evaluations += 1;
            return f(c, d) * w;
        }
        let dist = d * gap;
        *evaluations += 2;
        let left = f(a + dist, dist);
        let right = f(b - dist, dist);
        (left + right) * w
    };

    let mut h = 1.0;
    let mut sum = eval_pair(0.0, &mut evaluations);
    let mut k = 1;
    while k as f64 * h <= T_MAX {
        sum = sum + eval_pair(k as f64 * h, &mut evaluations);
        k += 1;
    }
    let mut estimate = sum * (h * d);
    let mut err = f64::INFINITY;
    for _ in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= T_MAX {
            sum = sum + eval_pair(k as f64 * h, &mut evaluations);
            k += 2;
        }
        let next = sum * (h * d);
        err = (next - estimate).magnitude();
        estimate = next;
        if err <= tol.target(estimate.magnitude()) {
            break;
        }
    }
    Integral {
        value: estimate,
        abs_error: err,
        evaluations,
        converged: err <= tol.target(estimate.magnitude()),
    }
}

/// `n`-point Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let r = gauss_kronrod(|x: f64| x * x, 0.0, 3.0, Tolerance::default());
        assert!((r.value - 9.0).abs() < 1e-13 && r.converged);
        let r = gauss_kronrod(|x: f64| (-x).exp(), 0.0, 40.0, Tolerance::default());
        assert!((r.value - (1.0 - (-40f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_integrand() {
        let r = gauss_kronrod(|x: f64| (50.0 * x).cos(), 0.0, 3.0, Tolerance::default());
        assert!((r.value - (150f64).sin() / 50.0).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn complex_values() {
        let r = gauss_kronrod(|x: f64| Complex64::new(0.0, x).exp(), 0.0, 1.0, Tolerance::default());
        let exact = Complex64::new(1f64.sin(), 1.0 - 1f64.cos());
        assert!((r.value - exact).norm() < 1e-13);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_cusps() {
        // int_0^1 x^{-1/2} = 2, int_0^1 (1-x)^{0.4} = 1/1.4
        let r = tanh_sinh(|x: f64, _| x.powf(-0.5), 0.0, 1.0, Tolerance::new(1e-12, 1e-12));
        assert!((r.value - 2.0).abs() < 1e-9, "{r:?}");
        let r = tanh_sinh(
            |x: f64, dist: f64| if x > 0.5 { dist.powf(0.4) } else { (1.0 - x).powf(0.4) },
            0.0,
            1.0,
            Tolerance::default(),
        );
        assert!((r.value - 1.0 / 1.4).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn legendre_rule_exact_for_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((q - exact).abs() < 1e-13, "n={n}");
        }
    }
}
