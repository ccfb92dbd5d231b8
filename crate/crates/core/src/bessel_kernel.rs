//! Bessel functions of the first kind and the kernels built from them.
//!
//! Integer orders are evaluated by
//! * the power series for `x <= 1`,
//! * Miller's downward recurrence normalised by `J_0 + 2 sum J_2k = 1` when
//!   `x < 25` or the order exceeds `x`,
//! * Hankel's asymptotic expansion for `J_0`, `J_1` followed by forward
//!   recurrence otherwise (forward recurrence is stable for orders below `x`).
//!
//! Real orders use the integral representation
//! `J_mu(z) = (1/pi) int_0^pi cos(mu t - z sin t) dt - (sin(mu pi)/pi) int_0^inf exp(-mu t - z sinh t) dt`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, Result};
use crate::quadrature::{gauss_kronrod, Tolerance};

const SERIES_LIMIT: f64 = 1.0;
const ASYMPTOTIC_LIMIT: f64 = 25.0;
const RESCALE_ABOVE: f64 = 1e250;

/// `J_n(x)`. Negative arguments use `J_n(-x) = (-1)^n J_n(x)`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let mut out = [0.0];
    bessel_j_range(n, x, &mut out);
    out[0]
}

/// `J_0(x), ..., J_nmax(x)`.
pub fn bessel_j_seq(nmax: u32, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax as usize + 1];
    bessel_j_range(0, x, &mut out);
    out
}

/// `J_k` for signed integer order, with `J_{-k} = (-1)^k J_k`.
pub fn bessel_j_signed(k: i64, x: f64) -> f64 {
    let v = bessel_j(k.unsigned_abs() as u32, x);
    if k < 0 && k % 2 != 0 {
        -v
    } else {
        v
    }
}

/// Fills `out[i] = J_{nmin + i}(x)` without allocating.
pub fn bessel_j_range(nmin: u32, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if x < 0.0 {
        bessel_j_range(nmin, -x, out);
        for (i, v) in out.iter_mut().enumerate() {
            if (nmin as usize + i) % 2 == 1 {
                *v = -*v;
            }
        }
        return;
    }
    let nmax = nmin + out.len() as u32 - 1;
    if x == 0.0 {
        for (i, v) in out.iter_mut().enumerate() {
            *v = if nmin as usize + i == 0 { 1.0 } else { 0.0 };
        }
    } else if x.is_nan() {
        out.fill(f64::NAN);
    } else if x <= SERIES_LIMIT {
        for (i, v) in out.iter_mut().enumerate() {
            *v = series(nmin + i as u32, x);
        }
    } else if x < ASYMPTOTIC_LIMIT || nmax as f64 > x {
        miller(nmin, x, out);
    } else {
        forward(nmin, x, out);
    }
}

fn series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let lead = n as f64 * half.ln() - ln_gamma(n as f64 + 1.0);
    if lead < -745.0 {
        return 0.0;
    }
    let mut term = lead.exp();
    let mut sum = term;
    let q = -half * half;
    for k in 1..60 {
        term *= q / (k as f64 * (n + k) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(nmin: u32, x: f64, out: &mut [f64]) {
    let nmax = nmin + out.len() as u32 - 1;
    let top = (nmax as f64).max(x);
    let mut start = (top + 10.0 * top.cbrt() + 30.0).ceil() as u32;
    start += start % 2;
    let mut above = 0.0;
    let mut cur = 1e-30;
    let mut norm = 0.0;
    out.fill(0.0);
    let mut k = start;
    loop {
        if k % 2 == 0 {
            norm += if k == 0 { cur } else { 2.0 * cur };
        }
        if k >= nmin && k <= nmax {
            out[(k - nmin) as usize] = cur;
        }
        if k == 0 {
            break;
        }
        let below = 2.0 * k as f64 / x * cur - above;
        above = cur;
        cur = below;
        k -= 1;
        if cur.abs() > RESCALE_ABOVE {
            let s = 1.0 / RESCALE_ABOVE;
            cur *= s;
            above *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
}

/// Hankel expansion `(P, Q)` for order 0 or 1.
fn hankel_pq(order: u32, x: f64) -> (f64, f64) {
    let mu = 4.0 * (order * order) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0f64;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() >= last {
            break;
        }
        last = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    (p, q)
}

fn forward(nmin: u32, x: f64, out: &mut [f64]) {
    let (s, c) = x.sin_cos();
    let amp = (2.0 / (PI * x)).sqrt();
    let (p0, q0) = hankel_pq(0, x);
    let (p1, q1) = hankel_pq(1, x);
    // phases x - pi/4 and x - 3pi/4 expanded around x
    let (cos0, sin0) = ((c + s) * FRAC_1_SQRT_2, (s - c) * FRAC_1_SQRT_2);
    let (cos1, sin1) = ((s - c) * FRAC_1_SQRT_2, -(s + c) * FRAC_1_SQRT_2);
    let mut jm = amp * (p0 * cos0 - q0 * sin0);
    let mut j = amp * (p1 * cos1 - q1 * sin1);
    let nmax = nmin as usize + out.len() - 1;
    if nmin == 0 {
        out[0] = jm;
    }
    for k in 1..=nmax {
        if k >= nmin as usize {
            out[k - nmin as usize] = j;
        }
        let next = 2.0 * k as f64 / x * j - jm;
        jm = j;
        j = next;
    }
}

/// `J_mu(z)` for real `mu >= 0` and `z >= 0`. Integer orders use [`bessel_j`].
pub fn bessel_j_real(mu: f64, z: f64) -> f64 {
    if mu.fract() == 0.0 && mu <= u32::MAX as f64 {
        return bessel_j(mu as u32, z);
    }
    if z == 0.0 {
        return 0.0;
    }
    let tol = Tolerance::new(1e-14, 1e-13);
    let first = gauss_kronrod(|t: f64| (mu * t - z * t.sin()).cos(), 0.0, PI, tol).value / PI;
    let sin_mu_pi = (mu * PI).sin();
    if sin_mu_pi == 0.0 {
        return first;
    }
    // exp(-mu t - z sinh t) < e^-40 beyond t_end
    let mut t_end = 1.0;
    while mu * t_end + z * t_end.sinh() < 40.0 {
        t_end *= 2.0;
    }
    let second =
        gauss_kronrod(|t: f64| (-mu * t - z * t.sinh()).exp(), 0.0, t_end, tol).value;
    first - sin_mu_pi / PI * second
}

/// Shell index and viscosity of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub n: u32,
    pub nu: f64,
}

impl KernelParams {
    pub fn new(n: u32, nu: f64) -> Result<Self> {
        ensure(n >= 1, || "shell index n must be >= 1".into())?;
        ensure(nu.is_finite() && nu >= 0.0, || format!("nu must be finite and >= 0, got {nu}"))?;
        Ok(Self { n, nu })
    }
}

/// `H_n^nu(r) = n J_n(2r)/r e^{-nu r}`, evaluated as
/// `(J_{n-1}(2r) + J_{n+1}(2r)) e^{-nu r}` which is regular at `r = 0`.
/// `H_0` is identically zero.
pub fn kernel_h(n: u32, nu: f64, r: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut j = [0.0; 3];
    bessel_j_range(n - 1, 2.0 * r, &mut j);
    let damp = if nu == 0.0 { 1.0 } else { (-nu * r).exp() };
    (j[0] + j[2]) * damp
}

/// `H_1, ..., H_nmax` at `r` from a single Bessel sweep.
pub fn kernel_h_all(nmax: u32, nu: f64, r: f64, bessel_buf: &mut Vec<f64>, out: &mut [f64]) {
    bessel_buf.resize(nmax as usize + 2, 0.0);
    bessel_j_range(0, 2.0 * r, bessel_buf);
    let damp = if nu == 0.0 { 1.0 } else { (-nu * r).exp() };
    for n in 1..=nmax as usize {
        out[n - 1] = (bessel_buf[n - 1] + bessel_buf[n + 1]) * damp;
    }
}

/// `dH_n/dr - (H_{n-1} - H_{n+1} - nu H_n)` with a central difference of
/// half-width `step`. A test probe for the kernel recursion.
pub fn kernel_h_derivative_residual(p: KernelParams, r: f64, step: f64) -> Result<f64> {
    ensure(r > 0.0, || format!("r must be > 0, got {r}"))?;
    ensure(step > 0.0 && step < r, || format!("step must lie in (0, r), got {step}"))?;
    let KernelParams { n, nu } = p;
    let deriv = (kernel_h(n, nu, r + step) - kernel_h(n, nu, r - step)) / (2.0 * step);
    let rhs = kernel_h(n - 1, nu, r) - kernel_h(n + 1, nu, r) - nu * kernel_h(n, nu, r);
    Ok(deriv - rhs)
}

/// Homogeneous propagator `G_{n,m}(t) = e^{-nu t} [J_{n-m}(2t) + (-1)^{m-1} J_{n+m}(2t)]`
/// with signed-order `J_{n-m}`.
pub fn propagator(n: u32, m: u32, nu: f64, t: f64) -> f64 {
    let base = bessel_j_signed(n as i64 - m as i64, 2.0 * t)
        + if m % 2 == 1 { 1.0 } else { -1.0 } * bessel_j(n + m, 2.0 * t);
    if nu == 0.0 {
        base
    } else {
        (-nu * t).exp() * base
    }
}

/// `G_{n,m}(t)` for `m = 1..=mmax` given `J_0(2t) .. J_{n+mmax}(2t)`.
pub fn propagator_row(n: u32, mmax: u32, nu: f64, t: f64, bessel: &[f64], out: &mut [f64]) {
    debug_assert!(bessel.len() > (n + mmax) as usize);
    let damp = if nu == 0.0 { 1.0 } else { (-nu * t).exp() };
    for m in 1..=mmax {
        let gap = n as i64 - m as i64;
        let mut left = bessel[gap.unsigned_abs() as usize];
        if gap < 0 && gap % 2 != 0 {
            left = -left;
        }
        let right = bessel[(n + m) as usize];
        let base = if m % 2 == 1 { left + right } else { left - right };
        out[(m - 1) as usize] = damp * base;
    }
}

/// `mu J_mu(mu (x + 1))`.
pub fn delta_approximant(mu: f64, x: f64) -> Result<f64> {
    ensure(mu > 0.0 && mu.is_finite(), || format!("mu must be finite and > 0, got {mu}"))?;
    ensure(x >= -1.0, || format!("x must be >= -1, got {x}"))?;
    Ok(mu * bessel_j_real(mu, mu * (x + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_oracle(n: u32, x: f64) -> f64 {
        // direct power series without the log-gamma lead, fine for small x
        let mut fact = 1.0;
        for k in 1..=n {
            fact *= k as f64;
        }
        let mut term = (0.5 * x).powi(n as i32) / fact;
        let mut sum = term;
        for k in 1..80 {
            term *= -(0.25 * x * x) / (k as f64 * (n + k) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        for n in 1..10 {
            assert_eq!(bessel_j(n, 0.0), 0.0);
        }
    }

    #[test]
    fn known_values() {
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j(0, 2.0) - 0.223_890_779_141_235_7).abs() < 1e-15);
        assert!((bessel_j(2, 2.0) - 0.352_834_028_615_637_7).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_series_on_small_arguments() {
        for n in 0..20 {
            for i in 1..50 {
                let x = 0.1 * i as f64;
                let a = bessel_j(n, x);
                let b = series_oracle(n, x);
                assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0), "n={n} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn branches_agree_at_switch_points() {
        for n in [0u32, 1, 5, 20] {
            let x = ASYMPTOTIC_LIMIT;
            let mut m = [0.0];
            miller(n, x, &mut m);
            let mut f = vec![0.0; n as usize + 1];
            forward(0, x, &mut f);
            assert!((m[0] - f[n as usize]).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn range_matches_single_values() {
        for x in [0.5, 3.0, 30.0, 400.0] {
            let mut buf = [0.0; 5];
            bessel_j_range(3, x, &mut buf);
            for (i, v) in buf.iter().enumerate() {
                assert!((v - bessel_j(3 + i as u32, x)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn negative_argument_parity() {
        assert!((bessel_j(3, -2.0) + bessel_j(3, 2.0)).abs() < 1e-16);
        assert_eq!(bessel_j(2, -2.0), bessel_j(2, 2.0));
    }

    #[test]
    fn real_order_matches_integer_neighbours() {
        // continuity in the order across an integer
        let a = bessel_j_real(3.0 + 1e-7, 5.0);
        assert!((a - bessel_j(3, 5.0)).abs() < 1e-6);
        // J_{1/2}(z) = sqrt(2/(pi z)) sin z
        for z in [0.3, 2.0, 17.0] {
            let exact = (2.0 / (PI * z)).sqrt() * z.sin();
            assert!((bessel_j_real(0.5, z) - exact).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn kernel_limits() {
        assert_eq!(kernel_h(1, 0.3, 0.0), 1.0);
        assert_eq!(kernel_h(5, 0.3, 0.0), 0.0);
        assert!((kernel_h(2, 0.0, 1.0) - 2.0 * bessel_j(2, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn residual_rejects_nonpositive_r() {
        let p = KernelParams::new(2, 0.5).unwrap();
        assert!(kernel_h_derivative_residual(p, 0.0, 1e-4).is_err());
        assert!(KernelParams::new(0, 0.5).is_err());
    }

    #[test]
    fn propagator_row_matches_pointwise() {
        let (n, mmax, nu, t) = (3, 9, 0.2, 2.5);
        let bessel = bessel_j_seq(n + mmax, 2.0 * t);
        let mut row = vec![0.0; mmax as usize];
        propagator_row(n, mmax, nu, t, &bessel, &mut row);
        for m in 1..=mmax {
            assert!((row[m as usize - 1] - propagator(n, m, nu, t)).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_approximant_domain() {
        assert!(delta_approximant(10.0, -1.5).is_err());
        assert_eq!(delta_approximant(10.0, -1.0).unwrap(), 0.0);
        assert_eq!(delta_approximant(10.5, -1.0).unwrap(), 0.0);
    }
}
