//! Sample statistics with standard errors. All sums are pairwise so results
//! do not depend on how replicas were scheduled.

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|value - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if self.std_error == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.std_error
        }
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn pairwise_map_sum(xs: &[f64], f: &impl Fn(f64) -> f64) -> f64 {
    if xs.len() <= 64 {
        xs.iter().map(|&x| f(x)).sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_map_sum(a, f) + pairwise_map_sum(b, f)
    }
}

fn mean_of(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    pairwise_map_sum(xs, &f) / xs.len() as f64
}

pub fn mean(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let m = pairwise_sum(xs) / n;
    let var = mean_of(xs, |x| (x - m) * (x - m)) * n / (n - 1.0);
    Estimate { value: m, std_error: (var / n).sqrt() }
}

/// Unbiased sample variance; the error uses the fourth central moment.
pub fn variance(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let m = pairwise_sum(xs) / n;
    let m2 = mean_of(xs, |x| (x - m).powi(2));
    let m4 = mean_of(xs, |x| (x - m).powi(4));
    Estimate { value: m2 * n / (n - 1.0), std_error: ((m4 - m2 * m2).max(0.0) / n).sqrt() }
}

/// `E[X^2]` without centring.
pub fn second_moment(xs: &[f64]) -> Estimate {
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    mean(&sq)
}

/// Sample covariance of paired observations.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Estimate {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let c = pairwise_sum(&prods) / n;
    let spread = mean_of(&prods, |p| (p - c) * (p - c));
    Estimate { value: c * n / (n - 1.0), std_error: (spread / n).sqrt() }
}

/// Real and imaginary parts of `mean(exp(i lambda x))`.
pub fn empirical_cf(xs: &[f64], lambda: f64) -> (Estimate, Estimate) {
    let cos: Vec<f64> = xs.iter().map(|x| (lambda * x).cos()).collect();
    let sin: Vec<f64> = xs.iter().map(|x| (lambda * x).sin()).collect();
    (mean(&cos), mean(&sin))
}
