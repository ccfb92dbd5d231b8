//! Time-by-shell solution matrices shared by the exact solver and the Euler oracle.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `values[i][n - 1] = a_n(times[i])` for `n = 1..=shells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub shells: usize,
    pub nu: f64,
    pub values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn zeros(times: Vec<f64>, shells: usize, nu: f64) -> Self {
        let values = vec![vec![0.0; shells]; times.len()];
        Self { times, shells, nu, values }
    }

    pub fn get(&self, time_index: usize, n: usize) -> f64 {
        self.values[time_index][n - 1]
    }

    /// Trajectory of shell `n` over all stored times.
    pub fn shell(&self, n: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[n - 1]).collect()
    }

    /// Largest `|a_n - b_n|` over all times and shells `n <= max_shell`.
    pub fn max_abs_diff(&self, other: &Trajectory, max_shell: usize) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::InvalidGrid(format!(
                "trajectories have {} and {} time points",
                self.times.len(),
                other.times.len()
            )));
        }
        let k = max_shell.min(self.shells).min(other.shells);
        let mut worst = 0.0f64;
        for (a, b) in self.values.iter().zip(&other.values) {
            for n in 0..k {
                worst = worst.max((a[n] - b[n]).abs());
            }
        }
        Ok(worst)
    }

    /// Rows restricted to the times closest to each of `targets`.
    pub fn sample_at(&self, targets: &[f64]) -> Trajectory {
        let mut out = Trajectory::zeros(Vec::new(), self.shells, self.nu);
        for &t in targets {
            let i = self
                .times
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            out.times.push(self.times[i]);
            out.values.push(self.values[i].clone());
        }
        out
    }

    /// Writes `time,a_1,...,a_N` (optionally with a leading `a_0` column of zeros).
    pub fn write_csv<W: Write>(&self, mut w: W, with_a0: bool) -> io::Result<()> {
        write!(w, "time")?;
        if with_a0 {
            write!(w, ",a_0")?;
        }
        for n in 1..=self.shells {
            write!(w, ",a_{n}")?;
        }
        writeln!(w)?;
        for (t, row) in self.times.iter().zip(&self.values) {
            write!(w, "{t}")?;
            if with_a0 {
                write!(w, ",0")?;
            }
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Trajectory::zeros(vec![0.0, 0.5], 2, 0.0);
        t.values[1][1] = 1.5;
        let mut buf = Vec::new();
        t.write_csv(&mut buf, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,a_0,a_1,a_2\n0,0,0,0\n0.5,0,0,1.5\n");
    }

    #[test]
    fn diff_respects_shell_limit() {
        let a = Trajectory::zeros(vec![0.0], 3, 0.0);
        let mut b = a.clone();
        b.values[0][2] = 4.0;
        assert_eq!(a.max_abs_diff(&b, 2).unwrap(), 0.0);
        assert_eq!(a.max_abs_diff(&b, 3).unwrap(), 4.0);
    }
}
