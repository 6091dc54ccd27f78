//! Compensated accumulators, the two-sample Kolmogorov-Smirnov statistic and
//! the log-log rate regression.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Neumaier (improved Kahan) summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running first and second moments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    sum: NeumaierSum,
    sum_sq: NeumaierSum,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn mean(&self) -> f64 {
        self.sum.value() / self.count as f64
    }

    pub fn mean_square(&self) -> f64 {
        self.sum_sq.value() / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        ((self.sum_sq.value() - self.sum.value() * self.sum.value() / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// `sup_x |F_a(x) - F_b(x)|` of the two empirical distribution functions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS statistic needs two non-empty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FitError {
    #[error("rate fit needs at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("rate fit needs positive finite mean errors; level {n} has {mean}")]
    NonPositiveMean { n: usize, mean: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Negated slope of `ln(mean)` against `ln(n)`.
    pub slope: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub weighted: bool,
}

/// Fits `ln(mean) = c - slope ln(n)` over `(n, mean, stderr)` triples.
///
/// Weights are `mean^2 / stderr^2`, the inverse delta-method variance of
/// `ln(mean)`. If any stderr is zero the fit falls back to ordinary least
/// squares. The 95% interval uses Student's t with `k - 2` degrees of
/// freedom, inflated by the reduced chi-square when that exceeds one.
pub fn fit_rate(points: &[(usize, f64, f64)]) -> Result<RateFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewLevels(points.len()));
    }
    for &(n, mean, _) in points {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(FitError::NonPositiveMean { n, mean });
        }
    }
    let weighted = points.iter().all(|&(_, _, se)| se > 0.0 && se.is_finite());
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(n, mean, se)| {
            let w = if weighted { (mean / se).powi(2) } else { 1.0 };
            ((n as f64).ln(), mean.ln(), w)
        })
        .collect();
    let sw: f64 = data.iter().map(|d| d.2).sum();
    let mx = data.iter().map(|d| d.2 * d.0).sum::<f64>() / sw;
    let my = data.iter().map(|d| d.2 * d.1).sum::<f64>() / sw;
    let sxx: f64 = data.iter().map(|d| d.2 * (d.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| d.2 * (d.0 - mx) * (d.1 - my)).sum();
    let b = sxy / sxx;
    let dof = (data.len() - 2) as f64;
    let rss: f64 = data.iter().map(|d| d.2 * (d.1 - my - b * (d.0 - mx)).powi(2)).sum();
    let var_b = if weighted {
        (1.0 / sxx) * (rss / dof).max(1.0)
    } else {
        rss / dof / sxx
    };
    let std_error = var_b.sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom").inverse_cdf(0.975);
    let slope = -b;
    Ok(RateFit {
        slope,
        std_error,
        ci_low: slope - t * std_error,
        ci_high: slope + t * std_error,
        weighted,
    })
}
