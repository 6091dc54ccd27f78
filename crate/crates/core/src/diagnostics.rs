//! Statistical checks of the increment sampler against its Levy measure.

use serde::Serialize;
use thiserror::Error;

use crate::levy_measures::{JumpLaw, LevyMeasure, MeasureError};
use crate::levy_sampler::{IncrementSampler, LevyProcess};
use crate::quadrature::{integrate, QuadratureError, Tolerance};
use crate::rng;
use crate::scalar::Real;
use crate::stats::{ks_two_sample, Moments};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("no characteristic exponent available for {0}")]
    Unsupported(&'static str),
    #[error("need at least two samples")]
    TooFewSamples,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Samples are drawn in blocks, each from its own stream.
const BLOCK: usize = 1 << 14;

/// `count` increments over steps of length `dt`, reproducible from `root_seed`.
pub fn sample_increments<T: Real>(process: &LevyProcess<T>, dt: f64, count: usize, root_seed: u64) -> Vec<f64> {
    let sampler = IncrementSampler::new(process, T::lit(dt));
    let mut out = vec![0.0; count];
    for (b, block) in out.chunks_mut(BLOCK).enumerate() {
        let mut r = rng::stream(rng::derive_seed_id(root_seed, rng::domain::DIAGNOSTICS, b as u64));
        sampler.fill(&mut r, block);
    }
    out
}

/// Upper end of the oscillatory quadrature range, a whole number of periods
/// so that the boundary terms of the asymptotic tail are exact.
const KERNEL_CUTOFF: f64 = 2.0 * std::f64::consts::PI * 200.0;

fn kernel_series(alpha: f64, upper: f64) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    let mut fact_even = 1.0;
    let mut fact_odd = 1.0;
    for k in 1..40 {
        let kf = k as f64;
        fact_even *= (2.0 * kf - 1.0) * (2.0 * kf);
        fact_odd *= (2.0 * kf) * (2.0 * kf + 1.0);
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        let e = 2.0 * kf - alpha;
        let o = 2.0 * kf + 1.0 - alpha;
        let dr = sign * upper.powf(e) / (fact_even * e);
        let di = sign * upper.powf(o) / (fact_odd * o);
        re += dr;
        im += di;
        if dr.abs() < 1e-18 && di.abs() < 1e-18 {
            break;
        }
    }
    (re, im)
}

/// `int_0^upper (e^{it} - 1 - it) t^{-1-alpha} dt` for `alpha in (1, 2)` and
/// `upper` in `(0, inf]`, as (real, imaginary) parts.
///
/// Power series on `[0, 1]`, adaptive quadrature per half period up to
/// [`KERNEL_CUTOFF`], and the leading asymptotic terms beyond.
pub fn stable_kernel(alpha: f64, upper: f64) -> Result<(f64, f64), QuadratureError> {
    if upper <= 1.0 {
        return Ok(kernel_series(alpha, upper));
    }
    let (mut re, mut im) = kernel_series(alpha, 1.0);
    let end = upper.min(KERNEL_CUTOFF);
    let tol = Tolerance {
        rel: 1e-12,
        abs: 1e-15,
        ..Tolerance::default()
    };
    let mut a = 1.0;
    let mut k = 1.0;
    while a < end {
        let b = (k * std::f64::consts::PI).min(end);
        k += 1.0;
        re += integrate(|t: f64| (t.cos() - 1.0) * t.powf(-1.0 - alpha), a, b, tol)?.value;
        im += integrate(|t: f64| (t.sin() - t) * t.powf(-1.0 - alpha), a, b, tol)?.value;
        a = b;
    }
    if upper.is_infinite() {
        let w = KERNEL_CUTOFF;
        // sin(w) = 0 and cos(w) = 1 at a whole number of periods.
        re -= w.powf(-alpha) / alpha;
        im += w.powf(-1.0 - alpha) - w.powf(1.0 - alpha) / (alpha - 1.0);
    }
    Ok((re, im))
}

/// Characteristic exponent `psi(u) = int (e^{iuz} - 1 - iuz) nu(dz)` of the
/// compensated process, so that `E e^{iu L_t} = exp(t psi(u))`.
pub fn cf_exponent<T: Real>(measure: &LevyMeasure<T>, u: f64) -> Result<(f64, f64), DiagnosticsError> {
    if measure.is_null() || u == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (s, u) = (u.signum(), u.abs());
    let (re, im) = match *measure {
        LevyMeasure::Stable { alpha, c } => {
            let (r, i) = stable_kernel(alpha.as_f64(), f64::INFINITY)?;
            let k = c.as_f64() * u.powf(alpha.as_f64());
            (k * r, k * i)
        }
        LevyMeasure::TruncatedStable { alpha, c, cutoff } => {
            let (r, i) = stable_kernel(alpha.as_f64(), u * cutoff.as_f64())?;
            let k = c.as_f64() * u.powf(alpha.as_f64());
            (k * r, k * i)
        }
        LevyMeasure::TemperedStable { alpha, c, lambda } => {
            // c Gamma(-alpha) [(lambda - iu)^alpha - lambda^alpha + iu alpha lambda^{alpha-1}]
            let (a, l) = (alpha.as_f64(), lambda.as_f64());
            let g = c.as_f64() * crate::special::gamma_fn(2.0 - a) / (a * (a - 1.0));
            let r = (l * l + u * u).sqrt().powf(a);
            let th = a * (-u).atan2(l);
            (g * (r * th.cos() - l.powf(a)), g * (r * th.sin() + u * a * l.powf(a - 1.0)))
        }
        LevyMeasure::CompoundPoisson { rate, jump_law } => {
            let rate = rate.as_f64();
            match jump_law {
                JumpLaw::Exponential { mean } => {
                    let m = mean.as_f64();
                    let d = 1.0 + u * u * m * m;
                    (rate * (1.0 / d - 1.0), rate * (u * m / d - u * m))
                }
                JumpLaw::PointMass { size } => {
                    let z = u * size.as_f64();
                    (rate * (z.cos() - 1.0), rate * (z.sin() - z))
                }
                JumpLaw::Pareto { .. } => return Err(DiagnosticsError::Unsupported("pareto jumps")),
            }
        }
    };
    Ok((re, s * im))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CfPoint {
    pub u: f64,
    pub empirical: (f64, f64),
    pub exact: (f64, f64),
    /// `sqrt((Var cos + Var sin) / N)`, the standard error of the modulus of
    /// the complex difference.
    pub std_error: f64,
}

impl CfPoint {
    pub fn deviation(&self) -> f64 {
        (self.empirical.0 - self.exact.0).hypot(self.empirical.1 - self.exact.1)
    }

    pub fn within(&self, k: f64) -> bool {
        self.deviation() <= k * self.std_error
    }
}

/// Empirical characteristic function of `L_dt` against `exp(dt psi(u))`.
pub fn cf_check<T: Real>(
    process: &LevyProcess<T>,
    dt: f64,
    us: &[f64],
    samples: usize,
    root_seed: u64,
) -> Result<Vec<CfPoint>, DiagnosticsError> {
    if samples < 2 {
        return Err(DiagnosticsError::TooFewSamples);
    }
    let xs = sample_increments(process, dt, samples, root_seed);
    us.iter()
        .map(|&u| {
            let (pr, pi) = cf_exponent(&process.measure, u)?;
            let m = (dt * pr).exp();
            let (mut c, mut s) = (Moments::default(), Moments::default());
            for &x in &xs {
                let (sin, cos) = (u * x).sin_cos();
                c.push(cos);
                s.push(sin);
            }
            Ok(CfPoint {
                u,
                empirical: (c.mean(), s.mean()),
                exact: (m * (dt * pi).cos(), m * (dt * pi).sin()),
                std_error: ((c.variance() + s.variance()) / samples as f64).sqrt(),
            })
        })
        .collect()
}

/// Two-sample KS statistic between `(L_{4dt}) 4^{-1/alpha}`, built from four
/// consecutive `dt` increments, and an independent sample of `L_dt`.
pub fn self_similarity_ks<T: Real>(
    process: &LevyProcess<T>,
    dt: f64,
    samples: usize,
    reference: usize,
    root_seed: u64,
) -> Result<f64, DiagnosticsError> {
    let alpha = process
        .measure
        .stable_index()
        .filter(|_| matches!(process.measure, LevyMeasure::Stable { .. }))
        .ok_or(DiagnosticsError::Unsupported("self-similarity of a non-stable measure"))?
        .as_f64();
    if samples == 0 || reference == 0 {
        return Err(DiagnosticsError::TooFewSamples);
    }
    let scale = 4f64.powf(-1.0 / alpha);
    let fine = sample_increments(process, dt, 4 * samples, root_seed);
    let summed: Vec<f64> = fine.chunks_exact(4).map(|c| (c[0] + c[1] + c[2] + c[3]) * scale).collect();
    let reference = sample_increments(process, dt, reference, root_seed.wrapping_add(1));
    Ok(ks_two_sample(&summed, &reference))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCheck {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanCheck {
    pub fn z_score(&self) -> f64 {
        self.mean / self.std_error
    }
}

/// Sample mean of `L_dt`, zero for a correctly compensated sampler.
pub fn compensation_check<T: Real>(process: &LevyProcess<T>, dt: f64, samples: usize, root_seed: u64) -> Result<MeanCheck, DiagnosticsError> {
    if samples < 2 {
        return Err(DiagnosticsError::TooFewSamples);
    }
    let mut m = Moments::default();
    sample_increments(process, dt, samples, root_seed).into_iter().for_each(|x| m.push(x));
    Ok(MeanCheck {
        mean: m.mean(),
        std_error: m.std_error(),
    })
}

/// Sample variance of `L_dt` and the exact `dt int z^2 nu(dz)`.
pub fn variance_check<T: Real>(process: &LevyProcess<T>, dt: f64, samples: usize, root_seed: u64) -> Result<(f64, f64), DiagnosticsError> {
    if samples < 2 {
        return Err(DiagnosticsError::TooFewSamples);
    }
    let mut m = Moments::default();
    sample_increments(process, dt, samples, root_seed).into_iter().for_each(|x| m.push(x));
    Ok((m.variance(), dt * process.measure.second_moment().as_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma_fn;

    #[test]
    fn stable_kernel_matches_closed_form() {
        // Gamma(-alpha) (-i)^alpha with (-i)^alpha = e^{-i pi alpha / 2}
        for alpha in [1.1, 1.5, 1.9] {
            let g = gamma_fn(2.0 - alpha) / (alpha * (alpha - 1.0));
            let th = -std::f64::consts::FRAC_PI_2 * alpha;
            let (re, im) = stable_kernel(alpha, f64::INFINITY).unwrap();
            assert!((re - g * th.cos()).abs() < 1e-8, "{alpha}: {re} vs {}", g * th.cos());
            assert!((im - g * th.sin()).abs() < 1e-8, "{alpha}: {im} vs {}", g * th.sin());
        }
    }

    #[test]
    fn finite_kernel_is_continuous_at_one() {
        let a = stable_kernel(1.5, 1.0).unwrap();
        let b = stable_kernel(1.5, 1.0 + 1e-9).unwrap();
        assert!((a.0 - b.0).abs() < 1e-8 && (a.1 - b.1).abs() < 1e-8);
    }

    #[test]
    fn tempered_exponent_tends_to_stable() {
        let s = cf_exponent(&LevyMeasure::stable(1.5, 1.0).unwrap(), 2.0).unwrap();
        let t = cf_exponent(&LevyMeasure::tempered_stable(1.5, 1.0, 1e-10).unwrap(), 2.0).unwrap();
        assert!((s.0 - t.0).abs() < 1e-4 && (s.1 - t.1).abs() < 1e-4);
    }

    #[test]
    fn exponent_is_conjugate_symmetric() {
        let m = LevyMeasure::truncated_stable(1.5, 1.0, 1.0).unwrap();
        let a = cf_exponent(&m, 1.3).unwrap();
        let b = cf_exponent(&m, -1.3).unwrap();
        assert_eq!((a.0, a.1), (b.0, -b.1));
    }

    #[test]
    fn pareto_is_unsupported() {
        let m = LevyMeasure::compound_poisson(1.0, JumpLaw::Pareto { exponent: 3.0, min: 1.0 }).unwrap();
        assert!(cf_exponent(&m, 1.0).is_err());
    }
}
