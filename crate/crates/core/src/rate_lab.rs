//! Predicted strong convergence exponents and their Monte Carlo estimates.
//!
//! With `theta = 2(1 - gamma)/(1 - beta)` the bounded-coefficient rate is
//! `min(rho/2, (beta/2)(1 - 1/(2 gamma)))` when `alpha_nu < theta` and
//! `min(rho/2, (beta/2)(1 - 1/(2 - (alpha_nu + eps)(1 - beta))))` otherwise;
//! `gamma = 1/2` only gives a logarithmic rate.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::em_engine::{coupled_em_family, oracle_linear, sample_cir_marginal, EmError};
use crate::levy_measures::LevyMeasure;
use crate::levy_sampler::{sample_noise_grid, SamplerError};
use crate::rng;
use crate::scalar::Real;
use crate::sde_model::{Preset, SdeModel};
use crate::stats::{fit_rate, ks_two_sample, FitError, Moments, RateFit};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RateError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("margin {margin} outside the admissible interval (0, {upper})")]
    MarginOutOfRange { margin: f64, upper: f64 },
    #[error("levels must be non-empty, strictly increasing powers of two dividing n_fine = {0}")]
    InvalidLevels(usize),
    #[error("need at least one path")]
    NoPaths,
    #[error("operation needs the {expected} preset, got {got}")]
    WrongPreset { expected: &'static str, got: &'static str },
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

fn out_of_range<T>(msg: String) -> Result<T, RateError> {
    Err(RateError::OutOfRange(msg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    HolderCase1,
    HolderCase2 { eps_margin: f64 },
    LogCase,
    DiffusionBaseline,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::HolderCase1 => "holder_case_1",
            Regime::HolderCase2 { .. } => "holder_case_2",
            Regime::LogCase => "log_case",
            Regime::DiffusionBaseline => "diffusion_baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePrediction {
    pub regime: Regime,
    /// Zero in the logarithmic case.
    pub exponent: f64,
    pub rho: f64,
    pub gamma: f64,
    pub beta: Option<f64>,
    pub alpha_nu: Option<f64>,
}

/// Margin added to `alpha_nu` in the second Holder case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsMargin {
    /// Admissible when the first-moment tail is `O(x^{1 - alpha_nu})` exactly,
    /// as for the stable-type measures.
    Zero,
    Value(f64),
}

impl EpsMargin {
    /// Zero for stable-type measures, otherwise the midpoint of the open
    /// interval `(0, 1/(1 - beta) - alpha_nu)`.
    pub fn default_for<T: Real>(measure: &LevyMeasure<T>, beta: f64) -> Self {
        if measure.stable_index().is_some() {
            EpsMargin::Zero
        } else {
            EpsMargin::Value(((1.0 / (1.0 - beta)) - measure.alpha_nu().as_f64()) / 2.0)
        }
    }
}

fn check_unit(name: &str, v: f64, lo_open: f64, hi: f64) -> Result<(), RateError> {
    if !(v > lo_open && v <= hi) {
        return out_of_range(format!("{name} = {v} outside ({lo_open}, {hi}]"));
    }
    Ok(())
}

/// Rate exponent of `E|X_T - X^(n)_T|` for Holder coefficients with a jump part.
pub fn predict_rate(rho: f64, gamma: f64, beta: f64, alpha_nu: f64, eps: EpsMargin) -> Result<RatePrediction, RateError> {
    check_unit("rho", rho, 0.0, 1.0)?;
    if !(0.5..=1.0).contains(&gamma) {
        return out_of_range(format!("gamma = {gamma} outside [1/2, 1]"));
    }
    if !(1.0..=2.0).contains(&alpha_nu) {
        return out_of_range(format!("alpha_nu = {alpha_nu} outside [1, 2]"));
    }
    if !(beta > 1.0 - 1.0 / alpha_nu && beta < 1.0) {
        return out_of_range(format!("beta = {beta} outside (1 - 1/alpha_nu, 1)"));
    }
    let base = RatePrediction {
        regime: Regime::LogCase,
        exponent: 0.0,
        rho,
        gamma,
        beta: Some(beta),
        alpha_nu: Some(alpha_nu),
    };
    if gamma == 0.5 {
        return Ok(base);
    }
    let threshold = 2.0 * (1.0 - gamma) / (1.0 - beta);
    if alpha_nu < threshold {
        let exponent = holder_case_1_exponent(rho, gamma, beta);
        return Ok(RatePrediction {
            regime: Regime::HolderCase1,
            exponent,
            ..base
        });
    }
    let margin = match eps {
        EpsMargin::Zero => 0.0,
        EpsMargin::Value(m) => {
            let upper = 1.0 / (1.0 - beta) - alpha_nu;
            if !(m > 0.0 && m < upper) {
                return Err(RateError::MarginOutOfRange { margin: m, upper });
            }
            m
        }
    };
    Ok(RatePrediction {
        regime: Regime::HolderCase2 { eps_margin: margin },
        exponent: holder_case_2_exponent(rho, beta, alpha_nu + margin),
        ..base
    })
}

/// `min(rho/2, (beta/2)(1 - 1/(2 gamma)))`.
pub fn holder_case_1_exponent(rho: f64, gamma: f64, beta: f64) -> f64 {
    (rho / 2.0).min(beta / 2.0 * (1.0 - 1.0 / (2.0 * gamma)))
}

/// `min(rho/2, (beta/2)(1 - 1/(2 - a (1 - beta))))` for `a = alpha_nu + eps`.
pub fn holder_case_2_exponent(rho: f64, beta: f64, a: f64) -> f64 {
    (rho / 2.0).min(beta / 2.0 * (1.0 - 1.0 / (2.0 - a * (1.0 - beta))))
}

/// Rate without jumps: `min(rho/2, gamma - 1/2)`, logarithmic at `gamma = 1/2`.
pub fn predict_diffusion_baseline(rho: f64, gamma: f64) -> Result<RatePrediction, RateError> {
    check_unit("rho", rho, 0.0, 1.0)?;
    if !(0.5..=1.0).contains(&gamma) {
        return out_of_range(format!("gamma = {gamma} outside [1/2, 1]"));
    }
    let (regime, exponent) = if gamma == 0.5 {
        (Regime::LogCase, 0.0)
    } else {
        (Regime::DiffusionBaseline, (rho / 2.0).min(gamma - 0.5))
    };
    Ok(RatePrediction {
        regime,
        exponent,
        rho,
        gamma,
        beta: None,
        alpha_nu: None,
    })
}

/// The prediction matching a model's declared exponents and driver.
pub fn predict_for_model<T: Real>(model: &SdeModel<T>) -> Result<RatePrediction, RateError> {
    let c = &model.coeffs;
    let beta = c.beta.as_f64();
    let measure = &model.driver.measure;
    predict_rate(
        c.rho.as_f64(),
        c.gamma.as_f64(),
        beta,
        measure.alpha_nu().as_f64(),
        EpsMargin::default_for(measure, beta),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelError {
    pub n: usize,
    pub mean_abs_error: f64,
    pub stderr: f64,
    /// Root mean square error.
    pub l2_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub model: &'static str,
    pub n_fine: usize,
    pub levels: Vec<LevelError>,
    /// `None` with fewer than three levels or a zero error.
    pub fit: Option<RateFit>,
    pub prediction: Option<RatePrediction>,
    pub paths: usize,
    pub nonfinite_paths: usize,
    pub seed: u64,
    /// `E|X_T^oracle - X_T^(n_fine)|` with its standard error, for the linear model.
    pub oracle_error: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl RateReport {
    pub fn fitted_slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn nonfinite_fraction(&self) -> f64 {
        self.nonfinite_paths as f64 / self.paths as f64
    }

    /// Whether each level's error is at most the previous one plus twice the
    /// standard error of their difference.
    pub fn is_monotone(&self) -> bool {
        self.levels.windows(2).all(|w| {
            let slack = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            w[1].mean_abs_error <= w[0].mean_abs_error + slack
        })
    }
}

/// Paths are processed in this many fixed chunks, so the reduction order
/// (and hence every bit of the report) does not depend on the thread count.
pub const PATH_CHUNKS: usize = 64;

#[derive(Debug, Clone, Default)]
struct ChunkStats {
    errors: Vec<Moments>,
    oracle: Moments,
    nonfinite: usize,
}

impl ChunkStats {
    fn merge(&mut self, other: &ChunkStats) {
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            a.merge(b);
        }
        self.oracle.merge(&other.oracle);
        self.nonfinite += other.nonfinite;
    }
}

fn check_levels(levels: &[usize], n_fine: usize) -> Result<(), RateError> {
    let ok = !levels.is_empty()
        && n_fine.is_power_of_two()
        && levels.windows(2).all(|w| w[0] < w[1])
        && levels.iter().all(|&l| l > 0 && l.is_power_of_two() && n_fine % l == 0);
    if ok {
        Ok(())
    } else {
        Err(RateError::InvalidLevels(n_fine))
    }
}

/// Runs `f(i)` for `i in 0..paths` in [`PATH_CHUNKS`] contiguous chunks on
/// the current rayon pool and merges the chunk results in chunk order.
pub fn chunked_paths<S, F, M>(paths: usize, init: impl Fn() -> S + Sync, f: F, merge: M) -> S
where
    S: Send,
    F: Fn(&mut S, usize) + Sync,
    M: Fn(&mut S, &S),
{
    let chunk = paths.div_ceil(PATH_CHUNKS).max(1);
    let parts: Vec<S> = (0..PATH_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut s = init();
            for i in (c * chunk)..((c + 1) * chunk).min(paths) {
                f(&mut s, i);
            }
            s
        })
        .collect();
    let mut parts = parts.into_iter();
    let mut total = parts.next().expect("at least one chunk");
    for p in parts {
        merge(&mut total, &p);
    }
    total
}

/// Monte Carlo estimate of `E|X^(n)_T - X^(n_fine)_T|` on coupled grids.
///
/// Path `i` uses the noise stream `path_seed_id(root_seed, i)`. Paths with a
/// non-finite value at any level are dropped and counted.
pub fn estimate_strong_error<T: Real>(
    model: &SdeModel<T>,
    levels: &[usize],
    n_fine: usize,
    paths: usize,
    root_seed: u64,
) -> Result<RateReport, RateError> {
    check_levels(levels, n_fine)?;
    if paths == 0 {
        return Err(RateError::NoPaths);
    }
    let mut warnings = Vec::new();
    let max_coarse = levels.iter().copied().filter(|&l| l < n_fine).max();
    if let Some(m) = max_coarse {
        if n_fine < 64 * m {
            warnings.push(format!("n_fine = {n_fine} is below 64 x the largest level {m}"));
        }
    }
    if paths < 1000 {
        warnings.push(format!("{paths} paths is below the recommended 1000"));
    }
    let prediction = match predict_for_model(model) {
        Ok(p) => Some(p),
        Err(e) => {
            warnings.push(format!("no rate prediction: {e}"));
            None
        }
    };
    let with_oracle = matches!(model.preset, Preset::LinearJumpOu { .. });
    // Probe once so structural errors surface before the parallel loop.
    let probe = sample_noise_grid(&model.driver, model.horizon, n_fine, rng::path_seed_id(root_seed, 0))?;
    coupled_em_family(model, &probe, levels)?;

    let stats = chunked_paths(
        paths,
        || ChunkStats {
            errors: vec![Moments::default(); levels.len()],
            ..Default::default()
        },
        |s, i| {
            let noise = sample_noise_grid(&model.driver, model.horizon, n_fine, rng::path_seed_id(root_seed, i as u64))
                .expect("grid parameters validated");
            let family = coupled_em_family(model, &noise, levels).expect("levels validated");
            if family.values().any(|p| !p.is_finite()) {
                s.nonfinite += 1;
                return;
            }
            let fine = family[&n_fine].terminal();
            for (k, level) in levels.iter().enumerate() {
                s.errors[k].push((family[level].terminal() - fine).abs().as_f64());
            }
            if with_oracle {
                let exact = oracle_linear(model, &noise).expect("linear preset");
                s.oracle.push((exact - fine).abs().as_f64());
            }
        },
        ChunkStats::merge,
    );

    let level_errors: Vec<LevelError> = levels
        .iter()
        .zip(&stats.errors)
        .map(|(&n, m)| LevelError {
            n,
            mean_abs_error: m.mean(),
            stderr: m.std_error(),
            l2_error: m.mean_square().sqrt(),
        })
        .collect();
    let fit_input: Vec<(usize, f64, f64)> = level_errors
        .iter()
        .filter(|e| e.n < n_fine)
        .map(|e| (e.n, e.mean_abs_error, e.stderr))
        .collect();
    let fit = match fit_rate(&fit_input) {
        Ok(f) => Some(f),
        Err(e) => {
            warnings.push(format!("no slope fitted: {e}"));
            None
        }
    };
    if stats.nonfinite as f64 > 1e-3 * paths as f64 {
        warnings.push(format!("{} of {paths} paths became non-finite", stats.nonfinite));
    }
    Ok(RateReport {
        model: model.id(),
        n_fine,
        levels: level_errors,
        fit,
        prediction,
        paths,
        nonfinite_paths: stats.nonfinite,
        seed: root_seed,
        oracle_error: with_oracle.then(|| (stats.oracle.mean(), stats.oracle.std_error())),
        warnings,
    })
}

/// Fitted slopes of the per-step increment moments against `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementScaling {
    pub levels: Vec<usize>,
    /// `E|X_{t_{j+1}} - X_{t_j}|`, averaged over steps and paths.
    pub l1: Vec<f64>,
    /// `E|X_{t_{j+1}} - X_{t_j}|^2`, averaged over steps and paths.
    pub l2: Vec<f64>,
    /// Least-squares slopes of `ln l1` and `ln l2` against `ln n`.
    pub l1_slope: f64,
    pub l2_slope: f64,
}

/// Increment moments `E|X^(n)_t - X^(n)_{eta_n(t)}|^p` at the left limits of
/// the steps, for every level, on coupled grids with `n_fine = max(levels)`.
pub fn increment_scaling<T: Real>(
    model: &SdeModel<T>,
    levels: &[usize],
    paths: usize,
    root_seed: u64,
) -> Result<IncrementScaling, RateError> {
    let n_fine = *levels.last().ok_or(RateError::InvalidLevels(0))?;
    check_levels(levels, n_fine)?;
    if paths == 0 {
        return Err(RateError::NoPaths);
    }
    let acc = chunked_paths(
        paths,
        || vec![(Moments::default(), Moments::default()); levels.len()],
        |s, i| {
            let noise = sample_noise_grid(&model.driver, model.horizon, n_fine, rng::path_seed_id(root_seed, i as u64))
                .expect("grid parameters validated");
            let family = coupled_em_family(model, &noise, levels).expect("levels validated");
            for (k, level) in levels.iter().enumerate() {
                let p = &family[level];
                let (mut a1, mut a2) = (0.0, 0.0);
                for w in p.values.windows(2) {
                    let d = (w[1] - w[0]).abs().as_f64();
                    a1 += d;
                    a2 += d * d;
                }
                s[k].0.push(a1 / *level as f64);
                s[k].1.push(a2 / *level as f64);
            }
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.0.merge(&y.0);
                x.1.merge(&y.1);
            }
        },
    );
    let l1: Vec<f64> = acc.iter().map(|m| m.0.mean()).collect();
    let l2: Vec<f64> = acc.iter().map(|m| m.1.mean()).collect();
    let slope = |ys: &[f64]| {
        let pts: Vec<(usize, f64, f64)> = levels.iter().zip(ys).map(|(&n, &y)| (n, y, 0.0)).collect();
        fit_rate(&pts).map(|f| -f.slope)
    };
    Ok(IncrementScaling {
        levels: levels.to_vec(),
        l1_slope: slope(&l1)?,
        l2_slope: slope(&l2)?,
        l1,
        l2,
    })
}

/// Two-sample KS statistic between Euler-Maruyama terminal values of the CIR
/// model at `n` steps and exact draws of `X_T`.
pub fn weak_error_cir(model: &SdeModel<f64>, n: usize, paths: usize, root_seed: u64) -> Result<f64, RateError> {
    let Preset::Cir { a, c, sigma0 } = model.preset else {
        return Err(RateError::WrongPreset {
            expected: "cir",
            got: model.id(),
        });
    };
    if paths == 0 {
        return Err(RateError::NoPaths);
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(RateError::InvalidLevels(n));
    }
    let (x0, t) = (model.x0, model.horizon);
    let pairs: Vec<(f64, f64)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let noise = sample_noise_grid(&model.driver, t, n, rng::path_seed_id(root_seed, i as u64))
                .expect("grid parameters validated");
            let em = crate::em_engine::em_path(model, &noise).expect("matching horizon").terminal();
            let mut r = rng::stream(rng::derive_seed_id(root_seed, rng::domain::CIR_EXACT, i as u64));
            let exact = sample_cir_marginal(a, c, sigma0, x0, t, &mut r).expect("validated preset");
            (em, exact)
        })
        .collect();
    let (em, exact): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(ks_two_sample(&em, &exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_sampler::LevyProcess;

    #[test]
    fn worked_predictions() {
        let p = predict_rate(1.0, 0.75, 0.75, 1.0, EpsMargin::Zero).unwrap();
        assert_eq!(p.regime, Regime::HolderCase1);
        assert!((p.exponent - 0.125).abs() < 1e-15);
        let p = predict_rate(0.5, 0.75, 0.8, 1.5, EpsMargin::Zero).unwrap();
        assert_eq!(p.regime, Regime::HolderCase1);
        assert!((p.exponent - 0.4 / 3.0).abs() < 1e-15);
        let p = predict_rate(1.0, 0.6, 0.5, 1.8, EpsMargin::Value(0.1)).unwrap();
        assert_eq!(p.regime, Regime::HolderCase2 { eps_margin: 0.1 });
        assert!((p.exponent - 0.25 * (1.0 - 1.0 / 1.05)).abs() < 1e-15);
        let p = predict_rate(1.0, 0.5, 0.6, 1.5, EpsMargin::Zero).unwrap();
        assert_eq!((p.regime, p.exponent), (Regime::LogCase, 0.0));
    }

    #[test]
    fn range_violations() {
        assert!(predict_rate(0.0, 0.75, 0.75, 1.0, EpsMargin::Zero).is_err());
        assert!(predict_rate(1.0, 0.4, 0.75, 1.0, EpsMargin::Zero).is_err());
        assert!(predict_rate(1.0, 0.75, 0.2, 1.5, EpsMargin::Zero).is_err());
        assert!(matches!(
            predict_rate(1.0, 0.6, 0.5, 1.8, EpsMargin::Value(0.2)),
            Err(RateError::MarginOutOfRange { .. })
        ));
    }

    #[test]
    fn diffusion_baseline() {
        assert_eq!(predict_diffusion_baseline(1.0, 1.0).unwrap().exponent, 0.5);
        assert_eq!(predict_diffusion_baseline(1.0, 0.5).unwrap().regime, Regime::LogCase);
        assert!((predict_diffusion_baseline(0.2, 0.9).unwrap().exponent - 0.1).abs() < 1e-15);
    }

    #[test]
    fn self_comparison_has_zero_error() {
        let m = SdeModel::cir(1.0, 1.0, 0.5, 1.0, 1.0).unwrap();
        let r = estimate_strong_error(&m, &[64], 64, 20, 1).unwrap();
        assert_eq!(r.levels[0].mean_abs_error, 0.0);
        assert!(r.fit.is_none());
    }

    #[test]
    fn report_is_reproducible() {
        let driver = LevyProcess::with_defaults(LevyMeasure::stable(1.5, 1.0).unwrap()).unwrap();
        let m = SdeModel::linear_jump_ou(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, driver, None).unwrap();
        let a = estimate_strong_error(&m, &[2, 4, 8], 64, 100, 9).unwrap();
        let b = estimate_strong_error(&m, &[2, 4, 8], 64, 100, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.oracle_error.is_some());
    }

    #[test]
    fn weak_error_needs_cir() {
        let driver = LevyProcess::null();
        let m = SdeModel::linear_jump_ou(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, driver, None).unwrap();
        assert!(matches!(weak_error_cir(&m, 16, 10, 0), Err(RateError::WrongPreset { .. })));
    }
}
