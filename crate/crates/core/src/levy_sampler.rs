//! Joint increments of Brownian motion and the compensated Levy process on a
//! dyadic time grid.
//!
//! Exact samplers exist for the stable kind (Chambers-Mallows-Stuck, totally
//! skewed) and for compound Poisson. Tempered and truncated stable increments
//! keep every jump above a threshold `kappa` and replace the rest by a
//! centred Gaussian with variance `dt * int_0^kappa z^2 nu(dz)`.
//!
//! Stable scale: for `nu(dz) = c z^{-1-alpha} dz` the compensated exponent is
//! `int (e^{iuz} - 1 - iuz) nu(dz) = c Gamma(-alpha) (-iu)^alpha`, which is the
//! `S_alpha(sigma, 1, 0)` exponent with `sigma^alpha = -c Gamma(-alpha) cos(pi alpha / 2)`
//! per unit time.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use thiserror::Error;

use crate::levy_measures::{JumpLaw, LevyMeasure, MeasureError};
use crate::rng::{self, SeedId};
use crate::scalar::Real;
use crate::special;

/// Default small-jump threshold for kinds without an exact sampler.
pub const DEFAULT_SMALL_JUMP_CUTOFF: f64 = 1e-3;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SamplerError {
    #[error("fine step count must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("{0} has no exact sampler; a positive small-jump cutoff is required")]
    ExactSamplerUnavailable(&'static str),
    #[error("level {level} does not divide the fine step count {n_fine}")]
    NonDividingLevel { level: usize, n_fine: usize },
    #[error("zeta must lie in [1/2, 1], got {0}")]
    InvalidZeta(f64),
    #[error("small-jump cutoff must be non-negative and finite, got {0}")]
    InvalidCutoff(f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A driving Levy process: its measure, the declared exponent `zeta` of
/// `E|L_t - L_s| <= K0 |t - s|^zeta`, and the small-jump threshold
/// (zero requests exact sampling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyProcess<T> {
    pub measure: LevyMeasure<T>,
    pub zeta: T,
    pub small_jump_cutoff: T,
}

impl<T: Real> LevyProcess<T> {
    pub fn new(measure: LevyMeasure<T>, zeta: T, small_jump_cutoff: T) -> Result<Self, SamplerError> {
        measure.validate()?;
        if !(zeta >= T::half() && zeta <= T::one()) {
            return Err(SamplerError::InvalidZeta(zeta.as_f64()));
        }
        if !(small_jump_cutoff >= T::zero() && small_jump_cutoff.is_finite()) {
            return Err(SamplerError::InvalidCutoff(small_jump_cutoff.as_f64()));
        }
        if small_jump_cutoff == T::zero() {
            match measure {
                LevyMeasure::TemperedStable { .. } => return Err(SamplerError::ExactSamplerUnavailable("tempered stable")),
                LevyMeasure::TruncatedStable { .. } => return Err(SamplerError::ExactSamplerUnavailable("truncated stable")),
                _ => {}
            }
        }
        Ok(Self {
            measure,
            zeta,
            small_jump_cutoff,
        })
    }

    /// Exact sampling where available, otherwise the default threshold; `zeta`
    /// set to `1/alpha` for stable, 1 for compound Poisson and 1/2 for the
    /// square-integrable stable-type kinds.
    pub fn with_defaults(measure: LevyMeasure<T>) -> Result<Self, SamplerError> {
        let (zeta, cutoff) = match measure {
            LevyMeasure::Stable { alpha, .. } => (T::one() / alpha, T::zero()),
            LevyMeasure::CompoundPoisson { .. } => (T::one(), T::zero()),
            LevyMeasure::TemperedStable { .. } | LevyMeasure::TruncatedStable { .. } => {
                (T::half(), T::lit(DEFAULT_SMALL_JUMP_CUTOFF))
            }
        };
        Self::new(measure, zeta, cutoff)
    }

    pub fn null() -> Self {
        Self {
            measure: LevyMeasure::null(),
            zeta: T::one(),
            small_jump_cutoff: T::zero(),
        }
    }

    /// Berry-Esseen type bound `int_0^kappa z^3 nu / (int_0^kappa z^2 nu)^{3/2} / sqrt(dt)`
    /// on the Kolmogorov distance committed by the Gaussian substitution over
    /// one step of length `dt`. Zero when sampling is exact.
    pub fn gaussian_substitution_bound(&self, dt: T) -> T {
        let kappa = self.small_jump_cutoff;
        if kappa == T::zero() || matches!(self.measure, LevyMeasure::CompoundPoisson { .. }) {
            return T::zero();
        }
        let third = match self.measure {
            LevyMeasure::Stable { alpha, c } => c * kappa.powf(T::lit(3.0) - alpha) / (T::lit(3.0) - alpha),
            LevyMeasure::TruncatedStable { alpha, c, cutoff } => {
                c * kappa.min(cutoff).powf(T::lit(3.0) - alpha) / (T::lit(3.0) - alpha)
            }
            LevyMeasure::TemperedStable { alpha, c, lambda } => {
                let a = alpha.as_f64();
                let l = lambda.as_f64();
                T::lit(c.as_f64() * l.powf(a - 3.0) * special::lower_gamma(3.0 - a, l * kappa.as_f64()))
            }
            LevyMeasure::CompoundPoisson { .. } => unreachable!(),
        };
        let second = self.measure.small_second_moment(kappa).expect("positive cutoff");
        third / second.powf(T::lit(1.5)) / dt.sqrt()
    }
}

/// Fine-grid increments of `W` and `L` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid<T> {
    pub horizon: T,
    pub dw: Vec<T>,
    pub dl: Vec<T>,
    pub seed_id: SeedId,
}

impl<T: Real> NoiseGrid<T> {
    pub fn n_fine(&self) -> usize {
        self.dw.len()
    }

    pub fn dt(&self) -> T {
        self.horizon / T::from_usize(self.n_fine()).expect("step count")
    }

    /// Block-summed grid with `m` steps, built by repeated pairwise halving so
    /// that nested coarsenings agree bitwise.
    pub fn coarsen(&self, m: usize) -> Result<NoiseGrid<T>, SamplerError> {
        let n = self.n_fine();
        if m == 0 || n % m != 0 || !m.is_power_of_two() {
            return Err(SamplerError::NonDividingLevel { level: m, n_fine: n });
        }
        let mut dw = self.dw.clone();
        let mut dl = self.dl.clone();
        while dw.len() > m {
            halve(&mut dw);
            halve(&mut dl);
        }
        Ok(NoiseGrid {
            horizon: self.horizon,
            dw,
            dl,
            seed_id: self.seed_id,
        })
    }
}

/// Replaces `v` by the sums of its adjacent pairs.
pub(crate) fn halve<T: Real>(v: &mut Vec<T>) {
    let half = v.len() / 2;
    for j in 0..half {
        v[j] = v[2 * j] + v[2 * j + 1];
    }
    v.truncate(half);
}

/// Pairwise (tree) sum of a power-of-two length block; the summation order
/// used by [`NoiseGrid::coarsen`].
pub fn pairwise_sum<T: Real>(block: &[T]) -> T {
    match block.len() {
        0 => T::zero(),
        1 => block[0],
        n => {
            let (a, b) = block.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[inline]
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// `S_alpha(1, 1, 0)` draw (Chambers-Mallows-Stuck, Weron's form).
#[derive(Debug, Clone, Copy)]
struct SkewedStable {
    alpha: f64,
    shift: f64,
    lead: f64,
}

impl SkewedStable {
    fn new(alpha: f64) -> Self {
        let tan = (std::f64::consts::FRAC_PI_2 * alpha).tan();
        Self {
            alpha,
            shift: (tan.atan()) / alpha,
            lead: (1.0 + tan * tan).powf(0.5 / alpha),
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = std::f64::consts::PI * (open_unit(rng) - 0.5);
        let w: f64 = Exp1.sample(rng);
        let a = self.alpha;
        let av = a * (v + self.shift);
        self.lead * av.sin() / v.cos().powf(1.0 / a) * ((v - av).cos() / w).powf((1.0 - a) / a)
    }
}

/// Unit-time scale of the stable increment for `nu(dz) = c z^{-1-alpha} dz`.
pub fn stable_unit_scale(alpha: f64, c: f64) -> f64 {
    // Gamma(-alpha) = Gamma(2 - alpha) / (alpha (alpha - 1)) > 0 on (1, 2).
    let gamma_neg = special::gamma_fn(2.0 - alpha) / (alpha * (alpha - 1.0));
    let sigma_alpha = -c * gamma_neg * (std::f64::consts::FRAC_PI_2 * alpha).cos();
    sigma_alpha.powf(1.0 / alpha)
}

/// Draws increments of the compensated Levy process over consecutive steps
/// of a fixed length.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    dt: f64,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Null,
    Stable {
        generator: SkewedStable,
        scale: f64,
    },
    CompoundPoisson {
        rate: f64,
        law: JumpLaw<f64>,
        compensator: f64,
    },
    /// Jumps above `kappa` plus a Gaussian for the rest.
    Thresholded {
        alpha: f64,
        kappa: f64,
        /// Intensity of the Pareto proposal `c z^{-1-alpha}` on `[kappa, inf)`.
        proposal_rate: f64,
        filter: JumpFilter,
        small_sd: f64,
        compensator: f64,
    },
}

#[derive(Debug, Clone, Copy)]
enum JumpFilter {
    None,
    Tempered(f64),
    Truncated(f64),
}

impl IncrementSampler {
    pub fn new<T: Real>(process: &LevyProcess<T>, dt: T) -> Self {
        let dt = dt.as_f64();
        let kappa = process.small_jump_cutoff.as_f64();
        let kind = match process.measure {
            _ if process.measure.is_null() => SamplerKind::Null,
            LevyMeasure::Stable { alpha, c } if kappa == 0.0 => {
                let alpha = alpha.as_f64();
                SamplerKind::Stable {
                    generator: SkewedStable::new(alpha),
                    scale: stable_unit_scale(alpha, c.as_f64()) * dt.powf(1.0 / alpha),
                }
            }
            LevyMeasure::CompoundPoisson { rate, jump_law } => {
                let law = map_law(jump_law);
                SamplerKind::CompoundPoisson {
                    rate: rate.as_f64(),
                    law,
                    compensator: rate.as_f64() * law.mean() * dt,
                }
            }
            LevyMeasure::Stable { alpha, c }
            | LevyMeasure::TemperedStable { alpha, c, .. }
            | LevyMeasure::TruncatedStable { alpha, c, .. } => {
                let m = process.measure;
                let alpha = alpha.as_f64();
                let k = T::lit(kappa);
                let filter = match m {
                    LevyMeasure::TemperedStable { lambda, .. } => JumpFilter::Tempered(lambda.as_f64()),
                    LevyMeasure::TruncatedStable { cutoff, .. } => JumpFilter::Truncated(cutoff.as_f64()),
                    _ => JumpFilter::None,
                };
                SamplerKind::Thresholded {
                    alpha,
                    kappa,
                    proposal_rate: c.as_f64() * kappa.powf(-alpha) / alpha,
                    filter,
                    small_sd: (m.small_second_moment(k).expect("positive cutoff").as_f64() * dt).sqrt(),
                    compensator: m.tail_first_moment(k).expect("positive cutoff").as_f64() * dt,
                }
            }
        };
        Self { dt, kind }
    }

    /// Fills `out` with increments over consecutive steps of length `dt`.
    pub fn fill<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [T]) {
        let n = out.len();
        match &self.kind {
            SamplerKind::Null => out.iter_mut().for_each(|x| *x = T::zero()),
            SamplerKind::Stable { generator, scale } => {
                for x in out.iter_mut() {
                    *x = T::lit(scale * generator.sample(rng));
                }
            }
            SamplerKind::CompoundPoisson { rate, law, compensator } => {
                let mut acc = vec![-compensator; n];
                let count = poisson(rng, rate * self.dt * n as f64);
                for _ in 0..count {
                    let slot = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
                    acc[slot] += sample_jump(law, rng);
                }
                out.iter_mut().zip(acc).for_each(|(x, a)| *x = T::lit(a));
            }
            SamplerKind::Thresholded {
                alpha,
                kappa,
                proposal_rate,
                filter,
                small_sd,
                compensator,
            } => {
                let mut acc: Vec<f64> = (0..n)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(rng);
                        small_sd * g - compensator
                    })
                    .collect();
                let count = poisson(rng, proposal_rate * self.dt * n as f64);
                let inv_alpha = -1.0 / alpha;
                for _ in 0..count {
                    let slot = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
                    let z = kappa * open_unit(rng).powf(inv_alpha);
                    let keep = match *filter {
                        JumpFilter::None => true,
                        JumpFilter::Truncated(cutoff) => z < cutoff,
                        JumpFilter::Tempered(lambda) => rng.random::<f64>() < (-lambda * z).exp(),
                    };
                    if keep {
                        acc[slot] += z;
                    }
                }
                out.iter_mut().zip(acc).for_each(|(x, a)| *x = T::lit(a));
            }
        }
    }
}

fn map_law<T: Real>(law: JumpLaw<T>) -> JumpLaw<f64> {
    match law {
        JumpLaw::Exponential { mean } => JumpLaw::Exponential { mean: mean.as_f64() },
        JumpLaw::Pareto { exponent, min } => JumpLaw::Pareto {
            exponent: exponent.as_f64(),
            min: min.as_f64(),
        },
        JumpLaw::PointMass { size } => JumpLaw::PointMass { size: size.as_f64() },
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    draw as u64
}

fn sample_jump<R: Rng + ?Sized>(law: &JumpLaw<f64>, rng: &mut R) -> f64 {
    match *law {
        JumpLaw::Exponential { mean } => {
            let e: f64 = Exp1.sample(rng);
            mean * e
        }
        JumpLaw::Pareto { exponent, min } => min * open_unit(rng).powf(-1.0 / exponent),
        JumpLaw::PointMass { size } => size,
    }
}

fn check_grid<T: Real>(horizon: T, n_fine: usize) -> Result<(), SamplerError> {
    if !(horizon > T::zero() && horizon.is_finite()) {
        return Err(SamplerError::InvalidHorizon(horizon.as_f64()));
    }
    if n_fine == 0 || !n_fine.is_power_of_two() {
        return Err(SamplerError::NotPowerOfTwo(n_fine));
    }
    Ok(())
}

/// One joint draw of `(dW, dL)` on `n_fine` equal steps of `[0, horizon]`.
///
/// The stream is fully determined by `seed_id`: Brownian increments are drawn
/// first, then the Levy increments.
pub fn sample_noise_grid<T: Real>(
    process: &LevyProcess<T>,
    horizon: T,
    n_fine: usize,
    seed_id: SeedId,
) -> Result<NoiseGrid<T>, SamplerError> {
    check_grid(horizon, n_fine)?;
    let dt = horizon / T::from_usize(n_fine).expect("step count");
    let sampler = IncrementSampler::new(process, dt);
    let mut rng = rng::stream(seed_id);
    let sd = dt.as_f64().sqrt();
    let dw: Vec<T> = (0..n_fine)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            T::lit(sd * g)
        })
        .collect();
    let mut dl = vec![T::zero(); n_fine];
    sampler.fill(&mut rng, &mut dl);
    Ok(NoiseGrid {
        horizon,
        dw,
        dl,
        seed_id,
    })
}

fn l1_scaling_slope(samples: impl Fn(usize, f64, u64) -> f64, horizon: f64, trials: usize) -> f64 {
    let pts: Vec<(f64, f64)> = ZETA_DYADIC_LEVELS
        .map(|k| {
            let h = horizon / f64::from(1u32 << k);
            let mean_abs = samples(trials, h, u64::from(k));
            (h.ln(), mean_abs.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Step sizes `horizon / 2^k` probed by the increment-exponent fits.
pub const ZETA_DYADIC_LEVELS: std::ops::RangeInclusive<u32> = 3..=10;

/// Fitted exponent of `E|L_{t+h} - L_t|` against `h` over `h = horizon / 2^k`.
pub fn empirical_zeta<T: Real>(process: &LevyProcess<T>, horizon: T, trials: usize, root_seed: u64) -> T {
    let slope = l1_scaling_slope(
        |trials, h, k| {
            let sampler = IncrementSampler::new(process, T::lit(h));
            let mut rng = rng::stream(rng::derive_seed_id(root_seed, rng::domain::DIAGNOSTICS, k));
            let mut buf = vec![0.0f64; trials];
            // Independent single-step increments: one `fill` call per draw.
            for x in buf.iter_mut() {
                let mut one = [0.0f64];
                sampler.fill(&mut rng, &mut one);
                *x = one[0].abs();
            }
            buf.iter().sum::<f64>() / trials as f64
        },
        horizon.as_f64(),
        trials,
    );
    T::lit(slope)
}

/// The same fit for standard Brownian motion.
pub fn empirical_zeta_brownian<T: Real>(horizon: T, trials: usize, root_seed: u64) -> T {
    let slope = l1_scaling_slope(
        |trials, h, k| {
            let mut rng = rng::stream(rng::derive_seed_id(root_seed, rng::domain::DIAGNOSTICS, 1000 + k));
            let sd = h.sqrt();
            (0..trials)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    (sd * g).abs()
                })
                .sum::<f64>()
                / trials as f64
        },
        horizon.as_f64(),
        trials,
    );
    T::lit(slope)
}
