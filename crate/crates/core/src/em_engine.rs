//! The Euler-Maruyama scheme on nested dyadic grids and its oracles.
//!
//! `X_{t_{i+1}} = X_{t_i} + b(X_{t_i}) dt + sigma(X_{t_i}) dW_i + h(X_{t_i}) dL_i`.
//! A level-`n` path reads only the block sums of the fine increments, so all
//! levels built from one [`NoiseGrid`] are coupled on the same sample.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use thiserror::Error;

use crate::levy_sampler::{halve, NoiseGrid, SamplerError};
use crate::rng::{self, SeedId};
use crate::scalar::Real;
use crate::sde_model::{Preset, SdeModel};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmError {
    #[error("model horizon {model} differs from noise horizon {noise}")]
    HorizonMismatch { model: f64, noise: f64 },
    #[error("level {level} does not divide the fine step count {n_fine}")]
    NonDividingLevel { level: usize, n_fine: usize },
    #[error("levels must be strictly increasing")]
    UnsortedLevels,
    #[error("operation needs the {expected} preset, got {got}")]
    WrongPreset { expected: &'static str, got: &'static str },
    #[error("invalid CIR parameters: {0}")]
    InvalidCir(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// `n` equal steps of `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    pub horizon: T,
    pub steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn dt(&self) -> T {
        self.horizon / T::from_usize(self.steps).expect("step count")
    }

    pub fn time(&self, i: usize) -> T {
        self.horizon * T::from_usize(i).expect("index") / T::from_usize(self.steps).expect("step count")
    }

    /// Left grid point `eta_n(s) = t_j` for `s in (t_j, t_{j+1}]`, with `eta_n(0) = 0`.
    pub fn eta(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        let scaled = (s / self.dt()).ceil().to_usize().unwrap_or(self.steps);
        self.time(scaled.clamp(1, self.steps) - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmPath<T> {
    pub grid: TimeGrid<T>,
    /// `X_{t_0}, ..., X_{t_n}`.
    pub values: Vec<T>,
    pub seed_id: SeedId,
}

impl<T: Real> EmPath<T> {
    pub fn terminal(&self) -> T {
        *self.values.last().expect("a path has at least its initial value")
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn same_horizon<T: Real>(model: T, noise: T) -> Result<(), EmError> {
    let tol = T::epsilon() * T::lit(16.0) * model.abs().max(T::one());
    if (model - noise).abs() > tol {
        return Err(EmError::HorizonMismatch {
            model: model.as_f64(),
            noise: noise.as_f64(),
        });
    }
    Ok(())
}

/// Runs the scheme on raw increment slices (step `dt`).
pub fn em_values<T: Real>(model: &SdeModel<T>, dt: T, dw: &[T], dl: &[T]) -> Vec<T> {
    let c = &model.coeffs;
    let mut values = Vec::with_capacity(dw.len() + 1);
    let mut x = model.x0;
    values.push(x);
    for (&w, &l) in dw.iter().zip(dl) {
        x = x + c.drift(x) * dt + (c.sigma)(x) * w + (c.h)(x) * l;
        values.push(x);
    }
    values
}

/// Euler-Maruyama on the grid of `noise`.
pub fn em_path<T: Real>(model: &SdeModel<T>, noise: &NoiseGrid<T>) -> Result<EmPath<T>, EmError> {
    same_horizon(model.horizon, noise.horizon)?;
    let grid = TimeGrid {
        horizon: model.horizon,
        steps: noise.n_fine(),
    };
    Ok(EmPath {
        grid,
        values: em_values(model, grid.dt(), &noise.dw, &noise.dl),
        seed_id: noise.seed_id,
    })
}

fn check_levels(levels: &[usize], n_fine: usize) -> Result<(), EmError> {
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EmError::UnsortedLevels);
    }
    for &level in levels {
        if level == 0 || !level.is_power_of_two() || n_fine % level != 0 {
            return Err(EmError::NonDividingLevel { level, n_fine });
        }
    }
    Ok(())
}

/// Coupled paths at every level plus the fine level itself, all driven by
/// block sums of the same fine increments. Coarsening is incremental, so the
/// result agrees bitwise with `em_path(model, &noise.coarsen(level))`.
pub fn coupled_em_family<T: Real>(
    model: &SdeModel<T>,
    noise: &NoiseGrid<T>,
    levels: &[usize],
) -> Result<BTreeMap<usize, EmPath<T>>, EmError> {
    same_horizon(model.horizon, noise.horizon)?;
    let n_fine = noise.n_fine();
    check_levels(levels, n_fine)?;
    let mut out = BTreeMap::new();
    let mut dw = noise.dw.clone();
    let mut dl = noise.dl.clone();
    let mut wanted: Vec<usize> = levels.to_vec();
    if !wanted.contains(&n_fine) {
        wanted.push(n_fine);
    }
    wanted.sort_unstable();
    for &level in wanted.iter().rev() {
        while dw.len() > level {
            halve(&mut dw);
            halve(&mut dl);
        }
        let grid = TimeGrid {
            horizon: model.horizon,
            steps: level,
        };
        out.insert(
            level,
            EmPath {
                grid,
                values: em_values(model, grid.dt(), &dw, &dl),
                seed_id: noise.seed_id,
            },
        );
    }
    Ok(out)
}

/// Closed-form terminal value of the linear model on the fine grid:
/// `c + (x0 - c) e^{-aT} + sum_i e^{-a(T - t_{i+1})} (sigma0 dW_i + h0 dL_i)`.
pub fn oracle_linear<T: Real>(model: &SdeModel<T>, noise: &NoiseGrid<T>) -> Result<T, EmError> {
    let Preset::LinearJumpOu { a, c, sigma0, h0 } = model.preset else {
        return Err(EmError::WrongPreset {
            expected: "linear_jump_ou",
            got: model.id(),
        });
    };
    same_horizon(model.horizon, noise.horizon)?;
    let t = model.horizon;
    let n = noise.n_fine();
    let dt = noise.dt();
    let mut acc = T::zero();
    let mut comp = T::zero();
    for i in 0..n {
        let t_next = dt * T::from_usize(i + 1).expect("index");
        let term = (-a * (t - t_next)).exp() * (sigma0 * noise.dw[i] + h0 * noise.dl[i]);
        // Neumaier summation keeps the oracle well below EM errors.
        let s = acc + term;
        comp = comp + if acc.abs() >= term.abs() { (acc - s) + term } else { (term - s) + acc };
        acc = s;
    }
    Ok(c + (model.x0 - c) * (-a * t).exp() + acc + comp)
}

/// One exact draw of the CIR marginal `X_t` given `X_0 = x0` through the
/// Poisson mixture of gammas representing the noncentral chi-square law.
pub fn sample_cir_marginal<R: Rng + ?Sized>(
    a: f64,
    c: f64,
    sigma0: f64,
    x0: f64,
    t: f64,
    rng: &mut R,
) -> Result<f64, EmError> {
    if !(a > 0.0 && c > 0.0 && sigma0 >= 0.0 && x0 >= 0.0 && t >= 0.0) || ![a, c, sigma0, x0, t].iter().all(|v| v.is_finite()) {
        return Err(EmError::InvalidCir(format!(
            "a={a}, c={c}, sigma0={sigma0}, x0={x0}, t={t}"
        )));
    }
    let decay = (-a * t).exp();
    if t == 0.0 {
        return Ok(x0);
    }
    if sigma0 == 0.0 {
        return Ok(c + (x0 - c) * decay);
    }
    let scale = sigma0 * sigma0 * (1.0 - decay) / (4.0 * a);
    let dof = 4.0 * a * c / (sigma0 * sigma0);
    let noncentrality = x0 * decay / scale;
    let mixing = if noncentrality > 0.0 {
        let p: f64 = Poisson::new(noncentrality / 2.0).expect("positive mean").sample(rng);
        p
    } else {
        0.0
    };
    let chi2: f64 = Gamma::new(dof / 2.0 + mixing, 2.0).expect("positive shape").sample(rng);
    Ok(scale * chi2)
}

/// Exact CIR marginal draw from the stream `seed_id`.
pub fn oracle_cir_marginal(a: f64, c: f64, sigma0: f64, x0: f64, t: f64, seed_id: SeedId) -> Result<f64, EmError> {
    sample_cir_marginal(a, c, sigma0, x0, t, &mut rng::stream(seed_id))
}

/// `E|X_{t_{j+1}} - X_{t_j}|^p` averaged over the steps of one path: the
/// left-limit increment `X_t - X_{eta_n(t)}` as `t` approaches `t_{j+1}`.
pub fn mean_step_increment<T: Real>(path: &EmPath<T>, power: T) -> T {
    let n = path.values.len() - 1;
    let total: T = path.values.windows(2).map(|w| (w[1] - w[0]).abs().powf(power)).sum();
    total / T::from_usize(n).expect("step count")
}
