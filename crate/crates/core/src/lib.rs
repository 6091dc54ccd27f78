//! Euler-Maruyama simulation of SDEs driven by a Brownian motion and a
//! spectrally positive Levy process, with tools to estimate strong
//! convergence rates and compare them against their Holder-regime
//! predictions.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, or `f32` with the `32` suffix.

pub mod diagnostics;
pub mod em_engine;
pub mod levy_measures;
pub mod levy_sampler;
pub mod quadrature;
pub mod rate_lab;
pub mod rng;
pub mod scalar;
pub mod sde_model;
pub mod special;
pub mod stats;
pub mod yw_kit;

pub use em_engine::{coupled_em_family, em_path, oracle_linear, EmError, EmPath, TimeGrid};
pub use levy_measures::{JumpLaw, LevyMeasure, MeasureError};
pub use levy_sampler::{sample_noise_grid, IncrementSampler, LevyProcess, NoiseGrid, SamplerError};
pub use rate_lab::{estimate_strong_error, predict_diffusion_baseline, predict_rate, EpsMargin, RatePrediction, RateReport, Regime};
pub use scalar::Real;
pub use sde_model::{validate_assumptions, AlphaCirParams, CoefficientSpec, ModelError, Preset, SdeModel, ValidationReport};
pub use yw_kit::{PsiVariant, YwFunction, YwParams};

pub type LevyMeasure64 = LevyMeasure<f64>;
pub type LevyMeasure32 = LevyMeasure<f32>;
pub type LevyProcess64 = LevyProcess<f64>;
pub type LevyProcess32 = LevyProcess<f32>;
pub type NoiseGrid64 = NoiseGrid<f64>;
pub type NoiseGrid32 = NoiseGrid<f32>;
pub type SdeModel64 = SdeModel<f64>;
pub type SdeModel32 = SdeModel<f32>;
pub type EmPath64 = EmPath<f64>;
pub type EmPath32 = EmPath<f32>;
pub type YwFunction64 = YwFunction<f64>;
pub type YwFunction32 = YwFunction<f32>;
