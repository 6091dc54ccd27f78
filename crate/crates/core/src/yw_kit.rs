//! Yamada-Watanabe smoothing functions and numerical checks of the two jump
//! inequalities they satisfy.
//!
//! `psi` is supported on `[eps/delta, eps]` with unit mass and
//! `0 <= psi(z) <= 2 / (z ln delta)`; `phi(x) = int_0^|x| int_0^y psi`.
//! On each piece of its support `psi(z) = (p / z + q) / (ln(delta) N)`, which
//! makes `phi'`, `phi` and the Bregman remainder
//! `D(w, y) = phi(w) - phi(y) - (w - y) phi'(y)` available in closed form.
//! `D` is assembled piece by piece from non-negative terms, so lemma
//! integrands keep full relative accuracy as `z -> 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levy_measures::{LevyMeasure, MeasureError};
use crate::quadrature::{QuadratureError, Tolerance};
use crate::rng;
use crate::scalar::Real;
use crate::special::xlogx_remainder;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiVariant<T> {
    /// `psi(z) = 1 / (z ln delta)` on the support.
    ClosedForm,
    /// The closed-form density times a trapezoidal bump whose ramps each
    /// take `ramp` of the support, renormalised to unit mass.
    Mollified { ramp: T },
}

impl<T: Real> PsiVariant<T> {
    pub fn label(&self) -> String {
        match self {
            PsiVariant::ClosedForm => "closed_form".to_string(),
            PsiVariant::Mollified { ramp } => format!("mollified({ramp})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YwParams<T> {
    pub delta: T,
    pub epsilon: T,
    pub variant: PsiVariant<T>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum YwError {
    #[error("delta must exceed 1, got {0}")]
    InvalidDelta(f64),
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("ramp fraction must lie in (0, 1/2), got {0}")]
    InvalidRamp(f64),
    #[error("mollified psi would exceed 2/(z ln delta): normalisation {0} is below 1/2")]
    BoundViolated(f64),
    #[error("the same-sign inequality needs x*y >= 0 and y != 0")]
    NotSameSign,
    #[error("u must be positive, got {0}")]
    InvalidU(f64),
    #[error("u = infinity needs a square-integrable Levy measure")]
    InfiniteUNotAdmissible,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece<T> {
    start: T,
    end: T,
    p: T,
    q: T,
    /// `phi'` and `phi` at `start`.
    slope_at_start: T,
    value_at_start: T,
}

/// A constructed `phi_{delta, eps}` with its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct YwFunction<T> {
    params: YwParams<T>,
    /// `ln(delta) * N`.
    scale: T,
    norm: T,
    pieces: Vec<Piece<T>>,
    /// Signed kinks of `phi''`, increasing.
    kinks: Vec<T>,
    value_at_eps: T,
}

impl<T: Real> YwParams<T> {
    pub fn new(delta: T, epsilon: T, variant: PsiVariant<T>) -> Self {
        Self {
            delta,
            epsilon,
            variant,
        }
    }

    pub fn build(&self) -> Result<YwFunction<T>, YwError> {
        YwFunction::new(*self)
    }
}

impl<T: Real> YwFunction<T> {
    pub fn new(params: YwParams<T>) -> Result<Self, YwError> {
        let YwParams { delta, epsilon, variant } = params;
        if !(delta > T::one() && delta.is_finite()) {
            return Err(YwError::InvalidDelta(delta.as_f64()));
        }
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(YwError::InvalidEpsilon(epsilon.as_f64()));
        }
        let a = epsilon / delta;
        let b = epsilon;
        let log_delta = delta.ln();
        // (start, end, p, q)
        let raw: Vec<(T, T, T, T)> = match variant {
            PsiVariant::ClosedForm => vec![(a, b, T::one(), T::zero())],
            PsiVariant::Mollified { ramp } => {
                if !(ramp > T::zero() && ramp < T::half()) {
                    return Err(YwError::InvalidRamp(ramp.as_f64()));
                }
                let w = ramp * (b - a);
                vec![
                    (a, a + w, -a / w, T::one() / w),
                    (a + w, b - w, T::one(), T::zero()),
                    (b - w, b, b / w, -T::one() / w),
                ]
            }
        };
        let norm = raw
            .iter()
            .map(|&(s, e, p, q)| (p * (e / s).ln() + q * (e - s)) / log_delta)
            .fold(T::zero(), |acc, v| acc + v);
        // The bump peaks at 1, so psi <= 2/(z ln delta) iff N >= 1/2.
        if norm < T::half() {
            return Err(YwError::BoundViolated(norm.as_f64()));
        }
        let scale = log_delta * norm;
        let mut pieces = Vec::with_capacity(raw.len());
        let (mut slope, mut value) = (T::zero(), T::zero());
        for &(start, end, p, q) in &raw {
            pieces.push(Piece {
                start,
                end,
                p,
                q,
                slope_at_start: slope,
                value_at_start: value,
            });
            let len = end - start;
            value = value + slope * len + local_remainder(p, q, scale, start, end);
            slope = (slope + (p * (end / start).ln() + q * len) / scale).min(T::one());
        }
        let mut kinks: Vec<T> = Vec::with_capacity(2 * raw.len() + 2);
        kinks.push(a);
        kinks.extend(raw.iter().map(|r| r.1));
        let negated: Vec<T> = kinks.iter().rev().map(|&k| -k).collect();
        let kinks = negated.into_iter().chain(kinks).collect();
        Ok(Self {
            params,
            scale,
            norm,
            pieces,
            kinks,
            value_at_eps: value,
        })
    }

    pub fn params(&self) -> &YwParams<T> {
        &self.params
    }

    /// Normalising constant `N` of the bump (1 for the closed form).
    pub fn normalisation(&self) -> T {
        self.norm
    }

    /// Signed points where `phi''` is not smooth, increasing.
    pub fn kinks(&self) -> &[T] {
        &self.kinks
    }

    fn lower(&self) -> T {
        self.params.epsilon / self.params.delta
    }

    fn upper(&self) -> T {
        self.params.epsilon
    }

    fn piece_at(&self, r: T) -> Option<&Piece<T>> {
        if r < self.lower() || r > self.upper() {
            return None;
        }
        self.pieces
            .iter()
            .find(|pc| r <= pc.end)
            .or_else(|| self.pieces.last())
    }

    pub fn psi(&self, z: T) -> T {
        match self.piece_at(z) {
            Some(pc) if z > T::zero() => ((pc.p / z + pc.q) / self.scale).max(T::zero()),
            _ => T::zero(),
        }
    }

    /// `phi'` on `[0, inf)`.
    fn slope_abs(&self, r: T) -> T {
        if r <= self.lower() {
            return T::zero();
        }
        if r >= self.upper() {
            return T::one();
        }
        let pc = self.piece_at(r).expect("inside the support");
        let inc = (pc.p * (r / pc.start).ln() + pc.q * (r - pc.start)) / self.scale;
        (pc.slope_at_start + inc).min(T::one())
    }

    fn value_abs(&self, r: T) -> T {
        if r <= self.lower() {
            return T::zero();
        }
        if r >= self.upper() {
            return r - self.upper() + self.value_at_eps;
        }
        let pc = self.piece_at(r).expect("inside the support");
        pc.value_at_start + pc.slope_at_start * (r - pc.start) + local_remainder(pc.p, pc.q, self.scale, pc.start, r)
    }

    pub fn phi(&self, x: T) -> T {
        self.value_abs(x.abs())
    }

    pub fn phi_prime(&self, x: T) -> T {
        let s = self.slope_abs(x.abs());
        if x < T::zero() {
            -s
        } else {
            s
        }
    }

    pub fn phi_double_prime(&self, x: T) -> T {
        self.psi(x.abs())
    }

    /// `D(w, y) = phi(w) - phi(y) - (w - y) phi'(y)`, summed over the kinks
    /// between `y` and `w` so that every term is non-negative.
    pub fn bregman(&self, w: T, y: T) -> T {
        if w == y {
            return T::zero();
        }
        let slope_y = self.phi_prime(y);
        let mut total = T::zero();
        let mut prev = y;
        let step = |next: T, prev: T, total: &mut T| {
            *total = *total + self.bregman_within(prev, next);
            if prev != y {
                *total = *total + (self.phi_prime(prev) - slope_y) * (next - prev);
            }
        };
        if y < w {
            for &k in self.kinks.iter().filter(|&&k| k > y && k < w) {
                step(k, prev, &mut total);
                prev = k;
            }
        } else {
            for &k in self.kinks.iter().rev().filter(|&&k| k < y && k > w) {
                step(k, prev, &mut total);
                prev = k;
            }
        }
        step(w, prev, &mut total);
        total.max(T::zero())
    }

    /// Bregman remainder for `v, w` on one side of zero with no kink between.
    fn bregman_within(&self, v: T, w: T) -> T {
        let mid = ((v + w) * T::half()).abs();
        match self.piece_at(mid) {
            Some(pc) if mid > self.lower() && mid < self.upper() => {
                let (va, wa) = (v.abs(), w.abs());
                local_remainder(pc.p, pc.q, self.scale, va, wa)
            }
            _ => T::zero(),
        }
    }

    /// `(A, B)` with `D(y + x z, y) = A + B z` once `y + x z` is past every kink.
    fn linear_tail(&self, x: T, y: T) -> (T, T) {
        if x == T::zero() {
            return (T::zero(), T::zero());
        }
        let sgn = x.signum();
        if y * sgn >= self.upper() {
            return (T::zero(), T::zero());
        }
        let a = sgn * y - self.upper() + self.value_at_eps - self.phi(y);
        let b = x * (sgn - self.phi_prime(y));
        (a, b)
    }

    /// Values of `z > 0` where `y + x z` meets a kink.
    fn crossings(&self, x: T, y: T) -> impl Iterator<Item = T> + '_ {
        self.kinks
            .iter()
            .filter(move |_| x != T::zero())
            .map(move |&k| (k - y) / x)
            .filter(|&z| z > T::zero() && z.is_finite())
    }
}

/// `int_v^w (Psi(t) - Psi(v)) dt` for `Psi' = (p / t + q) / scale` on `[v, w]`.
fn local_remainder<T: Real>(p: T, q: T, scale: T, v: T, w: T) -> T {
    let h = w - v;
    ((p * v * xlogx_remainder(h / v) + q * h * h * T::half()) / scale).max(T::zero())
}

/// Which of the two inequalities a check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    SameSign,
    Difference,
}

impl Lemma {
    pub fn label(&self) -> &'static str {
        match self {
            Lemma::SameSign => "same_sign",
            Lemma::Difference => "difference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaTolerance<T> {
    pub quadrature: Tolerance<T>,
    pub rel_slack: T,
    pub abs_slack: T,
}

impl<T: Real> Default for LemmaTolerance<T> {
    fn default() -> Self {
        Self {
            quadrature: Tolerance::default(),
            rel_slack: T::lit(1e-6),
            abs_slack: T::lit(1e-12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck<T> {
    pub lhs: T,
    pub rhs: T,
    pub pass: bool,
    /// For the difference inequality with `x' = 0`: the integral without the
    /// modulus, which must be non-negative.
    pub signed_lhs: Option<T>,
}

fn moments<T: Real>(measure: &LevyMeasure<T>, u: T) -> Result<(T, T), YwError> {
    if u.is_nan() || u <= T::zero() {
        return Err(YwError::InvalidU(u.as_f64()));
    }
    if u.is_infinite() {
        if !measure.is_square_integrable() {
            return Err(YwError::InfiniteUNotAdmissible);
        }
        return Ok((measure.second_moment(), T::zero()));
    }
    Ok((measure.small_second_moment(u)?, measure.tail_first_moment(u)?))
}

/// `int_0^inf g(z) nu(dz)` where `g(z) = A + B z` beyond every split point.
/// With `modulus`, integrates `|g|` and adds the sign change of the tail.
fn integrate_with_linear_tail<T, G>(
    measure: &LevyMeasure<T>,
    g: G,
    mut splits: Vec<T>,
    tail: (T, T),
    modulus: bool,
    tol: Tolerance<T>,
) -> Result<T, YwError>
where
    T: Real,
    G: Fn(T) -> T,
{
    if measure.is_null() {
        return Ok(T::zero());
    }
    splits.push(T::one());
    let mut last = splits.iter().copied().fold(T::zero(), T::max);
    let (a, b) = tail;
    if modulus && b != T::zero() {
        let root = -a / b;
        if root > last && root.is_finite() {
            splits.push(root);
            last = root;
        }
    }
    let body = if modulus {
        measure.integrate_against(|z| g(z).abs(), &splits, last, tol)?
    } else {
        measure.integrate_against(&g, &splits, last, tol)?
    };
    let tail_value = if a == T::zero() && b == T::zero() {
        T::zero()
    } else {
        let v = a * measure.tail_mass(last)? + b * measure.tail_first_moment(last)?;
        if modulus {
            v.abs()
        } else {
            v
        }
    };
    Ok(body.value + tail_value)
}

fn passes<T: Real>(lhs: T, rhs: T, tol: &LemmaTolerance<T>) -> bool {
    lhs <= rhs * (T::one() + tol.rel_slack) + tol.abs_slack
}

/// Checks `int {phi(y + x z) - phi(y) - x z phi'(y)} nu(dz)` against its bound
/// for `x y >= 0`, `y != 0`.
pub fn verify_jump_lemma_same_sign<T: Real>(
    f: &YwFunction<T>,
    measure: &LevyMeasure<T>,
    x: T,
    y: T,
    u: T,
    tol: &LemmaTolerance<T>,
) -> Result<LemmaCheck<T>, YwError> {
    if y == T::zero() || x * y < T::zero() {
        return Err(YwError::NotSameSign);
    }
    let (small2, tail1) = moments(measure, u)?;
    let YwParams { delta, epsilon, .. } = f.params;
    let rhs = if y.abs() <= epsilon {
        let weight = (T::one() / y.abs()).min(delta / epsilon);
        T::two() * (x * x / delta.ln() * weight * small2 + x.abs() * tail1)
    } else {
        T::zero()
    };
    let mut splits: Vec<T> = f.crossings(x, y).collect();
    if u.is_finite() {
        splits.push(u);
    }
    let lhs = if x == T::zero() {
        T::zero()
    } else {
        integrate_with_linear_tail(
            measure,
            |z| f.bregman(y + x * z, y),
            splits,
            f.linear_tail(x, y),
            false,
            tol.quadrature,
        )?
    };
    Ok(LemmaCheck {
        lhs,
        rhs,
        pass: passes(lhs, rhs, tol),
        signed_lhs: None,
    })
}

/// Checks `int |phi(y + x z) - phi(y + x' z) - (x - x') z phi'(y)| nu(dz)`
/// against its bound. `u` may be `+inf` for square-integrable measures.
pub fn verify_jump_lemma_difference<T: Real>(
    f: &YwFunction<T>,
    measure: &LevyMeasure<T>,
    x: T,
    x_prime: T,
    y: T,
    u: T,
    tol: &LemmaTolerance<T>,
) -> Result<LemmaCheck<T>, YwError> {
    let (small2, tail1) = moments(measure, u)?;
    let YwParams { delta, epsilon, .. } = f.params;
    let dx = (x - x_prime).abs();
    let rhs = T::two()
        * (delta * (dx * dx + x_prime.abs() * dx) / (epsilon * delta.ln()) * small2 + dx * tail1);
    let mut splits: Vec<T> = f.crossings(x, y).chain(f.crossings(x_prime, y)).collect();
    if u.is_finite() {
        splits.push(u);
    }
    let (a1, b1) = f.linear_tail(x, y);
    let (a2, b2) = f.linear_tail(x_prime, y);
    let g = |z: T| f.bregman(y + x * z, y) - f.bregman(y + x_prime * z, y);
    let lhs = if x == x_prime {
        T::zero()
    } else {
        integrate_with_linear_tail(measure, g, splits.clone(), (a1 - a2, b1 - b2), true, tol.quadrature)?
    };
    let mut pass = passes(lhs, rhs, tol);
    let signed_lhs = if x_prime == T::zero() {
        let v = if x == T::zero() {
            T::zero()
        } else {
            integrate_with_linear_tail(measure, g, splits, (a1, b1), false, tol.quadrature)?
        };
        pass = pass && v >= -tol.abs_slack && passes(v, rhs, tol);
        Some(v)
    } else {
        None
    };
    Ok(LemmaCheck {
        lhs,
        rhs,
        pass,
        signed_lhs,
    })
}

/// Aggregate of a batch of random lemma checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchSummary {
    pub lemma: Lemma,
    pub draws: usize,
    pub failures: usize,
    /// Largest `lhs - rhs` over the batch, floored at zero.
    pub max_violation: f64,
}

/// Random `(x, x', y)` for one lemma check, scaled to `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaDraw<T> {
    pub x: T,
    pub x_prime: T,
    pub y: T,
}

impl<T: Real> LemmaDraw<T> {
    /// `|y|` log-uniform on `[eps/100, 3 eps]`, `|x|, |x'|` log-uniform on
    /// `[1e-2, 10]`; `x'` is zero a quarter of the time and equal to `x` an
    /// eighth of the time. For the same-sign inequality `x` takes the sign of `y`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, epsilon: T, lemma: Lemma) -> Self {
        let sign = |rng: &mut R| if rng.random::<bool>() { 1.0 } else { -1.0 };
        let eps = epsilon.as_f64();
        let y = sign(rng) * eps * 10f64.powf(rng.random_range(-2.0..3f64.log10()));
        let mag = |rng: &mut R| 10f64.powf(rng.random_range(-2.0..1.0));
        let x = match lemma {
            Lemma::SameSign => y.signum() * mag(rng),
            Lemma::Difference => sign(rng) * mag(rng),
        };
        let pick: f64 = rng.random();
        let x_prime = if pick < 0.25 {
            0.0
        } else if pick < 0.375 {
            x
        } else {
            sign(rng) * mag(rng)
        };
        Self {
            x: T::lit(x),
            x_prime: T::lit(x_prime),
            y: T::lit(y),
        }
    }
}

/// Runs `draws` random checks of both inequalities for one `phi` and measure.
/// Draw `i` uses the stream `(root_seed, LEMMA_DRAWS, i)`.
pub fn run_lemma_batch<T: Real>(
    f: &YwFunction<T>,
    measure: &LevyMeasure<T>,
    u: T,
    draws: usize,
    root_seed: u64,
    tol: &LemmaTolerance<T>,
) -> Result<[BatchSummary; 2], YwError> {
    moments(measure, u)?;
    let mut out = [Lemma::SameSign, Lemma::Difference].map(|lemma| BatchSummary {
        lemma,
        draws,
        failures: 0,
        max_violation: 0.0,
    });
    for i in 0..draws {
        let mut rng = rng::stream(rng::derive_seed_id(root_seed, rng::domain::LEMMA_DRAWS, i as u64));
        for summary in out.iter_mut() {
            let d = LemmaDraw::sample(&mut rng, f.params.epsilon, summary.lemma);
            let check = match summary.lemma {
                Lemma::SameSign => verify_jump_lemma_same_sign(f, measure, d.x, d.y, u, tol)?,
                Lemma::Difference => verify_jump_lemma_difference(f, measure, d.x, d.x_prime, d.y, u, tol)?,
            };
            if !check.pass {
                summary.failures += 1;
            }
            summary.max_violation = summary.max_violation.max((check.lhs - check.rhs).as_f64());
        }
    }
    Ok(out)
}
