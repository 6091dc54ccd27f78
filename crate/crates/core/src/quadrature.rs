//! Globally adaptive Gauss-Kronrod (10/21 point) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate meets `max(abs_tol, rel_tol * |integral|)` or the subdivision
//! budget runs out. Callers with known kinks split the range themselves and
//! integrate the smooth pieces separately.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::scalar::Real;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_745_621_542,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod abscissae.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<T> {
    pub rel: T,
    pub abs: T,
    pub max_subdivisions: usize,
}

impl<T: Real> Default for Tolerance<T> {
    fn default() -> Self {
        Self {
            rel: T::lit(1e-8).max(T::epsilon() * T::lit(100.0)),
            abs: T::lit(1e-14),
            max_subdivisions: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub abs_error: T,
    pub intervals: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature did not converge: value {value}, error estimate {error} after {intervals} intervals")]
    NotConverged {
        value: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

fn kronrod21<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Result<(T, T), QuadratureError> {
    let center = (a + b) * T::half();
    let half = (b - a) * T::half();
    let mut eval = |x: T| -> Result<T, QuadratureError> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { at: x.as_f64() })
        }
    };
    let fc = eval(center)?;
    let mut res_k = fc * T::lit(WGK[10]);
    let mut res_g = T::zero();
    for j in 0..10 {
        let dx = half * T::lit(XGK[j]);
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        res_k = res_k + T::lit(WGK[j]) * (f1 + f2);
        if j % 2 == 1 {
            res_g = res_g + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let value = res_k * half;
    let error = ((res_k - res_g) * half).abs();
    Ok((value, error))
}

/// Integrates `f` over `[a, b]`. The endpoints are never evaluated.
pub fn integrate<T, F>(mut f: F, a: T, b: T, tol: Tolerance<T>) -> Result<Estimate<T>, QuadratureError>
where
    T: Real,
    F: FnMut(T) -> T,
{
    if a == b {
        return Ok(Estimate {
            value: T::zero(),
            abs_error: T::zero(),
            intervals: 0,
        });
    }
    if b < a {
        let est = integrate(f, b, a, tol)?;
        return Ok(Estimate {
            value: -est.value,
            ..est
        });
    }
    let (value, error) = kronrod21(&mut f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut intervals = 1;
    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if total_err <= target {
            break;
        }
        if intervals >= tol.max_subdivisions {
            return Err(QuadratureError::NotConverged {
                value: total.as_f64(),
                error: total_err.as_f64(),
                intervals,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = (worst.a + worst.b) * T::half();
        if mid <= worst.a || mid >= worst.b {
            // Interval exhausted at working precision; accept what we have.
            heap.push(worst);
            return Err(QuadratureError::NotConverged {
                value: total.as_f64(),
                error: total_err.as_f64(),
                intervals,
            });
        }
        let (v1, e1) = kronrod21(&mut f, worst.a, mid)?;
        let (v2, e2) = kronrod21(&mut f, mid, worst.b)?;
        total = total - worst.value + v1 + v2;
        total_err = total_err - worst.error + e1 + e2;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        intervals += 1;
        // Resum occasionally so incremental updates do not drift.
        if intervals % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    Ok(Estimate {
        value: total,
        abs_error: total_err,
        intervals,
    })
}

/// Integrates `f` over consecutive breakpoints, each piece to the same tolerance.
pub fn integrate_pieces<T, F>(mut f: F, points: &[T], tol: Tolerance<T>) -> Result<Estimate<T>, QuadratureError>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let mut out = Estimate {
        value: T::zero(),
        abs_error: T::zero(),
        intervals: 0,
    };
    for w in points.windows(2) {
        let est = integrate(&mut f, w[0], w[1], tol)?;
        out.value = out.value + est.value;
        out.abs_error = out.abs_error + est.abs_error;
        out.intervals += est.intervals;
    }
    Ok(out)
}

/// `int_a^inf f(z) dz` through the substitution `z = a / t`, `t in (0, 1]`.
pub fn integrate_to_infinity<T, F>(mut f: F, a: T, tol: Tolerance<T>) -> Result<Estimate<T>, QuadratureError>
where
    T: Real,
    F: FnMut(T) -> T,
{
    assert!(a > T::zero(), "lower limit must be positive");
    integrate(
        |t: T| {
            let z = a / t;
            let v = f(z) * a / (t * t);
            if v.is_finite() {
                v
            } else {
                T::zero()
            }
        },
        T::zero(),
        T::one(),
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let est = integrate(|x: f64| 3.0 * x * x - x + 2.0, -1.0, 2.0, Tolerance::default()).unwrap();
        assert!((est.value - (8.0 + 1.0 - 1.5 + 6.0)).abs() < 1e-13);
        assert_eq!(est.intervals, 1);
    }

    #[test]
    fn endpoint_singularity_converges() {
        // int_0^1 x^{-1/2} dx = 2
        let est = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((est.value - 2.0).abs() < 1e-7, "{}", est.value);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let fwd = integrate(|x: f64| x.sin(), 0.0, 1.0, Tolerance::default()).unwrap();
        let back = integrate(|x: f64| x.sin(), 1.0, 0.0, Tolerance::default()).unwrap();
        assert_eq!(fwd.value, -back.value);
    }

    #[test]
    fn semi_infinite_exponential() {
        let est = integrate_to_infinity(|z: f64| (-z).exp(), 0.5, Tolerance::default()).unwrap();
        assert!((est.value - (-0.5f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let err = integrate(|x: f64| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, Tolerance::default());
        assert!(matches!(err, Err(QuadratureError::NonFinite { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let tol = Tolerance { rel: 1e-5f32, abs: 1e-7, max_subdivisions: 200 };
        let est = integrate(|x: f32| x.exp(), 0.0, 1.0, tol).unwrap();
        assert!((est.value - (1f32.exp() - 1.0)).abs() < 1e-5);
    }
}
