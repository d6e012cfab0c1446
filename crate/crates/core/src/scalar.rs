use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating point field the geometry is generic over (`f32`, `f64`).
///
/// Every tolerance quoted in the test-suite assumes `f64`; `f32` is supported
/// for evaluating deformations where single precision is enough.
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Logistic squash `1 / (1 + e^{-x})`.
#[inline]
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`logistic`]; `p` is clamped away from 0 and 1.
pub fn logit<T: Real>(p: T) -> T {
    let eps = lit::<T>(1e-12);
    let p = p.max(eps).min(T::one() - eps);
    (p / (T::one() - p)).ln()
}
