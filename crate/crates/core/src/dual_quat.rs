//! Unit dual quaternions for rigid motions.
//!
//! `real` is the rotation quaternion `q`, `dual = 1/2 (0, t) q`. A point is
//! moved by the usual sandwich with the combined (quaternion and dual)
//! conjugate, which works out to `R(q) v + 2 vec(dual * conj(q))`.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::rotation::quat_from_matrix;
use crate::scalar::{lit, Real};

/// Blend norms below this are treated as an antipodal cancellation.
pub const MIN_BLEND_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualQuaternion<T: Real> {
    pub real: Quaternion<T>,
    pub dual: Quaternion<T>,
}

impl<T: Real> DualQuaternion<T> {
    pub fn identity() -> Self {
        Self {
            real: Quaternion::identity(),
            dual: Quaternion::new(T::zero(), T::zero(), T::zero(), T::zero()),
        }
    }

    pub fn from_rotation_translation(rotation: &Quaternion<T>, translation: &Vector3<T>) -> Self {
        let t = Quaternion::from_parts(T::zero(), *translation);
        Self {
            real: *rotation,
            dual: t * rotation * lit::<T>(0.5),
        }
    }

    /// `DQ(R, t)` for a rotation matrix `R`.
    pub fn from_rigid(rotation: &Matrix3<T>, translation: &Vector3<T>) -> Self {
        Self::from_rotation_translation(quat_from_matrix(rotation).quaternion(), translation)
    }

    pub fn translation(&self) -> Vector3<T> {
        (self.dual * self.real.conjugate()).imag() * lit::<T>(2.0)
    }

    pub fn rotation(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_quaternion(self.real)
    }

    /// Moves the point `v`.
    pub fn apply(&self, v: &Vector3<T>) -> Vector3<T> {
        let p = Quaternion::from_parts(T::zero(), *v);
        (self.real * p * self.real.conjugate()).imag() + self.translation()
    }

    /// `|real| = 1` and `real . dual = 0` within `tol`.
    pub fn is_unit(&self, tol: T) -> bool {
        (self.real.norm() - T::one()).abs() <= tol && self.real.coords.dot(&self.dual.coords).abs() <= tol
    }

    fn scaled(&self, s: T) -> Self {
        Self {
            real: self.real * s,
            dual: self.dual * s,
        }
    }
}

/// Index of the largest weight, the lowest index winning ties.
pub fn pivot_of<T: Real>(weights: &[T]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate().skip(1) {
        if w > weights[best] {
            best = i;
        }
    }
    best
}

/// Weighted blend of unit dual quaternions, normalized back to a unit one.
///
/// Each input is sign-flipped onto the hemisphere of `items[pivot]` before
/// summing. The sum is divided by the norm of its real part and the dual part
/// is made orthogonal to the real part (which leaves the encoded translation
/// unchanged).
pub fn dq_blend<T: Real>(weights: &[T], items: &[DualQuaternion<T>], pivot: usize) -> Result<DualQuaternion<T>> {
    if weights.len() != items.len() {
        return Err(Error::SizeMismatch {
            what: "blend weights",
            expected: items.len(),
            actual: weights.len(),
        });
    }
    let Some(reference) = items.get(pivot).map(|p| p.real) else {
        return Err(Error::InvalidArgument(format!("pivot {pivot} out of range for {} items", items.len())));
    };
    let zero = Quaternion::new(T::zero(), T::zero(), T::zero(), T::zero());
    let mut sum = DualQuaternion { real: zero, dual: zero };
    for (&w, dq) in weights.iter().zip(items) {
        let w = if dq.real.coords.dot(&reference.coords) < T::zero() { -w } else { w };
        sum.real += dq.real * w;
        sum.dual += dq.dual * w;
    }
    let norm = sum.real.norm();
    if !(norm >= lit::<T>(MIN_BLEND_NORM)) {
        return Err(Error::AntipodalBlend);
    }
    let mut out = sum.scaled(T::one() / norm);
    let along = out.real.coords.dot(&out.dual.coords);
    out.dual -= out.real * along;
    Ok(out)
}
