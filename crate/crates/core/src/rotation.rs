//! Rotation utilities: exponential/logarithm maps between rotation vectors
//! and matrices (with analytic derivatives), polar decomposition, and the
//! log-space blend of several rotations.

use nalgebra::{Matrix3, Matrix4x3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Largest rotation angle the log map is trusted with.
pub const MAX_LOG_ANGLE: f64 = std::f64::consts::PI - 1e-6;

// Below this angle the trigonometric coefficients switch to Taylor series.
const SERIES_ANGLE: f64 = 0.05;

#[inline]
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(T::zero(), -v.z, v.y, v.z, T::zero(), -v.x, -v.y, v.x, T::zero())
}

/// Rodrigues coefficients `a = sin t / t`, `b = (1 - cos t) / t^2` and their
/// derivatives divided by `t`.
struct RodriguesCoeffs<T> {
    a: T,
    b: T,
    da_over_t: T,
    db_over_t: T,
}

fn rodrigues<T: Real>(theta2: T) -> RodriguesCoeffs<T> {
    let theta = theta2.sqrt();
    if theta < lit(SERIES_ANGLE) {
        let t2 = theta2;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        RodriguesCoeffs {
            a: T::one() - t2 / lit(6.0) + t4 / lit(120.0) - t6 / lit(5040.0),
            b: lit::<T>(0.5) - t2 / lit(24.0) + t4 / lit(720.0) - t6 / lit(40320.0),
            da_over_t: lit::<T>(-1.0 / 3.0) + t2 / lit(30.0) - t4 / lit(840.0) + t6 / lit(45360.0),
            db_over_t: lit::<T>(-1.0 / 12.0) + t2 / lit(180.0) - t4 / lit(6720.0) + t6 / lit(453600.0),
        }
    } else {
        let (s, c) = theta.sin_cos();
        let t3 = theta2 * theta;
        RodriguesCoeffs {
            a: s / theta,
            b: (T::one() - c) / theta2,
            da_over_t: (theta * c - s) / t3,
            db_over_t: (theta * s - lit::<T>(2.0) * (T::one() - c)) / (theta2 * theta2),
        }
    }
}

/// Rotation matrix `exp([r]x)` of the rotation vector `r`.
pub fn exp_so3<T: Real>(r: &Vector3<T>) -> Matrix3<T> {
    let k = skew(r);
    let c = rodrigues(r.norm_squared());
    Matrix3::identity() + k * c.a + k * k * c.b
}

/// Partial derivatives `dR/dr_k`, `k = 0, 1, 2`, of [`exp_so3`].
pub fn exp_so3_jacobian<T: Real>(r: &Vector3<T>) -> [Matrix3<T>; 3] {
    let k = skew(r);
    let k2 = k * k;
    let c = rodrigues(r.norm_squared());
    std::array::from_fn(|i| {
        let mut e = Vector3::zeros();
        e[i] = T::one();
        let ei = skew(&e);
        ei * c.a + (ei * k + k * ei) * c.b + k * (c.da_over_t * r[i]) + k2 * (c.db_over_t * r[i])
    })
}

/// Principal rotation vector (angle in `[0, pi]`) of a rotation matrix.
pub fn log_so3<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    let q = quat_from_matrix(m);
    log_quat(q.quaternion())
}

fn log_quat<T: Real>(q: &Quaternion<T>) -> Vector3<T> {
    let (w, v) = if q.w < T::zero() { (-q.w, -q.imag()) } else { (q.w, q.imag()) };
    let s = v.norm();
    if s == T::zero() {
        return Vector3::zeros();
    }
    v * (lit::<T>(2.0) * s.atan2(w) / s)
}

/// [`log_so3`] with the angle limited to [`MAX_LOG_ANGLE`].
pub fn log_so3_clamped<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    let r = log_so3(m);
    let limit = lit::<T>(MAX_LOG_ANGLE);
    let angle = r.norm();
    if angle > limit {
        r * (limit / angle)
    } else {
        r
    }
}

pub fn quat_from_matrix<T: Real>(m: &Matrix3<T>) -> UnitQuaternion<T> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m))
}

/// `exp(r / 2)` as a quaternion; unlike [`quat_from_matrix`] this is smooth in
/// `r` for any angle (the sign is not canonicalized).
pub fn quat_from_rotvec<T: Real>(r: &Vector3<T>) -> Quaternion<T> {
    let theta2 = r.norm_squared();
    let (w, f, _) = half_angle_coeffs(theta2);
    Quaternion::from_parts(w, r * f)
}

/// Jacobian (rows `w, x, y, z`) of [`quat_from_rotvec`].
pub fn quat_from_rotvec_jacobian<T: Real>(r: &Vector3<T>) -> Matrix4x3<T> {
    let (_, f, df_over_t) = half_angle_coeffs(r.norm_squared());
    let half = lit::<T>(0.5);
    let mut j = Matrix4x3::zeros();
    for c in 0..3 {
        j[(0, c)] = -half * f * r[c];
        for row in 0..3 {
            let delta = if row == c { f } else { T::zero() };
            j[(row + 1, c)] = delta + df_over_t * r[row] * r[c];
        }
    }
    j
}

/// `cos(t/2)`, `f = sin(t/2)/t` and `f'(t)/t` for `t^2 = theta2`.
fn half_angle_coeffs<T: Real>(theta2: T) -> (T, T, T) {
    let theta = theta2.sqrt();
    let half = lit::<T>(0.5);
    if theta < lit(SERIES_ANGLE) {
        let t4 = theta2 * theta2;
        let t6 = t4 * theta2;
        (
            (theta * half).cos(),
            half - theta2 / lit(48.0) + t4 / lit(3840.0) - t6 / lit(645120.0),
            lit::<T>(-1.0 / 24.0) + theta2 / lit(960.0) - t4 / lit(107520.0),
        )
    } else {
        let (s, c) = (theta * half).sin_cos();
        (c, s / theta, (theta * half * c - s) / (theta2 * theta))
    }
}

/// Angle of the relative rotation `a^T b`.
pub fn relative_angle<T: Real>(a: &Matrix3<T>, b: &Matrix3<T>) -> T {
    log_so3(&(a.transpose() * b)).norm()
}

/// `F = R S` with `R` a proper rotation and `S` symmetric positive
/// definite. Requires `det F > 0`.
pub fn polar_decompose<T: Real>(f: &Matrix3<T>) -> Result<(Matrix3<T>, Matrix3<T>)> {
    if !(f.determinant() > T::zero()) {
        return Err(Error::NonPositiveDeterminant);
    }
    let svd = f.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    let r = u * v_t;
    let s = v_t.transpose() * Matrix3::from_diagonal(&svd.singular_values) * v_t;
    let s = (s + s.transpose()) * lit::<T>(0.5);
    Ok((r, s))
}

/// `exp(sum_i w_i log R_i)` with principal logarithms.
///
/// Fails when two inputs are (nearly) antipodal, i.e. their relative angle
/// reaches [`MAX_LOG_ANGLE`], where the blend is not well defined.
pub fn rotation_log_blend<T: Real>(weights: &[T], rotations: &[Matrix3<T>]) -> Result<Matrix3<T>> {
    check_blend_inputs(weights, rotations)?;
    let limit = lit::<T>(MAX_LOG_ANGLE);
    for a in 0..rotations.len() {
        for b in a + 1..rotations.len() {
            if relative_angle(&rotations[a], &rotations[b]) >= limit {
                return Err(Error::AntipodalRotations { a, b });
            }
        }
    }
    Ok(rotation_log_blend_clamped(weights, rotations))
}

/// Like [`rotation_log_blend`] but never fails: each input's logarithm is
/// limited to [`MAX_LOG_ANGLE`] and antipodal pairs are blended as-is.
pub fn rotation_log_blend_clamped<T: Real>(weights: &[T], rotations: &[Matrix3<T>]) -> Matrix3<T> {
    let rho = weights
        .iter()
        .zip(rotations)
        .fold(Vector3::zeros(), |acc, (&w, r)| acc + log_so3_clamped(r) * w);
    exp_so3(&rho)
}

fn check_blend_inputs<T: Real>(weights: &[T], rotations: &[Matrix3<T>]) -> Result<()> {
    if weights.len() != rotations.len() {
        return Err(Error::SizeMismatch {
            what: "blend weights",
            expected: rotations.len(),
            actual: weights.len(),
        });
    }
    if rotations.is_empty() {
        return Err(Error::InvalidArgument("cannot blend zero rotations".into()));
    }
    Ok(())
}
