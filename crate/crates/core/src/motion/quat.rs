use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Above this |dot| slerp degenerates to normalized lerp.
pub const SLERP_LERP_THRESHOLD: f64 = 0.9995;

/// Quaternion stored in telemetry order `(i, j, k, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat<T> {
    pub i: T,
    pub j: T,
    pub k: T,
    pub w: T,
}

impl<T: Scalar> Quat<T> {
    pub const fn new(i: T, j: T, k: T, w: T) -> Self {
        Self { i, j, k, w }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::one())
    }

    /// Rotation of `angle` radians about `axis` (normalized here).
    pub fn from_axis_angle(axis: [T; 3], angle: T) -> Result<Self> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::InvalidInput("rotation axis has zero length".into()));
        }
        let half = angle / T::lit(2.0);
        let s = half.sin() / n;
        Ok(Self::new(axis[0] * s, axis[1] * s, axis[2] * s, half.cos()))
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.i, self.j, self.k, self.w]
    }

    pub fn dot(self, o: Self) -> T {
        self.i * o.i + self.j * o.j + self.k * o.k + self.w * o.w
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.i.is_finite() && self.j.is_finite() && self.k.is_finite() && self.w.is_finite()
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.i * s, self.j * s, self.k * s, self.w * s)
    }

    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if !n.is_finite() || n <= T::lit(1e-12) {
            return Err(Error::InvalidInput(format!(
                "quaternion has zero or non-finite norm ({})",
                n
            )));
        }
        // Already unit to machine precision: keep the bits so renormalizing is idempotent.
        if (n - T::one()).abs() <= T::lit(1e-12).max(T::epsilon() * T::lit(4.0)) {
            return Ok(self);
        }
        Ok(self.scale(T::one() / n))
    }

    pub fn conjugate(self) -> Self {
        Self::new(-self.i, -self.j, -self.k, self.w)
    }

    /// Geodesic angle between two orientations, `2·acos(|<a,b>|)`, in radians.
    ///
    /// Evaluated as `4·atan2(|a - sb|, |a + sb|)` with `s = sign(<a,b>)`, which
    /// equals the acos form for unit inputs and is exactly zero for equal ones.
    pub fn angle_to(self, other: Self) -> T {
        let s = if self.dot(other) < T::zero() { -T::one() } else { T::one() };
        let (a, b) = (self.to_array(), other.scale(s).to_array());
        let diff = (0..4).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum::<T>().sqrt();
        let sum = (0..4).map(|k| (a[k] + b[k]) * (a[k] + b[k])).sum::<T>().sqrt();
        T::lit(4.0) * diff.atan2(sum)
    }

    pub fn cast<U: Scalar>(self) -> Quat<U> {
        Quat::new(
            U::lit(self.i.as_f64()),
            U::lit(self.j.as_f64()),
            U::lit(self.k.as_f64()),
            U::lit(self.w.as_f64()),
        )
    }
}

impl<T: Scalar> Add for Quat<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.i + o.i, self.j + o.j, self.k + o.k, self.w + o.w)
    }
}

impl<T: Scalar> Sub for Quat<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.i - o.i, self.j - o.j, self.k - o.k, self.w - o.w)
    }
}

impl<T: Scalar> Neg for Quat<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.i, -self.j, -self.k, -self.w)
    }
}

/// Hamilton product.
impl<T: Scalar> Mul for Quat<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.w * o.i + self.i * o.w + self.j * o.k - self.k * o.j,
            self.w * o.j - self.i * o.k + self.j * o.w + self.k * o.i,
            self.w * o.k + self.i * o.j - self.j * o.i + self.k * o.w,
            self.w * o.w - self.i * o.i - self.j * o.j - self.k * o.k,
        )
    }
}

/// Shortest-arc spherical interpolation between two orientations.
///
/// Inputs are renormalized first; `q1` is flipped into the hemisphere of
/// `q0`. Nearly parallel inputs fall back to a normalized lerp.
pub fn slerp_orientation<T: Scalar>(q0: Quat<T>, q1: Quat<T>, u: T) -> Result<Quat<T>> {
    if !u.is_finite() || u < T::zero() || u > T::one() {
        return Err(Error::InvalidInput(format!("interpolation parameter {u} outside [0,1]")));
    }
    let q0 = q0.normalized()?;
    let mut q1 = q1.normalized()?;
    let mut d = q0.dot(q1);
    if d < T::zero() {
        q1 = -q1;
        d = -d;
    }
    if u == T::zero() {
        return Ok(q0);
    }
    if d > T::lit(SLERP_LERP_THRESHOLD) {
        return (q0 + (q1 - q0).scale(u)).normalized();
    }
    let theta0 = d.min(T::one()).acos();
    let theta = theta0 * u;
    let ortho = (q1 - q0.scale(d)).normalized()?;
    (q0.scale(theta.cos()) + ortho.scale(theta.sin())).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: q0 * exp(u * log(q0^-1 q1)) through explicit angle-axis.
    fn angle_axis_slerp(q0: Quat<f64>, q1: Quat<f64>, u: f64) -> Quat<f64> {
        let mut rel = q0.conjugate() * q1;
        if rel.w < 0.0 {
            rel = -rel;
        }
        let vlen = (rel.i * rel.i + rel.j * rel.j + rel.k * rel.k).sqrt();
        if vlen < 1e-15 {
            return q0;
        }
        let angle = 2.0 * vlen.atan2(rel.w);
        let axis = [rel.i / vlen, rel.j / vlen, rel.k / vlen];
        q0 * Quat::from_axis_angle(axis, angle * u).unwrap()
    }

    fn same_rotation(a: Quat<f64>, b: Quat<f64>, tol: f64) -> bool {
        let d = (a - b).norm().min((a + b).norm());
        d <= tol
    }

    #[test]
    fn endpoint_returns_first_quaternion() {
        let q0 = Quat::new(0.1, 0.2, 0.3, 0.9);
        let q1 = Quat::new(-0.4, 0.1, 0.0, 0.5);
        assert_eq!(slerp_orientation(q0, q1, 0.0).unwrap(), q0.normalized().unwrap());
    }

    #[test]
    fn midpoint_of_quarter_turn_is_eighth_turn() {
        let q0 = Quat::<f64>::identity();
        let q1 = Quat::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2).unwrap();
        let m = slerp_orientation(q0, q1, 0.5).unwrap();
        let s = 22.5f64.to_radians();
        let expected = Quat::new(0.0, 0.0, s.sin(), s.cos());
        assert!((m - expected).norm() < 1e-12, "{m:?}");
    }

    #[test]
    fn opposite_hemisphere_matches_negated_target() {
        let q0 = Quat::new(0.2, -0.1, 0.4, 0.8).normalized().unwrap();
        let q1 = Quat::new(0.3, 0.5, -0.2, -0.7).normalized().unwrap();
        assert!(q0.dot(q1) < 0.0);
        for u in [0.1, 0.37, 0.5, 0.9] {
            let a = slerp_orientation(q0, q1, u).unwrap();
            let b = slerp_orientation(q0, -q1, u).unwrap();
            assert!((a - b).norm() < 1e-12);
            assert!(same_rotation(a, angle_axis_slerp(q0, q1, u), 1e-9));
        }
    }

    #[test]
    fn zero_norm_is_rejected() {
        let z = Quat::new(0.0, 0.0, 0.0, 0.0);
        assert!(slerp_orientation(z, Quat::identity(), 0.5).is_err());
        assert!(slerp_orientation(Quat::identity(), Quat::identity(), 1.5).is_err());
    }

    #[test]
    fn nearly_parallel_falls_back_and_stays_unit() {
        let q0 = Quat::<f64>::identity();
        let q1 = Quat::from_axis_angle([1.0, 0.0, 0.0], 0.01).unwrap();
        let m = slerp_orientation(q0, q1, 0.3).unwrap();
        assert!((m.norm() - 1.0).abs() < 1e-12);
        assert!(same_rotation(m, angle_axis_slerp(q0, q1, 0.3), 1e-7));
    }

    fn unit_quat() -> impl Strategy<Value = Quat<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(a, b, c, d)| a * a + b * b + c * c + d * d > 0.01)
            .prop_map(|(a, b, c, d)| Quat::new(a, b, c, d).normalized().unwrap())
    }

    proptest! {
        #[test]
        fn slerp_output_is_unit(q0 in unit_quat(), q1 in unit_quat(), u in 0.0..=1.0f64) {
            let m = slerp_orientation(q0, q1, u).unwrap();
            prop_assert!((m.norm() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn slerp_matches_angle_axis(q0 in unit_quat(), q1 in unit_quat(), u in 0.0..=1.0f64) {
            prop_assume!(q0.dot(q1).abs() <= SLERP_LERP_THRESHOLD);
            let m = slerp_orientation(q0, q1, u).unwrap();
            prop_assert!(same_rotation(m, angle_axis_slerp(q0, q1, u), 1e-7));
        }

        #[test]
        fn angle_matches_acos_form(q0 in unit_quat(), q1 in unit_quat()) {
            let acos_form = 2.0 * q0.dot(q1).abs().min(1.0).acos();
            prop_assert!((q0.angle_to(q1) - acos_form).abs() < 1e-6);
            prop_assert_eq!(q0.angle_to(q0), 0.0);
            prop_assert_eq!(q0.angle_to(-q0), 0.0);
        }
    }
}
