//! Potential and field above a grounded plane containing rectangular electrodes.
//!
//! Each rectangle at unit potential with the rest of the plane grounded has a
//! closed-form solution; gaps between electrodes are treated as ground.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{ElectrodeLayout, Rect};
use crate::num::{dot, Mat3, Real, Vec3};

/// Corner term and its first derivatives with respect to (X, Y, z).
#[inline]
fn corner<T: Real>(xx: T, yy: T, z: T) -> (T, T, T, T) {
    let x2 = xx * xx;
    let y2 = yy * yy;
    let z2 = z * z;
    let r = (x2 + y2 + z2).sqrt();
    let ax = x2 + z2;
    let ay = y2 + z2;
    let f = (xx * yy).atan2(z * r);
    let fx = yy * z / (r * ax);
    let fy = xx * z / (r * ay);
    let fz = -xx * yy * (r * r + z2) / (r * ax * ay);
    (f, fx, fy, fz)
}

/// Second derivatives (XX, YY, XY, Xz, Yz) of the corner term.
#[inline]
fn corner_hessian<T: Real>(xx: T, yy: T, z: T) -> [T; 5] {
    let two = T::of(2.0);
    let x2 = xx * xx;
    let y2 = yy * yy;
    let z2 = z * z;
    let r2 = x2 + y2 + z2;
    let r = r2.sqrt();
    let r3 = r2 * r;
    let ax = x2 + z2;
    let ay = y2 + z2;
    let fxx = -xx * yy * z * (ax + two * r2) / (r3 * ax * ax);
    let fyy = -xx * yy * z * (ay + two * r2) / (r3 * ay * ay);
    let fxy = z / r3;
    let fxz = yy * (ax * (r2 - z2) - two * z2 * r2) / (r3 * ax * ax);
    let fyz = xx * (ay * (r2 - z2) - two * z2 * r2) / (r3 * ay * ay);
    [fxx, fyy, fxy, fxz, fyz]
}

#[inline]
fn corners<T: Real>(rect: &Rect<T>) -> [(T, T, T); 4] {
    let one = T::one();
    [
        (rect.x_max, rect.y_max, one),
        (rect.x_min, rect.y_max, -one),
        (rect.x_max, rect.y_min, -one),
        (rect.x_min, rect.y_min, one),
    ]
}

fn check_point<T: Real>(p: Vec3<T>) -> Result<()> {
    if p[2] > T::zero() && p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::BelowPlane(p[2].as_f64()))
    }
}

/// Potential (per volt) and field ((V/m) per volt) of one rectangle.
pub fn rect_solution<T: Real>(rect: &Rect<T>, p: Vec3<T>) -> (T, Vec3<T>) {
    let mut phi = T::zero();
    let mut e = [T::zero(); 3];
    for (xi, yj, s) in corners(rect) {
        let (f, fx, fy, fz) = corner(xi - p[0], yj - p[1], p[2]);
        phi += s * f;
        e[0] += s * fx;
        e[1] += s * fy;
        e[2] -= s * fz;
    }
    let k = T::one() / (T::of(2.0) * T::PI());
    (phi * k, [e[0] * k, e[1] * k, e[2] * k])
}

/// Field Jacobian `J[i][j] = ∂E_i/∂x_j` of one rectangle, per volt. Symmetric and traceless.
pub fn rect_field_jacobian<T: Real>(rect: &Rect<T>, p: Vec3<T>) -> Mat3<T> {
    let mut h = [T::zero(); 5];
    for (xi, yj, s) in corners(rect) {
        let c = corner_hessian(xi - p[0], yj - p[1], p[2]);
        for k in 0..5 {
            h[k] += s * c[k];
        }
    }
    let k = T::one() / (T::of(2.0) * T::PI());
    let [fxx, fyy, fxy, fxz, fyz] = h.map(|v| v * k);
    let fzz = -(fxx + fyy);
    [[-fxx, -fxy, fxz], [-fxy, -fyy, fyz], [fxz, fyz, -fzz]]
}

fn require_group<T: Real>(layout: &ElectrodeLayout<T>, group: &str) -> Result<()> {
    if layout.has_group(group) {
        Ok(())
    } else {
        Err(Error::UnknownGroup(group.to_string()))
    }
}

/// Potential and field at `point` for unit voltage on every member of `group`.
pub fn basis_solution<T: Real>(
    layout: &ElectrodeLayout<T>,
    group: &str,
    point: Vec3<T>,
) -> Result<(T, Vec3<T>)> {
    require_group(layout, group)?;
    check_point(point)?;
    let mut phi = T::zero();
    let mut e = [T::zero(); 3];
    for m in layout.members(group) {
        let (p, f) = rect_solution(&m.extent, point);
        phi += p;
        for i in 0..3 {
            e[i] += f[i];
        }
    }
    Ok((phi, e))
}

/// Field Jacobian of `group` at unit voltage.
pub fn basis_jacobian<T: Real>(layout: &ElectrodeLayout<T>, group: &str, point: Vec3<T>) -> Result<Mat3<T>> {
    require_group(layout, group)?;
    check_point(point)?;
    let mut j = [[T::zero(); 3]; 3];
    for m in layout.members(group) {
        let r = rect_field_jacobian(&m.extent, point);
        for a in 0..3 {
            for b in 0..3 {
                j[a][b] += r[a][b];
            }
        }
    }
    Ok(j)
}

/// Potential and field for a set of group voltages (superposition).
pub fn superpose<T: Real>(
    layout: &ElectrodeLayout<T>,
    voltages: &BTreeMap<String, T>,
    point: Vec3<T>,
) -> Result<(T, Vec3<T>)> {
    let mut phi = T::zero();
    let mut e = [T::zero(); 3];
    for (g, &v) in voltages {
        let (p, f) = basis_solution(layout, g, point)?;
        phi += v * p;
        for i in 0..3 {
            e[i] += v * f[i];
        }
    }
    Ok((phi, e))
}

/// Characteristic distance `D = V / E`; infinite distance is a value, not an error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distance<T> {
    Finite(T),
    NoCoupling,
}

impl<T: Real> Distance<T> {
    /// Distance from the field component produced per volt.
    pub fn from_field_per_volt(component: T) -> Self {
        let c = component.abs();
        if c > T::zero() && c.is_finite() {
            Distance::Finite(T::one() / c)
        } else {
            Distance::NoCoupling
        }
    }

    pub fn value(self) -> Option<T> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::NoCoupling => None,
        }
    }

    /// Meters, with no coupling mapped to +inf.
    pub fn or_infinite(self) -> T {
        self.value().unwrap_or_else(T::infinity)
    }
}

/// `D` of `group` along `axis` (normalized internally) at `point`.
pub fn characteristic_distance<T: Real>(
    layout: &ElectrodeLayout<T>,
    group: &str,
    axis: Vec3<T>,
    point: Vec3<T>,
) -> Result<Distance<T>> {
    let n = crate::num::normalized(axis).ok_or_else(|| Error::Invalid("axis must be a non-zero vector".into()))?;
    let (_, e) = basis_solution(layout, group, point)?;
    Ok(Distance::from_field_per_volt(dot(e, n)))
}
