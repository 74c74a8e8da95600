//! Anisotropic pair force on the torus `[0, δ)²`.
//!
//! For a displacement `d` the force is
//! `F(d) = f_s(|d|) (s·d) s + f_l(|d|) (l·d) l`
//! with an orthonormal pair `(s, l)` that is constant in space.

use crate::coeffs::CoefficientSpec;
use crate::scalar::Scalar;
use crate::vec2::{Mat2, Vec2};
use crate::{Error, Result};

/// Homogeneous tensor field `χ s⊗s + l⊗l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorField<T> {
    pub s: Vec2<T>,
    pub l: Vec2<T>,
    /// Carried for reference; the weighting by `χ` lives in the coefficients.
    pub chi: T,
}

impl<T: Scalar> TensorField<T> {
    pub fn new(s: Vec2<T>, l: Vec2<T>, chi: T) -> Result<Self> {
        let tol = T::lit(1e-12);
        if (s.norm() - T::one()).abs() > tol || (l.norm() - T::one()).abs() > tol {
            return Err(Error::Invalid("tensor field directions must be unit vectors".into()));
        }
        if s.dot(l).abs() > tol {
            return Err(Error::Invalid("tensor field directions must be orthogonal".into()));
        }
        if !(chi >= T::zero() && chi <= T::one()) {
            return Err(Error::Invalid(format!("chi must lie in [0, 1], got {chi}")));
        }
        Ok(Self { s, l, chi })
    }

    /// `s = (0, 1)`, `l = (1, 0)`.
    pub fn canonical(chi: T) -> Self {
        Self {
            s: Vec2::new(T::zero(), T::one()),
            l: Vec2::new(T::one(), T::zero()),
            chi,
        }
    }

    /// Canonical field rotated counter-clockwise by `angle`.
    pub fn rotated(angle: T, chi: T) -> Self {
        let c = Self::canonical(chi);
        Self { s: c.s.rotate(angle), l: c.l.rotate(angle), chi }
    }
}

/// The two coefficients of the force plus the torus size.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcePair<T> {
    pub f_s: CoefficientSpec<T>,
    pub f_l: CoefficientSpec<T>,
    pub domain_size: T,
}

/// Coefficient values at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeffs<T> {
    pub fs: T,
    pub dfs: T,
    pub fl: T,
    pub dfl: T,
}

impl<T: Scalar> ForcePair<T> {
    pub fn new(f_s: CoefficientSpec<T>, f_l: CoefficientSpec<T>, domain_size: T) -> Result<Self> {
        if !(domain_size > T::zero()) || !domain_size.is_finite() {
            return Err(Error::Invalid(format!("domain size must be positive, got {domain_size}")));
        }
        if f_s.r_cutoff() != f_l.r_cutoff() {
            return Err(Error::Invalid(format!(
                "f_s and f_l must share the cutoff radius ({} vs {})",
                f_s.r_cutoff(), f_l.r_cutoff()
            )));
        }
        if f_s.r_cutoff() > domain_size / T::lit(2.0) {
            return Err(Error::Invalid(format!(
                "cutoff radius {} exceeds half the domain size {}",
                f_s.r_cutoff(), domain_size
            )));
        }
        Ok(Self { f_s, f_l, domain_size })
    }

    #[inline]
    pub fn r_cutoff(&self) -> T {
        self.f_s.r_cutoff()
    }

    pub fn coeffs(&self, r: T) -> Result<Coeffs<T>> {
        let (fs, dfs) = self.f_s.eval(r)?;
        let (fl, dfl) = self.f_l.eval(r)?;
        Ok(Coeffs { fs, dfs, fl, dfl })
    }
}

/// Minimal image of one coordinate in `[−δ/2, δ/2)`.
#[inline]
pub fn wrap_coord<T: Scalar>(x: T, delta: T) -> T {
    let half = delta / T::lit(2.0);
    if x >= -half && x < half {
        return x;
    }
    let mut w = x - delta * (x / delta).round();
    if w >= half {
        w = w - delta;
    } else if w < -half {
        w = w + delta;
    }
    w
}

pub fn wrap_displacement<T: Scalar>(d: Vec2<T>, delta: T) -> Vec2<T> {
    Vec2::new(wrap_coord(d.x, delta), wrap_coord(d.y, delta))
}

/// Representative of one coordinate in `[0, δ)`.
#[inline]
pub fn wrap_coord_positive<T: Scalar>(x: T, delta: T) -> T {
    if x >= T::zero() && x < delta {
        return x;
    }
    let w = x - delta * (x / delta).floor();
    if w >= delta || w < T::zero() {
        // only reachable through rounding right at a period boundary
        T::zero()
    } else {
        w
    }
}

pub fn wrap_position<T: Scalar>(x: Vec2<T>, delta: T) -> Vec2<T> {
    Vec2::new(wrap_coord_positive(x.x, delta), wrap_coord_positive(x.y, delta))
}

/// Force for an already wrapped displacement `d ≠ 0`.
pub fn total_force<T: Scalar>(d: Vec2<T>, field: &TensorField<T>, pair: &ForcePair<T>) -> Result<Vec2<T>> {
    let r = d.norm();
    if r == T::zero() {
        return Err(Error::ZeroDisplacement);
    }
    if r >= pair.r_cutoff() {
        return Ok(Vec2::zero());
    }
    let c = pair.coeffs(r)?;
    Ok(force_from_coeffs(d, field, &c))
}

#[inline]
pub(crate) fn force_from_coeffs<T: Scalar>(d: Vec2<T>, field: &TensorField<T>, c: &Coeffs<T>) -> Vec2<T> {
    field.s * (c.fs * field.s.dot(d)) + field.l * (c.fl * field.l.dot(d))
}

/// `J[i][j] = ∂F_i/∂d_j` at a wrapped displacement `d ≠ 0`.
pub fn force_jacobian<T: Scalar>(d: Vec2<T>, field: &TensorField<T>, pair: &ForcePair<T>) -> Result<Mat2<T>> {
    let r = d.norm();
    if r == T::zero() {
        return Err(Error::ZeroDisplacement);
    }
    let zero = T::zero();
    if r >= pair.r_cutoff() {
        return Ok([[zero; 2]; 2]);
    }
    let c = pair.coeffs(r)?;
    // Coordinates in the (l, s) frame, Jacobian there, then back.
    let d1 = field.l.dot(d);
    let d2 = field.s.dot(d);
    let local = [
        [c.fl + c.dfl * d1 * d1 / r, c.dfl * d1 * d2 / r],
        [c.dfs * d1 * d2 / r, c.fs + c.dfs * d2 * d2 / r],
    ];
    let q = [[field.l.x, field.s.x], [field.l.y, field.s.y]];
    Ok(conjugate(&q, &local))
}

/// `Q A Qᵀ`.
fn conjugate<T: Scalar>(q: &Mat2<T>, a: &Mat2<T>) -> Mat2<T> {
    let mut qa = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            qa[i][j] = q[i][0] * a[0][j] + q[i][1] * a[1][j];
        }
    }
    let mut out = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = qa[i][0] * q[j][0] + qa[i][1] * q[j][1];
        }
    }
    out
}
