//! Straight-line steady states on the torus and their linear stability.
//!
//! A line of `N` equispaced particles with direction `(p, q) ∈ ℤ²` closes on
//! the torus after `max(|p|, |q|)` windings. Perturbing particle `k` by a
//! Fourier mode `e^{2πimk/N}` gives a 2×2 stability matrix per mode `m`; its
//! eigenvalues decide linear stability ([`stability_matrix`],
//! [`vertical_line_eigs_discrete`]). For `N → ∞` the sums become integrals
//! over the support `[−R_c, R_c]` ([`vertical_line_eigs_continuum`]).

mod spectrum;

use num_complex::Complex;

use crate::dynamics::{velocities, NeighborSearch};
use crate::field::{force_jacobian, wrap_displacement, ForcePair, TensorField};
use crate::scalar::Scalar;
use crate::vec2::Vec2;
use crate::{Error, Result};

pub use spectrum::{
    classify_vertical_line, closed_form_exponential, closed_form_linear, default_continuum_modes, highwave_check,
    horizontal_line_eigs, linear_threshold_a0, rotated_line_highwave, verdict_of, vertical_line_eigs_continuum,
    A0Scan, HighWaveReport, ModeEigs, RotatedHighWave, SpectrumKind, SpectrumSource, StabilitySpectrum, Verdict,
};

/// Tolerance for recognising an admissible angle.
const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineAnsatz<T> {
    pub n: usize,
    pub theta: T,
    /// `ℓ(θ) = |(p, q)|`.
    pub length_factor: T,
    pub winding: u64,
    pub domain_size: T,
    /// Integer direction `(p, q)` of the closed line.
    pub direction: (i64, i64),
}

impl<T: Scalar> LineAnsatz<T> {
    pub fn new(n: usize, theta: T, domain_size: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("a line needs N ≥ 2 particles, got {n}")));
        }
        let (p, q) = lattice_direction(theta)?;
        Ok(Self {
            n,
            theta,
            length_factor: T::lit(((p * p + q * q) as f64).sqrt()),
            winding: p.unsigned_abs().max(q.unsigned_abs()),
            domain_size,
            direction: (p, q),
        })
    }

    pub fn vertical(n: usize, domain_size: T) -> Self {
        Self::new(n, T::FRAC_PI_2(), domain_size).expect("π/2 is admissible")
    }

    pub fn horizontal(n: usize, domain_size: T) -> Self {
        Self::new(n, T::zero(), domain_size).expect("0 is admissible")
    }
}

fn near_integer(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() <= ANGLE_TOL * r.abs().max(1.0) && r.abs() < 1e15).then_some(r as i64)
}

/// Integer direction `(p, q)` of an admissible angle in `[0, π)`.
fn lattice_direction<T: Scalar>(theta: T) -> Result<(i64, i64)> {
    let t = theta.as_f64();
    let fail = |reason: String| Err(Error::InadmissibleAngle { theta: t, reason });
    if !(0.0..std::f64::consts::PI).contains(&t) {
        return fail("angle must lie in [0, π)".into());
    }
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    for (angle, dir) in [(0.0, (1, 0)), (FRAC_PI_4, (1, 1)), (FRAC_PI_2, (0, 1)), (3.0 * FRAC_PI_4, (-1, 1))] {
        if (t - angle).abs() <= ANGLE_TOL {
            return Ok(dir);
        }
    }
    if t > FRAC_PI_4 && t < 3.0 * FRAC_PI_4 {
        let tan = t.tan();
        match near_integer(tan) {
            Some(n) if n > 0 => Ok((1, n)),
            Some(n) if n < 0 => Ok((-1, -n)),
            _ => fail(format!("not a principal angle and tan θ = {tan} is not an integer")),
        }
    } else {
        let cot = 1.0 / t.tan();
        match near_integer(cot) {
            Some(n) if n != 0 => Ok((n, 1)),
            _ => fail(format!("not a principal angle and cot θ = {cot} is not an integer")),
        }
    }
}

/// Principal angles plus `arctan n`, `π − arctan n`, `arccot n`,
/// `π − arccot n` for `2 ≤ n ≤ max_n`; sorted, no duplicates.
pub fn admissible_angles<T: Scalar>(max_n: u64) -> Vec<T> {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
    let mut out = vec![0.0, FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4];
    for n in 2..=max_n {
        let a = (n as f64).atan();
        let b = (1.0 / n as f64).atan();
        out.extend([a, PI - a, b, PI - b]);
    }
    out.sort_by(|x, y| x.total_cmp(y));
    out.dedup_by(|x, y| (*x - *y).abs() <= ANGLE_TOL);
    out.into_iter().map(T::lit).collect()
}

/// `x̄_k = (k/N) δ (p, q)` for `k = 1..N`, wrapped exactly into `[0, δ)²`.
pub fn line_positions<T: Scalar>(ansatz: &LineAnsatz<T>) -> Vec<Vec2<T>> {
    let n = ansatz.n as i64;
    let (p, q) = ansatz.direction;
    let nf = T::from_usize_exact(ansatz.n);
    let coord = |k: i64, c: i64| T::lit((k * c).rem_euclid(n) as f64) / nf * ansatz.domain_size;
    (1..=n).map(|k| Vec2::new(coord(k, p), coord(k, q))).collect()
}

/// `max_j |(1/N) Σ_{k≠j} F(x_j − x_k)|`.
pub fn steady_residual<T: Scalar>(positions: &[Vec2<T>], field: &TensorField<T>, pair: &ForcePair<T>) -> Result<T> {
    let v = velocities(positions, field, pair, NeighborSearch::BruteForce)?;
    Ok(crate::dynamics::max_speed(&v))
}

pub type CMat2<T> = [[Complex<T>; 2]; 2];

/// Stability matrix of mode `m` seen from particle `j` (0-based):
/// `M = (1/N) Σ_{k≠j} (1 − e^{2πim(k−j)/N}) ∂F/∂d (x_j − x_k)`.
pub fn stability_matrix<T: Scalar>(
    positions: &[Vec2<T>],
    field: &TensorField<T>,
    pair: &ForcePair<T>,
    j: usize,
    m: u64,
) -> Result<CMat2<T>> {
    let n = positions.len();
    if j >= n || m < 1 || m > n as u64 {
        return Err(Error::Invalid(format!("need j < N and 1 ≤ m ≤ N, got j = {j}, m = {m}, N = {n}")));
    }
    let zero = Complex::new(T::zero(), T::zero());
    let mut acc = [[zero; 2]; 2];
    let two_pi = T::PI() + T::PI();
    let nf = T::from_usize_exact(n);
    for k in 0..n {
        if k == j {
            continue;
        }
        let d = wrap_displacement(positions[j] - positions[k], pair.domain_size);
        if d.norm() < T::lit(crate::dynamics::COINCIDENCE_TOL) {
            return Err(Error::Coincident(j.min(k), j.max(k)));
        }
        let phase_index = ((m as i128) * (k as i128 - j as i128)).rem_euclid(n as i128);
        if phase_index == 0 {
            continue;
        }
        let phase = two_pi * T::lit(phase_index as f64) / nf;
        let factor = Complex::new(T::one() - phase.cos(), -phase.sin());
        let jac = force_jacobian(d, field, pair)?;
        for (row, jrow) in acc.iter_mut().zip(jac) {
            for (a, x) in row.iter_mut().zip(jrow) {
                *a = *a + factor * x;
            }
        }
    }
    for row in acc.iter_mut() {
        for a in row.iter_mut() {
            *a = *a / nf;
        }
    }
    Ok(acc)
}

/// Eigenvalues of the vertical line with `N` particles for mode `m`:
/// `λ_{1,N} = (1/N) Σ_k f_l(|d_k|)(1 − e^{2πimk/N})`,
/// `λ_{2,N}` likewise with `f_s + f_s′|d_k|`, `d_k = (0, (N−k)δ/N)`.
pub fn vertical_line_eigs_discrete<T: Scalar>(n: usize, m: u64, pair: &ForcePair<T>) -> Result<(Complex<T>, Complex<T>)> {
    if n < 2 || m < 1 || m > n as u64 {
        return Err(Error::Invalid(format!("need N ≥ 2 and 1 ≤ m ≤ N, got N = {n}, m = {m}")));
    }
    let half = n.div_ceil(2);
    let nf = T::from_usize_exact(n);
    let two_pi = T::PI() + T::PI();
    let zero = Complex::new(T::zero(), T::zero());
    let (mut l1, mut l2) = (zero, zero);
    for k in half..n + half {
        if k == n {
            continue;
        }
        let phase_index = ((m as u128) * (k as u128)) % n as u128;
        if phase_index == 0 {
            continue;
        }
        let r = T::lit((n as i64 - k as i64).unsigned_abs() as f64) / nf * pair.domain_size;
        let c = pair.coeffs(r)?;
        let phase = two_pi * T::lit(phase_index as f64) / nf;
        let factor = Complex::new(T::one() - phase.cos(), -phase.sin());
        l1 = l1 + factor * c.fl;
        l2 = l2 + factor * (c.fs + c.dfs * r);
    }
    Ok((l1 / nf, l2 / nf))
}
