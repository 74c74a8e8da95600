//! Continuum spectra, closed forms, high-wave limits and threshold scans.

use std::cell::RefCell;

use num_complex::Complex;
use rayon::prelude::*;

use crate::coeffs::CoefficientSpec;
use crate::field::ForcePair;
use crate::quadrature::{integrate, QuadratureSpec};
use crate::scalar::Scalar;
use crate::{Error, Result};

use super::vertical_line_eigs_discrete;

fn two_pi<T: Scalar>() -> T {
    T::PI() + T::PI()
}

/// Runs `integrate` with a fallible integrand, surfacing the first error.
fn integrate_checked<T, O, F>(breaks: &[T], width: T, quad: &QuadratureSpec, min_nodes: usize, f: F) -> Result<O>
where
    T: Scalar,
    O: Copy + num_traits::Zero + std::ops::Add<Output = O> + std::ops::Mul<T, Output = O>,
    F: Fn(T) -> Result<O>,
{
    let err = RefCell::new(None);
    let v = integrate(breaks, width, quad.nodes_per_panel, min_nodes, |s| match f(s) {
        Ok(v) => v,
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            O::zero()
        }
    });
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

fn symmetric_breaks<T: Scalar>(spec: &CoefficientSpec<T>) -> Vec<T> {
    let (r, l) = (spec.r_cutoff(), spec.joint());
    vec![-r, -l, T::zero(), l, r]
}

fn half_breaks<T: Scalar>(spec: &CoefficientSpec<T>) -> Vec<T> {
    vec![T::zero(), spec.joint(), spec.r_cutoff()]
}

/// `∫_{−R_c}^{R_c} g(|s|) (1 − e^{−2πims}) ds`.
fn mode_integral<T, G>(m: u64, spec: &CoefficientSpec<T>, quad: &QuadratureSpec, g: G) -> Result<Complex<T>>
where
    T: Scalar,
    G: Fn(T) -> Result<T>,
{
    let w = two_pi::<T>() * T::lit(m as f64);
    let width = quad.max_width(spec.joint(), m);
    let min_nodes = quad.min_nodes_for(spec.r_cutoff(), m);
    integrate_checked(&symmetric_breaks(spec), width, quad, min_nodes, |s: T| {
        let v = g(s.abs())?;
        let (sin, cos) = (w * s).sin_cos();
        Ok(Complex::new(v * (T::one() - cos), v * sin))
    })
}

/// Contribution of the jump at `R_c` (hard truncation only) to a
/// `g + g′|s|` mode integral: `−2 R_c J (1 − cos 2πmR_c)`.
fn jump_term<T: Scalar>(m: u64, spec: &CoefficientSpec<T>) -> Result<T> {
    let jump = spec.jump_at_cutoff()?;
    let r = spec.r_cutoff();
    let c = (two_pi::<T>() * T::lit(m as f64) * r).cos();
    Ok(-(r + r) * jump * (T::one() - c))
}

/// Continuum eigenvalues of the vertical line:
/// `λ₁(m) = ∫ f_l(|s|)(1 − e^{−2πims}) ds`, `λ₂(m)` likewise with
/// `f_s + f_s′|s|`, both over `[−R_c, R_c]`.
pub fn vertical_line_eigs_continuum<T: Scalar>(
    m: u64,
    pair: &ForcePair<T>,
    quad: &QuadratureSpec,
) -> Result<(Complex<T>, Complex<T>)> {
    let l1 = mode_integral(m, &pair.f_l, quad, |r| Ok(pair.f_l.value(r)?))?;
    let l2 = mode_integral(m, &pair.f_s, quad, |r| Ok(pair.f_s.eval(r).map(|(v, d)| v + d * r)?))?;
    Ok((l1, l2 + jump_term(m, &pair.f_s)?))
}

/// Horizontal line: `λ₁` uses `f_l + f_l′|s|`, `λ₂` uses `f_s`.
pub fn horizontal_line_eigs<T: Scalar>(
    m: u64,
    pair: &ForcePair<T>,
    quad: &QuadratureSpec,
) -> Result<(Complex<T>, Complex<T>)> {
    let l1 = mode_integral(m, &pair.f_l, quad, |r| Ok(pair.f_l.eval(r).map(|(v, d)| v + d * r)?))?;
    let l2 = mode_integral(m, &pair.f_s, quad, |r| Ok(pair.f_s.value(r)?))?;
    Ok((l1 + jump_term(m, &pair.f_l)?, l2))
}

/// `∫₀^R (a s + b)(1 − cos 2πms) ds`.
pub fn closed_form_linear<T: Scalar>(m: u64, a: T, b: T, r: T) -> T {
    let pi = T::PI();
    let mf = T::lit(m as f64);
    let two = T::lit(2.0);
    let arg = two * pi * mf * r;
    (two * pi * mf * (pi * mf * r * (a * r + two * b) - (a * r + b) * arg.sin()) + a - a * arg.cos())
        / (T::lit(4.0) * pi * pi * mf * mf)
}

/// `∫₀^R (f + s f′)(1 − cos 2πms) ds` for `f(s) = c e^{−e s} − c e^{−e R}`.
pub fn closed_form_exponential<T: Scalar>(m: u64, c: T, e: T, r: T) -> T {
    let pi = T::PI();
    let mf = T::lit(m as f64);
    let two = T::lit(2.0);
    let pm = two * pi * mf; // 2πm
    let pm2 = pm * pm; // 4π²m²
    let arg = pm * r;
    let e2 = e * e;
    let e3 = e2 * e;
    let bracket = pm * (e3 * r + pm2 * (e * r - two)) * arg.cos()
        - (e3 + pm2 * e2 * r + T::lit(3.0) * pm2 * e + pm2 * pm2 * r) * arg.sin()
        + two * pm2 * pm * (e * r).exp();
    let denom = pm * (e2 + pm2) * (e2 + pm2);
    -(c * e * (-e * r).exp()) / denom * bracket
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighWaveReport<T> {
    /// `∫₀^{R_c} f_l ds`.
    pub int_fl: T,
    /// `f_s` just inside the cutoff (before any blend).
    pub fs_at_rc: T,
    pub passes: bool,
}

/// High-wave limit of the vertical line: needs `∫ f_l ≤ 0` and `f_s(R_c) = 0`.
pub fn highwave_check<T: Scalar>(pair: &ForcePair<T>, quad: &QuadratureSpec) -> Result<HighWaveReport<T>> {
    let int_fl = half_integral(&pair.f_l, quad, |r| Ok(pair.f_l.value(r)?))?;
    let fs_at_rc = pair.f_s.preblend_level()?;
    let passes = int_fl <= T::zero() && fs_at_rc.abs() <= T::lit(1e-12);
    Ok(HighWaveReport { int_fl, fs_at_rc, passes })
}

fn half_integral<T, G>(spec: &CoefficientSpec<T>, quad: &QuadratureSpec, g: G) -> Result<T>
where
    T: Scalar,
    G: Fn(T) -> Result<T>,
{
    let width = quad.max_width(spec.joint(), 0);
    integrate_checked(&half_breaks(spec), width, quad, quad.min_nodes, g)
}

/// `∫₀^{R_c} f′(s) s ds` including the jump at `R_c`.
fn moment_of_derivative<T: Scalar>(spec: &CoefficientSpec<T>, quad: &QuadratureSpec) -> Result<T> {
    let smooth = half_integral(spec, quad, |r| Ok(spec.eval(r).map(|(_, d)| d * r)?))?;
    Ok(smooth - spec.r_cutoff() * spec.jump_at_cutoff()?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedHighWave<T> {
    pub theta: T,
    pub i11: T,
    pub i12: T,
    pub i21: T,
    pub i22: T,
    pub trace: T,
    pub det: T,
    pub stable_necessary: bool,
}

/// High-wave limit of the stability matrix of a line at angle `θ`.
pub fn rotated_line_highwave<T: Scalar>(theta: T, pair: &ForcePair<T>, quad: &QuadratureSpec) -> Result<RotatedHighWave<T>> {
    let two = T::lit(2.0);
    let int_fl = half_integral(&pair.f_l, quad, |r| Ok(pair.f_l.value(r)?))?;
    let int_fs = half_integral(&pair.f_s, quad, |r| Ok(pair.f_s.value(r)?))?;
    let mom_l = moment_of_derivative(&pair.f_l, quad)?;
    let mom_s = moment_of_derivative(&pair.f_s, quad)?;
    let (sin, cos) = theta.sin_cos();
    let i11 = two * int_fl + two * cos * cos * mom_l;
    let i12 = two * sin * cos * mom_s;
    let i21 = two * sin * cos * mom_l;
    let i22 = two * int_fs + two * sin * sin * mom_s;
    let trace = i11 + i22;
    let det = i11 * i22 - i12 * i21;
    Ok(RotatedHighWave {
        theta,
        i11,
        i12,
        i21,
        i22,
        trace,
        det,
        stable_necessary: trace <= T::zero() && det >= T::zero(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct A0Scan<T> {
    pub a0: T,
    pub argmax_m: u64,
    /// `(m, h/g)` for every sampled mode.
    pub curve: Vec<(u64, T)>,
    /// Modes dropped because `g(m) = 0`.
    pub skipped: Vec<u64>,
}

/// `a₀ = −b max_{1≤m≤m_max} h(m)/g(m)` with `L = R_c − ε`,
/// `g = 2πm(πmL² − L sin 2πmL) + 1 − cos 2πmL`, `h = 2πm(2πmL − sin 2πmL)`.
pub fn linear_threshold_a0<T: Scalar>(b: T, r_cutoff: T, epsilon: T, m_max: u64) -> Result<A0Scan<T>> {
    if !(b > T::zero()) || m_max < 1 || !(r_cutoff > epsilon) {
        return Err(Error::Invalid(format!(
            "need b > 0, m_max ≥ 1 and R_c > ε, got b = {b}, m_max = {m_max}, R_c = {r_cutoff}, ε = {epsilon}"
        )));
    }
    let l = r_cutoff - epsilon;
    let pi = T::PI();
    let mut curve = Vec::with_capacity(m_max as usize);
    let mut skipped = Vec::new();
    let mut best: Option<(u64, T)> = None;
    for m in 1..=m_max {
        let mf = T::lit(m as f64);
        let arg = (pi + pi) * mf * l;
        let (sin, cos) = arg.sin_cos();
        let g = (pi + pi) * mf * (pi * mf * l * l - l * sin) + T::one() - cos;
        let h = (pi + pi) * mf * (arg - sin);
        if g == T::zero() {
            log::warn!("a0 scan: g({m}) = 0, mode skipped");
            skipped.push(m);
            continue;
        }
        let q = h / g;
        curve.push((m, q));
        if best.map_or(true, |(_, v)| q > v) {
            best = Some((m, q));
        }
    }
    let (argmax_m, max) = best.ok_or_else(|| Error::Invalid("no mode with g ≠ 0".into()))?;
    Ok(A0Scan { a0: -b * max, argmax_m, curve, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumSource {
    DiscreteN(usize),
    Continuum(QuadratureSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    DiscreteN(usize),
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEigs<T> {
    pub m: u64,
    pub lambda1: Complex<T>,
    pub lambda2: Complex<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySpectrum<T> {
    pub modes: Vec<ModeEigs<T>>,
    pub source: SpectrumKind,
    pub verdict: Verdict,
}

/// Continuum modes `1..=max(500, ⌈4/R_c⌉)`.
pub fn default_continuum_modes<T: Scalar>(r_cutoff: T) -> std::ops::RangeInclusive<u64> {
    let by_rc = (T::lit(4.0) / r_cutoff).ceil().to_u64().unwrap_or(500);
    1..=500u64.max(by_rc)
}

/// Stable iff every real part is below `−tol`, unstable iff one exceeds
/// `tol`, inconclusive otherwise; `tol = 1e−12 · max(1, scale)`.
pub fn verdict_of<T: Scalar>(modes: &[ModeEigs<T>], scale: T) -> Verdict {
    let tol = T::lit(1e-12) * T::one().max(scale);
    let re = || modes.iter().flat_map(|e| [e.lambda1.re, e.lambda2.re]);
    if re().any(|x| x > tol) {
        Verdict::Unstable
    } else if re().all(|x| x < -tol) {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    }
}

/// Fills the vertical-line spectrum over `modes` and classifies it.
pub fn classify_vertical_line<T: Scalar>(
    pair: &ForcePair<T>,
    source: SpectrumSource,
    modes: std::ops::RangeInclusive<u64>,
) -> Result<StabilitySpectrum<T>> {
    let eigs = |m: u64| -> Result<(Complex<T>, Complex<T>)> {
        match source {
            SpectrumSource::DiscreteN(n) => vertical_line_eigs_discrete(n, m, pair),
            SpectrumSource::Continuum(q) => vertical_line_eigs_continuum(m, pair, &q),
        }
    };
    if let SpectrumSource::DiscreteN(n) = source {
        if *modes.start() < 1 || *modes.end() >= n as u64 {
            return Err(Error::Invalid(format!("discrete modes must lie in 1..={}", n - 1)));
        }
    } else if *modes.start() < 1 {
        return Err(Error::Invalid("modes start at 1".into()));
    }
    let list: Vec<ModeEigs<T>> = modes
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|m| eigs(m).map(|(lambda1, lambda2)| ModeEigs { m, lambda1, lambda2 }))
        .collect::<Result<_>>()?;
    let (s1, s2) = eigs(1)?;
    let verdict = verdict_of(&list, s1.norm().max(s2.norm()));
    let source = match source {
        SpectrumSource::DiscreteN(n) => SpectrumKind::DiscreteN(n),
        SpectrumSource::Continuum(_) => SpectrumKind::Continuum,
    };
    Ok(StabilitySpectrum { modes: list, source, verdict })
}
