//! Radial force coefficients and their compactly supported, C¹ cutoffs.
//!
//! A [`CoefficientSpec`] pairs an analytic [`Family`] with a cutoff radius
//! `R_c`, a smoothing width `ε` and a [`CutoffMode`]:
//!
//! * [`CutoffMode::BlendToZero`] keeps the raw coefficient on `[0, R_c − ε]`
//!   and joins it to zero on `(R_c − ε, R_c)` with the cubic that matches
//!   value and slope at the joint.
//! * [`CutoffMode::ShiftThenBlend`] first subtracts the raw value at
//!   `R_c − ε`, so only the slope has to be blended away.
//!
//! `ε = 0` is the hard-truncation limit: the raw (or shifted) coefficient on
//! `[0, R_c)` and zero from `R_c` on.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error("algebraic coefficient undefined at r = {r}: 1 + a·r = {base} ≤ 0")]
    AlgebraicDomain { r: f64, base: f64 },
    #[error("invalid coefficient: {0}")]
    Invalid(String),
}

/// Analytic coefficient families. All parameters are dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub enum Family<T> {
    /// `(α r² + β) e^{−e_R r}`
    KuckenRepulsion { alpha: T, beta: T, e_r: T },
    /// `−γ r e^{−e_A r}`
    KuckenAttraction { gamma: T, e_a: T },
    /// `a r + b`
    Linear { a: T, b: T },
    /// `c (1 + a r)^{−b}`
    Algebraic { a: T, b: T, c: T },
    /// `c e^{−e_s r}`; normally used with [`CutoffMode::ShiftThenBlend`].
    ExpShifted { c: T, e_s: T },
    /// `c₁ e^{−e₁ r} + c₂ e^{−e₂ r}`
    ExpSum { c1: T, c2: T, e1: T, e2: T },
    /// Weighted sum of families sharing the enclosing spec's cutoff.
    Composite(Vec<(T, Family<T>)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffMode {
    BlendToZero,
    ShiftThenBlend,
}

/// Immutable once built; the raw value and slope at `R_c − ε` are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec<T> {
    family: Family<T>,
    r_cutoff: T,
    epsilon: T,
    cutoff_mode: CutoffMode,
    joint_value: T,
    joint_deriv: T,
}

/// Direction a coefficient acts along, for admissibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Along `s`: must be purely repulsive.
    AlongS,
    /// Along `l`: short-range repulsive, long-range attractive.
    AlongL,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Negative { r: f64, value: f64 },
    NotPositiveAtOrigin { value: f64 },
    NoAttraction,
    /// Algebraic family along `s` needs `b > 1`.
    AlgebraicExponentTooSmall { b: f64 },
    /// Algebraic family along `s` needs `2/(a(b−1)) < R_c`.
    AlgebraicDecayTooSlow { bound: f64, r_cutoff: f64 },
    Evaluation(CoeffError),
}

/// Grid resolution of [`CoefficientSpec::check_admissibility`].
pub const ADMISSIBILITY_SAMPLES: usize = 10_000;

impl<T: Scalar> Family<T> {
    pub fn kucken_repulsion(alpha: T, beta: T, e_r: T) -> Self {
        Family::KuckenRepulsion { alpha, beta, e_r }
    }

    pub fn kucken_attraction(gamma: T, e_a: T) -> Self {
        Family::KuckenAttraction { gamma, e_a }
    }

    /// Uncut value and derivative at `r`.
    pub fn value_and_deriv(&self, r: T) -> Result<(T, T), CoeffError> {
        Ok(match self {
            Family::KuckenRepulsion { alpha, beta, e_r } => {
                let decay = (-*e_r * r).exp();
                let poly = *alpha * r * r + *beta;
                (poly * decay, (T::lit(2.0) * *alpha * r - *e_r * poly) * decay)
            }
            Family::KuckenAttraction { gamma, e_a } => {
                let decay = (-*e_a * r).exp();
                (-*gamma * r * decay, -*gamma * (T::one() - *e_a * r) * decay)
            }
            Family::Linear { a, b } => (*a * r + *b, *a),
            Family::Algebraic { a, b, c } => {
                let base = T::one() + *a * r;
                if base <= T::zero() {
                    return Err(CoeffError::AlgebraicDomain {
                        r: r.as_f64(),
                        base: base.as_f64(),
                    });
                }
                let value = *c * base.powf(-*b);
                (value, -*a * *b * value / base)
            }
            Family::ExpShifted { c, e_s } => {
                let v = *c * (-*e_s * r).exp();
                (v, -*e_s * v)
            }
            Family::ExpSum { c1, c2, e1, e2 } => {
                let v1 = *c1 * (-*e1 * r).exp();
                let v2 = *c2 * (-*e2 * r).exp();
                (v1 + v2, -*e1 * v1 - *e2 * v2)
            }
            Family::Composite(members) => {
                let mut acc = (T::zero(), T::zero());
                for (w, f) in members {
                    let (v, d) = f.value_and_deriv(r)?;
                    acc = (acc.0 + *w * v, acc.1 + *w * d);
                }
                acc
            }
        })
    }

    fn validate(&self) -> Result<(), CoeffError> {
        let nonneg = |name: &str, x: T| {
            if x >= T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(CoeffError::Invalid(format!("{name} must be a nonnegative number, got {x}")))
            }
        };
        match self {
            Family::KuckenRepulsion { alpha, beta, e_r } => {
                nonneg("alpha", *alpha)?;
                nonneg("beta", *beta)?;
                nonneg("e_R", *e_r)
            }
            Family::KuckenAttraction { gamma, e_a } => {
                nonneg("gamma", *gamma)?;
                nonneg("e_A", *e_a)
            }
            Family::Composite(members) => {
                if members.is_empty() {
                    return Err(CoeffError::Invalid("empty composite".into()));
                }
                members.iter().try_for_each(|(_, f)| f.validate())
            }
            _ => Ok(()),
        }
    }
}

impl<T: Scalar> CoefficientSpec<T> {
    pub fn new(
        family: Family<T>,
        r_cutoff: T,
        epsilon: T,
        cutoff_mode: CutoffMode,
    ) -> Result<Self, CoeffError> {
        if !(r_cutoff > T::zero()) || !r_cutoff.is_finite() {
            return Err(CoeffError::Invalid(format!("cutoff radius must be positive, got {r_cutoff}")));
        }
        if !(epsilon >= T::zero() && epsilon < r_cutoff) {
            return Err(CoeffError::Invalid(format!(
                "smoothing width must lie in [0, R_c), got ε = {epsilon}, R_c = {r_cutoff}"
            )));
        }
        family.validate()?;
        let (joint_value, joint_deriv) = family.value_and_deriv(r_cutoff - epsilon)?;
        Ok(Self { family, r_cutoff, epsilon, cutoff_mode, joint_value, joint_deriv })
    }

    /// Same cutoff settings, different family.
    pub fn with_family(&self, family: Family<T>) -> Result<Self, CoeffError> {
        Self::new(family, self.r_cutoff, self.epsilon, self.cutoff_mode)
    }

    pub fn with_cutoff(&self, r_cutoff: T, epsilon: T) -> Result<Self, CoeffError> {
        Self::new(self.family.clone(), r_cutoff, epsilon, self.cutoff_mode)
    }

    pub fn with_mode(&self, cutoff_mode: CutoffMode) -> Result<Self, CoeffError> {
        Self::new(self.family.clone(), self.r_cutoff, self.epsilon, cutoff_mode)
    }

    pub fn family(&self) -> &Family<T> {
        &self.family
    }

    /// Cutoff radius `R_c`.
    #[inline]
    pub fn r_cutoff(&self) -> T {
        self.r_cutoff
    }

    /// Smoothing width `ε`.
    #[inline]
    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn cutoff_mode(&self) -> CutoffMode {
        self.cutoff_mode
    }

    pub fn eval_raw(&self, r: T) -> Result<T, CoeffError> {
        self.family.value_and_deriv(r).map(|(v, _)| v)
    }

    pub fn eval_raw_deriv(&self, r: T) -> Result<T, CoeffError> {
        self.family.value_and_deriv(r).map(|(_, d)| d)
    }

    /// Radius where the raw coefficient hands over to the blend.
    #[inline]
    pub fn joint(&self) -> T {
        self.r_cutoff - self.epsilon
    }

    /// Constant subtracted on `[0, R_c − ε]`; zero unless shifting.
    pub fn shift_constant(&self) -> Result<T, CoeffError> {
        Ok(self.shift())
    }

    #[inline]
    fn shift(&self) -> T {
        match self.cutoff_mode {
            CutoffMode::BlendToZero => T::zero(),
            CutoffMode::ShiftThenBlend => self.joint_value,
        }
    }

    /// Level of the (shifted) coefficient where the raw branch ends, i.e. at
    /// `R_c − ε`. Zero by construction when shifting.
    pub fn preblend_level(&self) -> Result<T, CoeffError> {
        Ok(self.joint_value - self.shift())
    }

    /// Size of the drop to zero at `R_c`. Nonzero only for hard truncation
    /// (`ε = 0`) of a coefficient that has not been shifted to zero.
    pub fn jump_at_cutoff(&self) -> Result<T, CoeffError> {
        if self.epsilon > T::zero() {
            Ok(T::zero())
        } else {
            self.preblend_level()
        }
    }

    /// Cut-off value and derivative at `r ≥ 0`.
    pub fn eval(&self, r: T) -> Result<(T, T), CoeffError> {
        if r >= self.r_cutoff {
            return Ok((T::zero(), T::zero()));
        }
        let joint = self.joint();
        if r <= joint {
            let (v, d) = self.family.value_and_deriv(r)?;
            return Ok((v - self.shift(), d));
        }
        // Blend layer, only reachable for ε > 0.
        let eps = self.epsilon;
        let df_j = self.joint_deriv;
        let level = self.joint_value - self.shift();
        let u = r - self.r_cutoff;
        let (two, three, six) = (T::lit(2.0), T::lit(3.0), T::lit(6.0));
        let eps2 = eps * eps;
        let eps3 = eps2 * eps;
        let slope_poly = u * u * u / eps2 + u * u / eps;
        let slope_poly_d = three * u * u / eps2 + two * u / eps;
        let level_poly = two * u * u * u / eps3 + three * u * u / eps2;
        let level_poly_d = six * u * u / eps3 + six * u / eps2;
        Ok((
            df_j * slope_poly + level * level_poly,
            df_j * slope_poly_d + level * level_poly_d,
        ))
    }

    pub fn value(&self, r: T) -> Result<T, CoeffError> {
        self.eval(r).map(|(v, _)| v)
    }

    /// Sign checks on a uniform grid of `[0, R_c)`.
    pub fn check_admissibility(&self, role: Role) -> Vec<Violation> {
        let mut out = Vec::new();
        let samples = match self.sample_grid() {
            Ok(s) => s,
            Err(e) => return vec![Violation::Evaluation(e)],
        };
        let at_origin = samples[0].1;
        match role {
            Role::AlongS => {
                if !(at_origin > T::zero()) {
                    out.push(Violation::NotPositiveAtOrigin { value: at_origin.as_f64() });
                }
                if let Some((r, v)) = samples.iter().find(|(_, v)| *v < T::zero()) {
                    out.push(Violation::Negative { r: r.as_f64(), value: v.as_f64() });
                }
                if let Family::Algebraic { a, b, .. } = &self.family {
                    if !(*b > T::one()) {
                        out.push(Violation::AlgebraicExponentTooSmall { b: b.as_f64() });
                    } else {
                        let bound = T::lit(2.0) / (*a * (*b - T::one()));
                        if !(bound < self.r_cutoff) {
                            out.push(Violation::AlgebraicDecayTooSlow {
                                bound: bound.as_f64(),
                                r_cutoff: self.r_cutoff.as_f64(),
                            });
                        }
                    }
                }
            }
            Role::AlongL => {
                if !(at_origin > T::zero()) {
                    out.push(Violation::NotPositiveAtOrigin { value: at_origin.as_f64() });
                }
                if !samples.iter().any(|(_, v)| *v < T::zero()) {
                    out.push(Violation::NoAttraction);
                }
            }
        }
        out
    }

    fn sample_grid(&self) -> Result<Vec<(T, T)>, CoeffError> {
        let h = self.r_cutoff / T::from_usize_exact(ADMISSIBILITY_SAMPLES);
        (0..ADMISSIBILITY_SAMPLES)
            .map(|i| {
                let r = h * T::from_usize_exact(i);
                self.value(r).map(|v| (r, v))
            })
            .collect()
    }
}

/// Kücken–Champod parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcParams<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub e_a: T,
    pub e_r: T,
}

impl<T: Scalar> KcParams<T> {
    /// α = 270, β = 0.1, γ = 35, e_A = 95, e_R = 100.
    pub fn standard() -> Self {
        Self {
            alpha: T::lit(270.0),
            beta: T::lit(0.1),
            gamma: T::lit(35.0),
            e_a: T::lit(95.0),
            e_r: T::lit(100.0),
        }
    }

    pub fn repulsion(&self) -> Family<T> {
        Family::kucken_repulsion(self.alpha, self.beta, self.e_r)
    }

    pub fn attraction(&self) -> Family<T> {
        Family::kucken_attraction(self.gamma, self.e_a)
    }

    /// `f_l = f_A + f_R`.
    pub fn along_l(&self) -> Family<T> {
        Family::Composite(vec![(T::one(), self.attraction()), (T::one(), self.repulsion())])
    }

    /// `f_s = χ f_A + f_R`.
    pub fn along_s(&self, chi: T) -> Family<T> {
        Family::Composite(vec![(chi, self.attraction()), (T::one(), self.repulsion())])
    }
}
