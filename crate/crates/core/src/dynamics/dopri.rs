use super::{ParticleState, SimConfig};
use crate::field::wrap_position;
use crate::scalar::Scalar;
use crate::vec2::Vec2;
use crate::{Error, Result};

const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Fifth minus fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MIN_STEP: f64 = 1e-14;

/// Dormand–Prince 5(4) with FSAL and an RMS-norm step controller.
#[derive(Debug, Clone)]
pub struct DormandPrince<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub dt_max: T,
    /// Step size proposed for the next attempt.
    pub h: T,
    fsal: Option<(Vec<Vec2<T>>, Vec<Vec2<T>>)>,
}

impl<T: Scalar> DormandPrince<T> {
    pub fn new(abs_tol: T, rel_tol: T, dt_init: T, dt_max: T) -> Self {
        Self { abs_tol, rel_tol, dt_max, h: dt_init.min(dt_max), fsal: None }
    }

    /// Derivative at `state`, from the FSAL cache when it matches.
    pub fn derivative(&mut self, state: &ParticleState<T>, config: &SimConfig<T>) -> Result<&[Vec2<T>]> {
        let fresh = match &self.fsal {
            Some((x, _)) => *x != state.positions,
            None => true,
        };
        if fresh {
            let k = super::rhs(state, config, config.method)?;
            self.fsal = Some((state.positions.clone(), k));
        }
        Ok(&self.fsal.as_ref().expect("cache filled").1)
    }

    /// One accepted step, never past `remaining`.
    pub fn step(&mut self, state: &ParticleState<T>, config: &SimConfig<T>, remaining: T) -> Result<ParticleState<T>> {
        let k1 = self.derivative(state, config)?.to_vec();
        let y0 = &state.positions;
        let n = y0.len();
        let mut rejected = false;
        loop {
            let mut h = self.h.min(self.dt_max);
            if remaining > T::zero() {
                h = h.min(remaining);
            }
            if h < T::lit(MIN_STEP) {
                return Err(Error::StepUnderflow { t: state.time.as_f64(), h: h.as_f64() });
            }

            let mut ks: Vec<Vec<Vec2<T>>> = Vec::with_capacity(7);
            ks.push(k1.clone());
            let mut y_new = Vec::new();
            for row in A.iter() {
                let y: Vec<Vec2<T>> = (0..n)
                    .map(|i| {
                        let mut inc = Vec2::zero();
                        for (a, k) in row.iter().zip(&ks) {
                            if *a != 0.0 {
                                inc += k[i] * T::lit(*a);
                            }
                        }
                        y0[i] + inc * h
                    })
                    .collect();
                ks.push(super::velocities(&y, &config.field, &config.pair, config.method)?);
                y_new = y;
            }

            let err = self.error_norm(y0, &y_new, &ks, h);
            if err <= T::one() {
                let mut factor = if err == T::zero() { T::lit(5.0) } else { T::lit(0.9) * err.powf(T::lit(-0.2)) };
                let cap = if rejected { T::one() } else { T::lit(5.0) };
                factor = factor.max(T::lit(0.2)).min(cap);
                self.h = h * factor;

                let delta = config.pair.domain_size;
                let positions: Vec<Vec2<T>> = y_new.into_iter().map(|p| wrap_position(p, delta)).collect();
                let k7 = ks.pop().expect("seven stages");
                self.fsal = Some((positions.clone(), k7));
                return Ok(ParticleState { positions, time: state.time + h });
            }
            rejected = true;
            let factor = (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2)).min(T::one());
            self.h = h * factor;
        }
    }

    fn error_norm(&self, y0: &[Vec2<T>], y1: &[Vec2<T>], ks: &[Vec<Vec2<T>>], h: T) -> T {
        let mut sum = T::zero();
        for i in 0..y0.len() {
            let mut e = Vec2::zero();
            for (w, k) in E.iter().zip(ks) {
                if *w != 0.0 {
                    e += k[i] * T::lit(*w);
                }
            }
            let e = e * h;
            let sx = self.abs_tol + self.rel_tol * y0[i].x.abs().max(y1[i].x.abs());
            let sy = self.abs_tol + self.rel_tol * y0[i].y.abs().max(y1[i].y.abs());
            sum = sum + (e.x / sx).powi(2) + (e.y / sy).powi(2);
        }
        (sum / T::from_usize_exact(2 * y0.len())).sqrt()
    }
}
