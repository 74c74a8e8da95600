//! Composite Gauss–Legendre quadrature for smooth, possibly oscillatory
//! integrands on a union of breakpoint-separated segments.

use std::ops::{Add, Mul};
use std::sync::OnceLock;

use num_traits::Zero;

use crate::scalar::Scalar;

/// Panel layout for the spectral integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Gauss points per panel.
    pub nodes_per_panel: usize,
    /// Lower bound on the total node count.
    pub min_nodes: usize,
    /// Total nodes must also reach `nodes_per_mode · m · R_c`.
    pub nodes_per_mode: f64,
    /// Panel width is at most `(R_c − ε) / joint_divisions`...
    pub joint_divisions: usize,
    /// ...and at most `1 / (panels_per_period · m)`.
    pub panels_per_period: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_panel: 16,
            min_nodes: 2000,
            nodes_per_mode: 40.0,
            joint_divisions: 32,
            panels_per_period: 8,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "need at least one node");
    let mut out = vec![(0.0, 0.0); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        out[n / 2].0 = 0.0;
    }
    out
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn gl16() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(16))
}

fn rule(n: usize) -> std::borrow::Cow<'static, [(f64, f64)]> {
    if n == 16 {
        std::borrow::Cow::Borrowed(gl16())
    } else {
        std::borrow::Cow::Owned(gauss_legendre(n))
    }
}

/// Integrates `f` over consecutive segments `[b₀, b₁], [b₁, b₂], …`.
///
/// Each segment is split into equal panels no wider than `max_width`; if the
/// total node count falls short of `min_nodes` all panel counts are scaled up.
pub fn integrate<T, O, F>(breaks: &[T], max_width: T, nodes_per_panel: usize, min_nodes: usize, f: F) -> O
where
    T: Scalar,
    O: Copy + Zero + Add<Output = O> + Mul<T, Output = O>,
    F: Fn(T) -> O,
{
    let nodes = rule(nodes_per_panel);
    let lens: Vec<T> = breaks.windows(2).map(|w| w[1] - w[0]).collect();
    let mut counts: Vec<usize> = lens
        .iter()
        .map(|&len| {
            if len > T::zero() {
                (len / max_width).ceil().to_usize().unwrap_or(1).max(1)
            } else {
                0
            }
        })
        .collect();
    let total: usize = counts.iter().sum::<usize>() * nodes.len();
    if total > 0 && total < min_nodes {
        let scale = min_nodes.div_ceil(total);
        counts.iter_mut().for_each(|c| *c *= scale);
    }

    let half = T::lit(0.5);
    let mut acc = O::zero();
    for (seg, (&len, &count)) in lens.iter().zip(&counts).enumerate() {
        if count == 0 {
            continue;
        }
        let a = breaks[seg];
        let width = len / T::from_usize_exact(count);
        let hw = width * half;
        for p in 0..count {
            let mid = a + width * (T::from_usize_exact(p) + half);
            let mut panel = O::zero();
            for &(x, w) in nodes.iter() {
                panel = panel + f(mid + hw * T::lit(x)) * T::lit(w);
            }
            acc = acc + panel * hw;
        }
    }
    acc
}

impl QuadratureSpec {
    /// Panel width for mode `m` on a support with joint `L = R_c − ε`.
    pub fn max_width<T: Scalar>(&self, joint: T, m: u64) -> T {
        let by_joint = joint / T::from_usize_exact(self.joint_divisions);
        if m == 0 {
            return by_joint;
        }
        let by_mode = T::one() / (T::from_usize_exact(self.panels_per_period) * T::lit(m as f64));
        by_joint.min(by_mode)
    }

    pub fn min_nodes_for<T: Scalar>(&self, r_cutoff: T, m: u64) -> usize {
        let by_mode = (self.nodes_per_mode * m as f64 * r_cutoff.as_f64()).ceil() as usize;
        self.min_nodes.max(by_mode)
    }
}
