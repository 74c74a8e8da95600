//! Acceptance criteria 1-8. Each test prints one `criterion k: PASS|FAIL` line
//! straight to stdout (not captured by the harness), then asserts.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anisoswarm::cli_io::{load_config, RunConfig};
use anisoswarm::dynamics::{euler_update, simulate_with, velocities, NeighborSearch, Termination, UnitStream};
use anisoswarm::field::{force_jacobian, total_force, wrap_displacement};
use anisoswarm::linestab::{
    closed_form_exponential, closed_form_linear, highwave_check, horizontal_line_eigs, linear_threshold_a0,
    rotated_line_highwave, vertical_line_eigs_continuum, vertical_line_eigs_discrete,
};
use anisoswarm::{
    CoefficientSpec, CutoffMode, Error, Family, ForcePair, KcParams, ParticleState, QuadratureSpec, TensorField, Vec2,
};

fn report(k: u32, pass: bool, details: &str) {
    let line = format!("criterion {k}: {} - {details}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn experiment(name: &str) -> RunConfig {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments").join(name);
    load_config::<&str>(Some(path.as_path()), &[]).unwrap()
}

fn pair(fs: Family<f64>, fs_mode: CutoffMode, fl: Family<f64>, fl_mode: CutoffMode, rc: f64, eps: f64) -> ForcePair {
    let s = CoefficientSpec::new(fs, rc, eps, fs_mode).unwrap();
    let l = CoefficientSpec::new(fl, rc, eps, fl_mode).unwrap();
    ForcePair::new(s, l, 1.0).unwrap()
}

/// Shifted exponential f_s and f_l used by the stationary-line run.
fn exp_pair(rc: f64, eps: f64) -> ForcePair {
    let m = CutoffMode::ShiftThenBlend;
    pair(
        Family::ExpShifted { c: 0.1, e_s: 100.0 },
        m,
        Family::ExpSum { c1: 0.13, c2: -0.03, e1: 100.0, e2: 10.0 },
        m,
        rc,
        eps,
    )
}

fn random_state(n: usize, seed: u64) -> Vec<Vec2<f64>> {
    let mut rng = UnitStream::new(seed);
    (0..n).map(|_| Vec2::new(rng.next_unit(), rng.next_unit())).collect()
}

/// Sorted y coordinates and their cyclic gaps.
fn y_gaps(x: &[Vec2<f64>]) -> Vec<f64> {
    let mut ys: Vec<f64> = x.iter().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.push(ys[0] + 1.0 - ys[ys.len() - 1]);
    gaps
}

fn max_x_dev(x: &[Vec2<f64>]) -> f64 {
    x.iter().map(|p| (p.x - 0.5).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_1_exponential_sign_change() {
    let (c, e, r) = (0.1f64, 100.0, 0.1);
    let first = 73_723u64;
    let start = Instant::now();
    let early_positive = (1..first).find(|&m| closed_form_exponential(m, c, e, r) > 0.0);
    let bare = closed_form_exponential(first, c, e, r);
    let elapsed = start.elapsed().as_secs_f64();
    let doubled = 2.0 * bare;
    let target = 8.3225e-15f64;
    let rel2 = (doubled - target).abs() / target;
    let rel1 = (bare - target).abs() / target;
    let pass = early_positive.is_none() && bare > 0.0 && rel2 < 0.01 && elapsed < 5.0;
    report(
        1,
        pass,
        &format!(
            "first positive before {first}: {early_positive:?}; value at {first}: 2x = {doubled:.5e} (rel err {rel2:.3}), \
             bare integral = {bare:.5e} (rel err {rel1:.2e}) against {target:e}; scan {elapsed:.3} s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_kc_high_wave_integrals() {
    let kc = KcParams::<f64>::standard();
    let m = CutoffMode::ShiftThenBlend;
    let p = pair(kc.along_s(0.2), m, kc.along_l(), m, 0.5, 0.0);
    let q = QuadratureSpec::default();
    let int_fl = highwave_check(&p, &q).unwrap().int_fl;
    let approx = 2.0 * kc.alpha / kc.e_r.powi(3) + kc.beta / kc.e_r - kc.gamma / (kc.e_a * kc.e_a);
    // I₂₂ at θ = π/2 is twice ∫₀^{R_c} (f_s + s f_s′) ds
    let moment = rotated_line_highwave(PI / 2.0, &p, &q).unwrap().i22 / 2.0;
    let shift = p.f_s.shift_constant().unwrap();
    let shift_rel = (shift - 4.8144e-21).abs() / 4.8144e-21;
    let pass = int_fl < 0.0 && (int_fl - approx).abs() < 1e-6 && moment.abs() < 1e-12 && shift_rel < 1e-3;
    report(
        2,
        pass,
        &format!(
            "int f_l = {int_fl:.6e} (asymptotic {approx:.6e}, diff {:.1e}); int (f_s + s f_s') = {moment:.1e}; \
             shift = {shift:.5e} (rel err {shift_rel:.1e})",
            (int_fl - approx).abs()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_linear_threshold_scan() {
    let m_max = 10_000;
    let start = Instant::now();
    let scans: Vec<(f64, _)> =
        [0.1, 0.2, 0.3, 0.4, 0.5].iter().map(|&rc| (rc, linear_threshold_a0(1.0, rc, 0.0, m_max).unwrap())).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let mut pass = elapsed < 1.0;
    let mut parts = Vec::new();
    for (rc, scan) in &scans {
        let scaled = -scan.a0 * rc;
        let tail = scan.curve.iter().find(|(m, _)| *m == m_max).map(|&(_, v)| v).unwrap_or(f64::NAN);
        let tail_rel = (tail - 2.0 / rc).abs() / (2.0 / rc);
        let ok_max = if *rc == 0.5 { (scaled - 2.0).abs() < 1e-3 } else { scaled > 2.0 };
        pass &= ok_max && tail_rel < 0.01;
        parts.push(format!("R_c {rc}: R_c*max = {scaled:.6} at m = {}, tail rel err {tail_rel:.1e}", scan.argmax_m));
    }
    report(3, pass, &format!("{}; {elapsed:.3} s", parts.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_4_stationary_vertical_line() {
    let cfg = experiment("exp_vertical_line.cfg");
    let init = cfg.initial_state().unwrap();
    let sim = cfg.sim_config().unwrap();
    let start = Instant::now();
    let out = simulate_with(&init, &sim, |_| Ok(()));
    let elapsed = start.elapsed().as_secs_f64();
    let (pass, details) = match out {
        Ok(out) => {
            let x = &out.final_state.positions;
            let dev = max_x_dev(x);
            let gaps = y_gaps(x);
            let span = 1.0 - gaps.iter().cloned().fold(0.0, f64::max);
            let h = 1.0 / x.len() as f64;
            let (gmin, gmax) = gaps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
            let spacing_ok = gaps.iter().all(|g| (g - h).abs() <= 0.25 * h);
            let pass = out.termination == Termination::Stationary
                && dev < 5e-3
                && span > 0.95
                && spacing_ok
                && elapsed < 600.0;
            (
                pass,
                format!(
                    "{:?} at t = {:.3e} after {} steps; max |x - 0.5| = {dev:.2e}, y-span = {span:.4}, \
                     gaps in [{gmin:.4e}, {gmax:.4e}] (1/N = {h:.4e}); {elapsed:.1} s",
                    out.termination, out.final_state.time, out.steps
                ),
            )
        }
        Err(e) => (false, format!("simulation failed: {e}; {elapsed:.1} s")),
    };
    report(4, pass, &details);
    assert!(pass);
}

#[test]
fn criterion_5_vertical_clusters() {
    let cfg = experiment("linear_rc03.cfg");
    let init = cfg.initial_state().unwrap();
    let mut sim = cfg.sim_config().unwrap();
    // finer snapshots only to track progress; the step sequence is unchanged
    sim.snapshot_every = Some(1.0);
    let n = init.len();
    let mut last: Option<ParticleState> = None;
    let start = Instant::now();
    let out = simulate_with(&init, &sim, |s| {
        last = Some(s.clone());
        Ok(())
    });
    let elapsed = start.elapsed().as_secs_f64();
    let describe = |x: &[Vec2<f64>]| {
        let big = y_gaps(x).iter().filter(|&&g| g > 5.0 / n as f64).count();
        (big, max_x_dev(x))
    };
    let (pass, details) = match out {
        Ok(out) => {
            let (big, dev) = describe(&out.final_state.positions);
            (
                big >= 2 && dev < 5e-3,
                format!(
                    "{:?} at t = {:.3e}; y-gaps > 5/N: {big}, max |x - 0.5| = {dev:.2e}; {elapsed:.1} s",
                    out.termination, out.final_state.time
                ),
            )
        }
        Err(e) => {
            let at = last
                .map(|s| {
                    let (big, dev) = describe(&s.positions);
                    format!(" (last snapshot t = {:.1}: y-gaps > 5/N: {big}, max |x - 0.5| = {dev:.2e})", s.time)
                })
                .unwrap_or_default();
            let kind = if matches!(e, Error::Coincident(..)) { "coincidence" } else { "error" };
            (false, format!("run stopped by {kind}: {e}{at}; {elapsed:.1} s"))
        }
    };
    report(5, pass, &details);
    assert!(pass);
}

#[test]
fn criterion_6_horizontal_line_is_unstable() {
    let kc = KcParams::<f64>::standard();
    let (b, s) = (CutoffMode::BlendToZero, CutoffMode::ShiftThenBlend);
    let families = [
        ("kucken_repulsion", kc.repulsion(), b),
        ("linear", Family::Linear { a: -0.2, b: 0.1 }, b),
        ("algebraic", Family::Algebraic { a: 10.0, b: 2.0, c: 0.1 }, b),
        ("exp_shifted", Family::ExpShifted { c: 0.1, e_s: 100.0 }, s),
        ("exp_sum", Family::ExpSum { c1: 0.1, c2: 0.05, e1: 100.0, e2: 10.0 }, b),
        ("kc", kc.along_s(0.2), s),
    ];
    let q = QuadratureSpec::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, fam, mode) in families {
        let p = pair(fam, mode, Family::Linear { a: -3.0, b: 0.1 }, b, 0.3, 0.0);
        let (_, l2) = horizontal_line_eigs(1, &p, &q).unwrap();
        pass &= l2.re > 0.0;
        parts.push(format!("{name} {:.3e}", l2.re));
    }
    report(6, pass, &format!("Re lambda2(1): {}", parts.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_7_rotated_line_trace() {
    let p = exp_pair(0.5, 0.0);
    let q = QuadratureSpec::default();
    let trace = |theta: f64| rotated_line_highwave(theta, &p, &q).unwrap().trace;
    let near_flat = [(1.0f64 / 3.0).atan(), 0.5f64.atan(), PI - (1.0f64 / 3.0).atan(), PI - 0.5f64.atan()];
    let traces: Vec<f64> = near_flat.iter().map(|&t| trace(t)).collect();
    let vertical = trace(PI / 2.0);
    let pass = traces.iter().all(|&t| t > 0.0) && vertical <= 0.0;
    let listed: Vec<String> = near_flat.iter().zip(&traces).map(|(a, t)| format!("{a:.4}: {t:.3e}")).collect();
    report(7, pass, &format!("trace at {}; at pi/2: {vertical:.3e}", listed.join(", ")));
    assert!(pass);
}

fn cell_lists_exact() -> bool {
    let field = TensorField::rotated(0.3, 0.7);
    [0.1, 0.3, 0.5].iter().all(|&rc| {
        let p = exp_pair(rc, 0.01);
        (0..20).all(|seed| {
            let x = random_state(200, seed);
            velocities(&x, &field, &p, NeighborSearch::CellList).unwrap()
                == velocities(&x, &field, &p, NeighborSearch::BruteForce).unwrap()
        })
    })
}

fn jacobian_error() -> f64 {
    let (rc, eps) = (0.4, 0.04);
    let kc = KcParams::<f64>::standard();
    let pairs = [
        exp_pair(rc, eps),
        pair(kc.along_s(0.2), CutoffMode::ShiftThenBlend, kc.along_l(), CutoffMode::ShiftThenBlend, rc, eps),
        pair(
            Family::Algebraic { a: 10.0, b: 2.0, c: 0.1 },
            CutoffMode::BlendToZero,
            Family::Linear { a: -3.0, b: 0.1 },
            CutoffMode::BlendToZero,
            rc,
            eps,
        ),
    ];
    let mut rng = UnitStream::new(3);
    let mut worst = 0.0f64;
    for p in &pairs {
        for _ in 0..200 {
            let r = 1e-3 + rng.next_unit() * (rc - 2.0 * eps - 1e-3);
            let phi = 2.0 * PI * rng.next_unit();
            let field = TensorField::rotated(2.0 * PI * rng.next_unit(), rng.next_unit());
            let d = Vec2::new(r * phi.cos(), r * phi.sin());
            let jac = force_jacobian(d, &field, p).unwrap();
            let h = 1e-7 * r;
            let mut err = 0.0f64;
            for j in 0..2 {
                let e = if j == 0 { Vec2::new(h, 0.0) } else { Vec2::new(0.0, h) };
                let plus = total_force(d + e, &field, p).unwrap();
                let minus = total_force(d - e, &field, p).unwrap();
                err = err.max((jac[0][j] - (plus.x - minus.x) / (2.0 * h)).abs());
                err = err.max((jac[1][j] - (plus.y - minus.y) / (2.0 * h)).abs());
            }
            let scale = jac.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            if scale > 1e-10 {
                worst = worst.max(err / scale);
            }
        }
    }
    worst
}

/// Error ratios e(N)/e(2N) over N = 200, 400, 800, 1600, both eigenvalues.
fn convergence_ratios() -> Vec<f64> {
    let q = QuadratureSpec::default();
    let b = CutoffMode::BlendToZero;
    let pairs =
        [exp_pair(0.5, 0.05), pair(Family::Linear { a: -0.2, b: 0.1 }, b, Family::Linear { a: -3.0, b: 0.1 }, b, 0.3, 0.01)];
    let mut ratios = Vec::new();
    for p in &pairs {
        for m in [1u64, 3, 7] {
            let (c1, c2) = vertical_line_eigs_continuum(m, p, &q).unwrap();
            let errs: Vec<(f64, f64)> = [200usize, 400, 800, 1600]
                .iter()
                .map(|&n| {
                    let (d1, d2) = vertical_line_eigs_discrete(n, m, p).unwrap();
                    ((d1 - c1).norm(), (d2 - c2).norm())
                })
                .collect();
            for w in errs.windows(2) {
                ratios.push(w[0].0 / w[1].0);
                ratios.push(w[0].1 / w[1].1);
            }
        }
    }
    ratios
}

fn closed_form_error() -> f64 {
    let q = QuadratureSpec::default();
    let b = CutoffMode::BlendToZero;
    let lin = pair(Family::Linear { a: -0.2, b: 0.1 }, b, Family::Linear { a: -3.0, b: 0.1 }, b, 0.3, 0.0);
    let s = CutoffMode::ShiftThenBlend;
    let exp = pair(Family::ExpShifted { c: 0.1, e_s: 100.0 }, s, Family::Linear { a: -3.0, b: 0.1 }, s, 0.1, 0.0);
    let mut worst = 0.0f64;
    for m in [1u64, 7, 50, 333] {
        let (l1, _) = vertical_line_eigs_continuum(m, &lin, &q).unwrap();
        let cf = 2.0 * closed_form_linear(m, -3.0, 0.1, 0.3);
        worst = worst.max((l1.re - cf).abs() / cf.abs());
        let (_, l2) = vertical_line_eigs_continuum(m, &exp, &q).unwrap();
        let cf = 2.0 * closed_form_exponential(m, 0.1, 100.0, 0.1);
        worst = worst.max((l2.re - cf).abs() / cf.abs());
    }
    worst
}

fn com_drift() -> f64 {
    let p = exp_pair(0.3, 0.01);
    let field = TensorField::canonical(0.5);
    let dt = 0.5;
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut state = ParticleState::new(random_state(150, seed), 0.0, 1.0).unwrap();
        let mut shadow = state.positions.clone();
        let com = |x: &[Vec2<f64>]| x.iter().fold(Vec2::zero(), |a, b| a + *b).scale(1.0 / x.len() as f64);
        for _ in 0..10 {
            let before = com(&shadow);
            let v = velocities(&state.positions, &field, &p, NeighborSearch::CellList).unwrap();
            for (s, vi) in shadow.iter_mut().zip(&v) {
                *s += vi.scale(dt);
            }
            state = euler_update(&state, &v, dt, 1.0);
            worst = worst.max((com(&shadow) - before).norm());
        }
    }
    worst
}

fn odd_and_periodic() -> bool {
    let p = exp_pair(0.5, 0.05);
    let mut rng = UnitStream::new(17);
    (0..500).all(|_| {
        let field = TensorField::rotated(2.0 * PI * rng.next_unit(), rng.next_unit());
        // dyadic coordinates so that shifting by whole periods is exact
        let dyadic = |u: f64| ((u - 0.5) * (1u64 << 20) as f64).round() / (1u64 << 20) as f64;
        let d = Vec2::new(dyadic(rng.next_unit()), dyadic(rng.next_unit()));
        if d.norm() == 0.0 {
            return true;
        }
        let base = total_force(wrap_displacement(d, 1.0), &field, &p).unwrap();
        let neg = total_force(wrap_displacement(Vec2::new(-d.x, -d.y), 1.0), &field, &p).unwrap();
        let odd = base.x == -neg.x && base.y == -neg.y;
        let periodic = (-1..=1).all(|kx| {
            (-1..=1).all(|ky| {
                let shifted = wrap_displacement(Vec2::new(d.x + kx as f64, d.y + ky as f64), 1.0);
                total_force(shifted, &field, &p).unwrap() == base
            })
        });
        odd && periodic
    })
}

#[test]
fn criterion_8_property_suite() {
    let cells = cell_lists_exact();
    let jac = jacobian_error();
    let ratios = convergence_ratios();
    let halving = ratios.iter().all(|r| (1.6..=2.6).contains(r));
    let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let cf = closed_form_error();
    let com = com_drift();
    let exact = odd_and_periodic();
    let pass = cells && jac < 1e-6 && halving && cf < 1e-8 && com < 1e-12 && exact;
    report(
        8,
        pass,
        &format!(
            "cell lists bit-exact: {cells}; jacobian rel err {jac:.1e}; error ratios in [{rmin:.2}, {rmax:.2}] \
             (need [1.6, 2.6]): {halving}; closed forms rel err {cf:.1e}; COM drift {com:.1e}; odd and periodic: {exact}"
        ),
    );
    assert!(pass);
}
