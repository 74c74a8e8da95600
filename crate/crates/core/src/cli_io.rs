//! Run configuration, experiment commands and CSV output.
//!
//! Configs are flat `key = value` files; `#` starts a comment. Keys are
//! dot-namespaced (`fs.family`, `sim.dt`, `field.chi`, ...). Every command
//! reads the same [`RunConfig`] and ignores the sections it does not need.
//!
//! Numbers in CSV files are written with 17 significant digits, so an `f64`
//! read back from any output equals the value that was written.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::coeffs::{CoefficientSpec, CutoffMode, Family, KcParams};
use crate::dynamics::{
    default_euler_dt, init_circle, init_line, perturb, simulate_with, Integrator, NeighborSearch, ParticleState,
    SimConfig, Termination,
};
use crate::field::{wrap_position, ForcePair, TensorField};
use crate::linestab::{
    admissible_angles, classify_vertical_line, default_continuum_modes, horizontal_line_eigs, linear_threshold_a0,
    rotated_line_highwave, verdict_of, LineAnsatz, ModeEigs, SpectrumKind, SpectrumSource, Verdict,
};
use crate::quadrature::QuadratureSpec;
use crate::vec2::Vec2;

/// Environment variable that replaces `output.dir` when set.
pub const OUT_DIR_ENV: &str = "ANISO_OUT_DIR";

/// Where a config value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    CommandLine,
    /// Missing keys and checks spanning several keys.
    Config,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::CommandLine => f.write_str("command line"),
            Origin::Config => f.write_str("config"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{origin}: `{key}`: {message}")]
pub struct ConfigError {
    pub origin: Origin,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(origin: Origin, key: &str, message: impl Into<String>) -> Self {
        Self { origin, key: key.to_string(), message: message.into() }
    }

    fn missing(key: &str) -> Self {
        Self::new(Origin::Config, key, "required key is missing")
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read config {path}: {source}")]
    ConfigFile { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Numeric(#[from] crate::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigFile { .. } => 1,
            CliError::Numeric(_) | CliError::Io { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Coefficient choice for one direction.
#[derive(Debug, Clone, PartialEq)]
pub enum CoeffChoice {
    Family(Family<f64>),
    /// Kücken–Champod sum built from the `kc.*` keys.
    Kc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffConfig {
    pub choice: CoeffChoice,
    pub mode: CutoffMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Circle { n: usize, center: Vec2<f64>, radius: f64 },
    Line { n: usize, theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub kind: InitKind,
    /// Copies per side, shifted by `δ / tiles`.
    pub tiles: usize,
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSection {
    pub integrator: Integrator<f64>,
    pub t_max: f64,
    pub stationary_tol: f64,
    pub snapshot_every: Option<f64>,
    pub method: NeighborSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    pub line: LineKind,
    pub source: SpectrumKind,
    pub m_min: u64,
    /// Defaults to `N − 1` (discrete) or the continuum default range.
    pub m_max: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcesConfig {
    pub r_min: f64,
    /// Defaults to the cutoff radius.
    pub r_max: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A0Config {
    pub r_cutoffs: Vec<f64>,
    pub epsilon: f64,
    pub m_max: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedConfig {
    pub max_n: u64,
}

/// Everything a run needs, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fs: Option<CoeffConfig>,
    pub fl: Option<CoeffConfig>,
    /// Present only when a direction uses the `kc` family.
    pub kc: Option<KcParams<f64>>,
    pub r_cutoff: f64,
    pub epsilon: f64,
    pub domain_size: f64,
    pub chi: f64,
    /// Rotation of the canonical field `s = (0, 1)`, `l = (1, 0)`.
    pub field_theta: f64,
    pub sim: SimSection,
    pub init: InitConfig,
    pub spectrum: SpectrumConfig,
    pub forces: ForcesConfig,
    pub a0: A0Config,
    pub rotated: RotatedConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

const FAMILY_PARAMS: &[&str] = &["alpha", "beta", "e_r", "gamma", "e_a", "a", "b", "c", "e_s", "c1", "c2", "e1", "e2"];

const KEYS: &[&str] = &[
    "kc.alpha",
    "kc.beta",
    "kc.gamma",
    "kc.e_a",
    "kc.e_r",
    "force.r_cutoff",
    "force.epsilon",
    "domain.size",
    "field.chi",
    "field.theta",
    "sim.integrator",
    "sim.dt",
    "sim.abs_tol",
    "sim.rel_tol",
    "sim.dt_init",
    "sim.dt_max",
    "sim.t_max",
    "sim.stationary_tol",
    "sim.snapshot_every",
    "sim.neighbor",
    "init.kind",
    "init.n",
    "init.center",
    "init.radius",
    "init.theta",
    "init.jitter",
    "init.tiles",
    "spectrum.line",
    "spectrum.source",
    "spectrum.n",
    "spectrum.m_min",
    "spectrum.m_max",
    "forces.r_min",
    "forces.r_max",
    "forces.points",
    "a0.r_cutoffs",
    "a0.epsilon",
    "a0.m_max",
    "rotated.max_n",
    "output.dir",
    "seed",
];

fn is_known(key: &str) -> bool {
    if let Some(rest) = key.strip_prefix("fs.").or_else(|| key.strip_prefix("fl.")) {
        return rest == "family" || rest == "mode" || FAMILY_PARAMS.contains(&rest);
    }
    KEYS.contains(&key)
}

struct Entry {
    value: String,
    origin: Origin,
}

/// Raw key/value pairs; typed getters remove what they read.
struct Table {
    entries: BTreeMap<String, Entry>,
}

impl Table {
    fn insert(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        if key.is_empty() {
            return Err(ConfigError::new(origin, key, "empty key"));
        }
        if !is_known(key) {
            return Err(ConfigError::new(origin, key, "unknown key"));
        }
        let entry = Entry { value: value.to_string(), origin };
        if let Some(old) = self.entries.insert(key.to_string(), entry) {
            if let (Origin::Line(a), Origin::Line(b)) = (&old.origin, &self.entries[key].origin) {
                log::warn!("duplicate key `{key}` on lines {a} and {b}; using line {b}");
            }
        }
        Ok(())
    }

    fn get<V>(&mut self, key: &str, parse: impl Fn(&str) -> Result<V, String>) -> Result<Option<V>, ConfigError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|m| ConfigError::new(e.origin, key, m)),
        }
    }

    fn num(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key, parse_f64)
    }

    fn num_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn req(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.num(key)?.ok_or_else(|| ConfigError::missing(key))
    }

    fn int<U: std::str::FromStr>(&mut self, key: &str) -> Result<Option<U>, ConfigError> {
        self.get(key, |s| s.parse::<U>().map_err(|_| format!("cannot parse `{s}` as a nonnegative integer")))
    }

    fn word(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        self.get(key, |s| Ok(s.to_string()))
    }

    fn origin(&self, key: &str) -> Origin {
        self.entries.get(key).map_or(Origin::Config, |e| e.origin.clone())
    }

    /// Errors on the first key nobody consumed.
    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, e)) => Err(ConfigError::new(e.origin, &key, "key does not apply to this configuration")),
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("cannot parse `{s}` as a finite number")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| parse_f64(t.trim())).collect()
}

fn choose<V: Copy>(key: &str, value: Option<String>, origin: Origin, options: &[(&str, V)], default: Option<V>) -> Result<V, ConfigError> {
    match value {
        None => default.ok_or_else(|| ConfigError::missing(key)),
        Some(v) => options.iter().find(|(name, _)| *name == v).map(|(_, x)| *x).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            ConfigError::new(origin, key, format!("`{v}` is not one of {}", names.join(", ")))
        }),
    }
}

#[derive(Clone, Copy)]
enum FamilyName {
    KuckenRepulsion,
    KuckenAttraction,
    Linear,
    Algebraic,
    ExpShifted,
    ExpSum,
    Kc,
}

const FAMILIES: &[(&str, FamilyName)] = &[
    ("kucken_repulsion", FamilyName::KuckenRepulsion),
    ("kucken_attraction", FamilyName::KuckenAttraction),
    ("linear", FamilyName::Linear),
    ("algebraic", FamilyName::Algebraic),
    ("exp_shifted", FamilyName::ExpShifted),
    ("exp_sum", FamilyName::ExpSum),
    ("kc", FamilyName::Kc),
];

const MODES: &[(&str, CutoffMode)] =
    &[("blend_to_zero", CutoffMode::BlendToZero), ("shift_then_blend", CutoffMode::ShiftThenBlend)];

fn read_coeff(t: &mut Table, prefix: &str) -> Result<Option<CoeffConfig>, ConfigError> {
    let fam_key = format!("{prefix}.family");
    let origin = t.origin(&fam_key);
    let Some(name) = t.word(&fam_key)? else {
        return Ok(None);
    };
    let name = choose(&fam_key, Some(name), origin, FAMILIES, None)?;
    let mut p = |param: &str| t.req(&format!("{prefix}.{param}"));
    let choice = match name {
        FamilyName::KuckenRepulsion => CoeffChoice::Family(Family::KuckenRepulsion { alpha: p("alpha")?, beta: p("beta")?, e_r: p("e_r")? }),
        FamilyName::KuckenAttraction => CoeffChoice::Family(Family::KuckenAttraction { gamma: p("gamma")?, e_a: p("e_a")? }),
        FamilyName::Linear => CoeffChoice::Family(Family::Linear { a: p("a")?, b: p("b")? }),
        FamilyName::Algebraic => CoeffChoice::Family(Family::Algebraic { a: p("a")?, b: p("b")?, c: p("c")? }),
        FamilyName::ExpShifted => CoeffChoice::Family(Family::ExpShifted { c: p("c")?, e_s: p("e_s")? }),
        FamilyName::ExpSum => CoeffChoice::Family(Family::ExpSum { c1: p("c1")?, c2: p("c2")?, e1: p("e1")?, e2: p("e2")? }),
        FamilyName::Kc => CoeffChoice::Kc,
    };
    let default_mode = match name {
        FamilyName::ExpShifted => CutoffMode::ShiftThenBlend,
        _ => CutoffMode::BlendToZero,
    };
    let mode_key = format!("{prefix}.mode");
    let origin = t.origin(&mode_key);
    let mode = choose(&mode_key, t.word(&mode_key)?, origin, MODES, Some(default_mode))?;
    Ok(Some(CoeffConfig { choice, mode }))
}

fn read_integrator(t: &mut Table, r_cutoff: f64, t_max: f64) -> Result<Integrator<f64>, ConfigError> {
    #[derive(Clone, Copy)]
    enum Kind {
        Euler,
        Dopri,
    }
    let origin = t.origin("sim.integrator");
    let kind = choose(
        "sim.integrator",
        t.word("sim.integrator")?,
        origin,
        &[("euler", Kind::Euler), ("dormand_prince", Kind::Dopri)],
        Some(Kind::Euler),
    )?;
    Ok(match kind {
        Kind::Euler => Integrator::Euler { dt: t.num_or("sim.dt", default_euler_dt(r_cutoff))? },
        Kind::Dopri => Integrator::DormandPrince {
            abs_tol: t.num_or("sim.abs_tol", 1e-6)?,
            rel_tol: t.num_or("sim.rel_tol", 1e-6)?,
            dt_init: t.num_or("sim.dt_init", 1e-3)?,
            dt_max: t.num_or("sim.dt_max", t_max)?,
        },
    })
}

fn read_init(t: &mut Table) -> Result<InitConfig, ConfigError> {
    #[derive(Clone, Copy)]
    enum Kind {
        Circle,
        Line,
    }
    let origin = t.origin("init.kind");
    let kind = choose("init.kind", t.word("init.kind")?, origin, &[("circle", Kind::Circle), ("line", Kind::Line)], Some(Kind::Circle))?;
    let n = t.int::<usize>("init.n")?.unwrap_or(600);
    let kind = match kind {
        Kind::Circle => {
            let c = t
                .get("init.center", |s| match parse_list(s)?.as_slice() {
                    [x, y] => Ok(Vec2::new(*x, *y)),
                    _ => Err(format!("expected `x, y`, got `{s}`")),
                })?
                .unwrap_or(Vec2::new(0.5, 0.5));
            InitKind::Circle { n, center: c, radius: t.num_or("init.radius", 0.005)? }
        }
        Kind::Line => InitKind::Line { n, theta: t.num_or("init.theta", std::f64::consts::FRAC_PI_2)? },
    };
    let tiles = t.int::<usize>("init.tiles")?.unwrap_or(1);
    Ok(InitConfig { kind, tiles, jitter: t.num_or("init.jitter", 0.0)? })
}

fn read_spectrum(t: &mut Table) -> Result<SpectrumConfig, ConfigError> {
    #[derive(Clone, Copy)]
    enum Src {
        Continuum,
        Discrete,
    }
    let origin = t.origin("spectrum.line");
    let line = choose(
        "spectrum.line",
        t.word("spectrum.line")?,
        origin,
        &[("vertical", LineKind::Vertical), ("horizontal", LineKind::Horizontal)],
        Some(LineKind::Vertical),
    )?;
    let origin = t.origin("spectrum.source");
    let src = choose(
        "spectrum.source",
        t.word("spectrum.source")?,
        origin.clone(),
        &[("continuum", Src::Continuum), ("discrete", Src::Discrete)],
        Some(Src::Continuum),
    )?;
    let source = match src {
        Src::Continuum => SpectrumKind::Continuum,
        Src::Discrete => {
            if line == LineKind::Horizontal {
                return Err(ConfigError::new(origin, "spectrum.source", "the horizontal line has a continuum spectrum only"));
            }
            SpectrumKind::DiscreteN(t.int::<usize>("spectrum.n")?.ok_or_else(|| ConfigError::missing("spectrum.n"))?)
        }
    };
    Ok(SpectrumConfig {
        line,
        source,
        m_min: t.int::<u64>("spectrum.m_min")?.unwrap_or(1),
        m_max: t.int::<u64>("spectrum.m_max")?,
    })
}

/// Parses a config file.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_with_overrides(text, &[] as &[&str])
}

/// Parses a config file, then applies `--key=value` overrides in order.
pub fn parse_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<RunConfig, ConfigError> {
    let mut t = Table { entries: BTreeMap::new() };
    for (i, raw) in text.lines().enumerate() {
        let origin = Origin::Line(i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::new(origin, line, "expected `key = value`"));
        };
        t.insert(k.trim(), v.trim(), origin)?;
    }
    for o in overrides {
        let o = o.as_ref();
        let body = o.strip_prefix("--").unwrap_or(o);
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::new(Origin::CommandLine, body, "expected `--key=value`"));
        };
        t.insert(k.trim(), v.trim(), Origin::CommandLine)?;
    }
    build(t)
}

fn build(mut t: Table) -> Result<RunConfig, ConfigError> {
    let fs = read_coeff(&mut t, "fs")?;
    let fl = read_coeff(&mut t, "fl")?;
    let uses_kc = [&fs, &fl].iter().any(|c| matches!(c, Some(CoeffConfig { choice: CoeffChoice::Kc, .. })));
    let kc = if uses_kc {
        let d = KcParams::<f64>::standard();
        Some(KcParams {
            alpha: t.num_or("kc.alpha", d.alpha)?,
            beta: t.num_or("kc.beta", d.beta)?,
            gamma: t.num_or("kc.gamma", d.gamma)?,
            e_a: t.num_or("kc.e_a", d.e_a)?,
            e_r: t.num_or("kc.e_r", d.e_r)?,
        })
    } else {
        None
    };
    let r_cutoff = t.num_or("force.r_cutoff", 0.5)?;
    let t_max = t.num_or("sim.t_max", 100.0)?;
    let integrator = read_integrator(&mut t, r_cutoff, t_max)?;
    let origin = t.origin("sim.neighbor");
    let method = choose(
        "sim.neighbor",
        t.word("sim.neighbor")?,
        origin,
        &[("cell_list", NeighborSearch::CellList), ("brute_force", NeighborSearch::BruteForce)],
        Some(NeighborSearch::CellList),
    )?;
    let snapshot_every = t.get("sim.snapshot_every", |s| if s == "none" { Ok(None) } else { parse_f64(s).map(Some) })?.flatten();
    let sim = SimSection { integrator, t_max, stationary_tol: t.num_or("sim.stationary_tol", 1e-8)?, snapshot_every, method };

    let cfg = RunConfig {
        fs,
        fl,
        kc,
        r_cutoff,
        epsilon: t.num_or("force.epsilon", 0.0)?,
        domain_size: t.num_or("domain.size", 1.0)?,
        chi: t.num_or("field.chi", 1.0)?,
        field_theta: t.num_or("field.theta", 0.0)?,
        sim,
        init: read_init(&mut t)?,
        spectrum: read_spectrum(&mut t)?,
        forces: ForcesConfig {
            r_min: t.num_or("forces.r_min", 0.0)?,
            r_max: t.num("forces.r_max")?,
            points: t.int::<usize>("forces.points")?.unwrap_or(501),
        },
        a0: A0Config {
            r_cutoffs: t.get("a0.r_cutoffs", parse_list)?.unwrap_or_else(|| vec![0.1, 0.2, 0.3, 0.4, 0.5]),
            epsilon: t.num_or("a0.epsilon", 0.0)?,
            m_max: t.int::<u64>("a0.m_max")?.unwrap_or(10_000),
        },
        rotated: RotatedConfig { max_n: t.int::<u64>("rotated.max_n")?.unwrap_or(10) },
        output_dir: PathBuf::from(t.word("output.dir")?.unwrap_or_else(|| "out".into())),
        seed: t.int::<u64>("seed")?.unwrap_or(0),
    };
    t.finish()?;
    cfg.check()?;
    Ok(cfg)
}

fn whole(key: &str, e: impl fmt::Display) -> ConfigError {
    ConfigError::new(Origin::Config, key, e.to_string())
}

impl RunConfig {
    /// Cross-key checks that need the assembled config.
    fn check(&self) -> Result<(), ConfigError> {
        if self.fs.is_some() && self.fl.is_some() {
            let pair = self.pair()?;
            self.sim_config_for(pair).validate().map_err(|e| whole("sim", e))?;
        }
        let n = match self.init.kind {
            InitKind::Circle { n, .. } | InitKind::Line { n, .. } => n,
        };
        if n < 2 {
            return Err(whole("init.n", "need at least 2 particles"));
        }
        if self.init.tiles < 1 {
            return Err(whole("init.tiles", "need at least one tile"));
        }
        if !(self.init.jitter >= 0.0) {
            return Err(whole("init.jitter", "jitter must be nonnegative"));
        }
        if let SpectrumKind::DiscreteN(n) = self.spectrum.source {
            if n < 2 {
                return Err(whole("spectrum.n", "need N ≥ 2"));
            }
        }
        if self.spectrum.m_min < 1 || self.spectrum.m_max.is_some_and(|m| m < self.spectrum.m_min) {
            return Err(whole("spectrum.m_min", "need 1 ≤ m_min ≤ m_max"));
        }
        if self.forces.points < 2 {
            return Err(whole("forces.points", "need at least 2 points"));
        }
        if self.a0.r_cutoffs.is_empty() || self.a0.m_max < 1 {
            return Err(whole("a0.r_cutoffs", "need at least one cutoff and m_max ≥ 1"));
        }
        Ok(())
    }

    fn spec(&self, key: &str, c: &CoeffConfig, along_s: bool) -> Result<CoefficientSpec<f64>, ConfigError> {
        let family = match &c.choice {
            CoeffChoice::Family(f) => f.clone(),
            CoeffChoice::Kc => {
                let kc = self.kc.expect("kc parameters are read whenever a kc family is used");
                if along_s {
                    kc.along_s(self.chi)
                } else {
                    kc.along_l()
                }
            }
        };
        CoefficientSpec::new(family, self.r_cutoff, self.epsilon, c.mode).map_err(|e| whole(key, e))
    }

    /// The force pair; both `fs.family` and `fl.family` must be set.
    pub fn pair(&self) -> Result<ForcePair<f64>, ConfigError> {
        let fs = self.fs.as_ref().ok_or_else(|| ConfigError::missing("fs.family"))?;
        let fl = self.fl.as_ref().ok_or_else(|| ConfigError::missing("fl.family"))?;
        let pair = ForcePair::new(self.spec("fs", fs, true)?, self.spec("fl", fl, false)?, self.domain_size);
        pair.map_err(|e| whole("force", e))
    }

    pub fn field(&self) -> Result<TensorField<f64>, ConfigError> {
        let f = TensorField::rotated(self.field_theta, self.chi);
        TensorField::new(f.s, f.l, f.chi).map_err(|e| whole("field", e))
    }

    fn sim_config_for(&self, pair: ForcePair<f64>) -> SimConfig<f64> {
        SimConfig {
            pair,
            field: TensorField::rotated(self.field_theta, self.chi),
            integrator: self.sim.integrator,
            t_max: self.sim.t_max,
            stationary_tol: self.sim.stationary_tol,
            snapshot_every: self.sim.snapshot_every,
            method: self.sim.method,
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig<f64>, ConfigError> {
        let cfg = SimConfig { field: self.field()?, ..self.sim_config_for(self.pair()?) };
        cfg.validate().map_err(|e| whole("sim", e))?;
        Ok(cfg)
    }

    /// Initial particles: the base pattern, tiled, then jittered with
    /// `seed` when `init.jitter > 0`.
    pub fn initial_state(&self) -> Result<ParticleState<f64>, ConfigError> {
        let delta = self.domain_size;
        let base = match self.init.kind {
            InitKind::Circle { n, center, radius } => init_circle(n, center, radius, delta),
            InitKind::Line { n, theta } => LineAnsatz::new(n, theta, delta).and_then(|a| init_line(&a, 0.0, self.seed)),
        }
        .map_err(|e| whole("init", e))?;
        let tiles = self.init.tiles;
        let state = if tiles == 1 {
            base
        } else {
            let step = delta / tiles as f64;
            let mut positions = Vec::with_capacity(base.len() * tiles * tiles);
            for i in 0..tiles {
                for j in 0..tiles {
                    let shift = Vec2::new(i as f64 * step, j as f64 * step);
                    positions.extend(base.positions.iter().map(|&p| wrap_position(p + shift, delta)));
                }
            }
            ParticleState::new(positions, 0.0, delta).map_err(|e| whole("init.tiles", e))?
        };
        perturb(&state, self.init.jitter, self.seed, delta).map_err(|e| whole("init.jitter", e))
    }

    /// `output.dir`, unless the environment variable overrides it.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Serialises every key, so that parsing the text gives back `self`.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        let num = |x: f64| format!("{x:?}");
        for (prefix, c) in [("fs", &self.fs), ("fl", &self.fl)] {
            let Some(c) = c else { continue };
            let mut p = |name: &str, x: f64| kv(&format!("{prefix}.{name}"), num(x));
            let name = match &c.choice {
                CoeffChoice::Kc => "kc",
                CoeffChoice::Family(f) => match *f {
                    Family::KuckenRepulsion { alpha, beta, e_r } => {
                        p("alpha", alpha);
                        p("beta", beta);
                        p("e_r", e_r);
                        "kucken_repulsion"
                    }
                    Family::KuckenAttraction { gamma, e_a } => {
                        p("gamma", gamma);
                        p("e_a", e_a);
                        "kucken_attraction"
                    }
                    Family::Linear { a, b } => {
                        p("a", a);
                        p("b", b);
                        "linear"
                    }
                    Family::Algebraic { a, b, c } => {
                        p("a", a);
                        p("b", b);
                        p("c", c);
                        "algebraic"
                    }
                    Family::ExpShifted { c, e_s } => {
                        p("c", c);
                        p("e_s", e_s);
                        "exp_shifted"
                    }
                    Family::ExpSum { c1, c2, e1, e2 } => {
                        p("c1", c1);
                        p("c2", c2);
                        p("e1", e1);
                        p("e2", e2);
                        "exp_sum"
                    }
                    Family::Composite(_) => unreachable!("composite families are not configurable"),
                },
            };
            kv(&format!("{prefix}.family"), name.into());
            let mode = MODES.iter().find(|(_, m)| *m == c.mode).expect("every mode is named").0;
            kv(&format!("{prefix}.mode"), mode.into());
        }
        if let Some(kc) = &self.kc {
            kv("kc.alpha", num(kc.alpha));
            kv("kc.beta", num(kc.beta));
            kv("kc.gamma", num(kc.gamma));
            kv("kc.e_a", num(kc.e_a));
            kv("kc.e_r", num(kc.e_r));
        }
        kv("force.r_cutoff", num(self.r_cutoff));
        kv("force.epsilon", num(self.epsilon));
        kv("domain.size", num(self.domain_size));
        kv("field.chi", num(self.chi));
        kv("field.theta", num(self.field_theta));
        match self.sim.integrator {
            Integrator::Euler { dt } => {
                kv("sim.integrator", "euler".into());
                kv("sim.dt", num(dt));
            }
            Integrator::DormandPrince { abs_tol, rel_tol, dt_init, dt_max } => {
                kv("sim.integrator", "dormand_prince".into());
                kv("sim.abs_tol", num(abs_tol));
                kv("sim.rel_tol", num(rel_tol));
                kv("sim.dt_init", num(dt_init));
                kv("sim.dt_max", num(dt_max));
            }
        }
        kv("sim.t_max", num(self.sim.t_max));
        kv("sim.stationary_tol", num(self.sim.stationary_tol));
        kv("sim.snapshot_every", self.sim.snapshot_every.map_or("none".into(), num));
        let neighbor = match self.sim.method {
            NeighborSearch::CellList => "cell_list",
            NeighborSearch::BruteForce => "brute_force",
        };
        kv("sim.neighbor", neighbor.into());
        match self.init.kind {
            InitKind::Circle { n, center, radius } => {
                kv("init.kind", "circle".into());
                kv("init.n", n.to_string());
                kv("init.center", format!("{}, {}", num(center.x), num(center.y)));
                kv("init.radius", num(radius));
            }
            InitKind::Line { n, theta } => {
                kv("init.kind", "line".into());
                kv("init.n", n.to_string());
                kv("init.theta", num(theta));
            }
        }
        kv("init.tiles", self.init.tiles.to_string());
        kv("init.jitter", num(self.init.jitter));
        let line = match self.spectrum.line {
            LineKind::Vertical => "vertical",
            LineKind::Horizontal => "horizontal",
        };
        kv("spectrum.line", line.into());
        match self.spectrum.source {
            SpectrumKind::Continuum => kv("spectrum.source", "continuum".into()),
            SpectrumKind::DiscreteN(n) => {
                kv("spectrum.source", "discrete".into());
                kv("spectrum.n", n.to_string());
            }
        }
        kv("spectrum.m_min", self.spectrum.m_min.to_string());
        if let Some(m) = self.spectrum.m_max {
            kv("spectrum.m_max", m.to_string());
        }
        kv("forces.r_min", num(self.forces.r_min));
        if let Some(r) = self.forces.r_max {
            kv("forces.r_max", num(r));
        }
        kv("forces.points", self.forces.points.to_string());
        let rcs: Vec<String> = self.a0.r_cutoffs.iter().map(|&x| num(x)).collect();
        kv("a0.r_cutoffs", rcs.join(", "));
        kv("a0.epsilon", num(self.a0.epsilon));
        kv("a0.m_max", self.a0.m_max.to_string());
        kv("rotated.max_n", self.rotated.max_n.to_string());
        kv("output.dir", self.output_dir.display().to_string());
        kv("seed", self.seed.to_string());
        out
    }
}

/// Reads `path` (if any) and applies the overrides.
pub fn load_config<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|source| CliError::ConfigFile { path: p.to_path_buf(), source })?,
        None => String::new(),
    };
    Ok(parse_with_overrides(&text, overrides)?)
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Csv {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut csv = Self { path, out: BufWriter::new(file) };
        csv.row(header)?;
        Ok(csv)
    }

    fn row(&mut self, line: &str) -> Result<(), CliError> {
        writeln!(self.out, "{line}").map_err(io_err(&self.path))
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.out.flush().map_err(io_err(&self.path))?;
        Ok(self.path)
    }
}

/// Writes `x,y` rows to `dir/snapshot_<t>.csv`.
pub fn write_snapshot(dir: &Path, state: &ParticleState<f64>) -> Result<PathBuf, CliError> {
    let mut csv = Csv::create(dir, &format!("snapshot_{}.csv", state.time), "x,y")?;
    for p in &state.positions {
        csv.row(&format!("{},{}", fmt_num(p.x), fmt_num(p.y)))?;
    }
    csv.finish()
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<Vec<Vec2<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize| CliError::Io {
        path: path.to_path_buf(),
        source: io::Error::new(io::ErrorKind::InvalidData, format!("malformed row {line}")),
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h) != Some("x,y") {
        return Err(bad(1));
    }
    lines
        .map(|(i, l)| {
            let (x, y) = l.split_once(',').ok_or_else(|| bad(i + 1))?;
            match (x.parse(), y.parse()) {
                (Ok(x), Ok(y)) => Ok(Vec2::new(x, y)),
                _ => Err(bad(i + 1)),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub termination: Termination,
    pub final_state: ParticleState<f64>,
    pub final_residual: f64,
    pub steps: usize,
    pub files: Vec<PathBuf>,
}

/// Runs the simulation, writing snapshots and `summary.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateReport, CliError> {
    let sim = cfg.sim_config()?;
    let init = cfg.initial_state()?;
    let dir = cfg.resolved_output_dir();
    let start = Instant::now();
    let mut files = Vec::new();
    let mut io_failure = None;
    let outcome = simulate_with(&init, &sim, |s| match write_snapshot(&dir, s) {
        Ok(p) => {
            files.push(p);
            Ok(())
        }
        Err(e) => {
            io_failure = Some(e);
            Err(crate::Error::Invalid("snapshot could not be written".into()))
        }
    });
    if let Some(e) = io_failure {
        return Err(e);
    }
    let outcome = outcome?;
    if sim.snapshot_every.is_none() {
        files.push(write_snapshot(&dir, &outcome.final_state)?);
    }
    let termination = match outcome.termination {
        Termination::Stationary => "stationary",
        Termination::TimeExhausted => "time_exhausted",
    };
    let mut csv = Csv::create(&dir, "summary.csv", "termination,final_time,steps,final_residual,wall_time_s")?;
    csv.row(&format!(
        "{termination},{},{},{},{:.3}",
        fmt_num(outcome.final_state.time),
        outcome.steps,
        fmt_num(outcome.max_speed),
        start.elapsed().as_secs_f64()
    ))?;
    files.push(csv.finish()?);
    Ok(SimulateReport {
        termination: outcome.termination,
        final_state: outcome.final_state,
        final_residual: outcome.max_speed,
        steps: outcome.steps,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub modes: Vec<ModeEigs<f64>>,
    pub verdict: Verdict,
    pub file: PathBuf,
}

/// Writes `spectrum.csv` for the configured line and mode range.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<SpectrumReport, CliError> {
    let pair = cfg.pair()?;
    let quad = QuadratureSpec::default();
    let sc = &cfg.spectrum;
    let m_max = match (sc.m_max, sc.source) {
        (Some(m), _) => m,
        (None, SpectrumKind::DiscreteN(n)) => n as u64 - 1,
        (None, SpectrumKind::Continuum) => *default_continuum_modes(cfg.r_cutoff).end(),
    };
    let modes = sc.m_min..=m_max;
    let (list, verdict) = match sc.line {
        LineKind::Vertical => {
            let source = match sc.source {
                SpectrumKind::DiscreteN(n) => SpectrumSource::DiscreteN(n),
                SpectrumKind::Continuum => SpectrumSource::Continuum(quad),
            };
            let s = classify_vertical_line(&pair, source, modes)?;
            (s.modes, s.verdict)
        }
        LineKind::Horizontal => {
            let list: Vec<ModeEigs<f64>> = modes
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|m| horizontal_line_eigs(m, &pair, &quad).map(|(lambda1, lambda2)| ModeEigs { m, lambda1, lambda2 }))
                .collect::<crate::Result<_>>()?;
            let (a, b) = horizontal_line_eigs(1, &pair, &quad)?;
            let verdict = verdict_of(&list, a.norm().max(b.norm()));
            (list, verdict)
        }
    };
    let source = match sc.source {
        SpectrumKind::Continuum => "continuum".to_string(),
        SpectrumKind::DiscreteN(n) => format!("discrete_{n}"),
    };
    let dir = cfg.resolved_output_dir();
    let mut csv = Csv::create(&dir, "spectrum.csv", "m,re_lambda1,im_lambda1,re_lambda2,im_lambda2,source")?;
    for e in &list {
        csv.row(&format!(
            "{},{},{},{},{},{source}",
            e.m,
            fmt_num(e.lambda1.re),
            fmt_num(e.lambda1.im),
            fmt_num(e.lambda2.re),
            fmt_num(e.lambda2.im)
        ))?;
    }
    log::info!("spectrum verdict: {verdict:?}");
    Ok(SpectrumReport { modes: list, verdict, file: csv.finish()? })
}

/// Writes `forces.csv`. The `f_R` and `f_A` columns are filled only when
/// `f_l` is the `kc` family; they then carry `f_l`'s cutoff.
pub fn cmd_force_table(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let pair = cfg.pair()?;
    let parts = match (&cfg.fl, cfg.kc) {
        (Some(CoeffConfig { choice: CoeffChoice::Kc, mode }), Some(kc)) => {
            let mk = |f: Family<f64>| CoefficientSpec::new(f, cfg.r_cutoff, cfg.epsilon, *mode).map_err(|e| whole("kc", e));
            Some((mk(kc.repulsion())?, mk(kc.attraction())?))
        }
        _ => None,
    };
    let fc = &cfg.forces;
    let r_max = fc.r_max.unwrap_or(cfg.r_cutoff);
    if !(r_max > fc.r_min) || fc.r_min < 0.0 {
        return Err(whole("forces.r_max", "need 0 ≤ r_min < r_max").into());
    }
    let dir = cfg.resolved_output_dir();
    let mut csv = Csv::create(&dir, "forces.csv", "r,f_R,f_A,f_l,f_s")?;
    let steps = (fc.points - 1) as f64;
    for i in 0..fc.points {
        let r = fc.r_min + (r_max - fc.r_min) * (i as f64 / steps);
        let (fr, fa) = match &parts {
            Some((rep, att)) => (fmt_num(rep.value(r).map_err(crate::Error::from)?), fmt_num(att.value(r).map_err(crate::Error::from)?)),
            None => (String::new(), String::new()),
        };
        let fl = pair.f_l.value(r).map_err(crate::Error::from)?;
        let fs = pair.f_s.value(r).map_err(crate::Error::from)?;
        csv.row(&format!("{},{fr},{fa},{},{}", fmt_num(r), fmt_num(fl), fmt_num(fs)))?;
    }
    csv.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct A0Summary {
    pub r_cutoff: f64,
    pub argmax_m: u64,
    /// `R_c · max_m h/g`.
    pub rc_times_max: f64,
    /// `h/g` at the last sampled mode.
    pub tail: f64,
}

/// Writes `a0_scan.csv`, one block of rows per cutoff radius.
pub fn cmd_a0_scan(cfg: &RunConfig) -> Result<(Vec<A0Summary>, PathBuf), CliError> {
    let dir = cfg.resolved_output_dir();
    let mut csv = Csv::create(&dir, "a0_scan.csv", "R_c,m,h_over_g,Rc_times_max")?;
    let mut summaries = Vec::new();
    for &rc in &cfg.a0.r_cutoffs {
        let scan = linear_threshold_a0(1.0, rc, cfg.a0.epsilon, cfg.a0.m_max)?;
        let rc_max = rc * -scan.a0;
        for &(m, q) in &scan.curve {
            csv.row(&format!("{},{m},{},{}", fmt_num(rc), fmt_num(q), fmt_num(rc_max)))?;
        }
        let tail = scan.curve.last().map_or(f64::NAN, |&(_, q)| q);
        summaries.push(A0Summary { r_cutoff: rc, argmax_m: scan.argmax_m, rc_times_max: rc_max, tail });
    }
    Ok((summaries, csv.finish()?))
}

/// Writes `rotated.csv` over the admissible angles up to `rotated.max_n`.
pub fn cmd_rotated_scan(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let pair = cfg.pair()?;
    let quad = QuadratureSpec::default();
    let rows = admissible_angles::<f64>(cfg.rotated.max_n)
        .into_par_iter()
        .map(|theta| rotated_line_highwave(theta, &pair, &quad))
        .collect::<crate::Result<Vec<_>>>()?;
    let dir = cfg.resolved_output_dir();
    let mut csv = Csv::create(&dir, "rotated.csv", "theta,I11,I12,I21,I22,trace,det,stable_necessary")?;
    for r in rows {
        csv.row(&format!(
            "{},{},{},{},{},{},{},{}",
            fmt_num(r.theta),
            fmt_num(r.i11),
            fmt_num(r.i12),
            fmt_num(r.i21),
            fmt_num(r.i22),
            fmt_num(r.trace),
            fmt_num(r.det),
            r.stable_necessary
        ))?;
    }
    csv.finish()
}
