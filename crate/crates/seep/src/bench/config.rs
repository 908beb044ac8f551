//! Run configuration: the four builtin benchmarks with their published
//! defaults, a flat `key = value` config file, and the merge order
//! defaults < file < command line.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{
    dam_foundation, plate_with_hole, rect_dam_free_surface, transient_square, BcKind,
    BoundarySegment, Curve, Domain, Shape,
};
use crate::oracle::TRANSIENT_K;
use crate::physics::{conditioning_scale, ProblemSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown benchmark {0:?}: expected test1..test4 or a problem file path")]
    UnknownBenchmark(String),
    #[error("{file}:{line}: expected `key = value`, got {text:?}")]
    BadLine {
        file: String,
        line: usize,
        text: String,
    },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {why}")]
    BadValue {
        key: String,
        value: String,
        why: String,
    },
    #[error("problem file {file}: {why}")]
    Problem { file: String, why: String },
    #[error("config text names no benchmark")]
    MissingBenchmark,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ── Builtin benchmarks ──────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Benchmark {
    /// Steady flow around a recharging circular hole in a square plate.
    Test1,
    /// Steady flow under an impervious dam on a rectangular foundation.
    Test2,
    /// Rectangular embankment with a free surface and a seepage face.
    Test3,
    /// Transient head equalization on a square, reducible to one dimension.
    Test4,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::Test1,
        Benchmark::Test2,
        Benchmark::Test3,
        Benchmark::Test4,
    ];

    pub fn parse(s: &str) -> Option<Benchmark> {
        match s {
            "test1" => Some(Benchmark::Test1),
            "test2" => Some(Benchmark::Test2),
            "test3" => Some(Benchmark::Test3),
            "test4" => Some(Benchmark::Test4),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Test1 => "test1",
            Benchmark::Test2 => "test2",
            Benchmark::Test3 => "test3",
            Benchmark::Test4 => "test4",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Benchmark::Test1 => plate_with_hole(),
            Benchmark::Test2 => dam_foundation(),
            Benchmark::Test3 => rect_dam_free_surface(),
            Benchmark::Test4 => transient_square(),
        }
    }

    /// The physical problem behind the id, residual conditioning included.
    pub fn problem(self) -> ProblemSpec {
        let build = || match self {
            Benchmark::Test1 => {
                let k = 1e-3;
                let d = plate_with_hole();
                let s = conditioning_scale(&d, k);
                ProblemSpec::steady(d, k, k).map(|p| p.with_residual_scale(s))
            }
            Benchmark::Test2 => {
                let k = 1e-6;
                let d = dam_foundation();
                let s = conditioning_scale(&d, k);
                ProblemSpec::steady(d, k, k).map(|p| p.with_residual_scale(s))
            }
            Benchmark::Test3 => {
                let d = rect_dam_free_surface();
                let s = conditioning_scale(&d, 1.0);
                ProblemSpec::steady(d, 1.0, 1.0).map(|p| p.with_residual_scale(s))
            }
            Benchmark::Test4 => {
                ProblemSpec::transient(transient_square(), TRANSIENT_K, TRANSIENT_K, 1.0)
            }
        };
        build().expect("builtin problems are well formed")
    }
}

/// What a run trains on: a builtin benchmark or a problem file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Builtin(Benchmark),
    /// Steady box problem described by a key=value file; see [`load_problem`].
    Custom(PathBuf),
}

impl Target {
    /// Accepts a benchmark id, or failing that a path to a problem file.
    pub fn parse(s: &str) -> Target {
        match Benchmark::parse(s) {
            Some(b) => Target::Builtin(b),
            None => Target::Custom(PathBuf::from(s)),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Target::Builtin(b) => b.name(),
            Target::Custom(_) => "custom",
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec, ConfigError> {
        match self {
            Target::Builtin(b) => Ok(b.problem()),
            Target::Custom(path) => load_problem(path),
        }
    }
}

// ── Run configuration ───────────────────────────────────────────────────

/// Everything a run depends on. Every field lands in the report echo, so a
/// report always names its effective hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub target: Target,
    pub seed: u64,
    /// Head-network architecture.
    pub hidden_layers: usize,
    pub width: usize,
    /// Surface-height network architecture (free-surface runs only).
    pub surface_hidden_layers: usize,
    pub surface_width: usize,
    pub interior_points: usize,
    pub boundary_points: usize,
    /// Initial-condition points; transient runs only.
    pub initial_points: usize,
    pub adam_iters: usize,
    pub learning_rate: f64,
    pub lbfgs_iters: usize,
    pub weight_f: f64,
    pub weight_bc: f64,
    pub weight_ic: f64,
    pub weight_fs: f64,
    /// Free-surface runs redraw collocation points this often during the
    /// Adam stage (the water body moves with the surface estimate).
    pub resample_every: usize,
    pub out_dir: PathBuf,
    /// Optional collocation CSV replacing the seeded initial draw.
    pub points_file: Option<PathBuf>,
    /// Echoed into the report; evaluation order is fixed either way, so two
    /// runs with equal config and seed produce identical artifacts.
    pub deterministic: bool,
}

/// Defaults for a target. Builtin benchmarks reproduce the published
/// training setups: 50-neuron hidden layers, 4 of them for tests 1 and 2
/// and 8 for tests 3 and 4, Adam at 0.001 for 20000 iterations, then
/// L-BFGS; point budgets 1000/200, 2000/600, 2000/500, and 2000/500/500.
pub fn defaults(target: Target) -> RunConfig {
    let (hidden, interior, boundary, initial) = match target {
        Target::Builtin(Benchmark::Test1) => (4, 1000, 200, 0),
        Target::Builtin(Benchmark::Test2) => (4, 2000, 600, 0),
        Target::Builtin(Benchmark::Test3) => (8, 2000, 500, 0),
        Target::Builtin(Benchmark::Test4) => (8, 2000, 500, 500),
        Target::Custom(_) => (4, 2000, 500, 0),
    };
    let out_dir = PathBuf::from("out").join(target.name());
    RunConfig {
        target,
        seed: 0,
        hidden_layers: hidden,
        width: 50,
        surface_hidden_layers: 2,
        surface_width: 16,
        interior_points: interior,
        boundary_points: boundary,
        initial_points: initial,
        adam_iters: 20000,
        learning_rate: 1e-3,
        lbfgs_iters: 1500,
        weight_f: 1.0,
        weight_bc: 1.0,
        weight_ic: 1.0,
        weight_fs: 1.0,
        resample_every: 100,
        out_dir,
        points_file: None,
        deterministic: true,
    }
}

// ── Key=value plumbing ──────────────────────────────────────────────────

fn bad(key: &str, value: &str, why: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        why: why.to_string(),
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse().map_err(|e| bad(key, value, e))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value.parse().map_err(|e| bad(key, value, e))?;
    if !v.is_finite() {
        return Err(bad(key, value, "must be finite"));
    }
    Ok(v)
}

/// Applies one `key = value` setting. Keys mirror [`RunConfig`] field names,
/// with `benchmark` selecting the target.
pub fn apply_kv(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "benchmark" => cfg.target = Target::parse(value),
        "seed" => cfg.seed = value.parse().map_err(|e| bad(key, value, e))?,
        "hidden_layers" => cfg.hidden_layers = parse_usize(key, value)?,
        "width" => cfg.width = parse_usize(key, value)?,
        "surface_hidden_layers" => cfg.surface_hidden_layers = parse_usize(key, value)?,
        "surface_width" => cfg.surface_width = parse_usize(key, value)?,
        "interior_points" => cfg.interior_points = parse_usize(key, value)?,
        "boundary_points" => cfg.boundary_points = parse_usize(key, value)?,
        "initial_points" => cfg.initial_points = parse_usize(key, value)?,
        "adam_iters" => cfg.adam_iters = parse_usize(key, value)?,
        "learning_rate" => cfg.learning_rate = parse_f64(key, value)?,
        "lbfgs_iters" => cfg.lbfgs_iters = parse_usize(key, value)?,
        "weight_f" => cfg.weight_f = parse_f64(key, value)?,
        "weight_bc" => cfg.weight_bc = parse_f64(key, value)?,
        "weight_ic" => cfg.weight_ic = parse_f64(key, value)?,
        "weight_fs" => cfg.weight_fs = parse_f64(key, value)?,
        "resample_every" => {
            let v = parse_usize(key, value)?;
            if v == 0 {
                return Err(bad(key, value, "must be at least 1"));
            }
            cfg.resample_every = v;
        }
        "out_dir" => cfg.out_dir = PathBuf::from(value),
        "points_file" => {
            cfg.points_file = if value.is_empty() {
                None
            } else {
                Some(PathBuf::from(value))
            };
        }
        "deterministic" => {
            cfg.deterministic = match value {
                "true" => true,
                "false" => false,
                _ => return Err(bad(key, value, "expected true or false")),
            };
        }
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

fn apply_text(cfg: &mut RunConfig, text: &str, file: &str) -> Result<(), ConfigError> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::BadLine {
                file: file.to_string(),
                line: i + 1,
                text: raw.to_string(),
            });
        };
        apply_kv(cfg, k.trim(), v.trim())?;
    }
    Ok(())
}

/// Applies a config file on top of `cfg`. Blank lines and `#` comments are
/// ignored.
pub fn apply_file(cfg: &mut RunConfig, path: &Path) -> Result<(), ConfigError> {
    let text = std::fs::read_to_string(path)?;
    apply_text(cfg, &text, &path.display().to_string())
}

/// Builds a config from text alone: the `benchmark` key picks the defaults,
/// the remaining keys override them. Inverse of [`echo`].
pub fn from_text(text: &str) -> Result<RunConfig, ConfigError> {
    let mut target = None;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap().trim();
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "benchmark" {
                target = Some(Target::parse(v.trim()));
            }
        }
    }
    let mut cfg = defaults(target.ok_or(ConfigError::MissingBenchmark)?);
    apply_text(&mut cfg, text, "<text>")?;
    Ok(cfg)
}

/// The full configuration as config-file text, one key per line. Parsing the
/// echo with [`from_text`] reproduces the config exactly.
pub fn echo(cfg: &RunConfig) -> String {
    let benchmark = match &cfg.target {
        Target::Builtin(b) => b.name().to_string(),
        Target::Custom(path) => path.display().to_string(),
    };
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("benchmark", benchmark);
    kv("seed", cfg.seed.to_string());
    kv("hidden_layers", cfg.hidden_layers.to_string());
    kv("width", cfg.width.to_string());
    kv("surface_hidden_layers", cfg.surface_hidden_layers.to_string());
    kv("surface_width", cfg.surface_width.to_string());
    kv("interior_points", cfg.interior_points.to_string());
    kv("boundary_points", cfg.boundary_points.to_string());
    kv("initial_points", cfg.initial_points.to_string());
    kv("adam_iters", cfg.adam_iters.to_string());
    kv("learning_rate", format!("{:?}", cfg.learning_rate));
    kv("lbfgs_iters", cfg.lbfgs_iters.to_string());
    kv("weight_f", format!("{:?}", cfg.weight_f));
    kv("weight_bc", format!("{:?}", cfg.weight_bc));
    kv("weight_ic", format!("{:?}", cfg.weight_ic));
    kv("weight_fs", format!("{:?}", cfg.weight_fs));
    kv("resample_every", cfg.resample_every.to_string());
    kv("out_dir", cfg.out_dir.display().to_string());
    kv(
        "points_file",
        cfg.points_file
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    );
    kv("deterministic", cfg.deterministic.to_string());
    out
}

// ── Custom problems ─────────────────────────────────────────────────────

/// Loads a steady box problem from a key=value file. Required keys: `kx`,
/// `ky`, `lo`, `hi` (comma pairs), and one boundary condition per edge of
/// the box (`left`, `right`, `top`, `bottom`), each `dirichlet <head>` or
/// `neumann <flux>`. The residual is conditioned the same way the builtin
/// steady benchmarks are.
pub fn load_problem(path: &Path) -> Result<ProblemSpec, ConfigError> {
    let file = path.display().to_string();
    let problem = |why: String| ConfigError::Problem {
        file: file.clone(),
        why,
    };
    let text = std::fs::read_to_string(path)?;

    let mut kx = None;
    let mut ky = None;
    let mut lo = None;
    let mut hi = None;
    let mut edges: [Option<BcKind>; 4] = [None, None, None, None];

    let parse_pair = |key: &str, value: &str| -> Result<[f64; 2], ConfigError> {
        let parts: Vec<&str> = value.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(bad(key, value, "expected two comma-separated numbers"));
        }
        Ok([parse_f64(key, parts[0])?, parse_f64(key, parts[1])?])
    };
    let parse_bc = |key: &str, value: &str| -> Result<BcKind, ConfigError> {
        let (kind, v) = value
            .split_once(char::is_whitespace)
            .ok_or_else(|| bad(key, value, "expected `dirichlet <head>` or `neumann <flux>`"))?;
        let v = parse_f64(key, v.trim())?;
        match kind {
            "dirichlet" => Ok(BcKind::Dirichlet(v)),
            "neumann" => Ok(BcKind::Neumann(v)),
            _ => Err(bad(key, value, "expected `dirichlet` or `neumann`")),
        }
    };

    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::BadLine {
                file: file.clone(),
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        match k {
            "kx" => kx = Some(parse_f64(k, v)?),
            "ky" => ky = Some(parse_f64(k, v)?),
            "lo" => lo = Some(parse_pair(k, v)?),
            "hi" => hi = Some(parse_pair(k, v)?),
            "left" => edges[0] = Some(parse_bc(k, v)?),
            "right" => edges[1] = Some(parse_bc(k, v)?),
            "top" => edges[2] = Some(parse_bc(k, v)?),
            "bottom" => edges[3] = Some(parse_bc(k, v)?),
            _ => return Err(ConfigError::UnknownKey(k.to_string())),
        }
    }

    let need = |name: &str| problem(format!("missing required key {name:?}"));
    let kx = kx.ok_or_else(|| need("kx"))?;
    let ky = ky.ok_or_else(|| need("ky"))?;
    let lo = lo.ok_or_else(|| need("lo"))?;
    let hi = hi.ok_or_else(|| need("hi"))?;
    let names = ["left", "right", "top", "bottom"];
    let mut bcs = Vec::with_capacity(4);
    for (slot, name) in edges.into_iter().zip(names) {
        bcs.push(slot.ok_or_else(|| need(name))?);
    }
    if !(lo[0] < hi[0] && lo[1] < hi[1]) {
        return Err(problem(format!("box {lo:?}..{hi:?} has no area")));
    }

    // Outward-sign convention per edge matches the builtin box domains.
    let line = |a, b| Curve::Line { a, b };
    let segments = vec![
        BoundarySegment::new("left", line([lo[0], lo[1]], [lo[0], hi[1]]), bcs[0], -1.0),
        BoundarySegment::new("right", line([hi[0], lo[1]], [hi[0], hi[1]]), bcs[1], 1.0),
        BoundarySegment::new("top", line([lo[0], hi[1]], [hi[0], hi[1]]), bcs[2], -1.0),
        BoundarySegment::new("bottom", line([lo[0], lo[1]], [hi[0], lo[1]]), bcs[3], 1.0),
    ];
    let domain = Domain {
        name: "custom",
        lo,
        hi,
        shape: Shape::Box,
        segments,
        horizon: None,
        initial_head: None,
    };
    let scale = conditioning_scale(&domain, kx);
    ProblemSpec::steady(domain, kx, ky)
        .map(|p| p.with_residual_scale(scale))
        .map_err(|e| problem(e.to_string()))
}

// ── Tests ───────────────────────────────────────────────────────────────
