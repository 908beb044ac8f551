//! The end-to-end pipeline behind `seep run`: draw collocation points,
//! train with Adam and then L-BFGS, evaluate against the benchmark's
//! reference, and write the artifact set (report.json, field.csv, points.csv,
//! checkpoints, plus surface and monitor files where the problem has them).

use std::cell::{Cell, RefCell};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bench::config::{Benchmark, ConfigError, RunConfig, Target};
use crate::bench::metrics::{e_l2, mean_relative_error, MetricsError};
use crate::bench::report::{
    Artifacts, ConfigEcho, DirichletCheck, HistoryEntry, MetricsBlock, MonitorValue, NetworkEcho,
    ProblemEcho, RunReport, Termination, Timings,
};
use crate::autodiff::Activation;
use crate::geometry::{self, sample, BcKind, Domain, GeometryError, SamplePlan, SampleSet};
use crate::network::{forward_flat, save_checkpoint, NetConfig, NetError, NetworkParams};
use crate::optim::{lbfgs_minimize_observed, AdamState, LbfgsOptions, OptimError};
use crate::oracle::{
    fdm_steady_refined, reference_table, series_transient, OracleError, Quantity, ReferenceTable,
    Source,
};
use crate::physics::{
    resample_free_domain, FreeSurfaceModel, LossEvaluator, LossWeights, PhysicsError, ProblemSpec,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(
        "non-finite {what} at {stage} step {step}; last good parameters are in {}",
        checkpoint.display()
    )]
    NonFinite {
        what: &'static str,
        stage: &'static str,
        step: usize,
        checkpoint: PathBuf,
    },
    #[error("inconsistent report: {0}")]
    Inconsistent(String),
}

/// Training progress, emitted on the same cadence the loss history is
/// sampled on: every hundred Adam steps and every accepted L-BFGS iteration.
#[derive(Clone, Copy, Debug)]
pub struct Progress {
    pub stage: &'static str,
    pub step: usize,
    /// Stage length; the L-BFGS stage may stop earlier.
    pub steps: usize,
    pub total: f64,
}

/// Evaluation lattice nodes per axis (and per time axis for transient runs).
pub const LATTICE_N: usize = 101;
/// Snapshot times of the transient field artifact, as fractions of the
/// horizon.
pub const SLICE_FRACTIONS: [f64; 6] = [0.0, 0.02, 0.05, 0.1, 0.5, 1.0];
/// Truncation of the separation-of-variables reference; coefficients decay
/// as 1/n^2, so the tail is orders below the tolerances at stake.
const SERIES_TERMS: usize = 400;
/// Fresh boundary points for the post-training Dirichlet audit.
const DIRICHLET_PROBES: usize = 1000;

pub fn run_benchmark(cfg: &RunConfig) -> Result<RunReport, RunError> {
    run_benchmark_observed(cfg, |_| {})
}

pub fn run_benchmark_observed(
    cfg: &RunConfig,
    mut progress: impl FnMut(Progress),
) -> Result<RunReport, RunError> {
    let t_start = Instant::now();
    let mut spec = cfg.target.problem()?;
    spec.weights = LossWeights {
        f: cfg.weight_f,
        bc: cfg.weight_bc,
        ic: cfg.weight_ic,
        fs: cfg.weight_fs,
    };
    let domain = spec.domain.clone();
    std::fs::create_dir_all(&cfg.out_dir)?;
    let checkpoint_path = cfg.out_dir.join("checkpoint.bin");

    let h_cfg = NetConfig::new(spec.input_dim(), cfg.hidden_layers, cfg.width, Activation::Tanh);
    h_cfg.validate()?;
    let norm = spec.normalizer();

    // The surface net draws from the next seed so the two initializations
    // stay distinct streams of the run seed.
    let is_fs = domain.segments.iter().any(|s| s.bc == BcKind::FreeSurface);
    let mut fs = if is_fs {
        let mut f = FreeSurfaceModel::new(
            &domain,
            cfg.surface_hidden_layers,
            cfg.surface_width,
            cfg.seed.wrapping_add(1),
        )?;
        f.resample_every = cfg.resample_every;
        Some(f)
    } else {
        None
    };
    let eta_cfg = fs.as_ref().map(|f| f.net.config);

    // ── Collocation points ──────────────────────────────────────────
    let t_sample = Instant::now();
    let plan = SamplePlan::new(cfg.interior_points, cfg.boundary_points, cfg.initial_points);
    let samples = match &cfg.points_file {
        Some(pf) => SampleSet::from_csv(&domain, &std::fs::read_to_string(pf)?)?,
        None => match fs.as_ref() {
            Some(f) => resample_free_domain(f, &domain, &plan, cfg.seed, 0)?,
            None => sample(&domain, &plan, cfg.seed)?,
        },
    };
    std::fs::write(cfg.out_dir.join("points.csv"), samples.to_csv(&domain))?;

    let mut theta = NetworkParams::init(h_cfg, cfg.seed).flatten();
    if let Some(f) = fs.as_ref() {
        theta.extend_from_slice(&f.net.flatten());
    }
    let mut evaluator = LossEvaluator::new(&spec, &h_cfg, fs.as_ref())?;
    evaluator.set_samples(&samples)?;
    let n = evaluator.n_params();
    let n_h = evaluator.n_head_params();
    let counts = evaluator.counts();
    let sample_s = t_sample.elapsed().as_secs_f64();

    let save_nets = |theta: &[f64]| -> Result<(), RunError> {
        save_checkpoint(&checkpoint_path, &h_cfg, cfg.seed, &theta[..n_h])?;
        if let Some(ec) = eta_cfg {
            save_checkpoint(
                &cfg.out_dir.join("surface_net.bin"),
                &ec,
                cfg.seed.wrapping_add(1),
                &theta[n_h..],
            )?;
        }
        Ok(())
    };
    let non_finite = |what: &'static str, stage: &'static str, step: usize| RunError::NonFinite {
        what,
        stage,
        step,
        checkpoint: checkpoint_path.clone(),
    };

    // ── Stage one: Adam on the full batch ───────────────────────────
    let t_adam = Instant::now();
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut adam = AdamState::new(n, cfg.learning_rate);
    let mut grad = vec![0.0; n];
    let mut last_good = theta.clone();
    for step in 0..cfg.adam_iters {
        if step > 0 && step % cfg.resample_every == 0 {
            if let Some(f) = fs.as_mut() {
                f.net = NetworkParams::unflatten(eta_cfg.unwrap(), theta[n_h..].to_vec())?;
                let set = resample_free_domain(f, &domain, &plan, cfg.seed, step)?;
                evaluator.set_samples(&set)?;
            }
        }
        let bd = evaluator.eval(&theta, &mut grad);
        if !bd.total.is_finite() {
            save_nets(&last_good)?;
            return Err(non_finite("loss", "adam", step));
        }
        last_good.copy_from_slice(&theta);
        if step % 100 == 0 {
            history.push(HistoryEntry::new("adam", step, &bd));
            progress(Progress { stage: "adam", step, steps: cfg.adam_iters, total: bd.total });
        }
        if adam.step(&mut theta, &grad).is_err() {
            // The failed step leaves the parameters untouched, and their
            // loss was just checked, so they are the last good state.
            save_nets(&theta)?;
            return Err(non_finite("gradient", "adam", step));
        }
    }
    let bd = evaluator.eval(&theta, &mut grad);
    if !bd.total.is_finite() {
        save_nets(&last_good)?;
        return Err(non_finite("loss", "adam", cfg.adam_iters));
    }
    history.push(HistoryEntry::new("adam", cfg.adam_iters, &bd));
    progress(Progress {
        stage: "adam",
        step: cfg.adam_iters,
        steps: cfg.adam_iters,
        total: bd.total,
    });
    save_nets(&theta)?;
    let adam_s = t_adam.elapsed().as_secs_f64();

    // ── Stage two: L-BFGS on frozen points ──────────────────────────
    // Free-surface runs refresh the water body for the surface the first
    // stage settled on, then keep the draw fixed for the whole stage.
    let t_lbfgs = Instant::now();
    if let Some(f) = fs.as_mut() {
        f.net = NetworkParams::unflatten(eta_cfg.unwrap(), theta[n_h..].to_vec())?;
        let set = resample_free_domain(f, &domain, &plan, cfg.seed, cfg.adam_iters)?;
        evaluator.set_samples(&set)?;
    }
    let bd0 = evaluator.eval(&theta, &mut grad);
    if !bd0.total.is_finite() {
        return Err(non_finite("loss", "lbfgs", 0));
    }
    history.push(HistoryEntry::new("lbfgs", 0, &bd0));
    let adam_final_total = bd0.total;

    let eval_cell = RefCell::new((evaluator, grad));
    let stash = Cell::new(bd0);
    let history_cell = RefCell::new(history);
    let opts = LbfgsOptions {
        max_iters: cfg.lbfgs_iters,
        ..LbfgsOptions::default()
    };
    let result = lbfgs_minimize_observed(
        |x: &[f64]| {
            let (ev, g) = &mut *eval_cell.borrow_mut();
            let bd = ev.eval(x, g);
            stash.set(bd);
            (bd.total, g.clone())
        },
        theta,
        &opts,
        |iter, x, f| {
            // The stash usually holds this iterate's terms already; recompute
            // on the rare iteration whose last oracle probe was rejected.
            let bd = if stash.get().total == f {
                stash.get()
            } else {
                let (ev, g) = &mut *eval_cell.borrow_mut();
                ev.eval(x, g)
            };
            history_cell.borrow_mut().push(HistoryEntry::new("lbfgs", iter, &bd));
            progress(Progress { stage: "lbfgs", step: iter, steps: cfg.lbfgs_iters, total: f });
        },
    )?;
    let theta = result.x;
    let mut history = history_cell.into_inner();
    let (mut evaluator, mut grad) = eval_cell.into_inner();
    let bd_final = evaluator.eval(&theta, &mut grad);
    if history.last().map(|e| e.stage) != Some("lbfgs") {
        history.push(HistoryEntry::new("lbfgs", result.iters, &bd_final));
    }
    if let Some(f) = fs.as_mut() {
        f.net = NetworkParams::unflatten(eta_cfg.unwrap(), theta[n_h..].to_vec())?;
    }
    save_nets(&theta)?;
    let lbfgs_s = t_lbfgs.elapsed().as_secs_f64();

    // ── Evaluation and artifacts ────────────────────────────────────
    let t_eval = Instant::now();
    let predict = |p: &[f64]| forward_flat(&h_cfg, &theta[..n_h], &norm.map_point(p));
    let ev = evaluate_target(&cfg.target, &spec, &predict, fs.as_ref())?;
    std::fs::write(cfg.out_dir.join("field.csv"), &ev.field_csv)?;
    if let Some(s) = &ev.surface_csv {
        std::fs::write(cfg.out_dir.join("surface.csv"), s)?;
    }
    if let Some(m) = &ev.monitor_csv {
        std::fs::write(cfg.out_dir.join("monitor.csv"), m)?;
    }
    let dirichlet_check = audit_dirichlet(&spec, &predict, cfg.seed, bd_final.loss_bc);
    let eval_s = t_eval.elapsed().as_secs_f64();

    let report = RunReport {
        benchmark: cfg.target.name().to_string(),
        seed: cfg.seed,
        deterministic: cfg.deterministic,
        config: ConfigEcho::from_config(cfg),
        problem: ProblemEcho {
            domain: domain.name.to_string(),
            kx: spec.kx,
            ky: spec.ky,
            ss: spec.transient.then_some(spec.ss),
            residual_scale: spec.residual_scale,
            horizon: domain.horizon,
            transient: spec.transient,
        },
        network: NetworkEcho {
            activation: "tanh".to_string(),
            head_params: n_h,
            surface_params: (n > n_h).then_some(n - n_h),
        },
        counts,
        history,
        adam_final_total,
        final_loss: bd_final,
        metrics: ev.metrics,
        dirichlet_check,
        termination: Termination {
            adam: "completed".to_string(),
            lbfgs: result.reason.name().to_string(),
            lbfgs_iters: result.iters,
        },
        artifacts: Artifacts {
            report: "report.json",
            field: "field.csv",
            points: "points.csv",
            checkpoint: "checkpoint.bin",
            surface: ev.surface_csv.is_some().then_some("surface.csv"),
            surface_checkpoint: eta_cfg.is_some().then_some("surface_net.bin"),
            monitor: ev.monitor_csv.is_some().then_some("monitor.csv"),
        },
        timings: Timings {
            sample_s,
            adam_s,
            lbfgs_s,
            eval_s,
            total_s: t_start.elapsed().as_secs_f64(),
        },
    };
    report.validate().map_err(RunError::Inconsistent)?;
    std::fs::write(cfg.out_dir.join("report.json"), report.to_json())?;
    Ok(report)
}

// ── Evaluation ──────────────────────────────────────────────────────────

struct EvalOutputs {
    metrics: MetricsBlock,
    field_csv: String,
    surface_csv: Option<String>,
    monitor_csv: Option<String>,
}

fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn quantity_name(q: Quantity) -> &'static str {
    match q {
        Quantity::Head => "head",
        Quantity::SurfaceHeight => "surface-height",
    }
}

/// Our prediction at every location a published source reports, labelled
/// with that source's value for side-by-side context.
fn context_rows(
    table: &ReferenceTable,
    sources: &[Source],
    mut predicted: impl FnMut(&crate::oracle::ReferenceEntry) -> f64,
) -> Vec<MonitorValue> {
    table
        .entries
        .iter()
        .filter(|e| sources.contains(&e.source))
        .map(|e| MonitorValue {
            quantity: quantity_name(e.quantity),
            x: e.location[0],
            y: matches!(e.quantity, Quantity::Head).then_some(e.location[1]),
            t: None,
            predicted: predicted(e),
            reference: Some(e.value),
            source: e.citation.to_string(),
        })
        .collect()
}

fn evaluate_target(
    target: &Target,
    spec: &ProblemSpec,
    predict: &dyn Fn(&[f64]) -> f64,
    fs: Option<&FreeSurfaceModel>,
) -> Result<EvalOutputs, RunError> {
    match target {
        Target::Builtin(Benchmark::Test1) => evaluate_plate(spec, predict),
        Target::Builtin(Benchmark::Test2) => evaluate_dam(spec, predict),
        Target::Builtin(Benchmark::Test3) => {
            let fs = fs.expect("the free-surface benchmark trains a surface net");
            evaluate_embankment(spec, predict, fs)
        }
        Target::Builtin(Benchmark::Test4) => evaluate_transient(spec, predict),
        Target::Custom(_) => {
            let field_csv = steady_field_csv(&spec.domain, predict, |_, _| true);
            Ok(EvalOutputs {
                metrics: MetricsBlock::empty("none"),
                field_csv,
                surface_csv: None,
                monitor_csv: None,
            })
        }
    }
}

/// Steady lattice field rows "x,y,h" for nodes inside the domain that also
/// pass `keep`.
fn steady_field_csv(
    domain: &Domain,
    predict: &dyn Fn(&[f64]) -> f64,
    keep: impl Fn(f64, f64) -> bool,
) -> String {
    let xs = lattice(domain.lo[0], domain.hi[0], LATTICE_N);
    let ys = lattice(domain.lo[1], domain.hi[1], LATTICE_N);
    let mut out = String::from("x,y,h\n");
    for &y in &ys {
        for &x in &xs {
            if domain.contains([x, y]) && keep(x, y) {
                let h = predict(&[x, y]);
                writeln!(out, "{x:?},{y:?},{h:?}").unwrap();
            }
        }
    }
    out
}

fn evaluate_plate(spec: &ProblemSpec, predict: &dyn Fn(&[f64]) -> f64) -> Result<EvalOutputs, RunError> {
    let domain = &spec.domain;
    let table = reference_table("test1")?;
    let monitor_xy = table.locations(Source::Fem);
    let refined = fdm_steady_refined(domain, &monitor_xy)?;
    let oracle_mon = refined.monitors().to_vec();
    let pred_mon: Vec<f64> = monitor_xy.iter().map(|p| predict(p)).collect();

    let mut field_pred = Vec::new();
    let mut field_ref = Vec::new();
    let xs = lattice(domain.lo[0], domain.hi[0], LATTICE_N);
    let ys = lattice(domain.lo[1], domain.hi[1], LATTICE_N);
    let mut field_csv = String::from("x,y,h\n");
    for &y in &ys {
        for &x in &xs {
            if domain.contains([x, y]) {
                let h = predict(&[x, y]);
                writeln!(field_csv, "{x:?},{y:?},{h:?}").unwrap();
                field_pred.push(h);
                field_ref.push(refined.field.value_at(x, y));
            }
        }
    }

    let monitors = monitor_xy
        .iter()
        .zip(&pred_mon)
        .zip(&oracle_mon)
        .map(|((p, &pred), &r)| MonitorValue {
            quantity: "head",
            x: p[0],
            y: Some(p[1]),
            t: None,
            predicted: pred,
            reference: Some(r),
            source: "finite-difference oracle, refined until monitor-stable".to_string(),
        })
        .collect();
    let context = context_rows(&table, &[Source::Fem, Source::ReportedPinn], |e| {
        predict(&e.location)
    });

    let mut metrics = MetricsBlock::empty("finite-difference oracle");
    metrics.monitors = monitors;
    metrics.context = context;
    metrics.e_l2_monitors = Some(e_l2(&pred_mon, &oracle_mon)?);
    metrics.e_l2_field = Some(e_l2(&field_pred, &field_ref)?);
    Ok(EvalOutputs {
        metrics,
        field_csv,
        surface_csv: None,
        monitor_csv: None,
    })
}

fn evaluate_dam(spec: &ProblemSpec, predict: &dyn Fn(&[f64]) -> f64) -> Result<EvalOutputs, RunError> {
    let domain = &spec.domain;
    let table = reference_table("test2")?;
    let locs = table.locations(Source::Analytical);
    let analytical = table.values(Source::Analytical);
    let fem = table.values(Source::Fem);
    let pred_mon: Vec<f64> = locs.iter().map(|p| predict(p)).collect();

    let monitors = locs
        .iter()
        .zip(&pred_mon)
        .zip(table.entries.iter().filter(|e| e.source == Source::Analytical))
        .map(|((p, &pred), e)| MonitorValue {
            quantity: "head",
            x: p[0],
            y: Some(p[1]),
            t: None,
            predicted: pred,
            reference: Some(e.value),
            source: e.citation.to_string(),
        })
        .collect();
    let context = context_rows(&table, &[Source::Fem, Source::ReportedPinn], |e| {
        predict(&e.location)
    });

    let mut metrics = MetricsBlock::empty("analytical monitor heads");
    metrics.monitors = monitors;
    metrics.context = context;
    metrics.e_l2_monitors = Some(e_l2(&pred_mon, &analytical)?);
    metrics.e_l2_fem_triple = Some(e_l2(&fem, &analytical)?);
    // The middle monitor sits on the symmetry axis of the dam, where the
    // head must split the upstream and downstream values evenly.
    metrics.midpoint_error = Some((pred_mon[1] - analytical[1]).abs());
    Ok(EvalOutputs {
        metrics,
        field_csv: steady_field_csv(domain, predict, |_, _| true),
        surface_csv: None,
        monitor_csv: None,
    })
}

fn evaluate_embankment(
    spec: &ProblemSpec,
    predict: &dyn Fn(&[f64]) -> f64,
    fs: &FreeSurfaceModel,
) -> Result<EvalOutputs, RunError> {
    let domain = &spec.domain;
    let table = reference_table("test3")?;
    let stations: Vec<f64> = table
        .locations(Source::Experiment)
        .iter()
        .map(|p| p[0])
        .collect();
    let experiment = table.values(Source::Experiment);
    let pred_st: Vec<f64> = stations.iter().map(|&x| fs.eta(x)).collect();

    let monitors = stations
        .iter()
        .zip(&pred_st)
        .zip(table.entries.iter().filter(|e| e.source == Source::Experiment))
        .map(|((&x, &pred), e)| MonitorValue {
            quantity: "surface-height",
            x,
            y: None,
            t: None,
            predicted: pred,
            reference: Some(e.value),
            source: e.citation.to_string(),
        })
        .collect();
    let context = context_rows(&table, &[Source::Fem, Source::ReportedPinn], |e| {
        fs.eta(e.location[0])
    });

    let xs = lattice(domain.lo[0], domain.hi[0], LATTICE_N);
    let mut surface_csv = String::from("x,eta\n");
    let mut heights = Vec::with_capacity(xs.len());
    for &x in &xs {
        let eta = fs.eta(x);
        writeln!(surface_csv, "{x:?},{eta:?}").unwrap();
        heights.push(eta);
    }
    let monotone = heights.windows(2).all(|w| w[1] <= w[0]);

    let mut metrics = MetricsBlock::empty("embankment experiment stations");
    metrics.monitors = monitors;
    metrics.context = context;
    metrics.e_l2_monitors = Some(e_l2(&pred_st, &experiment)?);
    metrics.surface_mean_relative_error = Some(mean_relative_error(&pred_st, &experiment)?);
    metrics.surface_at_inlet = Some(fs.eta(domain.lo[0]));
    metrics.surface_monotone = Some(monotone);
    // The head field is physical only inside the water body, below the
    // trained surface.
    let field_csv = steady_field_csv(domain, predict, |x, y| y <= fs.eta(x));
    Ok(EvalOutputs {
        metrics,
        field_csv,
        surface_csv: Some(surface_csv),
        monitor_csv: None,
    })
}

fn evaluate_transient(
    spec: &ProblemSpec,
    predict: &dyn Fn(&[f64]) -> f64,
) -> Result<EvalOutputs, RunError> {
    let domain = &spec.domain;
    let horizon = domain.horizon.expect("transient domains carry a horizon");
    let center = [
        0.5 * (domain.lo[0] + domain.hi[0]),
        0.5 * (domain.lo[1] + domain.hi[1]),
    ];

    // Head-versus-time trace at the domain center.
    let ts = lattice(0.0, horizon, LATTICE_N);
    let mut monitor_csv = String::from("t,h,reference\n");
    let mut max_err = 0.0f64;
    for &t in &ts {
        let h = predict(&[center[0], center[1], t]);
        let r = series_transient(center[0], t, SERIES_TERMS);
        writeln!(monitor_csv, "{t:?},{h:?},{r:?}").unwrap();
        max_err = max_err.max((h - r).abs());
    }

    let xs = lattice(domain.lo[0], domain.hi[0], LATTICE_N);
    let ys = lattice(domain.lo[1], domain.hi[1], LATTICE_N);
    let mut field_csv = String::from("x,y,t,h\n");
    let mut pred_all = Vec::new();
    let mut ref_all = Vec::new();
    let mut monitors = Vec::new();
    for &frac in &SLICE_FRACTIONS {
        let t = frac * horizon;
        for &y in &ys {
            for &x in &xs {
                let h = predict(&[x, y, t]);
                writeln!(field_csv, "{x:?},{y:?},{t:?},{h:?}").unwrap();
                pred_all.push(h);
                ref_all.push(series_transient(x, t, SERIES_TERMS));
            }
        }
        monitors.push(MonitorValue {
            quantity: "head",
            x: center[0],
            y: Some(center[1]),
            t: Some(t),
            predicted: predict(&[center[0], center[1], t]),
            reference: Some(series_transient(center[0], t, SERIES_TERMS)),
            source: "separation-of-variables series".to_string(),
        });
    }

    let mut metrics = MetricsBlock::empty("separation-of-variables series");
    metrics.monitors = monitors;
    metrics.max_monitor_error = Some(max_err);
    metrics.e_l2_spacetime = Some(e_l2(&pred_all, &ref_all)?);
    Ok(EvalOutputs {
        metrics,
        field_csv,
        surface_csv: None,
        monitor_csv: Some(monitor_csv),
    })
}

// ── Boundary audit ──────────────────────────────────────────────────────

/// Probes the trained head at fresh Dirichlet boundary points and compares
/// the worst mismatch against what the final boundary loss admits. The
/// probe stream is disjoint from every training stream.
fn audit_dirichlet(
    spec: &ProblemSpec,
    predict: &dyn Fn(&[f64]) -> f64,
    seed: u64,
    final_loss_bc: f64,
) -> DirichletCheck {
    let dirichlet: Vec<(&geometry::BoundarySegment, f64)> = spec
        .domain
        .segments
        .iter()
        .filter_map(|s| match s.bc {
            BcKind::Dirichlet(g) => Some((s, g)),
            _ => None,
        })
        .collect();
    let bound = 10.0 * final_loss_bc.max(0.0).sqrt();
    if dirichlet.is_empty() {
        return DirichletCheck {
            probes: 0,
            max_abs_mismatch: 0.0,
            bound,
            passed: true,
        };
    }

    let lengths: Vec<f64> = dirichlet.iter().map(|(s, _)| s.curve.length()).collect();
    let counts = geometry::allocate_by_length(DIRICHLET_PROBES, &lengths);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(6 << 48);
    let nudge = geometry::ENDPOINT_NUDGE;
    let mut max_abs = 0.0f64;
    for ((seg, g), m) in dirichlet.iter().zip(counts) {
        for _ in 0..m {
            let u: f64 = rng.gen();
            let p = seg.curve.point_at(nudge + u * (1.0 - 2.0 * nudge));
            let h = if spec.transient {
                let t: f64 = rng.gen::<f64>() * spec.domain.horizon.unwrap();
                predict(&[p[0], p[1], t])
            } else {
                predict(&p)
            };
            max_abs = max_abs.max((h - g).abs());
        }
    }
    DirichletCheck {
        probes: DIRICHLET_PROBES,
        max_abs_mismatch: max_abs,
        bound,
        passed: max_abs <= bound,
    }
}

// ── Tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::{defaults, Benchmark, Target};
    use crate::bench::report::without_timings;
    use crate::network::load_checkpoint;

    /// A dam run small enough for a unit test: the pipeline runs end to end
    /// and the artifacts land; nothing here is expected to converge.
    fn tiny_dam_config(dir: &std::path::Path) -> RunConfig {
        let mut cfg = defaults(Target::Builtin(Benchmark::Test2));
        cfg.hidden_layers = 2;
        cfg.width = 8;
        cfg.interior_points = 60;
        cfg.boundary_points = 30;
        cfg.adam_iters = 30;
        cfg.lbfgs_iters = 5;
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn pipeline_produces_the_full_artifact_set() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_dam_config(dir.path());
        let report = run_benchmark(&cfg).expect("tiny run completes");

        for name in ["report.json", "field.csv", "points.csv", "checkpoint.bin"] {
            assert!(dir.path().join(name).exists(), "{name} written");
        }
        let (net_cfg, seed, theta) = load_checkpoint(&dir.path().join("checkpoint.bin")).unwrap();
        assert_eq!(seed, 0);
        assert_eq!(net_cfg.hidden_layers, 2);
        assert_eq!(theta.len(), report.network.head_params);

        assert_eq!(report.benchmark, "test2");
        assert_eq!(report.counts.interior, 60);
        assert!(report.final_loss.total <= report.adam_final_total, "second stage never ends higher");
        assert!(report.metrics.e_l2_monitors.is_some());
        assert!(report.metrics.midpoint_error.is_some());
        assert_eq!(report.metrics.monitors.len(), 3, "three dam monitors");
        assert_eq!(report.metrics.context.len(), 6, "published triples alongside");

        let field = std::fs::read_to_string(dir.path().join("field.csv")).unwrap();
        assert!(field.starts_with("x,y,h\n"));
        assert_eq!(
            field.lines().count(),
            1 + LATTICE_N * LATTICE_N,
            "dam box keeps every lattice node"
        );

        let adam_entries = report.history.iter().filter(|e| e.stage == "adam").count();
        assert_eq!(adam_entries, 2, "steps 0 and 30 of a 30-step stage");
        assert!(report.history.iter().any(|e| e.stage == "lbfgs"));
    }

    #[test]
    fn rerunning_the_same_config_reproduces_the_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_dam_config(dir.path());
        run_benchmark(&cfg).unwrap();
        let first = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        run_benchmark(&cfg).unwrap();
        let second = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert_eq!(
            without_timings(&first).unwrap(),
            without_timings(&second).unwrap(),
            "everything but wall time is reproducible"
        );
    }

    #[test]
    fn a_run_can_restart_from_its_own_points_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_dam_config(dir.path());
        let report = run_benchmark(&cfg).unwrap();

        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg2 = tiny_dam_config(dir2.path());
        cfg2.points_file = Some(dir.path().join("points.csv"));
        let report2 = run_benchmark(&cfg2).unwrap();
        assert_eq!(report2.counts, report.counts, "same collocation set");
        assert_eq!(
            report2.final_loss.total, report.final_loss.total,
            "identical points and seed retrace the same training"
        );
    }

    #[test]
    fn non_finite_loss_aborts_with_a_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_dam_config(dir.path());
        cfg.weight_f = f64::INFINITY;
        match run_benchmark(&cfg) {
            Err(RunError::NonFinite { what, stage, step, checkpoint }) => {
                assert_eq!(what, "loss");
                assert_eq!(stage, "adam");
                assert_eq!(step, 0);
                assert!(checkpoint.exists(), "last good parameters saved");
                let (_, _, theta) = load_checkpoint(&checkpoint).unwrap();
                assert!(theta.iter().all(|v| v.is_finite()));
            }
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn progress_reports_both_stages_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_dam_config(dir.path());
        let mut events: Vec<(String, usize)> = Vec::new();
        run_benchmark_observed(&cfg, |p| events.push((p.stage.to_string(), p.step))).unwrap();
        assert_eq!(events[0], ("adam".to_string(), 0));
        assert!(events.iter().any(|(s, _)| s == "lbfgs"), "second stage observed");
        let first_lbfgs = events.iter().position(|(s, _)| s == "lbfgs").unwrap();
        assert!(
            events[..first_lbfgs].iter().all(|(s, _)| s == "adam"),
            "stages arrive in order"
        );
    }

    #[test]
    fn custom_problems_train_and_report_without_references() {
        let dir = tempfile::tempdir().unwrap();
        let prob = dir.path().join("box.prob");
        std::fs::write(
            &prob,
            "kx = 1\nky = 1\nlo = 0,0\nhi = 1,1\n\
             left = dirichlet 1\nright = dirichlet 0\ntop = neumann 0\nbottom = neumann 0\n",
        )
        .unwrap();
        let mut cfg = defaults(Target::Custom(prob));
        cfg.hidden_layers = 2;
        cfg.width = 8;
        cfg.interior_points = 40;
        cfg.boundary_points = 20;
        cfg.adam_iters = 20;
        cfg.lbfgs_iters = 3;
        cfg.out_dir = dir.path().join("out");
        let report = run_benchmark(&cfg).unwrap();
        assert_eq!(report.benchmark, "custom");
        assert_eq!(report.metrics.reference, "none");
        assert!(report.metrics.monitors.is_empty());
        assert!(report.config.problem_file.is_some());
        assert!(dir.path().join("out/field.csv").exists());
    }

    #[test]
    fn free_surface_runs_emit_surface_artifacts() {
        // A few dozen steps of the embankment exercise resampling, the
        // packed two-net parameter vector, and the surface artifacts.
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = defaults(Target::Builtin(Benchmark::Test3));
        cfg.hidden_layers = 2;
        cfg.width = 8;
        cfg.surface_hidden_layers = 1;
        cfg.surface_width = 4;
        cfg.interior_points = 50;
        cfg.boundary_points = 30;
        cfg.adam_iters = 25;
        cfg.resample_every = 10;
        cfg.lbfgs_iters = 3;
        cfg.out_dir = dir.path().to_path_buf();
        let report = run_benchmark(&cfg).unwrap();

        assert!(report.network.surface_params.is_some());
        assert!(dir.path().join("surface.csv").exists());
        assert!(dir.path().join("surface_net.bin").exists());
        let (eta_cfg, eta_seed, eta_theta) =
            load_checkpoint(&dir.path().join("surface_net.bin")).unwrap();
        assert_eq!(eta_seed, 1, "surface net draws from the next seed");
        assert_eq!(eta_cfg.input_dim, 1);
        assert_eq!(eta_theta.len(), report.network.surface_params.unwrap());

        let surface = std::fs::read_to_string(dir.path().join("surface.csv")).unwrap();
        assert!(surface.starts_with("x,eta\n"));
        assert_eq!(surface.lines().count(), 1 + LATTICE_N);
        let first_eta: f64 = surface
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(
            report.metrics.surface_at_inlet.unwrap(),
            first_eta,
            "reported inlet height matches the artifact"
        );
        assert!(report.metrics.surface_monotone.is_some());
        assert_eq!(report.metrics.monitors.len(), 9, "nine experiment stations");
    }

    #[test]
    fn transient_runs_emit_slices_and_a_monitor_trace() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = defaults(Target::Builtin(Benchmark::Test4));
        cfg.hidden_layers = 2;
        cfg.width = 8;
        cfg.interior_points = 60;
        cfg.boundary_points = 30;
        cfg.initial_points = 30;
        cfg.adam_iters = 20;
        cfg.lbfgs_iters = 3;
        cfg.out_dir = dir.path().to_path_buf();
        let report = run_benchmark(&cfg).unwrap();

        let field = std::fs::read_to_string(dir.path().join("field.csv")).unwrap();
        assert!(field.starts_with("x,y,t,h\n"));
        assert_eq!(
            field.lines().count(),
            1 + SLICE_FRACTIONS.len() * LATTICE_N * LATTICE_N,
            "six full slices of the square"
        );
        let monitor = std::fs::read_to_string(dir.path().join("monitor.csv")).unwrap();
        assert!(monitor.starts_with("t,h,reference\n"));
        assert_eq!(monitor.lines().count(), 1 + LATTICE_N);
        assert!(report.metrics.max_monitor_error.is_some());
        assert!(report.metrics.e_l2_spacetime.is_some());
        assert_eq!(report.metrics.monitors.len(), SLICE_FRACTIONS.len());
        assert!(report.final_loss.loss_ic.is_some(), "initial term present");
        assert_eq!(report.counts.initial, 30);
    }
}
