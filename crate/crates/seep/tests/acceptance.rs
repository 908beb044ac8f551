//! The project's exit gate: nine checks covering gradient correctness,
//! benchmark accuracy against independent references, reference-solver
//! cross-checks, optimizer behavior, and report reproducibility. Each test
//! prints one `criterion N: PASS/FAIL` line.
//!
//! Criteria 3 through 6 and part of 8 share four full training runs at the
//! default configurations (the published setups), so the suite takes a few
//! hours of single-core time; everything else is seconds.

use std::sync::LazyLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seep::autodiff::{Activation, Tape};
use seep::bench::config::{defaults, Benchmark, RunConfig, Target};
use seep::bench::report::{without_timings, RunReport};
use seep::bench::run::{run_benchmark, run_benchmark_observed};
use seep::geometry::{dam_foundation, sample, transient_square, SamplePlan};
use seep::network::{NetConfig, NetworkParams};
use seep::optim::{lbfgs_minimize, AdamState, LbfgsOptions};
use seep::oracle::{
    fdm_steady_refined, fdm_transient, reference_table, series_transient, Source, TRANSIENT_K,
};
use seep::physics::LossEvaluator;

fn verdict(n: usize, ok: bool, what: &str) {
    println!("criterion {n}: {} - {what}", if ok { "PASS" } else { "FAIL" });
}

// ── Shared full-configuration runs ──────────────────────────────────────

struct TrainedRun {
    report: RunReport,
    _dir: tempfile::TempDir,
}

fn train(b: Benchmark) -> TrainedRun {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut cfg = defaults(Target::Builtin(b));
    cfg.out_dir = dir.path().to_path_buf();
    let report = run_benchmark_observed(&cfg, |p| {
        eprintln!("[{} {} {}/{}] loss {:.3e}", b.name(), p.stage, p.step, p.steps, p.total);
    })
    .unwrap_or_else(|e| panic!("{} training failed: {e}", b.name()));
    TrainedRun { report, _dir: dir }
}

struct Runs {
    test1: TrainedRun,
    test2: TrainedRun,
    test3: TrainedRun,
    test4: TrainedRun,
}

static RUNS: LazyLock<Runs> = LazyLock::new(|| Runs {
    test1: train(Benchmark::Test1),
    test2: train(Benchmark::Test2),
    test3: train(Benchmark::Test3),
    test4: train(Benchmark::Test4),
});

// ── Criterion 1: loss gradient vs finite differences ────────────────────

#[test]
fn criterion_1_loss_gradient_matches_finite_differences() {
    let started = Instant::now();
    let spec = Benchmark::Test1.problem();
    let h_cfg = NetConfig::new(2, 2, 20, Activation::Tanh);
    let plan = SamplePlan::new(30, 20, 0);
    let samples = sample(&spec.domain, &plan, 0).unwrap();

    let mut evaluator = LossEvaluator::new(&spec, &h_cfg, None).unwrap();
    evaluator.set_samples(&samples).unwrap();
    let mut theta = NetworkParams::init(h_cfg, 0).flatten();
    assert_eq!(theta.len(), 501, "a 2-20-20-1 network has 501 parameters");

    let mut grad = vec![0.0; theta.len()];
    evaluator.eval(&theta, &mut grad);
    let g_ad = grad.clone();
    let gmax = g_ad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    assert!(gmax > 0.0, "gradient is not identically zero at init");

    // Central differences of the loss in every one of the 501 coordinates.
    // Components far below the gradient's scale are held to an absolute
    // bar tied to that scale instead of a meaningless relative one.
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let h = 1e-6 * theta[i].abs().max(1.0);
        let orig = theta[i];
        theta[i] = orig + h;
        let fp = evaluator.eval(&theta, &mut grad).total;
        theta[i] = orig - h;
        let fm = evaluator.eval(&theta, &mut grad).total;
        theta[i] = orig;
        let g_fd = (fp - fm) / (2.0 * h);
        let rel = (g_ad[i] - g_fd).abs() / g_fd.abs().max(1e-3 * gmax);
        worst = worst.max(rel);
    }

    let ok = worst <= 1e-5 && started.elapsed().as_secs() < 60;
    verdict(1, ok, "loss gradient matches central differences at 1e-5");
    assert!(worst <= 1e-5, "worst relative gradient error {worst:.3e}");
    assert!(started.elapsed().as_secs() < 60, "gradient check stays under a minute");
}

// ── Criterion 2: network second derivatives vs finite differences ───────

#[test]
fn criterion_2_network_second_derivatives_match_finite_differences() {
    let cfg = NetConfig::new(2, 2, 20, Activation::Tanh);
    let params = NetworkParams::init(cfg, 3);
    let f = |x: &[f64]| params.forward(x);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<[f64; 2]> = (0..20)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();

    // Fourth-order stencils hold the finite-difference error far below the
    // comparison bar, so a miss can only come from the jet recording.
    let d = 1e-3;
    let mut worst_d1 = 0.0f64;
    let mut worst_d2 = 0.0f64;
    let mut scale_d2 = 0.0f64;
    let mut jets = Vec::new();
    for p in &pts {
        for dir in 0..2 {
            let mut tape = Tape::new();
            let leaves = params.register_leaves(&mut tape);
            let jet = leaves.forward_jet(&mut tape, p, dir).unwrap();
            let (v, d1, d2) = (tape.value(jet.value), tape.value(jet.d1), tape.value(jet.d2));
            scale_d2 = scale_d2.max(d2.abs());
            jets.push((*p, dir, v, d1, d2));
        }
    }
    for &(p, dir, v, d1, d2) in &jets {
        let at = |s: f64| {
            let mut q = p;
            q[dir] += s;
            f(&q)
        };
        let (f2m, f1m, f0, f1p, f2p) = (at(-2.0 * d), at(-d), at(0.0), at(d), at(2.0 * d));
        assert_eq!(f0, v, "jet value channel equals the plain forward");
        let d1_fd = (f2m - 8.0 * f1m + 8.0 * f1p - f2p) / (12.0 * d);
        let d2_fd = (-f2m + 16.0 * f1m - 30.0 * f0 + 16.0 * f1p - f2p) / (12.0 * d * d);
        worst_d1 = worst_d1.max((d1 - d1_fd).abs() / d1_fd.abs().max(1e-3));
        worst_d2 = worst_d2.max((d2 - d2_fd).abs() / d2_fd.abs().max(1e-3 * scale_d2));
    }

    let ok = worst_d1 <= 1e-5 && worst_d2 <= 1e-5;
    verdict(2, ok, "first and second input derivatives match stencils at 1e-5");
    assert!(ok, "worst first-derivative error {worst_d1:.3e}, second {worst_d2:.3e}");
}

// ── Criteria 3-6: the four benchmarks at their default configurations ───

#[test]
fn criterion_3_plate_matches_the_grid_reference() {
    let r = &RUNS.test1.report;
    let e_mon = r.metrics.e_l2_monitors.expect("monitor error reported");
    let e_field = r.metrics.e_l2_field.expect("field error reported");
    let within_budget = r.timings.total_s < 1800.0;
    let ok = e_mon <= 0.005 && e_field <= 0.01 && within_budget;
    verdict(3, ok, "plate heads within 0.5% at monitors, 1% on the field, under 30 min");
    assert!(e_mon <= 0.005, "monitor error {e_mon:.5}");
    assert!(e_field <= 0.01, "field error {e_field:.5}");
    assert!(within_budget, "run took {:.0} s", r.timings.total_s);
}

#[test]
fn criterion_4_dam_beats_the_published_grid_row() {
    let r = &RUNS.test2.report;
    let e_mon = r.metrics.e_l2_monitors.expect("monitor error reported");
    let e_fem = r.metrics.e_l2_fem_triple.expect("stored comparison row");
    let mid = r.metrics.midpoint_error.expect("symmetry-point error");
    let ok = e_mon <= 0.03 && e_mon < e_fem && mid <= 0.5;
    verdict(4, ok, "dam heads within 3%, ahead of the published grid row, centered");
    assert!(e_mon <= 0.03, "monitor error {e_mon:.5}");
    assert!(e_mon < e_fem, "network row {e_mon:.5} vs stored grid row {e_fem:.5}");
    assert!(mid <= 0.5, "midpoint error {mid:.3} m");
}

#[test]
fn criterion_5_free_surface_tracks_the_experiment() {
    let r = &RUNS.test3.report;
    let mre = r.metrics.surface_mean_relative_error.expect("station error reported");
    let inlet = r.metrics.surface_at_inlet.expect("inlet height reported");
    let monotone = r.metrics.surface_monotone.expect("monotonicity reported");
    let ok = mre <= 0.025 && inlet == 6.0 && monotone;
    verdict(5, ok, "surface within 2.5% of the experiment, exact at the inlet, monotone");
    assert!(mre <= 0.025, "mean relative station error {mre:.5}");
    assert!(inlet == 6.0, "inlet height {inlet} is pinned by construction");
    assert!(monotone, "surface height never rises downstream");
}

#[test]
fn criterion_6_transient_head_follows_the_series() {
    let r = &RUNS.test4.report;
    let max_err = r.metrics.max_monitor_error.expect("center-trace error reported");
    let e_st = r.metrics.e_l2_spacetime.expect("space-time error reported");
    let ok = max_err <= 0.05 && e_st <= 0.02;
    verdict(6, ok, "center head within 0.05 m over time, 2% over space-time");
    assert!(max_err <= 0.05, "worst center-point error {max_err:.4} m");
    assert!(e_st <= 0.02, "space-time error {e_st:.5}");
}

// ── Criterion 7: the references agree with closed forms ─────────────────

#[test]
fn criterion_7_reference_solvers_agree_with_closed_forms() {
    // Transient grid solve against the separation-of-variables series.
    let d = transient_square();
    let snap = &fdm_transient(&d, TRANSIENT_K, 201, 1e-4, &[0.1]).unwrap()[0];
    let mut worst = 0.0f64;
    for j in 0..snap.ny {
        for i in 0..snap.nx {
            let exact = series_transient(snap.x(i), 0.1, 400);
            worst = worst.max((snap.at(i, j) - exact).abs());
        }
    }

    // Steady dam solve against the analytical monitor heads.
    let table = reference_table("test2").unwrap();
    let locs = table.locations(Source::Analytical);
    let exact = table.values(Source::Analytical);
    let refined = fdm_steady_refined(&dam_foundation(), &locs).unwrap();
    let grid_rel = refined
        .monitors()
        .iter()
        .zip(&exact)
        .map(|(g, e)| (g - e).abs() / e)
        .fold(0.0f64, f64::max);

    let ok = worst <= 2e-4 && grid_rel <= 0.01;
    verdict(7, ok, "grid solvers match the series and the analytical heads");
    assert!(worst <= 2e-4, "transient grid vs series: {worst:.2e}");
    assert!(grid_rel <= 0.01, "steady dam grid vs analytical: {grid_rel:.4}");
}

// ── Criterion 8: optimizer behavior ─────────────────────────────────────

#[test]
fn criterion_8_optimizers_descend() {
    // Adam shrinks a 10-d quadratic with spread curvature a million-fold.
    let lambda: Vec<f64> = (0..10).map(|i| 0.5 + 0.5 * i as f64).collect();
    let c: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
    let quad = |x: &[f64]| -> (f64, Vec<f64>) {
        let f = (0..10).map(|i| 0.5 * lambda[i] * (x[i] - c[i]).powi(2)).sum();
        let g = (0..10).map(|i| lambda[i] * (x[i] - c[i])).collect();
        (f, g)
    };
    let mut x = vec![0.0; 10];
    let f0 = quad(&x).0;
    let mut adam = AdamState::new(10, 0.01);
    for _ in 0..2000 {
        let (_, g) = quad(&x);
        adam.step(&mut x, &g).unwrap();
    }
    let adam_drop = quad(&x).0 / f0;

    // L-BFGS nails a 5-d quadratic in a handful of iterations, and its
    // accepted iterates never go uphill there or on any benchmark.
    let target = [1.0, -2.0, 0.5, 3.0, -0.25];
    let sphere = |x: &[f64]| -> (f64, Vec<f64>) {
        let f = x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
        let g = x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        (f, g)
    };
    let res = lbfgs_minimize(sphere, vec![0.0; 5], &LbfgsOptions::default()).unwrap();
    let lbfgs_fast = res.loss <= 1e-10 && res.iters <= 10;
    let lbfgs_monotone = res.losses.windows(2).all(|w| w[1] <= w[0]);

    let mut bench_monotone = true;
    for run in [&RUNS.test1, &RUNS.test2, &RUNS.test3, &RUNS.test4] {
        let r = &run.report;
        let stage: Vec<f64> = r
            .history
            .iter()
            .filter(|e| e.stage == "lbfgs")
            .map(|e| e.total)
            .collect();
        bench_monotone &= stage.windows(2).all(|w| w[1] <= w[0]);
        bench_monotone &= r.final_loss.total <= r.adam_final_total;
    }

    let ok = adam_drop <= 1e-6 && lbfgs_fast && lbfgs_monotone && bench_monotone;
    verdict(8, ok, "optimizers hit their marks and no accepted step raises any loss");
    assert!(adam_drop <= 1e-6, "Adam shrank the quadratic to {adam_drop:.2e} of start");
    assert!(lbfgs_fast, "5-d quadratic: loss {:.2e} in {} iterations", res.loss, res.iters);
    assert!(lbfgs_monotone, "accepted iterates are non-increasing on the quadratic");
    assert!(bench_monotone, "second stage never raised a benchmark loss");
}

// ── Criterion 9: reproducible reports ───────────────────────────────────

#[test]
fn criterion_9_reports_reproduce_byte_identically_modulo_timings() {
    // Reduced configurations keep this affordable; identity must hold per
    // benchmark because each exercises different report and artifact paths.
    let mut ok = true;
    for b in Benchmark::ALL {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg: RunConfig = defaults(Target::Builtin(b));
        cfg.hidden_layers = 2;
        cfg.width = 8;
        cfg.surface_hidden_layers = 1;
        cfg.surface_width = 4;
        cfg.interior_points = 60;
        cfg.boundary_points = 30;
        cfg.initial_points = if b == Benchmark::Test4 { 30 } else { 0 };
        cfg.adam_iters = 30;
        cfg.resample_every = 10;
        cfg.lbfgs_iters = 4;
        cfg.out_dir = dir.path().to_path_buf();

        run_benchmark(&cfg).unwrap_or_else(|e| panic!("{} reduced run: {e}", b.name()));
        let first = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        run_benchmark(&cfg).unwrap_or_else(|e| panic!("{} repeat run: {e}", b.name()));
        let second = std::fs::read_to_string(dir.path().join("report.json")).unwrap();

        let a = serde_json::to_string(&without_timings(&first).unwrap()).unwrap();
        let bb = serde_json::to_string(&without_timings(&second).unwrap()).unwrap();
        let same = a == bb;
        ok &= same;
        assert!(same, "{} reports differ beyond timings", b.name());
    }
    verdict(9, ok, "reports are byte-identical across reruns once timings are removed");
}

// ── Opt-in: robustness across seeds ─────────────────────────────────────

/// Full-configuration sweep over seeds 0..5; each benchmark's accuracy
/// criterion must hold for at least four of the five. Takes the better part
/// of a day of single-core time, hence ignored by default.
#[test]
#[ignore]
fn seed_sweep_holds_for_most_seeds() {
    let mut passes = [0usize; 4];
    for seed in 0..5u64 {
        for (slot, b) in Benchmark::ALL.into_iter().enumerate() {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = defaults(Target::Builtin(b));
            cfg.seed = seed;
            cfg.out_dir = dir.path().to_path_buf();
            let r = run_benchmark(&cfg)
                .unwrap_or_else(|e| panic!("{} seed {seed}: {e}", b.name()))
                ;
            let m = &r.metrics;
            let hit = match b {
                Benchmark::Test1 => {
                    m.e_l2_monitors.unwrap() <= 0.005 && m.e_l2_field.unwrap() <= 0.01
                }
                Benchmark::Test2 => {
                    m.e_l2_monitors.unwrap() <= 0.03 && m.midpoint_error.unwrap() <= 0.5
                }
                Benchmark::Test3 => {
                    m.surface_mean_relative_error.unwrap() <= 0.025
                        && m.surface_monotone.unwrap()
                }
                Benchmark::Test4 => {
                    m.max_monitor_error.unwrap() <= 0.05 && m.e_l2_spacetime.unwrap() <= 0.02
                }
            };
            if hit {
                passes[slot] += 1;
            }
            eprintln!("seed {seed} {}: {}", b.name(), if hit { "pass" } else { "miss" });
        }
    }
    for (slot, b) in Benchmark::ALL.into_iter().enumerate() {
        assert!(passes[slot] >= 4, "{}: {}/5 seeds passed", b.name(), passes[slot]);
    }
}
