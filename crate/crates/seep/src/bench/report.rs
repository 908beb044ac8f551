//! The machine-readable run report: every effective hyperparameter, the
//! loss history of both training stages, final metrics, and artifact paths.
//!
//! Serialization keeps struct declaration order, so two runs with the same
//! configuration and seed produce byte-identical JSON. Wall-clock numbers
//! live only under the `timings` key; stripping it makes reports comparable.

use serde::Serialize;
use serde_json::Value;

use crate::bench::config::{RunConfig, Target};
use crate::physics::{LossBreakdown, TermCounts};

/// Effective hyperparameters, echoed verbatim so a report never depends on
/// implicit defaults.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub benchmark: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem_file: Option<String>,
    pub seed: u64,
    pub hidden_layers: usize,
    pub width: usize,
    pub surface_hidden_layers: usize,
    pub surface_width: usize,
    pub interior_points: usize,
    pub boundary_points: usize,
    pub initial_points: usize,
    pub adam_iters: usize,
    pub learning_rate: f64,
    pub lbfgs_iters: usize,
    pub weight_f: f64,
    pub weight_bc: f64,
    pub weight_ic: f64,
    pub weight_fs: f64,
    pub resample_every: usize,
    pub out_dir: String,
    pub points_file: Option<String>,
    pub deterministic: bool,
}

impl ConfigEcho {
    pub fn from_config(cfg: &RunConfig) -> ConfigEcho {
        let problem_file = match &cfg.target {
            Target::Builtin(_) => None,
            Target::Custom(p) => Some(p.display().to_string()),
        };
        ConfigEcho {
            benchmark: cfg.target.name().to_string(),
            problem_file,
            seed: cfg.seed,
            hidden_layers: cfg.hidden_layers,
            width: cfg.width,
            surface_hidden_layers: cfg.surface_hidden_layers,
            surface_width: cfg.surface_width,
            interior_points: cfg.interior_points,
            boundary_points: cfg.boundary_points,
            initial_points: cfg.initial_points,
            adam_iters: cfg.adam_iters,
            learning_rate: cfg.learning_rate,
            lbfgs_iters: cfg.lbfgs_iters,
            weight_f: cfg.weight_f,
            weight_bc: cfg.weight_bc,
            weight_ic: cfg.weight_ic,
            weight_fs: cfg.weight_fs,
            resample_every: cfg.resample_every,
            out_dir: cfg.out_dir.display().to_string(),
            points_file: cfg.points_file.as_ref().map(|p| p.display().to_string()),
            deterministic: cfg.deterministic,
        }
    }
}

/// The physics the run solved.
#[derive(Clone, Debug, Serialize)]
pub struct ProblemEcho {
    pub domain: String,
    pub kx: f64,
    pub ky: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ss: Option<f64>,
    pub residual_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub transient: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkEcho {
    pub activation: String,
    pub head_params: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface_params: Option<usize>,
}

/// One sampled loss evaluation. Adam entries appear every hundred steps plus
/// the stage end; the L-BFGS stage contributes its starting point as step 0
/// and then every accepted iteration.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct HistoryEntry {
    pub stage: &'static str,
    pub step: usize,
    pub loss_f: f64,
    pub loss_bc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_ic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_fs: Option<f64>,
    pub total: f64,
}

impl HistoryEntry {
    pub fn new(stage: &'static str, step: usize, loss: &LossBreakdown) -> HistoryEntry {
        HistoryEntry {
            stage,
            step,
            loss_f: loss.loss_f,
            loss_bc: loss.loss_bc,
            loss_ic: loss.loss_ic,
            loss_fs: loss.loss_fs,
            total: loss.total,
        }
    }
}

/// A predicted value at a reference location, next to the published or
/// computed value it is judged against. Context rows carry comparison data
/// from other methods and are never the pass/fail reference.
#[derive(Clone, Debug, Serialize)]
pub struct MonitorValue {
    /// "head" or "surface-height".
    pub quantity: &'static str,
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub predicted: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    pub source: String,
}

/// Per-benchmark error metrics. Fields stay absent where a benchmark has no
/// such reference.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsBlock {
    /// The pass/fail reference the metrics compare against.
    pub reference: String,
    pub monitors: Vec<MonitorValue>,
    /// Rows reported alongside from other methods, for context only.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<MonitorValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_l2_monitors: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_l2_field: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_l2_fem_triple: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub midpoint_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface_mean_relative_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface_at_inlet: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface_monotone: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_monitor_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_l2_spacetime: Option<f64>,
}

impl MetricsBlock {
    pub fn empty(reference: impl Into<String>) -> MetricsBlock {
        MetricsBlock {
            reference: reference.into(),
            monitors: Vec::new(),
            context: Vec::new(),
            e_l2_monitors: None,
            e_l2_field: None,
            e_l2_fem_triple: None,
            midpoint_error: None,
            surface_mean_relative_error: None,
            surface_at_inlet: None,
            surface_monotone: None,
            max_monitor_error: None,
            e_l2_spacetime: None,
        }
    }
}

/// Post-training boundary audit: the worst Dirichlet mismatch over fresh
/// probe points must sit within a forgiving multiple of what the training
/// loss already admits.
#[derive(Clone, Debug, Serialize)]
pub struct DirichletCheck {
    pub probes: usize,
    pub max_abs_mismatch: f64,
    /// Ten times the root of the final boundary loss.
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Termination {
    pub adam: String,
    pub lbfgs: String,
    pub lbfgs_iters: usize,
}

/// Artifact file names, relative to the run's output directory.
#[derive(Clone, Debug, Serialize)]
pub struct Artifacts {
    pub report: &'static str,
    pub field: &'static str,
    pub points: &'static str,
    pub checkpoint: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface_checkpoint: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitor: Option<&'static str>,
}

/// Wall-clock seconds per stage. The only nondeterministic part of a report;
/// [`without_timings`] removes it for comparisons.
#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub sample_s: f64,
    pub adam_s: f64,
    pub lbfgs_s: f64,
    pub eval_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub benchmark: String,
    pub seed: u64,
    pub deterministic: bool,
    pub config: ConfigEcho,
    pub problem: ProblemEcho,
    pub network: NetworkEcho,
    pub counts: TermCounts,
    pub history: Vec<HistoryEntry>,
    /// Total loss at the Adam-stage parameters on the collocation set the
    /// L-BFGS stage trains on; the second stage never ends above this.
    pub adam_final_total: f64,
    pub final_loss: LossBreakdown,
    pub metrics: MetricsBlock,
    pub dirichlet_check: DirichletCheck,
    pub termination: Termination,
    pub artifacts: Artifacts,
    pub timings: Timings,
}

impl RunReport {
    /// Internal consistency checks that hold for every finished run.
    pub fn validate(&self) -> Result<(), String> {
        let lbfgs: Vec<&HistoryEntry> =
            self.history.iter().filter(|e| e.stage == "lbfgs").collect();
        for pair in lbfgs.windows(2) {
            if pair[1].total > pair[0].total {
                return Err(format!(
                    "loss rose from {} to {} between accepted steps {} and {}",
                    pair[0].total, pair[1].total, pair[0].step, pair[1].step
                ));
            }
        }
        if let Some(last) = lbfgs.last() {
            if last.total != self.final_loss.total {
                return Err(format!(
                    "final loss {} does not close the history ({})",
                    self.final_loss.total, last.total
                ));
            }
        }
        if self.final_loss.total > self.adam_final_total {
            return Err(format!(
                "second stage ended at {} above the first stage's {}",
                self.final_loss.total, self.adam_final_total
            ));
        }
        Ok(())
    }

    /// Stable-order, human-diffable JSON.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Parses report JSON and drops the `timings` subtree, leaving exactly the
/// parts that are reproducible from (config, seed).
pub fn without_timings(json: &str) -> Result<Value, serde_json::Error> {
    let mut v: Value = serde_json::from_str(json)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("timings");
    }
    Ok(v)
}

/// One-screen human summary of a parsed report, for the CLI's report
/// subcommand.
pub fn summarize(v: &Value) -> String {
    let mut out = String::new();
    let s = |path: &[&str]| -> String {
        let mut cur = v;
        for p in path {
            match cur.get(p) {
                Some(next) => cur = next,
                None => return "-".to_string(),
            }
        }
        match cur {
            Value::String(s) => s.clone(),
            // Five significant digits read fine for every metric shown
            // here; report.json keeps the full-precision values.
            Value::Number(n) => match n.as_f64() {
                Some(f) if f != f.trunc() || f.abs() >= 1e15 => {
                    if f != 0.0 && f.abs() < 1e-3 {
                        format!("{f:.4e}")
                    } else {
                        format!("{:}", (f * 1e5).round() / 1e5)
                    }
                }
                _ => n.to_string(),
            },
            other => other.to_string(),
        }
    };
    let line = |out: &mut String, label: &str, val: String| {
        out.push_str(&format!("{label:<26} {val}\n"));
    };

    line(&mut out, "benchmark", s(&["benchmark"]));
    line(&mut out, "seed", s(&["seed"]));
    line(&mut out, "domain", s(&["problem", "domain"]));
    line(
        &mut out,
        "network",
        format!(
            "{} hidden layers x {} ({} parameters)",
            s(&["config", "hidden_layers"]),
            s(&["config", "width"]),
            s(&["network", "head_params"])
        ),
    );
    line(
        &mut out,
        "training",
        format!(
            "adam {} @ lr {}, then l-bfgs {} ({})",
            s(&["config", "adam_iters"]),
            s(&["config", "learning_rate"]),
            s(&["termination", "lbfgs_iters"]),
            s(&["termination", "lbfgs"])
        ),
    );
    line(&mut out, "final total loss", s(&["final_loss", "total"]));
    line(&mut out, "  residual", s(&["final_loss", "loss_f"]));
    line(&mut out, "  boundary", s(&["final_loss", "loss_bc"]));
    if v.pointer("/final_loss/loss_ic").is_some() {
        line(&mut out, "  initial", s(&["final_loss", "loss_ic"]));
    }
    if v.pointer("/final_loss/loss_fs").is_some() {
        line(&mut out, "  free surface", s(&["final_loss", "loss_fs"]));
    }
    line(&mut out, "reference", s(&["metrics", "reference"]));
    for (key, label) in [
        ("e_l2_monitors", "e_l2 (monitors)"),
        ("e_l2_field", "e_l2 (field)"),
        ("midpoint_error", "midpoint error"),
        ("surface_mean_relative_error", "surface mean rel err"),
        ("surface_at_inlet", "surface at inlet"),
        ("surface_monotone", "surface monotone"),
        ("max_monitor_error", "max monitor error"),
        ("e_l2_spacetime", "e_l2 (space-time)"),
    ] {
        if v.pointer(&format!("/metrics/{key}")).is_some() {
            line(&mut out, label, s(&["metrics", key]));
        }
    }
    line(
        &mut out,
        "dirichlet audit",
        format!(
            "max |h - g| = {} (bound {}, {})",
            s(&["dirichlet_check", "max_abs_mismatch"]),
            s(&["dirichlet_check", "bound"]),
            if v.pointer("/dirichlet_check/passed") == Some(&Value::Bool(true)) {
                "ok"
            } else {
                "FAILED"
            }
        ),
    );
    line(&mut out, "total wall time (s)", s(&["timings", "total_s"]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_loss(total: f64) -> LossBreakdown {
        LossBreakdown {
            loss_f: total / 2.0,
            loss_bc: total / 2.0,
            loss_ic: None,
            loss_fs: None,
            total,
            counts: TermCounts::default(),
        }
    }

    fn sample_report() -> RunReport {
        let cfg = crate::bench::config::defaults(Target::Builtin(
            crate::bench::config::Benchmark::Test1,
        ));
        RunReport {
            benchmark: "test1".into(),
            seed: 0,
            deterministic: true,
            config: ConfigEcho::from_config(&cfg),
            problem: ProblemEcho {
                domain: "plate-with-hole".into(),
                kx: 1e-3,
                ky: 1e-3,
                ss: None,
                residual_scale: 1000.0,
                horizon: None,
                transient: false,
            },
            network: NetworkEcho {
                activation: "tanh".into(),
                head_params: 7901,
                surface_params: None,
            },
            counts: TermCounts::default(),
            history: vec![
                HistoryEntry::new("adam", 0, &sample_loss(8.0)),
                HistoryEntry::new("adam", 100, &sample_loss(2.0)),
                HistoryEntry::new("lbfgs", 0, &sample_loss(2.0)),
                HistoryEntry::new("lbfgs", 1, &sample_loss(1.0)),
                HistoryEntry::new("lbfgs", 2, &sample_loss(0.5)),
            ],
            adam_final_total: 2.0,
            final_loss: sample_loss(0.5),
            metrics: MetricsBlock::empty("finite-difference oracle"),
            dirichlet_check: DirichletCheck {
                probes: 1000,
                max_abs_mismatch: 0.001,
                bound: 0.01,
                passed: true,
            },
            termination: Termination {
                adam: "completed".into(),
                lbfgs: "max-iterations".into(),
                lbfgs_iters: 2,
            },
            artifacts: Artifacts {
                report: "report.json",
                field: "field.csv",
                points: "points.csv",
                checkpoint: "checkpoint.bin",
                surface: None,
                surface_checkpoint: None,
                monitor: None,
            },
            timings: Timings {
                sample_s: 0.1,
                adam_s: 10.0,
                lbfgs_s: 5.0,
                eval_s: 1.0,
                total_s: 16.1,
            },
        }
    }

    #[test]
    fn json_key_order_is_stable_and_timings_strip_cleanly() {
        let r = sample_report();
        let a = r.to_json();
        let b = r.to_json();
        assert_eq!(a, b, "serialization is reproducible");
        let pos_bench = a.find("\"benchmark\"").unwrap();
        let pos_cfg = a.find("\"config\"").unwrap();
        let pos_timings = a.find("\"timings\"").unwrap();
        assert!(
            pos_bench < pos_cfg && pos_cfg < pos_timings,
            "keys appear in declaration order"
        );

        let stripped = without_timings(&a).unwrap();
        assert!(stripped.get("timings").is_none(), "timings removed");
        assert!(stripped.get("final_loss").is_some(), "payload intact");
    }

    #[test]
    fn validate_accepts_a_monotone_second_stage() {
        assert_eq!(sample_report().validate(), Ok(()));
    }

    #[test]
    fn validate_rejects_a_loss_increase_under_lbfgs() {
        let mut r = sample_report();
        r.history.push(HistoryEntry::new("lbfgs", 3, &sample_loss(0.7)));
        let err = r.validate().unwrap_err();
        assert!(err.contains("rose"), "explains the violation: {err}");
    }

    #[test]
    fn validate_ties_the_final_loss_to_the_history() {
        let mut r = sample_report();
        r.final_loss = sample_loss(0.25);
        let err = r.validate().unwrap_err();
        assert!(err.contains("close"), "explains the mismatch: {err}");
    }

    #[test]
    fn summary_mentions_the_headline_numbers() {
        let r = sample_report();
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        let s = summarize(&v);
        assert!(s.contains("test1"));
        assert!(s.contains("final total loss"));
        assert!(s.contains("0.5"));
        assert!(s.contains("finite-difference oracle"));
    }

    #[test]
    fn echo_covers_every_config_field() {
        // The JSON echo and the config-file echo list the same settings; a
        // field added to one place but not the other shows up here.
        let cfg = crate::bench::config::defaults(Target::Builtin(
            crate::bench::config::Benchmark::Test4,
        ));
        let echo_text = crate::bench::config::echo(&cfg);
        let json = serde_json::to_value(ConfigEcho::from_config(&cfg)).unwrap();
        let obj = json.as_object().unwrap();
        for line in echo_text.lines() {
            let key = line.split('=').next().unwrap().trim();
            assert!(
                obj.contains_key(key),
                "config key {key} missing from the report echo"
            );
        }
    }
}
