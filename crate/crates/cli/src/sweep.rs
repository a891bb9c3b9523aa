//! Parameter sweeps: the base run repeated along one numeric axis on a
//! bounded worker pool. Failed points are recorded and skipped, never fatal;
//! output order follows the axis order regardless of scheduling.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use nsir_core::stefan::Verdict;

use crate::artifacts::{fmt_float, write_json, CsvSink};
use crate::config::{self, ConfigError, Model, Reducer, SweepConfig};
use crate::runner::{self, Detail, RunnerError};

/// Reduced view of one completed point.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointSummary {
    Classification { verdict: Verdict, final_span: f64, span_rate: f64, i_max_final: f64 },
    Terminal { sup_i_final: f64, dist_e1_final: f64, dist_e2_final: f64 },
    Lambda1 { lambda1: f64, r02: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub value: f64,
    /// Reduced result, or the error that stopped this point.
    pub outcome: Result<PointSummary, String>,
    /// Whether the point's invariant checks all passed (true for failed points
    /// so one broken probe does not mask the others; the error is separate).
    pub checks_ok: bool,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    name: String,
    axis: String,
    reducer: String,
    points: usize,
    failed: usize,
    undecided: usize,
    all_checks_ok: bool,
    /// Axis interval over which the verdict changes, when the sweep is a
    /// classification scan with exactly one observed change.
    transition: Option<(f64, f64)>,
}

pub struct SweepOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<PointRecord>,
    pub failed: usize,
    pub checks_ok: bool,
}

/// Reducer/model compatibility, checked once before any point runs.
fn check_compat(reducer: Reducer, model: Model) -> Result<(), ConfigError> {
    let ok = matches!(
        (reducer, model),
        (Reducer::Classification, Model::Stefan)
            | (Reducer::TerminalState, Model::Neumann | Model::Dirichlet)
            | (Reducer::Lambda1, Model::Eigen | Model::Thresholds)
    );
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            path: "sweep.reducer".into(),
            message: format!("reducer {reducer} cannot summarize a {model} run"),
        })
    }
}

pub fn run_sweep(sweep: &SweepConfig, out_dir: &Path) -> Result<SweepOutcome, RunnerError> {
    crate::artifacts::ensure_dir(out_dir)?;

    // Resolve every point up front: configuration problems abort the sweep
    // before any solver time is spent.
    let mut configs = Vec::with_capacity(sweep.values.len());
    for (index, &value) in sweep.values.iter().enumerate() {
        let mut raw = sweep.base.clone();
        config::set_numeric(&mut raw, &sweep.axis, value)?;
        let mut cfg = config::resolve(&raw, &sweep.name)?;
        check_compat(sweep.reducer, cfg.model)?;
        cfg.name = format!("{}-p{index:03}", sweep.name);
        configs.push((index, value, cfg));
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<PointRecord>>> = Mutex::new(vec![None; sweep.values.len()]);
    let workers = sweep.workers.min(configs.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((index, value, cfg)) = configs.get(i) else { break };
                let point_dir = out_dir.join(format!("p{index:03}"));
                let record = match runner::execute(cfg, &point_dir) {
                    Ok(outcome) => {
                        let checks_ok = outcome.ok;
                        match point_summary(&outcome, sweep.reducer, cfg) {
                            Ok(summary) => PointRecord {
                                index: *index,
                                value: *value,
                                outcome: Ok(summary),
                                checks_ok,
                            },
                            Err(message) => PointRecord {
                                index: *index,
                                value: *value,
                                outcome: Err(message),
                                checks_ok,
                            },
                        }
                    }
                    Err(e) => PointRecord {
                        index: *index,
                        value: *value,
                        outcome: Err(e.to_string()),
                        checks_ok: true,
                    },
                };
                slots.lock().expect("sweep worker poisoned the result store")[*index] =
                    Some(record);
            });
        }
    });

    let records: Vec<PointRecord> = slots
        .into_inner()
        .expect("sweep worker poisoned the result store")
        .into_iter()
        .map(|r| r.expect("every sweep point is visited exactly once"))
        .collect();

    write_point_table(sweep, out_dir, &records)?;

    let failed = records.iter().filter(|r| r.outcome.is_err()).count();
    let undecided = records
        .iter()
        .filter(|r| {
            matches!(
                &r.outcome,
                Ok(PointSummary::Classification { verdict: Verdict::Undecided, .. })
            )
        })
        .count();
    let checks_ok = records.iter().all(|r| r.checks_ok);

    let transition = find_transition(&records);
    write_json(
        out_dir.join("sweep_summary.json"),
        &SweepSummary {
            name: sweep.name.clone(),
            axis: sweep.axis.clone(),
            reducer: sweep.reducer.to_string(),
            points: records.len(),
            failed,
            undecided,
            all_checks_ok: checks_ok,
            transition,
        },
    )?;

    Ok(SweepOutcome { out_dir: out_dir.to_path_buf(), records, failed, checks_ok })
}

fn point_summary(
    outcome: &runner::RunOutcome,
    reducer: Reducer,
    cfg: &config::RunConfig,
) -> Result<PointSummary, String> {
    match (reducer, &outcome.detail) {
        (Reducer::Classification, Detail::Stefan(sd)) => Ok(PointSummary::Classification {
            verdict: sd.classification.verdict,
            final_span: sd.classification.final_span,
            span_rate: sd.classification.span_rate,
            i_max_final: sd.classification.i_max_final,
        }),
        (Reducer::TerminalState, Detail::Ibvp(detail)) => {
            let state = detail.trajectory.final_state();
            let eq = nsir_core::kinetics::equilibria(cfg.params());
            let mut sup_i = 0.0f64;
            for &v in state.i.iter() {
                sup_i = sup_i.max(v.abs());
            }
            Ok(PointSummary::Terminal {
                sup_i_final: sup_i,
                dist_e1_final: state.sup_distance_to(eq.e1),
                dist_e2_final: eq.e2.map(|e| state.sup_distance_to(e)).unwrap_or(f64::NAN),
            })
        }
        (Reducer::Lambda1, Detail::Eigen(j)) => {
            Ok(PointSummary::Lambda1 { lambda1: j.lambda1, r02: j.r02 })
        }
        (Reducer::Lambda1, Detail::Thresholds(j)) => {
            Ok(PointSummary::Lambda1 { lambda1: j.lambda1, r02: j.r02 })
        }
        (r, _) => Err(format!("reducer {r} does not match the {} model", outcome.model)),
    }
}

/// First axis interval across which two decided verdicts differ.
fn find_transition(records: &[PointRecord]) -> Option<(f64, f64)> {
    let decided: Vec<(f64, Verdict)> = records
        .iter()
        .filter_map(|r| match &r.outcome {
            Ok(PointSummary::Classification { verdict, .. }) if *verdict != Verdict::Undecided => {
                Some((r.value, *verdict))
            }
            _ => None,
        })
        .collect();
    decided.windows(2).find(|w| w[0].1 != w[1].1).map(|w| (w[0].0, w[1].0))
}

fn write_point_table(
    sweep: &SweepConfig,
    out_dir: &Path,
    records: &[PointRecord],
) -> Result<(), RunnerError> {
    let headers: Vec<&str> = match sweep.reducer {
        Reducer::Classification => vec![
            "index", "value", "status", "verdict", "final_span", "span_rate", "i_max_final",
            "error",
        ],
        Reducer::TerminalState => vec![
            "index", "value", "status", "sup_i_final", "dist_e1_final", "dist_e2_final", "error",
        ],
        Reducer::Lambda1 => vec!["index", "value", "status", "lambda1", "r02", "error"],
    };
    let mut table = CsvSink::create(out_dir.join("sweep.csv"), &headers)?;
    for r in records {
        let mut row = vec![r.index.to_string(), fmt_float(r.value)];
        match &r.outcome {
            Ok(PointSummary::Classification { verdict, final_span, span_rate, i_max_final }) => {
                row.push("ok".into());
                row.push(verdict.to_string());
                row.push(fmt_float(*final_span));
                row.push(fmt_float(*span_rate));
                row.push(fmt_float(*i_max_final));
                row.push(String::new());
            }
            Ok(PointSummary::Terminal { sup_i_final, dist_e1_final, dist_e2_final }) => {
                row.push("ok".into());
                row.push(fmt_float(*sup_i_final));
                row.push(fmt_float(*dist_e1_final));
                row.push(fmt_float(*dist_e2_final));
                row.push(String::new());
            }
            Ok(PointSummary::Lambda1 { lambda1, r02 }) => {
                row.push("ok".into());
                row.push(fmt_float(*lambda1));
                row.push(fmt_float(*r02));
                row.push(String::new());
            }
            Err(message) => {
                row.push("failed".into());
                for _ in 0..(headers.len() - 4) {
                    row.push(String::new());
                }
                row.push(message.clone());
            }
        }
        table.record(&row)?;
    }
    table.finish()?;
    Ok(())
}
