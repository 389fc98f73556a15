use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::runner::{ExperimentReport, SeedReport, TrialStatus};
use crate::error::{Error, Result};
use crate::hpo::FeedbackRecord;
use crate::sched::Event;

pub const TRIALS_CSV: &str = "trials.csv";
pub const CURVES_CSV: &str = "curves.csv";
pub const REPORT_JSON: &str = "report.json";
pub const EVENTS_JSONL: &str = "events.jsonl";
pub const FEEDBACK_JSONL: &str = "feedback.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Create `dir` if needed and make sure a file can be written in it.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    let shown = dir.display().to_string();
    fs::create_dir_all(dir).map_err(|e| Error::io(&shown, e))?;
    let probe = dir.join(".fedtune-write-check");
    File::create(&probe)
        .and_then(|mut f| f.write_all(b"ok"))
        .map_err(|e| Error::io(&shown, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&shown, e))
}

/// Format a float for CSV. Non-finite objectives become `inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(fmt_f64(x))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Serialization(format!("{}: {e}", path.display()))
}

fn checkpoint_name(seed: u64) -> String {
    format!("{CHECKPOINT_DIR}/best_seed_{seed}.json")
}

/// Write every output file of a finished experiment into `dir`.
pub fn emit_metrics(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_writable(dir)?;
    let written = vec![
        write_trials(report, &dir.join(TRIALS_CSV))?,
        write_curves(report, &dir.join(CURVES_CSV))?,
        write_json(&dir.join(REPORT_JSON), &report_json(report))?,
        write_jsonl(&dir.join(EVENTS_JSONL), report.seeds.iter().flat_map(event_lines))?,
        write_jsonl(&dir.join(FEEDBACK_JSONL), report.seeds.iter().flat_map(feedback_lines))?,
    ];
    let mut all = written;
    for s in &report.seeds {
        if let (Some(row), Some(w)) = (s.best_row(), &s.best_weights) {
            let path = dir.join(checkpoint_name(s.seed));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
            }
            let body = json!({
                "format": "fedtune.checkpoint",
                "version": 1,
                "seed": s.seed,
                "config_id": row.config_id,
                "hp": row.hp,
                "layout_id": w.layout_id,
                "weights": w.values,
            });
            all.push(write_json(&path, &body)?);
        }
    }
    Ok(all)
}

fn write_trials(report: &ExperimentReport, path: &Path) -> Result<PathBuf> {
    let names = report.space.names();
    let mut w = csv_writer(path)?;
    let mut header = vec!["seed".to_owned(), "sampler".into(), "trial".into(), "config_id".into()];
    header.extend(names.iter().cloned());
    header.extend(["objective", "accuracy", "rounds_run", "sim_time", "status"].map(String::from));
    w.write_record(&header).map_err(csv_err(path))?;
    for s in &report.seeds {
        for r in &s.trials {
            let mut rec = vec![
                r.seed.to_string(),
                r.sampler.as_str().to_owned(),
                r.trial.to_string(),
                r.config_id.to_string(),
            ];
            rec.extend(names.iter().map(|n| r.hp.get(n).map_or(String::new(), |v| fmt_f64(*v))));
            rec.push(fmt_f64(r.objective));
            rec.push(fmt_f64(r.accuracy));
            rec.push(r.rounds_run.to_string());
            rec.push(fmt_f64(r.sim_time));
            rec.push(match r.status {
                TrialStatus::Ok => "ok".into(),
                TrialStatus::Failed => "failed".into(),
            });
            w.write_record(&rec).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path.to_owned())
}

fn write_curves(report: &ExperimentReport, path: &Path) -> Result<PathBuf> {
    let mut w = csv_writer(path)?;
    w.write_record(["seed", "sampler", "round", "accuracy", "loss", "sim_time"])
        .map_err(csv_err(path))?;
    for s in &report.seeds {
        for m in &s.best_trace {
            w.write_record([
                s.seed.to_string(),
                report.config.sampler.as_str().to_owned(),
                m.round.to_string(),
                fmt_f64(m.accuracy),
                fmt_f64(m.global_loss),
                fmt_f64(m.sim_time),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path.to_owned())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn seed_json(s: &SeedReport) -> Value {
    let failed = s.trials.iter().filter(|t| t.status == TrialStatus::Failed).count();
    let best = s.best_row().map(|r| {
        json!({
            "trial": r.trial,
            "config_id": r.config_id,
            "hp": r.hp,
            "objective": json_f64(r.objective),
            "accuracy": json_f64(r.accuracy),
            "rounds_run": r.rounds_run,
            "checkpoint": checkpoint_name(s.seed),
        })
    });
    let makespan = s.makespan.as_ref().map(|m| {
        json!({
            "evaluations": m.evaluations,
            "window": json_f64(m.window),
            "grouped": json_f64(m.grouped),
            "synchronous": json_f64(m.synchronous),
        })
    });
    json!({
        "seed": s.seed,
        "n_trials": s.trials.len(),
        "n_failed": failed,
        "best": best,
        "makespan": makespan,
    })
}

/// The machine-readable summary written to `report.json`.
pub fn report_json(report: &ExperimentReport) -> Value {
    let accs = report.best_accuracies();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    json!({
        "format": "fedtune.report",
        "version": 1,
        "sampler": report.config.sampler.as_str(),
        "budget_configs": report.config.budget_configs,
        "rounds_per_trial": report.config.rounds_per_trial,
        "search_space": {
            "dims": report.space.dims,
            "cardinality": report.space.cardinality().to_string(),
        },
        "seeds": report.seeds.iter().map(seed_json).collect::<Vec<_>>(),
        "summary": {
            "median_best_accuracy": json_f64(median(&accs)),
            "mean_best_accuracy": json_f64(mean),
        },
    })
}

fn write_json(path: &Path, value: &Value) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path.to_owned())
}

#[derive(Serialize)]
struct EventLine<'a> {
    seed: u64,
    trial: usize,
    #[serde(flatten)]
    event: &'a Event,
}

#[derive(Serialize)]
struct FeedbackLine<'a> {
    seed: u64,
    #[serde(flatten)]
    record: &'a FeedbackRecord,
}

fn event_lines(s: &SeedReport) -> impl Iterator<Item = Result<String>> + '_ {
    s.events.iter().map(move |(trial, event)| {
        serde_json::to_string(&EventLine {
            seed: s.seed,
            trial: *trial,
            event,
        })
        .map_err(|e| Error::Serialization(e.to_string()))
    })
}

fn feedback_lines(s: &SeedReport) -> impl Iterator<Item = Result<String>> + '_ {
    s.feedback.iter().map(move |record| {
        serde_json::to_string(&FeedbackLine { seed: s.seed, record })
            .map_err(|e| Error::Serialization(e.to_string()))
    })
}

fn write_jsonl(path: &Path, lines: impl Iterator<Item = Result<String>>) -> Result<PathBuf> {
    let io = |e| Error::io(path.display().to_string(), e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for line in lines {
        w.write_all(line?.as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path.to_owned())
}
