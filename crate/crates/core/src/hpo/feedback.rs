use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::sampler::Direction;
use super::space::ConfigId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    Local,
    Global,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub config_id: ConfigId,
    pub round: usize,
    pub kind: FeedbackKind,
    pub train_loss: f64,
    pub val_loss: f64,
    pub group_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_target: Option<String>,
}

impl FeedbackRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_loss.is_finite() && self.val_loss.is_finite()) {
            return Err(Error::Feedback(format!(
                "non-finite loss in {:?} feedback for {}",
                self.kind, self.config_id
            )));
        }
        if self.group_size == 0 {
            return Err(Error::Feedback("group size must be at least 1".into()));
        }
        if self.kind != FeedbackKind::Probe && self.probe_target.is_some() {
            return Err(Error::Feedback("only probe feedback names a probe target".into()));
        }
        Ok(())
    }
}

/// Weighted average of one group's local losses and the global loss.
///
/// The global loss counts as `n_j` votes and each of the `n_j` local losses
/// as one, so the result is `(n_j * gf + sum(lf)) / (2 * n_j)`. All
/// weighting of global against local feedback goes through this function.
pub fn combine_feedback(lf: &[f64], gf: f64, n_j: usize) -> Result<f64> {
    if n_j == 0 || lf.len() != n_j {
        return Err(Error::Feedback(format!(
            "expected {n_j} local losses for a group of {n_j}, got {}",
            lf.len()
        )));
    }
    if !gf.is_finite() || lf.iter().any(|x| !x.is_finite()) {
        return Err(Error::Feedback("non-finite loss in feedback".into()));
    }
    let n = n_j as f64;
    Ok((n * gf + lf.iter().sum::<f64>()) / (2.0 * n))
}

/// Incrementally updated mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    pub mean: f64,
    pub count: u64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStore {
    stats: BTreeMap<ConfigId, RunningMean>,
    combined: Vec<(ConfigId, f64)>,
    records: Vec<FeedbackRecord>,
    directions: BTreeMap<String, Direction>,
}

impl FeedbackStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold a combined feedback value into the configuration's running mean.
    pub fn record(&mut self, config_id: &ConfigId, combined: f64) -> Result<()> {
        if !combined.is_finite() {
            return Err(Error::Feedback(format!(
                "non-finite combined feedback for {config_id}"
            )));
        }
        self.stats.entry(config_id.clone()).or_default().push(combined);
        self.combined.push((config_id.clone(), combined));
        Ok(())
    }

    /// Append a raw feedback record to the history.
    pub fn push(&mut self, rec: FeedbackRecord) -> Result<()> {
        rec.validate()?;
        self.records.push(rec);
        Ok(())
    }

    pub fn mean(&self, config_id: &ConfigId) -> Option<f64> {
        self.stats.get(config_id).map(|s| s.mean)
    }

    pub fn count(&self, config_id: &ConfigId) -> u64 {
        self.stats.get(config_id).map_or(0, |s| s.count)
    }

    pub fn stats(&self, config_id: &ConfigId) -> Option<RunningMean> {
        self.stats.get(config_id).copied()
    }

    /// Every combined value recorded, in order.
    pub fn combined_history(&self) -> &[(ConfigId, f64)] {
        &self.combined
    }

    pub fn records(&self) -> &[FeedbackRecord] {
        &self.records
    }

    /// Direction of the last accepted improving move for `hp`.
    pub fn last_direction(&self, hp: &str) -> Option<Direction> {
        self.directions.get(hp).copied()
    }

    pub fn note_direction(&mut self, hp: &str, dir: Direction) {
        self.directions.insert(hp.to_owned(), dir);
    }

    /// One JSON object per line, one line per feedback record.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line =
                serde_json::to_string(r).map_err(|e| Error::Serialization(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io("feedback.jsonl", e))?;
        }
        Ok(())
    }
}

/// A feedback store shared between concurrently reporting groups. Every
/// operation takes the lock, so concurrent calls behave as some total order.
#[derive(Debug, Clone, Default)]
pub struct SharedFeedbackStore(Arc<Mutex<FeedbackStore>>);

impl SharedFeedbackStore {
    pub fn new(store: FeedbackStore) -> Self {
        SharedFeedbackStore(Arc::new(Mutex::new(store)))
    }

    fn lock(&self) -> MutexGuard<'_, FeedbackStore> {
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn record(&self, config_id: &ConfigId, combined: f64) -> Result<()> {
        self.lock().record(config_id, combined)
    }

    pub fn push(&self, rec: FeedbackRecord) -> Result<()> {
        self.lock().push(rec)
    }

    pub fn mean(&self, config_id: &ConfigId) -> Option<f64> {
        self.lock().mean(config_id)
    }

    pub fn snapshot(&self) -> FeedbackStore {
        self.lock().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> ConfigId {
        ConfigId(s.to_owned())
    }

    #[test]
    fn combine_examples() {
        assert!((combine_feedback(&[0.3, 0.7], 0.5, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((combine_feedback(&[0.4], 0.2, 1).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(combine_feedback(&[0.9, 0.9, 0.9], 0.9, 3).unwrap(), 0.9);
    }

    #[test]
    fn combine_rejects_bad_input() {
        assert!(combine_feedback(&[], 0.1, 0).is_err());
        assert!(combine_feedback(&[0.1], 0.1, 2).is_err());
        assert!(combine_feedback(&[f64::NAN], 0.1, 1).is_err());
        assert!(combine_feedback(&[0.1], f64::INFINITY, 1).is_err());
    }

    #[test]
    fn store_means() {
        let mut s = FeedbackStore::new();
        s.record(&id("a"), 0.4).unwrap();
        assert_eq!(s.mean(&id("a")), Some(0.4));
        s.record(&id("a"), 0.6).unwrap();
        assert!((s.mean(&id("a")).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.count(&id("a")), 2);
        assert_eq!(s.mean(&id("b")), None);
        assert!(s.record(&id("a"), f64::NAN).is_err());
        assert_eq!(s.combined_history().len(), 2);
    }

    #[test]
    fn records_validate_and_export() {
        let mut s = FeedbackStore::new();
        let rec = FeedbackRecord {
            config_id: id("c"),
            round: 5,
            kind: FeedbackKind::Probe,
            train_loss: 0.5,
            val_loss: 0.6,
            group_size: 3,
            probe_target: Some("learning_rate".into()),
        };
        s.push(rec.clone()).unwrap();
        s.push(FeedbackRecord {
            kind: FeedbackKind::Global,
            probe_target: None,
            ..rec.clone()
        })
        .unwrap();
        assert!(s
            .push(FeedbackRecord {
                group_size: 0,
                ..rec.clone()
            })
            .is_err());
        assert!(s
            .push(FeedbackRecord {
                kind: FeedbackKind::Local,
                ..rec.clone()
            })
            .is_err());
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let back: FeedbackRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(back, rec);
        assert!(!lines[1].contains("probe_target"));
    }

    #[test]
    fn shared_store_serializes_concurrent_records() {
        let shared = SharedFeedbackStore::default();
        std::thread::scope(|scope| {
            for t in 0..8 {
                let s = shared.clone();
                scope.spawn(move || {
                    for i in 0..250 {
                        s.record(&id("x"), (t * 250 + i) as f64).unwrap();
                    }
                });
            }
        });
        let snap = shared.snapshot();
        assert_eq!(snap.count(&id("x")), 2000);
        assert!((snap.mean(&id("x")).unwrap() - 999.5).abs() < 1e-9);
    }
}
