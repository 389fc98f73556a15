//! Simulated client latency, dynamic grouping by completion time, and the
//! discrete-event dispatcher that lets fast groups move on to a new
//! configuration while slow clients are still training.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpo::{
    combine_feedback, ConfigId, FeedbackKind, FeedbackRecord, FeedbackStore, HpConfig,
    RandomSampler,
};
use crate::model::TrainHp;
use crate::rng::{derive_seed, rng_from, stream};

/// Per-client speed: `base_time` simulated seconds per epoch per 100
/// samples, times a log-normal jitter with spread `jitter_sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub base_time: f64,
    pub jitter_sigma: f64,
}

impl LatencyProfile {
    pub fn new(base_time: f64, jitter_sigma: f64) -> Result<Self> {
        if !(base_time.is_finite() && base_time > 0.0) {
            return Err(Error::config("latency.base_time", "must be positive"));
        }
        if !(jitter_sigma.is_finite() && jitter_sigma >= 0.0) {
            return Err(Error::config("latency.jitter_sigma", "must be nonnegative"));
        }
        Ok(LatencyProfile {
            base_time,
            jitter_sigma,
        })
    }
}

pub fn completion_time(profile: &LatencyProfile, hp: &TrainHp, n_samples: usize, rng_seed: u64) -> f64 {
    let jitter = if profile.jitter_sigma > 0.0 {
        let z: f64 = rng_from(rng_seed, &[stream::LATENCY]).sample(StandardNormal);
        (profile.jitter_sigma * z).exp()
    } else {
        1.0
    };
    profile.base_time * hp.local_epochs as f64 * (n_samples as f64 / 100.0) * jitter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientGroup {
    pub group_id: usize,
    /// Sorted by client id.
    pub members: Vec<usize>,
    /// Simulated time at which the last member became ready.
    pub formation_time: f64,
    pub hp_under_eval: Option<ConfigId>,
}

/// Greedy sweep over completions sorted by time: a group collects every
/// completion within `window` of its first one, and the next completion
/// after that opens a new group.
pub fn form_groups(completions: &[(usize, f64)], window: f64) -> Vec<ClientGroup> {
    let mut sorted = completions.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut groups: Vec<ClientGroup> = Vec::new();
    let mut opened_at = f64::NEG_INFINITY;
    for (client, t) in sorted {
        match groups.last_mut() {
            Some(g) if t <= opened_at + window => {
                g.members.push(client);
                g.formation_time = t;
            }
            _ => {
                opened_at = t;
                groups.push(ClientGroup {
                    group_id: groups.len(),
                    members: vec![client],
                    formation_time: t,
                    hp_under_eval: None,
                });
            }
        }
    }
    for g in &mut groups {
        g.members.sort_unstable();
    }
    groups
}

/// A quarter of the median completion time, floored at a tiny positive
/// value so zero-epoch rounds still produce a valid window.
pub fn default_window(times: &[f64]) -> f64 {
    if times.is_empty() {
        return f64::MIN_POSITIVE;
    }
    let mut t = times.to_vec();
    t.sort_by(f64::total_cmp);
    let n = t.len();
    let median = if n % 2 == 1 {
        t[n / 2]
    } else {
        0.5 * (t[n / 2 - 1] + t[n / 2])
    };
    (0.25 * median).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Configuration handed to a group (or to every client in a round).
    Issue,
    /// All members of a group finished local training.
    GroupReady,
    /// A group's combined feedback entered the store.
    Record,
    /// The server aggregated client weights into the global model.
    Aggregate,
    /// The global model was scored on the server validation set.
    GlobalEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub sim_time: f64,
    pub event_kind: EventKind,
    pub group_id: Option<usize>,
    pub config_id: Option<ConfigId>,
    pub round: usize,
}

pub fn write_events_jsonl<W: Write>(events: &[Event], mut w: W) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(e).map_err(|e| Error::Serialization(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("events.jsonl", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchMode {
    /// Every evaluation waits for all clients.
    Sync,
    /// Clients report in groups formed from their completion times.
    Grouped,
}

/// Source of configurations for groups that just reported.
pub trait HpoEngine {
    fn issue(&mut self, group: &ClientGroup, store: &FeedbackStore) -> Result<HpConfig>;
}

/// What a group sends back once its members finished training.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFeedback {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// Loss of the updated global model on the server validation set.
    pub global_loss: f64,
    /// Largest number of global updates a member's starting weights missed.
    pub staleness: usize,
}

/// The federated side of the dispatcher.
pub trait GroupRunner {
    fn n_clients(&self) -> usize;
    /// Begin the client's `iteration`-th local training under `hp`; returns
    /// its simulated duration.
    fn start(&mut self, client: usize, hp: &HpConfig, iteration: usize) -> Result<f64>;
    /// Fold the members' finished updates into the global model and
    /// evaluate it.
    fn report(&mut self, members: &[usize], hp: &HpConfig) -> Result<GroupFeedback>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: ClientGroup,
    pub issued_at: f64,
    pub combined: f64,
    pub staleness: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchOutcome {
    pub events: Vec<Event>,
    pub reports: Vec<GroupReport>,
    /// Simulated time at which the last requested evaluation arrived.
    pub makespan: f64,
}

struct InFlight {
    finish: f64,
    issued_at: f64,
    config: HpConfig,
    /// Order in which the client's current configuration was issued.
    issue_seq: usize,
}

/// Run the event loop until `evaluations` group reports have been recorded.
///
/// In [`DispatchMode::Grouped`] the earliest pending completion opens a
/// group that takes in every client under the same configuration finishing
/// within `window` of it. The group reports when its last member is done and
/// immediately receives a fresh configuration, without waiting for anyone
/// else. [`DispatchMode::Sync`] always waits for every client.
pub fn dispatch<E: HpoEngine, R: GroupRunner>(
    mode: DispatchMode,
    window: f64,
    evaluations: usize,
    engine: &mut E,
    runner: &mut R,
    store: &mut FeedbackStore,
) -> Result<DispatchOutcome> {
    let n = runner.n_clients();
    if n == 0 {
        return Err(Error::config("clients", "dispatch needs at least one client"));
    }
    if !(window > 0.0) {
        return Err(Error::config("grouping_window", "must be positive"));
    }
    let mut events = Vec::new();
    let mut reports = Vec::new();
    let mut iteration = vec![0usize; n];
    let mut pending: Vec<Option<InFlight>> = (0..n).map(|_| None).collect();
    let mut next_group = 0usize;
    let mut issue_seq = 0usize;

    let initial = ClientGroup {
        group_id: next_group,
        members: (0..n).collect(),
        formation_time: 0.0,
        hp_under_eval: None,
    };
    next_group += 1;
    let mut to_issue = vec![initial];
    let mut makespan = 0.0;

    while reports.len() < evaluations {
        for mut g in to_issue.drain(..) {
            let cfg = engine.issue(&g, store)?;
            g.hp_under_eval = Some(cfg.config_id.clone());
            events.push(Event {
                sim_time: g.formation_time,
                event_kind: EventKind::Issue,
                group_id: Some(g.group_id),
                config_id: Some(cfg.config_id.clone()),
                round: reports.len(),
            });
            for &c in &g.members {
                let d = runner.start(c, &cfg, iteration[c])?;
                iteration[c] += 1;
                pending[c] = Some(InFlight {
                    finish: g.formation_time + d,
                    issued_at: g.formation_time,
                    config: cfg.clone(),
                    issue_seq,
                });
            }
            issue_seq += 1;
        }

        let t0 = pending
            .iter()
            .filter_map(|p| p.as_ref().map(|p| p.finish))
            .min_by(|a, b| a.total_cmp(b))
            .expect("some client is always in flight");
        let horizon = match mode {
            DispatchMode::Sync => f64::INFINITY,
            DispatchMode::Grouped => t0 + window,
        };

        // Ready clients, split by the configuration they were evaluating.
        let mut ready: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (c, p) in pending.iter().enumerate() {
            if let Some(p) = p {
                if p.finish <= horizon {
                    ready.entry(p.issue_seq).or_default().push(c);
                }
            }
        }

        let mut batch: Vec<(ClientGroup, HpConfig, f64)> = ready
            .into_values()
            .map(|members| {
                let formation = members
                    .iter()
                    .map(|&c| pending[c].as_ref().unwrap().finish)
                    .fold(f64::NEG_INFINITY, f64::max);
                let p = pending[members[0]].as_ref().unwrap();
                let g = ClientGroup {
                    group_id: 0,
                    members,
                    formation_time: formation,
                    hp_under_eval: Some(p.config.config_id.clone()),
                };
                (g, p.config.clone(), p.issued_at)
            })
            .collect();
        batch.sort_by(|a, b| {
            a.0.formation_time
                .total_cmp(&b.0.formation_time)
                .then(a.0.members[0].cmp(&b.0.members[0]))
        });

        for (mut g, cfg, issued_at) in batch {
            if reports.len() == evaluations {
                break;
            }
            g.group_id = next_group;
            next_group += 1;
            for &c in &g.members {
                pending[c] = None;
            }
            events.push(Event {
                sim_time: g.formation_time,
                event_kind: EventKind::GroupReady,
                group_id: Some(g.group_id),
                config_id: Some(cfg.config_id.clone()),
                round: reports.len() + 1,
            });
            let fb = runner.report(&g.members, &cfg)?;
            let size = g.members.len();
            let combined = combine_feedback(&fb.val_losses, fb.global_loss, size)?;
            store.record(&cfg.config_id, combined)?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            store.push(FeedbackRecord {
                config_id: cfg.config_id.clone(),
                round: reports.len() + 1,
                kind: FeedbackKind::Local,
                train_loss: mean(&fb.train_losses),
                val_loss: mean(&fb.val_losses),
                group_size: size,
                probe_target: None,
            })?;
            store.push(FeedbackRecord {
                config_id: cfg.config_id.clone(),
                round: reports.len() + 1,
                kind: FeedbackKind::Global,
                train_loss: mean(&fb.train_losses),
                val_loss: fb.global_loss,
                group_size: size,
                probe_target: None,
            })?;
            events.push(Event {
                sim_time: g.formation_time,
                event_kind: EventKind::Record,
                group_id: Some(g.group_id),
                config_id: Some(cfg.config_id.clone()),
                round: reports.len() + 1,
            });
            makespan = g.formation_time;
            reports.push(GroupReport {
                group: g.clone(),
                issued_at,
                combined,
                staleness: fb.staleness,
            });
            log::debug!(
                "group {} ({} clients) reported {} at t={:.3}, staleness {}",
                g.group_id,
                size,
                cfg.config_id,
                g.formation_time,
                fb.staleness
            );
            to_issue.push(g);
        }
    }

    Ok(DispatchOutcome {
        events,
        reports,
        makespan,
    })
}

/// Issues the same configuration forever.
#[derive(Debug, Clone)]
pub struct FixedEngine(pub HpConfig);

impl HpoEngine for FixedEngine {
    fn issue(&mut self, _: &ClientGroup, _: &FeedbackStore) -> Result<HpConfig> {
        Ok(self.0.clone())
    }
}

/// Issues configurations from a list in order, repeating the last one.
#[derive(Debug, Clone)]
pub struct ScriptedEngine {
    configs: Vec<HpConfig>,
    next: usize,
}

impl ScriptedEngine {
    pub fn new(configs: Vec<HpConfig>) -> Self {
        assert!(!configs.is_empty(), "script needs at least one config");
        ScriptedEngine { configs, next: 0 }
    }
}

impl HpoEngine for ScriptedEngine {
    fn issue(&mut self, _: &ClientGroup, _: &FeedbackStore) -> Result<HpConfig> {
        let c = self.configs[self.next.min(self.configs.len() - 1)].clone();
        self.next += 1;
        Ok(c)
    }
}

/// Random search without replacement; repeats its last draw once the grid
/// is exhausted.
#[derive(Debug, Clone)]
pub struct RandomEngine {
    sampler: RandomSampler,
    last: Option<HpConfig>,
}

impl RandomEngine {
    pub fn new(sampler: RandomSampler) -> Self {
        RandomEngine {
            sampler,
            last: None,
        }
    }
}

impl HpoEngine for RandomEngine {
    fn issue(&mut self, _: &ClientGroup, _: &FeedbackStore) -> Result<HpConfig> {
        if let Some(c) = self.sampler.next_config() {
            self.last = Some(c);
        }
        self.last
            .clone()
            .ok_or_else(|| Error::config("search_space", "search space is empty"))
    }
}

/// Seed for a client's `iteration`-th completion-time draw.
pub fn latency_seed(base: u64, client: usize, iteration: usize) -> u64 {
    derive_seed(base, &[stream::LATENCY, client as u64, iteration as u64])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(epochs: usize) -> TrainHp {
        TrainHp {
            local_epochs: epochs,
            ..TrainHp::default()
        }
    }

    #[test]
    fn completion_time_scaling() {
        let p = LatencyProfile::new(1.0, 0.0).unwrap();
        assert_eq!(completion_time(&p, &hp(1), 100, 3), 1.0);
        assert_eq!(completion_time(&p, &hp(2), 100, 3), 2.0 * completion_time(&p, &hp(1), 100, 3));
        assert_eq!(completion_time(&p, &hp(0), 100, 3), 0.0);
        let j = LatencyProfile::new(1.0, 0.5).unwrap();
        assert_eq!(completion_time(&j, &hp(1), 50, 9), completion_time(&j, &hp(1), 50, 9));
        assert_ne!(completion_time(&j, &hp(1), 50, 9), completion_time(&j, &hp(1), 50, 10));
        assert!(LatencyProfile::new(0.0, 0.1).is_err());
        assert!(LatencyProfile::new(1.0, -0.1).is_err());
    }

    #[test]
    fn grouping_examples() {
        let g = form_groups(&[(1, 1.0), (2, 1.05), (3, 9.0)], 0.5);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].members, vec![1, 2]);
        assert_eq!(g[0].formation_time, 1.05);
        assert_eq!(g[1].members, vec![3]);

        let same = form_groups(&[(4, 2.0), (0, 2.0), (7, 2.0)], 0.1);
        assert_eq!(same.len(), 1);
        assert_eq!(same[0].members, vec![0, 4, 7]);

        let wide = form_groups(&[(0, 1.0), (1, 3.0), (2, 5.0)], 4.0);
        assert_eq!(wide.len(), 1);
    }

    #[test]
    fn window_is_measured_from_group_start() {
        // 1.0 -> 1.4 -> 1.8 chains would merge under a sliding window
        let g = form_groups(&[(0, 1.0), (1, 1.4), (2, 1.8)], 0.5);
        assert_eq!(g.len(), 2);
        assert_eq!(g[1].members, vec![2]);
    }

    #[test]
    fn default_window_is_quarter_median() {
        assert_eq!(default_window(&[1.0, 2.0, 100.0]), 0.5);
        assert_eq!(default_window(&[1.0, 3.0]), 0.5);
        assert!(default_window(&[0.0, 0.0]) > 0.0);
    }

    #[test]
    fn events_serialize_one_per_line() {
        let ev = vec![Event {
            sim_time: 1.5,
            event_kind: EventKind::GroupReady,
            group_id: Some(2),
            config_id: Some(ConfigId("abc".into())),
            round: 3,
        }];
        let mut buf = Vec::new();
        write_events_jsonl(&ev, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "{\"sim_time\":1.5,\"event_kind\":\"group_ready\",\"group_id\":2,\"config_id\":\"abc\",\"round\":3}\n"
        );
    }
}
