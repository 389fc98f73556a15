use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::fedavg_aggregate;
use super::world::{ClientState, World};
use crate::error::{Error, Result};
use crate::hpo::{FeedbackKind, FeedbackRecord, HpConfig};
use crate::model::{Evaluation, TrainHp, TrainOutcome, WeightVector};
use crate::rng::derive_seed;
use crate::sched::{completion_time, default_window, form_groups, latency_seed, ClientGroup, Event, EventKind};

const SNAPSHOT_FORMAT: &str = "fedtune.round_state";
const SNAPSHOT_VERSION: u32 = 1;

/// Server state between communication rounds. `round` is the next round to
/// run, counted from 1; a state with `round == max_rounds + 1` is finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub round: usize,
    pub max_rounds: usize,
    pub global_weights: WeightVector,
    pub current_hp: HpConfig,
    pub sim_time: f64,
    /// Fixed after the first round unless the world pins it.
    pub grouping_window: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    state: RoundState,
}

impl RoundState {
    pub fn initial(world: &World, hp: HpConfig, max_rounds: usize) -> Self {
        RoundState {
            round: 1,
            max_rounds,
            global_weights: world.initial_weights.clone(),
            current_hp: hp,
            sim_time: 0.0,
            grouping_window: world.grouping_window,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.round > self.max_rounds
    }

    /// Versioned JSON snapshot. Floats round-trip exactly.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            state: self.clone(),
        })
        .map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Snapshot =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported snapshot {} v{}",
                snap.format, snap.version
            )));
        }
        Ok(snap.state)
    }
}

/// Loss and accuracy of the global model after a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Server validation loss.
    pub global_loss: f64,
    /// Accuracy on the pooled client test splits.
    pub accuracy: f64,
    pub sim_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientResult {
    pub client_id: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub n_train: usize,
    pub completion_time: f64,
}

/// Global feedback, produced on evaluation rounds only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalFeedback {
    pub val_loss: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub state: RoundState,
    /// One local record per client group.
    pub local_feedbacks: Vec<FeedbackRecord>,
    pub groups: Vec<ClientGroup>,
    /// Sorted by client id.
    pub clients: Vec<ClientResult>,
    pub global: Option<GlobalFeedback>,
    pub metrics: RoundMetrics,
    pub events: Vec<Event>,
}

impl RoundOutcome {
    pub fn client(&self, client_id: usize) -> Option<&ClientResult> {
        self.clients
            .binary_search_by_key(&client_id, |r| r.client_id)
            .ok()
            .map(|i| &self.clients[i])
    }

    /// Validation losses of a group's members.
    pub fn group_losses(&self, group: &ClientGroup) -> Vec<f64> {
        group
            .members
            .iter()
            .filter_map(|&m| self.client(m).map(|r| r.val_loss))
            .collect()
    }
}

/// Seed for a client's local training in a given round.
pub(crate) fn train_seed(world: &World, round: usize, client: usize) -> u64 {
    derive_seed(world.seed, &[0x7472_6169_6e, round as u64, client as u64])
}

/// Train every client from `start` under `hp`, in parallel. Results come
/// back in client order.
pub(crate) fn train_all(
    world: &World,
    start: &WeightVector,
    hp: &TrainHp,
    round: usize,
) -> Vec<Result<TrainOutcome>> {
    world
        .clients
        .par_iter()
        .map(|c| {
            world
                .model
                .local_train(start, hp, &c.shard, train_seed(world, round, c.client_id))
        })
        .collect()
}

/// Sample-count-weighted global train loss from per-client losses.
fn pooled_train_loss(results: &[ClientResult]) -> f64 {
    let n: usize = results.iter().map(|r| r.n_train).sum();
    results
        .iter()
        .map(|r| r.train_loss * r.n_train as f64)
        .sum::<f64>()
        / n as f64
}

/// One communication round: broadcast, local training, grouping by
/// completion time, FedAvg over all clients, and global evaluation on
/// cadence rounds.
pub fn run_round(
    world: &World,
    state: &RoundState,
    clients: &mut [ClientState],
    hp: &HpConfig,
) -> Result<RoundOutcome> {
    if clients.is_empty() {
        return Err(Error::config("clients", "a round needs at least one client"));
    }
    if state.round == 0 || state.round > state.max_rounds {
        return Err(Error::config(
            "round",
            format!("round {} outside 1..={}", state.round, state.max_rounds),
        ));
    }
    let round = state.round;
    let train_hp = hp.to_train_hp(&world.defaults);
    let outcomes: Vec<TrainOutcome> = clients
        .par_iter()
        .map(|c| {
            world
                .model
                .local_train(&state.global_weights, &train_hp, &c.shard, train_seed(world, round, c.client_id))
                .map_err(|e| e.with_context(Some(c.client_id), Some(round), Some(hp.config_id.as_str())))
        })
        .collect::<Result<_>>()?;

    let mut results: Vec<ClientResult> = clients
        .iter()
        .zip(&outcomes)
        .map(|(c, o)| ClientResult {
            client_id: c.client_id,
            train_loss: o.train_loss,
            val_loss: o.val_loss,
            n_train: c.shard.train.len(),
            completion_time: completion_time(
                &c.latency,
                &train_hp,
                c.shard.train.len(),
                latency_seed(world.seed, c.client_id, round - 1),
            ),
        })
        .collect();

    let window = state.grouping_window.unwrap_or_else(|| {
        default_window(&results.iter().map(|r| r.completion_time).collect::<Vec<_>>())
    });
    let completions: Vec<(usize, f64)> = results
        .iter()
        .map(|r| (r.client_id, r.completion_time))
        .collect();
    let mut groups = form_groups(&completions, window);
    for g in &mut groups {
        g.hp_under_eval = Some(hp.config_id.clone());
    }

    // Aggregate in client-id order so the reduction is order independent.
    let mut order: Vec<usize> = (0..clients.len()).collect();
    order.sort_by_key(|&i| clients[i].client_id);
    let updates: Vec<(&WeightVector, usize)> = order
        .iter()
        .map(|&i| (&outcomes[i].weights, clients[i].shard.train.len()))
        .collect();
    let global_weights = fedavg_aggregate(&updates, world.aggregation)?;

    for (c, o) in clients.iter_mut().zip(outcomes) {
        c.local_weights = o.weights;
    }
    results.sort_by_key(|r| r.client_id);
    let by_id = |id: usize| &results[results.binary_search_by_key(&id, |r| r.client_id).expect("member")];

    let round_start = state.sim_time;
    let barrier = results
        .iter()
        .map(|r| r.completion_time)
        .fold(0.0, f64::max);
    let sim_time = round_start + barrier;
    let cid = Some(hp.config_id.clone());
    let mut events = vec![Event {
        sim_time: round_start,
        event_kind: EventKind::Issue,
        group_id: None,
        config_id: cid.clone(),
        round,
    }];
    let mut local_feedbacks = Vec::with_capacity(groups.len());
    for g in &groups {
        events.push(Event {
            sim_time: round_start + g.formation_time,
            event_kind: EventKind::GroupReady,
            group_id: Some(g.group_id),
            config_id: cid.clone(),
            round,
        });
        let n = g.members.len() as f64;
        local_feedbacks.push(FeedbackRecord {
            config_id: hp.config_id.clone(),
            round,
            kind: FeedbackKind::Local,
            train_loss: g.members.iter().map(|&m| by_id(m).train_loss).sum::<f64>() / n,
            val_loss: g.members.iter().map(|&m| by_id(m).val_loss).sum::<f64>() / n,
            group_size: g.members.len(),
            probe_target: None,
        });
    }
    events.push(Event {
        sim_time,
        event_kind: EventKind::Aggregate,
        group_id: None,
        config_id: cid.clone(),
        round,
    });

    let Evaluation { loss: val_loss, .. } = world.model.evaluate(&global_weights, &world.evaluator.val_set)?;
    let accuracy = world.model.evaluate(&global_weights, world.accuracy_set())?.accuracy;
    if !val_loss.is_finite() {
        return Err(Error::Divergence(crate::error::DivergenceContext {
            stage: "global evaluation".into(),
            client_id: None,
            round: Some(round),
            config_id: Some(hp.config_id.to_string()),
        }));
    }
    let global = world.evaluator.is_eval_round(round).then(|| {
        events.push(Event {
            sim_time,
            event_kind: EventKind::GlobalEval,
            group_id: None,
            config_id: cid.clone(),
            round,
        });
        GlobalFeedback {
            val_loss,
            train_loss: pooled_train_loss(&results),
        }
    });

    Ok(RoundOutcome {
        state: RoundState {
            round: round + 1,
            max_rounds: state.max_rounds,
            global_weights,
            current_hp: hp.clone(),
            sim_time,
            grouping_window: Some(window),
        },
        local_feedbacks,
        groups,
        clients: results,
        global,
        metrics: RoundMetrics {
            round,
            global_loss: val_loss,
            accuracy,
            sim_time,
        },
        events,
    })
}
