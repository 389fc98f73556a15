use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::aggregate::{fedavg_aggregate, weighted_objective};
use super::round::{run_round, train_all, RoundMetrics, RoundState};
use super::world::World;
use crate::error::{Error, Result};
use crate::hpo::{
    combine_feedback, probe_set, ConfigId, FeedbackKind, FeedbackRecord, FeedbackStore, HpConfig,
    ProbeConfig, SearchSpace,
};
use crate::model::WeightVector;
use crate::sched::{Event, EventKind};

/// Which hyperparameters to probe on evaluation rounds.
#[derive(Debug, Clone, Copy)]
pub struct ProbeSettings<'a> {
    pub space: &'a SearchSpace,
    pub tuned: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config_id: ConfigId,
    pub hp: BTreeMap<String, f64>,
    /// Sample-count-weighted client validation loss of the final model.
    pub objective: f64,
    pub test_accuracy: f64,
    pub rounds_run: usize,
    pub sim_time: f64,
    pub trace: Vec<RoundMetrics>,
    /// Combined feedback from the last probe round, current config first.
    pub latest_probes: Vec<(ProbeConfig, f64)>,
    pub final_weights: WeightVector,
    pub events: Vec<Event>,
}

/// Train a fresh global model under a fixed configuration for
/// `budget_rounds` rounds, without probing.
pub fn run_trial(world: &World, hp: &HpConfig, budget_rounds: usize) -> Result<TrialResult> {
    run_trial_with(world, hp, budget_rounds, &mut FeedbackStore::new(), None)
}

/// [`run_trial`] that reports feedback into `store` and, when `probes` is
/// set, also trains one neighbour configuration per tuned hyperparameter on
/// every evaluation round.
///
/// Every evaluation round records, per client group, the combined local and
/// global feedback for `hp`. Probe neighbours start from the same broadcast
/// weights and seeds as the real update; their aggregated weights are scored
/// on the server validation set but never replace the global model.
pub fn run_trial_with(
    world: &World,
    hp: &HpConfig,
    budget_rounds: usize,
    store: &mut FeedbackStore,
    probes: Option<ProbeSettings<'_>>,
) -> Result<TrialResult> {
    if budget_rounds == 0 {
        return Err(Error::config("rounds_per_trial", "must be at least 1"));
    }
    let mut clients = world.clients.clone();
    let mut state = RoundState::initial(world, hp.clone(), budget_rounds);
    let mut trace = Vec::with_capacity(budget_rounds);
    let mut events = Vec::new();
    let mut latest_probes = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut stale_evals = 0usize;

    while !state.is_finished() {
        let round = state.round;
        let broadcast = state.global_weights.clone();
        let out = run_round(world, &state, &mut clients, hp)?;
        for rec in &out.local_feedbacks {
            store.push(rec.clone())?;
        }
        events.extend(out.events.iter().cloned());
        trace.push(out.metrics);

        if let Some(global) = out.global {
            let n_all = out.clients.len();
            store.push(FeedbackRecord {
                config_id: hp.config_id.clone(),
                round,
                kind: FeedbackKind::Global,
                train_loss: global.train_loss,
                val_loss: global.val_loss,
                group_size: n_all,
                probe_target: None,
            })?;
            for g in &out.groups {
                let combined = combine_feedback(&out.group_losses(g), global.val_loss, g.members.len())?;
                store.record(&hp.config_id, combined)?;
                events.push(Event {
                    sim_time: out.state.sim_time,
                    event_kind: EventKind::Record,
                    group_id: Some(g.group_id),
                    config_id: Some(hp.config_id.clone()),
                    round,
                });
            }
            if let Some(p) = probes {
                latest_probes = probe_round(world, &broadcast, &out, hp, round, store, p)?;
            }

            if let Some(patience) = world.patience {
                if global.val_loss < best_loss {
                    best_loss = global.val_loss;
                    stale_evals = 0;
                } else {
                    stale_evals += 1;
                }
                if stale_evals >= patience {
                    log::debug!("early stop at round {round} for {}", hp.config_id);
                    state = out.state;
                    break;
                }
            }
        }
        state = out.state;
    }

    let final_weights = state.global_weights;
    let per_client = clients
        .iter()
        .map(|c| {
            let set = if c.shard.val.is_empty() { &c.shard.train } else { &c.shard.val };
            world
                .model
                .evaluate(&final_weights, set)
                .map(|e| (e.loss, c.shard.total_len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let test_accuracy = world.model.evaluate(&final_weights, world.accuracy_set())?.accuracy;
    Ok(TrialResult {
        config_id: hp.config_id.clone(),
        hp: hp.values.clone(),
        objective: weighted_objective(&per_client),
        test_accuracy,
        rounds_run: trace.len(),
        sim_time: state.sim_time,
        trace,
        latest_probes,
        final_weights,
        events,
    })
}

/// Score the current configuration and its neighbours from the same
/// starting weights. A neighbour that diverges scores `+inf`.
fn probe_round(
    world: &World,
    broadcast: &WeightVector,
    out: &super::round::RoundOutcome,
    hp: &HpConfig,
    round: usize,
    store: &mut FeedbackStore,
    settings: ProbeSettings<'_>,
) -> Result<Vec<(ProbeConfig, f64)>> {
    let candidates = probe_set(settings.space, hp, store, settings.tuned)?;
    let n = out.clients.len();
    let mut scored = Vec::with_capacity(candidates.len());
    for probe in candidates {
        let (train, val, global) = if probe.target.is_none() {
            let global = out.global.expect("probes run on evaluation rounds");
            (
                out.clients.iter().map(|c| c.train_loss).collect::<Vec<_>>(),
                out.clients.iter().map(|c| c.val_loss).collect::<Vec<_>>(),
                Some(global.val_loss),
            )
        } else {
            let train_hp = probe.config.to_train_hp(&world.defaults);
            match train_all(world, broadcast, &train_hp, round)
                .into_iter()
                .collect::<Result<Vec<_>>>()
            {
                Ok(outcomes) => {
                    let updates: Vec<_> = outcomes
                        .iter()
                        .zip(&world.clients)
                        .map(|(o, c)| (&o.weights, c.shard.train.len()))
                        .collect();
                    let global = fedavg_aggregate(&updates, world.aggregation)
                        .and_then(|w| world.model.evaluate(&w, &world.evaluator.val_set))
                        .ok()
                        .map(|e| e.loss)
                        .filter(|l| l.is_finite());
                    (
                        outcomes.iter().map(|o| o.train_loss).collect(),
                        outcomes.iter().map(|o| o.val_loss).collect(),
                        global,
                    )
                }
                Err(Error::Divergence(_)) => (Vec::new(), Vec::new(), None),
                Err(e) => return Err(e),
            }
        };
        let combined = match global {
            Some(gf) => combine_feedback(&val, gf, n)?,
            None => f64::INFINITY,
        };
        if combined.is_finite() {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            store.push(FeedbackRecord {
                config_id: probe.config.config_id.clone(),
                round,
                kind: FeedbackKind::Probe,
                train_loss: mean(&train),
                val_loss: mean(&val),
                group_size: n,
                probe_target: probe.target.clone(),
            })?;
            if probe.target.is_some() {
                store.record(&probe.config.config_id, combined)?;
            }
        }
        scored.push((probe, combined));
    }
    Ok(scored)
}
