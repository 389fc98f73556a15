use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SamplerKind};
use crate::error::{Error, Result};
use crate::flcore::{run_trial_with, AsyncFederation, ProbeSettings, RoundMetrics, TrialResult, World};
use crate::hpo::{
    halving_schedule, select_survivors, AdaptiveSampler, ConfigId, FeedbackRecord, FeedbackStore, HpConfig,
    RandomSampler, SearchSpace,
};
use crate::model::WeightVector;
use crate::rng::{derive_seed, stream};
use crate::sched::{dispatch, default_window, DispatchMode, Event, RandomEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub seed: u64,
    pub sampler: SamplerKind,
    pub trial: usize,
    pub config_id: ConfigId,
    pub hp: BTreeMap<String, f64>,
    /// `+inf` for failed trials.
    pub objective: f64,
    pub accuracy: f64,
    pub rounds_run: usize,
    pub sim_time: f64,
    pub status: TrialStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MakespanComparison {
    pub evaluations: usize,
    pub window: f64,
    pub grouped: f64,
    pub synchronous: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub trials: Vec<TrialRow>,
    /// Index into `trials` of the lowest objective, if any trial succeeded.
    pub best: Option<usize>,
    pub best_trace: Vec<RoundMetrics>,
    pub best_weights: Option<WeightVector>,
    /// Simulated events of every trial, tagged with the trial index.
    pub events: Vec<(usize, Event)>,
    pub feedback: Vec<FeedbackRecord>,
    pub makespan: Option<MakespanComparison>,
}

impl SeedReport {
    pub fn best_row(&self) -> Option<&TrialRow> {
        self.best.map(|i| &self.trials[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub space: SearchSpace,
    pub seeds: Vec<SeedReport>,
}

impl ExperimentReport {
    /// Best test accuracy per seed, in seed order; seeds without a
    /// successful trial contribute 0.
    pub fn best_accuracies(&self) -> Vec<f64> {
        self.seeds
            .iter()
            .map(|s| s.best_row().map_or(0.0, |r| r.accuracy))
            .collect()
    }
}

/// Run the configured sampler for every seed. Seeds run in parallel; the
/// report lists them in configuration order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let space = cfg.space()?;
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, &space, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        space,
        seeds,
    })
}

struct Outcome {
    row: TrialRow,
    result: Option<TrialResult>,
}

struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    world: World,
    space: &'a SearchSpace,
    seed: u64,
    store: FeedbackStore,
    events: Vec<(usize, Event)>,
}

impl SeedRun<'_> {
    fn trial(&mut self, index: usize, hp: &HpConfig, rounds: usize, probes: Option<&[String]>) -> Result<Outcome> {
        let settings = probes.map(|tuned| ProbeSettings {
            space: self.space,
            tuned,
        });
        let base = TrialRow {
            seed: self.seed,
            sampler: self.cfg.sampler,
            trial: index,
            config_id: hp.config_id.clone(),
            hp: hp.values.clone(),
            objective: f64::INFINITY,
            accuracy: 0.0,
            rounds_run: 0,
            sim_time: 0.0,
            status: TrialStatus::Failed,
            error: None,
        };
        match run_trial_with(&self.world, hp, rounds, &mut self.store, settings) {
            Ok(r) if r.objective.is_finite() => {
                log::info!(
                    "seed {} trial {index} {}: objective {:.5} accuracy {:.4}",
                    self.seed,
                    hp.config_id,
                    r.objective,
                    r.test_accuracy
                );
                self.events.extend(r.events.iter().cloned().map(|e| (index, e)));
                Ok(Outcome {
                    row: TrialRow {
                        objective: r.objective,
                        accuracy: r.test_accuracy,
                        rounds_run: r.rounds_run,
                        sim_time: r.sim_time,
                        status: TrialStatus::Ok,
                        ..base
                    },
                    result: Some(r),
                })
            }
            Ok(r) => {
                log::warn!("seed {} trial {index} {}: non-finite objective", self.seed, hp.config_id);
                Ok(Outcome {
                    row: TrialRow {
                        rounds_run: r.rounds_run,
                        sim_time: r.sim_time,
                        error: Some("non-finite objective".into()),
                        ..base
                    },
                    result: None,
                })
            }
            Err(e @ Error::Divergence(_)) => {
                log::warn!("seed {} trial {index} {}: {e}", self.seed, hp.config_id);
                Ok(Outcome {
                    row: TrialRow {
                        error: Some(e.to_string()),
                        ..base
                    },
                    result: None,
                })
            }
            Err(e) => Err(e),
        }
    }
}

fn run_seed(cfg: &ExperimentConfig, space: &SearchSpace, seed: u64) -> Result<SeedReport> {
    let ds = cfg.dataset_for(seed)?;
    let world = World::build(&ds, &cfg.world_spec(), seed)?;
    let sampler_seed = derive_seed(seed, &[stream::SAMPLER]);
    let mut run = SeedRun {
        cfg,
        world,
        space,
        seed,
        store: FeedbackStore::new(),
        events: Vec::new(),
    };
    let k = cfg.rounds_per_trial;
    let mut outcomes: Vec<Outcome> = Vec::with_capacity(cfg.budget_configs);

    match cfg.sampler {
        SamplerKind::Random => {
            let mut sampler = RandomSampler::new(space.clone(), sampler_seed);
            while outcomes.len() < cfg.budget_configs {
                let Some(hp) = sampler.next_config() else { break };
                outcomes.push(run.trial(outcomes.len(), &hp, k, None)?);
            }
        }
        SamplerKind::Adaptive => {
            let mut sampler = AdaptiveSampler::new(space.clone(), cfg.adaptive.epsilon, sampler_seed);
            let tuned = sampler.tuned().to_vec();
            let mut next = sampler.start();
            while let Some(hp) = next {
                let o = run.trial(outcomes.len(), &hp, k, Some(&tuned))?;
                let latest = o.result.as_ref().map(|r| r.latest_probes.clone()).unwrap_or_default();
                outcomes.push(o);
                if outcomes.len() == cfg.budget_configs {
                    break;
                }
                next = sampler.next_config(&mut run.store, &latest);
            }
        }
        SamplerKind::Halving => {
            let mut sampler = RandomSampler::new(space.clone(), sampler_seed);
            let configs: Vec<HpConfig> = std::iter::from_fn(|| sampler.next_config())
                .take(cfg.budget_configs)
                .collect();
            // Each configuration keeps the row of the last rung it reached.
            let mut slots: Vec<Option<Outcome>> = configs.iter().map(|_| None).collect();
            let mut alive: Vec<usize> = (0..configs.len()).collect();
            for rung in halving_schedule(configs.len(), k, cfg.halving.eta) {
                let mut objectives = Vec::with_capacity(alive.len());
                for &i in &alive {
                    let o = run.trial(i, &configs[i], rung.rounds, None)?;
                    objectives.push(o.row.objective);
                    slots[i] = Some(o);
                }
                let keep = (rung.n_configs / cfg.halving.eta).max(1);
                alive = select_survivors(&objectives, keep)
                    .into_iter()
                    .map(|j| alive[j])
                    .collect();
                alive.sort_unstable();
            }
            outcomes = slots.into_iter().flatten().collect();
        }
    }

    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.row.status == TrialStatus::Ok)
        .min_by(|a, b| a.1.row.objective.total_cmp(&b.1.row.objective).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    let (best_trace, best_weights) = match best.and_then(|i| outcomes[i].result.as_ref()) {
        Some(r) => (r.trace.clone(), Some(r.final_weights.clone())),
        None => (Vec::new(), None),
    };
    let makespan = if cfg.schedule.compare_makespan {
        let evaluations = cfg.schedule.evaluations.unwrap_or(cfg.budget_configs);
        match compare_makespan(&run.world, space, evaluations, sampler_seed) {
            Ok(m) => Some(m),
            Err(e @ Error::Divergence(_)) => {
                log::warn!("seed {seed}: makespan comparison skipped: {e}");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(SeedReport {
        seed,
        trials: outcomes.into_iter().map(|o| o.row).collect(),
        best,
        best_trace,
        best_weights,
        events: run.events,
        feedback: run.store.records().to_vec(),
        makespan,
    })
}

/// Simulate the same number of group evaluations with dynamic grouping and
/// with an all-client barrier, issuing random configurations in both.
pub fn compare_makespan(
    world: &World,
    space: &SearchSpace,
    evaluations: usize,
    sampler_seed: u64,
) -> Result<MakespanComparison> {
    let window = match world.grouping_window {
        Some(w) => w,
        None => {
            let hp = world.defaults;
            let times: Vec<f64> = world
                .clients
                .iter()
                .map(|c| {
                    crate::sched::completion_time(
                        &c.latency,
                        &hp,
                        c.shard.train.len(),
                        crate::sched::latency_seed(world.seed, c.client_id, 0),
                    )
                })
                .collect();
            default_window(&times)
        }
    };
    let run_mode = |mode| -> Result<f64> {
        let mut engine = RandomEngine::new(RandomSampler::new(space.clone(), sampler_seed));
        let mut runner = AsyncFederation::new(world);
        let mut store = FeedbackStore::new();
        Ok(dispatch(mode, window, evaluations, &mut engine, &mut runner, &mut store)?.makespan)
    };
    Ok(MakespanComparison {
        evaluations,
        window,
        grouped: run_mode(DispatchMode::Grouped)?,
        synchronous: run_mode(DispatchMode::Sync)?,
    })
}
