use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::feedback::FeedbackStore;
use super::space::{ConfigId, HpConfig, SearchSpace};
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

/// A configuration evaluated during a probe round. `target` names the single
/// hyperparameter that differs from the current configuration; it is `None`
/// for the current configuration itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub config: HpConfig,
    pub target: Option<String>,
    pub direction: Option<Direction>,
}

fn draw_config<R: Rng>(space: &SearchSpace, rng: &mut R) -> HpConfig {
    HpConfig::new(
        space
            .dims
            .iter()
            .map(|d| {
                let g = d.grid();
                (d.name.clone(), g[rng.random_range(0..g.len())])
            })
            .collect(),
    )
}

/// Uniform draw over each dimension's grid, independently per dimension.
pub fn suggest_random(space: &SearchSpace, rng_seed: u64) -> HpConfig {
    draw_config(space, &mut rng_from(rng_seed, &[stream::SAMPLER]))
}

/// The current configuration followed by one neighbour per tuned
/// hyperparameter, each one grid step away in a single coordinate.
///
/// A neighbour steps in the direction of the last accepted improvement for
/// that hyperparameter, upward when there is none, and the other way when
/// the preferred step would leave the grid. Hyperparameters whose grid has a
/// single point get no neighbour.
pub fn probe_set(
    space: &SearchSpace,
    current: &HpConfig,
    store: &FeedbackStore,
    tuned: &[String],
) -> Result<Vec<ProbeConfig>> {
    let mut out = vec![ProbeConfig {
        config: current.clone(),
        target: None,
        direction: None,
    }];
    for name in tuned {
        let dim = space
            .dim(name)
            .ok_or_else(|| Error::config("tuned", format!("`{name}` is not in the search space")))?;
        let value = current
            .get(name)
            .ok_or_else(|| Error::config("tuned", format!("current config lacks `{name}`")))?;
        let idx = dim.index_of(value).ok_or_else(|| {
            Error::config("tuned", format!("{name} = {value} is not on its grid"))
        })?;
        let g = dim.grid();
        if g.len() < 2 {
            continue;
        }
        let preferred = store.last_direction(name).unwrap_or(Direction::Up);
        let step = |d: Direction| match d {
            Direction::Up => (idx + 1 < g.len()).then(|| idx + 1),
            Direction::Down => idx.checked_sub(1),
        };
        let (dir, j) = match step(preferred) {
            Some(j) => (preferred, j),
            None => (preferred.reverse(), step(preferred.reverse()).expect("grid has 2+ points")),
        };
        out.push(ProbeConfig {
            config: current.with(name, g[j]),
            target: Some(name.clone()),
            direction: Some(dir),
        });
    }
    Ok(out)
}

/// Outcome of one adaptive move.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStep {
    pub config: HpConfig,
    /// Hyperparameters moved to a better-scoring neighbour.
    pub accepted: Vec<(String, Direction)>,
    /// Hyperparameter redrawn at random, if exploration fired.
    pub explored: Option<String>,
}

/// Per-coordinate move driven only by the latest probe results.
///
/// For each probed hyperparameter the neighbour's value is adopted when its
/// combined feedback is strictly lower than that of the current
/// configuration. With probability `epsilon` one tuned hyperparameter is then
/// replaced by a uniform draw from its grid. Without a result for the current
/// configuration there is nothing to compare against and `current` is
/// returned unchanged.
pub fn suggest_adaptive<R: Rng>(
    space: &SearchSpace,
    current: &HpConfig,
    latest: &[(ProbeConfig, f64)],
    tuned: &[String],
    epsilon: f64,
    rng: &mut R,
) -> AdaptiveStep {
    let unchanged = AdaptiveStep {
        config: current.clone(),
        accepted: Vec::new(),
        explored: None,
    };
    let Some(base) = latest
        .iter()
        .find(|(p, _)| p.target.is_none() && p.config.config_id == current.config_id)
        .map(|(_, v)| *v)
    else {
        return unchanged;
    };

    let mut values = current.values.clone();
    let mut accepted = Vec::new();
    for (probe, score) in latest {
        let Some(name) = &probe.target else { continue };
        if *score < base {
            if let Some(v) = probe.config.get(name) {
                values.insert(name.clone(), v);
                accepted.push((name.clone(), probe.direction.unwrap_or(Direction::Up)));
            }
        }
    }

    let mut explored = None;
    if epsilon > 0.0 && !tuned.is_empty() && rng.random::<f64>() < epsilon {
        let name = &tuned[rng.random_range(0..tuned.len())];
        if let Some(dim) = space.dim(name) {
            let g = dim.grid();
            values.insert(name.clone(), g[rng.random_range(0..g.len())]);
            explored = Some(name.clone());
        }
    }

    for d in &space.dims {
        if let Some(v) = values.get_mut(&d.name) {
            *v = d.snap(*v);
        }
    }
    AdaptiveStep {
        config: HpConfig::new(values),
        accepted,
        explored,
    }
}

/// Picks a configuration not issued before, first by random draws and then
/// by enumeration. `None` once the grid is exhausted.
fn fresh_config(
    space: &SearchSpace,
    visited: &BTreeSet<ConfigId>,
    rng: &mut ChaCha8Rng,
) -> Option<HpConfig> {
    for _ in 0..64 {
        let c = draw_config(space, rng);
        if !visited.contains(&c.config_id) {
            return Some(c);
        }
    }
    (0..space.cardinality())
        .map(|i| space.config_at(i))
        .find(|c| !visited.contains(&c.config_id))
}

/// Random search without replacement.
#[derive(Debug, Clone)]
pub struct RandomSampler {
    space: SearchSpace,
    rng: ChaCha8Rng,
    visited: BTreeSet<ConfigId>,
}

impl RandomSampler {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        RandomSampler {
            space,
            rng: rng_from(seed, &[stream::SAMPLER]),
            visited: BTreeSet::new(),
        }
    }

    pub fn next_config(&mut self) -> Option<HpConfig> {
        let c = fresh_config(&self.space, &self.visited, &mut self.rng)?;
        self.visited.insert(c.config_id.clone());
        Some(c)
    }
}

/// Drives [`suggest_adaptive`] across trials: remembers issued
/// configurations, records accepted directions in the store, and perturbs a
/// suggestion that was already evaluated.
#[derive(Debug, Clone)]
pub struct AdaptiveSampler {
    space: SearchSpace,
    tuned: Vec<String>,
    epsilon: f64,
    rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    visited: BTreeSet<ConfigId>,
    current: Option<HpConfig>,
}

impl AdaptiveSampler {
    pub fn new(space: SearchSpace, epsilon: f64, seed: u64) -> Self {
        let tuned = space
            .dims
            .iter()
            .filter(|d| d.grid().len() > 1)
            .map(|d| d.name.clone())
            .collect();
        AdaptiveSampler {
            space,
            tuned,
            epsilon,
            rng: rng_from(seed, &[stream::SAMPLER]),
            explore_rng: rng_from(seed, &[stream::EXPLORE]),
            visited: BTreeSet::new(),
            current: None,
        }
    }

    pub fn tuned(&self) -> &[String] {
        &self.tuned
    }

    pub fn current(&self) -> Option<&HpConfig> {
        self.current.as_ref()
    }

    fn issue(&mut self, c: HpConfig) -> HpConfig {
        self.visited.insert(c.config_id.clone());
        self.current = Some(c.clone());
        c
    }

    /// First configuration: a uniform random draw.
    pub fn start(&mut self) -> Option<HpConfig> {
        let c = fresh_config(&self.space, &self.visited, &mut self.rng)?;
        Some(self.issue(c))
    }

    /// Next configuration from the latest probe results of the current one.
    pub fn next_config(
        &mut self,
        store: &mut FeedbackStore,
        latest: &[(ProbeConfig, f64)],
    ) -> Option<HpConfig> {
        let Some(current) = self.current.clone() else {
            return self.start();
        };
        let step = suggest_adaptive(
            &self.space,
            &current,
            latest,
            &self.tuned,
            self.epsilon,
            &mut self.explore_rng,
        );
        for (name, dir) in &step.accepted {
            store.note_direction(name, *dir);
        }
        let mut candidate = step.config;
        let mut tries = 0;
        while self.visited.contains(&candidate.config_id) && tries < 64 && !self.tuned.is_empty() {
            let name = &self.tuned[self.explore_rng.random_range(0..self.tuned.len())];
            let g = self.space.dim(name).expect("tuned dims come from the space").grid();
            candidate = candidate.with(name, g[self.explore_rng.random_range(0..g.len())]);
            tries += 1;
        }
        if self.visited.contains(&candidate.config_id) {
            candidate = fresh_config(&self.space, &self.visited, &mut self.rng)?;
        }
        Some(self.issue(candidate))
    }
}
