//! Experiment configuration: a TOML file, `--set key=value` overrides and
//! the `FEDTUNE_SEED` environment override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic, load_csv, Dataset, SplitFractions, MIN_TRAIN_SAMPLES};
use crate::error::{Error, Result};
use crate::flcore::{AggregationMode, LatencySpec, WorldSpec};
use crate::hpo::{HpDim, SearchSpace};
use crate::model::{ModelKind, TrainHp};
use crate::rng::{derive_seed, stream};

/// Environment variable that replaces the configured seed list.
pub const SEED_ENV: &str = "FEDTUNE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Random,
    Adaptive,
    Halving,
}

impl SamplerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::Adaptive => "adaptive",
            SamplerKind::Halving => "halving",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Synthetic,
    Csv,
}

/// Either synthetic Gaussian blobs or a CSV file. The synthetic fields are
/// required for `kind = "synthetic"`, `path` for `kind = "csv"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_sep: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_server_val")]
    pub server_val_fraction: f64,
    #[serde(default)]
    pub split: SplitFractions,
}

fn default_server_val() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub n_clients: usize,
    /// Dirichlet concentration; there is no default on purpose.
    pub alpha: f64,
    #[serde(default)]
    pub aggregation: AggregationMode,
    /// Simulated seconds; derived from the first round when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping_window: Option<f64>,
    #[serde(default = "default_min_train")]
    pub min_train: usize,
    #[serde(default)]
    pub latency: LatencySpec,
}

fn default_min_train() -> usize {
    MIN_TRAIN_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub hidden_dim: usize,
    #[serde(default)]
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacePreset {
    /// All five local hyperparameters.
    LowFidelity,
    /// Learning rate, weight decay and local epochs.
    LowFidelityCore,
}

/// A preset, an explicit list of dimensions, or both (explicit dimensions
/// replace the preset's dimension of the same name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpaceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<SpacePreset>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dims: Vec<HpDim>,
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        SearchSpaceConfig {
            preset: Some(SpacePreset::LowFidelity),
            dims: Vec::new(),
        }
    }
}

impl SearchSpaceConfig {
    pub fn resolve(&self) -> Result<SearchSpace> {
        let mut space = match self.preset {
            Some(SpacePreset::LowFidelity) => SearchSpace::low_fidelity(),
            Some(SpacePreset::LowFidelityCore) => SearchSpace::low_fidelity_core(),
            None => SearchSpace::new(Vec::new()),
        };
        for d in &self.dims {
            match space.dims.iter_mut().find(|p| p.name == d.name) {
                Some(p) => *p = d.clone(),
                None => space.dims.push(d.clone()),
            }
        }
        space.validate()?;
        Ok(space)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Probability of replacing one tuned value with a random grid draw.
    pub epsilon: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig { epsilon: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HalvingConfig {
    pub eta: usize,
}

impl Default for HalvingConfig {
    fn default() -> Self {
        HalvingConfig { eta: 2 }
    }
}

/// Optional grouped-versus-synchronous makespan comparison.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub compare_makespan: bool,
    /// Number of group evaluations to simulate; defaults to `budget_configs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sampler: SamplerKind,
    pub budget_configs: usize,
    pub rounds_per_trial: usize,
    #[serde(default = "default_cadence")]
    pub eval_cadence: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Stop a trial after this many global evaluations without improvement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<usize>,
    pub dataset: DatasetConfig,
    pub federation: FederationConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub search_space: SearchSpaceConfig,
    /// Values used for hyperparameters the search space does not tune.
    #[serde(default)]
    pub defaults: TrainHp,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub halving: HalvingConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
}

fn default_cadence() -> usize {
    5
}

fn positive(field: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(field, "must be at least 1"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(toml_error)?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: ExperimentConfig = table.try_into().map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Read `path`, apply `--set` overrides in order, then the seed
    /// override, and validate the result.
    pub fn load(path: impl AsRef<Path>, sets: &[String], env_seed: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, sets, env_seed)
    }

    pub fn parse_with_overrides(text: &str, sets: &[String], env_seed: Option<&str>) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(toml_error)?;
        for s in sets {
            apply_override(&mut table, s)?;
        }
        if let Some(raw) = env_seed {
            let seeds = parse_seed_list(raw)?;
            table.insert(
                "seeds".into(),
                toml::Value::Array(seeds.into_iter().map(|s| toml::Value::Integer(s as i64)).collect()),
            );
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<()> {
        positive("budget_configs", self.budget_configs)?;
        positive("rounds_per_trial", self.rounds_per_trial)?;
        positive("eval_cadence", self.eval_cadence)?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "list at least one seed"));
        }
        if self.seeds.iter().any(|&s| s > i64::MAX as u64) {
            return Err(Error::config("seeds", "seeds must fit in a signed 64-bit integer"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        if let Some(p) = self.early_stop_patience {
            positive("early_stop_patience", p)?;
        }

        let d = &self.dataset;
        match d.kind {
            DatasetKind::Synthetic => {
                let classes = d
                    .num_classes
                    .ok_or_else(|| Error::config("dataset.num_classes", "required for synthetic data"))?;
                if classes < 2 {
                    return Err(Error::config("dataset.num_classes", "need at least 2 classes"));
                }
                let dim = d
                    .input_dim
                    .ok_or_else(|| Error::config("dataset.input_dim", "required for synthetic data"))?;
                positive("dataset.input_dim", dim)?;
                let n = d
                    .n_samples
                    .ok_or_else(|| Error::config("dataset.n_samples", "required for synthetic data"))?;
                if n < classes {
                    return Err(Error::config("dataset.n_samples", "must be at least num_classes"));
                }
                let sep = d
                    .class_sep
                    .ok_or_else(|| Error::config("dataset.class_sep", "required for synthetic data"))?;
                if !(sep > 0.0 && sep.is_finite()) {
                    return Err(Error::config("dataset.class_sep", "must be positive"));
                }
                if d.path.is_some() {
                    return Err(Error::config("dataset.path", "only used with kind = \"csv\""));
                }
            }
            DatasetKind::Csv => {
                if d.path.is_none() {
                    return Err(Error::config("dataset.path", "required for csv data"));
                }
                for (field, v) in [
                    ("dataset.num_classes", d.num_classes.is_some()),
                    ("dataset.input_dim", d.input_dim.is_some()),
                    ("dataset.n_samples", d.n_samples.is_some()),
                    ("dataset.class_sep", d.class_sep.is_some()),
                ] {
                    if v {
                        return Err(Error::config(field, "only used with kind = \"synthetic\""));
                    }
                }
            }
        }
        if !(d.server_val_fraction > 0.0 && d.server_val_fraction < 1.0) {
            return Err(Error::config("dataset.server_val_fraction", "must lie in (0, 1)"));
        }
        d.split.validate().map_err(|e| rename_field(e, "dataset.split"))?;

        let f = &self.federation;
        positive("federation.n_clients", f.n_clients)?;
        if !(f.alpha > 0.0 && f.alpha.is_finite()) {
            return Err(Error::config("federation.alpha", "must be positive"));
        }
        if let Some(w) = f.grouping_window {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::config("federation.grouping_window", "must be positive"));
            }
        }
        positive("federation.min_train", f.min_train)?;
        f.latency.validate().map_err(|e| rename_field(e, "federation.latency"))?;

        let m = &self.model;
        if m.kind == ModelKind::Mlp && m.hidden_dim == 0 {
            return Err(Error::config("model.hidden_dim", "an mlp needs hidden_dim >= 1"));
        }
        if m.kind == ModelKind::Logistic && m.hidden_dim != 0 {
            return Err(Error::config("model.hidden_dim", "must be 0 for a logistic model"));
        }
        if !(0.0..1.0).contains(&m.dropout_rate) {
            return Err(Error::config("model.dropout_rate", "must lie in [0, 1)"));
        }

        self.search_space.resolve()?;
        self.defaults.validate().map_err(|e| rename_field(e, "defaults"))?;
        if !(0.0..=1.0).contains(&self.adaptive.epsilon) {
            return Err(Error::config("adaptive.epsilon", "must lie in [0, 1]"));
        }
        if self.halving.eta < 2 {
            return Err(Error::config("halving.eta", "must be at least 2"));
        }
        if let Some(e) = self.schedule.evaluations {
            positive("schedule.evaluations", e)?;
        }
        Ok(())
    }

    pub fn space(&self) -> Result<SearchSpace> {
        self.search_space.resolve()
    }

    pub fn world_spec(&self) -> WorldSpec {
        WorldSpec {
            n_clients: self.federation.n_clients,
            alpha: self.federation.alpha,
            split: self.dataset.split,
            min_train: self.federation.min_train,
            model_kind: self.model.kind,
            hidden_dim: self.model.hidden_dim,
            dropout_rate: self.model.dropout_rate,
            server_val_fraction: self.dataset.server_val_fraction,
            latency: self.federation.latency,
            eval_cadence: self.eval_cadence,
            aggregation: self.federation.aggregation,
            defaults: self.defaults,
            grouping_window: self.federation.grouping_window,
            patience: self.early_stop_patience,
        }
    }

    /// The dataset for one seed. Synthetic data is regenerated per seed; a
    /// CSV file is the same for every seed.
    pub fn dataset_for(&self, seed: u64) -> Result<Dataset> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Synthetic => gen_synthetic(
                d.num_classes.unwrap_or(2),
                d.input_dim.unwrap_or(1),
                d.n_samples.unwrap_or(0),
                d.class_sep.unwrap_or(1.0),
                derive_seed(seed, &[stream::DATA]),
            ),
            DatasetKind::Csv => load_csv(d.path.as_ref().expect("validated")),
        }
    }
}

fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().trim().to_owned();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .unwrap_or("config")
        .to_owned();
    Error::config(field, msg)
}

fn rename_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { field, message } => {
            let field = if field.starts_with(prefix) {
                field
            } else {
                format!("{prefix}.{field}")
            };
            Error::Config { field, message }
        }
        other => other,
    }
}

/// Accepts a single seed or a comma-separated list.
pub fn parse_seed_list(raw: &str) -> Result<Vec<u64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::config(SEED_ENV, format!("`{raw}` is not a seed or list of seeds")))
        })
        .collect()
}

/// Apply one `key.path=value` override. The value is read as a TOML value
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config("--set", format!("expected key=value, got `{assignment}`")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config("--set", format!("malformed key `{key}`")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));

    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("key is nonempty");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
sampler = "random"
budget_configs = 2
rounds_per_trial = 3
seeds = [1]
output_dir = "out"

[dataset]
kind = "synthetic"
num_classes = 3
input_dim = 4
n_samples = 300
class_sep = 3.0

[federation]
n_clients = 3
alpha = 1.0

[model]
kind = "logistic"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.eval_cadence, 5);
        assert_eq!(c.adaptive.epsilon, 0.1);
        assert_eq!(c.space().unwrap().dims.len(), 5);
        assert_eq!(c.dataset.split, SplitFractions::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.federation.grouping_window = Some(0.75);
        c.early_stop_patience = Some(2);
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn overrides_and_seed_env() {
        let c = ExperimentConfig::parse_with_overrides(
            MINIMAL,
            &[
                "federation.alpha=0.25".into(),
                "sampler=adaptive".into(),
                "adaptive.epsilon=0".into(),
                "output_dir=elsewhere".into(),
            ],
            Some("4, 9"),
        )
        .unwrap();
        assert_eq!(c.federation.alpha, 0.25);
        assert_eq!(c.sampler, SamplerKind::Adaptive);
        assert_eq!(c.adaptive.epsilon, 0.0);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.seeds, vec![4, 9]);
    }

    #[test]
    fn errors_name_the_field() {
        let field = |sets: &[&str]| {
            let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
            match ExperimentConfig::parse_with_overrides(MINIMAL, &sets, None).unwrap_err() {
                Error::Config { field, .. } => field,
                e => panic!("unexpected {e}"),
            }
        };
        assert_eq!(field(&["budget_configs=0"]), "budget_configs");
        assert_eq!(field(&["federation.alpha=-1"]), "federation.alpha");
        assert_eq!(field(&["seeds=[]"]), "seeds");
        assert_eq!(field(&["model.kind=\"mlp\""]), "model.hidden_dim");
        assert_eq!(field(&["adaptive.epsilon=2"]), "adaptive.epsilon");
        assert_eq!(field(&["typo=1"]), "typo");
        assert_eq!(field(&["federation.alpha.x=1"]), "federation.alpha.x");
        assert!(ExperimentConfig::parse_with_overrides(MINIMAL, &[], Some("abc")).is_err());
    }

    #[test]
    fn explicit_dims_replace_preset_dims() {
        let c = ExperimentConfig::parse_with_overrides(
            &format!(
                "{MINIMAL}\n[search_space]\npreset = \"low_fidelity_core\"\n\
                 [[search_space.dims]]\nname = \"local_epochs\"\nscale = \"linear\"\nlow = 1\nhigh = 3\nstep = 1\n"
            ),
            &[],
            None,
        )
        .unwrap();
        let s = c.space().unwrap();
        assert_eq!(s.dims.len(), 3);
        assert_eq!(s.dim("local_epochs").unwrap().grid(), vec![1.0, 2.0, 3.0]);
    }
}
