use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::TrainHp;

/// Hyperparameter names the trainer understands.
pub const KNOWN_HPS: [&str; 5] = [
    "learning_rate",
    "weight_decay",
    "local_epochs",
    "batch_size",
    "dropout",
];

const INTEGER_HPS: [&str; 2] = ["local_epochs", "batch_size"];

/// How grid points are spaced. For the two log scales and `pow2` the step is
/// a multiplicative factor; for `linear` it is additive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Log10,
    LogE,
    Linear,
    Pow2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpDim {
    pub name: String,
    pub scale: Scale,
    pub low: f64,
    pub high: f64,
    pub step: f64,
}

/// Round to 12 significant digits so that `1e-5 * 10^4` lands on `0.1`.
fn clean(v: f64) -> f64 {
    format!("{v:.11e}").parse().unwrap_or(v)
}

impl HpDim {
    pub fn new(name: &str, scale: Scale, low: f64, high: f64, step: f64) -> Self {
        HpDim {
            name: name.to_owned(),
            scale,
            low,
            high,
            step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = format!("search_space.{}", self.name);
        if ![self.low, self.high, self.step].iter().all(|v| v.is_finite()) {
            return Err(Error::config(field, "low, high and step must be finite"));
        }
        if self.low >= self.high {
            return Err(Error::config(field, "low must be below high"));
        }
        if self.step <= 0.0 {
            return Err(Error::config(field, "step must be positive"));
        }
        match self.scale {
            Scale::Log10 | Scale::LogE | Scale::Pow2 if self.low <= 0.0 => {
                return Err(Error::config(field, "multiplicative scales need low > 0"))
            }
            Scale::Log10 | Scale::LogE | Scale::Pow2 if self.step <= 1.0 => {
                return Err(Error::config(field, "multiplicative step must exceed 1"))
            }
            _ => {}
        }
        if self.scale == Scale::Pow2 {
            let e = self.low.log2();
            let s = self.step.log2();
            if (e - e.round()).abs() > 1e-9 || (s - s.round()).abs() > 1e-9 {
                return Err(Error::config(field, "pow2 needs a power-of-two low and step"));
            }
        }
        if self.name == "dropout" && self.high >= 1.0 {
            return Err(Error::config(field, "dropout must stay below 1"));
        }
        if INTEGER_HPS.contains(&self.name.as_str())
            && self.grid().iter().any(|v| v.fract() != 0.0 || *v < 0.0)
        {
            return Err(Error::config(field, "grid must contain nonnegative integers only"));
        }
        if self.name == "batch_size" && self.low < 1.0 {
            return Err(Error::config(field, "batch size must be at least 1"));
        }
        Ok(())
    }

    /// Low-fidelity grid: starts at `low`, advances by `step` in the dim's
    /// scale, never exceeds `high`.
    pub fn grid(&self) -> Vec<f64> {
        const MAX_POINTS: usize = 100_000;
        let limit = self.high + 1e-9 * self.high.abs().max(1.0);
        let mut out = Vec::new();
        for k in 0..MAX_POINTS {
            let v = match self.scale {
                Scale::Linear => self.low + k as f64 * self.step,
                _ => self.low * self.step.powi(k as i32),
            };
            if v > limit {
                break;
            }
            out.push(clean(v).min(self.high));
        }
        out
    }

    fn coord(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Log10 => v.log10(),
            Scale::LogE => v.ln(),
            Scale::Pow2 => v.log2(),
            Scale::Linear => v,
        }
    }

    /// Nearest grid point in the scale's coordinate, after clamping `x` to
    /// `[low, high]`. Exact ties go to the lower point.
    pub fn snap(&self, x: f64) -> f64 {
        let x = if x.is_nan() { self.low } else { x.clamp(self.low, self.high) };
        let cx = self.coord(x);
        let g = self.grid();
        let mut best = g[0];
        let mut best_d = (self.coord(best) - cx).abs();
        for &v in &g[1..] {
            let d = (self.coord(v) - cx).abs();
            if d < best_d - 1e-12 {
                best = v;
                best_d = d;
            }
        }
        best
    }

    /// Position of `v` on the grid, tolerating round-off.
    pub fn index_of(&self, v: f64) -> Option<usize> {
        let g = self.grid();
        g.iter()
            .position(|&p| (p - v).abs() <= 1e-9 * p.abs().max(1e-12))
    }
}

pub fn grid(dim: &HpDim) -> Vec<f64> {
    dim.grid()
}

pub fn snap(dim: &HpDim, x: f64) -> f64 {
    dim.snap(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<HpDim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<HpDim>) -> Self {
        SearchSpace { dims }
    }

    /// The five local hyperparameters with their low-fidelity ranges and
    /// steps.
    pub fn low_fidelity() -> Self {
        SearchSpace::new(vec![
            HpDim::new("learning_rate", Scale::Log10, 1e-5, 1e-1, 10.0),
            HpDim::new("weight_decay", Scale::LogE, 1e-5, 1e-1, std::f64::consts::E),
            HpDim::new("local_epochs", Scale::Linear, 0.0, 10.0, 1.0),
            HpDim::new("batch_size", Scale::Pow2, 16.0, 256.0, 2.0),
            HpDim::new("dropout", Scale::Linear, 0.1, 0.5, 0.2),
        ])
    }

    /// Learning rate, weight decay and local epochs only.
    pub fn low_fidelity_core() -> Self {
        let mut s = Self::low_fidelity();
        s.dims.truncate(3);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::config("search_space", "declare at least one dimension"));
        }
        for (i, d) in self.dims.iter().enumerate() {
            if !KNOWN_HPS.contains(&d.name.as_str()) {
                return Err(Error::config(
                    format!("search_space.dims[{i}].name"),
                    format!("unknown hyperparameter `{}` (expected one of {KNOWN_HPS:?})", d.name),
                ));
            }
            if self.dims[..i].iter().any(|p| p.name == d.name) {
                return Err(Error::config(
                    format!("search_space.dims[{i}].name"),
                    format!("`{}` declared twice", d.name),
                ));
            }
            d.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self, name: &str) -> Option<&HpDim> {
        self.dims.iter().find(|d| d.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }

    /// Number of distinct configurations on the grid.
    pub fn cardinality(&self) -> u128 {
        self.dims.iter().map(|d| d.grid().len() as u128).product()
    }

    /// True when every dimension's value sits on its grid.
    pub fn contains(&self, cfg: &HpConfig) -> bool {
        self.dims.iter().all(|d| {
            cfg.get(&d.name)
                .is_some_and(|v| d.index_of(v).is_some())
        })
    }

    /// The `index`-th configuration in row-major order over the dims.
    pub fn config_at(&self, mut index: u128) -> HpConfig {
        let mut values = BTreeMap::new();
        for d in self.dims.iter().rev() {
            let g = d.grid();
            let n = g.len() as u128;
            values.insert(d.name.clone(), g[(index % n) as usize]);
            index /= n;
        }
        HpConfig::new(values)
    }
}

/// Stable identity of a configuration: a hash of its sorted `name=value`
/// pairs, so it does not depend on insertion order or run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigId(pub String);

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl ConfigId {
    pub fn of(values: &BTreeMap<String, f64>) -> Self {
        let mut h = Sha256::new();
        for (k, v) in values {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(format!("{v:?}").as_bytes());
            h.update(b"\n");
        }
        let digest = h.finalize();
        ConfigId(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpConfig {
    pub values: BTreeMap<String, f64>,
    pub config_id: ConfigId,
}

impl HpConfig {
    pub fn new(values: BTreeMap<String, f64>) -> Self {
        let config_id = ConfigId::of(&values);
        HpConfig { values, config_id }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Self::new(pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn id(&self) -> &ConfigId {
        &self.config_id
    }

    /// Copy with one value replaced.
    pub fn with(&self, name: &str, value: f64) -> HpConfig {
        let mut values = self.values.clone();
        values.insert(name.to_owned(), value);
        HpConfig::new(values)
    }

    /// Training hyperparameters, taking untuned fields from `defaults`.
    pub fn to_train_hp(&self, defaults: &TrainHp) -> TrainHp {
        TrainHp {
            learning_rate: self.get("learning_rate").unwrap_or(defaults.learning_rate),
            weight_decay: self.get("weight_decay").unwrap_or(defaults.weight_decay),
            local_epochs: self
                .get("local_epochs")
                .map_or(defaults.local_epochs, |v| v.round() as usize),
            batch_size: self
                .get("batch_size")
                .map_or(defaults.batch_size, |v| v.round() as usize),
            dropout: self.get("dropout").unwrap_or(defaults.dropout),
        }
    }
}
