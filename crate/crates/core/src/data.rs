//! Synthetic data, CSV ingestion and non-IID partitioning.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

/// Minimum number of training samples every client must receive.
pub const MIN_TRAIN_SAMPLES: usize = 10;

/// Dirichlet draws attempted before a partition is declared infeasible.
pub const MAX_PARTITION_ATTEMPTS: usize = 100;

/// A row-major block of labelled samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    input_dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

/// Evaluation data used by [`crate::model::evaluate`].
pub type EvalSet = Samples;

impl Samples {
    pub fn new(input_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Data("input_dim must be at least 1".into()));
        }
        if features.len() != input_dim * labels.len() {
            return Err(Error::Data(format!(
                "{} feature values do not form {} rows of width {}",
                features.len(),
                labels.len(),
                input_dim
            )));
        }
        Ok(Samples {
            input_dim,
            features,
            labels,
        })
    }

    pub fn empty(input_dim: usize) -> Self {
        Samples {
            input_dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.input_dim)
            .zip(self.labels.iter().copied())
    }

    /// Gather the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Samples {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Samples {
            input_dim: self.input_dim,
            features,
            labels,
        }
    }

    /// Concatenate blocks that share a feature width.
    pub fn concat<'a>(input_dim: usize, parts: impl IntoIterator<Item = &'a Samples>) -> Samples {
        let mut out = Samples::empty(input_dim);
        for p in parts {
            assert_eq!(p.input_dim, input_dim, "feature width mismatch");
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
        }
        out
    }

    /// Per-class sample counts.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Samples,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(samples: Samples, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Data("a dataset needs at least 2 classes".into()));
        }
        if let Some(&bad) = samples.labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            samples,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples.input_dim
    }

    /// Split off a random held-out block of `n_holdout` rows. Returns
    /// `(remaining, holdout)`.
    pub fn split_holdout(&self, n_holdout: usize, seed: u64) -> Result<(Dataset, Samples)> {
        if n_holdout >= self.len() {
            return Err(Error::Data(format!(
                "cannot hold out {n_holdout} of {} samples",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng_from(seed, &[stream::SPLIT, u64::MAX]));
        let (held, rest) = idx.split_at(n_holdout);
        let mut rest = rest.to_vec();
        rest.sort_unstable();
        let mut held = held.to_vec();
        held.sort_unstable();
        Ok((
            Dataset {
                samples: self.samples.select(&rest),
                num_classes: self.num_classes,
            },
            self.samples.select(&held),
        ))
    }
}

/// One client's data, split into train/validation/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataShard {
    pub client_id: usize,
    pub train: Samples,
    pub val: Samples,
    pub test: Samples,
}

impl DataShard {
    /// Samples allocated to this client across all splits.
    pub fn total_len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn input_dim(&self) -> usize {
        self.train.input_dim
    }

    /// Label histogram over the whole allocation.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut c = self.train.class_counts(num_classes);
        for (a, b) in c.iter_mut().zip(self.val.class_counts(num_classes)) {
            *a += b;
        }
        for (a, b) in c.iter_mut().zip(self.test.class_counts(num_classes)) {
            *a += b;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::config("split", "fractions must be finite and nonnegative"));
        }
        if self.train <= 0.0 {
            return Err(Error::config("split.train", "training fraction must be positive"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "split",
                format!("fractions sum to {sum}, expected 1"),
            ));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` samples. Train and validation are
    /// rounded; test takes the remainder, so every part is within one sample
    /// of its exact share.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let n_train = ((self.train * n as f64).round() as usize).min(n);
        let n_val = ((self.val * n as f64).round() as usize).min(n - n_train);
        (n_train, n_val, n - n_train - n_val)
    }
}

/// Gaussian blobs with one mean per class and unit isotropic noise.
///
/// When `num_classes <= input_dim` the means sit on scaled coordinate axes,
/// so every pair of class means is exactly `class_sep` apart. Otherwise the
/// means are random directions on a sphere of the same radius. Labels are
/// assigned round-robin, so class counts differ by at most one.
pub fn gen_synthetic(
    num_classes: usize,
    input_dim: usize,
    n: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::config("num_classes", "must be at least 2"));
    }
    if input_dim == 0 {
        return Err(Error::config("input_dim", "must be at least 1"));
    }
    if n < num_classes {
        return Err(Error::config(
            "n",
            format!("{n} samples cannot cover {num_classes} classes"),
        ));
    }
    if !(class_sep.is_finite() && class_sep > 0.0) {
        return Err(Error::config("class_sep", "must be a positive real"));
    }

    let mut rng = rng_from(seed, &[stream::DATA]);
    let radius = class_sep / std::f64::consts::SQRT_2;
    let means: Vec<Vec<f64>> = if num_classes <= input_dim {
        (0..num_classes)
            .map(|k| {
                let mut m = vec![0.0; input_dim];
                m[k] = radius;
                m
            })
            .collect()
    } else {
        (0..num_classes)
            .map(|_| {
                let v: Vec<f64> = (0..input_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x * radius / norm).collect()
            })
            .collect()
    };

    let mut features = Vec::with_capacity(n * input_dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % num_classes;
        labels.push(k);
        for &mu in &means[k] {
            features.push(mu + rng.sample::<f64, _>(StandardNormal));
        }
    }
    Dataset::new(Samples::new(input_dim, features, labels)?, num_classes)
}

/// Parse CSV rows of `feature,...,feature,label`. A first row that does not
/// parse as numbers is treated as a header.
pub fn parse_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut input_dim = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("csv: {e}")))?;
        if rec.len() < 2 {
            return Err(Error::Data(format!(
                "csv line {}: need at least one feature and a label",
                line + 1
            )));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().take(rec.len() - 1).map(str::parse::<f64>).collect();
        let label = rec[rec.len() - 1].parse::<usize>();
        let (row, label) = match (parsed, label) {
            (Ok(row), Ok(label)) => (row, label),
            _ if line == 0 => continue,
            _ => {
                return Err(Error::Data(format!(
                    "csv line {}: expected real features and an integer label",
                    line + 1
                )))
            }
        };
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("csv line {}: non-finite feature", line + 1)));
        }
        match input_dim {
            None => input_dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Data(format!(
                    "csv line {}: expected {} features, found {}",
                    line + 1,
                    d,
                    row.len()
                )))
            }
            _ => {}
        }
        features.extend(row);
        labels.push(label);
    }
    let input_dim = input_dim.ok_or_else(|| Error::Data("csv contains no samples".into()))?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(Samples::new(input_dim, features, labels)?, num_classes)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_csv(std::io::BufReader::new(file))
}

/// Partition settings beyond the Dirichlet concentration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub n_clients: usize,
    pub alpha: f64,
    pub split: SplitFractions,
    pub min_train: usize,
}

impl PartitionSpec {
    pub fn new(n_clients: usize, alpha: f64, split: SplitFractions) -> Self {
        PartitionSpec {
            n_clients,
            alpha,
            split,
            min_train: MIN_TRAIN_SAMPLES,
        }
    }
}

/// Dirichlet label partitioning with the default minimum shard size.
pub fn partition_dirichlet(
    ds: &Dataset,
    n_clients: usize,
    alpha: f64,
    split: SplitFractions,
    seed: u64,
) -> Result<Vec<DataShard>> {
    partition(ds, &PartitionSpec::new(n_clients, alpha, split), seed)
}

/// For every class, draw client proportions from `Dirichlet(alpha)` and deal
/// that class's samples out accordingly. Each client's allocation is then
/// shuffled and split into train/validation/test.
pub fn partition(ds: &Dataset, spec: &PartitionSpec, seed: u64) -> Result<Vec<DataShard>> {
    if spec.n_clients == 0 {
        return Err(Error::config("n_clients", "must be at least 1"));
    }
    if !(spec.alpha.is_finite() && spec.alpha > 0.0) {
        return Err(Error::config("alpha", "must be a positive real"));
    }
    spec.split.validate()?;

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &l) in ds.samples.labels.iter().enumerate() {
        by_class[l].push(i);
    }

    let mut rng = rng_from(seed, &[stream::PARTITION]);
    let gamma = Gamma::new(spec.alpha, 1.0)
        .map_err(|e| Error::config("alpha", e.to_string()))?;

    for _attempt in 0..MAX_PARTITION_ATTEMPTS {
        let mut alloc: Vec<Vec<usize>> = vec![Vec::new(); spec.n_clients];
        for members in &by_class {
            if members.is_empty() {
                continue;
            }
            let props = dirichlet_draw(&gamma, spec.n_clients, &mut rng);
            let counts = apportion(&props, members.len());
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            let mut start = 0;
            for (client, &c) in counts.iter().enumerate() {
                alloc[client].extend_from_slice(&shuffled[start..start + c]);
                start += c;
            }
        }
        let feasible = alloc
            .iter()
            .all(|a| spec.split.sizes(a.len()).0 >= spec.min_train);
        if feasible {
            return Ok(alloc
                .into_iter()
                .enumerate()
                .map(|(client_id, mut idx)| {
                    idx.sort_unstable();
                    idx.shuffle(&mut rng_from(seed, &[stream::SPLIT, client_id as u64]));
                    let (n_train, n_val, _) = spec.split.sizes(idx.len());
                    DataShard {
                        client_id,
                        train: ds.samples.select(&idx[..n_train]),
                        val: ds.samples.select(&idx[n_train..n_train + n_val]),
                        test: ds.samples.select(&idx[n_train + n_val..]),
                    }
                })
                .collect());
        }
    }
    Err(Error::Partition(format!(
        "no draw in {MAX_PARTITION_ATTEMPTS} attempts gave every one of {} clients at least {} \
         training samples (alpha = {}, {} samples)",
        spec.n_clients,
        spec.min_train,
        spec.alpha,
        ds.len()
    )))
}

fn dirichlet_draw<R: Rng>(gamma: &Gamma<f64>, k: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return g.into_iter().map(|x| x / sum).collect();
        }
    }
}

/// Largest-remainder rounding of `props * total` to integers summing to
/// `total`. Ties go to the lower index.
fn apportion(props: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Shannon entropy (nats) of a label histogram.
pub fn label_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// Mean per-client label entropy of a partition.
pub fn mean_label_entropy(shards: &[DataShard], num_classes: usize) -> f64 {
    shards
        .iter()
        .map(|s| label_entropy(&s.class_counts(num_classes)))
        .sum::<f64>()
        / shards.len().max(1) as f64
}

/// Total-variation distance between a label histogram and the uniform
/// distribution.
pub fn tv_from_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let u = 1.0 / counts.len() as f64;
    0.5 * counts
        .iter()
        .map(|&c| (c as f64 / total.max(1) as f64 - u).abs())
        .sum::<f64>()
}
