//! Logistic regression and a one-hidden-layer tanh MLP, trained by plain
//! mini-batch SGD with softmax cross-entropy.
//!
//! Parameters live in a flat [`WeightVector`]. Layouts, in order:
//!
//! - logistic: `W (classes x input)`, `b (classes)`
//! - mlp: `W1 (hidden x input)`, `b1 (hidden)`, `W2 (classes x hidden)`, `b2 (classes)`
//!
//! All matrices are row-major.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataShard, EvalSet, Samples};
use crate::error::{DivergenceContext, Error, Result};
use crate::rng::{rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// Dropout used when the search space does not tune it.
    #[serde(default)]
    pub dropout_rate: f64,
}

/// Identifies the architecture a weight vector belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutId(pub String);

impl fmt::Display for LayoutId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub layout_id: LayoutId,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, layout_id: LayoutId) -> Self {
        WeightVector { values, layout_id }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Client-side training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHp {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
}

impl Default for TrainHp {
    fn default() -> Self {
        TrainHp {
            learning_rate: 0.01,
            weight_decay: 1e-4,
            local_epochs: 1,
            batch_size: 32,
            dropout: 0.0,
        }
    }
}

impl TrainHp {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate", "must be a nonnegative real"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be a nonnegative real"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Result of [`ModelSpec::local_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: WeightVector,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Logistic,
            input_dim,
            hidden_dim: 0,
            num_classes,
            dropout_rate: 0.0,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            input_dim,
            hidden_dim,
            num_classes,
            dropout_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("model.input_dim", "must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("model.num_classes", "must be at least 2"));
        }
        match self.kind {
            ModelKind::Mlp if self.hidden_dim == 0 => {
                return Err(Error::config("model.hidden_dim", "an mlp needs hidden_dim >= 1"))
            }
            ModelKind::Logistic if self.hidden_dim != 0 => {
                return Err(Error::config("model.hidden_dim", "must be 0 for logistic"))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("model.dropout_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn layout_id(&self) -> LayoutId {
        LayoutId(format!(
            "{}-{}-{}-{}",
            self.kind, self.input_dim, self.hidden_dim, self.num_classes
        ))
    }

    pub fn param_count(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        match self.kind {
            ModelKind::Logistic => c * d + c,
            ModelKind::Mlp => h * d + h + c * h + c,
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer, biases zero.
    pub fn init_weights(&self, seed: u64) -> Result<WeightVector> {
        self.validate()?;
        let mut rng = rng_from(seed, &[stream::INIT]);
        let mut values = Vec::with_capacity(self.param_count());
        let mut layer = |rows: usize, fan_in: usize, values: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..rows * fan_in).map(|_| rng.random_range(-bound..=bound)));
            values.extend(std::iter::repeat_n(0.0, rows));
        };
        match self.kind {
            ModelKind::Logistic => layer(self.num_classes, self.input_dim, &mut values),
            ModelKind::Mlp => {
                layer(self.hidden_dim, self.input_dim, &mut values);
                layer(self.num_classes, self.hidden_dim, &mut values);
            }
        }
        Ok(WeightVector::new(values, self.layout_id()))
    }

    fn check_weights(&self, w: &WeightVector) -> Result<()> {
        if w.layout_id != self.layout_id() || w.len() != self.param_count() {
            return Err(Error::Data(format!(
                "weights with layout {} do not fit model {}",
                w.layout_id,
                self.layout_id()
            )));
        }
        Ok(())
    }

    fn check_samples(&self, s: &Samples) -> Result<()> {
        if s.input_dim() != self.input_dim {
            return Err(Error::Data(format!(
                "samples have {} features, model expects {}",
                s.input_dim(),
                self.input_dim
            )));
        }
        if let Some(&l) = s.labels().iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::Data(format!(
                "label {l} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Mean cross-entropy and top-1 accuracy. Ties in the argmax go to the
    /// lowest class index. Dropout is never applied here.
    pub fn evaluate(&self, w: &WeightVector, set: &EvalSet) -> Result<Evaluation> {
        if set.is_empty() {
            return Err(Error::Data("cannot evaluate on an empty set".into()));
        }
        self.check_weights(w)?;
        self.check_samples(set)?;
        let mut scratch = Scratch::new(self);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (x, y) in set.iter() {
            let logits = self.forward(&w.values, x, None::<(&mut rand_chacha::ChaCha8Rng, f64)>, &mut scratch);
            loss += cross_entropy(logits, y);
            if argmax(logits) == y {
                correct += 1;
            }
        }
        Ok(Evaluation {
            loss: loss / set.len() as f64,
            accuracy: correct as f64 / set.len() as f64,
        })
    }

    /// Mean loss and its gradient over `batch`, without dropout.
    pub fn loss_and_grad(&self, w: &[f64], batch: &Samples) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let idx: Vec<usize> = (0..batch.len()).collect();
        let mut scratch = Scratch::new(self);
        let loss = self.accumulate(w, batch, &idx, None::<&mut rand_chacha::ChaCha8Rng>, 0.0, &mut grad, &mut scratch);
        (loss, grad)
    }

    /// Run `hp.local_epochs` epochs of mini-batch SGD on the shard's
    /// training split, starting from `w`.
    ///
    /// Each epoch reshuffles with a seed derived from `rng_seed` and the
    /// epoch index. The returned losses are measured after training, with
    /// dropout off. A shard without a validation split reports its training
    /// loss as the validation loss.
    pub fn local_train(
        &self,
        w: &WeightVector,
        hp: &TrainHp,
        shard: &DataShard,
        rng_seed: u64,
    ) -> Result<TrainOutcome> {
        hp.validate()?;
        self.check_weights(w)?;
        if shard.train.is_empty() {
            return Err(Error::Data(format!(
                "client {} has no training samples",
                shard.client_id
            )));
        }
        self.check_samples(&shard.train)?;

        let diverged = |stage: &str| {
            Error::Divergence(DivergenceContext {
                stage: stage.to_owned(),
                client_id: Some(shard.client_id),
                ..Default::default()
            })
        };

        let mut values = w.values.clone();
        let n = shard.train.len();
        let batch = hp.batch_size.min(n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad = vec![0.0; values.len()];
        let mut scratch = Scratch::new(self);
        for epoch in 0..hp.local_epochs {
            order.shuffle(&mut rng_from(rng_seed, &[stream::SHUFFLE, epoch as u64]));
            let mut dropout_rng = rng_from(rng_seed, &[stream::DROPOUT, epoch as u64]);
            for chunk in order.chunks(batch) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let loss = self.accumulate(
                    &values,
                    &shard.train,
                    chunk,
                    Some(&mut dropout_rng),
                    hp.dropout,
                    &mut grad,
                    &mut scratch,
                );
                if !loss.is_finite() {
                    return Err(diverged("local training"));
                }
                sgd_step(&mut values, &grad, hp.learning_rate, hp.weight_decay);
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(diverged("local training"));
            }
        }

        let weights = WeightVector::new(values, w.layout_id.clone());
        let train_loss = self.evaluate(&weights, &shard.train)?.loss;
        let val_loss = if shard.val.is_empty() {
            train_loss
        } else {
            self.evaluate(&weights, &shard.val)?.loss
        };
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(diverged("loss evaluation"));
        }
        Ok(TrainOutcome {
            weights,
            train_loss,
            val_loss,
        })
    }

    fn forward<'s, R: Rng>(
        &self,
        w: &[f64],
        x: &[f64],
        dropout: Option<(&mut R, f64)>,
        s: &'s mut Scratch,
    ) -> &'s [f64] {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        match self.kind {
            ModelKind::Logistic => {
                affine(&w[..c * d], &w[c * d..c * d + c], x, &mut s.logits);
            }
            ModelKind::Mlp => {
                let (w1, rest) = w.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                affine(w1, b1, x, &mut s.hidden);
                for v in s.hidden.iter_mut() {
                    *v = v.tanh();
                }
                match dropout {
                    Some((rng, p)) if p > 0.0 => {
                        let keep = 1.0 - p;
                        for m in s.mask.iter_mut() {
                            *m = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                        }
                    }
                    _ => s.mask.iter_mut().for_each(|m| *m = 1.0),
                }
                for ((a, t), m) in s.active.iter_mut().zip(&s.hidden).zip(&s.mask) {
                    *a = t * m;
                }
                affine(w2, b2, &s.active, &mut s.logits);
            }
        }
        &s.logits
    }

    /// Add the mean gradient over `rows` into `grad`; returns the mean loss.
    #[allow(clippy::too_many_arguments)]
    fn accumulate<R: Rng>(
        &self,
        w: &[f64],
        data: &Samples,
        rows: &[usize],
        mut rng: Option<&mut R>,
        dropout: f64,
        grad: &mut [f64],
        s: &mut Scratch,
    ) -> f64 {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &i in rows {
            let x = data.row(i);
            let y = data.label(i);
            let drop = rng.as_deref_mut().map(|r| (r, dropout));
            self.forward(w, x, drop, s);
            loss += cross_entropy(&s.logits, y);
            softmax_into(&s.logits, &mut s.dz);
            s.dz[y] -= 1.0;
            match self.kind {
                ModelKind::Logistic => {
                    let (gw, gb) = grad.split_at_mut(c * d);
                    outer_add(&s.dz, x, scale, gw, &mut gb[..c]);
                }
                ModelKind::Mlp => {
                    let w2 = &w[h * d + h..h * d + h + c * h];
                    let (g1, rest) = grad.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (g2, gb2) = rest.split_at_mut(c * h);
                    outer_add(&s.dz, &s.active, scale, g2, gb2);
                    for j in 0..h {
                        let back: f64 = (0..c).map(|k| w2[k * h + j] * s.dz[k]).sum();
                        let t = s.hidden[j];
                        s.da[j] = back * s.mask[j] * (1.0 - t * t);
                    }
                    outer_add(&s.da, x, scale, g1, gb1);
                }
            }
        }
        loss * scale
    }
}

struct Scratch {
    hidden: Vec<f64>,
    mask: Vec<f64>,
    active: Vec<f64>,
    logits: Vec<f64>,
    dz: Vec<f64>,
    da: Vec<f64>,
}

impl Scratch {
    fn new(spec: &ModelSpec) -> Self {
        Scratch {
            hidden: vec![0.0; spec.hidden_dim],
            mask: vec![1.0; spec.hidden_dim],
            active: vec![0.0; spec.hidden_dim],
            logits: vec![0.0; spec.num_classes],
            dz: vec![0.0; spec.num_classes],
            da: vec![0.0; spec.hidden_dim],
        }
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r]
            + w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum::<f64>();
    }
}

fn outer_add(delta: &[f64], x: &[f64], scale: f64, gw: &mut [f64], gb: &mut [f64]) {
    let cols = x.len();
    for (r, &dr) in delta.iter().enumerate() {
        let s = dr * scale;
        for (g, xi) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *g += s * xi;
        }
        gb[r] += s;
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_into(z: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(z);
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - lse).exp();
    }
}

/// Softmax cross-entropy of `logits` against class `y`.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    log_sum_exp(logits) - logits[y]
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `w <- w - lr * (grad + weight_decay * w)`
pub fn sgd_step(w: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
    for (wi, gi) in w.iter_mut().zip(grad) {
        *wi -= lr * (gi + weight_decay * *wi);
    }
}

/// `f(w) = w^2` on a single scalar, for checking the update rule against a
/// gradient known in closed form.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticProbe;

impl QuadraticProbe {
    pub fn loss(&self, w: f64) -> f64 {
        w * w
    }

    pub fn grad(&self, w: f64) -> f64 {
        2.0 * w
    }

    /// One SGD step with the same rule local training uses.
    pub fn step(&self, w: f64, lr: f64, weight_decay: f64) -> f64 {
        let mut v = [w];
        sgd_step(&mut v, &[self.grad(w)], lr, weight_decay);
        v[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, partition_dirichlet, SplitFractions};

    fn small_shard(seed: u64) -> DataShard {
        let ds = gen_synthetic(2, 4, 60, 3.0, seed).unwrap();
        partition_dirichlet(&ds, 1, 1.0, SplitFractions::default(), seed)
            .unwrap()
            .remove(0)
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = ModelSpec::logistic(4, 2);
        let a = spec.init_weights(7).unwrap();
        assert_eq!(a, spec.init_weights(7).unwrap());
        let b = spec.init_weights(8).unwrap();
        assert!(a.values.iter().zip(&b.values).any(|(x, y)| x != y));
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let spec = ModelSpec::mlp(5, 8, 3);
        let w = spec.init_weights(1).unwrap();
        assert!(w.is_finite());
        let (w1, rest) = w.values.split_at(8 * 5);
        let (b1, rest) = rest.split_at(8);
        let (w2, b2) = rest.split_at(3 * 8);
        assert!(w1.iter().all(|x| x.abs() <= 1.0 / 5f64.sqrt()));
        assert!(w2.iter().all(|x| x.abs() <= 1.0 / 8f64.sqrt()));
        assert!(b1.iter().chain(b2).all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        assert!(ModelSpec::logistic(0, 2).init_weights(0).unwrap_err().is_config());
        assert!(ModelSpec::logistic(3, 1).init_weights(0).unwrap_err().is_config());
        assert!(ModelSpec::mlp(3, 0, 2).init_weights(0).unwrap_err().is_config());
        let mut s = ModelSpec::mlp(3, 2, 2);
        s.dropout_rate = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn quadratic_probe_step() {
        let w = QuadraticProbe.step(1.0, 0.1, 0.0);
        assert!((w - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let spec = ModelSpec::mlp(4, 6, 2);
        let w = spec.init_weights(3).unwrap();
        let hp = TrainHp {
            learning_rate: 0.0,
            weight_decay: 0.1,
            local_epochs: 3,
            batch_size: 8,
            dropout: 0.3,
        };
        let out = spec.local_train(&w, &hp, &small_shard(1), 5).unwrap();
        assert_eq!(out.weights, w);
    }

    #[test]
    fn zero_epochs_reports_pre_training_losses() {
        let spec = ModelSpec::logistic(4, 2);
        let w = spec.init_weights(3).unwrap();
        let shard = small_shard(2);
        let hp = TrainHp {
            local_epochs: 0,
            ..TrainHp::default()
        };
        let out = spec.local_train(&w, &hp, &shard, 5).unwrap();
        assert_eq!(out.weights, w);
        assert_eq!(out.train_loss, spec.evaluate(&w, &shard.train).unwrap().loss);
        assert_eq!(out.val_loss, spec.evaluate(&w, &shard.val).unwrap().loss);
    }

    #[test]
    fn training_reduces_loss_on_separable_data() {
        let spec = ModelSpec::mlp(4, 8, 2);
        let w = spec.init_weights(3).unwrap();
        let shard = small_shard(4);
        let before = spec.evaluate(&w, &shard.train).unwrap().loss;
        let hp = TrainHp {
            learning_rate: 0.1,
            local_epochs: 5,
            batch_size: 8,
            ..TrainHp::default()
        };
        let out = spec.local_train(&w, &hp, &shard, 1).unwrap();
        assert!(out.train_loss < before);
    }

    #[test]
    fn empty_shard_is_a_data_error() {
        let spec = ModelSpec::logistic(4, 2);
        let w = spec.init_weights(0).unwrap();
        let mut shard = small_shard(1);
        shard.train = Samples::empty(4);
        assert!(matches!(
            spec.local_train(&w, &TrainHp::default(), &shard, 0),
            Err(Error::Data(_))
        ));
        assert!(matches!(spec.evaluate(&w, &Samples::empty(4)), Err(Error::Data(_))));
    }

    #[test]
    fn exploding_learning_rate_is_reported_as_divergence() {
        let spec = ModelSpec::logistic(1, 2);
        let w = WeightVector::new(vec![1.0, -1.0, 0.0, 0.0], spec.layout_id());
        let train = Samples::new(1, vec![1e150, -1e150], vec![0, 1]).unwrap();
        let shard = DataShard {
            client_id: 4,
            train: train.clone(),
            val: train,
            test: Samples::empty(1),
        };
        let hp = TrainHp {
            learning_rate: 1e200,
            local_epochs: 3,
            ..TrainHp::default()
        };
        match spec.local_train(&w, &hp, &shard, 0) {
            Err(Error::Divergence(ctx)) => assert_eq!(ctx.client_id, Some(4)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let a = ModelSpec::logistic(4, 2);
        let b = ModelSpec::mlp(4, 3, 2);
        let w = b.init_weights(0).unwrap();
        assert!(a.evaluate(&w, &small_shard(1).train).is_err());
    }

    #[test]
    fn uniform_logits_tie_break_to_class_zero() {
        let spec = ModelSpec::logistic(2, 2);
        let w = WeightVector::new(vec![0.0; 6], spec.layout_id());
        let set = Samples::new(2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 2.0, 3.0, 3.0], vec![0, 1, 0, 1]).unwrap();
        let e = spec.evaluate(&w, &set).unwrap();
        assert_eq!(e.accuracy, 0.5);
        assert!((e.loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn oracle_weights_classify_separable_set() {
        let spec = ModelSpec::logistic(1, 2);
        // class 0 for x < 0, class 1 for x > 0
        let w = WeightVector::new(vec![-5.0, 5.0, 0.0, 0.0], spec.layout_id());
        let set = Samples::new(1, vec![-2.0, -1.0, 1.0, 2.0], vec![0, 0, 1, 1]).unwrap();
        assert_eq!(spec.evaluate(&w, &set).unwrap().accuracy, 1.0);
    }

    #[test]
    fn cross_entropy_is_stable_on_extreme_logits() {
        let l = cross_entropy(&[1000.0, -1000.0], 1);
        assert!((l - 2000.0).abs() < 1e-9);
        assert_eq!(cross_entropy(&[1000.0, -1000.0], 0), 0.0);
    }
}
