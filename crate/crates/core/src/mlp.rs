//! Feed-forward classifier: ReLU hidden layers, softmax output over five labels.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{encode, FeatureScheme, FeatureVector};
use crate::protocol::{derive_seed, DatasetRecord, Label};
use crate::textio::{fmt17, parse_err, parse_floats};

pub const CLASSES: [Label; 5] = [Label::Ms2, Label::Ms3, Label::Ms4, Label::Ste, Label::Uns];

/// Output index of a label; `SEP` shares the `UNS` output.
pub fn class_index(label: Label) -> Option<usize> {
    match label {
        Label::Ms2 => Some(0),
        Label::Ms3 => Some(1),
        Label::Ms4 => Some(2),
        Label::Ste => Some(3),
        Label::Uns | Label::Sep => Some(4),
        Label::Dropped => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub scheme: FeatureScheme,
    pub layer_sizes: Vec<usize>,
    /// Per layer, row-major `out × in`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpModel {
    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    fn check(&self) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes[0] != self.scheme.len() || *sizes.last().unwrap() != CLASSES.len() {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?} for {}", self.scheme)));
        }
        if self.weights.len() != sizes.len() - 1 || self.biases.len() != sizes.len() - 1 {
            return Err(Error::ShapeMismatch {
                expected: sizes.len() - 1,
                found: self.weights.len(),
            });
        }
        for (l, w) in sizes.windows(2).enumerate() {
            if self.weights[l].len() != w[0] * w[1] {
                return Err(Error::ShapeMismatch {
                    expected: w[0] * w[1],
                    found: self.weights[l].len(),
                });
            }
            if self.biases[l].len() != w[1] {
                return Err(Error::ShapeMismatch {
                    expected: w[1],
                    found: self.biases[l].len(),
                });
            }
        }
        Ok(())
    }
}

/// Uniform weights in `±1/sqrt(fan_in)`, zero biases.
pub fn init_model<R: Rng + ?Sized>(scheme: FeatureScheme, hidden: &[usize], rng: &mut R) -> MlpModel {
    assert!(!hidden.is_empty(), "at least one hidden layer");
    let mut layer_sizes = vec![scheme.len()];
    layer_sizes.extend_from_slice(hidden);
    layer_sizes.push(CLASSES.len());
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in layer_sizes.windows(2) {
        let bound = 1.0 / (w[0] as f64).sqrt();
        weights.push((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect());
        biases.push(vec![0.0; w[1]]);
    }
    MlpModel {
        scheme,
        layer_sizes,
        weights,
        biases,
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Activations of every layer; the last entry holds the logits.
fn activations(model: &MlpModel, input: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![input.to_vec()];
    let last = model.layers() - 1;
    for l in 0..model.layers() {
        let (n_in, n_out) = (model.layer_sizes[l], model.layer_sizes[l + 1]);
        let x = &acts[l];
        let w = &model.weights[l];
        let mut z = model.biases[l].clone();
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            z[o] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        if l < last {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        acts.push(z);
    }
    acts
}

pub fn logits(model: &MlpModel, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != model.layer_sizes[0] {
        return Err(Error::ShapeMismatch {
            expected: model.layer_sizes[0],
            found: input.len(),
        });
    }
    Ok(activations(model, input).pop().expect("output layer"))
}

/// Class probabilities in the order of [`CLASSES`].
pub fn forward(model: &MlpModel, input: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&logits(model, input)?))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Checks the scheme and returns the probability vector.
pub fn predict(model: &MlpModel, features: &FeatureVector) -> Result<Vec<f64>> {
    if features.scheme != model.scheme {
        return Err(Error::SchemeMismatch {
            expected: model.scheme.name().into(),
            found: features.scheme.name().into(),
        });
    }
    forward(model, &features.values)
}

pub fn predict_label(model: &MlpModel, features: &FeatureVector) -> Result<Label> {
    Ok(CLASSES[argmax(&predict(model, features)?)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub class: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Stable split from the record seed: fractions `1 − 2f`, `f`, `f`.
pub fn split_of(seed: u64, validation_fraction: f64) -> Split {
    let u = (derive_seed(seed, 0x5eed_5b17) >> 11) as f64 / (1u64 << 53) as f64;
    if u < 1.0 - 2.0 * validation_fraction {
        Split::Train
    } else if u < 1.0 - validation_fraction {
        Split::Validation
    } else {
        Split::Test
    }
}

/// Encodes every record under `scheme`; records the encoder rejects are
/// skipped and counted.
pub fn build_samples(records: &[DatasetRecord], scheme: FeatureScheme) -> (Vec<Sample>, usize) {
    let mut skipped = 0;
    let samples = records
        .iter()
        .filter_map(|r| {
            let class = class_index(r.label)?;
            match r.state().and_then(|rho| encode(&rho, scheme)) {
                Ok(f) => Some(Sample {
                    features: f.values,
                    class,
                    seed: r.seed,
                }),
                Err(_) => {
                    skipped += 1;
                    None
                }
            }
        })
        .collect();
    (samples, skipped)
}

pub fn partition(samples: &[Sample], validation_fraction: f64) -> (Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for s in samples {
        match split_of(s.seed, validation_fraction) {
            Split::Train => tr.push(s.clone()),
            Split::Validation => va.push(s.clone()),
            Split::Test => te.push(s.clone()),
        }
    }
    (tr, va, te)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    pub hidden: Vec<usize>,
    /// Weight each sample by the inverse frequency of its class.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 1,
            validation_fraction: 0.1,
            early_stop_patience: 30,
            hidden: vec![128, 64],
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 || self.hidden.is_empty() {
            return Err(Error::Config("epochs, batch size, patience and hidden sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("learning rate must be positive and momentum in [0, 1)".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::Config("validation fraction must lie in (0, 0.5]".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Weighted mean cross-entropy over the training set, averaged over the epoch's batches.
    pub loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub best_epoch: usize,
    pub validation_accuracy: f64,
    pub log: Vec<EpochLog>,
}

fn class_weights(samples: &[Sample], enabled: bool) -> [f64; 5] {
    let mut counts = [0usize; 5];
    for s in samples {
        counts[s.class] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let mut w = [1.0; 5];
    if enabled {
        for k in 0..5 {
            if counts[k] > 0 {
                w[k] = samples.len() as f64 / (present * counts[k] as f64);
            }
        }
    }
    w
}

/// Accumulates the gradient of `Σ weight·CE` over `batch` into `grads` and
/// returns the weighted loss sum.
fn backprop(model: &MlpModel, batch: &[(&[f64], usize, f64)], gw: &mut [Vec<f64>], gb: &mut [Vec<f64>]) -> f64 {
    let mut loss = 0.0;
    for &(x, class, weight) in batch {
        let acts = activations(model, x);
        let probs = softmax(acts.last().unwrap());
        loss += -weight * probs[class].max(1e-300).ln();
        let mut delta: Vec<f64> = probs;
        delta[class] -= 1.0;
        delta.iter_mut().for_each(|d| *d *= weight);
        for l in (0..model.layers()).rev() {
            let n_in = model.layer_sizes[l];
            let input = &acts[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                gb[l][o] += d;
                let row = &mut gw[l][o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let w = &model.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    loss
}

fn zero_like(model: &MlpModel) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
        model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
    )
}

pub fn accuracy(model: &MlpModel, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| argmax(&activations(model, &s.features).pop().unwrap()) == s.class)
        .count();
    hits as f64 / samples.len() as f64
}

/// Splits `samples` by seed, trains on the training part and keeps the model
/// with the best validation accuracy.
pub fn train(samples: &[Sample], scheme: FeatureScheme, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (tr, va, _) = partition(samples, cfg.validation_fraction);
    train_on(&tr, &va, scheme, cfg)
}

/// Mini-batch gradient descent with momentum on `train_set`, model selection on `val_set`.
pub fn train_on(train_set: &[Sample], val_set: &[Sample], scheme: FeatureScheme, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::DegenerateDataset("empty training set".into()));
    }
    if let Some(s) = train_set.iter().find(|s| s.features.len() != scheme.len()) {
        return Err(Error::ShapeMismatch {
            expected: scheme.len(),
            found: s.features.len(),
        });
    }
    let first = train_set[0].class;
    if train_set.iter().all(|s| s.class == first) {
        return Err(Error::DegenerateDataset(format!(
            "all training samples carry label {}",
            CLASSES[first]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(scheme, &cfg.hidden, &mut rng);
    let weights = class_weights(train_set, cfg.class_weighting);
    let (mut vw, mut vb) = zero_like(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let val_ref = if val_set.is_empty() { train_set } else { val_set };
    let mut best = (accuracy(&model, val_ref), 0usize, model.clone());
    let mut log = Vec::new();
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize, f64)> = chunk
                .iter()
                .map(|&i| {
                    let s = &train_set[i];
                    (s.features.as_slice(), s.class, weights[s.class])
                })
                .collect();
            let wsum: f64 = batch.iter().map(|b| b.2).sum();
            let (mut gw, mut gb) = zero_like(&model);
            epoch_loss += backprop(&model, &batch, &mut gw, &mut gb);
            epoch_weight += wsum;
            let scale = cfg.learning_rate / wsum;
            for l in 0..model.layers() {
                for (p, (v, g)) in model.weights[l].iter_mut().zip(vw[l].iter_mut().zip(&gw[l])) {
                    *v = cfg.momentum * *v - scale * g;
                    *p += *v;
                }
                for (p, (v, g)) in model.biases[l].iter_mut().zip(vb[l].iter_mut().zip(&gb[l])) {
                    *v = cfg.momentum * *v - scale * g;
                    *p += *v;
                }
            }
        }
        let val_acc = accuracy(&model, val_ref);
        log.push(EpochLog {
            epoch,
            loss: epoch_loss / epoch_weight,
            validation_accuracy: val_acc,
        });
        if val_acc > best.0 {
            best = (val_acc, epoch, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        best_epoch: best.1,
        validation_accuracy: best.0,
        log,
    })
}

/// Unweighted mean cross-entropy.
pub fn mean_loss(model: &MlpModel, batch: &[Sample]) -> f64 {
    batch
        .iter()
        .map(|s| -softmax(&activations(model, &s.features).pop().unwrap())[s.class].max(1e-300).ln())
        .sum::<f64>()
        / batch.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative: f64,
    pub max_absolute: f64,
    pub sum_absolute: f64,
}

/// Analytic gradient of the mean loss against central differences with step `h`.
pub fn gradient_check_with_step(model: &MlpModel, batch: &[Sample], h: f64) -> GradientCheck {
    let (mut gw, mut gb) = zero_like(model);
    let refs: Vec<(&[f64], usize, f64)> = batch.iter().map(|s| (s.features.as_slice(), s.class, 1.0)).collect();
    backprop(model, &refs, &mut gw, &mut gb);
    let n = batch.len() as f64;
    let mut probe = model.clone();
    let mut out = GradientCheck {
        max_relative: 0.0,
        max_absolute: 0.0,
        sum_absolute: 0.0,
    };
    let mut compare = |analytic: f64, numeric: f64| {
        let err = (analytic - numeric).abs();
        out.max_absolute = out.max_absolute.max(err);
        out.sum_absolute += err;
        out.max_relative = out.max_relative.max(err / (analytic.abs() + numeric.abs()).max(1e-6));
    };
    for l in 0..model.layers() {
        for k in 0..model.weights[l].len() {
            let orig = probe.weights[l][k];
            probe.weights[l][k] = orig + h;
            let up = mean_loss(&probe, batch);
            probe.weights[l][k] = orig - h;
            let down = mean_loss(&probe, batch);
            probe.weights[l][k] = orig;
            compare(gw[l][k] / n, (up - down) / (2.0 * h));
        }
        for k in 0..model.biases[l].len() {
            let orig = probe.biases[l][k];
            probe.biases[l][k] = orig + h;
            let up = mean_loss(&probe, batch);
            probe.biases[l][k] = orig - h;
            let down = mean_loss(&probe, batch);
            probe.biases[l][k] = orig;
            compare(gb[l][k] / n, (up - down) / (2.0 * h));
        }
    }
    out
}

/// Max relative error between backpropagation and central differences (step 1e-5).
pub fn gradient_check(model: &MlpModel, batch: &[Sample]) -> f64 {
    gradient_check_with_step(model, batch, 1e-5).max_relative
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_label_accuracy: BTreeMap<Label, f64>,
    /// `confusion[true][predicted]` in the order of [`CLASSES`].
    pub confusion: [[usize; 5]; 5],
    pub total: usize,
}

impl EvalReport {
    pub fn support(&self, class: usize) -> usize {
        self.confusion[class].iter().sum()
    }

    pub fn render(&self) -> String {
        let mut s = format!("overall accuracy {:.4} over {} samples\n", self.overall_accuracy, self.total);
        for (label, acc) in &self.per_label_accuracy {
            s.push_str(&format!("  {label:<4} {acc:.4}\n"));
        }
        s.push_str("confusion (rows true, columns predicted):\n      ");
        for l in CLASSES {
            s.push_str(&format!("{:>6}", l.token()));
        }
        s.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            s.push_str(&format!("{:>6}", CLASSES[i].token()));
            for c in row {
                s.push_str(&format!("{c:>6}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn evaluate(model: &MlpModel, samples: &[Sample]) -> EvalReport {
    let mut confusion = [[0usize; 5]; 5];
    for s in samples {
        let pred = argmax(&activations(model, &s.features).pop().unwrap());
        confusion[s.class][pred] += 1;
    }
    let total = samples.len();
    let diag: usize = (0..5).map(|k| confusion[k][k]).sum();
    let per_label_accuracy = (0..5)
        .filter_map(|k| {
            let support: usize = confusion[k].iter().sum();
            (support > 0).then(|| (CLASSES[k], confusion[k][k] as f64 / support as f64))
        })
        .collect();
    EvalReport {
        overall_accuracy: if total == 0 { 0.0 } else { diag as f64 / total as f64 },
        per_label_accuracy,
        confusion,
        total,
    }
}

const MODEL_HEADER: &str = "#steerhier-mlp v1 scheme=";

pub fn write_model<W: Write>(mut out: W, model: &MlpModel) -> Result<()> {
    writeln!(out, "{MODEL_HEADER}{}", model.scheme.name())?;
    let sizes: Vec<String> = model.layer_sizes.iter().map(|s| s.to_string()).collect();
    writeln!(out, "{}", sizes.join(" "))?;
    for (l, w) in model.weights.iter().enumerate() {
        let n_in = model.layer_sizes[l];
        for row in w.chunks(n_in) {
            let vals: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
            writeln!(out, "{}", vals.join(" "))?;
        }
    }
    for b in &model.biases {
        let vals: Vec<String> = b.iter().map(|v| fmt17(*v)).collect();
        writeln!(out, "{}", vals.join(" "))?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(input: R, path: &Path) -> Result<MlpModel> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))??;
    let scheme: FeatureScheme = header
        .strip_prefix(MODEL_HEADER)
        .ok_or_else(|| Error::Version(format!("{}: header `{header}`", path.display())))?
        .parse()?;
    let sizes_line = lines.next().ok_or_else(|| parse_err(path, 2, "missing layer sizes"))??;
    let layer_sizes = sizes_line
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(path, 2, format!("bad layer size `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    if layer_sizes.len() < 2 {
        return Err(parse_err(path, 2, "need at least two layer sizes"));
    }
    let mut lineno = 2;
    let mut next_row = |expect: usize| -> Result<Vec<f64>> {
        lineno += 1;
        let line = lines.next().ok_or_else(|| parse_err(path, lineno, "unexpected end of file"))??;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != expect {
            return Err(parse_err(path, lineno, format!("expected {expect} values, found {}", fields.len())));
        }
        parse_floats(path, lineno, &fields)
    };
    let mut weights = Vec::new();
    for w in layer_sizes.windows(2) {
        let mut m = Vec::with_capacity(w[0] * w[1]);
        for _ in 0..w[1] {
            m.extend(next_row(w[0])?);
        }
        weights.push(m);
    }
    let mut biases = Vec::new();
    for w in layer_sizes.windows(2) {
        biases.push(next_row(w[1])?);
    }
    let model = MlpModel {
        scheme,
        layer_sizes,
        weights,
        biases,
    };
    model.check()?;
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(&mut f, model)?;
    f.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let f = std::fs::File::open(path)?;
    read_model(std::io::BufReader::new(f), path)
}
