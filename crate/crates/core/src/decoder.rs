//! Recommender-side decoding: one multiclass classifier per category maps a
//! perturbed report back to a class label.
//!
//! The classifier is a small fully connected network (two rectified-linear
//! hidden layers with dropout, softmax output) trained with mini-batch Adam
//! on categorical cross-entropy. Everything runs in `f64` on one thread so a
//! seed fully determines the trained weights.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bloom::BitVector;
use crate::error::{Error, Result};
use crate::profile::{Profile, Taxonomy};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_size: usize,
    pub hidden1_size: usize,
    pub hidden2_size: usize,
    pub output_size: usize,
    /// Dropout after the first and second hidden layer.
    pub dropout_rates: [f64; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl MlpConfig {
    /// Hidden widths 60/50, 25 epochs, batch 70, dropout 0.2, Adam at 1e-3.
    pub fn new(input_size: usize, output_size: usize, seed: u64) -> Self {
        MlpConfig {
            input_size,
            hidden1_size: 60,
            hidden2_size: 50,
            output_size,
            dropout_rates: [0.2, 0.2],
            epochs: 25,
            batch_size: 70,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [self.input_size, self.hidden1_size, self.hidden2_size, self.output_size];
        if sizes.contains(&0) {
            return Err(Error::param("all layer sizes must be positive"));
        }
        if self.output_size < 2 {
            return Err(Error::param("a classifier needs at least 2 outputs"));
        }
        if self.dropout_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::param("dropout rates must be in [0,1)"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("epochs and batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::param("learning rate must be positive"));
        }
        Ok(())
    }

    fn dims(&self) -> [usize; 4] {
        [self.input_size, self.hidden1_size, self.hidden2_size, self.output_size]
    }
}

/// Dense layer, weights stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
struct Dense {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn glorot<R: Rng>(cols: usize, rows: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Dense {
            rows,
            cols,
            w: (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect(),
            b: vec![0.0; rows],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            *o = self.b[r] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Anything that maps a report to a probability vector over one category's classes.
pub trait Decoder {
    fn input_size(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn predict_proba(&self, input: &BitVector) -> Result<Vec<f64>>;

    fn predict(&self, input: &BitVector) -> Result<(usize, Vec<f64>)> {
        let probs = self.predict_proba(input)?;
        Ok((argmax(&probs), probs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    layers: Vec<Dense>,
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            w: model.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: model.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    fn reset(&mut self) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|g| g.fill(0.0));
    }

    /// Flattened in the order of [`MlpModel::param`].
    pub fn flat(&self) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Per-sample activations kept for backpropagation.
struct Trace {
    // activations[0] is the input; activations[l + 1] is layer l's output after
    // activation and dropout
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
}

impl Trace {
    fn new(dims: &[usize]) -> Self {
        Trace {
            activations: dims.iter().map(|&d| vec![0.0; d]).collect(),
            pre: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            masks: dims[1..dims.len() - 1].iter().map(|&d| vec![1.0; d]).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Mean cross-entropy on the full training set after each epoch, dropout off.
    pub epoch_losses: Vec<f64>,
    pub warnings: Vec<String>,
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases drawn from the config seed.
    pub fn init(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::substream(config.seed, &[rng::tag_str("mlp-init")]);
        let dims = config.dims();
        let layers = dims.windows(2).map(|d| Dense::glorot(d[0], d[1], &mut r)).collect();
        Ok(MlpModel { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if idx < l.w.len() {
                return (li, true, idx);
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return (li, false, idx);
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter `idx` in layer order, weights before biases within a layer.
    pub fn param(&self, idx: usize) -> f64 {
        let (l, is_w, i) = self.locate(idx);
        if is_w {
            self.layers[l].w[i]
        } else {
            self.layers[l].b[i]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (l, is_w, i) = self.locate(idx);
        if is_w {
            self.layers[l].w[i] = value;
        } else {
            self.layers[l].b[i] = value;
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.config.input_size {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_size,
                actual: len,
            });
        }
        Ok(())
    }

    /// Forward pass; with `rng` set, dropout masks are sampled (training mode).
    fn forward<R: Rng>(&self, trace: &mut Trace, mut rng: Option<&mut R>) {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = trace.activations.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            layer.forward(input, &mut trace.pre[l]);
            if l == last {
                out.copy_from_slice(&trace.pre[l]);
                softmax_in_place(out);
                continue;
            }
            let rate = self.config.dropout_rates[l];
            let mask = &mut trace.masks[l];
            match rng.as_deref_mut() {
                Some(r) if rate > 0.0 => {
                    let scale = 1.0 / (1.0 - rate);
                    for m in mask.iter_mut() {
                        *m = if r.gen::<f64>() < rate { 0.0 } else { scale };
                    }
                }
                _ => mask.fill(1.0),
            }
            for ((o, z), m) in out.iter_mut().zip(&trace.pre[l]).zip(mask.iter()) {
                *o = z.max(0.0) * m;
            }
        }
    }

    /// Adds this sample's gradient to `grads`; returns its loss.
    fn backward(&self, trace: &Trace, label: usize, grads: &mut Gradients, scratch: &mut [Vec<f64>]) -> f64 {
        let last = self.layers.len() - 1;
        let probs = &trace.activations[last + 1];
        let loss = -probs[label].max(1e-300).ln();
        // delta for the pre-activation of the current layer
        let delta = &mut scratch[last];
        delta.copy_from_slice(probs);
        delta[label] -= 1.0;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let input = &trace.activations[l];
            {
                let delta = &scratch[l];
                let gw = &mut grads.w[l];
                for (r, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[r * layer.cols..(r + 1) * layer.cols];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                for (g, d) in grads.b[l].iter_mut().zip(delta) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let (lower, upper) = scratch.split_at_mut(l);
            let delta = &upper[0];
            let prev = &mut lower[l - 1];
            prev.fill(0.0);
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            let mask = &trace.masks[l - 1];
            let pre = &trace.pre[l - 1];
            for ((p, m), z) in prev.iter_mut().zip(mask).zip(pre) {
                if *z <= 0.0 {
                    *p = 0.0;
                } else {
                    *p *= m;
                }
            }
        }
        loss
    }

    fn scratch(&self) -> Vec<Vec<f64>> {
        self.config.dims()[1..].iter().map(|&d| vec![0.0; d]).collect()
    }

    /// Mean cross-entropy and its gradient over `(input, label)` pairs with
    /// dropout disabled.
    pub fn loss_and_gradients(&self, inputs: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Gradients)> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::EmptyInput("need matching nonempty inputs and labels".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut trace = Trace::new(&self.config.dims());
        let mut scratch = self.scratch();
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            self.check_input(x.len())?;
            trace.activations[0].copy_from_slice(x);
            self.forward::<rng::StreamRng>(&mut trace, None);
            loss += self.backward(&trace, y, &mut grads, &mut scratch);
        }
        let n = inputs.len() as f64;
        grads.w.iter_mut().chain(grads.b.iter_mut()).flatten().for_each(|g| *g /= n);
        Ok((loss / n, grads))
    }

    /// Mean cross-entropy with dropout disabled.
    pub fn loss(&self, inputs: &[Vec<f64>], labels: &[usize]) -> f64 {
        let mut trace = Trace::new(&self.config.dims());
        let total: f64 = inputs
            .iter()
            .zip(labels)
            .map(|(x, &y)| {
                trace.activations[0].copy_from_slice(x);
                self.forward::<rng::StreamRng>(&mut trace, None);
                -trace.activations[self.layers.len()][y].max(1e-300).ln()
            })
            .sum();
        total / inputs.len() as f64
    }

    pub fn predict_proba_dense(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let mut trace = Trace::new(&self.config.dims());
        trace.activations[0].copy_from_slice(input);
        self.forward::<rng::StreamRng>(&mut trace, None);
        Ok(trace.activations.pop().expect("output layer"))
    }

    /// Text form: a config line, then per layer a header, the weight rows and
    /// the bias row, all as shortest round-trip decimals.
    pub fn to_text(&self) -> Result<String> {
        let mut s = String::from("mlp v1\n");
        writeln!(s, "config {}", serde_json::to_string(&self.config)?).unwrap();
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(s, "layer {i} {} {}", l.rows, l.cols).unwrap();
            for r in 0..l.rows {
                write_floats(&mut s, &l.w[r * l.cols..(r + 1) * l.cols]);
            }
            s.push_str("bias ");
            write_floats(&mut s, &l.b);
        }
        Ok(s)
    }

    pub fn from_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::parse(0, format!("unexpected end of file, wanted {what}"))),
            }
        };
        let (n, magic) = next("header")?;
        if magic != "mlp v1" {
            return Err(Error::parse(n, "expected `mlp v1`"));
        }
        let (n, cfg) = next("config")?;
        let cfg = cfg
            .strip_prefix("config ")
            .ok_or_else(|| Error::parse(n, "expected config line"))?;
        let config: MlpConfig = serde_json::from_str(cfg).map_err(|e| Error::parse(n, e.to_string()))?;
        config.validate()?;
        let dims = config.dims();
        let mut layers = Vec::new();
        for (i, d) in dims.windows(2).enumerate() {
            let (n, header) = next("layer header")?;
            let expect = format!("layer {i} {} {}", d[1], d[0]);
            if header != expect {
                return Err(Error::parse(n, format!("expected `{expect}`")));
            }
            let mut w = Vec::with_capacity(d[0] * d[1]);
            for _ in 0..d[1] {
                let (n, row) = next("weight row")?;
                let vals = parse_floats(n, &row)?;
                if vals.len() != d[0] {
                    return Err(Error::parse(n, format!("expected {} weights", d[0])));
                }
                w.extend(vals);
            }
            let (n, bias) = next("bias")?;
            let bias = bias
                .strip_prefix("bias ")
                .ok_or_else(|| Error::parse(n, "expected bias line"))?;
            let b = parse_floats(n, bias)?;
            if b.len() != d[1] {
                return Err(Error::parse(n, format!("expected {} biases", d[1])));
            }
            layers.push(Dense { rows: d[1], cols: d[0], w, b });
        }
        Ok(MlpModel { config, layers })
    }
}

fn write_floats(s: &mut String, xs: &[f64]) {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{x:?}").unwrap();
    }
    s.push('\n');
}

fn parse_floats(line: usize, s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::parse(line, e.to_string())))
        .collect()
}

impl Decoder for MlpModel {
    fn input_size(&self) -> usize {
        self.config.input_size
    }

    fn num_classes(&self) -> usize {
        self.config.output_size
    }

    fn predict_proba(&self, input: &BitVector) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        self.predict_proba_dense(&input.to_f64())
    }
}

/// Labeled training or evaluation example.
pub type Sample = (BitVector, usize);

fn check_samples(data: &[Sample], config: &MlpConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no training samples".into()));
    }
    for (bv, y) in data {
        if bv.len() != config.input_size {
            return Err(Error::DimensionMismatch {
                expected: config.input_size,
                actual: bv.len(),
            });
        }
        if *y >= config.output_size {
            return Err(Error::param(format!(
                "label {y} out of range for {} classes",
                config.output_size
            )));
        }
    }
    Ok(())
}

/// Trains a fresh model on `data`.
pub fn train(data: &[Sample], config: &MlpConfig) -> Result<MlpModel> {
    train_with_history(data, config).map(|(m, _)| m)
}

pub fn train_with_history(data: &[Sample], config: &MlpConfig) -> Result<(MlpModel, TrainingHistory)> {
    config.validate()?;
    check_samples(data, config)?;
    let mut history = TrainingHistory::default();
    let first = data[0].1;
    if data.iter().all(|(_, y)| *y == first) {
        let msg = format!("all {} samples carry label {first}", data.len());
        log::warn!("{msg}");
        history.warnings.push(msg);
    }

    let mut model = MlpModel::init(config.clone())?;
    let inputs: Vec<Vec<f64>> = data.iter().map(|(bv, _)| bv.to_f64()).collect();
    let labels: Vec<usize> = data.iter().map(|(_, y)| *y).collect();

    let mut grads = Gradients::zeros_like(&model);
    let mut m1 = Gradients::zeros_like(&model);
    let mut m2 = Gradients::zeros_like(&model);
    let mut trace = Trace::new(&config.dims());
    let mut scratch = model.scratch();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0i32;

    for epoch in 0..config.epochs {
        let mut r = rng::substream(config.seed, &[rng::tag_str("mlp-epoch"), epoch as u64]);
        order.shuffle(&mut r);
        for batch in order.chunks(config.batch_size) {
            grads.reset();
            for &i in batch {
                trace.activations[0].copy_from_slice(&inputs[i]);
                model.forward(&mut trace, Some(&mut r));
                model.backward(&trace, labels[i], &mut grads, &mut scratch);
            }
            step += 1;
            let scale = 1.0 / batch.len() as f64;
            let bc1 = 1.0 - config.beta1.powi(step);
            let bc2 = 1.0 - config.beta2.powi(step);
            for (l, layer) in model.layers.iter_mut().enumerate() {
                let params = layer.w.iter_mut().chain(layer.b.iter_mut());
                let g = grads.w[l].iter().chain(grads.b[l].iter());
                let a = m1.w[l].iter_mut().chain(m1.b[l].iter_mut());
                let v = m2.w[l].iter_mut().chain(m2.b[l].iter_mut());
                for (((theta, g), a), v) in params.zip(g).zip(a).zip(v) {
                    let g = g * scale;
                    *a = config.beta1 * *a + (1.0 - config.beta1) * g;
                    *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                    let a_hat = *a / bc1;
                    let v_hat = *v / bc2;
                    *theta -= config.learning_rate * a_hat / (v_hat.sqrt() + config.adam_epsilon);
                }
            }
        }
        history.epoch_losses.push(model.loss(&inputs, &labels));
    }
    Ok((model, history))
}

/// Label and probability vector for one report.
pub fn predict<D: Decoder + ?Sized>(model: &D, input: &BitVector) -> Result<(usize, Vec<f64>)> {
    model.predict(input)
}

/// Per-class and overall classification metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl ClassificationReport {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::EmptyInput("no predictions to evaluate".into()));
        }
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::param(format!("label out of range for {num_classes} classes")));
            }
            confusion[t][p] += 1;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut precision = Vec::with_capacity(num_classes);
        let mut recall = Vec::with_capacity(num_classes);
        let mut f1 = Vec::with_capacity(num_classes);
        let mut support = Vec::with_capacity(num_classes);
        for c in 0..num_classes {
            let tp = confusion[c][c];
            let predicted_c: usize = (0..num_classes).map(|t| confusion[t][c]).sum();
            let actual_c: usize = confusion[c].iter().sum();
            let p = ratio(tp, predicted_c);
            let r = ratio(tp, actual_c);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
            support.push(actual_c);
        }
        let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
        Ok(ClassificationReport {
            precision,
            recall,
            f1,
            support,
            accuracy: correct as f64 / truth.len() as f64,
            confusion,
        })
    }

    pub fn total(&self) -> usize {
        self.support.iter().sum()
    }

    fn weighted(&self, xs: &[f64]) -> f64 {
        let total = self.total() as f64;
        xs.iter().zip(&self.support).map(|(x, &s)| x * s as f64).sum::<f64>() / total
    }

    pub fn weighted_recall(&self) -> f64 {
        self.weighted(&self.recall)
    }

    pub fn weighted_precision(&self) -> f64 {
        self.weighted(&self.precision)
    }

    pub fn weighted_f1(&self) -> f64 {
        self.weighted(&self.f1)
    }

    pub fn macro_f1(&self) -> f64 {
        self.f1.iter().sum::<f64>() / self.f1.len() as f64
    }

    /// Confusion matrix as CSV, one row per true class.
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut s = String::from("truth");
        for n in class_names {
            write!(s, ",{n}").unwrap();
        }
        s.push('\n');
        for (row, name) in self.confusion.iter().zip(class_names) {
            s.push_str(name);
            for c in row {
                write!(s, ",{c}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

pub fn evaluate<D: Decoder + ?Sized>(model: &D, test: &[Sample]) -> Result<ClassificationReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("empty test set".into()));
    }
    let mut truth = Vec::with_capacity(test.len());
    let mut predicted = Vec::with_capacity(test.len());
    for (bv, y) in test {
        truth.push(*y);
        predicted.push(model.predict(bv)?.0);
    }
    ClassificationReport::from_predictions(&truth, &predicted, model.num_classes())
}

fn check_models<D: Decoder>(taxonomy: &Taxonomy, models: &[D], report_len: usize) -> Result<()> {
    if models.len() != taxonomy.num_categories() {
        return Err(Error::param(format!(
            "{} models for {} categories",
            models.len(),
            taxonomy.num_categories()
        )));
    }
    for (m, c) in models.iter().zip(taxonomy.categories()) {
        if m.num_classes() != c.classes.len() {
            return Err(Error::param(format!(
                "model for `{}` has {} classes, taxonomy has {}",
                c.name,
                m.num_classes(),
                c.classes.len()
            )));
        }
        if m.input_size() != report_len {
            return Err(Error::DimensionMismatch {
                expected: m.input_size(),
                actual: report_len,
            });
        }
    }
    Ok(())
}

/// Reconstructs a profile by running every category's decoder on the same report.
pub fn decode_profile<D: Decoder>(taxonomy: &Taxonomy, models: &[D], report: &BitVector) -> Result<Profile> {
    check_models(taxonomy, models, report.len())?;
    let selections = models
        .iter()
        .map(|m| m.predict(report).map(|(label, _)| label))
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile::new(selections))
}

/// Per-category probability vectors for one report (soft decoding).
pub fn decode_profile_soft<D: Decoder>(
    taxonomy: &Taxonomy,
    models: &[D],
    report: &BitVector,
) -> Result<Vec<Vec<f64>>> {
    check_models(taxonomy, models, report.len())?;
    models.iter().map(|m| m.predict_proba(report)).collect()
}
