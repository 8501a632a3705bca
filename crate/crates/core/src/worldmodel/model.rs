use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{wm_features, WM_FEATURE_DIM};
use super::label::OutcomeLabel;
use crate::agent::EnvAction;
use crate::error::{Error, Result};
use crate::sim::Observation;

pub const DEFAULT_WM_HIDDEN: usize = 32;
pub const DEFAULT_LAMBDA_TEXT: f64 = 0.2;

/// Two-head predictor: shared tanh layer, a success logit and outcome-label logits.
#[derive(Clone, Debug, PartialEq)]
pub struct WMParams {
    pub hidden: usize,
    pub feature_dim: usize,
    pub labels: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WMPrediction {
    pub p_succ: f64,
    pub labels: Vec<f64>,
}

impl WMPrediction {
    pub fn top_label(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.labels.iter().enumerate() {
            if p > self.labels[best] {
                best = i;
            }
        }
        best
    }
}

/// One supervised example in feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x: Vec<(usize, f64)>,
    pub y: bool,
    pub label: usize,
}

impl Example {
    pub fn new(obs: &Observation, action: &EnvAction, y: bool, label: OutcomeLabel) -> Self {
        Example {
            x: wm_features(obs, action),
            y,
            label: label.index(),
        }
    }
}

struct Forward {
    hidden: Vec<f64>,
    success: f64,
    labels: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `−log σ(z)` if `y` else `−log(1 − σ(z))`, computed without forming σ.
fn bce_logit(z: f64, y: bool) -> f64 {
    let t = if y { 1.0 } else { 0.0 };
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

impl WMParams {
    pub fn zeros(hidden: usize, labels: usize) -> Self {
        let mut p = WMParams {
            hidden,
            feature_dim: WM_FEATURE_DIM,
            labels,
            values: Vec::new(),
        };
        p.values = vec![0.0; p.len()];
        p
    }

    pub fn init(hidden: usize, labels: usize, seed: u64) -> Self {
        let mut p = Self::zeros(hidden, labels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = hidden * p.feature_dim;
        let scale = 1.0 / (hidden as f64).sqrt();
        for (i, v) in p.values.iter_mut().enumerate() {
            *v = if i < w1 {
                rng.gen_range(-0.05..0.05)
            } else {
                rng.gen_range(-scale..scale) * 0.1
            };
        }
        p
    }

    pub fn len(&self) -> usize {
        let h = self.hidden;
        h * self.feature_dim + h + h + 1 + self.labels * h + self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn offsets(&self) -> [usize; 5] {
        let h = self.hidden;
        let b1 = h * self.feature_dim;
        let ws = b1 + h;
        let bs = ws + h;
        let wl = bs + 1;
        let bl = wl + self.labels * h;
        [b1, ws, bs, wl, bl]
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Numeric(format!(
                "world-model parameter {i} is not finite"
            ))),
            None => Ok(()),
        }
    }

    fn forward(&self, x: &[(usize, f64)]) -> Forward {
        let [b1, ws, bs, wl, bl] = self.offsets();
        let f = self.feature_dim;
        let v = &self.values;
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &v[j * f..(j + 1) * f];
                (v[b1 + j] + x.iter().map(|&(i, xi)| row[i] * xi).sum::<f64>()).tanh()
            })
            .collect();
        let success = v[bs]
            + hidden
                .iter()
                .zip(&v[ws..ws + self.hidden])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let labels = (0..self.labels)
            .map(|k| {
                let row = &v[wl + k * self.hidden..wl + (k + 1) * self.hidden];
                v[bl + k] + hidden.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Forward {
            hidden,
            success,
            labels,
        }
    }

    /// Raw success logit at temperature 1.
    pub fn success_logit(&self, x: &[(usize, f64)]) -> f64 {
        self.forward(x).success
    }

    pub fn predict_features(&self, x: &[(usize, f64)], temperature: f64) -> Result<WMPrediction> {
        if !(temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if let Some(&(i, _)) = x.iter().find(|(i, _)| *i >= self.feature_dim) {
            return Err(Error::Consistency(format!(
                "feature index {i} beyond {}",
                self.feature_dim
            )));
        }
        let fw = self.forward(x);
        if !fw.success.is_finite() || fw.labels.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("non-finite world-model logit".into()));
        }
        let scaled: Vec<f64> = fw.labels.iter().map(|l| l / temperature).collect();
        Ok(WMPrediction {
            p_succ: sigmoid(fw.success / temperature),
            labels: softmax(&scaled),
        })
    }

    pub fn predict(
        &self,
        obs: &Observation,
        action: &EnvAction,
        temperature: f64,
    ) -> Result<WMPrediction> {
        let valid = matches!(
            (obs.env, action),
            (crate::sim::EnvKind::GridDrop, EnvAction::GridPlace { .. })
                | (crate::sim::EnvKind::TimedRemove, EnvAction::EventSeq(_))
        );
        if !valid {
            return Err(Error::InvalidAction(format!(
                "{action} does not fit a {:?} observation",
                obs.env
            )));
        }
        self.predict_features(&wm_features(obs, action), temperature)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = format!(
            "icprl-wm v1 hidden={} feature={} labels={} count={}\n",
            self.hidden,
            self.feature_dim,
            self.labels,
            self.values.len()
        );
        for v in &self.values {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty world-model checkpoint".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("icprl-wm") || parts.next() != Some("v1") {
            return Err(Error::Format(format!(
                "bad world-model checkpoint header {header:?}"
            )));
        }
        let mut field = |name: &str| -> Result<usize> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(name))
                .and_then(|p| p.strip_prefix('='))
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Format(format!("missing {name} in checkpoint header")))
        };
        let hidden = field("hidden")?;
        let feature = field("feature")?;
        let labels = field("labels")?;
        let count = field("count")?;
        if feature != WM_FEATURE_DIM {
            return Err(Error::Format(format!(
                "feature width {feature} does not match {WM_FEATURE_DIM}"
            )));
        }
        let mut p = WMParams::zeros(hidden, labels);
        if count != p.len() {
            return Err(Error::Format(format!(
                "count {count} does not match layout size {}",
                p.len()
            )));
        }
        for (i, slot) in p.values.iter_mut().enumerate() {
            let line = lines.next().ok_or_else(|| Error::Parse {
                line: i + 2,
                msg: "missing value".into(),
            })?;
            *slot = line.trim().parse().map_err(|_| Error::Parse {
                line: i + 2,
                msg: format!("bad value {line:?}"),
            })?;
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Format(
                "trailing data after checkpoint values".into(),
            ));
        }
        p.check_finite()?;
        Ok(p)
    }
}

/// Mean success BCE plus `lambda_text` times mean label cross-entropy, with gradient.
pub fn wm_loss(params: &WMParams, batch: &[Example], lambda_text: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let [b1, ws, bs, wl, bl] = params.offsets();
    let (h, f) = (params.hidden, params.feature_dim);
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        if ex.label >= params.labels {
            return Err(Error::Consistency(format!(
                "label {} outside vocabulary of {}",
                ex.label, params.labels
            )));
        }
        if let Some(&(i, _)) = ex.x.iter().find(|(i, _)| *i >= f) {
            return Err(Error::Consistency(format!("feature index {i} beyond {f}")));
        }
        let fw = params.forward(&ex.x);
        let probs = softmax(&fw.labels);
        let ce = -probs[ex.label].ln();
        let ce = if ce.is_finite() {
            ce
        } else {
            let m = fw.labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + fw.labels.iter().map(|l| (l - m).exp()).sum::<f64>().ln() - fw.labels[ex.label]
        };
        let term = bce_logit(fw.success, ex.y) + lambda_text * ce;
        if !term.is_finite() {
            return Err(Error::Numeric("non-finite world-model loss".into()));
        }
        loss += term / n;

        let dz = (sigmoid(fw.success) - if ex.y { 1.0 } else { 0.0 }) / n;
        let dl: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(k, p)| lambda_text * (p - if k == ex.label { 1.0 } else { 0.0 }) / n)
            .collect();
        grad[bs] += dz;
        for (k, d) in dl.iter().enumerate() {
            grad[bl + k] += d;
        }
        for j in 0..h {
            grad[ws + j] += dz * fw.hidden[j];
            let mut dh = dz * params.values[ws + j];
            for (k, d) in dl.iter().enumerate() {
                grad[wl + k * h + j] += d * fw.hidden[j];
                dh += d * params.values[wl + k * h + j];
            }
            let da = dh * (1.0 - fw.hidden[j] * fw.hidden[j]);
            grad[b1 + j] += da;
            for &(i, xi) in &ex.x {
                grad[j * f + i] += da * xi;
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda_text: f64,
    pub seed: u64,
}

impl Default for WmTrainConfig {
    fn default() -> Self {
        WmTrainConfig {
            hidden: DEFAULT_WM_HIDDEN,
            epochs: 60,
            batch_size: 32,
            lr: 3e-3,
            weight_decay: 1e-4,
            lambda_text: DEFAULT_LAMBDA_TEXT,
            seed: 0,
        }
    }
}

impl WmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "hidden size and batch size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.lambda_text >= 0.0) {
            return Err(Error::Config(
                "lr must be positive; weight decay and lambda_text non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Adam on shuffled minibatches. Returns the parameters and the mean loss per epoch.
pub fn train_wm(examples: &[Example], config: &WmTrainConfig) -> Result<(WMParams, Vec<f64>)> {
    config.validate()?;
    let mut params = WMParams::init(config.hidden, OutcomeLabel::ALL.len(), config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x3c6e_f372_fe94_f82b);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut t = 0i32;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, grad) = wm_loss(&params, &batch, config.lambda_text)?;
            total += loss * batch.len() as f64;
            t += 1;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for i in 0..params.values.len() {
                let g = grad[i] + config.weight_decay * params.values[i];
                if g == 0.0 && m[i] == 0.0 {
                    continue;
                }
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                params.values[i] -= config.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        history.push(total / examples.len().max(1) as f64);
    }
    params.check_finite()?;
    Ok((params, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_predicted: f64,
    pub empirical_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub examples: usize,
    pub accuracy: f64,
    pub label_accuracy: f64,
    pub bce: f64,
    pub bins: Vec<CalibrationBin>,
}

/// Success accuracy at 0.5, label accuracy, BCE and `bins` equal-width reliability bins.
pub fn calibration_report(
    params: &WMParams,
    examples: &[Example],
    bins: usize,
) -> Result<CalibrationReport> {
    let bins = bins.max(1);
    let mut acc = (vec![0usize; bins], vec![0.0; bins], vec![0usize; bins]);
    let (mut correct, mut label_correct, mut bce) = (0usize, 0usize, 0.0);
    for ex in examples {
        let p = params.predict_features(&ex.x, 1.0)?;
        let b = ((p.p_succ * bins as f64) as usize).min(bins - 1);
        acc.0[b] += 1;
        acc.1[b] += p.p_succ;
        acc.2[b] += usize::from(ex.y);
        correct += usize::from((p.p_succ >= 0.5) == ex.y);
        label_correct += usize::from(p.top_label() == ex.label);
        bce += bce_logit(params.success_logit(&ex.x), ex.y);
    }
    let n = examples.len().max(1) as f64;
    Ok(CalibrationReport {
        examples: examples.len(),
        accuracy: correct as f64 / n,
        label_accuracy: label_correct as f64 / n,
        bce: bce / n,
        bins: (0..bins)
            .map(|b| {
                let c = acc.0[b];
                let d = c.max(1) as f64;
                CalibrationBin {
                    lower: b as f64 / bins as f64,
                    upper: (b + 1) as f64 / bins as f64,
                    count: c,
                    mean_predicted: acc.1[b] / d,
                    empirical_rate: acc.2[b] as f64 / d,
                }
            })
            .collect(),
    })
}
