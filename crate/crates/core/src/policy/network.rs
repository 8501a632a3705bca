use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::context::{ContextReader, FEATURE_DIM, MAX_TURN_TOKENS};
use crate::agent::tokens::{vocab_hash, Token, TokenSeq, VOCAB_SIZE};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 64;
const INIT_SCALE: f64 = 0.05;
/// Temperatures below this sample greedily.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;

/// Flat parameter vector of the policy network.
///
/// Layout: `W1 (hidden × feature)`, `b1`, `W2 (vocab × hidden)`, `b2`,
/// then one weight per token scaling the repeated-failure indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub hidden: usize,
    pub feature_dim: usize,
    pub vocab: usize,
    pub values: Vec<f64>,
}

/// Frozen policy used as the KL anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct RefPolicy(PolicyParams);

impl RefPolicy {
    pub fn params(&self) -> &PolicyParams {
        &self.0
    }
}

pub fn snapshot(params: &PolicyParams) -> RefPolicy {
    RefPolicy(params.clone())
}

/// Everything computed for one next-token prediction.
#[derive(Clone, Debug)]
pub struct Step {
    pub x: Vec<(usize, f64)>,
    pub repeat: Vec<f64>,
    pub legal: Vec<bool>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    /// Log-probabilities; `-inf` for illegal tokens.
    pub logp: Vec<f64>,
}

impl Step {
    pub fn probs(&self) -> Vec<f64> {
        self.logp.iter().map(|l| l.exp()).collect()
    }
}

/// Result of sampling one turn.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    pub tokens: Vec<Token>,
    pub logprobs: Vec<f64>,
    /// Set when the length cap was hit before `END`.
    pub truncated: bool,
}

/// Log-softmax restricted to legal entries.
pub fn masked_log_softmax(logits: &[f64], legal: &[bool]) -> Result<Vec<f64>> {
    let mut max = f64::NEG_INFINITY;
    for (i, (&z, &ok)) in logits.iter().zip(legal).enumerate() {
        if ok {
            if !z.is_finite() {
                return Err(Error::Numeric(format!("non-finite logit for token {i}")));
            }
            max = max.max(z);
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::Numeric("no legal token".into()));
    }
    let sum: f64 = logits
        .iter()
        .zip(legal)
        .filter(|(_, &ok)| ok)
        .map(|(&z, _)| (z - max).exp())
        .sum();
    let lse = max + sum.ln();
    Ok(logits
        .iter()
        .zip(legal)
        .map(|(&z, &ok)| if ok { z - lse } else { f64::NEG_INFINITY })
        .collect())
}

/// `KL(p ‖ q)` over the legal tokens, from log-probabilities.
pub fn kl_divergence(logp: &[f64], logq: &[f64], legal: &[bool]) -> f64 {
    let mut kl = 0.0;
    for i in 0..logp.len() {
        if legal[i] {
            kl += logp[i].exp() * (logp[i] - logq[i]);
        }
    }
    kl.max(0.0)
}

impl PolicyParams {
    pub fn zeros(hidden: usize) -> Self {
        let n = hidden * FEATURE_DIM + hidden + VOCAB_SIZE * hidden + 2 * VOCAB_SIZE;
        Self {
            hidden,
            feature_dim: FEATURE_DIM,
            vocab: VOCAB_SIZE,
            values: vec![0.0; n],
        }
    }

    /// Uniform(−0.05, 0.05) initialization from a seed.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in p.values.iter_mut() {
            *v = rng.gen_range(-INIT_SCALE..INIT_SCALE);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn off_b1(&self) -> usize {
        self.hidden * self.feature_dim
    }

    fn off_w2(&self) -> usize {
        self.off_b1() + self.hidden
    }

    fn off_b2(&self) -> usize {
        self.off_w2() + self.vocab * self.hidden
    }

    fn off_skip(&self) -> usize {
        self.off_b2() + self.vocab
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Numeric(format!("parameter {i} is not finite"))),
            None => Ok(()),
        }
    }

    /// Evaluates the network at the reader's current position.
    pub fn step(&self, reader: &ContextReader) -> Result<Step> {
        if !reader.generating() {
            return Err(Error::Format(
                "context does not end inside an open turn".into(),
            ));
        }
        let x = reader.features();
        let repeat = reader.repeat_indicator();
        let legal = reader.legal_mask();
        let (h, fd) = (self.hidden, self.feature_dim);
        let b1 = &self.values[self.off_b1()..self.off_b1() + h];
        let mut hidden: Vec<f64> = b1.to_vec();
        for &(j, v) in &x {
            for (k, a) in hidden.iter_mut().enumerate() {
                *a += self.values[k * fd + j] * v;
            }
        }
        for a in hidden.iter_mut() {
            *a = a.tanh();
        }
        let w2 = &self.values[self.off_w2()..self.off_b2()];
        let b2 = &self.values[self.off_b2()..self.off_skip()];
        let skip = &self.values[self.off_skip()..];
        let mut logits = vec![0.0; self.vocab];
        for v in 0..self.vocab {
            if !legal[v] {
                continue;
            }
            let row = &w2[v * h..(v + 1) * h];
            let dot: f64 = row.iter().zip(&hidden).map(|(w, a)| w * a).sum();
            logits[v] = dot + b2[v] + skip[v] * repeat[v];
        }
        let logp = masked_log_softmax(&logits, &legal)?;
        Ok(Step {
            x,
            repeat,
            legal,
            hidden,
            logits,
            logp,
        })
    }

    /// Adds `dL/dlogits` at one step into `grad`.
    pub fn backward(&self, step: &Step, dlogits: &[f64], grad: &mut [f64]) {
        let (h, fd) = (self.hidden, self.feature_dim);
        let (o_b1, o_w2, o_b2, o_skip) =
            (self.off_b1(), self.off_w2(), self.off_b2(), self.off_skip());
        let mut dh = vec![0.0; h];
        for v in 0..self.vocab {
            let g = dlogits[v];
            if g == 0.0 || !step.legal[v] {
                continue;
            }
            grad[o_b2 + v] += g;
            grad[o_skip + v] += g * step.repeat[v];
            let row = o_w2 + v * h;
            for k in 0..h {
                grad[row + k] += g * step.hidden[k];
                dh[k] += g * self.values[row + k];
            }
        }
        for k in 0..h {
            let da = dh[k] * (1.0 - step.hidden[k] * step.hidden[k]);
            if da == 0.0 {
                continue;
            }
            grad[o_b1 + k] += da;
            for &(j, v) in &step.x {
                grad[k * fd + j] += da * v;
            }
        }
    }

    /// Next-token distribution after `context`.
    pub fn next_token_dist(&self, context: &[Token]) -> Result<Vec<f64>> {
        let reader = ContextReader::from_tokens(context)?;
        Ok(self.step(&reader)?.probs())
    }

    /// Samples the rest of the open turn.
    /// Argmax decode of one turn.
    pub fn greedy_turn(&self, reader: &ContextReader) -> Result<Sampled> {
        self.sample_turn(
            reader,
            GREEDY_TEMPERATURE / 2.0,
            1.0,
            &mut rand::rngs::mock::StepRng::new(0, 0),
        )
    }

    pub fn sample_turn<R: Rng>(
        &self,
        reader: &ContextReader,
        temperature: f64,
        top_p: f64,
        rng: &mut R,
    ) -> Result<Sampled> {
        if !(temperature > 0.0) || !(top_p > 0.0 && top_p <= 1.0) {
            return Err(Error::Config(format!(
                "bad sampling settings: temperature {temperature}, top-p {top_p}"
            )));
        }
        let mut reader = reader.clone();
        let mut out = Sampled {
            tokens: Vec::new(),
            logprobs: Vec::new(),
            truncated: false,
        };
        while reader.generating() {
            if out.tokens.len() >= MAX_TURN_TOKENS {
                out.truncated = true;
                break;
            }
            let step = self.step(&reader)?;
            let choice = pick(&step, temperature, top_p, rng);
            out.tokens.push(Token(choice as u16));
            out.logprobs.push(step.logp[choice]);
            reader.push(Token(choice as u16))?;
        }
        Ok(out)
    }

    /// Samples one turn after `context` with a fresh generator seeded by `seed`.
    pub fn sample_sequence(
        &self,
        context: &[Token],
        temperature: f64,
        top_p: f64,
        seed: u64,
    ) -> Result<Sampled> {
        let reader = ContextReader::from_tokens(context)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_turn(&reader, temperature, top_p, &mut rng)
    }

    /// Log-probability of each of `tokens` following `context`.
    pub fn sequence_logprobs(&self, context: &[Token], tokens: &[Token]) -> Result<Vec<f64>> {
        let mut reader = ContextReader::from_tokens(context)?;
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let step = self.step(&reader)?;
            if !step.legal[t.index()] {
                return Err(Error::IllegalToken {
                    position: context.len() + out.len(),
                    token: t.0 as u32,
                });
            }
            out.push(step.logp[t.index()]);
            reader.push(t)?;
        }
        Ok(out)
    }

    /// Steps at every generated (mask 1) position of a multi-turn sequence.
    pub fn generated_steps(&self, seq: &TokenSeq) -> Result<Vec<Step>> {
        let mut reader = ContextReader::new();
        let mut out = Vec::with_capacity(seq.generated_count());
        for (pos, (&t, &m)) in seq.tokens.iter().zip(&seq.loss_mask).enumerate() {
            if m == 1 {
                let step = self.step(&reader)?;
                if !step.legal[t.index()] {
                    return Err(Error::IllegalToken {
                        position: pos,
                        token: t.0 as u32,
                    });
                }
                out.push(step);
            }
            reader.push(t)?;
        }
        Ok(out)
    }

    /// Sum of log-probabilities of `tokens` after `context`, with its gradient.
    pub fn logprob_gradient(&self, context: &[Token], tokens: &[Token]) -> Result<(f64, Vec<f64>)> {
        let mut reader = ContextReader::from_tokens(context)?;
        let mut grad = vec![0.0; self.len()];
        let mut total = 0.0;
        for &t in tokens {
            let step = self.step(&reader)?;
            let a = t.index();
            if !step.legal[a] {
                return Err(Error::IllegalToken {
                    position: context.len(),
                    token: t.0 as u32,
                });
            }
            total += step.logp[a];
            let mut d: Vec<f64> = step.logp.iter().map(|l| -l.exp()).collect();
            d[a] += 1.0;
            self.backward(&step, &d, &mut grad);
            reader.push(t)?;
        }
        Ok((total, grad))
    }

    /// Versioned text checkpoint; values are written in shortest
    /// round-trip form so save/load is bit-exact.
    pub fn to_checkpoint(&self) -> String {
        let mut s = format!(
            "icprl-policy v1 hidden={} feature={} vocab={} vocab_hash={:016x} count={}\n",
            self.hidden,
            self.feature_dim,
            self.vocab,
            vocab_hash(),
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
            .ok_or_else(|| Error::Format("empty checkpoint".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("icprl-policy") || fields.next() != Some("v1") {
            return Err(Error::Format(format!(
                "unrecognized checkpoint header: {header}"
            )));
        }
        let mut get = |key: &str| -> Result<String> {
            let f = fields
                .next()
                .ok_or_else(|| Error::Format(format!("missing {key}")))?;
            f.strip_prefix(&format!("{key}="))
                .map(str::to_string)
                .ok_or_else(|| Error::Format(format!("expected {key}=, got {f}")))
        };
        let num = |s: String| s.parse::<usize>().map_err(|e| Error::Format(e.to_string()));
        let hidden = num(get("hidden")?)?;
        let feature = num(get("feature")?)?;
        let vocab = num(get("vocab")?)?;
        let hash = get("vocab_hash")?;
        let count = num(get("count")?)?;
        if feature != FEATURE_DIM || vocab != VOCAB_SIZE || hash != format!("{:016x}", vocab_hash())
        {
            return Err(Error::Format(
                "checkpoint was written for a different vocabulary or feature layout".into(),
            ));
        }
        let mut p = Self::zeros(hidden);
        if count != p.len() {
            return Err(Error::Format(format!(
                "expected {} values, header says {count}",
                p.len()
            )));
        }
        let mut n = 0;
        for (i, line) in lines.enumerate() {
            if n == count {
                return Err(Error::Format("trailing data after parameters".into()));
            }
            p.values[n] = line.trim().parse().map_err(|e| Error::Parse {
                line: i + 2,
                msg: format!("{e}"),
            })?;
            n += 1;
        }
        if n != count {
            return Err(Error::Format(format!(
                "checkpoint holds {n} of {count} values"
            )));
        }
        p.check_finite()?;
        Ok(p)
    }
}

/// Draws a token index: greedy, or temperature + nucleus sampling.
fn pick<R: Rng>(step: &Step, temperature: f64, top_p: f64, rng: &mut R) -> usize {
    let legal: Vec<usize> = (0..step.legal.len()).filter(|&i| step.legal[i]).collect();
    if temperature < GREEDY_TEMPERATURE {
        let mut best = legal[0];
        for &i in &legal {
            if step.logits[i] > step.logits[best] {
                best = i;
            }
        }
        return best;
    }
    let scaled: Vec<f64> = step.logits.iter().map(|z| z / temperature).collect();
    let logq = masked_log_softmax(&scaled, &step.legal).expect("logits already checked");
    let mut order: Vec<(usize, f64)> = legal.iter().map(|&i| (i, logq[i].exp())).collect();
    let mut kept = order.len();
    if top_p < 1.0 {
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut acc = 0.0;
        for (n, &(_, p)) in order.iter().enumerate() {
            acc += p;
            if acc >= top_p {
                kept = n + 1;
                break;
            }
        }
    }
    let order = &order[..kept];
    let total: f64 = order.iter().map(|e| e.1).sum();
    let mut u = rng.gen::<f64>() * total;
    for &(i, p) in order {
        if u < p {
            return i;
        }
        u -= p;
    }
    order[order.len() - 1].0
}
