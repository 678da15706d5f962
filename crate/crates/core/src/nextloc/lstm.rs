//! Single-layer LSTM language model over location tokens, trained with
//! truncated backpropagation through time.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NextLocError, Vocabulary, UNK};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Update {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnParams {
    pub embed: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip per window.
    pub clip_norm: f64,
    /// Truncation length in steps; state carries across windows.
    pub bptt: usize,
    pub update: Update,
}

impl Default for RnnParams {
    fn default() -> Self {
        Self {
            embed: 16,
            hidden: 32,
            epochs: 30,
            learning_rate: 0.05,
            clip_norm: 5.0,
            bptt: 20,
            update: Update::Sgd,
        }
    }
}

/// All weights in one flat buffer: embedding `V x E`, gate weights
/// `4H x (E + H)` (rows ordered input, forget, output, candidate), gate bias
/// `4H`, output weights `V x H`, output bias `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Sections {
    pub embedding: Range<usize>,
    pub gate_weights: Range<usize>,
    pub gate_bias: Range<usize>,
    pub output_weights: Range<usize>,
    pub output_bias: Range<usize>,
}

impl LstmParams {
    pub fn len_for(vocab: usize, embed: usize, hidden: usize) -> usize {
        vocab * embed + 4 * hidden * (embed + hidden) + 4 * hidden + vocab * hidden + vocab
    }

    pub fn sections(&self) -> Sections {
        let (v, e, h) = (self.vocab, self.embed, self.hidden);
        let a = v * e;
        let b = a + 4 * h * (e + h);
        let c = b + 4 * h;
        let d = c + v * h;
        Sections {
            embedding: 0..a,
            gate_weights: a..b,
            gate_bias: b..c,
            output_weights: c..d,
            output_bias: d..d + v,
        }
    }

    pub fn init(vocab: usize, embed: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self {
            vocab,
            embed,
            hidden,
            data: vec![0.0; Self::len_for(vocab, embed, hidden)],
        };
        let s = p.sections();
        let scale = 1.0 / (hidden as f64).sqrt();
        for r in [s.embedding, s.gate_weights, s.output_weights] {
            for x in &mut p.data[r] {
                *x = rng.gen_range(-scale..scale);
            }
        }
        // forget gate starts open
        for x in &mut p.data[s.gate_bias.start + hidden..s.gate_bias.start + 2 * hidden] {
            *x = 1.0;
        }
        p
    }
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl State {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

struct Step {
    token: usize,
    xh: Vec<f64>,
    /// Activated gates, `[i, f, o, g]` blocks of `H`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    probs: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(logits: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in logits.iter_mut() {
        *x /= z;
    }
}

fn step(p: &LstmParams, s: &Sections, token: usize, state: &mut State) -> Step {
    let (e, h) = (p.embed, p.hidden);
    let n_in = e + h;
    let mut xh = Vec::with_capacity(n_in);
    xh.extend_from_slice(&p.data[s.embedding.start + token * e..][..e]);
    xh.extend_from_slice(&state.h);

    let w = &p.data[s.gate_weights.clone()];
    let b = &p.data[s.gate_bias.clone()];
    let mut gates = vec![0.0; 4 * h];
    for (r, z) in gates.iter_mut().enumerate() {
        let row = &w[r * n_in..(r + 1) * n_in];
        let pre = b[r] + row.iter().zip(&xh).map(|(a, x)| a * x).sum::<f64>();
        *z = if r < 3 * h { sigmoid(pre) } else { pre.tanh() };
    }
    let c_prev = std::mem::replace(&mut state.c, vec![0.0; h]);
    let mut tanh_c = vec![0.0; h];
    for j in 0..h {
        let (i, f, o, g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        state.c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = state.c[j].tanh();
        state.h[j] = o * tanh_c[j];
    }

    let wy = &p.data[s.output_weights.clone()];
    let by = &p.data[s.output_bias.clone()];
    let mut probs: Vec<f64> = (0..p.vocab)
        .map(|v| by[v] + wy[v * h..(v + 1) * h].iter().zip(&state.h).map(|(a, x)| a * x).sum::<f64>())
        .collect();
    softmax(&mut probs);
    Step {
        token,
        xh,
        gates,
        c_prev,
        tanh_c,
        probs,
    }
}

/// Next-token distribution after each input, starting from `state`.
pub fn forward(p: &LstmParams, inputs: &[usize], state: &mut State) -> Vec<Vec<f64>> {
    let s = p.sections();
    inputs.iter().map(|&t| step(p, &s, t, state).probs).collect()
}

/// Summed cross-entropy of `targets` given `inputs`, and its gradient.
/// `state` is advanced to the end of the window; no gradient flows into it.
pub fn loss_and_gradient(p: &LstmParams, inputs: &[usize], targets: &[usize], state: &mut State) -> (f64, Vec<f64>) {
    assert_eq!(inputs.len(), targets.len());
    let s = p.sections();
    let (e, h) = (p.embed, p.hidden);
    let n_in = e + h;
    let steps: Vec<Step> = inputs.iter().map(|&t| step(p, &s, t, state)).collect();
    let loss = steps
        .iter()
        .zip(targets)
        .map(|(st, &y)| -st.probs[y].max(f64::MIN_POSITIVE).ln())
        .sum();

    let mut grad = vec![0.0; p.data.len()];
    let w = &p.data[s.gate_weights.clone()];
    let wy = &p.data[s.output_weights.clone()];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for (t, st) in steps.iter().enumerate().rev() {
        let h_t: Vec<f64> = (0..h).map(|j| st.gates[2 * h + j] * st.tanh_c[j]).collect();
        let mut dh = dh_next.clone();
        for v in 0..p.vocab {
            let dl = st.probs[v] - if v == targets[t] { 1.0 } else { 0.0 };
            grad[s.output_bias.start + v] += dl;
            let gw = &mut grad[s.output_weights.start + v * h..][..h];
            let wrow = &wy[v * h..(v + 1) * h];
            for j in 0..h {
                gw[j] += dl * h_t[j];
                dh[j] += dl * wrow[j];
            }
        }
        for j in 0..h {
            let (i, f, o, g) = (st.gates[j], st.gates[h + j], st.gates[2 * h + j], st.gates[3 * h + j]);
            let d_o = dh[j] * st.tanh_c[j];
            let dc = dh[j] * o * (1.0 - st.tanh_c[j] * st.tanh_c[j]) + dc_next[j];
            dc_next[j] = dc * f;
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * st.c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = d_o * o * (1.0 - o);
            dz[3 * h + j] = dc * i * (1.0 - g * g);
        }
        let mut dxh = vec![0.0; n_in];
        for (r, &d) in dz.iter().enumerate() {
            grad[s.gate_bias.start + r] += d;
            let gw = &mut grad[s.gate_weights.start + r * n_in..][..n_in];
            let wrow = &w[r * n_in..(r + 1) * n_in];
            for c in 0..n_in {
                gw[c] += d * st.xh[c];
                dxh[c] += d * wrow[c];
            }
        }
        let ge = &mut grad[s.embedding.start + st.token * e..][..e];
        for c in 0..e {
            ge[c] += dxh[c];
        }
        dh_next.copy_from_slice(&dxh[e..]);
    }
    (loss, grad)
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentModel {
    pub vocabulary: Vocabulary,
    pub hyper: RnnParams,
    pub seed: u64,
    pub params: LstmParams,
    /// Mean per-token cross-entropy after each epoch.
    pub loss_history: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn apply(&mut self, data: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..data.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            data[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains on every sequence of at least two tokens. Sequence order is
/// reshuffled each epoch from `seed`.
pub fn fit_rnn(corpus: &[Vec<String>], hyper: &RnnParams, seed: u64) -> Result<RecurrentModel, NextLocError> {
    if hyper.embed == 0 || hyper.hidden == 0 || hyper.bptt == 0 {
        return Err(NextLocError::InvalidHyperparams("embed, hidden and bptt must be positive".into()));
    }
    if !(hyper.learning_rate > 0.0 && hyper.clip_norm > 0.0) {
        return Err(NextLocError::InvalidHyperparams(
            "learning_rate and clip_norm must be positive".into(),
        ));
    }
    let vocabulary = Vocabulary::build(corpus.iter().flatten().map(String::as_str));
    if vocabulary.len() < 2 {
        return Err(NextLocError::EmptyCorpus);
    }
    let encoded: Vec<Vec<usize>> = corpus
        .iter()
        .filter(|s| s.len() >= 2)
        .map(|s| s.iter().map(|t| vocabulary.id(t)).collect())
        .collect();
    if encoded.is_empty() {
        return Err(NextLocError::EmptyCorpus);
    }
    let mut init_rng = substream(seed, "nextloc/rnn/init");
    let mut order_rng = substream(seed, "nextloc/rnn/order");
    let mut params = LstmParams::init(vocabulary.len(), hyper.embed, hyper.hidden, &mut init_rng);
    let mut adam = Adam {
        m: vec![0.0; params.data.len()],
        v: vec![0.0; params.data.len()],
        t: 0,
    };
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut loss_history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for &q in &order {
            let seq = &encoded[q];
            let mut state = State::zeros(hyper.hidden);
            let n = seq.len() - 1;
            let mut start = 0;
            while start < n {
                let end = (start + hyper.bptt).min(n);
                let (loss, mut grad) =
                    loss_and_gradient(&params, &seq[start..end], &seq[start + 1..end + 1], &mut state);
                if !loss.is_finite() {
                    return Err(NextLocError::Diverged { epoch, loss });
                }
                total += loss;
                count += end - start;
                clip(&mut grad, hyper.clip_norm);
                match hyper.update {
                    Update::Sgd => {
                        for (x, g) in params.data.iter_mut().zip(&grad) {
                            *x -= hyper.learning_rate * g;
                        }
                    }
                    Update::Adam => adam.apply(&mut params.data, &grad, hyper.learning_rate),
                }
                start = end;
            }
        }
        let mean = total / count as f64;
        if !mean.is_finite() {
            return Err(NextLocError::Diverged { epoch, loss: mean });
        }
        loss_history.push(mean);
    }
    Ok(RecurrentModel {
        vocabulary,
        hyper: *hyper,
        seed,
        params,
        loss_history,
    })
}

impl RecurrentModel {
    /// Next-token distribution after reading `history` from a zero state.
    pub fn distribution(&self, history: &[String]) -> Result<Vec<f64>, NextLocError> {
        if history.is_empty() {
            return Err(NextLocError::EmptyHistory);
        }
        let ids: Vec<usize> = history.iter().map(|t| self.vocabulary.id(t)).collect();
        let mut state = State::zeros(self.params.hidden);
        Ok(forward(&self.params, &ids, &mut state).pop().unwrap_or_default())
    }

    /// Most probable known token; ties go to the lower token id.
    pub fn predict(&self, history: &[String]) -> Result<String, NextLocError> {
        let probs = self.distribution(history)?;
        let best = (0..probs.len())
            .filter(|&v| v != UNK || probs.len() == 1)
            .fold(None::<usize>, |acc, v| match acc {
                Some(b) if probs[b] >= probs[v] => Some(b),
                _ => Some(v),
            })
            .unwrap_or(UNK);
        Ok(self.vocabulary.token(best).to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(vocab: usize, embed: usize, hidden: usize, seed: u64) -> LstmParams {
        let mut rng = substream(seed, "toy");
        let mut p = LstmParams::init(vocab, embed, hidden, &mut rng);
        // move biases off their init so every group is exercised
        let s = p.sections();
        for x in &mut p.data[s.gate_bias.start..s.output_bias.end] {
            *x += rng.gen_range(-0.5..0.5);
        }
        p
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = toy(3, 4, 5, 1);
        let inputs = [1, 2, 2, 1, 0, 2];
        let targets = [2, 2, 1, 0, 2, 1];
        let (_, g) = loss_and_gradient(&p, &inputs, &targets, &mut State::zeros(5));
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..p.data.len() {
            let mut plus = p.clone();
            plus.data[i] += h;
            let mut minus = p.clone();
            minus.data[i] -= h;
            let lp = loss_and_gradient(&plus, &inputs, &targets, &mut State::zeros(5)).0;
            let lm = loss_and_gradient(&minus, &inputs, &targets, &mut State::zeros(5)).0;
            let num = (lp - lm) / (2.0 * h);
            let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-7);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn outputs_are_distributions() {
        let p = toy(6, 3, 4, 2);
        let mut st = State::zeros(4);
        for probs in forward(&p, &[0, 1, 2, 3, 4, 5], &mut st) {
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn learns_a_cycle() {
        let seq: Vec<String> = ["A", "B", "C"].iter().cycle().take(60).map(|s| s.to_string()).collect();
        let hyper = RnnParams {
            epochs: 20,
            ..RnnParams::default()
        };
        let m = fit_rnn(std::slice::from_ref(&seq), &hyper, 3).unwrap();
        for n in 2..seq.len() {
            assert_eq!(m.predict(&seq[..n]).unwrap(), seq[n]);
        }
        assert_eq!(m.predict(&seq).unwrap(), m.predict(&seq).unwrap());
    }
}
