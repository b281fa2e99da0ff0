//! Multi-layer LSTM language model in double precision with exact
//! backpropagation through each sentence.
//!
//! Each sentence is read as inputs `<s> w1 .. wm` against targets
//! `w1 .. wm </s>`; state starts at zero for every sentence. The softmax runs
//! over the whole vocabulary (reserved symbols included), so an all-zero output
//! layer assigns `1/V` to every token. Gate blocks are stacked in the order
//! input, forget, cell, output.
//!
//! All parameters live in one flat vector described by [`Layout`], which keeps
//! SGD, gradient clipping, finite differences and serialisation uniform.

use std::io::{Read, Write};
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ngram::{LogBase, SurprisalScore};
use crate::rng::SplitMix64;
use crate::vocab::{Vocab, WordId, BOS_ID, EOS_ID};

const MAGIC: &[u8; 8] = b"ORDLSTM\0";
const FORMAT_VERSION: u32 = 1;
const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("dimensions must be positive")]
    BadDims,
    #[error("non-finite loss at epoch {epoch} (learning rate {lr}); lower the learning rate")]
    Diverged { epoch: usize, lr: f64 },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmDims {
    pub d_emb: usize,
    pub d_hidden: usize,
    pub n_layers: usize,
}

impl Default for LstmDims {
    fn default() -> Self {
        Self { d_emb: 200, d_hidden: 200, n_layers: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrainConfig {
    pub dims: LstmDims,
    pub epochs: usize,
    pub base_lr: f64,
    pub grad_clip_norm: f64,
    /// Divisor applied to the learning rate after an epoch whose validation
    /// loss did not improve.
    pub lr_decay: f64,
    pub min_count: usize,
    pub seed: u64,
    pub log_base: LogBase,
}

impl Default for LstmTrainConfig {
    fn default() -> Self {
        Self {
            dims: LstmDims::default(),
            epochs: 10,
            base_lr: 20.0,
            grad_clip_norm: 0.25,
            lr_decay: 4.0,
            min_count: 2,
            seed: 13,
            log_base: LogBase::Two,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationConfig {
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self { learning_rate: 2.0, grad_clip_norm: 0.25 }
    }
}

/// Mean per-token loss in nats after each epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: f64,
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub vocab: usize,
    pub dims: LstmDims,
    pub emb: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    pub input: usize,
    pub wx: Range<usize>,
    pub wh: Range<usize>,
    pub b: Range<usize>,
}

impl Layout {
    pub fn new(vocab: usize, dims: LstmDims) -> Self {
        let LstmDims { d_emb: e, d_hidden: h, n_layers } = dims;
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let emb = take(vocab * e);
        let layers = (0..n_layers)
            .map(|l| {
                let input = if l == 0 { e } else { h };
                LayerLayout { input, wx: take(4 * h * input), wh: take(4 * h * h), b: take(4 * h) }
            })
            .collect();
        let out_w = take(vocab * h);
        let out_b = take(vocab);
        Self { vocab, dims, emb, layers, out_w, out_b, total: at }
    }

    /// Named blocks, for diagnostics and gradient checking.
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut v = vec![("embedding".to_string(), self.emb.clone())];
        for (l, layer) in self.layers.iter().enumerate() {
            v.push((format!("layer{l}.w_input"), layer.wx.clone()));
            v.push((format!("layer{l}.w_hidden"), layer.wh.clone()));
            v.push((format!("layer{l}.bias"), layer.b.clone()));
        }
        v.push(("output.weight".to_string(), self.out_w.clone()));
        v.push(("output.bias".to_string(), self.out_b.clone()));
        v
    }
}

#[derive(Debug)]
pub struct LstmLm {
    vocab: Vocab,
    layout: Layout,
    theta: Vec<f64>,
    log_base: LogBase,
    history: Vec<EpochStats>,
    adaptations: AtomicUsize,
}

impl Clone for LstmLm {
    fn clone(&self) -> Self {
        Self {
            vocab: self.vocab.clone(),
            layout: self.layout.clone(),
            theta: self.theta.clone(),
            log_base: self.log_base,
            history: self.history.clone(),
            adaptations: AtomicUsize::new(self.adaptations.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for LstmLm {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab
            && self.layout == other.layout
            && self.log_base == other.log_base
            && self.theta.len() == other.theta.len()
            && self.theta.iter().zip(&other.theta).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

struct LayerStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `i, f, g, o`, each of length `h`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct Step {
    layers: Vec<LayerStep>,
    probs: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
}

impl LstmLm {
    /// Randomly initialised model: embeddings and output weights uniform in
    /// `±0.1`, recurrent weights uniform in `±1/sqrt(h)`, biases zero.
    pub fn init(vocab: Vocab, dims: LstmDims, seed: u64, log_base: LogBase) -> Result<Self, LstmError> {
        if dims.d_emb == 0 || dims.d_hidden == 0 || dims.n_layers == 0 {
            return Err(LstmError::BadDims);
        }
        let layout = Layout::new(vocab.len(), dims);
        let mut theta = vec![0.0; layout.total];
        let mut rng = SplitMix64::new(seed);
        let mut fill = |r: Range<usize>, scale: f64, theta: &mut [f64]| {
            for x in &mut theta[r] {
                *x = (2.0 * rng.next_f64() - 1.0) * scale;
            }
        };
        let k = 1.0 / (dims.d_hidden as f64).sqrt();
        fill(layout.emb.clone(), 0.1, &mut theta);
        for layer in &layout.layers {
            fill(layer.wx.clone(), k, &mut theta);
            fill(layer.wh.clone(), k, &mut theta);
        }
        fill(layout.out_w.clone(), 0.1, &mut theta);
        Ok(Self { vocab, layout, theta, log_base, history: Vec::new(), adaptations: AtomicUsize::new(0) })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dims(&self) -> LstmDims {
        self.layout.dims
    }

    pub fn log_base(&self) -> LogBase {
        self.log_base
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    /// Number of adaptation steps taken through [`adapt_and_score`].
    pub fn adaptation_count(&self) -> usize {
        self.adaptations.load(Ordering::Relaxed)
    }

    pub fn zero_output_layer(&mut self) {
        let (w, b) = (self.layout.out_w.clone(), self.layout.out_b.clone());
        self.theta[w].iter_mut().for_each(|x| *x = 0.0);
        self.theta[b].iter_mut().for_each(|x| *x = 0.0);
    }

    fn io_ids<S: AsRef<str>>(&self, sentence: &[S]) -> (Vec<WordId>, Vec<WordId>) {
        let ids = self.vocab.encode(sentence);
        let mut inputs = Vec::with_capacity(ids.len() + 1);
        inputs.push(BOS_ID);
        inputs.extend(&ids);
        let mut targets = ids;
        targets.push(EOS_ID);
        (inputs, targets)
    }

    fn forward(&self, theta: &[f64], inputs: &[WordId]) -> Vec<Step> {
        let lay = &self.layout;
        let (e, h) = (lay.dims.d_emb, lay.dims.d_hidden);
        let mut hs: Vec<Vec<f64>> = vec![vec![0.0; h]; lay.layers.len()];
        let mut cs: Vec<Vec<f64>> = vec![vec![0.0; h]; lay.layers.len()];
        let mut steps = Vec::with_capacity(inputs.len());
        for &tok in inputs {
            let start = lay.emb.start + tok as usize * e;
            let mut x = theta[start..start + e].to_vec();
            let mut layer_steps = Vec::with_capacity(lay.layers.len());
            for (l, ll) in lay.layers.iter().enumerate() {
                let wx = &theta[ll.wx.clone()];
                let wh = &theta[ll.wh.clone()];
                let b = &theta[ll.b.clone()];
                let mut z = b.to_vec();
                for (r, zr) in z.iter_mut().enumerate() {
                    let rx = &wx[r * ll.input..(r + 1) * ll.input];
                    let rh = &wh[r * h..(r + 1) * h];
                    *zr += rx.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                    *zr += rh.iter().zip(&hs[l]).map(|(a, b)| a * b).sum::<f64>();
                }
                for (r, zr) in z.iter_mut().enumerate() {
                    *zr = if r / h == 2 { zr.tanh() } else { sigmoid(*zr) };
                }
                let mut c = vec![0.0; h];
                let mut tanh_c = vec![0.0; h];
                let mut hn = vec![0.0; h];
                for j in 0..h {
                    c[j] = z[h + j] * cs[l][j] + z[j] * z[2 * h + j];
                    tanh_c[j] = c[j].tanh();
                    hn[j] = z[3 * h + j] * tanh_c[j];
                }
                let h_prev = std::mem::replace(&mut hs[l], hn.clone());
                let c_prev = std::mem::replace(&mut cs[l], c);
                layer_steps.push(LayerStep { x, h_prev, c_prev, gates: z, tanh_c });
                x = hn;
            }
            let ow = &theta[lay.out_w.clone()];
            let mut logits = theta[lay.out_b.clone()].to_vec();
            for (k, lk) in logits.iter_mut().enumerate() {
                *lk += ow[k * h..(k + 1) * h].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            }
            softmax(&mut logits);
            steps.push(Step { layers: layer_steps, probs: logits });
        }
        steps
    }

    /// Mean per-token cross-entropy (nats) and its gradient.
    fn loss_and_grad(&self, theta: &[f64], inputs: &[WordId], targets: &[WordId]) -> (f64, Vec<f64>) {
        let lay = &self.layout;
        let (e, h) = (lay.dims.d_emb, lay.dims.d_hidden);
        let steps = self.forward(theta, inputs);
        let scale = 1.0 / targets.len() as f64;
        let loss = steps.iter().zip(targets).map(|(s, &y)| -s.probs[y as usize].ln()).sum::<f64>() * scale;
        let mut grad = vec![0.0; theta.len()];
        let n_layers = lay.layers.len();
        let mut dh_next = vec![vec![0.0; h]; n_layers];
        let mut dc_next = vec![vec![0.0; h]; n_layers];
        let ow = &theta[lay.out_w.clone()];
        for t in (0..steps.len()).rev() {
            let step = &steps[t];
            let top = &step.layers[n_layers - 1];
            let h_top: Vec<f64> = (0..h).map(|j| top.gates[3 * h + j] * top.tanh_c[j]).collect();
            let mut dlogits = step.probs.clone();
            dlogits[targets[t] as usize] -= 1.0;
            dlogits.iter_mut().for_each(|d| *d *= scale);
            let mut dh = dh_next[n_layers - 1].clone();
            for (k, &dk) in dlogits.iter().enumerate() {
                grad[lay.out_b.start + k] += dk;
                let row = lay.out_w.start + k * h;
                for j in 0..h {
                    grad[row + j] += dk * h_top[j];
                    dh[j] += dk * ow[k * h + j];
                }
            }
            for l in (0..n_layers).rev() {
                let ll = &lay.layers[l];
                let ls = &step.layers[l];
                if l != n_layers - 1 {
                    for j in 0..h {
                        dh[j] += dh_next[l][j];
                    }
                }
                let g = &ls.gates;
                let mut dz = vec![0.0; 4 * h];
                for j in 0..h {
                    let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let tc = ls.tanh_c[j];
                    let d_o = dh[j] * tc;
                    let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[l][j];
                    dz[j] = dc * gg * i * (1.0 - i);
                    dz[h + j] = dc * ls.c_prev[j] * f * (1.0 - f);
                    dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                    dz[3 * h + j] = d_o * o * (1.0 - o);
                    dc_next[l][j] = dc * f;
                }
                let wx = &theta[ll.wx.clone()];
                let wh = &theta[ll.wh.clone()];
                let mut dx = vec![0.0; ll.input];
                let mut dhp = vec![0.0; h];
                for (r, &dzr) in dz.iter().enumerate() {
                    if dzr == 0.0 {
                        continue;
                    }
                    grad[ll.b.start + r] += dzr;
                    let xo = ll.wx.start + r * ll.input;
                    for (j, &xj) in ls.x.iter().enumerate() {
                        grad[xo + j] += dzr * xj;
                        dx[j] += dzr * wx[r * ll.input + j];
                    }
                    let ho = ll.wh.start + r * h;
                    for j in 0..h {
                        grad[ho + j] += dzr * ls.h_prev[j];
                        dhp[j] += dzr * wh[r * h + j];
                    }
                }
                dh_next[l] = dhp;
                if l > 0 {
                    dh = dx;
                } else {
                    let start = lay.emb.start + inputs[t] as usize * e;
                    for (j, d) in dx.iter().enumerate() {
                        grad[start + j] += d;
                    }
                }
            }
        }
        (loss, grad)
    }
}

impl LstmLm {
    /// Next-token distributions at every step of `<s> w1 .. wm`.
    pub fn step_distributions<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<Vec<f64>> {
        let (inputs, _) = self.io_ids(sentence);
        self.forward(&self.theta, &inputs).into_iter().map(|s| s.probs).collect()
    }

    fn score_with(&self, theta: &[f64], sentence: &[impl AsRef<str>]) -> SurprisalScore {
        let (inputs, targets) = self.io_ids(sentence);
        let steps = self.forward(theta, &inputs);
        let base = self.log_base;
        SurprisalScore::new(steps.iter().zip(&targets).map(|(s, &y)| base.surprisal(s.probs[y as usize])).collect())
    }

    /// Mean per-token cross-entropy in nats.
    pub fn sentence_loss<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let (inputs, targets) = self.io_ids(sentence);
        mean_loss(&self.forward(&self.theta, &inputs), &targets)
    }

    /// Token-weighted mean cross-entropy (nats) over a corpus.
    pub fn corpus_loss<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for s in sentences {
            let (inputs, targets) = self.io_ids(s);
            total += mean_loss(&self.forward(&self.theta, &inputs), &targets) * targets.len() as f64;
            n += targets.len();
        }
        total / n.max(1) as f64
    }

    pub fn perplexity<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> f64 {
        self.corpus_loss(sentences).exp()
    }

    /// Analytic gradient of the sentence's mean cross-entropy.
    pub fn gradient<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<f64> {
        let (inputs, targets) = self.io_ids(sentence);
        self.loss_and_grad(&self.theta, &inputs, &targets).1
    }

    fn sgd_step(theta: &mut [f64], grad: &mut [f64], lr: f64, clip: f64) {
        clip_norm(grad, clip);
        for (w, g) in theta.iter_mut().zip(grad.iter()) {
            *w -= lr * g;
        }
    }

    /// One clipped SGD step on a sentence's mean loss, in place.
    pub fn step_on<S: AsRef<str>>(&mut self, sentence: &[S], lr: f64, clip: f64) -> f64 {
        let (inputs, targets) = self.io_ids(sentence);
        let (loss, mut grad) = self.loss_and_grad(&self.theta, &inputs, &targets);
        Self::sgd_step(&mut self.theta, &mut grad, lr, clip);
        loss
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), LstmError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let d = self.layout.dims;
        for x in [d.d_emb, d.d_hidden, d.n_layers, self.vocab.len()] {
            w.write_all(&(x as u64).to_le_bytes())?;
        }
        w.write_all(&[match self.log_base {
            LogBase::Two => 2,
            LogBase::E => 0,
        }])?;
        for word in self.vocab.words().iter().skip(3) {
            w.write_all(&(word.len() as u64).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
        }
        w.write_all(&(self.theta.len() as u64).to_le_bytes())?;
        for x in &self.theta {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, LstmError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LstmError::Format("not an LSTM model file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(LstmError::Format(format!("unsupported version {version}")));
        }
        let read_u64 = |r: &mut dyn Read| -> Result<u64, LstmError> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let d_emb = read_u64(r)? as usize;
        let d_hidden = read_u64(r)? as usize;
        let n_layers = read_u64(r)? as usize;
        let v = read_u64(r)? as usize;
        let mut base = [0u8; 1];
        r.read_exact(&mut base)?;
        let log_base = match base[0] {
            2 => LogBase::Two,
            0 => LogBase::E,
            b => return Err(LstmError::Format(format!("bad log base tag {b}"))),
        };
        if v < 3 {
            return Err(LstmError::Format("vocabulary too small".into()));
        }
        let mut words = Vec::with_capacity(v - 3);
        for _ in 3..v {
            let len = read_u64(r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            words.push(String::from_utf8(buf).map_err(|_| LstmError::Format("word is not UTF-8".into()))?);
        }
        let dims = LstmDims { d_emb, d_hidden, n_layers };
        let layout = Layout::new(v, dims);
        let n = read_u64(r)? as usize;
        if n != layout.total {
            return Err(LstmError::Format(format!("expected {} parameters, found {n}", layout.total)));
        }
        let mut theta = Vec::with_capacity(n);
        for _ in 0..n {
            theta.push(f64::from_bits(read_u64(r)?));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(LstmError::Format("non-finite parameter".into()));
        }
        Ok(Self {
            vocab: Vocab::from_words(words),
            layout,
            theta,
            log_base,
            history: Vec::new(),
            adaptations: AtomicUsize::new(0),
        })
    }
}

fn mean_loss(steps: &[Step], targets: &[WordId]) -> f64 {
    steps.iter().zip(targets).map(|(s, &y)| -s.probs[y as usize].ln()).sum::<f64>() / targets.len() as f64
}

/// Rescales `grad` to L2 norm `max_norm` when it is longer.
pub fn clip_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Trains by clipped SGD one sentence at a time. The learning rate is divided
/// by `lr_decay` after any epoch whose validation loss is not a new best;
/// without a validation set the training loss is used.
pub fn train_lstm<S: AsRef<str>>(
    sentences: &[Vec<S>],
    valid: Option<&[Vec<S>]>,
    config: &LstmTrainConfig,
) -> Result<LstmLm, LstmError> {
    if sentences.is_empty() {
        return Err(LstmError::EmptyCorpus);
    }
    let vocab = Vocab::build(sentences, config.min_count.max(1));
    let mut lm = LstmLm::init(vocab, config.dims, config.seed, config.log_base)?;
    let mut lr = config.base_lr;
    let mut best = f64::INFINITY;
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    for epoch in 1..=config.epochs {
        SplitMix64::for_item(config.seed, &format!("epoch{epoch}")).shuffle(&mut order);
        for &i in &order {
            let loss = lm.step_on(&sentences[i], lr, config.grad_clip_norm);
            if !loss.is_finite() || lm.theta.iter().any(|x| !x.is_finite()) {
                return Err(LstmError::Diverged { epoch, lr });
            }
        }
        let train_loss = lm.corpus_loss(sentences);
        let valid_loss = valid.map(|v| lm.corpus_loss(v)).unwrap_or(train_loss);
        if !train_loss.is_finite() || !valid_loss.is_finite() {
            return Err(LstmError::Diverged { epoch, lr });
        }
        lm.history.push(EpochStats { epoch, lr, train_loss, valid_loss });
        if valid_loss < best {
            best = valid_loss;
        } else {
            lr /= config.lr_decay;
        }
    }
    Ok(lm)
}

pub fn lstm_sentence_surprisal<S: AsRef<str>>(lm: &LstmLm, sentence: &[S]) -> SurprisalScore {
    lm.score_with(&lm.theta, sentence)
}

/// Takes one clipped SGD step on a private copy of the weights using the
/// context sentence's mean loss, then scores every target with the adapted
/// copy. The shared model is never written. An empty context scores with the
/// base weights and takes no step.
pub fn adapt_and_score<S: AsRef<str>, T: AsRef<str>>(
    lm: &LstmLm,
    context: &[S],
    targets: &[Vec<T>],
    cfg: &AdaptationConfig,
) -> Vec<SurprisalScore> {
    if context.is_empty() {
        return targets.iter().map(|t| lm.score_with(&lm.theta, t)).collect();
    }
    let (inputs, gold) = lm.io_ids(context);
    let (_, mut grad) = lm.loss_and_grad(&lm.theta, &inputs, &gold);
    let mut adapted = lm.theta.clone();
    LstmLm::sgd_step(&mut adapted, &mut grad, cfg.learning_rate, cfg.grad_clip_norm);
    lm.adaptations.fetch_add(1, Ordering::Relaxed);
    targets.iter().map(|t| lm.score_with(&adapted, t)).collect()
}

/// Per-block worst relative error between analytic and central-difference
/// gradients of a sentence's mean loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub per_block: Vec<(String, f64)>,
}

/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// cancellation noise on near-zero gradients from dominating.
pub fn gradient_check<S: AsRef<str>>(lm: &LstmLm, sentence: &[S], epsilon: f64) -> GradientCheck {
    let (inputs, targets) = lm.io_ids(sentence);
    let (_, analytic) = lm.loss_and_grad(&lm.theta, &inputs, &targets);
    let mut theta = lm.theta.clone();
    let loss_at = |theta: &[f64]| mean_loss(&lm.forward(theta, &inputs), &targets);
    let mut per_block = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, range) in lm.layout.blocks() {
        let mut block_worst: f64 = 0.0;
        for i in range {
            let orig = theta[i];
            theta[i] = orig + epsilon;
            let up = loss_at(&theta);
            theta[i] = orig - epsilon;
            let down = loss_at(&theta);
            theta[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            block_worst = block_worst.max(err);
        }
        worst = worst.max(block_worst);
        per_block.push((name, block_worst));
    }
    GradientCheck { max_relative_error: worst, per_block }
}

/// Hex SHA-256 of a tokenised corpus, one space-joined sentence per line.
pub fn corpus_sha256<S: AsRef<str>>(sentences: &[Vec<S>]) -> String {
    let mut h = Sha256::new();
    for s in sentences {
        for (i, w) in s.iter().enumerate() {
            if i > 0 {
                h.update(b" ");
            }
            h.update(w.as_ref().as_bytes());
        }
        h.update(b"\n");
    }
    format!("{:x}", h.finalize())
}

/// Text manifest written next to a trained model.
pub fn training_manifest(config: &LstmTrainConfig, corpus_hash: &str, history: &[EpochStats]) -> String {
    let d = config.dims;
    let mut out = format!(
        "seed\t{}\ncorpus_sha256\t{corpus_hash}\nd_emb\t{}\nd_hidden\t{}\nn_layers\t{}\nepochs\t{}\nbase_lr\t{:?}\ngrad_clip_norm\t{:?}\nlr_decay\t{:?}\nmin_count\t{}\nlog_base\t{}\n",
        config.seed,
        d.d_emb,
        d.d_hidden,
        d.n_layers,
        config.epochs,
        config.base_lr,
        config.grad_clip_norm,
        config.lr_decay,
        config.min_count,
        config.log_base.as_str(),
    );
    for e in history {
        out.push_str(&format!("epoch\t{}\t{:?}\t{:?}\t{:?}\n", e.epoch, e.lr, e.train_loss, e.valid_loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn tiny() -> LstmLm {
        let vocab = Vocab::from_words(["a", "b", "c"].map(String::from));
        LstmLm::init(vocab, LstmDims { d_emb: 4, d_hidden: 5, n_layers: 2 }, 3, LogBase::Two).unwrap()
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut lm = tiny();
        lm.zero_output_layer();
        let s = lstm_sentence_surprisal(&lm, &toks("a b c"));
        for x in &s.per_token {
            assert!((x - (lm.vocab().len() as f64).log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn distributions_normalised() {
        let lm = tiny();
        for row in lm.step_distributions(&toks("a c b a")) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn surprisal_matches_cross_entropy() {
        let mut lm = tiny();
        lm.log_base = LogBase::E;
        let s = toks("b a c");
        let sc = lstm_sentence_surprisal(&lm, &s);
        assert!((sc.total - lm.sentence_loss(&s) * 4.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let lm = tiny();
        let g = gradient_check(&lm, &toks("a b b c"), 1e-4);
        assert!(g.max_relative_error < 1e-4, "{:?}", g);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        clip_norm(&mut g, 0.25);
        assert!((g[0] - 0.15).abs() < 1e-15 && (g[1] - 0.2).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_norm(&mut small, 0.25);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn binary_round_trip() {
        let lm = tiny();
        let mut buf = Vec::new();
        lm.write_to(&mut buf).unwrap();
        let back = LstmLm::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, lm);
        assert!(LstmLm::read_from(&mut &buf[..20]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(LstmLm::read_from(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn empty_context_takes_no_step() {
        let lm = tiny();
        let targets = vec![toks("a b"), toks("b a")];
        let out = adapt_and_score(&lm, &Vec::<String>::new(), &targets, &AdaptationConfig::default());
        assert_eq!(lm.adaptation_count(), 0);
        assert_eq!(out[0], lstm_sentence_surprisal(&lm, &targets[0]));
    }

    #[test]
    fn rejects_zero_dims() {
        let vocab = Vocab::from_words(Vec::new());
        assert!(LstmLm::init(vocab, LstmDims { d_emb: 0, d_hidden: 1, n_layers: 1 }, 0, LogBase::Two).is_err());
    }

    #[test]
    fn manifest_records_seed_and_hash() {
        let c = vec![toks("a b")];
        let h = corpus_sha256(&c);
        assert_eq!(h.len(), 64);
        let m = training_manifest(&LstmTrainConfig::default(), &h, &[]);
        assert!(m.contains("seed\t13") && m.contains(&h));
    }
}
