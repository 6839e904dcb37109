//! Policy/value network with hand-written reverse-mode gradients.
//!
//! Architecture: `x (N) → tanh(H) → tanh(H)`, shared by a policy head of `N`
//! logits and a scalar value head. Logits of already-frozen inputs are
//! lowered by [`MASK_CONSTANT`] before a log-sum-exp softmax, which screens
//! illegal actions out of the PMF.
//!
//! All parameters live in one flat vector, so gradients, Adam moments and
//! checkpoints share a single layout.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::RngStream;
use crate::error::{Error, Result};

/// Amount subtracted from the logit of every masked input.
pub const MASK_CONSTANT: f64 = 1e9;

const CHECKPOINT_MAGIC: &[u8; 8] = b"PRLCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Offsets of each parameter block inside the flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layout {
    n: usize,
    h: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wp: usize,
    bp: usize,
    wv: usize,
    bv: usize,
    len: usize,
}

impl Layout {
    fn new(n: usize, h: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + h * n;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let wp = b2 + h;
        let bp = wp + n * h;
        let wv = bp + n;
        let bv = wv + h;
        Self { n, h, w1, b1, w2, b2, wp, bp, wv, bv, len: bv + 1 }
    }
}

/// Gradient (or any other quantity) shaped like a network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGradients(pub Vec<f64>);

impl NetGradients {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValueNet {
    layout: Layout,
    params: Vec<f64>,
}

/// Policy and value at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub pmf: Vec<f64>,
    pub log_pmf: Vec<f64>,
    pub value: f64,
}

/// Intermediate activations kept for the backward pass.
struct Trace {
    h1: Vec<f64>,
    h2: Vec<f64>,
    eval: Evaluation,
}

/// One training row. Pretraining reads only `state` and `action`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub state: Vec<f64>,
    pub action: usize,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

impl TrainSample {
    /// Supervised example: `state → action`.
    pub fn labeled(state: Vec<f64>, action: usize) -> Self {
        Self { state, action, log_prob_old: 0.0, advantage: 0.0, ret: 0.0 }
    }
}

/// Scalar objective minimised by [`PolicyValueNet::gradients`], averaged
/// over the batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossSpec {
    /// `-min(rÂ, clip(r, 1-ε, 1+ε)Â) + β_c (R - V)² - β_e H`.
    Ppo { clip_epsilon: f64, beta_c: f64, beta_e: f64 },
    /// `-log π(a|s) - β_e H`.
    Pretrain { beta_e: f64 },
}

impl PolicyValueNet {
    /// Variance-scaled trunk, near-zero heads.
    pub fn new(n: usize, hidden: usize, rng: &mut RngStream) -> Result<Self> {
        if n == 0 || hidden == 0 {
            return Err(Error::InvalidParameter(format!("network dims must be positive, got N={n} H={hidden}")));
        }
        let layout = Layout::new(n, hidden);
        let mut params = vec![0.0; layout.len];
        let mut fill = |range: std::ops::Range<usize>, std: f64| {
            for p in &mut params[range] {
                let z: f64 = rng.sample(StandardNormal);
                *p = std * z;
            }
        };
        fill(layout.w1..layout.b1, (1.0 / n as f64).sqrt());
        fill(layout.w2..layout.b2, (1.0 / hidden as f64).sqrt());
        fill(layout.wp..layout.bp, 0.01 / (hidden as f64).sqrt());
        fill(layout.wv..layout.bv, 0.01 / (hidden as f64).sqrt());
        Ok(Self { layout, params })
    }

    /// Default hidden width: 1024 at `N = 256`, `2N` otherwise.
    pub fn default_hidden(n: usize) -> usize {
        if n == 256 {
            1024
        } else {
            2 * n
        }
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn hidden(&self) -> usize {
        self.layout.h
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Zero both heads, giving a uniform policy and zero value.
    pub fn zero_heads(&mut self) {
        let l = self.layout;
        self.params[l.wp..].iter_mut().for_each(|p| *p = 0.0);
    }

    /// Draw a fresh near-zero value head.
    pub fn reset_value_head(&mut self, rng: &mut RngStream) {
        let l = self.layout;
        let std = 0.01 / (l.h as f64).sqrt();
        for p in &mut self.params[l.wv..l.bv] {
            let z: f64 = rng.sample(StandardNormal);
            *p = std * z;
        }
        self.params[l.bv] = 0.0;
    }

    pub fn forward(&self, state: &[f64]) -> Result<Evaluation> {
        Ok(self.trace(state)?.eval)
    }

    fn trace(&self, x: &[f64]) -> Result<Trace> {
        let l = self.layout;
        if x.len() != l.n {
            return Err(Error::LengthMismatch { expected: l.n, got: x.len() });
        }
        let p = &self.params;
        let mut h1 = p[l.b1..l.b1 + l.h].to_vec();
        for (i, hi) in h1.iter_mut().enumerate() {
            let row = &p[l.w1 + i * l.n..l.w1 + (i + 1) * l.n];
            *hi += dot(row, x);
            *hi = hi.tanh();
        }
        let mut h2 = p[l.b2..l.b2 + l.h].to_vec();
        for (i, hi) in h2.iter_mut().enumerate() {
            *hi += dot(&p[l.w2 + i * l.h..l.w2 + (i + 1) * l.h], &h1);
            *hi = hi.tanh();
        }
        let logits: Vec<f64> = (0..l.n)
            .map(|j| {
                p[l.bp + j] + dot(&p[l.wp + j * l.h..l.wp + (j + 1) * l.h], &h2) - MASK_CONSTANT * x[j]
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let log_pmf: Vec<f64> = logits.iter().map(|z| z - lse).collect();
        let pmf = log_pmf.iter().map(|lp| lp.exp()).collect();
        let value = p[l.bv] + dot(&p[l.wv..l.bv], &h2);
        Ok(Trace { h1, h2, eval: Evaluation { pmf, log_pmf, value } })
    }

    /// Mean loss over `batch` and its gradient with respect to every
    /// parameter.
    pub fn gradients(&self, batch: &[TrainSample], spec: LossSpec) -> Result<(f64, NetGradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        let l = self.layout;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; l.len];
        let mut total = 0.0;
        let mut dz = vec![0.0; l.n];
        let mut dh2 = vec![0.0; l.h];
        let mut dh1 = vec![0.0; l.h];
        for sample in batch {
            if sample.action >= l.n {
                return Err(Error::IllegalAction { action: sample.action });
            }
            let t = self.trace(&sample.state)?;
            let e = &t.eval;
            let entropy = entropy_of(&e.pmf, &e.log_pmf);
            let lp = e.log_pmf[sample.action];
            // Loss terms and their derivatives w.r.t. log π(a|s), H and V.
            let (loss, d_lp, d_h, d_v) = match spec {
                LossSpec::Ppo { clip_epsilon, beta_c, beta_e } => {
                    let ratio = (lp - sample.log_prob_old).exp();
                    let a = sample.advantage;
                    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
                    let (surr, d_lp) =
                        if ratio * a <= clipped * a { (ratio * a, -a * ratio) } else { (clipped * a, 0.0) };
                    let err = sample.ret - e.value;
                    (-surr + beta_c * err * err - beta_e * entropy, d_lp, -beta_e, -2.0 * beta_c * err)
                }
                LossSpec::Pretrain { beta_e } => (-lp - beta_e * entropy, -1.0, -beta_e, 0.0),
            };
            total += loss;
            // dlogπ_a/dz_j = δ_aj - p_j;  dH/dz_j = -p_j (log p_j + H).
            for j in 0..l.n {
                let pj = e.pmf[j];
                let plogp = if pj > 0.0 { pj * (e.log_pmf[j] + entropy) } else { 0.0 };
                let delta = if j == sample.action { 1.0 } else { 0.0 };
                dz[j] = scale * (d_lp * (delta - pj) - d_h * plogp);
            }
            let dv = scale * d_v;

            // Heads.
            dh2.iter_mut().for_each(|d| *d = 0.0);
            for j in 0..l.n {
                if dz[j] == 0.0 {
                    continue;
                }
                grad[l.bp + j] += dz[j];
                let row = l.wp + j * l.h;
                for i in 0..l.h {
                    grad[row + i] += dz[j] * t.h2[i];
                    dh2[i] += dz[j] * self.params[row + i];
                }
            }
            if dv != 0.0 {
                grad[l.bv] += dv;
                for i in 0..l.h {
                    grad[l.wv + i] += dv * t.h2[i];
                    dh2[i] += dv * self.params[l.wv + i];
                }
            }
            // Second hidden layer.
            dh1.iter_mut().for_each(|d| *d = 0.0);
            for i in 0..l.h {
                let da = dh2[i] * (1.0 - t.h2[i] * t.h2[i]);
                if da == 0.0 {
                    continue;
                }
                grad[l.b2 + i] += da;
                let row = l.w2 + i * l.h;
                for k in 0..l.h {
                    grad[row + k] += da * t.h1[k];
                    dh1[k] += da * self.params[row + k];
                }
            }
            // First hidden layer.
            for i in 0..l.h {
                let da = dh1[i] * (1.0 - t.h1[i] * t.h1[i]);
                if da == 0.0 {
                    continue;
                }
                grad[l.b1 + i] += da;
                let row = l.w1 + i * l.n;
                for (k, &xk) in sample.state.iter().enumerate() {
                    grad[row + k] += da * xk;
                }
            }
        }
        let loss = total * scale;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss(format!(
                "loss {loss} over {} samples ({spec:?})",
                batch.len()
            )));
        }
        Ok((loss, NetGradients(grad)))
    }

    /// Mean loss only.
    pub fn loss(&self, batch: &[TrainSample], spec: LossSpec) -> Result<f64> {
        Ok(self.gradients(batch, spec)?.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn entropy_of(pmf: &[f64], log_pmf: &[f64]) -> f64 {
    -pmf.iter().zip(log_pmf).filter(|(p, _)| **p > 0.0).map(|(p, lp)| p * lp).sum::<f64>()
}

/// Shannon entropy (nats) of a PMF.
pub fn entropy(pmf: &[f64]) -> f64 {
    -pmf.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, m: vec![0.0; param_count], v: vec![0.0; param_count] }
    }

    pub fn for_net(net: &PolicyValueNet) -> Self {
        Self::new(net.param_count())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut PolicyValueNet, grads: &NetGradients, lr: f64) -> Result<()> {
        if grads.0.len() != net.params.len() || self.m.len() != net.params.len() {
            return Err(Error::LengthMismatch { expected: net.params.len(), got: grads.0.len() });
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, &g), m), v) in net.params.iter_mut().zip(&grads.0).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Binary checkpoint: magic, version, shapes, parameters and Adam state,
/// all little-endian.
pub fn save_checkpoint(path: &Path, net: &PolicyValueNet, opt: &Adam) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * (3 * net.params.len() + 16));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for dim in [net.layout.n, net.layout.h, net.params.len()] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for x in [opt.beta1, opt.beta2, opt.epsilon] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf.extend_from_slice(&opt.step.to_le_bytes());
    for block in [&net.params, &opt.m, &opt.v] {
        for x in block.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(PolicyValueNet, Adam)> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u64()? as usize;
    let h = r.u64()? as usize;
    let len = r.u64()? as usize;
    if n == 0 || h == 0 || Layout::new(n, h).len != len {
        return Err(Error::Checkpoint(format!("inconsistent shapes N={n} H={h} params={len}")));
    }
    let (beta1, beta2, epsilon) = (r.f64()?, r.f64()?, r.f64()?);
    let step = r.u64()?;
    let params = r.f64s(len)?;
    let m = r.f64s(len)?;
    let v = r.f64s(len)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((PolicyValueNet { layout: Layout::new(n, h), params }, Adam { beta1, beta2, epsilon, step, m, v }))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|_| self.f64()).collect()
    }
}
