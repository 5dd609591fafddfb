use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{build, leaves, PolicyConfig, PolicyInput, PolicyNet};
use super::tape::{Mat, Tape, Var};
use crate::env::NODE_FEATURES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossCoefs {
    pub value: f64,
    pub entropy: f64,
}

impl Default for LossCoefs {
    fn default() -> Self {
        Self { value: 0.5, entropy: 0.01 }
    }
}

/// One decision for the actor-critic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: PolicyInput,
    /// Candidate slot that was taken.
    pub action: usize,
    pub advantage: f64,
    /// Discounted return, the value target.
    pub target: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub grad_norm: f64,
}

/// `−A·log π(a) + c_v·(V − R)² − c_H·H(π)` for one sample. Returns the root
/// and its three parts.
fn sample_loss(tape: &mut Tape, p: &[Var], c: &PolicyConfig, s: &Sample, coefs: &LossCoefs) -> Result<(Var, [f64; 3])> {
    let f = build(tape, p, c, &s.input);
    let j = f
        .slots
        .iter()
        .position(|&slot| slot == s.action)
        .ok_or_else(|| Error::Contract(format!("action slot {} is masked", s.action)))?;
    let m = f.slots.len();
    let mut pick = Mat::zeros(m, 1);
    pick.data[j] = -s.advantage;
    let pick = tape.leaf(pick);
    let policy = tape.matmul(f.log_probs, pick);

    let target = tape.leaf(Mat::from_vec(1, 1, vec![-s.target]));
    let diff = tape.add(f.value, target);
    let sq = tape.mul(diff, diff);
    let value = tape.scale(sq, coefs.value);

    let probs = tape.softmax(f.logits, vec![true; m]);
    let plogp = tape.mul(probs, f.log_probs);
    let neg_entropy = tape.sum(plogp);
    let ent = tape.scale(neg_entropy, coefs.entropy);

    let total = tape.add(policy, value);
    let total = tape.add(total, ent);
    let parts = [tape.value(policy).data[0], tape.value(sq).data[0], -tape.value(neg_entropy).data[0]];
    Ok((total, parts))
}

/// Loss of one sample at `params` (f64).
pub fn sample_loss_value(config: &PolicyConfig, params: &[Mat], s: &Sample, coefs: &LossCoefs) -> Result<f64> {
    let mut tape = Tape::new();
    let p = leaves(&mut tape, params.to_vec());
    let (root, _) = sample_loss(&mut tape, &p, config, s, coefs)?;
    Ok(tape.value(root).data[0])
}

/// Loss and gradient of one sample with respect to `params` (f64).
pub fn sample_gradient(config: &PolicyConfig, params: &[Mat], s: &Sample, coefs: &LossCoefs) -> Result<(f64, Vec<Mat>)> {
    let mut tape = Tape::new();
    let p = leaves(&mut tape, params.to_vec());
    let (root, _) = sample_loss(&mut tape, &p, config, s, coefs)?;
    let loss = tape.value(root).data[0];
    let grads = tape.backward(root);
    let g = p
        .iter()
        .zip(params)
        .map(|(&v, m)| grads[v].clone().unwrap_or_else(|| Mat::zeros(m.rows, m.cols)))
        .collect();
    Ok((loss, g))
}

const CHUNK: usize = 32;

/// Mean loss and gradient over a batch. Chunks are reduced in a fixed order,
/// so the result does not depend on the thread count.
pub fn batch_gradient(net: &PolicyNet, batch: &[Sample], coefs: &LossCoefs) -> Result<(LossStats, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let params = net.matrices();
    let config = *net.config();
    let partials: Vec<Result<(LossStats, Vec<Vec<f64>>)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut stats = LossStats::default();
            let mut acc: Vec<Vec<f64>> = params.iter().map(|m| vec![0.0; m.data.len()]).collect();
            for s in chunk {
                let mut tape = Tape::new();
                let p = leaves(&mut tape, params.clone());
                let (root, parts) = sample_loss(&mut tape, &p, &config, s, coefs)?;
                let grads = tape.backward(root);
                stats.policy += parts[0];
                stats.value += parts[1];
                stats.entropy += parts[2];
                stats.total += tape.value(root).data[0];
                for (a, &v) in acc.iter_mut().zip(&p) {
                    if let Some(g) = &grads[v] {
                        for (x, y) in a.iter_mut().zip(&g.data) {
                            *x += y;
                        }
                    }
                }
            }
            Ok((stats, acc))
        })
        .collect();
    let n = batch.len() as f64;
    let mut stats = LossStats::default();
    let mut grad: Vec<Vec<f64>> = params.iter().map(|m| vec![0.0; m.data.len()]).collect();
    for part in partials {
        let (s, g) = part?;
        stats.policy += s.policy;
        stats.value += s.value;
        stats.entropy += s.entropy;
        stats.total += s.total;
        for (a, b) in grad.iter_mut().zip(&g) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    for g in grad.iter_mut().flatten() {
        *g /= n;
    }
    stats.policy /= n;
    stats.value /= n;
    stats.entropy /= n;
    stats.total /= n;
    stats.grad_norm = grad.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if !stats.total.is_finite() || !stats.grad_norm.is_finite() {
        return Err(Error::NonFinite(format!("loss {stats:?}")));
    }
    Ok((stats, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled to at most this global norm.
    pub clip: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip: 1.0, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, net: &mut PolicyNet, grad: &[Vec<f64>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = grad.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        let norm = grad.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > self.clip { self.clip / norm } else { 1.0 };
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut params: Vec<Vec<f32>> = net.params().to_vec();
        for (i, p) in params.iter_mut().enumerate() {
            for (j, w) in p.iter_mut().enumerate() {
                let g = grad[i][j] * scale;
                self.m[i][j] = self.beta1 * self.m[i][j] + (1.0 - self.beta1) * g;
                self.v[i][j] = self.beta2 * self.v[i][j] + (1.0 - self.beta2) * g * g;
                let update = self.lr * (self.m[i][j] / c1) / ((self.v[i][j] / c2).sqrt() + self.eps);
                if update != 0.0 {
                    *w = (*w as f64 - update) as f32;
                }
            }
        }
        net.set_params(params)
    }
}

/// A random connected graph with `n` vertices and a random sample on it.
pub fn random_sample(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Sample {
    let features: Vec<[f64; NODE_FEATURES]> = (0..n)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0..2) as f64,
                rng.gen_range(-1..2) as f64,
                rng.gen_range(0.0..1.0),
            ]
        })
        .collect();
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let current = rng.gen_range(0..n);
    let nbrs: Vec<usize> =
        edges.iter().filter_map(|&(a, b)| if a == current { Some(b) } else if b == current { Some(a) } else { None }).collect();
    let mut candidates: Vec<Option<usize>> = nbrs.into_iter().take(k).map(Some).collect();
    candidates.resize(k, None);
    let live: Vec<usize> = (0..k).filter(|&s| candidates[s].is_some()).collect();
    let action = live[rng.gen_range(0..live.len())];
    Sample {
        input: PolicyInput { features, edges, current, candidates },
        action,
        advantage: rng.gen_range(-2.0..2.0),
        target: rng.gen_range(-2.0..2.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub graphs: usize,
    pub parameters_checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Gradients below this magnitude are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Finite-difference step used by the command-line check.
pub const GRADCHECK_STEP: f64 = 1e-3;

/// Compares analytic loss gradients with five-point central differences
/// (step `h`) on `graphs` random graphs of 2..=12 vertices, over every
/// parameter entry. Relative error is `|a − n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn gradcheck(seed: u64, graphs: usize, h: f64) -> Result<GradcheckReport> {
    let config = PolicyConfig { d: 8, layers: 2, ff: 8, k: 4 };
    let coefs = LossCoefs { value: 0.5, entropy: 0.1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport { graphs, parameters_checked: 0, max_rel_error: 0.0, max_abs_error: 0.0 };
    for g in 0..graphs {
        let net = PolicyNet::new(config, seed.wrapping_add(g as u64))?;
        let mut params = net.matrices();
        // Move gains and biases off their initial values so every path is exercised.
        for m in params.iter_mut() {
            for x in m.data.iter_mut() {
                *x += rng.gen_range(-0.3..0.3);
            }
        }
        let n = rng.gen_range(2..=12);
        let sample = random_sample(&mut rng, n, config.k);
        let (_, analytic) = sample_gradient(&config, &params, &sample, &coefs)?;
        for i in 0..params.len() {
            for j in 0..params[i].data.len() {
                let orig = params[i].data[j];
                let mut at = |offset: f64| {
                    params[i].data[j] = orig + offset;
                    sample_loss_value(&config, &params, &sample, &coefs)
                };
                let (f2, f1, b1, b2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
                params[i].data[j] = orig;
                let numeric = (8.0 * (f1 - b1) - (f2 - b2)) / (12.0 * h);
                let a = analytic[i].data[j];
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
                report.max_abs_error = report.max_abs_error.max(abs);
                report.max_rel_error = report.max_rel_error.max(rel);
                report.parameters_checked += 1;
            }
        }
    }
    Ok(report)
}
