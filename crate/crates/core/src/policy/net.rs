use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Mat, Tape, Var};
use crate::env::{Observation, NODE_FEATURES};
use crate::error::{Error, Result};

/// Pointer logits are squashed into `[-POINTER_CLIP, POINTER_CLIP]`.
pub const POINTER_CLIP: f64 = 10.0;

const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "mrx-policy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Embedding width.
    pub d: usize,
    /// Encoder layers.
    pub layers: usize,
    /// Hidden width of the encoder feed-forward blocks.
    pub ff: usize,
    /// Action slots.
    pub k: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { d: 64, layers: 3, ff: 128, k: 8 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 8 || self.layers == 0 || self.ff == 0 || self.k == 0 {
            return Err(Error::Config(format!("policy needs d >= 8 and positive layers, ff, k: {self:?}")));
        }
        Ok(())
    }

    /// Parameter shapes in storage order.
    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        let (d, f) = (self.d, self.ff);
        let mut s = vec![("in.w".to_string(), NODE_FEATURES, d), ("in.b".into(), 1, d)];
        for l in 0..self.layers {
            for (name, r, c) in [
                ("wq", d, d),
                ("wk", d, d),
                ("wv", d, d),
                ("ln1.g", 1, d),
                ("ln1.b", 1, d),
                ("ff.w1", d, f),
                ("ff.b1", 1, f),
                ("ff.w2", f, d),
                ("ff.b2", 1, d),
                ("ln2.g", 1, d),
                ("ln2.b", 1, d),
            ] {
                s.push((format!("enc{l}.{name}"), r, c));
            }
        }
        for (name, r, c) in [
            ("dec.wq", d, d),
            ("dec.wk", d, d),
            ("dec.wv", d, d),
            ("dec.proj.w", 2 * d, d),
            ("dec.proj.b", 1, d),
            ("dec.ln.g", 1, d),
            ("dec.ln.b", 1, d),
            ("ptr.wq", d, d),
            ("ptr.wk", d, d),
            ("val.w1", d, d),
            ("val.b1", 1, d),
            ("val.w2", d, 1),
            ("val.b2", 1, 1),
        ] {
            s.push((name.to_string(), r, c));
        }
        s
    }
}

/// Graph input for the network: node features, undirected edges, the current
/// node and the candidate slots (`None` = masked).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub features: Vec<[f64; NODE_FEATURES]>,
    pub edges: Vec<(usize, usize)>,
    pub current: usize,
    pub candidates: Vec<Option<usize>>,
}

impl From<&Observation> for PolicyInput {
    fn from(o: &Observation) -> Self {
        Self { features: o.features(), edges: o.edges.clone(), current: o.current, candidates: o.candidates.clone() }
    }
}

impl PolicyInput {
    fn validate(&self) -> Result<()> {
        let n = self.features.len();
        if n == 0 {
            return Err(Error::Contract("policy input has no vertices".into()));
        }
        if self.features.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("node features".into()));
        }
        if self.current >= n || self.edges.iter().any(|&(a, b)| a >= n || b >= n) {
            return Err(Error::Contract("policy input indices out of range".into()));
        }
        if self.candidates.iter().flatten().any(|&c| c >= n) {
            return Err(Error::Contract("candidate index out of range".into()));
        }
        if self.candidates.iter().all(Option::is_none) {
            return Err(Error::Contract("all candidates are masked".into()));
        }
        Ok(())
    }

    /// Attention mask: graph neighbors plus self.
    fn mask(&self) -> Vec<bool> {
        let n = self.features.len();
        let mut m = vec![false; n * n];
        for i in 0..n {
            m[i * n + i] = true;
        }
        for &(a, b) in &self.edges {
            m[a * n + b] = true;
            m[b * n + a] = true;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    /// One probability per candidate slot; masked slots are 0.
    pub probs: Vec<f64>,
    pub value: Option<f64>,
}

/// Tape variables produced by one forward pass.
pub(crate) struct Forward {
    /// Clipped pointer logits over the unmasked slots.
    pub logits: Var,
    /// Log-probabilities over the unmasked slots, in slot order.
    pub log_probs: Var,
    pub value: Var,
    /// Slot index of each unmasked candidate.
    pub slots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    config: PolicyConfig,
    params: Vec<Vec<f32>>,
}

impl PolicyNet {
    /// Xavier-uniform weights, unit layer-norm gains, zero biases.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = config
            .shapes()
            .into_iter()
            .map(|(name, r, c)| {
                if name.ends_with(".g") {
                    vec![1.0; r * c]
                } else if r == 1 {
                    vec![0.0; c]
                } else {
                    let a = (6.0 / (r + c) as f64).sqrt();
                    (0..r * c).map(|_| rng.gen_range(-a..a) as f32).collect()
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &[Vec<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    /// Parameters widened to `f64` matrices.
    pub fn matrices(&self) -> Vec<Mat> {
        self.config
            .shapes()
            .iter()
            .zip(&self.params)
            .map(|((_, r, c), p)| Mat::from_vec(*r, *c, p.iter().map(|&x| x as f64).collect()))
            .collect()
    }

    pub fn forward(&self, input: &PolicyInput) -> Result<PolicyOutput> {
        input.validate()?;
        let mut tape = Tape::new();
        let p = leaves(&mut tape, self.matrices());
        let f = build(&mut tape, &p, &self.config, input);
        output(&tape, &f, input)
    }

    /// Per-vertex embeddings after the encoder.
    pub fn encode(&self, input: &PolicyInput) -> Result<Mat> {
        input.validate()?;
        let mut tape = Tape::new();
        let p = leaves(&mut tape, self.matrices());
        let h = encoder(&mut tape, &p, &self.config, input);
        Ok(tape.value(h).clone())
    }

    /// Decoder and pointer head on precomputed embeddings.
    pub fn decode(&self, embeddings: &Mat, current: usize, candidates: &[Option<usize>]) -> Result<PolicyOutput> {
        if candidates.iter().all(Option::is_none) {
            return Err(Error::Contract("all candidates are masked".into()));
        }
        if current >= embeddings.rows || candidates.iter().flatten().any(|&c| c >= embeddings.rows) {
            return Err(Error::Contract("decoder index out of range".into()));
        }
        let mut tape = Tape::new();
        let p = leaves(&mut tape, self.matrices());
        let h = tape.leaf(embeddings.clone());
        let f = decoder(&mut tape, &p, &self.config, h, current, candidates);
        let mut probs = vec![0.0; candidates.len()];
        for (j, &s) in f.slots.iter().enumerate() {
            probs[s] = tape.value(f.log_probs).data[j].exp();
        }
        Ok(PolicyOutput { probs, value: Some(tape.value(f.value).data[0]) })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// Header line `mrx-policy <version> d=<d> layers=<L> ff=<ff> k=<k>`,
    /// then every parameter array in [`PolicyConfig::shapes`] order as
    /// little-endian `f32`, row-major.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let c = &self.config;
        writeln!(out, "{MAGIC} {FORMAT_VERSION} d={} layers={} ff={} k={}", c.d, c.layers, c.ff, c.k)?;
        for p in &self.params {
            for x in p {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|e| Error::Weights(e.to_string()))?;
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Weights("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Weights("header is not UTF-8".into()))?;
        let config = parse_header(header)?;
        let body = &bytes[nl + 1..];
        let shapes = config.shapes();
        let want: usize = shapes.iter().map(|(_, r, c)| r * c).sum();
        if body.len() != want * 4 {
            return Err(Error::Weights(format!("expected {} parameter bytes, found {}", want * 4, body.len())));
        }
        let mut floats = body.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let params: Vec<Vec<f32>> = shapes.iter().map(|(_, r, c)| floats.by_ref().take(r * c).collect()).collect();
        if params.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Weights("non-finite parameter".into()));
        }
        Ok(Self { config, params })
    }

    /// Replaces the parameters; shapes must match.
    pub fn set_params(&mut self, params: Vec<Vec<f32>>) -> Result<()> {
        let ok = params.len() == self.params.len() && params.iter().zip(&self.params).all(|(a, b)| a.len() == b.len());
        if !ok {
            return Err(Error::Contract("parameter shapes do not match".into()));
        }
        if params.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameters".into()));
        }
        self.params = params;
        Ok(())
    }
}

fn parse_header(header: &str) -> Result<PolicyConfig> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::Weights("not a policy weights file".into()));
    }
    let version: u32 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| Error::Weights("bad version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Weights(format!("unsupported format version {version}")));
    }
    let mut c = PolicyConfig { d: 0, layers: 0, ff: 0, k: 0 };
    for kv in parts {
        let (key, value) = kv.split_once('=').ok_or_else(|| Error::Weights(format!("bad header field {kv:?}")))?;
        let value: usize = value.parse().map_err(|_| Error::Weights(format!("bad header value {kv:?}")))?;
        match key {
            "d" => c.d = value,
            "layers" => c.layers = value,
            "ff" => c.ff = value,
            "k" => c.k = value,
            _ => return Err(Error::Weights(format!("unknown header field {key:?}"))),
        }
    }
    c.validate().map_err(|e| Error::Weights(e.to_string()))?;
    Ok(c)
}

pub(crate) fn leaves(tape: &mut Tape, mats: Vec<Mat>) -> Vec<Var> {
    mats.into_iter().map(|m| tape.leaf(m)).collect()
}

fn encoder(tape: &mut Tape, p: &[Var], c: &PolicyConfig, input: &PolicyInput) -> Var {
    let n = input.features.len();
    let x = tape.leaf(Mat::from_vec(n, NODE_FEATURES, input.features.iter().flatten().copied().collect()));
    let h = tape.matmul(x, p[0]);
    let mut h = tape.add_row(h, p[1]);
    let mask = input.mask();
    let scale = 1.0 / (c.d as f64).sqrt();
    for l in 0..c.layers {
        let w = &p[2 + 11 * l..2 + 11 * (l + 1)];
        let q = tape.matmul(h, w[0]);
        let k = tape.matmul(h, w[1]);
        let v = tape.matmul(h, w[2]);
        let kt = tape.transpose(k);
        let s = tape.matmul(q, kt);
        let s = tape.scale(s, scale);
        let a = tape.softmax(s, mask.clone());
        let att = tape.matmul(a, v);
        let r = tape.add(h, att);
        let r = tape.layer_norm(r);
        let r = tape.mul_row(r, w[3]);
        let h1 = tape.add_row(r, w[4]);
        let f = tape.matmul(h1, w[5]);
        let f = tape.add_row(f, w[6]);
        let f = tape.tanh(f);
        let f = tape.matmul(f, w[7]);
        let f = tape.add_row(f, w[8]);
        let r = tape.add(h1, f);
        let r = tape.layer_norm(r);
        let r = tape.mul_row(r, w[9]);
        h = tape.add_row(r, w[10]);
    }
    h
}

fn decoder(
    tape: &mut Tape,
    p: &[Var],
    c: &PolicyConfig,
    h: Var,
    current: usize,
    candidates: &[Option<usize>],
) -> Forward {
    let w = &p[2 + 11 * c.layers..];
    let scale = 1.0 / (c.d as f64).sqrt();
    let slots: Vec<usize> = (0..candidates.len()).filter(|&s| candidates[s].is_some()).collect();
    let nodes: Vec<usize> = slots.iter().map(|&s| candidates[s].expect("unmasked")).collect();
    let m = nodes.len();
    let hc = tape.gather_rows(h, vec![current]);
    let hk = tape.gather_rows(h, nodes);

    let q = tape.matmul(hc, w[0]);
    let k = tape.matmul(hk, w[1]);
    let v = tape.matmul(hk, w[2]);
    let kt = tape.transpose(k);
    let s = tape.matmul(q, kt);
    let s = tape.scale(s, scale);
    let a = tape.softmax(s, vec![true; m]);
    let att = tape.matmul(a, v);
    let cat = tape.concat_cols(hc, att);
    let e = tape.matmul(cat, w[3]);
    let e = tape.add_row(e, w[4]);
    let e = tape.layer_norm(e);
    let e = tape.mul_row(e, w[5]);
    let enhanced = tape.add_row(e, w[6]);

    let pq = tape.matmul(enhanced, w[7]);
    let pk = tape.matmul(hk, w[8]);
    let pkt = tape.transpose(pk);
    let u = tape.matmul(pq, pkt);
    let u = tape.scale(u, scale);
    let u = tape.tanh(u);
    let logits = tape.scale(u, POINTER_CLIP);
    let log_probs = tape.log_softmax(logits, vec![true; m]);

    let z = tape.matmul(enhanced, w[9]);
    let z = tape.add_row(z, w[10]);
    let z = tape.tanh(z);
    let z = tape.matmul(z, w[11]);
    let value = tape.add_row(z, w[12]);
    Forward { logits, log_probs, value, slots }
}

pub(crate) fn build(tape: &mut Tape, p: &[Var], c: &PolicyConfig, input: &PolicyInput) -> Forward {
    let h = encoder(tape, p, c, input);
    decoder(tape, p, c, h, input.current, &input.candidates)
}

pub(crate) fn output(tape: &Tape, f: &Forward, input: &PolicyInput) -> Result<PolicyOutput> {
    let lp = tape.value(f.log_probs);
    if !lp.is_finite() {
        return Err(Error::NonFinite("policy log-probabilities".into()));
    }
    let mut probs = vec![0.0; input.candidates.len()];
    for (j, &s) in f.slots.iter().enumerate() {
        probs[s] = lp.data[j].exp();
    }
    Ok(PolicyOutput { probs, value: Some(tape.value(f.value).data[0]) })
}
