//! Multi-sample LM head.
//!
//! One hidden state `h` is turned into `K` stochastic logit vectors by
//! applying independent Bernoulli keep-masks to `h`, rescaling the survivors
//! by `1 / (1 - p_drop)` and projecting through the shared head matrix `W`.
//! Nothing upstream of the head is touched.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, LogitVector, ProbDist};
use crate::rng;

/// Final-layer representation fed to the LM head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HiddenState(Vec<f64>);

impl HiddenState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("hidden coordinate {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask {
    bits: Vec<bool>,
    /// `1 - p_drop`, stored as the exact bits of the sampling parameter.
    keep_prob: u64,
}

impl DropoutMask {
    pub fn from_bits(bits: Vec<bool>, p_drop: f64) -> Result<Self> {
        check_p_drop(p_drop)?;
        Ok(Self {
            bits,
            keep_prob: (1.0 - p_drop).to_bits(),
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn keep_prob(&self) -> f64 {
        f64::from_bits(self.keep_prob)
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

pub(crate) fn check_p_drop(p_drop: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::config("p_drop", format!("must lie in [0, 1), got {p_drop}")));
    }
    Ok(())
}

/// LM-head projection, `V x d`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    vocab: usize,
    dim: usize,
    data: Vec<f64>,
}

impl HeadWeights {
    pub fn new(vocab: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if vocab == 0 || dim == 0 {
            return Err(Error::input("head weights need V > 0 and d > 0"));
        }
        if data.len() != vocab * dim {
            return Err(Error::input(format!(
                "head weights have {} entries, expected {vocab} x {dim}",
                data.len()
            )));
        }
        if data.iter().any(|w| !w.is_finite()) {
            return Err(Error::input("head weights contain a non-finite entry"));
        }
        Ok(Self { vocab, dim, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { vocab: n, dim: n, data }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// The `K` stochastic head outputs for one time step, plus the dropout-free
/// reference output.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSampleSet {
    pub logits: Vec<LogitVector>,
    pub dists: Vec<ProbDist>,
    pub argmax_tokens: Vec<usize>,
    pub deterministic_logits: LogitVector,
    pub deterministic_dist: ProbDist,
    pub p_drop: f64,
}

impl HeadSampleSet {
    pub fn k(&self) -> usize {
        self.logits.len()
    }

    pub fn agreement(&self) -> HeadAgreement {
        HeadAgreement::of(self)
    }
}

/// How strongly the heads agree on their top-1 token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadAgreement {
    pub k: usize,
    /// Largest multiplicity among the head argmax tokens.
    pub plurality_size: usize,
    /// The most frequent token; ties resolve to the lowest token id.
    pub plurality_token: usize,
    /// Whether no other token reaches `plurality_size`.
    pub unique: bool,
    /// Deterministic-head probability of `plurality_token`.
    pub plurality_prob: f64,
}

impl HeadAgreement {
    pub fn of(samples: &HeadSampleSet) -> Self {
        let (token, size, unique) = plurality(&samples.argmax_tokens);
        Self {
            k: samples.k(),
            plurality_size: size,
            plurality_token: token,
            unique,
            plurality_prob: samples.deterministic_dist.prob(token),
        }
    }

    pub fn unanimous(&self) -> bool {
        self.plurality_size == self.k
    }
}

/// `(token, multiplicity, unique)` of the most frequent token.
pub(crate) fn plurality(tokens: &[usize]) -> (usize, usize, bool) {
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    let mut best = (usize::MAX, 0usize);
    let mut tied = false;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let count = j - i;
        if count > best.1 {
            best = (sorted[i], count);
            tied = false;
        } else if count == best.1 {
            tied = true;
        }
        i = j;
    }
    (best.0, best.1, !tied)
}

/// Draws a keep-mask with i.i.d. `Bernoulli(1 - p_drop)` entries.
pub fn sample_mask<R: Rng + ?Sized>(d: usize, p_drop: f64, rng: &mut R) -> Result<DropoutMask> {
    check_p_drop(p_drop)?;
    let keep = 1.0 - p_drop;
    let bits = (0..d).map(|_| rng.random::<f64>() < keep).collect();
    Ok(DropoutMask {
        bits,
        keep_prob: keep.to_bits(),
    })
}

/// Inverted dropout: `(h * m) / (1 - p_drop)`.
pub fn apply_dropout(h: &HiddenState, mask: &DropoutMask, p_drop: f64) -> Result<HiddenState> {
    check_p_drop(p_drop)?;
    if mask.len() != h.dim() {
        return Err(Error::input(format!(
            "mask length {} does not match hidden dimension {}",
            mask.len(),
            h.dim()
        )));
    }
    let scale = 1.0 - p_drop;
    let values = h
        .as_slice()
        .iter()
        .zip(mask.bits())
        .map(|(&x, &keep)| if keep { x / scale } else { 0.0 })
        .collect();
    Ok(HiddenState(values))
}

/// `W h`.
pub fn head_forward(w: &HeadWeights, h: &HiddenState) -> Result<LogitVector> {
    if w.dim() != h.dim() {
        return Err(Error::input(format!(
            "head expects hidden dimension {}, got {}",
            w.dim(),
            h.dim()
        )));
    }
    let hs = h.as_slice();
    let logits = (0..w.vocab())
        .map(|r| w.row(r).iter().zip(hs).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Ok(LogitVector::from_finite(logits))
}

/// Runs one dropout path per stream; `K = streams.len()`.
pub fn mc_head_sample<R: Rng>(
    w: &HeadWeights,
    h: &HiddenState,
    p_drop: f64,
    streams: &mut [R],
) -> Result<HeadSampleSet> {
    check_p_drop(p_drop)?;
    if streams.is_empty() {
        return Err(Error::config("heads", "need at least one head"));
    }
    let deterministic_logits = head_forward(w, h)?;
    let deterministic_dist = math::softmax(&deterministic_logits)?;
    let k = streams.len();
    let mut logits = Vec::with_capacity(k);
    let mut dists = Vec::with_capacity(k);
    let mut argmax_tokens = Vec::with_capacity(k);
    for stream in streams.iter_mut() {
        let mask = sample_mask(h.dim(), p_drop, stream)?;
        let l = head_forward(w, &apply_dropout(h, &mask, p_drop)?)?;
        let p = math::softmax(&l)?;
        argmax_tokens.push(p.argmax());
        logits.push(l);
        dists.push(p);
    }
    Ok(HeadSampleSet {
        logits,
        dists,
        argmax_tokens,
        deterministic_logits,
        deterministic_dist,
        p_drop,
    })
}

/// Head count and dropout rate for the multi-sample head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McHead {
    pub heads: usize,
    pub p_drop: f64,
}

impl McHead {
    pub fn new(heads: usize, p_drop: f64) -> Result<Self> {
        check_p_drop(p_drop)?;
        if heads == 0 {
            return Err(Error::config("heads", "must be at least 1"));
        }
        Ok(Self { heads, p_drop })
    }

    /// Samples time step `step` using the per-head streams of `seed`.
    pub fn sample(&self, w: &HeadWeights, h: &HiddenState, seed: u64, step: u64) -> Result<HeadSampleSet> {
        let mut streams = rng::head_streams(seed, step, self.heads);
        mc_head_sample(w, h, self.p_drop, &mut streams)
    }
}
