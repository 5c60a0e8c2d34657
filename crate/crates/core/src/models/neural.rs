use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Capabilities, Forward, LanguageModel};
use crate::error::{Error, Result};
use crate::math;
use crate::mc_head::{head_forward, HeadWeights, HiddenState};
use crate::rng::{self, Domain};

/// Shape and initialisation of a [`NeuralLm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralLmConfig {
    #[serde(default = "defaults::vocab")]
    pub vocab_size: usize,
    #[serde(default = "defaults::dim")]
    pub hidden_dim: usize,
    #[serde(default = "defaults::context")]
    pub context: usize,
    #[serde(default = "defaults::embedding_scale")]
    pub embedding_scale: f64,
    /// Spectral scale of the recurrence, relative to `1 / sqrt(d)`.
    #[serde(default = "defaults::mixing_gain")]
    pub mixing_gain: f64,
    /// Head entries are drawn with std `head_gain / sqrt(d)`.
    #[serde(default = "defaults::head_gain")]
    pub head_gain: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn vocab() -> usize {
        256
    }
    pub fn dim() -> usize {
        64
    }
    pub fn context() -> usize {
        4
    }
    pub fn embedding_scale() -> f64 {
        1.0
    }
    pub fn mixing_gain() -> f64 {
        0.9
    }
    pub fn head_gain() -> f64 {
        4.0
    }
}

impl Default for NeuralLmConfig {
    fn default() -> Self {
        Self {
            vocab_size: defaults::vocab(),
            hidden_dim: defaults::dim(),
            context: defaults::context(),
            embedding_scale: defaults::embedding_scale(),
            mixing_gain: defaults::mixing_gain(),
            head_gain: defaults::head_gain(),
            seed: 0,
        }
    }
}

impl NeuralLmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::config("vocab_size", "must be at least 2"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("hidden_dim", "must be at least 1"));
        }
        if self.context == 0 {
            return Err(Error::config("context", "must be at least 1"));
        }
        for (name, v) in [
            ("embedding_scale", self.embedding_scale),
            ("mixing_gain", self.mixing_gain),
            ("head_gain", self.head_gain),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// A tiny untrained recurrent LM.
///
/// The hidden state is a tanh recurrence over the last `context` tokens,
/// oldest first:
///
/// ```text
/// s_0 = 0
/// s_j = tanh(M s_{j-1} + E[x_j])
/// h   = s_n,  p = softmax(W h)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralLm {
    vocab: usize,
    dim: usize,
    context: usize,
    /// Token-major: row `t` is the embedding of token `t`.
    embedding: Vec<f64>,
    /// `d x d`, row-major.
    mixing: Vec<f64>,
    head: HeadWeights,
    /// Init std per tensor (embedding, mixing, head); noise for derived
    /// drafts is expressed relative to these.
    scales: [f64; 3],
}

const TENSOR_EMBEDDING: u64 = 0;
const TENSOR_MIXING: u64 = 1;
const TENSOR_HEAD: u64 = 2;

fn gaussian(seed: u64, domain: Domain, tensor: u64, n: usize, std: f64) -> Vec<f64> {
    let mut rng = rng::stream(seed, domain, tensor, 0);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            std * z
        })
        .collect()
}

impl NeuralLm {
    pub fn random(cfg: &NeuralLmConfig) -> Result<Self> {
        cfg.validate()?;
        let (v, d) = (cfg.vocab_size, cfg.hidden_dim);
        let root_d = (d as f64).sqrt();
        let scales = [cfg.embedding_scale, cfg.mixing_gain / root_d, cfg.head_gain / root_d];
        let embedding = gaussian(cfg.seed, Domain::Params, TENSOR_EMBEDDING, v * d, scales[0]);
        let mixing = gaussian(cfg.seed, Domain::Params, TENSOR_MIXING, d * d, scales[1]);
        let head = HeadWeights::new(v, d, gaussian(cfg.seed, Domain::Params, TENSOR_HEAD, v * d, scales[2]))?;
        Ok(Self {
            vocab: v,
            dim: d,
            context: cfg.context,
            embedding,
            mixing,
            head,
            scales,
        })
    }

    /// Builds a model from explicit tensors. `embedding` is `V x d`
    /// token-major, `mixing` is `d x d` row-major.
    pub fn from_parts(context: usize, embedding: Vec<f64>, mixing: Vec<f64>, head: HeadWeights) -> Result<Self> {
        let (v, d) = (head.vocab(), head.dim());
        if context == 0 {
            return Err(Error::input("context length must be at least 1"));
        }
        if embedding.len() != v * d || mixing.len() != d * d {
            return Err(Error::input("embedding or mixing shape does not match the head"));
        }
        if embedding.iter().chain(&mixing).any(|x| !x.is_finite()) {
            return Err(Error::input("non-finite parameter"));
        }
        Ok(Self {
            vocab: v,
            dim: d,
            context,
            embedding,
            mixing,
            head,
            scales: [1.0, 1.0 / (d as f64).sqrt(), 1.0 / (d as f64).sqrt()],
        })
    }

    pub fn context_len(&self) -> usize {
        self.context
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn mixing(&self) -> &[f64] {
        &self.mixing
    }

    pub fn hidden(&self, context: &[usize]) -> Result<HiddenState> {
        if context.is_empty() {
            return Err(Error::input("neural LM needs a non-empty context"));
        }
        if let Some(t) = context.iter().find(|&&t| t >= self.vocab) {
            return Err(Error::input(format!(
                "token {t} outside vocabulary of size {}",
                self.vocab
            )));
        }
        let d = self.dim;
        let window = &context[context.len().saturating_sub(self.context)..];
        let mut state = vec![0.0; d];
        let mut next = vec![0.0; d];
        for &tok in window {
            let emb = &self.embedding[tok * d..(tok + 1) * d];
            for (r, out) in next.iter_mut().enumerate() {
                let row = &self.mixing[r * d..(r + 1) * d];
                let pre: f64 = row.iter().zip(&state).map(|(a, b)| a * b).sum::<f64>() + emb[r];
                *out = pre.tanh();
            }
            std::mem::swap(&mut state, &mut next);
        }
        HiddenState::new(state)
    }
}

impl LanguageModel for NeuralLm {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn hidden_dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_hidden_state: true,
            is_replay: false,
        }
    }

    fn forward(&self, context: &[usize]) -> Result<Forward> {
        let h = self.hidden(context)?;
        let dist = math::softmax(&head_forward(&self.head, &h)?)?;
        Ok(Forward { hidden: Some(h), dist })
    }

    fn head(&self) -> Option<&HeadWeights> {
        Some(&self.head)
    }

    fn forward_cost(&self) -> u64 {
        let (v, d, n) = (self.vocab as u64, self.dim as u64, self.context as u64);
        n * (d * d + d) + v * d + v
    }
}

/// A copy of `target` with Gaussian noise of relative scale `epsilon` added
/// to every parameter. `epsilon = 0` returns a bit-identical copy.
pub fn make_draft_of(target: &NeuralLm, epsilon: f64, seed: u64) -> Result<NeuralLm> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::config(
            "epsilon",
            format!("must be finite and >= 0, got {epsilon}"),
        ));
    }
    let mut draft = target.clone();
    if epsilon == 0.0 {
        return Ok(draft);
    }
    let perturb = |values: &mut [f64], tensor: u64, scale: f64| {
        let noise = gaussian(seed, Domain::Perturb, tensor, values.len(), epsilon * scale);
        for (x, n) in values.iter_mut().zip(noise) {
            *x += n;
        }
    };
    perturb(&mut draft.embedding, TENSOR_EMBEDDING, target.scales[0]);
    perturb(&mut draft.mixing, TENSOR_MIXING, target.scales[1]);
    perturb(draft.head.as_mut_slice(), TENSOR_HEAD, target.scales[2]);
    Ok(draft)
}
