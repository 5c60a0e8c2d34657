//! Draft-then-verify decoding loop.
//!
//! Each round the draft model proposes `L` tokens autoregressively; the
//! target then checks them position by position with the configured
//! criterion, stops at the first rejection, and contributes exactly one
//! bonus token (the replacement for the rejected token, or its own next
//! token after a full acceptance).
//!
//! Randomness is addressed by absolute sequence position, so every decision
//! is reproducible from `(seed, position)` alone. Each position is verified
//! at most once per decode: after a rejection at `t` the replacement fills
//! `t` and the next round starts at `t + 1`.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acceptance::{self, AcceptanceDecision, Branch, Criterion, DecodeMode, DraftToken, MajorityRule};
use crate::error::{Error, Result};
use crate::math::ProbDist;
use crate::mc_head::{self, HeadAgreement, HiddenState, McHead};
use crate::models::{LanguageModel, TraceHeader, TraceRecord};
use crate::rng::{self, Domain};

/// Token emitted after a DropMatch or naive rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    /// Argmax of the dropout-free target distribution.
    #[default]
    DeterministicArgmax,
    /// Argmax of the head centroid.
    CentroidArgmax,
}

/// Source of the timing fields in [`StepRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Deterministic work-unit counts from a fixed cost model (1 unit per
    /// multiply-add or transcendental), reported as nanoseconds.
    #[default]
    Counted,
    /// Monotonic wall clock.
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub criterion: Criterion,
    /// Draft length `L`.
    pub draft_length: usize,
    /// Dropout head count `K`.
    pub heads: usize,
    pub p_drop: f64,
    pub seed: u64,
    pub max_tokens: usize,
    #[serde(default)]
    pub mode: DecodeMode,
    #[serde(default)]
    pub rejection_replacement: Replacement,
    #[serde(default)]
    pub majority: MajorityRule,
    #[serde(default)]
    pub eos_token: Option<usize>,
    #[serde(default)]
    pub timing: Timing,
    /// Keep target hidden states in the step records (for trace export).
    #[serde(default)]
    pub record_hidden: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::DropmatchJs,
            draft_length: 5,
            heads: 5,
            p_drop: 0.3,
            seed: 0,
            max_tokens: 64,
            mode: DecodeMode::Greedy,
            rejection_replacement: Replacement::DeterministicArgmax,
            majority: MajorityRule::Plurality,
            eos_token: None,
            timing: Timing::Counted,
            record_hidden: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draft_length == 0 {
            return Err(Error::config("draft_length", "must be at least 1"));
        }
        if self.max_tokens == 0 {
            return Err(Error::config("max_tokens", "must be at least 1"));
        }
        McHead::new(self.heads, self.p_drop)?;
        Ok(())
    }

    /// Checks the configuration against a concrete model pair.
    pub fn validate_for(&self, draft: &dyn LanguageModel, target: &dyn LanguageModel) -> Result<()> {
        self.validate()?;
        if draft.vocab_size() != target.vocab_size() {
            return Err(Error::config(
                "draft",
                format!(
                    "draft vocabulary {} differs from target vocabulary {}",
                    draft.vocab_size(),
                    target.vocab_size()
                ),
            ));
        }
        if self.criterion.needs_heads() && !(target.capabilities().has_hidden_state && target.head().is_some()) {
            return Err(Error::config(
                "criterion",
                format!("{} needs a target that exposes hidden states", self.criterion),
            ));
        }
        if let Some(eos) = self.eos_token {
            if eos >= target.vocab_size() {
                return Err(Error::config("eos_token", "outside the vocabulary"));
            }
        }
        Ok(())
    }

    fn mc_head(&self) -> McHead {
        McHead {
            heads: self.heads,
            p_drop: self.p_drop,
        }
    }
}

/// Outcome of verifying one proposed position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionOutcome {
    /// Absolute sequence index of the verified token.
    pub position: u64,
    pub decision: AcceptanceDecision,
    /// Present when the criterion sampled dropout heads.
    pub agreement: Option<HeadAgreement>,
    /// Present with `record_hidden`.
    pub hidden: Option<HiddenState>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub proposed: Vec<DraftToken>,
    pub accepted_count: usize,
    pub bonus_token: usize,
    /// One entry per proposed token; `None` past the first rejection.
    pub decisions: Vec<Option<PositionOutcome>>,
    /// Tokens actually appended to the output; below `accepted_count + 1`
    /// only when `max_tokens` or the end token cut the step short.
    pub emitted: usize,
    pub wall_time_total: u64,
    pub wall_time_head: u64,
}

impl StepRecord {
    pub fn evaluated(&self) -> impl Iterator<Item = &PositionOutcome> {
        self.decisions.iter().flatten()
    }

    /// Tokens this step contributes before any truncation.
    pub fn tokens(&self) -> Vec<usize> {
        self.proposed[..self.accepted_count]
            .iter()
            .map(|d| d.token_id)
            .chain(std::iter::once(self.bonus_token))
            .collect()
    }

    /// Trace lines for the evaluated positions that kept their hidden state.
    pub fn trace_records(&self) -> Vec<TraceRecord> {
        self.decisions
            .iter()
            .zip(&self.proposed)
            .filter_map(|(o, d)| {
                let o = o.as_ref()?;
                Some(TraceRecord {
                    step: o.position,
                    hidden: o.hidden.clone()?,
                    draft_probs: d.dist.as_slice().to_vec(),
                    draft_token: d.token_id,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeOutput {
    /// Generated tokens, prompt excluded.
    pub tokens: Vec<usize>,
    pub steps: Vec<StepRecord>,
    /// Decode time (wall or counted, per the config), prompt setup excluded.
    pub decode_time: u64,
}

impl DecodeOutput {
    pub fn trace(&self, d: usize, v: usize) -> (TraceHeader, Vec<TraceRecord>) {
        (
            TraceHeader::new(d, v),
            self.steps.iter().flat_map(StepRecord::trace_records).collect(),
        )
    }
}

struct Stopwatch {
    timing: Timing,
    start: Instant,
    counted: u64,
}

impl Stopwatch {
    fn start(timing: Timing) -> Self {
        Self {
            timing,
            start: Instant::now(),
            counted: 0,
        }
    }

    fn charge(&mut self, units: u64) {
        self.counted += units;
    }

    fn elapsed(&self) -> u64 {
        match self.timing {
            Timing::Wall => self.start.elapsed().as_nanos() as u64,
            Timing::Counted => self.counted,
        }
    }
}

fn head_cost(cfg: &EngineConfig, v: u64, d: u64) -> u64 {
    let k = cfg.heads as u64;
    let sampling = (k + 1) * (v * d + 2 * v) + k * 2 * d;
    match cfg.criterion {
        Criterion::DropmatchJs => sampling + k * v + 2 * v + (k + 1) * 3 * v,
        Criterion::Naive => sampling + k,
        Criterion::GreedyMatch => v,
        Criterion::Lossless => 2 * v,
    }
}

fn pick(dist: &ProbDist, mode: DecodeMode, seed: u64, domain: Domain, position: u64) -> usize {
    match mode {
        DecodeMode::Greedy => dist.argmax(),
        DecodeMode::Sampled => dist.sample_with(rng::stream(seed, domain, position, 0).random()),
    }
}

/// Autoregressive rollout of `L` draft tokens after `context`.
pub fn draft_propose(draft: &dyn LanguageModel, context: &[usize], cfg: &EngineConfig) -> Result<Vec<DraftToken>> {
    if cfg.draft_length == 0 {
        return Err(Error::config("draft_length", "must be at least 1"));
    }
    let mut ctx = context.to_vec();
    let mut out = Vec::with_capacity(cfg.draft_length);
    for _ in 0..cfg.draft_length {
        let dist = draft.next_dist(&ctx)?;
        let token = pick(&dist, cfg.mode, cfg.seed, Domain::Draft, ctx.len() as u64);
        ctx.push(token);
        out.push(DraftToken::new(token, dist)?);
    }
    Ok(out)
}

/// Verifies `proposal` against `target`, stopping at the first rejection.
pub fn verify_step(
    target: &dyn LanguageModel,
    context: &[usize],
    proposal: &[DraftToken],
    cfg: &EngineConfig,
) -> Result<StepRecord> {
    if proposal.len() != cfg.draft_length {
        return Err(Error::input(format!(
            "proposal has {} tokens, draft_length is {}",
            proposal.len(),
            cfg.draft_length
        )));
    }
    let v = target.vocab_size() as u64;
    let d = target.hidden_dim().unwrap_or(0) as u64;
    let mut total = Stopwatch::start(cfg.timing);
    let mut head_time = 0u64;
    let mut ctx = context.to_vec();
    let mut decisions: Vec<Option<PositionOutcome>> = vec![None; proposal.len()];
    let mut accepted = 0;
    let mut rejection_token = None;

    for (slot, draft) in proposal.iter().enumerate() {
        let position = ctx.len() as u64;
        let fwd = target.forward(&ctx)?;
        total.charge(target.forward_cost());

        let mut head = Stopwatch::start(cfg.timing);
        head.charge(head_cost(cfg, v, d));
        let (decision, agreement, replacement) = match cfg.criterion {
            Criterion::GreedyMatch => {
                let dec = acceptance::greedy_match(draft, &fwd.dist);
                (dec, None, fwd.dist.argmax())
            }
            Criterion::Lossless => {
                let mut stream = rng::stream(cfg.seed, Domain::Lossless, position, 0);
                let out = acceptance::lossless_accept(draft, &fwd.dist, cfg.mode, &mut stream)?;
                let dec = AcceptanceDecision {
                    accepted: out.accepted,
                    branch: if out.accepted {
                        Branch::LosslessPass
                    } else {
                        Branch::Rejected
                    },
                    js_draft_to_centroid: None,
                    max_js_head_to_centroid: None,
                    mean_js_head_to_centroid: None,
                };
                (dec, None, out.replacement.unwrap_or(draft.token_id))
            }
            Criterion::Naive | Criterion::DropmatchJs => {
                let (h, w) = match (&fwd.hidden, target.head()) {
                    (Some(h), Some(w)) => (h, w),
                    _ => {
                        return Err(Error::config(
                            "criterion",
                            format!("{} needs a target that exposes hidden states", cfg.criterion),
                        ))
                    }
                };
                let samples = cfg.mc_head().sample(w, h, cfg.seed, position)?;
                let dec = if cfg.criterion == Criterion::Naive {
                    acceptance::naive_match(draft, &samples)
                } else {
                    acceptance::dropmatch_accept(draft, &samples, cfg.majority)?
                };
                let replacement = if dec.accepted {
                    draft.token_id
                } else {
                    match cfg.rejection_replacement {
                        Replacement::DeterministicArgmax => samples.deterministic_dist.argmax(),
                        Replacement::CentroidArgmax => acceptance::centroid(&samples)?.argmax(),
                    }
                };
                (dec, Some(mc_head::HeadAgreement::of(&samples)), replacement)
            }
        };
        head_time += head.elapsed();

        decisions[slot] = Some(PositionOutcome {
            position,
            decision,
            agreement,
            hidden: if cfg.record_hidden { fwd.hidden } else { None },
        });
        if !decision.accepted {
            rejection_token = Some(replacement);
            break;
        }
        accepted += 1;
        ctx.push(draft.token_id);
    }

    let bonus_token = match rejection_token {
        Some(t) => t,
        None => {
            let dist = target.next_dist(&ctx)?;
            total.charge(target.forward_cost());
            pick(&dist, cfg.mode, cfg.seed, Domain::Bonus, ctx.len() as u64)
        }
    };
    total.charge(head_time_units(cfg, head_time));

    Ok(StepRecord {
        proposed: proposal.to_vec(),
        accepted_count: accepted,
        bonus_token,
        decisions,
        emitted: accepted + 1,
        wall_time_total: total.elapsed(),
        wall_time_head: head_time,
    })
}

// The counted clock tracks head work separately; fold it into the step total.
fn head_time_units(cfg: &EngineConfig, head_time: u64) -> u64 {
    match cfg.timing {
        Timing::Counted => head_time,
        Timing::Wall => 0,
    }
}

/// Speculative decode of up to `max_tokens` tokens after `prompt`.
pub fn decode(
    draft: &dyn LanguageModel,
    target: &dyn LanguageModel,
    prompt: &[usize],
    cfg: &EngineConfig,
) -> Result<DecodeOutput> {
    cfg.validate_for(draft, target)?;
    if prompt.is_empty() {
        return Err(Error::input("prompt must not be empty"));
    }
    let mut context = prompt.to_vec();
    let mut tokens = Vec::new();
    let mut steps = Vec::new();
    let mut decode_time = 0u64;

    'outer: while tokens.len() < cfg.max_tokens {
        let mut propose_clock = Stopwatch::start(cfg.timing);
        let proposal = draft_propose(draft, &context, cfg)?;
        propose_clock.charge(draft.forward_cost() * cfg.draft_length as u64);
        let propose_time = propose_clock.elapsed();

        let mut step = verify_step(target, &context, &proposal, cfg)?;
        step.wall_time_total += propose_time;
        decode_time += step.wall_time_total;

        let mut emitted = 0;
        let mut done = false;
        for tok in step.tokens() {
            tokens.push(tok);
            context.push(tok);
            emitted += 1;
            if cfg.eos_token == Some(tok) || tokens.len() >= cfg.max_tokens {
                done = true;
                break;
            }
        }
        step.emitted = emitted;
        steps.push(step);
        if done {
            break 'outer;
        }
    }
    Ok(DecodeOutput {
        tokens,
        steps,
        decode_time,
    })
}

/// Plain autoregressive greedy decoding of a single model.
pub fn greedy_decode(
    model: &dyn LanguageModel,
    prompt: &[usize],
    max_tokens: usize,
    eos_token: Option<usize>,
) -> Result<Vec<usize>> {
    let mut context = prompt.to_vec();
    let mut out = Vec::with_capacity(max_tokens);
    while out.len() < max_tokens {
        let tok = model.next_dist(&context)?.argmax();
        out.push(tok);
        context.push(tok);
        if eos_token == Some(tok) {
            break;
        }
    }
    Ok(out)
}

/// Decodes independent streams, stream `i` seeded with
/// `derive_seed(cfg.seed, i)`. Runs on the current rayon pool; results are
/// returned in prompt order and do not depend on the thread count.
pub fn decode_streams(
    draft: &dyn LanguageModel,
    target: &dyn LanguageModel,
    prompts: &[Vec<usize>],
    cfg: &EngineConfig,
) -> Result<Vec<DecodeOutput>> {
    prompts
        .par_iter()
        .enumerate()
        .map(|(i, prompt)| {
            let cfg = EngineConfig {
                seed: rng::derive_seed(cfg.seed, i as u64),
                ..cfg.clone()
            };
            decode(draft, target, prompt, &cfg)
        })
        .collect()
}
