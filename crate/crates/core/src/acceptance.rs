//! Token-acceptance rules.
//!
//! * [`lossless_accept`]: classic rejection sampling against the target.
//! * greedy exact match: the greedy-mode special case of the above.
//! * [`naive_match`]: accept if any dropout head picked the draft token.
//! * [`dropmatch_accept`]: accept if the draft distribution lies within the
//!   JS spread of the dropout heads around their centroid, falling back to
//!   a majority vote when the heads have collapsed onto one token.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, ProbDist};
use crate::mc_head::{plurality, HeadSampleSet};

/// A token proposed by the draft model together with the draft's full
/// distribution at that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftToken {
    pub token_id: usize,
    pub dist: ProbDist,
}

impl DraftToken {
    pub fn new(token_id: usize, dist: ProbDist) -> Result<Self> {
        if token_id >= dist.len() {
            return Err(Error::input(format!(
                "draft token {token_id} outside vocabulary of size {}",
                dist.len()
            )));
        }
        Ok(Self { token_id, dist })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Lossless,
    GreedyMatch,
    Naive,
    DropmatchJs,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Lossless,
        Criterion::GreedyMatch,
        Criterion::Naive,
        Criterion::DropmatchJs,
    ];

    /// Whether the rule needs the dropout heads (and hence a hidden state).
    pub fn needs_heads(self) -> bool {
        matches!(self, Criterion::Naive | Criterion::DropmatchJs)
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Lossless => "lossless",
            Criterion::GreedyMatch => "greedy_match",
            Criterion::Naive => "naive",
            Criterion::DropmatchJs => "dropmatch_js",
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    JsPass,
    MajorityPass,
    NaivePass,
    LosslessPass,
    Rejected,
}

/// How the majority fallback treats split votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorityRule {
    /// The draft token must be the unique most frequent head token.
    #[default]
    Plurality,
    /// The draft token must be chosen by more than half of the heads.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceDecision {
    pub accepted: bool,
    pub branch: Branch,
    pub js_draft_to_centroid: Option<f64>,
    pub max_js_head_to_centroid: Option<f64>,
    /// Mean over heads of JS(head, centroid); present with the other JS fields.
    pub mean_js_head_to_centroid: Option<f64>,
}

impl AcceptanceDecision {
    fn plain(accepted: bool, pass: Branch) -> Self {
        Self {
            accepted,
            branch: if accepted { pass } else { Branch::Rejected },
            js_draft_to_centroid: None,
            max_js_head_to_centroid: None,
            mean_js_head_to_centroid: None,
        }
    }
}

/// Softmax of the mean head logits (not the mean of head probabilities).
pub fn centroid(samples: &HeadSampleSet) -> Result<ProbDist> {
    math::softmax(&math::mean_logits(&samples.logits)?)
}

pub fn naive_match(draft: &DraftToken, samples: &HeadSampleSet) -> AcceptanceDecision {
    AcceptanceDecision::plain(samples.argmax_tokens.contains(&draft.token_id), Branch::NaivePass)
}

/// JS divergences against the centroid `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsScores {
    pub draft: f64,
    pub max_head: f64,
    pub mean_head: f64,
}

impl JsScores {
    pub fn compute(draft: &DraftToken, samples: &HeadSampleSet, c: &ProbDist) -> Result<Self> {
        let draft_js = math::js_divergence(&draft.dist, c)?;
        let mut max_head = 0.0f64;
        let mut total = 0.0;
        for p in &samples.dists {
            let js = math::js_divergence(p, c)?;
            max_head = max_head.max(js);
            total += js;
        }
        Ok(Self {
            draft: draft_js,
            max_head,
            mean_head: total / samples.k() as f64,
        })
    }

    /// The boundary case (equality) accepts.
    pub fn passes(&self) -> bool {
        self.draft <= self.max_head
    }
}

pub fn js_criterion(draft: &DraftToken, samples: &HeadSampleSet, c: &ProbDist) -> Result<bool> {
    Ok(JsScores::compute(draft, samples, c)?.passes())
}

pub fn majority_criterion(draft: &DraftToken, samples: &HeadSampleSet, rule: MajorityRule) -> bool {
    let (token, count, unique) = plurality(&samples.argmax_tokens);
    if token != draft.token_id {
        return false;
    }
    match rule {
        MajorityRule::Plurality => unique,
        MajorityRule::Strict => 2 * count > samples.k(),
    }
}

/// JS test first; the majority vote is consulted only if it fails.
pub fn dropmatch_accept(draft: &DraftToken, samples: &HeadSampleSet, rule: MajorityRule) -> Result<AcceptanceDecision> {
    dropmatch_accept_with(draft, samples, |d, s| majority_criterion(d, s, rule))
}

/// [`dropmatch_accept`] with the majority fallback supplied by the caller,
/// e.g. to count how often it is reached.
pub fn dropmatch_accept_with<F>(draft: &DraftToken, samples: &HeadSampleSet, majority: F) -> Result<AcceptanceDecision>
where
    F: FnOnce(&DraftToken, &HeadSampleSet) -> bool,
{
    let c = centroid(samples)?;
    let scores = JsScores::compute(draft, samples, &c)?;
    let branch = if scores.passes() {
        Branch::JsPass
    } else if majority(draft, samples) {
        Branch::MajorityPass
    } else {
        Branch::Rejected
    };
    Ok(AcceptanceDecision {
        accepted: branch != Branch::Rejected,
        branch,
        js_draft_to_centroid: Some(scores.draft),
        max_js_head_to_centroid: Some(scores.max_head),
        mean_js_head_to_centroid: Some(scores.mean_head),
    })
}

/// Greedy exact match against the deterministic target distribution.
pub fn greedy_match(draft: &DraftToken, target: &ProbDist) -> AcceptanceDecision {
    AcceptanceDecision::plain(target.argmax() == draft.token_id, Branch::LosslessPass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LosslessOutcome {
    pub accepted: bool,
    pub replacement: Option<usize>,
}

/// Rejection-sampling acceptance.
///
/// Accepts with probability `min(1, p_target(y) / p_draft(y))`; on rejection
/// the replacement is drawn from `normalize(max(0, p_target - p_draft))`.
/// In greedy mode this reduces to exact match against `argmax(p_target)`.
pub fn lossless_accept<R: Rng + ?Sized>(
    draft: &DraftToken,
    target: &ProbDist,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<LosslessOutcome> {
    if draft.dist.len() != target.len() {
        return Err(Error::input(format!(
            "draft vocabulary {} does not match target vocabulary {}",
            draft.dist.len(),
            target.len()
        )));
    }
    if mode == DecodeMode::Greedy {
        let best = target.argmax();
        return Ok(if best == draft.token_id {
            LosslessOutcome {
                accepted: true,
                replacement: None,
            }
        } else {
            LosslessOutcome {
                accepted: false,
                replacement: Some(best),
            }
        });
    }

    let y = draft.token_id;
    let (pt, pd) = (target.prob(y), draft.dist.prob(y));
    let ratio = if pd > 0.0 {
        (pt / pd).min(1.0)
    } else if pt > 0.0 {
        1.0
    } else {
        0.0
    };
    let u: f64 = rng.random();
    if u < ratio {
        return Ok(LosslessOutcome {
            accepted: true,
            replacement: None,
        });
    }
    let residual: Vec<f64> = target
        .as_slice()
        .iter()
        .zip(draft.dist.as_slice())
        .map(|(t, d)| (t - d).max(0.0))
        .collect();
    let v: f64 = rng.random();
    let replacement = match ProbDist::from_weights(residual) {
        Ok(r) => r.sample_with(v),
        // Empty residual only when target == draft, where rejection has
        // probability zero; fall back to the target itself.
        Err(_) => target.sample_with(v),
    };
    Ok(LosslessOutcome {
        accepted: false,
        replacement: Some(replacement),
    })
}
