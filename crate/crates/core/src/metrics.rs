//! Run statistics: acceptance length, head agreement, JS spread and the
//! share of time spent in the sampled head.

use serde::{Deserialize, Serialize};

use crate::acceptance::{AcceptanceDecision, Branch};
use crate::engine::{DecodeOutput, StepRecord};
use crate::error::{Error, Result};
use crate::mc_head::{HeadAgreement, HeadSampleSet};

/// `(tau_with_bonus, tau_draft_only)`.
pub fn mean_acceptance_length(records: &[StepRecord]) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::input("acceptance length of an empty record list"));
    }
    let n = records.len() as f64;
    let accepted: usize = records.iter().map(|r| r.accepted_count).sum();
    let draft_only = accepted as f64 / n;
    Ok(((accepted + records.len()) as f64 / n, draft_only))
}

/// Histogram of plurality sizes and the mean deterministic probability of
/// the plurality token at each size. Index `i` holds plurality size `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub histogram: Vec<u64>,
    pub mean_prob: Vec<Option<f64>>,
}

impl AgreementStats {
    pub fn positions(&self) -> u64 {
        self.histogram.iter().sum()
    }

    /// Fraction of positions where all heads agree; `None` without data.
    pub fn unanimity_ratio(&self) -> Option<f64> {
        let n = self.positions();
        (n > 0).then(|| *self.histogram.last().unwrap_or(&0) as f64 / n as f64)
    }
}

pub fn agreement_stats<'a, I>(positions: I) -> Result<AgreementStats>
where
    I: IntoIterator<Item = &'a HeadAgreement>,
{
    let mut acc = AgreementAcc::default();
    for a in positions {
        acc.add(a)?;
    }
    Ok(acc.finish())
}

/// [`agreement_stats`] straight from sample sets.
pub fn agreement_stats_of(samples: &[HeadSampleSet]) -> Result<AgreementStats> {
    let agreements: Vec<HeadAgreement> = samples.iter().map(HeadAgreement::of).collect();
    agreement_stats(&agreements)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct AgreementAcc {
    counts: Vec<u64>,
    prob_sums: Vec<f64>,
}

impl AgreementAcc {
    fn add(&mut self, a: &HeadAgreement) -> Result<()> {
        if self.counts.is_empty() {
            self.counts = vec![0; a.k];
            self.prob_sums = vec![0.0; a.k];
        } else if self.counts.len() != a.k {
            return Err(Error::input(format!(
                "mixed head counts: {} and {}",
                self.counts.len(),
                a.k
            )));
        }
        let i = a.plurality_size - 1;
        self.counts[i] += 1;
        self.prob_sums[i] += a.plurality_prob;
        Ok(())
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        if other.counts.is_empty() {
            return Ok(());
        }
        if self.counts.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        if self.counts.len() != other.counts.len() {
            return Err(Error::input("cannot merge statistics with different head counts"));
        }
        for i in 0..self.counts.len() {
            self.counts[i] += other.counts[i];
            self.prob_sums[i] += other.prob_sums[i];
        }
        Ok(())
    }

    fn finish(&self) -> AgreementStats {
        AgreementStats {
            histogram: self.counts.clone(),
            mean_prob: self
                .counts
                .iter()
                .zip(&self.prob_sums)
                .map(|(&c, &s)| (c > 0).then(|| s / c as f64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsMeans {
    pub count: u64,
    /// Mean JS(centroid, draft).
    pub centroid_draft: f64,
    /// Mean over positions of the head-averaged JS(centroid, head).
    pub centroid_heads: f64,
}

/// JS spread of accepted positions, split by which test accepted them:
/// the JS test (dispersed heads) or the majority fallback (concentrated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsStats {
    pub dispersed: Option<JsMeans>,
    pub concentrated: Option<JsMeans>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct JsAcc {
    count: u64,
    draft: f64,
    heads: f64,
}

impl JsAcc {
    fn merge(&mut self, o: &Self) {
        self.count += o.count;
        self.draft += o.draft;
        self.heads += o.heads;
    }

    fn finish(&self) -> Option<JsMeans> {
        (self.count > 0).then(|| JsMeans {
            count: self.count,
            centroid_draft: self.draft / self.count as f64,
            centroid_heads: self.heads / self.count as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct JsSplit {
    dispersed: JsAcc,
    concentrated: JsAcc,
}

impl JsSplit {
    fn add(&mut self, d: &AcceptanceDecision) {
        let (Some(draft), Some(heads)) = (d.js_draft_to_centroid, d.mean_js_head_to_centroid) else {
            return;
        };
        let slot = match d.branch {
            Branch::JsPass => &mut self.dispersed,
            Branch::MajorityPass => &mut self.concentrated,
            _ => return,
        };
        slot.count += 1;
        slot.draft += draft;
        slot.heads += heads;
    }

    fn finish(&self) -> JsStats {
        JsStats {
            dispersed: self.dispersed.finish(),
            concentrated: self.concentrated.finish(),
        }
    }
}

pub fn js_stats<'a, I>(decisions: I) -> JsStats
where
    I: IntoIterator<Item = &'a AcceptanceDecision>,
{
    let mut split = JsSplit::default();
    for d in decisions {
        split.add(d);
    }
    split.finish()
}

/// `sum(head time) / sum(total time)`; 0 when nothing was timed.
pub fn overhead_report(records: &[StepRecord]) -> f64 {
    let total: u64 = records.iter().map(|r| r.wall_time_total).sum();
    let head: u64 = records.iter().map(|r| r.wall_time_head).sum();
    if total == 0 {
        0.0
    } else {
        head as f64 / total as f64
    }
}

/// Head-time fractions of a DropMatch run and a greedy exact-match run on
/// the same seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadComparison {
    pub dropmatch_fraction: f64,
    pub greedy_fraction: f64,
    pub delta: f64,
}

impl OverheadComparison {
    pub fn new(dropmatch: &[StepRecord], greedy: &[StepRecord]) -> Self {
        let dropmatch_fraction = overhead_report(dropmatch);
        let greedy_fraction = overhead_report(greedy);
        Self {
            dropmatch_fraction,
            greedy_fraction,
            delta: dropmatch_fraction - greedy_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub js_pass: u64,
    pub majority_pass: u64,
    pub naive_pass: u64,
    pub lossless_pass: u64,
    pub rejected: u64,
}

impl BranchCounts {
    fn add(&mut self, b: Branch) {
        match b {
            Branch::JsPass => self.js_pass += 1,
            Branch::MajorityPass => self.majority_pass += 1,
            Branch::NaivePass => self.naive_pass += 1,
            Branch::LosslessPass => self.lossless_pass += 1,
            Branch::Rejected => self.rejected += 1,
        }
    }

    fn merge(&mut self, o: &Self) {
        self.js_pass += o.js_pass;
        self.majority_pass += o.majority_pass;
        self.naive_pass += o.naive_pass;
        self.lossless_pass += o.lossless_pass;
        self.rejected += o.rejected;
    }

    pub fn total(&self) -> u64 {
        self.js_pass + self.majority_pass + self.naive_pass + self.lossless_pass + self.rejected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tau_with_bonus: f64,
    pub tau_draft_only: f64,
    pub steps: u64,
    pub tokens_emitted: u64,
    pub tokens_per_second: f64,
    pub head_time_fraction: f64,
    pub agreement_histogram: Vec<u64>,
    pub mean_prob_by_agreement: Vec<Option<f64>>,
    pub unanimity_ratio: Option<f64>,
    pub js_stats: JsStats,
    pub evaluated_positions: u64,
    pub acceptance_rate: f64,
    pub branches: BranchCounts,
}

/// Per-stream statistics; merging is associative.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsAccumulator {
    steps: u64,
    accepted: u64,
    tokens_emitted: u64,
    time_total: u64,
    time_head: u64,
    decode_time: u64,
    agreement: AgreementAcc,
    js: JsSplit,
    branches: BranchCounts,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_step(&mut self, r: &StepRecord) -> Result<()> {
        self.steps += 1;
        self.accepted += r.accepted_count as u64;
        self.tokens_emitted += r.emitted as u64;
        self.time_total += r.wall_time_total;
        self.time_head += r.wall_time_head;
        for o in r.evaluated() {
            self.add_decision(&o.decision, o.agreement.as_ref())?;
        }
        Ok(())
    }

    pub fn add_decode(&mut self, out: &DecodeOutput) -> Result<()> {
        for s in &out.steps {
            self.add_step(s)?;
        }
        self.decode_time += out.decode_time;
        Ok(())
    }

    /// Records one evaluated position outside of a step (trace replay).
    pub fn add_decision(&mut self, d: &AcceptanceDecision, agreement: Option<&HeadAgreement>) -> Result<()> {
        self.branches.add(d.branch);
        self.js.add(d);
        if let Some(a) = agreement {
            self.agreement.add(a)?;
        }
        Ok(())
    }

    /// Records a verification round whose positions were added separately.
    pub fn add_round(&mut self, accepted: usize, emitted: usize) {
        self.steps += 1;
        self.accepted += accepted as u64;
        self.tokens_emitted += emitted as u64;
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.steps += other.steps;
        self.accepted += other.accepted;
        self.tokens_emitted += other.tokens_emitted;
        self.time_total += other.time_total;
        self.time_head += other.time_head;
        self.decode_time += other.decode_time;
        self.agreement.merge(&other.agreement)?;
        self.js.dispersed.merge(&other.js.dispersed);
        self.js.concentrated.merge(&other.js.concentrated);
        self.branches.merge(&other.branches);
        Ok(())
    }

    pub fn finish(&self) -> RunSummary {
        let n = self.steps.max(1) as f64;
        let agreement = self.agreement.finish();
        let evaluated = self.branches.total();
        RunSummary {
            tau_with_bonus: if self.steps == 0 {
                0.0
            } else {
                (self.accepted + self.steps) as f64 / n
            },
            tau_draft_only: if self.steps == 0 { 0.0 } else { self.accepted as f64 / n },
            steps: self.steps,
            tokens_emitted: self.tokens_emitted,
            tokens_per_second: if self.decode_time == 0 {
                0.0
            } else {
                self.tokens_emitted as f64 / (self.decode_time as f64 * 1e-9)
            },
            head_time_fraction: if self.time_total == 0 {
                0.0
            } else {
                self.time_head as f64 / self.time_total as f64
            },
            unanimity_ratio: agreement.unanimity_ratio(),
            agreement_histogram: agreement.histogram,
            mean_prob_by_agreement: agreement.mean_prob,
            js_stats: self.js.finish(),
            evaluated_positions: evaluated,
            acceptance_rate: if evaluated == 0 {
                0.0
            } else {
                (evaluated - self.branches.rejected) as f64 / evaluated as f64
            },
            branches: self.branches,
        }
    }
}

/// Summary of a set of decode streams, merged in order.
pub fn summarize(outputs: &[DecodeOutput]) -> Result<RunSummary> {
    let mut total = MetricsAccumulator::new();
    for out in outputs {
        let mut acc = MetricsAccumulator::new();
        acc.add_decode(out)?;
        total.merge(&acc)?;
    }
    Ok(total.finish())
}
