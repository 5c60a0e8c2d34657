//! Dense numerical primitives: logits, probability vectors, softmax and the
//! KL / Jensen-Shannon divergences. All divergences are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Divisor probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on `|sum - 1|` for a [`ProbDist`].
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Unnormalised scores over a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("logit {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// A probability vector over a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    /// Validates entries are finite, non-negative and sum to one within
    /// [`NORM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, NORM_TOLERANCE)
    }

    /// Like [`ProbDist::new`] with a caller-chosen normalisation tolerance.
    /// Accepted vectors are renormalised so the stored value always meets
    /// [`NORM_TOLERANCE`].
    pub fn with_tolerance(probs: Vec<f64>, tolerance: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::input("empty probability vector"));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::input(format!(
                "probability {i} is negative or not finite ({})",
                probs[i]
            )));
        }
        let total = sum(&probs);
        if (total - 1.0).abs() > tolerance {
            return Err(Error::input(format!(
                "probabilities sum to {total}, expected 1 within {tolerance:e}"
            )));
        }
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Ok(Self(probs.into_iter().map(|p| p / total).collect()));
        }
        Ok(Self(probs))
    }

    /// Normalises non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::input(format!("weight {i} is negative or not finite")));
        }
        let total = sum(&weights);
        if total <= 0.0 {
            return Err(Error::input("weights sum to zero"));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(v: usize) -> Self {
        assert!(v > 0, "uniform distribution over an empty vocabulary");
        Self(vec![1.0 / v as f64; v])
    }

    pub fn one_hot(v: usize, token: usize) -> Self {
        assert!(token < v, "token {token} out of range for vocabulary {v}");
        let mut probs = vec![0.0; v];
        probs[token] = 1.0;
        Self(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prob(&self, token: usize) -> f64 {
        self.0[token]
    }

    /// Lowest index among the maximal entries.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Inverse-CDF sampling from a uniform draw `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for ProbDist {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        ProbDist::new(probs).map_err(serde::de::Error::custom)
    }
}

/// Lowest index of the maximum; NaNs never win.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Neumaier-compensated sum.
pub fn sum(values: &[f64]) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for &v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Max-shifted softmax.
pub fn softmax(logits: &LogitVector) -> Result<ProbDist> {
    let l = logits.as_slice();
    if l.len() < 2 {
        return Err(Error::input(format!(
            "softmax needs at least 2 logits, got {}",
            l.len()
        )));
    }
    if let Some(i) = l.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("logit {i} is not finite")));
    }
    Ok(softmax_unchecked(l))
}

pub(crate) fn softmax_unchecked(l: &[f64]) -> ProbDist {
    let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = l.iter().map(|&v| (v - max).exp()).collect();
    let total = sum(&exps);
    ProbDist(exps.into_iter().map(|e| e / total).collect())
}

fn check_lengths(p: &ProbDist, q: &ProbDist) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::input(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `KL(p || q)` in nats. Terms with `p_i = 0` contribute 0; `q_i` is floored
/// at [`PROB_FLOOR`].
pub fn kl_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    check_lengths(p, q)?;
    let terms: Vec<f64> = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(&pi, &qi)| kl_term(pi, qi))
        .collect();
    Ok(sum(&terms).max(0.0))
}

#[inline]
fn kl_term(pi: f64, qi: f64) -> f64 {
    if pi == 0.0 {
        0.0
    } else {
        pi * (pi / qi.max(PROB_FLOOR)).ln()
    }
}

/// Jensen-Shannon divergence `0.5 KL(p||m) + 0.5 KL(q||m)`, `m = (p + q) / 2`.
///
/// Each coordinate's two terms are formed symmetrically, so the result is
/// bit-identical under swapping the arguments.
pub fn js_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    check_lengths(p, q)?;
    Ok(js_unchecked(p.as_slice(), q.as_slice()))
}

pub(crate) fn js_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let terms: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let mi = 0.5 * (pi + qi);
            0.5 * (kl_term(pi, mi) + kl_term(qi, mi))
        })
        .collect();
    sum(&terms).max(0.0)
}

/// Elementwise arithmetic mean of a set of logit vectors.
pub fn mean_logits(set: &[LogitVector]) -> Result<LogitVector> {
    let first = set.first().ok_or_else(|| Error::input("mean of an empty logit set"))?;
    let v = first.len();
    if let Some(i) = set.iter().position(|l| l.len() != v) {
        return Err(Error::input(format!(
            "logit vector {i} has length {}, expected {v}",
            set[i].len()
        )));
    }
    let k = set.len() as f64;
    let mut acc = vec![0.0; v];
    for l in set {
        for (a, &x) in acc.iter_mut().zip(l.as_slice()) {
            *a += x;
        }
    }
    Ok(LogitVector::from_finite(acc.into_iter().map(|a| a / k).collect()))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn logits(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    fn dist(v: &[f64]) -> ProbDist {
        ProbDist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax(&logits(&[0.0; 4])).unwrap();
        for &x in p.as_slice() {
            assert_abs_diff_eq!(x, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_ratio_three() {
        for c in [-50.0, 0.0, 3.5, 700.0] {
            let p = softmax(&logits(&[c, c + 3f64.ln()])).unwrap();
            assert_abs_diff_eq!(p.prob(0), 0.25, epsilon = 1e-12);
            assert_abs_diff_eq!(p.prob(1), 0.75, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_matches_high_precision_reference() {
        // 40-digit reference values
        let expected = [
            0.090_030_573_170_380_457_998_022_1,
            0.244_728_471_054_797_652_472_959_6,
            0.665_240_955_774_821_889_529_018_3,
        ];
        let p = softmax(&logits(&[1.0, 2.0, 3.0])).unwrap();
        for (got, want) in p.as_slice().iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(softmax(&LogitVector(vec![0.0, f64::NAN])).is_err());
        assert!(softmax(&logits(&[1.0])).is_err());
        assert!(LogitVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.25, 0.75]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let hand = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(kl_divergence(&p, &q).unwrap(), hand, epsilon = 1e-15);
        assert_abs_diff_eq!(
            kl_divergence(&p, &q).unwrap(),
            0.143_841_036_225_890_463_719_609_5,
            epsilon = 1e-12
        );
        let kl = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(kl, LN_2, epsilon = 1e-15);
    }

    #[test]
    fn kl_floors_zero_divisor() {
        let kl = kl_divergence(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap();
        let want = 0.5 * (0.5f64 / 1.0).ln() + 0.5 * (0.5 / PROB_FLOOR).ln();
        assert_abs_diff_eq!(kl, want, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.2, 0.3, 0.5]);
        assert!(kl_divergence(&p, &q).is_err());
        assert!(js_divergence(&p, &q).is_err());
    }

    #[test]
    fn js_examples() {
        let p = dist(&[0.5, 0.5]);
        assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
        let disjoint = js_divergence(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(disjoint, LN_2, epsilon = 1e-15);
        let js = js_divergence(&p, &dist(&[0.25, 0.75])).unwrap();
        assert_abs_diff_eq!(js, 0.033_822_075_568_605_230_000_373_6, epsilon = 1e-12);
    }

    #[test]
    fn mean_logits_examples() {
        let m = mean_logits(&[logits(&[1.5, -2.0])]).unwrap();
        assert_eq!(m.as_slice(), &[1.5, -2.0]);
        let m = mean_logits(&[logits(&[0.0, 2.0]), logits(&[2.0, 0.0])]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 1.0]);
        assert!(mean_logits(&[]).is_err());
        assert!(mean_logits(&[logits(&[0.0, 1.0]), logits(&[0.0])]).is_err());
    }

    #[test]
    fn mean_logits_matches_per_coordinate_loop() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11, crate::rng::Domain::User, 0, 0);
        let set: Vec<LogitVector> = (0..5)
            .map(|_| logits(&(0..40).map(|_| rng.random_range(-8.0..8.0)).collect::<Vec<_>>()))
            .collect();
        let mean = mean_logits(&set).unwrap();
        for j in 0..40 {
            let mut s = 0.0;
            for l in &set {
                s += l.as_slice()[j];
            }
            assert_abs_diff_eq!(mean.as_slice()[j], s / 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn prob_dist_validation() {
        assert!(ProbDist::new(vec![0.5, 0.4]).is_err());
        assert!(ProbDist::new(vec![1.1, -0.1]).is_err());
        assert!(ProbDist::new(vec![]).is_err());
        let d = ProbDist::with_tolerance(vec![0.5, 0.5 + 5e-7], 1e-6).unwrap();
        assert_abs_diff_eq!(sum(d.as_slice()), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn compensated_sum_is_tight() {
        let v = 1 << 16;
        let p = ProbDist::uniform(v);
        assert_abs_diff_eq!(sum(p.as_slice()), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sampling_by_inverse_cdf() {
        let d = dist(&[0.2, 0.0, 0.8]);
        assert_eq!(d.sample_with(0.0), 0);
        assert_eq!(d.sample_with(0.19), 0);
        assert_eq!(d.sample_with(0.2), 2);
        assert_eq!(d.sample_with(0.999_999_999), 2);
    }

    fn arb_dist(v: usize) -> impl Strategy<Value = ProbDist> {
        prop::collection::vec(0.0f64..1.0, v)
            .prop_filter("non-zero mass", |w| w.iter().sum::<f64>() > 1e-6)
            .prop_map(|w| ProbDist::from_weights(w).unwrap())
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(
            l in prop::collection::vec(-30.0f64..30.0, 2..64),
            c in -100.0f64..100.0,
        ) {
            let base = softmax(&logits(&l)).unwrap();
            let shifted: Vec<f64> = l.iter().map(|x| x + c).collect();
            let moved = softmax(&logits(&shifted)).unwrap();
            for (a, b) in base.as_slice().iter().zip(moved.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert_eq!(base.argmax(), argmax(&l));
        }

        #[test]
        fn kl_nonnegative((p, q) in (2usize..40).prop_flat_map(|v| (arb_dist(v), arb_dist(v)))) {
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
        }

        #[test]
        fn js_symmetric_and_bounded((p, q) in (2usize..40).prop_flat_map(|v| (arb_dist(v), arb_dist(v)))) {
            let pq = js_divergence(&p, &q).unwrap();
            let qp = js_divergence(&q, &p).unwrap();
            prop_assert!((pq - qp).abs() < 1e-12);
            prop_assert!(pq >= 0.0);
            prop_assert!(pq <= LN_2 + 1e-12);
        }
    }
}
