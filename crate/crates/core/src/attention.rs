//! Local attention over temporal scales: prediction confidence, scale
//! dominance, and their normalized combination.

use crate::error::{Error, Result};
use crate::numkernel::{negative_entropy, Real};

/// Tolerance on the sum of an emitted weight vector.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;
const FALLBACK_THRESHOLD: f64 = 1e-12;

/// `tanh(1 + C)` with `C = Σ p ln p / ln K`, so the result lies in
/// `[0, tanh(1)]`.
pub fn confidence_weight<T: Real>(local_probs: &[T]) -> Result<f64> {
    let k = local_probs.len();
    if k < 2 {
        return Err(Error::DegenerateClasses(k));
    }
    let sum: f64 = local_probs.iter().map(|p| p.as_f64()).sum();
    if (sum - 1.0).abs() > 1e-5 || local_probs.iter().any(|p| p.as_f64() < 0.0) {
        return Err(Error::Normalization { sum });
    }
    let normalized = (negative_entropy(local_probs) / (k as f64).ln()).clamp(-1.0, 0.0);
    Ok((1.0 + normalized).tanh())
}

/// Softmax weights over temporal scales, shared by every domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceWeights(pub Vec<f64>);

impl DominanceWeights {
    pub fn uniform(scales: usize) -> Self {
        Self(vec![1.0 / scales as f64; scales])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `softmax_r |d_global − d_local^(r)|`
pub fn dominance_weights(d_global: f64, d_local: &[f64]) -> Result<DominanceWeights> {
    if d_local.is_empty() {
        return Err(Error::Config("dominance weights need at least one scale".into()));
    }
    if !d_global.is_finite() || d_local.iter().any(|d| !d.is_finite()) {
        return Err(Error::Data("non-finite discrepancy".into()));
    }
    let disparities: Vec<f64> = d_local.iter().map(|&d| (d_global - d).abs()).collect();
    Ok(DominanceWeights(softmax_f64(&disparities)))
}

pub(crate) fn softmax_f64(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionRule {
    /// Confidence × dominance, renormalized.
    Source,
    /// Dominance only.
    Target,
    /// Plain sum over scales (weight 1 each, not normalized).
    Additive,
    /// Externally fixed normalized weights (ablations).
    Fixed,
}

/// Per-scale aggregation weights for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub weights: Vec<f64>,
    pub rule: AttentionRule,
}

impl AttentionWeights {
    pub fn additive(scales: usize) -> Self {
        Self {
            weights: vec![1.0; scales],
            rule: AttentionRule::Additive,
        }
    }

    pub fn uniform(scales: usize) -> Self {
        Self {
            weights: vec![1.0 / scales as f64; scales],
            rule: AttentionRule::Fixed,
        }
    }

    pub fn one_hot(scales: usize, index: usize) -> Self {
        let mut weights = vec![0.0; scales];
        weights[index] = 1.0;
        Self {
            weights,
            rule: AttentionRule::Fixed,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Whether the weights satisfy the normalization contract of their rule.
    pub fn is_normalized(&self) -> bool {
        self.rule == AttentionRule::Additive
            || ((self.sum() - 1.0).abs() <= NORMALIZATION_TOLERANCE
                && self.weights.iter().all(|&w| w >= 0.0))
    }
}

/// Source-domain weights `w_C · w_dom / Σ_r (w_C · w_dom)`; falls back to
/// `w_dom` when every confidence is zero.
pub fn combine_weights(confidence: &[f64], dominance: &DominanceWeights) -> Result<AttentionWeights> {
    if confidence.len() != dominance.0.len() {
        return Err(Error::shape(
            "confidence vs dominance scales",
            dominance.0.len(),
            confidence.len(),
        ));
    }
    if confidence.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(Error::Data(format!("invalid confidence weights {confidence:?}")));
    }
    let product: Vec<f64> = confidence.iter().zip(&dominance.0).map(|(c, d)| c * d).collect();
    let sum: f64 = product.iter().sum();
    let weights = if sum < FALLBACK_THRESHOLD {
        dominance.0.clone()
    } else {
        product.into_iter().map(|p| p / sum).collect()
    };
    Ok(AttentionWeights {
        weights,
        rule: AttentionRule::Source,
    })
}

/// Target-domain weights: the dominance weights verbatim.
pub fn target_weights(dominance: &DominanceWeights) -> AttentionWeights {
    AttentionWeights {
        weights: dominance.0.clone(),
        rule: AttentionRule::Target,
    }
}

/// Confidence-only weights (dominance ablated), uniform when all are zero.
pub fn normalize_confidence(confidence: &[f64]) -> AttentionWeights {
    let sum: f64 = confidence.iter().sum();
    let weights = if sum < FALLBACK_THRESHOLD {
        vec![1.0 / confidence.len() as f64; confidence.len()]
    } else {
        confidence.iter().map(|c| c / sum).collect()
    };
    AttentionWeights {
        weights,
        rule: AttentionRule::Fixed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn confidence_extremes() {
        assert_abs_diff_eq!(confidence_weight(&[0.5f64, 0.5]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            confidence_weight(&[1.0f64, 0.0]).unwrap(),
            1.0f64.tanh(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(confidence_weight(&[0.0f32, 1.0]).unwrap(), 0.76159, epsilon = 1e-5);
    }

    #[test]
    fn confidence_direct_evaluation() {
        // entropy of [0.9, 0.1] = 0.325083 nats; / ln 2 = 0.468996
        let h: f64 = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert_abs_diff_eq!(h, 0.3251, epsilon = 1e-4);
        let expected = (1.0 - h / 2f64.ln()).tanh();
        let w = confidence_weight(&[0.9f64, 0.1]).unwrap();
        assert_abs_diff_eq!(w, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(w, 0.4862, epsilon = 1e-3);
    }

    #[test]
    fn confidence_rejects_bad_input() {
        assert!(matches!(
            confidence_weight(&[1.0f64]).unwrap_err(),
            Error::DegenerateClasses(1)
        ));
        assert!(confidence_weight(&[0.5f64, 0.6]).is_err());
    }

    #[test]
    fn dominance_examples() {
        let w = dominance_weights(0.7, &[0.7, 0.7, 0.7]).unwrap();
        for v in w.as_slice() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
        // disparities [ln 2, 0]
        let w = dominance_weights(2f64.ln(), &[0.0, 2f64.ln()]).unwrap();
        assert_abs_diff_eq!(w.0[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.0[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(dominance_weights(1.0, &[5.0]).unwrap().0, vec![1.0]);
        assert!(matches!(
            dominance_weights(1.0, &[]).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn combine_examples() {
        let dom = DominanceWeights(vec![0.2, 0.5, 0.3]);
        let w = combine_weights(&[0.4, 0.4, 0.4], &dom).unwrap();
        for (a, b) in w.weights.iter().zip(&dom.0) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let w = combine_weights(&[0.76, 0.0], &DominanceWeights(vec![0.5, 0.5])).unwrap();
        assert_eq!(w.weights, vec![1.0, 0.0]);
        let w = combine_weights(&[0.0, 0.0, 0.0], &dom).unwrap();
        assert_eq!(w.weights, dom.0);
        assert!(combine_weights(&[0.1], &dom).is_err());
    }

    #[test]
    fn target_examples() {
        assert_eq!(target_weights(&DominanceWeights(vec![0.7, 0.3])).weights, vec![0.7, 0.3]);
        assert_eq!(
            target_weights(&DominanceWeights::uniform(4)).weights,
            vec![0.25; 4]
        );
        let t = target_weights(&DominanceWeights(vec![1.0]));
        assert_eq!(t.weights, vec![1.0]);
        assert_eq!(t.rule, AttentionRule::Target);
    }

    fn prob_vector() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..10).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-9).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn confidence_is_in_range_and_permutation_invariant(p in prob_vector()) {
            let w = confidence_weight(&p).unwrap();
            prop_assert!((0.0..=1.0f64.tanh() + 1e-12).contains(&w));
            let mut rev = p.clone();
            rev.reverse();
            prop_assert!((confidence_weight(&rev).unwrap() - w).abs() < 1e-12);
        }

        #[test]
        fn confidence_decreases_with_entropy(a in 0.5f64..1.0, b in 0.5f64..1.0) {
            // for two classes, entropy decreases as the max prob grows
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(confidence_weight(&[lo, 1.0 - lo]).unwrap() <= confidence_weight(&[hi, 1.0 - hi]).unwrap() + 1e-12);
        }

        #[test]
        fn dominance_is_shift_invariant_and_equivariant(
            d_local in prop::collection::vec(0.0f64..5.0, 1..8),
            shift in 0.0f64..3.0,
        ) {
            // d_global below every local term makes disparities d_local - d_global
            let w = dominance_weights(0.0, &d_local).unwrap();
            let s: f64 = w.0.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            let shifted: Vec<f64> = d_local.iter().map(|d| d + shift).collect();
            let ws = dominance_weights(0.0, &shifted).unwrap();
            for (a, b) in w.0.iter().zip(&ws.0) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let mut rev = d_local.clone();
            rev.reverse();
            let wr = dominance_weights(0.0, &rev).unwrap();
            for (a, b) in w.0.iter().zip(wr.0.iter().rev()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn combined_weights_are_normalized(
            conf in prop::collection::vec(0.0f64..0.77, 1..8),
            d in prop::collection::vec(0.0f64..4.0, 8),
        ) {
            let dom = dominance_weights(1.0, &d[..conf.len()]).unwrap();
            let w = combine_weights(&conf, &dom).unwrap();
            prop_assert!(w.is_normalized());
        }
    }
}
