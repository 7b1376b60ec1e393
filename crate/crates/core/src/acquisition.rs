//! Acquisition scores for binary classifiers.
//!
//! All four kinds are monotone transforms of `|p1 - 0.5|`, so an exhaustive
//! argmax picks the same item under each. They differ only where the score
//! magnitude matters, e.g. as a bandit reward.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::classifier::BinaryClassifier;
use crate::corpus::Item;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AcquisitionError {
    #[error("invalid probability pair ({0}, {1})")]
    InvalidProba(f64, f64),
    #[error("every candidate is excluded")]
    NoCandidate,
    #[error(transparent)]
    Model(#[from] crate::classifier::ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    #[default]
    ExpEntropy,
    Entropy,
    LeastConfidence,
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    pub gamma: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            kind: AcquisitionKind::ExpEntropy,
            gamma: 4.0,
        }
    }
}

/// Binary entropy in nats, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    fn plogp(p: f64) -> f64 {
        if p <= 0.0 {
            0.0
        } else {
            p * p.ln()
        }
    }
    -(plogp(p) + plogp(1.0 - p))
}

impl AcquisitionConfig {
    pub fn exp_entropy(gamma: f64) -> Self {
        Self {
            kind: AcquisitionKind::ExpEntropy,
            gamma,
        }
    }

    pub fn of_kind(kind: AcquisitionKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn score(&self, proba: (f64, f64)) -> Result<f64, AcquisitionError> {
        let (p0, p1) = proba;
        let valid = (0.0..=1.0).contains(&p0) && (0.0..=1.0).contains(&p1) && (p0 + p1 - 1.0).abs() <= 1e-9;
        if !valid {
            return Err(AcquisitionError::InvalidProba(p0, p1));
        }
        Ok(match self.kind {
            AcquisitionKind::ExpEntropy => (self.gamma * binary_entropy(p1)).exp(),
            AcquisitionKind::Entropy => binary_entropy(p1),
            AcquisitionKind::LeastConfidence => 1.0 - p0.max(p1),
            AcquisitionKind::Margin => -(p1 - p0).abs(),
        })
    }

    /// Largest attainable score (at `p1 = 0.5`).
    pub fn max_score(&self) -> f64 {
        match self.kind {
            AcquisitionKind::ExpEntropy => 2f64.powf(self.gamma),
            AcquisitionKind::Entropy => std::f64::consts::LN_2,
            AcquisitionKind::LeastConfidence => 0.5,
            AcquisitionKind::Margin => 0.0,
        }
    }

    /// Map a score into `[0, 1]` for use as a bandit reward.
    ///
    /// Exponential entropy is divided by `2^gamma`; the bounded kinds are
    /// affinely mapped from their natural range.
    pub fn to_reward(&self, score: f64) -> f64 {
        let r = match self.kind {
            AcquisitionKind::ExpEntropy => score / self.max_score(),
            AcquisitionKind::Entropy => score / std::f64::consts::LN_2,
            AcquisitionKind::LeastConfidence => score / 0.5,
            AcquisitionKind::Margin => score + 1.0,
        };
        r.clamp(0.0, 1.0)
    }
}

/// Whether `(score, id)` beats the incumbent: higher score, then smaller id.
pub fn better(score: f64, id: &str, best: Option<(f64, &str)>) -> bool {
    match best {
        None => true,
        Some((s, bid)) => score > s || (score == s && id < bid),
    }
}

/// The non-excluded candidate with the highest score.
pub fn argmax_item<'a>(
    cfg: &AcquisitionConfig,
    model: &BinaryClassifier,
    candidates: &'a [Item],
    exclude: &HashSet<String>,
) -> Result<(&'a Item, f64), AcquisitionError> {
    let mut best: Option<(&Item, f64)> = None;
    for item in candidates.iter().filter(|it| !exclude.contains(&it.id)) {
        let s = cfg.score(model.predict_proba(&item.features)?)?;
        if better(s, &item.id, best.map(|(b, bs)| (bs, b.id.as_str()))) {
            best = Some((item, s));
        }
    }
    best.ok_or(AcquisitionError::NoCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KINDS: [AcquisitionKind; 4] = [
        AcquisitionKind::ExpEntropy,
        AcquisitionKind::Entropy,
        AcquisitionKind::LeastConfidence,
        AcquisitionKind::Margin,
    ];

    fn s(kind: AcquisitionKind, p1: f64) -> f64 {
        AcquisitionConfig::of_kind(kind).score((1.0 - p1, p1)).unwrap()
    }

    #[test]
    fn exp_entropy_reference_values() {
        let cfg = AcquisitionConfig::default();
        assert!((cfg.score((0.5, 0.5)).unwrap() - 16.0).abs() < 1e-9);
        assert_eq!(cfg.score((1.0, 0.0)).unwrap(), 1.0);
        assert_eq!(cfg.score((0.0, 1.0)).unwrap(), 1.0);
        // H(0.9) = 0.325083 nats; exp(4 * 0.325083) = 3.6703
        let v = cfg.score((0.1, 0.9)).unwrap();
        assert!((binary_entropy(0.9) - 0.325_083).abs() < 1e-6);
        assert!((v - 3.6703).abs() < 1e-3, "{v}");
    }

    #[test]
    fn other_kinds() {
        assert!((s(AcquisitionKind::Entropy, 0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(s(AcquisitionKind::LeastConfidence, 0.8), 1.0 - 0.8);
        assert!((s(AcquisitionKind::Margin, 0.8) + 0.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_pairs() {
        let cfg = AcquisitionConfig::default();
        for pair in [(0.3, 0.3), (-0.1, 1.1), (f64::NAN, 0.5)] {
            assert!(matches!(cfg.score(pair), Err(AcquisitionError::InvalidProba(..))));
        }
    }

    #[test]
    fn rewards_stay_in_unit_interval() {
        for kind in KINDS {
            let cfg = AcquisitionConfig::of_kind(kind);
            for i in 0..=100 {
                let p = i as f64 / 100.0;
                let r = cfg.to_reward(cfg.score((1.0 - p, p)).unwrap());
                assert!((0.0..=1.0).contains(&r));
            }
            assert!((cfg.to_reward(cfg.max_score()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tie_rule() {
        assert!(better(1.0, "a", Some((1.0, "b"))));
        assert!(!better(1.0, "c", Some((1.0, "b"))));
        assert!(better(2.0, "z", Some((1.0, "a"))));
    }

    proptest! {
        #[test]
        fn symmetric(p in 0.0f64..=1.0) {
            for kind in KINDS {
                let a = s(kind, p);
                let b = s(kind, 1.0 - p);
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn exp_entropy_monotone_below_half(p in 0.0f64..0.4999, dp in 1e-4f64..0.5) {
            let q = (p + dp).min(0.5);
            prop_assume!(q > p);
            prop_assert!(s(AcquisitionKind::ExpEntropy, p) < s(AcquisitionKind::ExpEntropy, q));
        }

        #[test]
        fn ranges(p in 0.0f64..=1.0) {
            let e = s(AcquisitionKind::ExpEntropy, p);
            prop_assert!((1.0..=16.0 + 1e-12).contains(&e));
            let h = s(AcquisitionKind::Entropy, p);
            prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&h));
        }
    }
}
