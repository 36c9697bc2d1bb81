//! Rule-based reference-frame classification.
//!
//! Three weighted rules vote:
//!
//! * R1 (bidirectional, weight 2): `betti1_early_mean > 1.0` OR `dual_anchor`;
//! * R2 (centralized): `bos_sink_share ≥ 0.8` AND `|betti0_change| ≤ 0.5`
//!   AND `mean_ref_count ≤ 1.5`;
//! * R3 (distributed): `mean_ref_count > 1.5` OR
//!   (`corr_sign_flip` AND `kl_shape = three_phase`).
//!
//! Absent features never vote: an AND with an absent operand is absent, an
//! OR is evaluated over its present operands. Confidence is the winning
//! weight over the total weight of fired rules; below 0.5, or on a tie, the
//! verdict is inconclusive.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infogeo::{layer_thirds, KlProfile, ProfileShape};
use crate::sinks::{Anchor, SinkReport};
use crate::spectral::{GraphMetric, SignatureTable};
use crate::topology::TopologySummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameType {
    Centralized,
    Distributed,
    Bidirectional,
    Inconclusive,
}

impl FrameType {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::Centralized => "centralized",
            FrameType::Distributed => "distributed",
            FrameType::Bidirectional => "bidirectional",
            FrameType::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub bos_share_min: f64,
    pub betti1_min: f64,
    pub betti0_change_max: f64,
    pub ref_count_split: f64,
    pub bidirectional_weight: f64,
    pub min_confidence: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            bos_share_min: 0.8,
            betti1_min: 1.0,
            betti0_change_max: 0.5,
            ref_count_split: 1.5,
            bidirectional_weight: 2.0,
            min_confidence: 0.5,
        }
    }
}

/// Model-level signature; `None` marks a feature that could not be computed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameFeatures {
    /// Fraction of sink-bearing layers whose dominant sink is position 0.
    pub bos_sink_share: Option<f64>,
    /// First-anchored and last-anchored layers both occur, in disjoint bands.
    pub dual_anchor: Option<bool>,
    /// Late-third minus early-third mean Betti₀ at the operating point.
    pub betti0_change: Option<f64>,
    /// Mean significant H1 count over the early third.
    pub betti1_early_mean: Option<f64>,
    /// Sign of late − early mean H0 persistence.
    pub persistence_trend: Option<i8>,
    pub corr_sign_flip: Option<bool>,
    pub kl_shape: Option<ProfileShape>,
    pub mean_ref_count: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub rule: String,
    pub vote: FrameType,
    pub weight: f64,
    /// `None` when every operand the rule needs is absent.
    pub fired: Option<bool>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameVerdict {
    pub frame_type: FrameType,
    pub confidence: f64,
    pub fired_rules: Vec<RuleTrace>,
}

impl FrameVerdict {
    pub fn is_conclusive(&self) -> bool {
        self.frame_type != FrameType::Inconclusive
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn bands_disjoint(a: &[usize], b: &[usize]) -> bool {
    let (amin, amax) = (a.iter().min(), a.iter().max());
    let (bmin, bmax) = (b.iter().min(), b.iter().max());
    match (amin, amax, bmin, bmax) {
        (Some(&a0), Some(&a1), Some(&b0), Some(&b1)) => a1 < b0 || b1 < a0,
        _ => false,
    }
}

/// Assemble the feature record from whichever module summaries exist.
pub fn extract_features(
    sinks: Option<&SinkReport>,
    topology: Option<&TopologySummary>,
    signature: Option<&SignatureTable>,
    kl: Option<(&KlProfile, f64)>,
) -> Result<FrameFeatures> {
    if sinks.is_none() && topology.is_none() && signature.is_none() && kl.is_none() {
        return Err(Error::InvalidArgument("no module summaries to classify".into()));
    }
    let mut f = FrameFeatures::default();

    if let Some(s) = sinks {
        let mean_ref = mean(s.layers.iter().map(|l| l.ref_count)).unwrap_or(0.0);
        f.mean_ref_count = Some(mean_ref);
        let anchored: Vec<(usize, Anchor)> = s
            .layers
            .iter()
            .filter_map(|l| l.dominant_anchor.map(|a| (l.layer, a)))
            .collect();
        if mean_ref > 0.0 && !anchored.is_empty() {
            let first: Vec<usize> = anchored.iter().filter(|x| x.1 == Anchor::First).map(|x| x.0).collect();
            let last: Vec<usize> = anchored.iter().filter(|x| x.1 == Anchor::Last).map(|x| x.0).collect();
            f.bos_sink_share = Some(first.len() as f64 / anchored.len() as f64);
            f.dual_anchor = Some(bands_disjoint(&first, &last));
        }
    }

    if let Some(t) = topology {
        let (early, _, late) = layer_thirds(t.layers.len());
        let e = &t.layers[early];
        let l = &t.layers[late];
        if let (Some(b0e), Some(b0l)) = (mean(e.iter().map(|x| x.betti0_operating)), mean(l.iter().map(|x| x.betti0_operating))) {
            f.betti0_change = Some(b0l - b0e);
        }
        f.betti1_early_mean = mean(e.iter().map(|x| x.dim1_significant));
        if let (Some(pe), Some(pl)) = (
            mean(e.iter().map(|x| x.mean_dim0_persistence)),
            mean(l.iter().map(|x| x.mean_dim0_persistence)),
        ) {
            f.persistence_trend = Some(crate::infogeo::sign_of(pl - pe));
        }
    }

    if let Some(sig) = signature {
        f.corr_sign_flip = sig.sign_flip(GraphMetric::Centralization).map(|s| s.flip);
    }
    if let Some((profile, percentile)) = kl {
        f.kl_shape = profile.shape_near(percentile);
    }
    Ok(f)
}

fn fmt_opt<T: fmt::Debug>(x: &Option<T>) -> String {
    match x {
        Some(v) => format!("{v:?}"),
        None => "absent".to_string(),
    }
}

/// Three-valued OR over present operands.
fn any_of(xs: &[Option<bool>]) -> Option<bool> {
    let present: Vec<bool> = xs.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().any(|&b| b))
}

/// Three-valued AND; absent if any operand is absent.
fn all_of(xs: &[Option<bool>]) -> Option<bool> {
    xs.iter().copied().collect::<Option<Vec<bool>>>().map(|v| v.iter().all(|&b| b))
}

pub fn classify(f: &FrameFeatures, cfg: &ClassifierConfig) -> FrameVerdict {
    let r1 = any_of(&[f.betti1_early_mean.map(|b| b > cfg.betti1_min), f.dual_anchor]);
    let r2 = all_of(&[
        f.bos_sink_share.map(|s| s >= cfg.bos_share_min),
        f.betti0_change.map(|c| c.abs() <= cfg.betti0_change_max),
        f.mean_ref_count.map(|r| r <= cfg.ref_count_split),
    ]);
    let flip_and_shape = all_of(&[f.corr_sign_flip, f.kl_shape.map(|s| s == ProfileShape::ThreePhase)]);
    let r3 = any_of(&[f.mean_ref_count.map(|r| r > cfg.ref_count_split), flip_and_shape]);

    let trace = vec![
        RuleTrace {
            rule: "R1".into(),
            vote: FrameType::Bidirectional,
            weight: cfg.bidirectional_weight,
            fired: r1,
            detail: format!(
                "betti1_early_mean={} > {} OR dual_anchor={}",
                fmt_opt(&f.betti1_early_mean),
                cfg.betti1_min,
                fmt_opt(&f.dual_anchor)
            ),
        },
        RuleTrace {
            rule: "R2".into(),
            vote: FrameType::Centralized,
            weight: 1.0,
            fired: r2,
            detail: format!(
                "bos_sink_share={} >= {} AND |betti0_change|={} <= {} AND mean_ref_count={} <= {}",
                fmt_opt(&f.bos_sink_share),
                cfg.bos_share_min,
                fmt_opt(&f.betti0_change.map(f64::abs)),
                cfg.betti0_change_max,
                fmt_opt(&f.mean_ref_count),
                cfg.ref_count_split
            ),
        },
        RuleTrace {
            rule: "R3".into(),
            vote: FrameType::Distributed,
            weight: 1.0,
            fired: r3,
            detail: format!(
                "mean_ref_count={} > {} OR (corr_sign_flip={} AND kl_shape={})",
                fmt_opt(&f.mean_ref_count),
                cfg.ref_count_split,
                fmt_opt(&f.corr_sign_flip),
                f.kl_shape.map_or("absent", |s| s.as_str())
            ),
        },
    ];

    let mut votes: BTreeMap<FrameType, f64> = BTreeMap::new();
    let mut total = 0.0;
    for t in trace.iter().filter(|t| t.fired == Some(true)) {
        *votes.entry(t.vote).or_insert(0.0) += t.weight;
        total += t.weight;
    }
    let best = votes.values().copied().fold(0.0, f64::max);
    let winners: Vec<FrameType> = votes.iter().filter(|(_, &w)| w == best).map(|(&k, _)| k).collect();
    let confidence = if total > 0.0 { best / total } else { 0.0 };
    let frame_type = if winners.len() == 1 && confidence >= cfg.min_confidence {
        winners[0]
    } else {
        FrameType::Inconclusive
    };
    FrameVerdict {
        frame_type,
        confidence,
        fired_rules: trace,
    }
}
