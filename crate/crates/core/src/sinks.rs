//! Attention-sink detection and per-layer sink statistics.
//!
//! A column `j` is a sink when at least a fraction `gamma` of the source
//! rows give it weight `≥ τ`, where `τ` is a percentile of the valid
//! attention entries:
//!
//! ```text
//! sink(j)  ⇔  (1/n) Σ_i 1[a_ij ≥ τ] ≥ γ
//! ```
//!
//! `τ` uses the nearest-rank percentile. When the percentile lands on the
//! bottom plateau of the distribution (every valid entry would pass), `τ` is
//! raised to the next distinct value; a matrix with no such value (all
//! entries equal) is degenerate and has no sinks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dumpio::{AttentionMatrix, HeadIndex, ModelDump};
use crate::exec::par_map;

/// Entries closer than this are treated as tied.
const TIE_TOL: f64 = 1e-9;

/// Population over which the `τ` percentile is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauScope {
    /// Valid entries of one (layer, head) matrix.
    #[default]
    Head,
    /// Valid entries of all heads of a layer within one sample.
    Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkConfig {
    /// Percentile in (0, 100) of valid entries that sets `τ`.
    pub tau_percentile: f64,
    /// Minimum fraction of source rows at or above `τ`.
    pub gamma: f64,
    /// Percentiles (as fractions) used by the KL sink-removal profile.
    pub concentration_percentiles: Vec<f64>,
    pub tau_scope: TauScope,
    /// A head is "specialized" when its top column's mean share is at least
    /// this multiple of the uniform share `1/T`.
    pub specialization_factor: f64,
}

impl Default for SinkConfig {
    fn default() -> Self {
        Self {
            tau_percentile: 90.0,
            gamma: 0.4,
            concentration_percentiles: vec![0.8, 0.9, 0.95],
            tau_scope: TauScope::Head,
            specialization_factor: 5.0,
        }
    }
}

impl SinkConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.tau_percentile > 0.0 && self.tau_percentile < 100.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "tau_percentile {} outside (0, 100)",
                self.tau_percentile
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "gamma {} outside (0, 1]",
                self.gamma
            )));
        }
        if self
            .concentration_percentiles
            .iter()
            .any(|p| !(*p > 0.0 && *p < 1.0))
        {
            return Err(crate::Error::InvalidArgument(
                "concentration percentiles must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkDetection {
    pub positions: Vec<usize>,
    pub tau: Option<f64>,
    /// All valid entries equal: percentile thresholds carry no information.
    pub degenerate: bool,
}

/// Nearest-rank percentile with the plateau rule described in the module
/// docs. `fraction` is in (0, 1). Returns `None` for degenerate inputs.
pub fn percentile_threshold(entries: &[f64], fraction: f64) -> Option<f64> {
    if entries.is_empty() {
        return None;
    }
    let mut sorted = entries.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    if sorted[sorted.len() - 1] - min <= TIE_TOL {
        return None;
    }
    let rank = ((fraction * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let tau = sorted[rank - 1];
    if tau - min <= TIE_TOL {
        sorted.iter().copied().find(|&x| x - min > TIE_TOL)
    } else {
        Some(tau)
    }
}

/// Columns whose fraction of rows at or above `tau` reaches `gamma`.
pub fn sinks_at(a: &AttentionMatrix, tau: f64, gamma: f64) -> Vec<usize> {
    let n = a.n();
    let mut hits = vec![0usize; n];
    for i in 0..n {
        for (j, &w) in a.valid_row(i).iter().enumerate() {
            if w >= tau {
                hits[j] += 1;
            }
        }
    }
    hits.iter()
        .enumerate()
        .filter(|(_, &h)| h as f64 / n as f64 >= gamma)
        .map(|(j, _)| j)
        .collect()
}

/// Sinks of one matrix with `τ` taken over its own valid entries.
pub fn detect_sinks(a: &AttentionMatrix, cfg: &SinkConfig) -> SinkDetection {
    detect_sinks_at_percentile(a, cfg.tau_percentile / 100.0, cfg.gamma)
}

pub fn detect_sinks_at_percentile(a: &AttentionMatrix, fraction: f64, gamma: f64) -> SinkDetection {
    match percentile_threshold(&a.valid_entries(), fraction) {
        Some(tau) => SinkDetection {
            positions: sinks_at(a, tau, gamma),
            tau: Some(tau),
            degenerate: false,
        },
        None => SinkDetection {
            positions: Vec::new(),
            tau: None,
            degenerate: true,
        },
    }
}

/// Sinks for every head of a dump, honoring `cfg.tau_scope`, at percentile
/// `fraction`. Results follow `dump.head_indices()` order.
pub fn detect_all(dump: &ModelDump, fraction: f64, cfg: &SinkConfig) -> Vec<SinkDetection> {
    let idx = dump.head_indices();
    match cfg.tau_scope {
        TauScope::Head => par_map(&idx, |&i| {
            detect_sinks_at_percentile(&dump.attention(i), fraction, cfg.gamma)
        }),
        TauScope::Layer => {
            let heads = dump.num_heads();
            let layer_keys: Vec<(usize, usize)> = idx
                .iter()
                .filter(|i| i.head == 0)
                .map(|i| (i.sample, i.layer))
                .collect();
            let taus = par_map(&layer_keys, |&(sample, layer)| {
                let mut pooled = Vec::new();
                for head in 0..heads {
                    pooled.extend(dump.attention(HeadIndex { sample, layer, head }).valid_entries());
                }
                percentile_threshold(&pooled, fraction)
            });
            par_map(&idx, |&i| {
                let tau = taus[i.sample * dump.num_layers() + i.layer];
                match tau {
                    Some(tau) => SinkDetection {
                        positions: sinks_at(&dump.attention(i), tau, cfg.gamma),
                        tau: Some(tau),
                        degenerate: false,
                    },
                    None => SinkDetection {
                        positions: Vec::new(),
                        tau: None,
                        degenerate: true,
                    },
                }
            })
        }
    }
}

/// Share of total attention mass absorbed by the columns in `set`.
pub fn sink_concentration(a: &AttentionMatrix, set: &[usize]) -> f64 {
    let total: f64 = a.weights().iter().sum();
    if total == 0.0 || set.is_empty() {
        return 0.0;
    }
    let mut absorbed = 0.0;
    for i in 0..a.n() {
        let row = a.row(i);
        absorbed += set.iter().map(|&j| row[j]).sum::<f64>();
    }
    absorbed / total
}

/// Fraction of all attention each column receives (column sums / row count).
pub fn column_shares(a: &AttentionMatrix) -> Vec<f64> {
    let n = a.n() as f64;
    a.column_sums().into_iter().map(|s| s / n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowEntropy {
    pub rows: Vec<f64>,
    pub mean: f64,
}

/// Shannon entropy (nats) of a probability vector, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Natural-log entropy of every row over its valid positions.
pub fn attention_entropy(a: &AttentionMatrix) -> RowEntropy {
    let rows: Vec<f64> = (0..a.n()).map(|i| entropy(a.valid_row(i))).collect();
    let mean = rows.iter().sum::<f64>() / rows.len() as f64;
    RowEntropy { rows, mean }
}

/// Where a layer's dominant sink sits in the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    First,
    Last,
    Interior,
}

impl Anchor {
    pub fn of(position: usize, seq_len: usize) -> Self {
        if position == 0 {
            Anchor::First
        } else if position + 1 == seq_len {
            Anchor::Last
        } else {
            Anchor::Interior
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSinkRow {
    pub layer: usize,
    pub head: usize,
    /// Union over samples.
    pub sink_positions: Vec<usize>,
    pub concentration: f64,
    pub mean_entropy: f64,
    pub top_token: String,
    pub top_token_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSinkRow {
    pub layer: usize,
    pub concentration: f64,
    pub mean_entropy: f64,
    pub top_token: String,
    /// Share of (sample, head) pairs whose top column is `top_token`.
    pub top_token_share: f64,
    pub specialized_heads: usize,
    pub total_heads: usize,
    /// Mean number of distinct sink positions (union over heads) per sample.
    pub ref_count: f64,
    /// Modal position class of the highest-concentration sink, if any head has a sink.
    pub dominant_anchor: Option<Anchor>,
    /// Fraction of (sample, head) pairs with at least one sink.
    pub heads_with_sinks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkReport {
    pub heads: Vec<HeadSinkRow>,
    pub layers: Vec<LayerSinkRow>,
    pub model_top_token: String,
    pub model_top_token_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTopToken {
    pub layer: usize,
    pub top_token: String,
    pub share: f64,
    pub specialized_heads: usize,
    pub total_heads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSpecialization {
    pub layers: Vec<LayerTopToken>,
    pub model_top_token: String,
    pub model_share: f64,
    pub specialized_heads: usize,
    pub total_heads: usize,
}

/// Per-head facts used by both the sink report and the specialization summary.
#[derive(Debug, Clone)]
struct HeadFacts {
    idx: HeadIndex,
    detection: SinkDetection,
    concentration: f64,
    mean_entropy: f64,
    top_column: usize,
    top_share: f64,
    dominant: Option<usize>,
}

fn head_facts(dump: &ModelDump, cfg: &SinkConfig) -> Vec<HeadFacts> {
    let idx = dump.head_indices();
    let detections = detect_all(dump, cfg.tau_percentile / 100.0, cfg);
    let pairs: Vec<(HeadIndex, SinkDetection)> = idx.into_iter().zip(detections).collect();
    par_map(&pairs, |(i, det)| {
        let a = dump.attention(*i);
        let shares = column_shares(&a);
        let top_column = argmax(&shares);
        let dominant = det
            .positions
            .iter()
            .copied()
            .max_by(|&x, &y| shares[x].total_cmp(&shares[y]).then(y.cmp(&x)));
        HeadFacts {
            idx: *i,
            concentration: sink_concentration(&a, &det.positions),
            mean_entropy: attention_entropy(&a).mean,
            top_column,
            top_share: shares[top_column],
            dominant,
            detection: det.clone(),
        }
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Most frequent key; ties go to the smallest key.
fn modal<K: Ord + Clone>(items: impl IntoIterator<Item = K>) -> Option<(K, usize, usize)> {
    let mut counts: BTreeMap<K, usize> = BTreeMap::new();
    let mut total = 0;
    for k in items {
        *counts.entry(k).or_default() += 1;
        total += 1;
    }
    let mut best: Option<(K, usize)> = None;
    for (k, c) in counts {
        if best.as_ref().is_none_or(|(_, bc)| c > *bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, c)| (k, c, total))
}

fn token_of(dump: &ModelDump, f: &HeadFacts) -> String {
    dump.samples[f.idx.sample].tokens[f.top_column].clone()
}

fn is_specialized(dump: &ModelDump, f: &HeadFacts, cfg: &SinkConfig) -> bool {
    let t = dump.samples[f.idx.sample].seq_len as f64;
    f.top_share >= cfg.specialization_factor / t
}

/// Which token each head attends to most, and how consistently.
pub fn token_specialization(dump: &ModelDump, cfg: &SinkConfig) -> TokenSpecialization {
    let facts = head_facts(dump, cfg);
    specialization_from(dump, &facts, cfg)
}

fn specialization_from(dump: &ModelDump, facts: &[HeadFacts], cfg: &SinkConfig) -> TokenSpecialization {
    let layers = (0..dump.num_layers())
        .map(|layer| {
            let fs: Vec<&HeadFacts> = facts.iter().filter(|f| f.idx.layer == layer).collect();
            let (tok, count, total) = modal(fs.iter().map(|f| token_of(dump, f))).unwrap_or_default();
            LayerTopToken {
                layer,
                top_token: tok,
                share: count as f64 / total.max(1) as f64,
                specialized_heads: fs.iter().filter(|f| is_specialized(dump, f, cfg)).count(),
                total_heads: fs.len(),
            }
        })
        .collect();
    let (tok, count, total) = modal(facts.iter().map(|f| token_of(dump, f))).unwrap_or_default();
    TokenSpecialization {
        layers,
        model_top_token: tok,
        model_share: count as f64 / total.max(1) as f64,
        specialized_heads: facts.iter().filter(|f| is_specialized(dump, f, cfg)).count(),
        total_heads: facts.len(),
    }
}

/// Full sink report: per-(layer, head) rows aggregated over samples, and
/// per-layer rows aggregated over heads and samples.
pub fn sink_report(dump: &ModelDump, cfg: &SinkConfig) -> SinkReport {
    let facts = head_facts(dump, cfg);
    let spec = specialization_from(dump, &facts, cfg);
    let (l, h) = (dump.num_layers(), dump.num_heads());

    let mut heads = Vec::with_capacity(l * h);
    for layer in 0..l {
        for head in 0..h {
            let fs: Vec<&HeadFacts> = facts
                .iter()
                .filter(|f| f.idx.layer == layer && f.idx.head == head)
                .collect();
            let mut positions: Vec<usize> =
                fs.iter().flat_map(|f| f.detection.positions.iter().copied()).collect();
            positions.sort_unstable();
            positions.dedup();
            let k = fs.len() as f64;
            let (tok, count, total) = modal(fs.iter().map(|f| token_of(dump, f))).unwrap_or_default();
            heads.push(HeadSinkRow {
                layer,
                head,
                sink_positions: positions,
                concentration: fs.iter().map(|f| f.concentration).sum::<f64>() / k,
                mean_entropy: fs.iter().map(|f| f.mean_entropy).sum::<f64>() / k,
                top_token: tok,
                top_token_share: count as f64 / total.max(1) as f64,
            });
        }
    }

    let layers = (0..l)
        .map(|layer| {
            let fs: Vec<&HeadFacts> = facts.iter().filter(|f| f.idx.layer == layer).collect();
            let k = fs.len() as f64;
            let ref_count = (0..dump.samples.len())
                .map(|s| {
                    let mut u: Vec<usize> = fs
                        .iter()
                        .filter(|f| f.idx.sample == s)
                        .flat_map(|f| f.detection.positions.iter().copied())
                        .collect();
                    u.sort_unstable();
                    u.dedup();
                    u.len() as f64
                })
                .sum::<f64>()
                / dump.samples.len() as f64;
            let dominant_anchor = modal(fs.iter().filter_map(|f| {
                f.dominant
                    .map(|p| Anchor::of(p, dump.samples[f.idx.sample].seq_len))
            }))
            .map(|(a, _, _)| a);
            let top = &spec.layers[layer];
            LayerSinkRow {
                layer,
                concentration: fs.iter().map(|f| f.concentration).sum::<f64>() / k,
                mean_entropy: fs.iter().map(|f| f.mean_entropy).sum::<f64>() / k,
                top_token: top.top_token.clone(),
                top_token_share: top.share,
                specialized_heads: top.specialized_heads,
                total_heads: top.total_heads,
                ref_count,
                dominant_anchor,
                heads_with_sinks: fs.iter().filter(|f| !f.detection.positions.is_empty()).count() as f64 / k,
            }
        })
        .collect();

    SinkReport {
        heads,
        layers,
        model_top_token: spec.model_top_token,
        model_top_token_share: spec.model_share,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]], causal: bool) -> AttentionMatrix {
        AttentionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), causal).unwrap()
    }

    fn causal_bos_4x4() -> AttentionMatrix {
        m(
            &[
                &[1.0, 0.0, 0.0, 0.0],
                &[0.9, 0.1, 0.0, 0.0],
                &[0.92, 0.05, 0.03, 0.0],
                &[0.95, 0.02, 0.02, 0.01],
            ],
            true,
        )
    }

    #[test]
    fn hand_enumerated_causal_sink() {
        let a = causal_bos_4x4();
        // 10 valid entries; nearest rank ceil(0.9 * 10) = 9 -> 9th smallest = 0.95.
        // Column 0 entries >= 0.95: rows 0, 3 -> 2/4. At 0.92: rows 0, 2, 3 -> 3/4.
        let det = detect_sinks(&a, &SinkConfig::default());
        assert_eq!(det.tau, Some(0.95));
        assert_eq!(det.positions, vec![0]);
        for gamma in [0.1, 0.5, 0.75] {
            assert_eq!(sinks_at(&a, 0.92, gamma), vec![0]);
        }
        assert!(sinks_at(&a, 0.92, 0.8).is_empty());
    }

    #[test]
    fn column_at_least_point_nine_everywhere() {
        let a = m(
            &[
                &[1.0, 0.0, 0.0, 0.0],
                &[0.9, 0.1, 0.0, 0.0],
                &[0.9, 0.05, 0.05, 0.0],
                &[0.9, 0.04, 0.03, 0.03],
            ],
            true,
        );
        let det = detect_sinks(&a, &SinkConfig::default());
        assert_eq!(det.tau, Some(0.9));
        for gamma in [0.25, 0.5, 1.0] {
            let cfg = SinkConfig {
                gamma,
                ..SinkConfig::default()
            };
            assert_eq!(detect_sinks(&a, &cfg).positions, vec![0]);
        }
    }

    #[test]
    fn uniform_is_degenerate() {
        let det = detect_sinks(&AttentionMatrix::uniform(8, false), &SinkConfig::default());
        assert!(det.degenerate);
        assert!(det.positions.is_empty());
    }

    #[test]
    fn plateau_raises_threshold() {
        // Non-causal: column 0 gets 0.35, the rest share 0.65 equally.
        let n = 16;
        let rest = 0.65 / 15.0;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|j| if j == 0 { 0.35 } else { rest }).collect())
            .collect();
        let a = AttentionMatrix::from_rows(&rows, false).unwrap();
        let det = detect_sinks(&a, &SinkConfig::default());
        assert_eq!(det.tau, Some(0.35));
        assert_eq!(det.positions, vec![0]);
    }

    #[test]
    fn concentration_cases() {
        let a = causal_bos_4x4();
        assert_abs_diff_eq!(sink_concentration(&a, &[0, 1, 2, 3]), 1.0, epsilon = 1e-12);
        assert_eq!(sink_concentration(&a, &[]), 0.0);
        let c0 = sink_concentration(&a, &[0]);
        assert_abs_diff_eq!(c0, (1.0 + 0.9 + 0.92 + 0.95) / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_cases() {
        let u = attention_entropy(&AttentionMatrix::uniform(8, false));
        assert_abs_diff_eq!(u.mean, 8f64.ln(), epsilon = 1e-12);
        let one_hot = attention_entropy(&AttentionMatrix::identity(5, false));
        assert_eq!(one_hot.mean, 0.0);
        let e = entropy(&[0.5, 0.25, 0.25]);
        let direct = -(0.5 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        assert_abs_diff_eq!(e, direct, epsilon = 1e-15);
        assert_abs_diff_eq!(e, 1.5 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(e, 1.0397207708, epsilon = 1e-9);
    }

    #[test]
    fn percentile_edge_cases() {
        assert_eq!(percentile_threshold(&[], 0.9), None);
        assert_eq!(percentile_threshold(&[0.2; 5], 0.9), None);
        assert_eq!(percentile_threshold(&[0.1, 0.2, 0.3, 0.4], 0.5), Some(0.2));
        assert_eq!(percentile_threshold(&[0.1, 0.1, 0.1, 0.7], 0.5), Some(0.7));
    }

    #[test]
    fn config_validation() {
        assert!(SinkConfig::default().validate().is_ok());
        let bad = SinkConfig {
            gamma: 0.0,
            ..SinkConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn random_matrix(seed_rows: &[Vec<f64>]) -> AttentionMatrix {
        let rows: Vec<Vec<f64>> = seed_rows
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect();
        AttentionMatrix::from_rows(&rows, false).unwrap()
    }

    fn square(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n)
    }

    proptest! {
        #[test]
        fn raising_gamma_or_percentile_never_grows_sinks(
            rows in square(7),
            g1 in 0.05f64..1.0, g2 in 0.05f64..1.0,
            p1 in 0.5f64..0.99, p2 in 0.5f64..0.99,
        ) {
            let a = random_matrix(&rows);
            let (glo, ghi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let (plo, phi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let lo = detect_sinks_at_percentile(&a, plo, glo).positions;
            let hi_g = detect_sinks_at_percentile(&a, plo, ghi).positions;
            let hi_p = detect_sinks_at_percentile(&a, phi, glo).positions;
            prop_assert!(hi_g.iter().all(|j| lo.contains(j)));
            prop_assert!(hi_p.iter().all(|j| lo.contains(j)));
        }

        #[test]
        fn permutation_equivariance(rows in square(6), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
            let a = random_matrix(&rows);
            let b = a.permuted(&perm).unwrap();
            let cfg = SinkConfig::default();
            let mut expected: Vec<usize> = detect_sinks(&a, &cfg).positions.iter().map(|&j| perm[j]).collect();
            expected.sort_unstable();
            prop_assert_eq!(detect_sinks(&b, &cfg).positions, expected);
        }

        #[test]
        fn concentration_is_additive(rows in square(6), split in 1usize..5) {
            let a = random_matrix(&rows);
            let s1: Vec<usize> = (0..split).collect();
            let s2: Vec<usize> = (split..6).collect();
            let both: Vec<usize> = (0..6).collect();
            let sum = sink_concentration(&a, &s1) + sink_concentration(&a, &s2);
            prop_assert!((sum - sink_concentration(&a, &both)).abs() < 1e-12);
        }

        #[test]
        fn entropy_bounded_by_log_n(rows in square(5)) {
            let a = random_matrix(&rows);
            let e = attention_entropy(&a);
            prop_assert!(e.rows.iter().all(|&h| h >= 0.0 && h <= 5f64.ln() + 1e-12));
        }
    }
}
