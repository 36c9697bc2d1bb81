//! Thresholded attention graphs and their Laplacian signatures.
//!
//! Edge `(i, j)` exists iff `max(a_ij, a_ji) ≥ τ`. The Laplacian is
//! `L = D − A` on the binary adjacency (or on the symmetrized weights when
//! `weighted` is set). Star-likeness is the cosine between the ascending
//! Laplacian spectrum and that of `K_{1,n−1}` (`0, 1, …, 1, n`).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dumpio::{AttentionMatrix, HeadIndex, ModelDump};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::stats::{pearson, spearman, CorrResult};

/// Eigenvalues below this (relative to the largest) are zero.
const ZERO_EIG: f64 = 1e-9;

pub const DEFAULT_THRESHOLDS: [f64; 7] = [0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2];

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGraph {
    n: usize,
    tau: f64,
    /// Symmetric, zero diagonal; entries 0/1 or edge weights.
    adjacency: Vec<f64>,
    /// Unweighted degrees.
    degrees: Vec<usize>,
    edges: usize,
}

impl ThresholdGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j] != 0.0
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.edges as f64 / (self.n * (self.n - 1) / 2) as f64
        }
    }

    /// Build directly from an edge list (binary weights).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![0.0; n * n];
        for &(i, j) in edges {
            if i != j {
                adjacency[i * n + j] = 1.0;
                adjacency[j * n + i] = 1.0;
            }
        }
        Self::from_adjacency(n, f64::NAN, adjacency)
    }

    fn from_adjacency(n: usize, tau: f64, adjacency: Vec<f64>) -> Self {
        let degrees: Vec<usize> = (0..n)
            .map(|i| adjacency[i * n..(i + 1) * n].iter().filter(|&&w| w != 0.0).count())
            .collect();
        let edges = degrees.iter().sum::<usize>() / 2;
        Self {
            n,
            tau,
            adjacency,
            degrees,
            edges,
        }
    }

    /// Connectivity by graph search, independent of the spectrum.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in 0..self.n {
                if !seen[w] && self.has_edge(v, w) {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

pub fn build_graph(a: &AttentionMatrix, tau: f64) -> ThresholdGraph {
    build(a, tau, false)
}

/// As [`build_graph`] but edges carry `max(a_ij, a_ji)` as weight.
pub fn build_weighted_graph(a: &AttentionMatrix, tau: f64) -> ThresholdGraph {
    build(a, tau, true)
}

fn build(a: &AttentionMatrix, tau: f64, weighted: bool) -> ThresholdGraph {
    let n = a.n();
    let mut adjacency = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let w = a.get(i, j).max(a.get(j, i));
            if w >= tau {
                let x = if weighted { w } else { 1.0 };
                adjacency[i * n + j] = x;
                adjacency[j * n + i] = x;
            }
        }
    }
    ThresholdGraph::from_adjacency(n, tau, adjacency)
}

/// Ascending eigenvalues of `L = D − A`, tiny values snapped to 0.
pub fn laplacian_spectrum(g: &ThresholdGraph) -> Vec<f64> {
    let n = g.n;
    if n == 0 {
        return Vec::new();
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let mut deg = 0.0;
        for j in 0..n {
            let w = g.adjacency[i * n + j];
            if w != 0.0 {
                l[(i, j)] = -w;
                deg += w;
            }
        }
        l[(i, i)] = deg;
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let scale = ev.last().copied().unwrap_or(0.0).abs().max(1.0);
    for x in &mut ev {
        if *x < ZERO_EIG * scale {
            *x = 0.0;
        }
    }
    ev
}

/// Algebraic connectivity: the second-smallest Laplacian eigenvalue.
pub fn fiedler_value(g: &ThresholdGraph) -> f64 {
    if g.n < 2 {
        return 0.0;
    }
    laplacian_spectrum(g)[1]
}

/// Laplacian spectrum of `K_{1,n−1}`, ascending.
pub fn star_spectrum(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let mut s = vec![1.0; n];
            s[0] = 0.0;
            s[n - 1] = n as f64;
            s
        }
    }
}

fn cosine_to_star(spectrum: &[f64]) -> f64 {
    let star = star_spectrum(spectrum.len());
    let dot: f64 = spectrum.iter().zip(&star).map(|(a, b)| a * b).sum();
    let na = spectrum.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = star.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Cosine between the sorted Laplacian spectrum and the star's; 0 for an
/// edgeless graph.
pub fn star_likeness(g: &ThresholdGraph) -> f64 {
    cosine_to_star(&laplacian_spectrum(g))
}

/// Freeman degree centralization `Σ (d_max − d_i) / ((n − 1)(n − 2))`.
pub fn degree_centralization(g: &ThresholdGraph) -> f64 {
    let n = g.n;
    if n < 3 {
        return 0.0;
    }
    let dmax = g.degrees.iter().copied().max().unwrap_or(0);
    let s: usize = g.degrees.iter().map(|&d| dmax - d).sum();
    s as f64 / ((n - 1) * (n - 2)) as f64
}

/// Population variance of the degree sequence.
pub fn degree_variance(g: &ThresholdGraph) -> f64 {
    if g.n == 0 {
        return 0.0;
    }
    let m = g.degrees.iter().sum::<usize>() as f64 / g.n as f64;
    g.degrees.iter().map(|&d| (d as f64 - m).powi(2)).sum::<f64>() / g.n as f64
}

/// Gini coefficient of a non-negative vector (sorted formulation).
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * x)
        .sum();
    (weighted / (n as f64 * total)).max(0.0)
}

/// Gini of attention received per token.
pub fn gini_received(a: &AttentionMatrix) -> f64 {
    gini(&a.column_sums())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadAggregation {
    /// Metrics per head, then averaged.
    #[default]
    PerHead,
    /// Heads of a layer averaged into one matrix first.
    MeanAttention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub thresholds: Vec<f64>,
    pub weighted: bool,
    pub aggregation: HeadAggregation,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            weighted: false,
            aggregation: HeadAggregation::PerHead,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.thresholds.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidArgument("spectral thresholds must be positive".into()));
        }
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("spectral thresholds must be strictly ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub fiedler: f64,
    pub star_likeness: f64,
    pub centralization: f64,
    pub degree_variance: f64,
    pub density: f64,
    pub connected: bool,
}

pub fn graph_metrics(g: &ThresholdGraph) -> GraphMetrics {
    let spectrum = laplacian_spectrum(g);
    let fiedler = if g.n < 2 { 0.0 } else { spectrum[1] };
    GraphMetrics {
        fiedler,
        star_likeness: cosine_to_star(&spectrum),
        centralization: degree_centralization(g),
        degree_variance: degree_variance(g),
        density: g.density(),
        connected: fiedler > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralRow {
    pub layer: usize,
    pub tau: f64,
    pub fiedler: f64,
    pub star_likeness: f64,
    pub centralization: f64,
    pub degree_variance: f64,
    pub gini_received: f64,
    pub density: f64,
    /// Every aggregated graph is connected.
    pub connected: bool,
    pub connected_fraction: f64,
}

fn mean_attention(dump: &ModelDump, sample: usize, layer: usize) -> AttentionMatrix {
    let heads = dump.num_heads();
    let first = dump.attention(HeadIndex { sample, layer, head: 0 });
    let mut acc = first.weights().to_vec();
    for head in 1..heads {
        let a = dump.attention(HeadIndex { sample, layer, head });
        for (x, y) in acc.iter_mut().zip(a.weights()) {
            *x += y;
        }
    }
    acc.iter_mut().for_each(|x| *x /= heads as f64);
    AttentionMatrix::new(first.n(), first.causal(), acc).expect("same shape as head matrices")
}

/// One row per `(layer, τ)`, layer-major.
pub fn spectral_rows(dump: &ModelDump, cfg: &SpectralConfig) -> Result<Vec<SpectralRow>> {
    cfg.validate()?;
    let units: Vec<(usize, usize, Option<usize>)> = match cfg.aggregation {
        HeadAggregation::PerHead => dump
            .head_indices()
            .into_iter()
            .map(|i| (i.sample, i.layer, Some(i.head)))
            .collect(),
        HeadAggregation::MeanAttention => (0..dump.samples.len())
            .flat_map(|s| (0..dump.num_layers()).map(move |l| (s, l, None)))
            .collect(),
    };
    let per_unit: Vec<(usize, f64, Vec<GraphMetrics>)> = par_map(&units, |&(sample, layer, head)| {
        let a = match head {
            Some(head) => dump.attention(HeadIndex { sample, layer, head }),
            None => mean_attention(dump, sample, layer),
        };
        let metrics = cfg
            .thresholds
            .iter()
            .map(|&tau| graph_metrics(&build(&a, tau, cfg.weighted)))
            .collect();
        (layer, gini_received(&a), metrics)
    });

    let mut rows = Vec::with_capacity(dump.num_layers() * cfg.thresholds.len());
    for layer in 0..dump.num_layers() {
        let group: Vec<&(usize, f64, Vec<GraphMetrics>)> = per_unit.iter().filter(|u| u.0 == layer).collect();
        let count = group.len() as f64;
        let gini_mean = group.iter().map(|u| u.1).sum::<f64>() / count;
        for (t, &tau) in cfg.thresholds.iter().enumerate() {
            let mean = |f: fn(&GraphMetrics) -> f64| group.iter().map(|u| f(&u.2[t])).sum::<f64>() / count;
            let connected = group.iter().filter(|u| u.2[t].connected).count();
            rows.push(SpectralRow {
                layer,
                tau,
                fiedler: mean(|m| m.fiedler),
                star_likeness: mean(|m| m.star_likeness),
                centralization: mean(|m| m.centralization),
                degree_variance: mean(|m| m.degree_variance),
                gini_received: gini_mean,
                density: mean(|m| m.density),
                connected: connected == group.len(),
                connected_fraction: connected as f64 / count,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMetric {
    Centralization,
    StarLikeness,
    DegreeVariance,
    Density,
}

impl GraphMetric {
    pub const ALL: [GraphMetric; 4] = [
        GraphMetric::Centralization,
        GraphMetric::StarLikeness,
        GraphMetric::DegreeVariance,
        GraphMetric::Density,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphMetric::Centralization => "centralization",
            GraphMetric::StarLikeness => "star_likeness",
            GraphMetric::DegreeVariance => "degree_variance",
            GraphMetric::Density => "density",
        }
    }

    fn of(self, r: &SpectralRow) -> f64 {
        match self {
            GraphMetric::Centralization => r.centralization,
            GraphMetric::StarLikeness => r.star_likeness,
            GraphMetric::DegreeVariance => r.degree_variance,
            GraphMetric::Density => r.density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub metric: GraphMetric,
    pub tau: f64,
    pub pearson: CorrResult,
    pub spearman: CorrResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignFlip {
    pub metric: GraphMetric,
    pub low_tau: f64,
    pub high_tau: Option<f64>,
    pub low_r: f64,
    pub high_r: Option<f64>,
    pub flip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEffectiveness {
    pub tau: f64,
    /// Fraction of layers whose graph is connected.
    pub connected_fraction: f64,
    pub connected_layers: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureTable {
    pub correlations: Vec<CorrelationEntry>,
    pub sign_flips: Vec<SignFlip>,
    pub effectiveness: Vec<ThresholdEffectiveness>,
}

impl SignatureTable {
    pub fn correlation(&self, metric: GraphMetric, tau: f64) -> Option<&CorrelationEntry> {
        self.correlations.iter().find(|c| c.metric == metric && c.tau == tau)
    }

    pub fn sign_flip(&self, metric: GraphMetric) -> Option<&SignFlip> {
        self.sign_flips.iter().find(|f| f.metric == metric)
    }
}

/// Cross-layer Pearson/Spearman correlations between the Fiedler value and
/// each graph metric, per threshold, plus sign-flip flags.
///
/// The flip compares the lowest threshold with the highest *effective* one:
/// at least one connected layer and a non-degenerate correlation.
pub fn signature_correlations(rows: &[SpectralRow]) -> Result<SignatureTable> {
    let mut taus: Vec<f64> = Vec::new();
    for r in rows {
        if !taus.contains(&r.tau) {
            taus.push(r.tau);
        }
    }
    taus.sort_by(f64::total_cmp);

    let mut correlations = Vec::new();
    let mut effectiveness = Vec::new();
    for &tau in &taus {
        let mut group: Vec<&SpectralRow> = rows.iter().filter(|r| r.tau == tau).collect();
        group.sort_by_key(|r| r.layer);
        if group.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "signature correlations need at least 3 layers, got {}",
                group.len()
            )));
        }
        let fiedler: Vec<f64> = group.iter().map(|r| r.fiedler).collect();
        for metric in GraphMetric::ALL {
            let y: Vec<f64> = group.iter().map(|r| metric.of(r)).collect();
            correlations.push(CorrelationEntry {
                metric,
                tau,
                pearson: pearson(&fiedler, &y)?,
                spearman: spearman(&fiedler, &y)?,
            });
        }
        let connected = group.iter().filter(|r| r.connected).count();
        effectiveness.push(ThresholdEffectiveness {
            tau,
            connected_fraction: connected as f64 / group.len() as f64,
            connected_layers: connected,
            layers: group.len(),
        });
    }

    let sign_flips = GraphMetric::ALL
        .iter()
        .map(|&metric| {
            let low_tau = taus[0];
            let low = correlations
                .iter()
                .find(|c| c.metric == metric && c.tau == low_tau)
                .expect("lowest threshold present");
            let high = taus
                .iter()
                .enumerate()
                .rev()
                .filter(|&(i, _)| i > 0 && effectiveness[i].connected_layers > 0)
                .find_map(|(_, &tau)| {
                    correlations
                        .iter()
                        .find(|c| c.metric == metric && c.tau == tau && !c.pearson.degenerate)
                });
            let low_r = low.pearson.r;
            let high_r = high.map(|c| c.pearson.r);
            SignFlip {
                metric,
                low_tau,
                high_tau: high.map(|c| c.tau),
                low_r,
                high_r,
                flip: !low.pearson.degenerate && high_r.is_some_and(|h| low_r * h < 0.0),
            }
        })
        .collect();

    Ok(SignatureTable {
        correlations,
        sign_flips,
        effectiveness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn star(n: usize) -> ThresholdGraph {
        ThresholdGraph::from_edges(n, &(1..n).map(|j| (0, j)).collect::<Vec<_>>())
    }

    fn complete(n: usize) -> ThresholdGraph {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        ThresholdGraph::from_edges(n, &edges)
    }

    #[test]
    fn uniform_thresholding() {
        let a = AttentionMatrix::uniform(8, false);
        let g = build_graph(&a, 0.1);
        assert_eq!(g.edge_count(), 28);
        assert_eq!(g.density(), 1.0);
        assert_eq!(build_graph(&a, 0.2).edge_count(), 0);
    }

    #[test]
    fn star_and_complete_closed_forms() {
        for n in 4..=16 {
            assert_abs_diff_eq!(fiedler_value(&star(n)), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(fiedler_value(&complete(n)), n as f64, epsilon = 1e-9);
            assert_eq!(degree_centralization(&star(n)), 1.0);
            assert_eq!(degree_centralization(&complete(n)), 0.0);
            assert_abs_diff_eq!(star_likeness(&star(n)), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn disconnected_has_zero_fiedler() {
        let g = ThresholdGraph::from_edges(4, &[(0, 1), (2, 3)]);
        assert_eq!(fiedler_value(&g), 0.0);
        assert!(!g.is_connected());
    }

    #[test]
    fn k5_star_likeness_regression() {
        assert_abs_diff_eq!(star_likeness(&complete(5)), 0.755_928_946_018_454_5, epsilon = 1e-12);
    }

    #[test]
    fn empty_graph_star_likeness_is_zero() {
        assert_eq!(star_likeness(&ThresholdGraph::from_edges(5, &[])), 0.0);
        assert_eq!(degree_centralization(&ThresholdGraph::from_edges(5, &[])), 0.0);
    }

    #[test]
    fn path_centralization() {
        let g = ThresholdGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        assert_abs_diff_eq!(degree_centralization(&g), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn gini_closed_forms() {
        assert_abs_diff_eq!(gini_received(&AttentionMatrix::uniform(6, false)), 0.0, epsilon = 1e-15);
        let mut one_hot = vec![vec![0.0; 10]; 10];
        one_hot.iter_mut().for_each(|r| r[3] = 1.0);
        let a = AttentionMatrix::from_rows(&one_hot, false).unwrap();
        assert_abs_diff_eq!(gini_received(&a), 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(gini(&[1.0, 2.0, 3.0]), 2.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn centralized_synthetic_is_exact_star() {
        let spec = crate::synth::SynthSpec {
            causal: Some(false),
            ..crate::synth::SynthSpec::new(crate::synth::FrameKind::Centralized)
        };
        let dump = crate::synth::generate(&spec).unwrap();
        let a = dump.attention(dump.head_indices()[0]);
        // Residual share 0.65/15 ≈ 0.043 < τ < 0.35.
        let g = build_graph(&a, 0.2);
        for i in 0..16 {
            for j in 0..16 {
                let expect = i != j && (i == 0 || j == 0);
                assert_eq!(g.has_edge(i, j), expect, "edge ({i}, {j})");
            }
        }
        assert_eq!(degree_centralization(&g), 1.0);
    }

    #[test]
    fn proportional_metric_correlates_perfectly() {
        let rows: Vec<SpectralRow> = (0..5)
            .map(|l| SpectralRow {
                layer: l,
                tau: 0.1,
                fiedler: l as f64 + 1.0,
                star_likeness: 0.5,
                centralization: 0.1 * (l as f64 + 1.0),
                degree_variance: 1.0,
                gini_received: 0.0,
                density: 0.5,
                connected: true,
                connected_fraction: 1.0,
            })
            .collect();
        let table = signature_correlations(&rows).unwrap();
        let c = table.correlation(GraphMetric::Centralization, 0.1).unwrap();
        assert_abs_diff_eq!(c.pearson.r, 1.0, epsilon = 1e-12);
        assert!(table.correlation(GraphMetric::Density, 0.1).unwrap().pearson.degenerate);
        assert!(signature_correlations(&rows[..2]).is_err());
    }

    #[test]
    fn sign_flip_detected() {
        let mut rows = Vec::new();
        for l in 0..4 {
            let x = l as f64;
            for (tau, c) in [(0.001, -x), (0.1, x)] {
                rows.push(SpectralRow {
                    layer: l,
                    tau,
                    fiedler: x,
                    star_likeness: 0.0,
                    centralization: c,
                    degree_variance: 0.0,
                    gini_received: 0.0,
                    density: 0.0,
                    connected: true,
                    connected_fraction: 1.0,
                });
            }
        }
        let table = signature_correlations(&rows).unwrap();
        let flip = table.sign_flip(GraphMetric::Centralization).unwrap();
        assert!(flip.flip);
        assert_eq!(flip.high_tau, Some(0.1));
    }

    fn arb_attention(max_n: usize) -> impl Strategy<Value = AttentionMatrix> {
        (3..=max_n).prop_flat_map(|n| {
            prop::collection::vec(0.0f64..1.0, n * n).prop_map(move |v| {
                let mut w = v;
                for r in w.chunks_mut(n) {
                    let s: f64 = r.iter().sum::<f64>() + 1e-12;
                    r.iter_mut().for_each(|x| *x /= s);
                }
                AttentionMatrix::new(n, false, w).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn fiedler_positive_iff_connected(a in arb_attention(10), tau in 0.0f64..0.3) {
            let g = build_graph(&a, tau.max(1e-6));
            prop_assert_eq!(fiedler_value(&g) > 0.0, g.is_connected());
        }

        #[test]
        fn thresholding_is_monotone(a in arb_attention(10), t1 in 0.001f64..0.3, t2 in 0.001f64..0.3) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (g1, g2) = (build_graph(&a, lo), build_graph(&a, hi));
            for i in 0..a.n() {
                for j in 0..a.n() {
                    prop_assert!(!g2.has_edge(i, j) || g1.has_edge(i, j));
                }
            }
            prop_assert!(g2.density() <= g1.density());
        }

        #[test]
        fn relabeling_invariance(a in arb_attention(9), tau in 0.01f64..0.3, seed in any::<u64>()) {
            let n = a.n();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let b = a.permuted(&perm).unwrap();
            let (m1, m2) = (graph_metrics(&build_graph(&a, tau)), graph_metrics(&build_graph(&b, tau)));
            prop_assert!((m1.fiedler - m2.fiedler).abs() < 1e-9);
            prop_assert!((m1.star_likeness - m2.star_likeness).abs() < 1e-9);
            prop_assert!((m1.centralization - m2.centralization).abs() < 1e-12);
            prop_assert!((m1.degree_variance - m2.degree_variance).abs() < 1e-12);
            prop_assert_eq!(m1.density, m2.density);
            prop_assert!((gini_received(&a) - gini_received(&b)).abs() < 1e-12);
        }

        #[test]
        fn centralization_in_unit_interval(a in arb_attention(10), tau in 0.001f64..0.3) {
            let c = degree_centralization(&build_graph(&a, tau));
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }
}
