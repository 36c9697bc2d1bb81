//! KL analysis of sink removal.
//!
//! `KL(original)` is the mean row divergence from the uniform distribution
//! over valid positions. Removing a sink set `S` floors those columns at `ε`
//! and rescales the remaining mass onto the simplex; `KL(without sinks)` is
//! then measured on the surviving support `valid ∖ S`, so rows that were
//! "sink + uniform residual" drop to zero. The reduction is
//! `KL(original) − KL(without sinks)`, averaged over non-degenerate rows.

use serde::{Deserialize, Serialize};

use crate::dumpio::{AttentionMatrix, HeadIndex, ModelDump};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::sinks::{detect_all, sink_concentration, SinkConfig};

/// Rows whose non-sink mass falls below this are degenerate after removal.
pub const DEGENERATE_MASS: f64 = 1e-9;

/// Reductions within this of zero have no sign.
pub const SIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlReference {
    #[default]
    Uniform,
    RowConditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KlConfig {
    pub sink_percentiles: Vec<f64>,
    pub reference: KlReference,
    pub epsilon: f64,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self {
            sink_percentiles: vec![0.8, 0.9, 0.95],
            reference: KlReference::Uniform,
            epsilon: 1e-12,
        }
    }
}

impl KlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sink_percentiles.is_empty() || self.sink_percentiles.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::InvalidArgument("KL sink percentiles must lie in (0, 1)".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1e-3) {
            return Err(Error::InvalidArgument("KL smoothing epsilon must lie in (0, 1e-3)".into()));
        }
        Ok(())
    }
}

/// `D_KL(p ‖ q)` in nats; zero-mass entries of `p` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// `D_KL(p ‖ uniform)` over the entries of `p`.
fn kl_row_to_uniform(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    p.iter().filter(|&&x| x > 0.0).map(|&x| x * (x * n).ln()).sum::<f64>().max(0.0)
}

/// Mean over rows of `D_KL(a_i ‖ u)`, `u` uniform over valid positions.
pub fn kl_to_uniform(a: &AttentionMatrix) -> f64 {
    let n = a.n();
    (0..n).map(|i| kl_row_to_uniform(a.valid_row(i))).sum::<f64>() / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkRemoval {
    pub matrix: AttentionMatrix,
    /// Sink columns, sorted.
    pub removed: Vec<usize>,
    /// Rows whose non-sink mass was below [`DEGENERATE_MASS`]; they keep
    /// their original values and are excluded from downstream means.
    pub degenerate: Vec<bool>,
}

impl SinkRemoval {
    pub fn valid_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.degenerate.iter().enumerate().filter(|(_, d)| !**d).map(|(i, _)| i)
    }
}

/// Floor columns `S` at `ε` and rescale the rest of each row onto the simplex.
pub fn remove_sinks(a: &AttentionMatrix, sinks: &[usize], eps: f64) -> Result<SinkRemoval> {
    let n = a.n();
    let mut removed = sinks.to_vec();
    removed.sort_unstable();
    removed.dedup();
    if let Some(&j) = removed.iter().find(|&&j| j >= n) {
        return Err(Error::InvalidArgument(format!("sink column {j} out of range for n = {n}")));
    }
    if removed.len() == n {
        return Err(Error::InvalidArgument("cannot remove every column".into()));
    }
    let mut is_sink = vec![false; n];
    removed.iter().for_each(|&j| is_sink[j] = true);

    let mut weights = a.weights().to_vec();
    let mut degenerate = vec![false; n];
    for i in 0..n {
        let k = a.valid_len(i);
        let sinks_here = (0..k).filter(|&j| is_sink[j]).count();
        if sinks_here == 0 {
            continue;
        }
        let rest: f64 = (0..k).filter(|&j| !is_sink[j]).map(|j| a.get(i, j)).sum();
        if rest < DEGENERATE_MASS {
            degenerate[i] = true;
            continue;
        }
        let scale = (1.0 - eps * sinks_here as f64) / rest;
        for j in 0..k {
            weights[i * n + j] = if is_sink[j] { eps } else { a.get(i, j) * scale };
        }
    }
    Ok(SinkRemoval {
        matrix: AttentionMatrix::new(n, a.causal(), weights)?,
        removed,
        degenerate,
    })
}

/// Divergence of row `i` of a removal from uniform over `valid ∖ S`,
/// after conditioning on that support.
fn kl_row_without(r: &SinkRemoval, i: usize) -> f64 {
    let k = r.matrix.valid_len(i);
    let row = r.matrix.valid_row(i);
    let kept: Vec<f64> = (0..k).filter(|j| r.removed.binary_search(j).is_err()).map(|j| row[j]).collect();
    let total: f64 = kept.iter().sum();
    if kept.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let cond: Vec<f64> = kept.iter().map(|x| x / total).collect();
    kl_row_to_uniform(&cond)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlTerms {
    pub kl_original: f64,
    pub kl_without: f64,
    pub reduction: f64,
    /// Mean `D_KL(a_i ‖ â_i)` over non-degenerate rows.
    pub row_conditional: f64,
    pub degenerate_rows: usize,
}

/// All KL terms of one removal, averaged over the same non-degenerate rows.
pub fn kl_terms(a: &AttentionMatrix, sinks: &[usize], eps: f64) -> Result<KlTerms> {
    let r = remove_sinks(a, sinks, eps)?;
    let rows: Vec<usize> = r.valid_rows().collect();
    let degenerate_rows = a.n() - rows.len();
    if rows.is_empty() {
        return Ok(KlTerms {
            kl_original: 0.0,
            kl_without: 0.0,
            reduction: 0.0,
            row_conditional: 0.0,
            degenerate_rows,
        });
    }
    let m = rows.len() as f64;
    let kl_original = rows.iter().map(|&i| kl_row_to_uniform(a.valid_row(i))).sum::<f64>() / m;
    let kl_without = if r.removed.is_empty() {
        kl_original
    } else {
        rows.iter().map(|&i| kl_row_without(&r, i)).sum::<f64>() / m
    };
    let row_conditional = rows
        .iter()
        .map(|&i| kl_divergence(a.valid_row(i), r.matrix.valid_row(i)).max(0.0))
        .sum::<f64>()
        / m;
    Ok(KlTerms {
        kl_original,
        kl_without,
        reduction: kl_original - kl_without,
        row_conditional,
        degenerate_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    ConsistentlyNegative,
    ThreePhase,
    UShaped,
    Flat,
    Other,
}

impl ProfileShape {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileShape::ConsistentlyNegative => "consistently_negative",
            ProfileShape::ThreePhase => "three_phase",
            ProfileShape::UShaped => "u_shaped",
            ProfileShape::Flat => "flat",
            ProfileShape::Other => "other",
        }
    }
}

/// Sign of `x` with a dead zone of [`SIGN_TOL`].
pub fn sign_of(x: f64) -> i8 {
    if x > SIGN_TOL {
        1
    } else if x < -SIGN_TOL {
        -1
    } else {
        0
    }
}

/// Most frequent sign; ties resolve to 0.
fn majority(signs: &[i8]) -> i8 {
    let count = |s: i8| signs.iter().filter(|&&x| x == s).count();
    let (p, z, n) = (count(1), count(0), count(-1));
    if p > z && p > n {
        1
    } else if n > z && n > p {
        -1
    } else {
        0
    }
}

/// Early, middle and late layer ranges: first `⌈L/3⌉`, last `⌈L/3⌉`, rest.
pub fn layer_thirds(num_layers: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
    let third = num_layers.div_ceil(3);
    let early_end = third.min(num_layers);
    let late_start = num_layers.saturating_sub(third).max(early_end);
    (0..early_end, early_end..late_start, late_start..num_layers)
}

/// Shape label from a per-layer sign sequence.
pub fn classify_shape(signs: &[i8]) -> ProfileShape {
    if signs.iter().all(|&s| s == 0) {
        return ProfileShape::Flat;
    }
    if signs.iter().all(|&s| s < 0) {
        return ProfileShape::ConsistentlyNegative;
    }
    let (early, middle, late) = layer_thirds(signs.len());
    if middle.is_empty() {
        return ProfileShape::Other;
    }
    match (majority(&signs[early]), majority(&signs[middle]), majority(&signs[late])) {
        (1, -1, -1) => ProfileShape::ThreePhase,
        (1, -1, 1) => ProfileShape::UShaped,
        _ => ProfileShape::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlLayerRow {
    pub layer: usize,
    pub percentile: f64,
    pub kl_original: f64,
    pub kl_without: f64,
    pub reduction: f64,
    pub sink_concentration: f64,
    /// Present when the row-conditional reference is configured.
    pub row_conditional: Option<f64>,
    pub degenerate_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub percentile: f64,
    pub shape: ProfileShape,
    pub signs: Vec<i8>,
    pub mean_reduction: f64,
    pub mean_concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlProfile {
    pub reference: KlReference,
    /// Layer-major, then percentile in configured order.
    pub rows: Vec<KlLayerRow>,
    pub shapes: Vec<ShapeSummary>,
}

impl KlProfile {
    /// Shape at the configured percentile closest to `fraction`.
    pub fn shape_near(&self, fraction: f64) -> Option<ProfileShape> {
        self.shapes
            .iter()
            .min_by(|a, b| (a.percentile - fraction).abs().total_cmp(&(b.percentile - fraction).abs()))
            .map(|s| s.shape)
    }
}

/// Per-layer KL reduction profile, sinks detected at each configured percentile.
pub fn kl_reduction_profile(dump: &ModelDump, sink_cfg: &SinkConfig, cfg: &KlConfig) -> Result<KlProfile> {
    cfg.validate()?;
    let idx = dump.head_indices();
    let layers = dump.num_layers();
    let mut per_percentile = Vec::with_capacity(cfg.sink_percentiles.len());
    for &p in &cfg.sink_percentiles {
        let detections = detect_all(dump, p, sink_cfg);
        let jobs: Vec<(HeadIndex, &[usize])> = idx.iter().copied().zip(detections.iter().map(|d| d.positions.as_slice())).collect();
        let terms = par_map(&jobs, |&(i, sinks)| {
            let a = dump.attention(i);
            // A detection covering every column leaves nothing to compare.
            let sinks = if sinks.len() == a.n() { &[][..] } else { sinks };
            kl_terms(&a, sinks, cfg.epsilon).map(|t| (t, sink_concentration(&a, sinks)))
        });
        let terms: Vec<(KlTerms, f64)> = terms.into_iter().collect::<Result<_>>()?;
        per_percentile.push(terms);
    }

    let mut rows = Vec::with_capacity(layers * cfg.sink_percentiles.len());
    for layer in 0..layers {
        for (pi, &p) in cfg.sink_percentiles.iter().enumerate() {
            let group: Vec<&(KlTerms, f64)> = idx
                .iter()
                .zip(&per_percentile[pi])
                .filter(|(i, _)| i.layer == layer)
                .map(|(_, t)| t)
                .collect();
            let c = group.len() as f64;
            let mean = |f: fn(&(KlTerms, f64)) -> f64| group.iter().map(|t| f(t)).sum::<f64>() / c;
            rows.push(KlLayerRow {
                layer,
                percentile: p,
                kl_original: mean(|t| t.0.kl_original),
                kl_without: mean(|t| t.0.kl_without),
                reduction: mean(|t| t.0.reduction),
                sink_concentration: mean(|t| t.1),
                row_conditional: (cfg.reference == KlReference::RowConditional).then(|| mean(|t| t.0.row_conditional)),
                degenerate_rows: group.iter().map(|t| t.0.degenerate_rows).sum(),
            });
        }
    }

    let shapes = cfg
        .sink_percentiles
        .iter()
        .map(|&p| {
            let series: Vec<&KlLayerRow> = rows.iter().filter(|r| r.percentile == p).collect();
            let signs: Vec<i8> = series.iter().map(|r| sign_of(r.reduction)).collect();
            let l = series.len().max(1) as f64;
            ShapeSummary {
                percentile: p,
                shape: classify_shape(&signs),
                signs,
                mean_reduction: series.iter().map(|r| r.reduction).sum::<f64>() / l,
                mean_concentration: series.iter().map(|r| r.sink_concentration).sum::<f64>() / l,
            }
        })
        .collect();

    Ok(KlProfile {
        reference: cfg.reference,
        rows,
        shapes,
    })
}
