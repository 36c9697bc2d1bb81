//! Value-space geometry around reference tokens.
//!
//! A head's reference set is its detected sinks; heads without sinks fall
//! back to their highest-share column for the magnitude and direction
//! metrics. Multi-reference heads report the mean over references. All
//! correlations are Pearson.

use serde::{Deserialize, Serialize};

use crate::dumpio::{AttentionMatrix, HeadIndex, ModelDump};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::infogeo::kl_terms;
use crate::sinks::{attention_entropy, column_shares, detect_all, SinkConfig};
use crate::stats::pearson;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0)
}

/// Row-major `T × dh` block widened to `f64` rows.
fn rows_of(block: &[f32], dh: usize) -> Vec<Vec<f64>> {
    block.chunks(dh).map(|c| c.iter().map(|&x| f64::from(x)).collect()).collect()
}

/// `‖k_ref‖ / mean_i ‖k_i‖`, averaged over the references.
pub fn relative_magnitude(keys: &[Vec<f64>], refs: &[usize]) -> Result<f64> {
    let norms: Vec<f64> = keys.iter().map(|k| norm(k)).collect();
    let mean = norms.iter().sum::<f64>() / norms.len().max(1) as f64;
    if !(mean > 0.0) {
        return Err(Error::InvalidArgument("mean key norm is zero".into()));
    }
    if refs.is_empty() {
        return Err(Error::InvalidArgument("no reference token".into()));
    }
    Ok(refs.iter().map(|&r| norms[r] / mean).sum::<f64>() / refs.len() as f64)
}

/// Per-head attention-induced transformation `t_i = (A·V)_i − v_i`.
pub fn transformations(a: &AttentionMatrix, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.n();
    let dh = values.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut t = vec![0.0; dh];
            for (j, v) in values.iter().enumerate().take(n) {
                let w = a.get(i, j);
                if w != 0.0 {
                    for (tc, vc) in t.iter_mut().zip(v) {
                        *tc += w * vc;
                    }
                }
            }
            t.iter_mut().zip(&values[i]).for_each(|(tc, vc)| *tc -= vc);
            t
        })
        .collect()
}

/// `mean_i cos(v_ref, t_i)`, averaged over the references.
pub fn directional_influence(a: &AttentionMatrix, values: &[Vec<f64>], refs: &[usize]) -> f64 {
    if refs.is_empty() {
        return 0.0;
    }
    let t = transformations(a, values);
    refs.iter()
        .map(|&r| t.iter().map(|ti| cosine(&values[r], ti)).sum::<f64>() / t.len() as f64)
        .sum::<f64>()
        / refs.len() as f64
}

/// `mean_i D_KL(a_i ‖ â_i)` with `â` the reference-removed matrix.
pub fn structural_kl(a: &AttentionMatrix, refs: &[usize], eps: f64) -> Result<f64> {
    Ok(kl_terms(a, refs, eps)?.row_conditional)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub r: f64,
    pub degenerate: bool,
}

/// Pearson correlation over valid `i ≠ j` of `a_ij` against `cos(v_i, v_j)`.
pub fn geom_semantic_alignment(a: &AttentionMatrix, values: &[Vec<f64>]) -> Alignment {
    let n = a.n();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        for j in 0..a.valid_len(i) {
            if i != j {
                xs.push(a.get(i, j));
                ys.push(cosine(&values[i], &values[j]));
            }
        }
    }
    match pearson(&xs, &ys) {
        Ok(c) if !c.degenerate => Alignment { r: c.r, degenerate: false },
        _ => Alignment { r: 0.0, degenerate: true },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformStats {
    pub mean_magnitude: f64,
    pub entropy_magnitude_corr: f64,
    pub degenerate: bool,
}

/// Hidden-state deltas `h[l+1] − h[l]` per token, pooled over samples, and
/// their Pearson correlation with head-averaged row entropy.
pub fn transform_stats(dump: &ModelDump, layer: usize) -> Result<TransformStats> {
    if !dump.has_hidden() {
        return Err(Error::Capability("hidden"));
    }
    let d = dump.manifest.hidden_dim;
    let heads = dump.num_heads();
    let mut magnitudes = Vec::new();
    let mut entropies = Vec::new();
    for (s, sample) in dump.samples.iter().enumerate() {
        let h0 = dump.hidden(s, layer)?;
        let h1 = dump.hidden(s, layer + 1)?;
        let mut ent = vec![0.0; sample.seq_len];
        for head in 0..heads {
            let e = attention_entropy(&dump.attention(HeadIndex { sample: s, layer, head }));
            ent.iter_mut().zip(&e.rows).for_each(|(x, y)| *x += y / heads as f64);
        }
        for i in 0..sample.seq_len {
            let m = (0..d)
                .map(|c| (f64::from(h1[i * d + c]) - f64::from(h0[i * d + c])).powi(2))
                .sum::<f64>()
                .sqrt();
            magnitudes.push(m);
        }
        entropies.extend(ent);
    }
    let mean_magnitude = magnitudes.iter().sum::<f64>() / magnitudes.len().max(1) as f64;
    let (r, degenerate) = match pearson(&entropies, &magnitudes) {
        Ok(c) => (c.r, c.degenerate),
        Err(_) => (0.0, true),
    };
    Ok(TransformStats {
        mean_magnitude,
        entropy_magnitude_corr: r,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSpaceRow {
    pub layer: usize,
    /// `None` when the dump carries no Q/K/V.
    pub relative_magnitude: Option<f64>,
    pub directional_influence: Option<f64>,
    pub structural_kl: f64,
    /// Distinct sink positions across the layer's heads, mean over samples.
    pub ref_count: f64,
    /// `None` when the dump carries no hidden states.
    pub mean_transform_magnitude: Option<f64>,
    pub entropy_magnitude_corr: Option<f64>,
    pub geom_semantic_alignment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSpaceSummary {
    pub rows: Vec<ValueSpaceRow>,
    /// Capability blocks absent from the dump (`"qkv"`, `"hidden"`).
    pub missing: Vec<String>,
    pub mean_ref_count: f64,
    pub max_ref_count: f64,
    /// Indices of the first, middle and last layer.
    pub first_middle_last: [usize; 3],
}

struct HeadValues {
    index: HeadIndex,
    relative_magnitude: Option<f64>,
    directional_influence: Option<f64>,
    alignment: Option<Alignment>,
    structural_kl: f64,
}

/// Per-layer value-space battery.
pub fn valuespace_summary(dump: &ModelDump, sink_cfg: &SinkConfig, eps: f64) -> Result<ValueSpaceSummary> {
    let idx = dump.head_indices();
    let detections = detect_all(dump, sink_cfg.tau_percentile / 100.0, sink_cfg);
    let has_qkv = dump.has_qkv();
    let dh = dump.manifest.head_dim.unwrap_or(0);
    let jobs: Vec<(HeadIndex, &[usize])> = idx.iter().copied().zip(detections.iter().map(|d| d.positions.as_slice())).collect();

    let heads = par_map(&jobs, |&(i, sinks)| -> Result<HeadValues> {
        let a = dump.attention(i);
        let sinks = if sinks.len() == a.n() { &[][..] } else { sinks };
        let refs: Vec<usize> = if sinks.is_empty() {
            let shares = column_shares(&a);
            let top = shares
                .iter()
                .enumerate()
                .fold(0, |best, (j, &s)| if s > shares[best] { j } else { best });
            vec![top]
        } else {
            sinks.to_vec()
        };
        let structural = structural_kl(&a, sinks, eps)?;
        let (rel, dir, align) = if has_qkv {
            let keys = rows_of(dump.keys(i)?, dh);
            let values = rows_of(dump.values(i)?, dh);
            (
                relative_magnitude(&keys, &refs).ok(),
                Some(directional_influence(&a, &values, &refs)),
                Some(geom_semantic_alignment(&a, &values)),
            )
        } else {
            (None, None, None)
        };
        Ok(HeadValues {
            index: i,
            relative_magnitude: rel,
            directional_influence: dir,
            alignment: align,
            structural_kl: structural,
        })
    });
    let heads: Vec<HeadValues> = heads.into_iter().collect::<Result<_>>()?;

    let layers = dump.num_layers();
    let transforms: Vec<Option<TransformStats>> = if dump.has_hidden() {
        let ls: Vec<usize> = (0..layers).collect();
        par_map(&ls, |&l| transform_stats(dump, l))
            .into_iter()
            .map(|r| r.map(Some))
            .collect::<Result<_>>()?
    } else {
        vec![None; layers]
    };

    let samples = dump.samples.len();
    let mut rows = Vec::with_capacity(layers);
    for layer in 0..layers {
        let group: Vec<&HeadValues> = heads.iter().filter(|h| h.index.layer == layer).collect();
        let mean_opt = |f: &dyn Fn(&HeadValues) -> Option<f64>| {
            let v: Vec<f64> = group.iter().filter_map(|h| f(h)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let mut union_total = 0usize;
        for s in 0..samples {
            let mut union: Vec<usize> = idx
                .iter()
                .zip(&detections)
                .filter(|(i, _)| i.sample == s && i.layer == layer)
                .flat_map(|(_, d)| d.positions.iter().copied())
                .collect();
            union.sort_unstable();
            union.dedup();
            union_total += union.len();
        }
        let t = transforms[layer];
        rows.push(ValueSpaceRow {
            layer,
            relative_magnitude: mean_opt(&|h| h.relative_magnitude),
            directional_influence: mean_opt(&|h| h.directional_influence),
            structural_kl: group.iter().map(|h| h.structural_kl).sum::<f64>() / group.len() as f64,
            ref_count: union_total as f64 / samples as f64,
            mean_transform_magnitude: t.map(|t| t.mean_magnitude),
            entropy_magnitude_corr: t.map(|t| t.entropy_magnitude_corr),
            geom_semantic_alignment: mean_opt(&|h| h.alignment.map(|a| a.r)),
        });
    }

    let mut missing = Vec::new();
    if !has_qkv {
        missing.push("qkv".to_string());
    }
    if !dump.has_hidden() {
        missing.push("hidden".to_string());
    }
    let counts: Vec<f64> = rows.iter().map(|r| r.ref_count).collect();
    Ok(ValueSpaceSummary {
        mean_ref_count: counts.iter().sum::<f64>() / counts.len().max(1) as f64,
        max_ref_count: counts.iter().copied().fold(0.0, f64::max),
        first_middle_last: [0, layers / 2, layers.saturating_sub(1)],
        rows,
        missing,
    })
}
