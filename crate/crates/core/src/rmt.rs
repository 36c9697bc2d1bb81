//! Random-matrix statistics of attention spectra.
//!
//! The spectrum of an attention matrix is the eigenvalue set of `A·Aᵀ`
//! (squared singular values), rescaled to unit mean so it can be compared
//! with the Marchenko–Pastur law at aspect ratio `γ`:
//!
//! ```text
//! p(x) = √((b − x)(x − a)) / (2πγx),   a = (1 − √γ)²,  b = (1 + √γ)²
//! ```
//!
//! with an atom of mass `1 − 1/γ` at zero when `γ > 1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dumpio::{AttentionMatrix, ModelDump};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::sinks::{attention_entropy, detect_sinks, sink_concentration, SinkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchenkoPastur {
    pub gamma: f64,
}

impl MarchenkoPastur {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument("aspect ratio must be positive".into()));
        }
        Ok(Self { gamma })
    }

    /// Square matrices.
    pub fn square() -> Self {
        Self { gamma: 1.0 }
    }

    pub fn support(&self) -> (f64, f64) {
        let s = self.gamma.sqrt();
        ((1.0 - s).powi(2), (1.0 + s).powi(2))
    }

    /// Mass of the point atom at zero.
    pub fn atom(&self) -> f64 {
        if self.gamma > 1.0 {
            1.0 - 1.0 / self.gamma
        } else {
            0.0
        }
    }

    /// Continuous density (excluding any atom).
    pub fn density(&self, x: f64) -> f64 {
        let (a, b) = self.support();
        if x <= a || x >= b || x <= 0.0 {
            return 0.0;
        }
        ((b - x) * (x - a)).sqrt() / (2.0 * PI * self.gamma * x)
    }

    /// Continuous mass on `[lo, hi]`, by adaptive Simpson on `x = a + u²`,
    /// which removes the inverse-square-root singularity at the lower edge.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        let (a, b) = self.support();
        let (lo, hi) = (lo.max(a), hi.min(b));
        if hi <= lo {
            return 0.0;
        }
        let f = |u: f64| {
            let x = a + u * u;
            if a == 0.0 {
                // p(u²)·2u = √(b − u²) / (πγ) when a = 0.
                (b - x).max(0.0).sqrt() / (PI * self.gamma)
            } else {
                self.density(x) * 2.0 * u
            }
        };
        adaptive_simpson(&f, (lo - a).sqrt(), (hi - a).sqrt(), 1e-12, 50)
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)
}

/// Descending eigenvalues of `A·Aᵀ`, round-off snapped to 0, scaled to unit mean.
pub fn attention_spectrum(a: &AttentionMatrix) -> Vec<f64> {
    let n = a.n();
    let m = DMatrix::from_row_slice(n, n, a.weights());
    let gram = &m * m.transpose();
    let mut ev: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    // Round-off below this is rank deficiency, not spectrum.
    let floor = ev.first().copied().unwrap_or(0.0) * n as f64 * f64::EPSILON;
    ev.iter_mut().filter(|x| **x <= floor).for_each(|x| *x = 0.0);
    let mean = ev.iter().sum::<f64>() / n as f64;
    if mean > 0.0 {
        ev.iter_mut().for_each(|x| *x /= mean);
    }
    ev
}

/// `(Σλ)² / Σλ²`, in `[1, n]` for a non-zero spectrum.
pub fn participation_ratio(lambda: &[f64]) -> f64 {
    let s: f64 = lambda.iter().sum();
    let s2: f64 = lambda.iter().map(|x| x * x).sum();
    if s2 == 0.0 {
        0.0
    } else {
        (s * s / s2).clamp(1.0, lambda.len() as f64)
    }
}

/// `λ₁ / λ₂` of a descending spectrum; `None` when `λ₂` is numerically zero.
pub fn spectral_gap(lambda: &[f64]) -> Option<f64> {
    match lambda {
        [l1, l2, ..] if *l2 > 1e-12 * l1.abs() && *l2 > 0.0 => Some(l1 / l2),
        _ => None,
    }
}

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_SMOOTHING: f64 = 1e-12;

/// Discrete `D_KL(p_emp ‖ p_MP)` over `bins` equal cells on `[0, max(4, λ_max)]`.
pub fn mp_kl(lambda: &[f64], bins: usize, eps: f64) -> Result<f64> {
    mp_kl_with(lambda, bins, eps, MarchenkoPastur::square())
}

pub fn mp_kl_with(lambda: &[f64], bins: usize, eps: f64, mp: MarchenkoPastur) -> Result<f64> {
    if lambda.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    if bins < 10 {
        return Err(Error::InvalidArgument("mp_kl needs at least 10 bins".into()));
    }
    let (_, b) = mp.support();
    let top = lambda.iter().copied().fold(b, f64::max);
    let width = top / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in lambda {
        let k = ((x.max(0.0) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let norm = 1.0 + bins as f64 * eps;
    let total = lambda.len() as f64;
    let mut kl = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        let (lo, hi) = (k as f64 * width, (k + 1) as f64 * width);
        let mut q = mp.mass(lo, hi);
        if k == 0 {
            q += mp.atom();
        }
        let p = (c as f64 / total + eps) / norm;
        let q = (q + eps) / norm;
        kl += p * (p / q).ln();
    }
    Ok(kl.max(0.0))
}

/// Singular values of `A`, descending.
pub fn singular_values(a: &AttentionMatrix) -> Vec<f64> {
    let n = a.n();
    let m = DMatrix::from_row_slice(n, n, a.weights());
    let mut s: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// `‖A − A_k‖_F / ‖A‖_F` for the rank-`k` truncated SVD.
pub fn low_rank_error(a: &AttentionMatrix, k: usize) -> Result<f64> {
    if k == 0 || k > a.n() {
        return Err(Error::InvalidArgument(format!("rank {k} outside [1, {}]", a.n())));
    }
    Ok(low_rank_errors(&singular_values(a), &[k])[0])
}

fn low_rank_errors(sigma: &[f64], ks: &[usize]) -> Vec<f64> {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    ks.iter()
        .map(|&k| {
            if total == 0.0 || k >= sigma.len() {
                return 0.0;
            }
            (sigma[k..].iter().map(|s| s * s).sum::<f64>() / total).sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmtConfig {
    pub bins: usize,
    pub smoothing: f64,
    pub ranks: Vec<usize>,
}

impl Default for RmtConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            smoothing: DEFAULT_SMOOTHING,
            ranks: vec![1, 2, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumStats {
    pub eigenvalues: Vec<f64>,
    pub spectral_gap: Option<f64>,
    pub participation_ratio: f64,
    pub mp_kl: f64,
    /// `(k, error)` for each configured rank not exceeding `n`.
    pub low_rank_error: Vec<(usize, f64)>,
}

pub fn spectrum_stats(a: &AttentionMatrix, cfg: &RmtConfig) -> Result<SpectrumStats> {
    let eigenvalues = attention_spectrum(a);
    let sigma = singular_values(a);
    let ranks: Vec<usize> = cfg.ranks.iter().copied().filter(|&k| k >= 1 && k <= a.n()).collect();
    let errors = low_rank_errors(&sigma, &ranks);
    Ok(SpectrumStats {
        spectral_gap: spectral_gap(&eigenvalues),
        participation_ratio: participation_ratio(&eigenvalues),
        mp_kl: mp_kl(&eigenvalues, cfg.bins, cfg.smoothing)?,
        low_rank_error: ranks.into_iter().zip(errors).collect(),
        eigenvalues,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmtRow {
    pub layer: usize,
    pub head: usize,
    /// Mean over samples where defined.
    pub spectral_gap: Option<f64>,
    pub participation_ratio: f64,
    pub mp_kl: f64,
    pub low_rank_error: Vec<(usize, f64)>,
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Per-(layer, head) spectrum statistics, averaged over samples.
pub fn rmt_rows(dump: &ModelDump, cfg: &RmtConfig) -> Result<Vec<RmtRow>> {
    let idx = dump.head_indices();
    let stats: Vec<SpectrumStats> = par_map(&idx, |&i| spectrum_stats(&dump.attention(i), cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(dump.num_layers() * dump.num_heads());
    for layer in 0..dump.num_layers() {
        for head in 0..dump.num_heads() {
            let group: Vec<&SpectrumStats> = idx
                .iter()
                .zip(&stats)
                .filter(|(i, _)| i.layer == layer && i.head == head)
                .map(|(_, s)| s)
                .collect();
            let gaps: Vec<f64> = group.iter().filter_map(|s| s.spectral_gap).collect();
            let ranks: Vec<usize> = group[0].low_rank_error.iter().map(|&(k, _)| k).collect();
            let low_rank_error = ranks
                .iter()
                .enumerate()
                .map(|(r, &k)| {
                    let errs: Vec<f64> = group.iter().filter_map(|s| s.low_rank_error.get(r).map(|e| e.1)).collect();
                    (k, mean_of(&errs))
                })
                .collect();
            rows.push(RmtRow {
                layer,
                head,
                spectral_gap: (!gaps.is_empty()).then(|| mean_of(&gaps)),
                participation_ratio: mean_of(&group.iter().map(|s| s.participation_ratio).collect::<Vec<_>>()),
                mp_kl: mean_of(&group.iter().map(|s| s.mp_kl).collect::<Vec<_>>()),
                low_rank_error,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub spectral_gap: f64,
    pub participation_ratio: f64,
    pub entropy: f64,
    pub sink_concentration: f64,
}

/// Head- and sample-averaged layer metrics used for checkpoint comparison.
/// Heads with an undefined gap are left out of the gap mean.
pub fn layer_metrics(dump: &ModelDump, sink_cfg: &SinkConfig) -> Vec<LayerMetrics> {
    let idx = dump.head_indices();
    let per_head = par_map(&idx, |&i| {
        let a = dump.attention(i);
        let lambda = attention_spectrum(&a);
        let sinks = detect_sinks(&a, sink_cfg);
        (
            spectral_gap(&lambda),
            participation_ratio(&lambda),
            attention_entropy(&a).mean,
            sink_concentration(&a, &sinks.positions),
        )
    });
    (0..dump.num_layers())
        .map(|layer| {
            let group: Vec<_> = idx.iter().zip(&per_head).filter(|(i, _)| i.layer == layer).map(|(_, h)| h).collect();
            let gaps: Vec<f64> = group.iter().filter_map(|h| h.0).collect();
            LayerMetrics {
                spectral_gap: mean_of(&gaps),
                participation_ratio: mean_of(&group.iter().map(|h| h.1).collect::<Vec<_>>()),
                entropy: mean_of(&group.iter().map(|h| h.2).collect::<Vec<_>>()),
                sink_concentration: mean_of(&group.iter().map(|h| h.3).collect::<Vec<_>>()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDelta {
    pub layer: usize,
    pub spectral_gap: f64,
    pub participation_ratio: f64,
    pub entropy: f64,
    pub sink_concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricExtremes {
    pub metric: String,
    pub mean_delta: f64,
    pub largest_increase_layer: usize,
    pub largest_increase: f64,
    pub largest_decrease_layer: usize,
    pub largest_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub early_label: Option<String>,
    pub late_label: Option<String>,
    pub layers: Vec<LayerDelta>,
    pub extremes: Vec<MetricExtremes>,
}

/// Per-layer `late − early` deltas of the checkpoint metrics.
pub fn compare_dumps(early: &ModelDump, late: &ModelDump, sink_cfg: &SinkConfig) -> Result<CompareReport> {
    if early.num_layers() != late.num_layers() || early.num_heads() != late.num_heads() {
        return Err(Error::Shape {
            what: "compared dumps (layers × heads)".into(),
            expected: early.num_layers() * early.num_heads(),
            found: late.num_layers() * late.num_heads(),
        });
    }
    let (e, l) = (layer_metrics(early, sink_cfg), layer_metrics(late, sink_cfg));
    let layers: Vec<LayerDelta> = e
        .iter()
        .zip(&l)
        .enumerate()
        .map(|(layer, (a, b))| LayerDelta {
            layer,
            spectral_gap: b.spectral_gap - a.spectral_gap,
            participation_ratio: b.participation_ratio - a.participation_ratio,
            entropy: b.entropy - a.entropy,
            sink_concentration: b.sink_concentration - a.sink_concentration,
        })
        .collect();
    let metrics: [(&str, fn(&LayerDelta) -> f64); 4] = [
        ("spectral_gap", |d| d.spectral_gap),
        ("participation_ratio", |d| d.participation_ratio),
        ("entropy", |d| d.entropy),
        ("sink_concentration", |d| d.sink_concentration),
    ];
    let extremes = metrics
        .iter()
        .map(|&(name, f)| {
            let mut inc = (0, f64::NEG_INFINITY);
            let mut dec = (0, f64::INFINITY);
            for d in &layers {
                let v = f(d);
                if v > inc.1 {
                    inc = (d.layer, v);
                }
                if v < dec.1 {
                    dec = (d.layer, v);
                }
            }
            MetricExtremes {
                metric: name.to_string(),
                mean_delta: mean_of(&layers.iter().map(f).collect::<Vec<_>>()),
                largest_increase_layer: inc.0,
                largest_increase: inc.1,
                largest_decrease_layer: dec.0,
                largest_decrease: dec.1,
            }
        })
        .collect();
    Ok(CompareReport {
        early_label: early.manifest.checkpoint_label.clone(),
        late_label: late.manifest.checkpoint_label.clone(),
        layers,
        extremes,
    })
}
