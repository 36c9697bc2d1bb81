//! Synthetic attention dumps with known reference-frame structure.
//!
//! Every row is built as "anchor mass + spread remainder":
//!
//! * centralized: `sink_mass` on the single reference position (default 0);
//! * distributed: `sink_mass` on each reference position;
//! * bidirectional: `2·sink_mass·s_l` on position 0 and `2·sink_mass·(1 − s_l)`
//!   on position `T − 1`, where the start weight `s_l` moves from 0.9 to 0.1
//!   linearly across layers unless a schedule is given;
//! * uniform: exact uniform rows; random: Dirichlet(1) rows.
//!
//! The remainder is spread over the row's other valid positions with a
//! symmetric Dirichlet of per-coordinate concentration `(1 − noise)/noise`
//! (exactly uniform at `noise = 0`), so rows stay on the simplex without
//! renormalization. Value vectors are random unit vectors, reference keys
//! are scaled so that `‖k_ref‖ / mean_i ‖k_i‖ = key_norm_ratio`, and hidden
//! states accumulate the concatenated per-head `A·V` outputs layer by layer.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dumpio::{DumpMeta, ModelDump, Qkv, Sample};
use crate::error::{Error, Result};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Centralized,
    Distributed,
    Bidirectional,
    Uniform,
    Random,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Centralized => "centralized",
            FrameKind::Distributed => "distributed",
            FrameKind::Bidirectional => "bidirectional",
            FrameKind::Uniform => "uniform",
            FrameKind::Random => "random",
        }
    }

    /// Decoder-style frames are causal; the rest attend in both directions.
    pub fn default_causal(self) -> bool {
        matches!(self, FrameKind::Centralized)
    }
}

impl std::str::FromStr for FrameKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(FrameKind::Centralized),
            "distributed" => Ok(FrameKind::Distributed),
            "bidirectional" => Ok(FrameKind::Bidirectional),
            "uniform" => Ok(FrameKind::Uniform),
            "random" => Ok(FrameKind::Random),
            other => Err(Error::InvalidArgument(format!("unknown frame type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub frame: FrameKind,
    pub seq_len: usize,
    pub layers: usize,
    pub heads: usize,
    pub samples: usize,
    /// Per-reference attention share.
    pub sink_mass: f64,
    /// Reference positions for centralized (exactly one) and distributed frames.
    pub ref_positions: Vec<usize>,
    /// Per-layer start weight for bidirectional frames.
    pub start_schedule: Option<Vec<f64>>,
    /// Per-layer override of `sink_mass`.
    pub mass_schedule: Option<Vec<f64>>,
    pub noise: f64,
    pub seed: u64,
    /// `None` uses [`FrameKind::default_causal`].
    pub causal: Option<bool>,
    pub head_dim: usize,
    pub key_norm_ratio: f64,
    /// Number of planted 4-cycles among non-anchor tokens in the early third
    /// of layers (non-causal only).
    pub rings: usize,
    /// Mass each ring vertex gives to each of its two ring neighbours.
    pub ring_mass: f64,
    pub with_qkv: bool,
    pub with_hidden: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            frame: FrameKind::Centralized,
            seq_len: 16,
            layers: 4,
            heads: 2,
            samples: 1,
            sink_mass: 0.35,
            ref_positions: vec![0],
            start_schedule: None,
            mass_schedule: None,
            noise: 0.0,
            seed: 0,
            causal: None,
            head_dim: 8,
            key_norm_ratio: 0.6,
            rings: 0,
            ring_mass: 0.3,
            with_qkv: true,
            with_hidden: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_type: FrameKind,
    pub ref_positions: Vec<usize>,
    pub spec: SynthSpec,
}

impl SynthSpec {
    pub fn new(frame: FrameKind) -> Self {
        let mut spec = Self {
            frame,
            ..Self::default()
        };
        match frame {
            FrameKind::Distributed => {
                spec.sink_mass = 0.12;
                spec.ref_positions = vec![0, 5, 9];
            }
            FrameKind::Uniform | FrameKind::Random => spec.ref_positions.clear(),
            _ => {}
        }
        spec
    }

    pub fn is_causal(&self) -> bool {
        self.causal.unwrap_or_else(|| self.frame.default_causal())
    }

    /// Positions that carry planted sink mass.
    pub fn anchors(&self) -> Vec<usize> {
        match self.frame {
            FrameKind::Centralized | FrameKind::Distributed => self.ref_positions.clone(),
            FrameKind::Bidirectional => {
                if self.seq_len > 1 {
                    vec![0, self.seq_len - 1]
                } else {
                    vec![0]
                }
            }
            FrameKind::Uniform | FrameKind::Random => Vec::new(),
        }
    }

    pub fn mass_at(&self, layer: usize) -> f64 {
        self.mass_schedule
            .as_ref()
            .map_or(self.sink_mass, |s| s[layer])
    }

    pub fn start_weight(&self, layer: usize) -> f64 {
        match &self.start_schedule {
            Some(s) => s[layer],
            None if self.layers <= 1 => 0.9,
            None => 0.9 - 0.8 * layer as f64 / (self.layers - 1) as f64,
        }
    }

    /// Number of layers that carry planted rings.
    pub fn ring_layers(&self) -> usize {
        self.layers.div_ceil(3)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.seq_len == 0 || self.layers == 0 || self.heads == 0 || self.samples == 0 || self.head_dim == 0 {
            return bad("seq_len, layers, heads, samples and head_dim must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise {} outside [0, 1)", self.noise));
        }
        if !(self.key_norm_ratio > 0.0) {
            return bad("key_norm_ratio must be positive".into());
        }
        if let Some(s) = &self.mass_schedule {
            if s.len() != self.layers {
                return bad(format!("mass schedule has {} entries for {} layers", s.len(), self.layers));
            }
        }
        if let Some(s) = &self.start_schedule {
            if s.len() != self.layers {
                return bad(format!("start schedule has {} entries for {} layers", s.len(), self.layers));
            }
            if s.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return bad("start weights must lie in [0, 1]".into());
            }
        }
        let masses: Vec<f64> = (0..self.layers).map(|l| self.mass_at(l)).collect();
        if masses.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return bad("sink mass must lie in [0, 1]".into());
        }
        let mut refs = self.ref_positions.clone();
        refs.sort_unstable();
        refs.dedup();
        if refs.len() != self.ref_positions.len() {
            return bad("duplicate reference positions".into());
        }
        if let Some(&p) = refs.iter().find(|&&p| p >= self.seq_len) {
            return bad(format!("reference position {p} out of range for T = {}", self.seq_len));
        }
        match self.frame {
            FrameKind::Centralized if self.ref_positions.len() != 1 => {
                return bad("centralized frames take exactly one reference position".into());
            }
            FrameKind::Distributed if self.ref_positions.is_empty() => {
                return bad("distributed frames need at least one reference position".into());
            }
            _ => {}
        }
        let per_row = match self.frame {
            FrameKind::Centralized | FrameKind::Distributed => self.ref_positions.len() as f64,
            FrameKind::Bidirectional => 2.0,
            _ => 0.0,
        };
        let ring_extra = if self.rings > 0 { 2.0 * self.ring_mass } else { 0.0 };
        for m in masses {
            if m * per_row + ring_extra > 1.0 + 1e-12 {
                return bad(format!(
                    "infeasible allocation: {per_row} x {m} anchor mass plus {ring_extra} ring mass exceeds 1"
                ));
            }
        }
        if self.rings > 0 {
            if self.is_causal() {
                return bad("planted rings require non-causal attention".into());
            }
            if self.ring_vertices().len() < self.rings {
                return bad(format!("not enough free positions for {} rings", self.rings));
            }
        }
        Ok(())
    }

    /// Vertex sets of the planted 4-cycles.
    pub fn ring_vertices(&self) -> Vec<[usize; 4]> {
        let anchors = self.anchors();
        let free: Vec<usize> = (0..self.seq_len).filter(|p| !anchors.contains(p)).collect();
        free.chunks_exact(4)
            .take(self.rings)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect()
    }

    fn tokens(&self) -> Vec<String> {
        let anchors = self.anchors();
        (0..self.seq_len)
            .map(|p| {
                if p == 0 {
                    "<s>".to_string()
                } else if self.frame == FrameKind::Bidirectional && p + 1 == self.seq_len {
                    "</s>".to_string()
                } else if anchors.contains(&p) {
                    ",".to_string()
                } else {
                    format!("w{p}")
                }
            })
            .collect()
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 && s.is_finite() {
            return g.into_iter().map(|x| x / s).collect();
        }
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// One attention row of length `t` (zeros beyond the valid prefix).
fn attention_row(spec: &SynthSpec, layer: usize, row: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = spec.seq_len;
    let k = if spec.is_causal() { row + 1 } else { t };
    let mut out = vec![0.0; t];
    match spec.frame {
        FrameKind::Uniform => {
            out[..k].iter_mut().for_each(|x| *x = 1.0 / k as f64);
            return out;
        }
        FrameKind::Random => {
            out[..k].copy_from_slice(&dirichlet(rng, k, 1.0));
            return out;
        }
        _ => {}
    }

    let m = spec.mass_at(layer);
    let mut alloc: Vec<(usize, f64)> = match spec.frame {
        FrameKind::Centralized | FrameKind::Distributed => {
            spec.ref_positions.iter().filter(|&&p| p < k).map(|&p| (p, m)).collect()
        }
        FrameKind::Bidirectional => {
            let s = spec.start_weight(layer);
            let mut a = vec![(0, 2.0 * m * s)];
            if t > 1 && t - 1 < k {
                a.push((t - 1, 2.0 * m * (1.0 - s)));
            }
            a
        }
        FrameKind::Uniform | FrameKind::Random => unreachable!(),
    };
    if layer < spec.ring_layers() {
        for ring in spec.ring_vertices() {
            if let Some(pos) = ring.iter().position(|&v| v == row) {
                alloc.push((ring[(pos + 1) % 4], spec.ring_mass));
                alloc.push((ring[(pos + 3) % 4], spec.ring_mass));
            }
        }
    }
    for &(p, w) in &alloc {
        out[p] += w;
    }
    let allocated: f64 = alloc.iter().map(|(_, w)| w).sum();
    let remainder = (1.0 - allocated).max(0.0);
    let free: Vec<usize> = (0..k).filter(|p| !alloc.iter().any(|(q, _)| q == p)).collect();

    if free.is_empty() {
        // Only anchors are visible: scale them onto the simplex.
        if allocated > 0.0 {
            out.iter_mut().for_each(|x| *x /= allocated);
        } else {
            out[..k].iter_mut().for_each(|x| *x = 1.0 / k as f64);
        }
        return out;
    }
    let weights = if spec.noise == 0.0 {
        vec![1.0 / free.len() as f64; free.len()]
    } else {
        dirichlet(rng, free.len(), (1.0 - spec.noise) / spec.noise)
    };
    for (&p, w) in free.iter().zip(weights) {
        out[p] = remainder * w;
    }
    out
}

/// Generate a deterministic synthetic dump.
pub fn generate(spec: &SynthSpec) -> Result<ModelDump> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (t, l, h, dh) = (spec.seq_len, spec.layers, spec.heads, spec.head_dim);
    let d = h * dh;
    let anchors = spec.anchors();
    let tokens = spec.tokens();

    let mut samples = Vec::with_capacity(spec.samples);
    for s in 0..spec.samples {
        let mut attention_f64 = Vec::with_capacity(l * h * t * t);
        for layer in 0..l {
            for _head in 0..h {
                for i in 0..t {
                    attention_f64.extend(attention_row(spec, layer, i, &mut rng));
                }
            }
        }

        let mut qkv = None;
        let mut hidden = None;
        if spec.with_qkv || spec.with_hidden {
            let key_refs: Vec<usize> = anchors.iter().copied().filter(|&p| p < t).collect();
            let kr = key_refs.len() as f64;
            let rho = spec.key_norm_ratio;
            let ref_norm = if key_refs.is_empty() {
                1.0
            } else {
                rho * (t as f64 - kr) / (t as f64 - rho * kr)
            };
            let n = l * h * t * dh;
            let (mut q, mut k, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for _layer in 0..l {
                for _head in 0..h {
                    for i in 0..t {
                        q.extend(unit_vec(&mut rng, dh));
                        let norm = if key_refs.contains(&i) { ref_norm } else { 1.0 };
                        k.extend(unit_vec(&mut rng, dh).into_iter().map(|x| x * norm));
                        v.extend(unit_vec(&mut rng, dh));
                    }
                }
            }

            if spec.with_hidden {
                let mut h_all = Vec::with_capacity((l + 1) * t * d);
                let scale = 1.0 / (d as f64).sqrt();
                let mut cur: Vec<f64> = gaussian_vec(&mut rng, t * d).into_iter().map(|x| x * scale).collect();
                h_all.extend(cur.iter().copied());
                for layer in 0..l {
                    for head in 0..h {
                        let a_off = (layer * h + head) * t * t;
                        let v_off = (layer * h + head) * t * dh;
                        for i in 0..t {
                            for c in 0..dh {
                                let mut acc = 0.0;
                                for j in 0..t {
                                    acc += attention_f64[a_off + i * t + j] * v[v_off + j * dh + c];
                                }
                                cur[i * d + head * dh + c] += acc;
                            }
                        }
                    }
                    h_all.extend(cur.iter().copied());
                }
                hidden = Some(h_all.into_iter().map(|x| x as f32).collect());
            }
            if spec.with_qkv {
                let cast = |x: Vec<f64>| x.into_iter().map(|v| v as f32).collect();
                qkv = Some(Qkv {
                    q: cast(q),
                    k: cast(k),
                    v: cast(v),
                });
            }
        }

        samples.push(Sample {
            id: format!("s{s:03}"),
            seq_len: t,
            tokens: tokens.clone(),
            attention: attention_f64.into_iter().map(|x| x as f32).collect(),
            qkv,
            hidden,
        });
    }

    let meta = DumpMeta {
        model_id: format!("synth-{}-seed{}", spec.frame.as_str(), spec.seed),
        num_layers: l,
        num_heads: h,
        hidden_dim: d,
        head_dim: Some(dh),
        causal: spec.is_causal(),
        checkpoint_label: None,
    };
    ModelDump::from_parts(meta, samples)
}

pub fn ground_truth(spec: &SynthSpec) -> GroundTruth {
    GroundTruth {
        frame_type: spec.frame,
        ref_positions: spec.anchors(),
        spec: spec.clone(),
    }
}

/// Generate, write the dump directory and its `ground_truth.json` sidecar.
pub fn write_synthetic(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<ModelDump> {
    let dir = dir.as_ref();
    let dump = generate(spec)?;
    crate::dumpio::write_dump(&dump, dir)?;
    let path = dir.join(GROUND_TRUTH_FILE);
    let mut text = serde_json::to_string_pretty(&ground_truth(spec)).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(dump)
}
