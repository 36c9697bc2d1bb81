//! On-disk dump format.
//!
//! A dump directory holds `manifest.json` plus one raw little-endian `f32`
//! blob per tensor, row-major:
//!
//! ```text
//! manifest.json
//! <sample>/attention.bin   [L, H, T, T]
//! <sample>/q.bin k.bin v.bin   [L, H, T, d_h]   (optional, all three or none)
//! <sample>/hidden.bin      [L+1, T, D]          (optional)
//! <sample>/tokens.json     UTF-8 array of T strings
//! ```
//!
//! Reading always validates; nothing is repaired silently.

use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f32-le";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Row sums over valid positions must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-4;
/// Tolerance for structurally-zero (masked) entries and the upper bound 1.
pub const ENTRY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFiles {
    pub attention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub sample_id: String,
    pub seq_len: usize,
    pub token_file: String,
    pub tensor_files: TensorFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpManifest {
    pub format_version: u32,
    pub model_id: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<usize>,
    pub samples: Vec<SampleEntry>,
    pub causal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_label: Option<String>,
    pub dtype: String,
    /// Where Q/K/V were captured, as reported by the extractor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_point: Option<String>,
    /// How grouped/multi-query heads were expanded to `num_heads`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_expansion: Option<String>,
}

/// Model-level metadata used to assemble a [`ModelDump`] in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpMeta {
    pub model_id: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    pub head_dim: Option<usize>,
    pub causal: bool,
    pub checkpoint_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Qkv {
    pub q: Vec<f32>,
    pub k: Vec<f32>,
    pub v: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub seq_len: usize,
    pub tokens: Vec<String>,
    /// `[L, H, T, T]`
    pub attention: Vec<f32>,
    /// `[L, H, T, d_h]` each
    pub qkv: Option<Qkv>,
    /// `[L + 1, T, D]`
    pub hidden: Option<Vec<f32>>,
}

/// Coordinates of one attention head within a dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeadIndex {
    pub sample: usize,
    pub layer: usize,
    pub head: usize,
}

/// A validated, immutable forward-pass record.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDump {
    pub manifest: DumpManifest,
    pub samples: Vec<Sample>,
}

/// One row-stochastic `n × n` attention matrix in `f64`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    n: usize,
    causal: bool,
    weights: Vec<f64>,
}

impl AttentionMatrix {
    /// Build from a flat row-major buffer. Shape is checked; the simplex
    /// invariant is not (see [`AttentionMatrix::validate`]).
    pub fn new(n: usize, causal: bool, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("attention matrix must be non-empty".into()));
        }
        if weights.len() != n * n {
            return Err(Error::Shape {
                what: "attention matrix".into(),
                expected: n * n,
                found: weights.len(),
            });
        }
        Ok(Self { n, causal, weights })
    }

    pub fn from_rows(rows: &[Vec<f64>], causal: bool) -> Result<Self> {
        let n = rows.len();
        let mut weights = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Shape {
                    what: "attention row".into(),
                    expected: n,
                    found: row.len(),
                });
            }
            weights.extend_from_slice(row);
        }
        Self::new(n, causal, weights)
    }

    pub fn from_f32(n: usize, causal: bool, data: &[f32]) -> Result<Self> {
        Self::new(n, causal, data.iter().map(|&x| f64::from(x)).collect())
    }

    /// Exact uniform rows over valid positions.
    pub fn uniform(n: usize, causal: bool) -> Self {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            let k = if causal { i + 1 } else { n };
            for j in 0..k {
                weights[i * n + j] = 1.0 / k as f64;
            }
        }
        Self { n, causal, weights }
    }

    /// Every row one-hot on itself.
    pub fn identity(n: usize, causal: bool) -> Self {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        Self { n, causal, weights }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn causal(&self) -> bool {
        self.causal
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// Row `i` restricted to its valid (unmasked) positions.
    #[inline]
    pub fn valid_row(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.valid_len(i)]
    }

    /// Number of valid positions in row `i` (`i + 1` when causal).
    #[inline]
    pub fn valid_len(&self, i: usize) -> usize {
        if self.causal {
            i + 1
        } else {
            self.n
        }
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        !self.causal || j <= i
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// All valid entries, row by row.
    pub fn valid_entries(&self) -> Vec<f64> {
        (0..self.n).flat_map(|i| self.valid_row(i).iter().copied()).collect()
    }

    /// Column sums (attention received per token).
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for i in 0..self.n {
            for (s, &a) in sums.iter_mut().zip(self.row(i)) {
                *s += a;
            }
        }
        sums
    }

    /// Apply a position permutation: `out[p(i)][p(j)] = a[i][j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Shape {
                what: "permutation".into(),
                expected: self.n,
                found: perm.len(),
            });
        }
        let mut weights = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                weights[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        Ok(Self {
            n: self.n,
            causal: self.causal,
            weights,
        })
    }

    /// Check the simplex and mask invariants. Errors carry `(sample, layer,
    /// head)` coordinates supplied by the caller.
    pub fn validate_at(&self, sample: &str, layer: usize, head: usize) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            let k = self.valid_len(i);
            let mut sum = 0.0;
            for j in 0..n {
                let a = self.get(i, j);
                if !a.is_finite() {
                    return Err(Error::Simplex {
                        sample: sample.into(),
                        layer,
                        head,
                        row: i,
                        detail: format!("non-finite entry at column {j}"),
                    });
                }
                if j >= k {
                    if a.abs() > ENTRY_TOL {
                        return Err(Error::CausalMask {
                            sample: sample.into(),
                            layer,
                            head,
                            row: i,
                            col: j,
                            value: a as f32,
                        });
                    }
                    continue;
                }
                if a < 0.0 || a > 1.0 + ENTRY_TOL {
                    return Err(Error::Simplex {
                        sample: sample.into(),
                        layer,
                        head,
                        row: i,
                        detail: format!("entry {a} at column {j} outside [0, 1]"),
                    });
                }
                sum += a;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Simplex {
                    sample: sample.into(),
                    layer,
                    head,
                    row: i,
                    detail: format!("row sums to {sum}"),
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at("-", 0, 0)
    }
}

impl Sample {
    /// A sample with only the attention block.
    pub fn new(id: impl Into<String>, tokens: Vec<String>, attention: Vec<f32>) -> Self {
        let tokens_len = tokens.len();
        Self {
            id: id.into(),
            seq_len: tokens_len,
            tokens,
            attention,
            qkv: None,
            hidden: None,
        }
    }
}

impl ModelDump {
    /// Assemble a dump from metadata and samples, generating the canonical
    /// manifest, and validate it.
    pub fn from_parts(meta: DumpMeta, samples: Vec<Sample>) -> Result<Self> {
        let entries = samples
            .iter()
            .map(|s| SampleEntry {
                sample_id: s.id.clone(),
                seq_len: s.seq_len,
                token_file: format!("{}/tokens.json", s.id),
                tensor_files: TensorFiles {
                    attention: format!("{}/attention.bin", s.id),
                    q: s.qkv.as_ref().map(|_| format!("{}/q.bin", s.id)),
                    k: s.qkv.as_ref().map(|_| format!("{}/k.bin", s.id)),
                    v: s.qkv.as_ref().map(|_| format!("{}/v.bin", s.id)),
                    hidden: s.hidden.as_ref().map(|_| format!("{}/hidden.bin", s.id)),
                },
            })
            .collect();
        let manifest = DumpManifest {
            format_version: FORMAT_VERSION,
            model_id: meta.model_id,
            num_layers: meta.num_layers,
            num_heads: meta.num_heads,
            hidden_dim: meta.hidden_dim,
            head_dim: meta.head_dim,
            samples: entries,
            causal: meta.causal,
            checkpoint_label: meta.checkpoint_label,
            dtype: DTYPE.into(),
            capture_point: None,
            head_expansion: None,
        };
        let dump = Self { manifest, samples };
        dump.validate()?;
        Ok(dump)
    }

    pub fn num_layers(&self) -> usize {
        self.manifest.num_layers
    }

    pub fn num_heads(&self) -> usize {
        self.manifest.num_heads
    }

    pub fn causal(&self) -> bool {
        self.manifest.causal
    }

    pub fn has_qkv(&self) -> bool {
        self.samples.iter().all(|s| s.qkv.is_some())
    }

    pub fn has_hidden(&self) -> bool {
        self.samples.iter().all(|s| s.hidden.is_some())
    }

    fn head_dim_or_err(&self) -> Result<usize> {
        self.manifest
            .head_dim
            .ok_or_else(|| Error::Manifest("head_dim required for Q/K/V blocks".into()))
    }

    /// All `(sample, layer, head)` triples in canonical order.
    pub fn head_indices(&self) -> Vec<HeadIndex> {
        let mut out = Vec::new();
        for sample in 0..self.samples.len() {
            for layer in 0..self.num_layers() {
                for head in 0..self.num_heads() {
                    out.push(HeadIndex {
                        sample,
                        layer,
                        head,
                    });
                }
            }
        }
        out
    }

    /// Raw `T × T` attention block of one head.
    pub fn attention_slice(&self, idx: HeadIndex) -> &[f32] {
        let s = &self.samples[idx.sample];
        let t = s.seq_len;
        let off = (idx.layer * self.num_heads() + idx.head) * t * t;
        &s.attention[off..off + t * t]
    }

    pub fn attention(&self, idx: HeadIndex) -> AttentionMatrix {
        let t = self.samples[idx.sample].seq_len;
        AttentionMatrix::from_f32(t, self.causal(), self.attention_slice(idx))
            .expect("validated dump has consistent shapes")
    }

    fn head_block<'a>(&self, idx: HeadIndex, data: &'a [f32]) -> Result<&'a [f32]> {
        let dh = self.head_dim_or_err()?;
        let t = self.samples[idx.sample].seq_len;
        let off = (idx.layer * self.num_heads() + idx.head) * t * dh;
        Ok(&data[off..off + t * dh])
    }

    /// `T × d_h` query block of one head.
    pub fn queries(&self, idx: HeadIndex) -> Result<&[f32]> {
        let qkv = self.samples[idx.sample]
            .qkv
            .as_ref()
            .ok_or(Error::Capability("qkv"))?;
        self.head_block(idx, &qkv.q)
    }

    /// `T × d_h` key block of one head.
    pub fn keys(&self, idx: HeadIndex) -> Result<&[f32]> {
        let qkv = self.samples[idx.sample]
            .qkv
            .as_ref()
            .ok_or(Error::Capability("qkv"))?;
        self.head_block(idx, &qkv.k)
    }

    /// `T × d_h` value block of one head.
    pub fn values(&self, idx: HeadIndex) -> Result<&[f32]> {
        let qkv = self.samples[idx.sample]
            .qkv
            .as_ref()
            .ok_or(Error::Capability("qkv"))?;
        self.head_block(idx, &qkv.v)
    }

    /// `T × D` hidden states at layer boundary `boundary` (0 = embeddings).
    pub fn hidden(&self, sample: usize, boundary: usize) -> Result<&[f32]> {
        let s = &self.samples[sample];
        let h = s.hidden.as_ref().ok_or(Error::Capability("hidden"))?;
        let span = s.seq_len * self.manifest.hidden_dim;
        Ok(&h[boundary * span..(boundary + 1) * span])
    }

    /// Check every manifest and tensor invariant.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: m.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if m.dtype != DTYPE {
            return Err(Error::Manifest(format!("unsupported dtype {:?}", m.dtype)));
        }
        if m.num_layers == 0 || m.num_heads == 0 || m.hidden_dim == 0 {
            return Err(Error::Manifest("num_layers, num_heads and hidden_dim must be >= 1".into()));
        }
        if let Some(dh) = m.head_dim {
            if dh == 0 {
                return Err(Error::Manifest("head_dim must be >= 1".into()));
            }
            if m.num_heads * dh != m.hidden_dim {
                return Err(Error::Manifest(format!(
                    "hidden_dim {} != num_heads {} x head_dim {}",
                    m.hidden_dim, m.num_heads, dh
                )));
            }
        }
        if m.samples.len() != self.samples.len() {
            return Err(Error::Manifest(format!(
                "manifest lists {} samples, dump holds {}",
                m.samples.len(),
                self.samples.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (entry, s) in m.samples.iter().zip(&self.samples) {
            check_sample_id(&entry.sample_id)?;
            if !seen.insert(entry.sample_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample id {:?}", entry.sample_id)));
            }
            if entry.sample_id != s.id || entry.seq_len != s.seq_len {
                return Err(Error::Manifest(format!(
                    "manifest entry {:?} does not match sample {:?}",
                    entry.sample_id, s.id
                )));
            }
            for p in entry.files() {
                check_relative(p)?;
            }
            let tf = &entry.tensor_files;
            let qkv_declared = [&tf.q, &tf.k, &tf.v].iter().filter(|p| p.is_some()).count();
            if qkv_declared != 0 && qkv_declared != 3 {
                return Err(Error::Manifest(format!(
                    "sample {:?}: q, k and v must be declared together",
                    s.id
                )));
            }
            if (qkv_declared == 3) != s.qkv.is_some() || tf.hidden.is_some() != s.hidden.is_some() {
                return Err(Error::Manifest(format!(
                    "sample {:?}: declared blocks do not match loaded tensors",
                    s.id
                )));
            }
            self.validate_sample(s)?;
        }
        Ok(())
    }

    fn validate_sample(&self, s: &Sample) -> Result<()> {
        let m = &self.manifest;
        let (l, h, t) = (m.num_layers, m.num_heads, s.seq_len);
        if t == 0 {
            return Err(Error::Manifest(format!("sample {:?}: seq_len must be >= 1", s.id)));
        }
        if s.tokens.len() != t {
            return Err(Error::Shape {
                what: format!("tokens of sample {}", s.id),
                expected: t,
                found: s.tokens.len(),
            });
        }
        check_len(&format!("attention of sample {}", s.id), l * h * t * t, s.attention.len())?;
        check_finite(&s.id, "attention", &s.attention)?;
        if let Some(qkv) = &s.qkv {
            let dh = self.head_dim_or_err()?;
            for (name, data) in [("q", &qkv.q), ("k", &qkv.k), ("v", &qkv.v)] {
                check_len(&format!("{name} of sample {}", s.id), l * h * t * dh, data.len())?;
                check_finite(&s.id, name, data)?;
            }
        }
        if let Some(hidden) = &s.hidden {
            check_len(&format!("hidden of sample {}", s.id), (l + 1) * t * m.hidden_dim, hidden.len())?;
            check_finite(&s.id, "hidden", hidden)?;
        }
        for layer in 0..l {
            for head in 0..h {
                let off = (layer * h + head) * t * t;
                let a = AttentionMatrix::from_f32(t, m.causal, &s.attention[off..off + t * t])?;
                a.validate_at(&s.id, layer, head)?;
            }
        }
        Ok(())
    }
}

impl SampleEntry {
    fn files(&self) -> Vec<&str> {
        let tf = &self.tensor_files;
        let mut v = vec![self.token_file.as_str(), tf.attention.as_str()];
        for p in [&tf.q, &tf.k, &tf.v, &tf.hidden].into_iter().flatten() {
            v.push(p.as_str());
        }
        v
    }
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Shape {
            what: what.into(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_finite(sample: &str, tensor: &'static str, data: &[f32]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            sample: sample.into(),
            tensor,
            index,
        }),
        None => Ok(()),
    }
}

fn check_sample_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Manifest(format!("sample id {id:?} is not a safe directory name")))
    }
}

fn check_relative(p: &str) -> Result<()> {
    let path = Path::new(p);
    let ok = !p.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::Manifest(format!("path {p:?} must be relative to the dump directory")))
    }
}

fn write_blob(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_blob(path: &Path, expected_len: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = expected_len as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::ByteLength {
            file: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Write `dump` to `dir` (created if needed). The dump is validated first.
pub fn write_dump(dump: &ModelDump, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    dump.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (entry, s) in dump.manifest.samples.iter().zip(&dump.samples) {
        let join = |p: &str| -> Result<PathBuf> {
            let path = dir.join(p);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            Ok(path)
        };
        let tokens = serde_json::to_vec(&s.tokens).map_err(|e| Error::Json {
            path: dir.join(&entry.token_file),
            source: e,
        })?;
        let tok_path = join(&entry.token_file)?;
        fs::write(&tok_path, tokens).map_err(|e| Error::io(&tok_path, e))?;
        let tf = &entry.tensor_files;
        write_blob(&join(&tf.attention)?, &s.attention)?;
        if let (Some(qkv), Some(q), Some(k), Some(v)) = (&s.qkv, &tf.q, &tf.k, &tf.v) {
            write_blob(&join(q)?, &qkv.q)?;
            write_blob(&join(k)?, &qkv.k)?;
            write_blob(&join(v)?, &qkv.v)?;
        }
        if let (Some(hidden), Some(p)) = (&s.hidden, &tf.hidden) {
            write_blob(&join(p)?, hidden)?;
        }
    }
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&dump.manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Read only the manifest of a dump directory.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DumpManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DumpManifest =
        serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

/// Read and fully validate a dump directory.
pub fn read_dump(dir: impl AsRef<Path>) -> Result<ModelDump> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    if manifest.dtype != DTYPE {
        return Err(Error::Manifest(format!("unsupported dtype {:?}", manifest.dtype)));
    }
    let (l, h, d) = (manifest.num_layers, manifest.num_heads, manifest.hidden_dim);
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        check_sample_id(&entry.sample_id)?;
        for p in entry.files() {
            check_relative(p)?;
        }
        let t = entry.seq_len;
        let tf = &entry.tensor_files;
        let tok_path = dir.join(&entry.token_file);
        let tok_text = fs::read_to_string(&tok_path).map_err(|e| Error::io(&tok_path, e))?;
        let tokens: Vec<String> = serde_json::from_str(&tok_text).map_err(|e| Error::Json {
            path: tok_path,
            source: e,
        })?;
        let attention = read_blob(&dir.join(&tf.attention), l * h * t * t)?;
        let qkv = match (&tf.q, &tf.k, &tf.v) {
            (Some(q), Some(k), Some(v)) => {
                let dh = manifest
                    .head_dim
                    .ok_or_else(|| Error::Manifest("head_dim required for Q/K/V blocks".into()))?;
                let n = l * h * t * dh;
                Some(Qkv {
                    q: read_blob(&dir.join(q), n)?,
                    k: read_blob(&dir.join(k), n)?,
                    v: read_blob(&dir.join(v), n)?,
                })
            }
            (None, None, None) => None,
            _ => {
                return Err(Error::Manifest(format!(
                    "sample {:?}: q, k and v must be declared together",
                    entry.sample_id
                )))
            }
        };
        let hidden = match &tf.hidden {
            Some(p) => Some(read_blob(&dir.join(p), (l + 1) * t * d)?),
            None => None,
        };
        samples.push(Sample {
            id: entry.sample_id.clone(),
            seq_len: t,
            tokens,
            attention,
            qkv,
            hidden,
        });
    }
    let dump = ModelDump { manifest, samples };
    dump.validate()?;
    Ok(dump)
}
