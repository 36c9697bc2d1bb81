//! End-to-end analysis of one dump and its on-disk products.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{classify, extract_features, ClassifierConfig, FrameFeatures, FrameVerdict};
use crate::dumpio::ModelDump;
use crate::error::{Error, Result};
use crate::exec::with_threads;
use crate::infogeo::{kl_reduction_profile, KlConfig, KlProfile};
use crate::output::{fmt_float, fmt_opt, to_json_string, write_text, Table};
use crate::rmt::{rmt_rows, RmtConfig, RmtRow};
use crate::sinks::{sink_report, token_specialization, SinkConfig, SinkReport, TokenSpecialization};
use crate::spectral::{signature_correlations, spectral_rows, SignatureTable, SpectralConfig, SpectralRow};
use crate::topology::{diagrams_json, head_diagrams, summarize_diagrams, HeadDiagram, TopologyConfig, TopologySummary};
use crate::valuespace::{valuespace_summary, ValueSpaceSummary};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub sinks: SinkConfig,
    pub topology: TopologyConfig,
    pub spectral: SpectralConfig,
    pub kl: KlConfig,
    pub rmt: RmtConfig,
    pub classifier: ClassifierConfig,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        self.sinks.validate()?;
        self.topology.validate()?;
        self.spectral.validate()?;
        self.kl.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub model_id: String,
    pub checkpoint_label: Option<String>,
    pub num_layers: usize,
    pub num_heads: usize,
    pub num_samples: usize,
    pub causal: bool,
    /// Capability blocks absent from the dump.
    pub missing: Vec<String>,
    pub config: AnalysisConfig,
    pub sinks: SinkReport,
    pub specialization: TokenSpecialization,
    pub topology: TopologySummary,
    pub spectral: Vec<SpectralRow>,
    /// Absent for models with fewer than three layers.
    pub signature: Option<SignatureTable>,
    pub kl: KlProfile,
    pub valuespace: ValueSpaceSummary,
    pub rmt: Vec<RmtRow>,
    pub features: FrameFeatures,
    pub verdict: FrameVerdict,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub summary: AnalysisSummary,
    pub diagrams: Vec<HeadDiagram>,
}

/// Only the classifier inputs: sinks, topology, spectral signature, KL shape.
pub fn classify_dump(dump: &ModelDump, cfg: &AnalysisConfig) -> Result<(FrameFeatures, FrameVerdict)> {
    cfg.validate()?;
    let sinks = sink_report(dump, &cfg.sinks);
    let topology = summarize_diagrams(&head_diagrams(dump, &cfg.topology)?, dump.num_layers(), &cfg.topology);
    let signature = signature_of(&spectral_rows(dump, &cfg.spectral)?);
    let kl = kl_reduction_profile(dump, &cfg.sinks, &cfg.kl)?;
    let features = extract_features(
        Some(&sinks),
        Some(&topology),
        signature.as_ref(),
        Some((&kl, cfg.sinks.tau_percentile / 100.0)),
    )?;
    let verdict = classify(&features, &cfg.classifier);
    Ok((features, verdict))
}

fn signature_of(rows: &[SpectralRow]) -> Option<SignatureTable> {
    signature_correlations(rows).ok()
}

/// Run every module on the dump.
pub fn analyze(dump: &ModelDump, cfg: &AnalysisConfig) -> Result<Analysis> {
    cfg.validate()?;
    let sinks = sink_report(dump, &cfg.sinks);
    let specialization = token_specialization(dump, &cfg.sinks);
    let diagrams = head_diagrams(dump, &cfg.topology)?;
    let topology = summarize_diagrams(&diagrams, dump.num_layers(), &cfg.topology);
    let spectral = spectral_rows(dump, &cfg.spectral)?;
    let signature = signature_of(&spectral);
    let kl = kl_reduction_profile(dump, &cfg.sinks, &cfg.kl)?;
    let valuespace = valuespace_summary(dump, &cfg.sinks, cfg.kl.epsilon)?;
    let rmt = rmt_rows(dump, &cfg.rmt)?;
    let features = extract_features(
        Some(&sinks),
        Some(&topology),
        signature.as_ref(),
        Some((&kl, cfg.sinks.tau_percentile / 100.0)),
    )?;
    let verdict = classify(&features, &cfg.classifier);
    Ok(Analysis {
        summary: AnalysisSummary {
            model_id: dump.manifest.model_id.clone(),
            checkpoint_label: dump.manifest.checkpoint_label.clone(),
            num_layers: dump.num_layers(),
            num_heads: dump.num_heads(),
            num_samples: dump.samples.len(),
            causal: dump.causal(),
            missing: valuespace.missing.clone(),
            config: cfg.clone(),
            sinks,
            specialization,
            topology,
            spectral,
            signature,
            kl,
            valuespace,
            rmt,
            features,
            verdict,
        },
        diagrams,
    })
}

/// [`analyze`] on a pool of `threads` workers (0 = all cores).
pub fn analyze_with_threads(dump: &ModelDump, cfg: &AnalysisConfig, threads: usize) -> Result<Analysis> {
    with_threads(threads, || analyze(dump, cfg))
}

fn positions(p: &[usize]) -> String {
    p.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// Write every machine product into `dir`; returns the files written.
pub fn write_outputs(analysis: &Analysis, dump: &ModelDump, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let s = &analysis.summary;
    let mut files: Vec<(&str, String)> = Vec::new();

    files.push((SUMMARY_FILE, to_json_string(s)?));
    files.push(("verdict.json", to_json_string(&s.verdict)?));
    files.push(("diagrams.json", to_json_string(&diagrams_json(dump, &analysis.diagrams))?));
    if let Some(sig) = &s.signature {
        files.push(("signature.json", to_json_string(sig)?));
    }

    let mut t = Table::csv(&["layer", "head", "sink_positions", "concentration", "mean_entropy", "top_token", "top_token_share"]);
    for h in &s.sinks.heads {
        t.push(vec![
            h.layer.to_string(),
            h.head.to_string(),
            positions(&h.sink_positions),
            fmt_float(h.concentration),
            fmt_float(h.mean_entropy),
            h.top_token.clone(),
            fmt_float(h.top_token_share),
        ]);
    }
    files.push(("sinks_heads.csv", t.into_string()));

    let mut t = Table::csv(&[
        "layer",
        "concentration",
        "mean_entropy",
        "top_token",
        "top_token_share",
        "specialized_heads",
        "total_heads",
        "ref_count",
        "dominant_anchor",
        "heads_with_sinks",
    ]);
    for l in &s.sinks.layers {
        t.push(vec![
            l.layer.to_string(),
            fmt_float(l.concentration),
            fmt_float(l.mean_entropy),
            l.top_token.clone(),
            fmt_float(l.top_token_share),
            l.specialized_heads.to_string(),
            l.total_heads.to_string(),
            fmt_float(l.ref_count),
            l.dominant_anchor
                .map_or(String::new(), |a| format!("{a:?}").to_lowercase()),
            fmt_float(l.heads_with_sinks),
        ]);
    }
    files.push(("sinks_layers.csv", t.into_string()));

    let mut t = Table::csv(&["layer", "threshold", "betti0", "betti1"]);
    for l in &s.topology.layers {
        for (k, &th) in s.topology.thresholds.iter().enumerate() {
            t.push(vec![
                l.layer.to_string(),
                fmt_float(th),
                fmt_float(l.betti0_at[k]),
                fmt_float(l.betti1_at[k]),
            ]);
        }
    }
    files.push(("topology.csv", t.into_string()));

    let mut t = Table::csv(&[
        "layer",
        "betti0_operating",
        "mean_dim0_persistence",
        "mean_dim1_persistence",
        "dim0_significant",
        "dim1_significant",
    ]);
    for l in &s.topology.layers {
        t.push(vec![
            l.layer.to_string(),
            fmt_float(l.betti0_operating),
            fmt_float(l.mean_dim0_persistence),
            fmt_float(l.mean_dim1_persistence),
            fmt_float(l.dim0_significant),
            fmt_float(l.dim1_significant),
        ]);
    }
    files.push(("topology_layers.csv", t.into_string()));

    let mut t = Table::csv(&[
        "layer",
        "tau",
        "fiedler",
        "star_likeness",
        "centralization",
        "degree_variance",
        "gini_received",
        "density",
        "connected",
        "connected_fraction",
    ]);
    for r in &s.spectral {
        t.push(vec![
            r.layer.to_string(),
            fmt_float(r.tau),
            fmt_float(r.fiedler),
            fmt_float(r.star_likeness),
            fmt_float(r.centralization),
            fmt_float(r.degree_variance),
            fmt_float(r.gini_received),
            fmt_float(r.density),
            r.connected.to_string(),
            fmt_float(r.connected_fraction),
        ]);
    }
    files.push(("spectral.csv", t.into_string()));

    let mut t = Table::csv(&[
        "layer",
        "percentile",
        "kl_original",
        "kl_without",
        "reduction",
        "concentration",
        "row_conditional",
        "degenerate_rows",
    ]);
    for r in &s.kl.rows {
        t.push(vec![
            r.layer.to_string(),
            fmt_float(r.percentile),
            fmt_float(r.kl_original),
            fmt_float(r.kl_without),
            fmt_float(r.reduction),
            fmt_float(r.sink_concentration),
            fmt_opt(r.row_conditional),
            r.degenerate_rows.to_string(),
        ]);
    }
    files.push(("kl_profile.csv", t.into_string()));
    files.push(("kl_shapes.json", to_json_string(&s.kl.shapes)?));

    let mut t = Table::csv(&[
        "layer",
        "relative_magnitude",
        "directional_influence",
        "structural_kl",
        "ref_count",
        "mean_transform_magnitude",
        "entropy_magnitude_corr",
        "geom_semantic_alignment",
    ]);
    for r in &s.valuespace.rows {
        t.push(vec![
            r.layer.to_string(),
            fmt_opt(r.relative_magnitude),
            fmt_opt(r.directional_influence),
            fmt_float(r.structural_kl),
            fmt_float(r.ref_count),
            fmt_opt(r.mean_transform_magnitude),
            fmt_opt(r.entropy_magnitude_corr),
            fmt_opt(r.geom_semantic_alignment),
        ]);
    }
    files.push(("valuespace.csv", t.into_string()));

    let ranks: Vec<usize> = s.rmt.first().map_or_else(Vec::new, |r| r.low_rank_error.iter().map(|e| e.0).collect());
    let rank_cols: Vec<String> = ranks.iter().map(|k| format!("low_rank_error_{k}")).collect();
    let mut header = vec!["layer", "head", "spectral_gap", "participation_ratio", "mp_kl"];
    header.extend(rank_cols.iter().map(String::as_str));
    let mut t = Table::csv(&header);
    for r in &s.rmt {
        let mut row = vec![
            r.layer.to_string(),
            r.head.to_string(),
            fmt_opt(r.spectral_gap),
            fmt_float(r.participation_ratio),
            fmt_float(r.mp_kl),
        ];
        row.extend(r.low_rank_error.iter().map(|e| fmt_float(e.1)));
        t.push(row);
    }
    files.push(("rmt.csv", t.into_string()));

    let mut written = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(name);
        write_text(&path, &content)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_summary(dir: impl AsRef<Path>) -> Result<AnalysisSummary> {
    let path = dir.as_ref().join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })
}
