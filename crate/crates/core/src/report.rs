//! Markdown report and plot-ready TSV series rendered from a saved summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{read_summary, AnalysisSummary};
use crate::error::Result;
use crate::infogeo::layer_thirds;
use crate::output::{fmt_float, fmt_opt, write_text, Table};
use crate::spectral::GraphMetric;
use crate::stats::{count_significant, ALPHA};

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_header(cells: &[&str]) -> String {
    let mut s = md_row(&cells.iter().map(|c| c.to_string()).collect::<Vec<_>>());
    s.push_str(&md_row(&cells.iter().map(|_| "---".to_string()).collect::<Vec<_>>()));
    s
}

fn band_mean(values: &[f64], range: std::ops::Range<usize>) -> Option<f64> {
    let v = &values[range];
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Markdown tables: topology and sinks, spectral signatures, KL profile,
/// value-space battery, and the classifier trace.
pub fn render_markdown(s: &AnalysisSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Attention geometry report: {}\n", s.model_id);
    if let Some(label) = &s.checkpoint_label {
        let _ = writeln!(out, "Checkpoint: {label}\n");
    }
    let _ = writeln!(
        out,
        "{} layers, {} heads, {} samples, {} attention.\n",
        s.num_layers,
        s.num_heads,
        s.num_samples,
        if s.causal { "causal" } else { "bidirectional" }
    );
    if !s.missing.is_empty() {
        let _ = writeln!(out, "Missing capability blocks: {}.\n", s.missing.join(", "));
    }

    let (early, middle, late) = layer_thirds(s.num_layers);
    let bands = [("Early", early), ("Middle", middle), ("Late", late)];

    out.push_str("## Topology and sinks\n\n");
    let b0: Vec<f64> = s.topology.layers.iter().map(|l| l.betti0_operating).collect();
    let b1: Vec<f64> = s.topology.layers.iter().map(|l| l.dim1_significant).collect();
    let p0: Vec<f64> = s.topology.layers.iter().map(|l| l.mean_dim0_persistence).collect();
    let p1: Vec<f64> = s.topology.layers.iter().map(|l| l.mean_dim1_persistence).collect();
    let conc: Vec<f64> = s.sinks.layers.iter().map(|l| l.concentration).collect();
    let ent: Vec<f64> = s.sinks.layers.iter().map(|l| l.mean_entropy).collect();
    out.push_str(&md_header(&["Metric", "Early", "Middle", "Late"]));
    let op = fmt_float(s.topology.operating_point);
    let eps = fmt_float(s.topology.epsilon);
    for (name, series) in [
        (format!("Betti0 at t={op}"), &b0),
        (format!("Betti1 (persistence > {eps})"), &b1),
        ("Mean H0 persistence".to_string(), &p0),
        ("Mean H1 persistence".to_string(), &p1),
        ("Sink concentration".to_string(), &conc),
        ("Attention entropy".to_string(), &ent),
    ] {
        let mut cells = vec![name];
        cells.extend(bands.iter().map(|(_, r)| fmt_opt(band_mean(series, r.clone()))));
        out.push_str(&md_row(&cells));
    }
    let _ = writeln!(
        out,
        "\nMost attended token: `{}` ({} of heads); specialized heads {}/{}.\n",
        s.sinks.model_top_token,
        fmt_float(s.sinks.model_top_token_share),
        s.specialization.specialized_heads,
        s.specialization.total_heads
    );

    out.push_str("## Spectral signatures\n\n");
    out.push_str(
        "Star-likeness is the cosine between sorted Laplacian spectra of the graph and of a star; \
threshold effectiveness is the fraction of layers whose thresholded graph is connected. \
Both are local definitions.\n\n",
    );
    match &s.signature {
        Some(sig) => {
            out.push_str(&md_header(&["τ", "Effectiveness", "r(Fiedler, centralization)", "p", "ρ (Spearman)"]));
            for e in &sig.effectiveness {
                let c = sig.correlation(GraphMetric::Centralization, e.tau);
                out.push_str(&md_row(&[
                    fmt_float(e.tau),
                    format!("{}/{}", e.connected_layers, e.layers),
                    c.map_or(String::new(), |c| fmt_float(c.pearson.r)),
                    c.map_or(String::new(), |c| fmt_float(c.pearson.p_value)),
                    c.map_or(String::new(), |c| fmt_float(c.spearman.r)),
                ]));
            }
            out.push('\n');
            for f in &sig.sign_flips {
                let _ = writeln!(
                    out,
                    "- Fiedler vs {}: {} at τ={} → {} at τ={}; sign flip: {}",
                    f.metric.as_str(),
                    fmt_float(f.low_r),
                    fmt_float(f.low_tau),
                    fmt_opt(f.high_r),
                    fmt_opt(f.high_tau),
                    if f.flip { "yes" } else { "no" }
                );
            }
            let sig_count = count_significant(sig.correlations.iter().map(|c| c.pearson.p_value), ALPHA);
            let _ = writeln!(out, "- Correlations: {sig_count}\n");
        }
        None => out.push_str("Fewer than three layers: no cross-layer correlations.\n\n"),
    }

    out.push_str("## KL sink-removal profile\n\n");
    out.push_str(&md_header(&["Percentile", "Avg. KL reduction", "Avg. sink concentration", "Early", "Middle", "Late", "Shape"]));
    for sh in &s.kl.shapes {
        let red: Vec<f64> = s.kl.rows.iter().filter(|r| r.percentile == sh.percentile).map(|r| r.reduction).collect();
        let mut cells = vec![fmt_float(sh.percentile), fmt_float(sh.mean_reduction), fmt_float(sh.mean_concentration)];
        cells.extend(bands.iter().map(|(_, r)| fmt_opt(band_mean(&red, r.clone()))));
        cells.push(sh.shape.as_str().to_string());
        out.push_str(&md_row(&cells));
    }
    out.push('\n');

    out.push_str("## Value-space geometry\n\n");
    let [f, m, l] = s.valuespace.first_middle_last;
    out.push_str(&md_header(&["Metric", "First layer", "Middle layer", "Last layer"]));
    let rows = &s.valuespace.rows;
    let pick = |i: usize, g: &dyn Fn(&crate::valuespace::ValueSpaceRow) -> Option<f64>| rows.get(i).and_then(g);
    let metrics: [(&str, &dyn Fn(&crate::valuespace::ValueSpaceRow) -> Option<f64>); 7] = [
        ("Relative magnitude", &|r| r.relative_magnitude),
        ("Directional influence", &|r| r.directional_influence),
        ("Structural KL", &|r| Some(r.structural_kl)),
        ("Reference count", &|r| Some(r.ref_count)),
        ("Transformation magnitude", &|r| r.mean_transform_magnitude),
        ("Entropy-magnitude corr.", &|r| r.entropy_magnitude_corr),
        ("Geometric-semantic alignment", &|r| r.geom_semantic_alignment),
    ];
    for (name, g) in metrics {
        out.push_str(&md_row(&[name.to_string(), fmt_opt(pick(f, g)), fmt_opt(pick(m, g)), fmt_opt(pick(l, g))]));
    }
    let _ = writeln!(
        out,
        "\nMean reference count {} (max {}).\n",
        fmt_float(s.valuespace.mean_ref_count),
        fmt_float(s.valuespace.max_ref_count)
    );

    out.push_str("## Reference-frame verdict\n\n");
    let _ = writeln!(
        out,
        "**{}** (confidence {}). Rule-based reconstruction; thresholds are configuration.\n",
        s.verdict.frame_type,
        fmt_float(s.verdict.confidence)
    );
    out.push_str(&md_header(&["Rule", "Vote", "Weight", "Fired", "Evidence"]));
    for r in &s.verdict.fired_rules {
        out.push_str(&md_row(&[
            r.rule.clone(),
            r.vote.to_string(),
            fmt_float(r.weight),
            r.fired.map_or("absent".to_string(), |b| b.to_string()),
            r.detail.replace('|', "\\|"),
        ]));
    }
    out
}

/// Plot-ready series: `(file name, TSV content)`.
pub fn render_series(s: &AnalysisSummary) -> Vec<(&'static str, String)> {
    let mut betti = Table::tsv(&["layer", "threshold", "betti0", "betti1"]);
    for l in &s.topology.layers {
        for (k, &t) in s.topology.thresholds.iter().enumerate() {
            betti.push(vec![l.layer.to_string(), fmt_float(t), fmt_float(l.betti0_at[k]), fmt_float(l.betti1_at[k])]);
        }
    }
    let mut spectral = Table::tsv(&["layer", "tau", "fiedler", "star_likeness", "centralization", "density"]);
    for r in &s.spectral {
        spectral.push(vec![
            r.layer.to_string(),
            fmt_float(r.tau),
            fmt_float(r.fiedler),
            fmt_float(r.star_likeness),
            fmt_float(r.centralization),
            fmt_float(r.density),
        ]);
    }
    let mut kl = Table::tsv(&["layer", "percentile", "reduction", "concentration"]);
    for r in &s.kl.rows {
        kl.push(vec![r.layer.to_string(), fmt_float(r.percentile), fmt_float(r.reduction), fmt_float(r.sink_concentration)]);
    }
    let mut layers = Table::tsv(&["layer", "sink_concentration", "entropy", "ref_count", "structural_kl"]);
    for (sl, vr) in s.sinks.layers.iter().zip(&s.valuespace.rows) {
        layers.push(vec![
            sl.layer.to_string(),
            fmt_float(sl.concentration),
            fmt_float(sl.mean_entropy),
            fmt_float(vr.ref_count),
            fmt_float(vr.structural_kl),
        ]);
    }
    vec![
        ("series_betti.tsv", betti.into_string()),
        ("series_spectral.tsv", spectral.into_string()),
        ("series_kl.tsv", kl.into_string()),
        ("series_layers.tsv", layers.into_string()),
    ]
}

/// Render `report.md` and the TSV series next to `summary.json` in `dir`.
pub fn write_report(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let summary = read_summary(dir)?;
    let mut written = Vec::new();
    let path = dir.join("report.md");
    write_text(&path, &render_markdown(&summary))?;
    written.push(path);
    for (name, content) in render_series(&summary) {
        let path = dir.join(name);
        write_text(&path, &content)?;
        written.push(path);
    }
    Ok(written)
}
