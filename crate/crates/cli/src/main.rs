//! `attngeo` command-line front end.
//!
//! Exit codes: 0 ok, 1 usage or argument error, 2 dump validation failure,
//! 3 inconclusive classification. Diagnostics go to stderr; machine products
//! go to disk (and, for `classify`, the verdict JSON to stdout).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use attngeo::analysis::{analyze_with_threads, classify_dump, write_outputs, AnalysisConfig};
use attngeo::dumpio::read_dump;
use attngeo::exec::with_threads;
use attngeo::output::{fmt_float, to_json_string, write_text, Table};
use attngeo::report::write_report;
use attngeo::rmt::compare_dumps;
use attngeo::synth::{write_synthetic, FrameKind, SynthSpec};
use clap::{Args, Parser, Subcommand};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "attngeo", version, about = "Geometric and topological analysis of attention dumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis module and write CSV/JSON products plus summary.json.
    Analyze {
        dump: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Print the reference-frame verdict as JSON.
    Classify {
        dump: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Write a synthetic dump with planted reference structure and its ground truth.
    Synth(SynthArgs),
    /// Per-layer RMT and sink deltas between two checkpoints of one model.
    Compare {
        early: PathBuf,
        late: PathBuf,
        #[arg(short, long, default_value = "compare_out")]
        out: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Render report.md and TSV series from an analyze output directory.
    Report { out: PathBuf },
    /// Check a dump against the format invariants without analyzing it.
    Validate { dump: PathBuf },
}

#[derive(Args)]
struct AnalysisOpts {
    /// JSON file with (partial) analysis configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph thresholds for the spectral module, comma-separated.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Percentile of attention weights that sets the sink threshold.
    #[arg(long)]
    tau_percentile: Option<f64>,
    /// Minimum fraction of rows reaching the threshold for a sink column.
    #[arg(long)]
    gamma: Option<f64>,
    /// Sink percentiles (fractions) for the KL removal profile, comma-separated.
    #[arg(long, value_delimiter = ',')]
    kl_percentiles: Option<Vec<f64>>,
    /// Smoothing mass given to removed sink columns.
    #[arg(long)]
    kl_eps: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "ATTNGEO_THREADS", default_value_t = 0)]
    threads: usize,
}

impl AnalysisOpts {
    fn config(&self) -> Result<AnalysisConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => AnalysisConfig::default(),
        };
        if let Some(t) = &self.thresholds {
            cfg.spectral.thresholds = t.clone();
        }
        if let Some(p) = self.tau_percentile {
            cfg.sinks.tau_percentile = p;
        }
        if let Some(g) = self.gamma {
            cfg.sinks.gamma = g;
        }
        if let Some(p) = &self.kl_percentiles {
            cfg.kl.sink_percentiles = p.clone();
        }
        if let Some(e) = self.kl_eps {
            cfg.kl.epsilon = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "centralized")]
    frame: FrameKind,
    /// Reference positions, comma-separated.
    #[arg(long, value_delimiter = ',')]
    refs: Option<Vec<usize>>,
    /// Attention mass per reference position.
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    /// Dirichlet noise level in [0, 1).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Planted 4-cycles in early layers (non-causal frames).
    #[arg(long)]
    rings: Option<usize>,
    /// Force causal (true) or bidirectional (false) masking.
    #[arg(long)]
    causal: Option<bool>,
    /// Omit Q/K/V blocks.
    #[arg(long)]
    no_qkv: bool,
    /// Omit hidden-state blocks.
    #[arg(long)]
    no_hidden: bool,
    #[arg(short, long, default_value = "synth_dump")]
    out: PathBuf,
}

impl SynthArgs {
    fn spec(&self) -> SynthSpec {
        let mut s = SynthSpec::new(self.frame);
        s.seed = self.seed;
        if let Some(r) = &self.refs {
            s.ref_positions = r.clone();
        }
        if let Some(m) = self.mass {
            s.sink_mass = m;
        }
        s.layers = self.layers.unwrap_or(s.layers);
        s.heads = self.heads.unwrap_or(s.heads);
        s.seq_len = self.seq_len.unwrap_or(s.seq_len);
        s.noise = self.noise.unwrap_or(s.noise);
        s.samples = self.samples.unwrap_or(s.samples);
        s.rings = self.rings.unwrap_or(s.rings);
        s.causal = self.causal.or(s.causal);
        s.with_qkv = !self.no_qkv;
        s.with_hidden = !self.no_hidden;
        s
    }
}

fn load(path: &Path) -> Result<attngeo::ModelDump> {
    read_dump(path).with_context(|| format!("reading dump {}", path.display()))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze { dump, out, opts } => {
            let cfg = opts.config()?;
            let d = load(&dump)?;
            let analysis = analyze_with_threads(&d, &cfg, opts.threads)?;
            let files = write_outputs(&analysis, &d, &out)?;
            eprintln!(
                "{}: {} (confidence {}); wrote {} files to {}",
                d.manifest.model_id,
                analysis.summary.verdict.frame_type,
                fmt_float(analysis.summary.verdict.confidence),
                files.len(),
                out.display()
            );
            Ok(0)
        }
        Command::Classify { dump, opts } => {
            let cfg = opts.config()?;
            let d = load(&dump)?;
            let (features, verdict) = with_threads(opts.threads, || classify_dump(&d, &cfg))?;
            let body = serde_json::json!({ "features": features, "verdict": verdict });
            print!("{}", to_json_string(&body)?);
            eprintln!("{}: {}", d.manifest.model_id, verdict.frame_type);
            Ok(if verdict.is_conclusive() { 0 } else { EXIT_INCONCLUSIVE })
        }
        Command::Synth(args) => {
            let spec = args.spec();
            let d = write_synthetic(&spec, &args.out)?;
            eprintln!("wrote {} ({} samples) to {}", d.manifest.model_id, d.samples.len(), args.out.display());
            Ok(0)
        }
        Command::Compare { early, late, out, opts } => {
            let cfg = opts.config()?;
            let (e, l) = (load(&early)?, load(&late)?);
            let report = with_threads(opts.threads, || compare_dumps(&e, &l, &cfg.sinks))?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_text(out.join("compare.json"), &to_json_string(&report)?)?;
            let mut t = Table::csv(&["layer", "spectral_gap", "participation_ratio", "entropy", "sink_concentration"]);
            for d in &report.layers {
                t.push(vec![
                    d.layer.to_string(),
                    fmt_float(d.spectral_gap),
                    fmt_float(d.participation_ratio),
                    fmt_float(d.entropy),
                    fmt_float(d.sink_concentration),
                ]);
            }
            write_text(out.join("compare.csv"), t.as_str())?;
            let label = |l: &Option<String>, p: &Path| l.clone().unwrap_or_else(|| p.display().to_string());
            eprintln!("compared {} -> {}; wrote {}", label(&report.early_label, &early), label(&report.late_label, &late), out.display());
            Ok(0)
        }
        Command::Report { out } => {
            let files = write_report(&out)?;
            eprintln!("wrote {} files to {}", files.len(), out.display());
            Ok(0)
        }
        Command::Validate { dump } => {
            let d = load(&dump)?;
            eprintln!(
                "ok: {} ({} layers, {} heads, {} samples)",
                d.manifest.model_id,
                d.num_layers(),
                d.num_heads(),
                d.samples.len()
            );
            Ok(0)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<attngeo::Error>()) {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
