use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use insomnia_eeg_cli::pipeline::{MetricRow, Pipeline};
use insomnia_eeg_cli::{CliError, PipelineConfig};

/// Insomnia screening from single-channel sleep EEG.
#[derive(Parser)]
#[command(name = "insomnia-eeg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort under <out>/cohort.
    Synth,
    /// Check the manifest's EDF and hypnogram files.
    Ingest,
    /// Resample, filter and segment; flag artifact epochs.
    Preprocess,
    /// Extract the feature table.
    Features,
    /// Split subjects and score features on the training part.
    Select,
    /// Train the classifier.
    Train,
    /// Score the held-out subjects.
    Eval,
    /// Collect the result tables under <out>/report.
    Report,
    /// Per-class sleep-parameter statistics from a manifest.
    Sleepstats {
        /// Manifest to read; defaults to --manifest, then the synthetic cohort.
        manifest: Option<PathBuf>,
    },
    /// Every stage in order.
    Run,
}

#[derive(Args)]
struct Opts {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-subject stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// fp2, c4 or both.
    #[arg(long, global = true)]
    channel: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV of subject_id,class,edf_path,hypnogram_path[,seed].
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// High-pass edge (Hz).
    #[arg(long, global = true)]
    hp: Option<f64>,
    /// Low-pass edge (Hz).
    #[arg(long, global = true)]
    lp: Option<f64>,
    /// Butterworth order.
    #[arg(long, global = true)]
    order: Option<usize>,
    #[arg(long, global = true)]
    zero_phase: bool,
    /// Artifact threshold (µV).
    #[arg(long, global = true)]
    clip_uv: Option<f64>,
    /// Split rows instead of subjects.
    #[arg(long, global = true)]
    epoch_split: bool,
    /// Selection statistics over per-subject means.
    #[arg(long, global = true)]
    per_subject_means: bool,
    /// Override any config key, e.g. `--set train.max_epochs=30`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

impl Opts {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let quote = |s: &str| toml::Value::String(s.to_string()).to_string();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("jobs", self.jobs.map(|v| v.to_string()));
        put("channel", self.channel.as_deref().map(|c| quote(&c.to_ascii_lowercase())));
        put("out", self.out.as_ref().map(|p| quote(&p.display().to_string())));
        put("manifest", self.manifest.as_ref().map(|p| quote(&p.display().to_string())));
        put("preprocess.filter.hp_cutoff", self.hp.map(|v| format!("{v:?}")));
        put("preprocess.filter.lp_cutoff", self.lp.map(|v| format!("{v:?}")));
        put("preprocess.filter.order", self.order.map(|v| v.to_string()));
        put("preprocess.clip_uv", self.clip_uv.map(|v| format!("{v:?}")));
        put("preprocess.filter.zero_phase", self.zero_phase.then(|| "true".into()));
        put("train.epoch_split", self.epoch_split.then(|| "true".into()));
        put("selection.per_subject_means", self.per_subject_means.then(|| "true".into()));
        Ok(out)
    }
}

fn print_metrics(rows: &[MetricRow]) {
    let f = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into());
    for r in rows {
        let m = &r.metrics;
        eprintln!(
            "{:<8} {:<5} n={:<5} acc={} prec={} rec={} f1={} kappa={}",
            r.level,
            r.channel,
            r.confusion.total(),
            f(m.accuracy),
            f(m.precision),
            f(m.recall),
            f(m.f1),
            f(m.kappa)
        );
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(cli.opts.config.as_deref(), &cli.opts.overrides()?)?;
    let p = Pipeline::new(cfg)?;
    match cli.command {
        Command::Synth => {
            let m = p.synth()?;
            eprintln!("cohort manifest: {}", m.display());
        }
        Command::Ingest => {
            let rows = p.ingest()?;
            eprintln!("ingested {} recording(s)", rows.len());
        }
        Command::Preprocess => {
            let (kept, rejected) = p.preprocess()?;
            eprintln!("{kept} epoch(s) kept, {rejected} rejected");
        }
        Command::Features => {
            let (n, skipped) = p.features()?;
            eprintln!("{n} feature vector(s), {skipped} degenerate epoch(s) skipped");
        }
        Command::Select => {
            for (ch, fs) in p.select()? {
                let names: Vec<String> = fs.iter().map(|f| f.to_string()).collect();
                eprintln!("{ch}: {} feature(s): {}", fs.len(), names.join(" "));
            }
        }
        Command::Train => {
            let h = p.train()?;
            eprintln!("trained {} epoch(s), kept epoch {}", h.rows.len(), h.best_epoch);
        }
        Command::Eval => print_metrics(&p.eval()?),
        Command::Report => {
            let dir = p.report()?;
            eprintln!("report written to {}", dir.display());
        }
        Command::Sleepstats { manifest } => {
            let manifest = match manifest.or_else(|| p.cfg.manifest.clone()) {
                Some(m) => m,
                None => p.layout.cohort_manifest(),
            };
            if !manifest.exists() {
                return Err(CliError::StageOrder(format!(
                    "{} is missing; pass a manifest or run `synth` first",
                    manifest.display()
                )));
            }
            std::fs::create_dir_all(&p.layout.out).map_err(|e| CliError::Io(e.to_string()))?;
            p.sleepstats(&manifest, &p.layout.sleep_stats())?;
            eprintln!("wrote {}", p.layout.sleep_stats().display());
        }
        Command::Run => print_metrics(&p.run()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::FAILURE
        }
    }
}
