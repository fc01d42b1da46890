use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use infiris::{EncoderKind, PupilPolarity, SegmenterKind};

mod commands;
mod index;

#[derive(Parser, Debug)]
#[command(name = "infiris", version, about = "Infant-aware iris recognition pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Seed overriding the configured corpus or augmentation seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// JSON configuration file. Flags override its values.
    #[arg(long, global = true, env = "INFIRIS_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CorpusArgs {
    /// Number of subjects.
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Samples per subject.
    #[arg(long)]
    pub samples: Option<usize>,
    /// bright_pupil or dark_pupil.
    #[arg(long)]
    pub polarity: Option<PupilPolarity>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct MethodArgs {
    /// infant, adult_legacy or nn.
    #[arg(long)]
    pub mode: Option<SegmenterKind>,
    /// Network weight file for `--mode nn`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EncoderArgs {
    /// loggabor1d, gabor2d or bank.
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    /// Kernel-bank file for `--encoder bank`.
    #[arg(long)]
    pub bank: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a ground-truthed synthetic corpus.
    Synth {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Brighten pupils and rotate a corpus to mimic infant captures.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Drop entries whose sharpness is below the threshold.
    Curate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compute quality metrics for every entry.
    Quality {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Segment every image in a manifest.
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
    },
    /// Segment, normalize and encode every image in a manifest.
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Score all pairs of an encoded corpus.
    Match {
        /// `codes.json` written by `encode`.
        #[arg(long)]
        codes: PathBuf,
    },
    /// Evaluate a score table.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        /// Treat larger scores as more similar.
        #[arg(long)]
        higher_is_genuine: bool,
    },
    /// Remove synthetic codes that match any authentic code.
    Leakfilter {
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        authentic: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Render, segment, encode, match and evaluate in one run.
    Pipeline {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            report_error("runtime", &e.to_string());
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(1)
        }
    }
}

/// One JSON object per failure on stderr.
fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}
