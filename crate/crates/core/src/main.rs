use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use e2evsr::cli::{cmd_eval, cmd_predict, cmd_pretrain, cmd_synth, cmd_train, RunConfig, StreamKind};
use e2evsr::Result;

#[derive(Parser)]
#[command(name = "e2evsr", version, about = "Two-stream end-to-end visual speech classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value run configuration; omitted keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured root seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset into --out
    Synth(Common),
    /// Pretrain one stream's encoder stack on the training split
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["raw", "diff"])]
        stream: String,
    },
    /// Fine-tune the full network from pretrained encoders
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        raw_encoder: Option<PathBuf>,
        #[arg(long)]
        diff_encoder: Option<PathBuf>,
    },
    /// Score a model checkpoint on one split
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// train, val or test; overrides eval_split
        #[arg(long)]
        split: Option<String>,
    },
    /// Label a single directory of frames
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        utterance: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(d) = &common.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth(common) => cmd_synth(&load_config(&common)?),
        Command::Pretrain { common, stream } => cmd_pretrain(&load_config(&common)?, StreamKind::parse(&stream)?),
        Command::Train {
            common,
            raw_encoder,
            diff_encoder,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.raw_encoder = raw_encoder.or(cfg.raw_encoder);
            cfg.diff_encoder = diff_encoder.or(cfg.diff_encoder);
            cmd_train(&cfg)
        }
        Command::Eval { common, model, split } => {
            let mut cfg = load_config(&common)?;
            if let Some(split) = split {
                cfg.set("eval_split", &split)?;
            }
            cmd_eval(&cfg, &model)
        }
        Command::Predict {
            common,
            model,
            utterance,
        } => {
            let (class, detail) = cmd_predict(&load_config(&common)?, &model, &utterance)?;
            println!("{class}");
            Ok(detail)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
