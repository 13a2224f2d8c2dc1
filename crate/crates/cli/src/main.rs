//! `ismo`: generate data, train, segment, reconstruct and evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ismo_core::CoreError;

/// Bad flags, keys or values supplied by the caller.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "ismo", version, about = "Monocular thin-plate surface reconstruction")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct ConfigArgs {
    /// TOML file with [dataset], [masks], [segmenter], [model], [discriminator],
    /// [train], [eval], [occlusion] and [throughput] sections.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs_rec=20`. Wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train the segmenter or the reconstruction network.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Segment one image.
    Segment {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the surface seen in one image.
    Reconstruct {
        #[arg(long)]
        weights: PathBuf,
        /// Segmenter checkpoint applied before reconstruction.
        #[arg(long, conflicts_with = "no_segment")]
        segmenter: Option<PathBuf>,
        /// Feed the image to the network unsegmented.
        #[arg(long)]
        no_segment: bool,
        #[arg(long)]
        input: PathBuf,
        /// Output surface: `.obj` mesh, otherwise raw little-endian f32.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a generator checkpoint on a dataset's test split.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, env = "ISMO_DATA_ROOT")]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        segmenter: Option<PathBuf>,
        /// Run the occluder sweep.
        #[arg(long)]
        occlusion: bool,
        /// Time the full pipeline and reconstruction alone.
        #[arg(long)]
        throughput: bool,
        /// Directory for PNG plots.
        #[arg(long)]
        plots: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Deformation states, renders, footprints and the manifest.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Shorthand for `--set dataset.states=K`.
        #[arg(long)]
        states: Option<usize>,
        #[arg(long)]
        textures: Option<usize>,
        #[arg(long)]
        cams: Option<usize>,
        #[arg(long)]
        lights: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Image/mask pairs for segmenter training, composited over backgrounds.
    Masks {
        /// Dataset written by `dataset gen`.
        #[arg(long, alias = "frames", env = "ISMO_DATA_ROOT")]
        data: PathBuf,
        /// Directory of background images; procedural ones when omitted.
        #[arg(long)]
        backgrounds: Option<PathBuf>,
        /// Shorthand for `--set masks.count=N`.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Segmenter on a mask set from `dataset masks`.
    Od {
        #[arg(long, env = "ISMO_DATA_ROOT")]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generator and discriminator on a dataset from `dataset gen`.
    Rec {
        #[arg(long, env = "ISMO_DATA_ROOT")]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Segmenter checkpoint producing the training inputs.
        #[arg(long)]
        segmenter: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// The error chain on one line, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string().replace('\n', " ");
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn category(e: &anyhow::Error) -> (&'static str, u8) {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return ("usage", 2);
        }
        if let Some(c) = cause.downcast_ref::<CoreError>() {
            return match c.category() {
                "io" => ("io", 3),
                "numeric" => ("numeric", 4),
                "config" | "argument" => (c.category(), 2),
                other => (other, 1),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<image::ImageError>().is_some() {
            return ("io", 3);
        }
        if let Some(n) = cause.downcast_ref::<ismo_nn::NnError>() {
            return if matches!(n, ismo_nn::NnError::Io(_)) { ("io", 3) } else { ("checkpoint", 1) };
        }
    }
    ("internal", 1)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    use commands::*;
    match cli.command {
        Command::Dataset(DatasetCmd::Gen { out, states, textures, cams, lights, seed, mut cfg }) => {
            let flags = [("states", states.map(|v| v as u64)), ("textures", textures.map(|v| v as u64)), ("cameras", cams.map(|v| v as u64)), ("lights", lights.map(|v| v as u64)), ("seed", seed)];
            let set: Vec<String> = flags.iter().filter_map(|(k, v)| v.map(|v| format!("dataset.{k}={v}"))).collect();
            cfg.overrides.splice(0..0, set);
            dataset_gen(&out, &cfg)
        }
        Command::Dataset(DatasetCmd::Masks { data, backgrounds, count, out, mut cfg }) => {
            if let Some(n) = count {
                cfg.overrides.insert(0, format!("masks.count={n}"));
            }
            dataset_masks(&data, backgrounds.as_deref(), &out, &cfg)
        }
        Command::Train(TrainCmd::Od { data, out, cfg }) => train_od(&data, &out, &cfg),
        Command::Train(TrainCmd::Rec { data, out, segmenter, cfg }) => train_rec(&data, &out, segmenter.as_deref(), &cfg),
        Command::Segment { weights, input, out } => segment(&weights, &input, &out),
        Command::Reconstruct { weights, segmenter, no_segment: _, input, out } => {
            reconstruct(&weights, segmenter.as_deref(), &input, &out)
        }
        Command::Eval { weights, data, report, segmenter, occlusion, throughput, plots, cfg } => {
            let opts = EvalFlags { occlusion, throughput, plots };
            eval(&weights, &data, &report, segmenter.as_deref(), &opts, &cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp_secs().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (cat, code) = category(&e);
            let msg = describe(&e);
            eprintln!("error[{cat}]: {msg}");
            ExitCode::from(code)
        }
    }
}
