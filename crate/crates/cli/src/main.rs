//! `znet`: phantom generation, training, prediction, evaluation and the
//! uniform-size simulation from the command line.
//!
//! Exit status is 0 on success, 2 for configuration or input errors and 1
//! for numerical or internal failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use znet::kv::KeyValues;
use znet::pipeline::{self, Command, RunConfig};
use znet::Error;

#[derive(Parser, Debug)]
#[command(name = "znet", version, about = "Z-net prostate segmentation engine")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Uniform-size method: pad_cut, resize2d or resize3d.
    #[arg(long, global = true)]
    method: Option<String>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Any other config key, e.g. `--set epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Write synthetic phantom volumes and masks.
    Phantom,
    /// Train a network on the cases outside the validation split.
    Train,
    /// Segment volumes with a trained checkpoint.
    Predict,
    /// Score predicted masks against reference masks.
    Evaluate,
    /// Round-trip reference masks through each uniform-size method.
    Simulate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Phantom => Command::Phantom,
            Cmd::Train => Command::Train,
            Cmd::Predict => Command::Predict,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Simulate => Command::Simulate,
        }
    }
}

fn overrides(cli: &Cli) -> Result<KeyValues, Error> {
    let mut kv = KeyValues::new();
    for item in &cli.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    if let Some(s) = cli.seed {
        kv.set("seed", s.to_string());
    }
    if let Some(d) = &cli.out_dir {
        kv.set("out_dir", d.display().to_string());
    }
    if let Some(m) = &cli.method {
        kv.set("method", m.as_str());
    }
    if let Some(t) = cli.threads {
        kv.set("threads", t.to_string());
    }
    Ok(kv)
}

fn run(cli: &Cli) -> Result<String, Error> {
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides(cli)?)?;
    pipeline::init_threads(cfg.threads);
    pipeline::run(cli.command.into(), &cfg, &mut |line| eprintln!("{line}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}
