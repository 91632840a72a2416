use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synprobe_cli::commands;
use synprobe_cli::config::{parse_assignment, ExperimentConfig, Mode, RawConfig};
use synprobe_cli::error::CliError;

#[derive(Parser)]
#[command(name = "synprobe", version, about = "Structural probe experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data manifest listing treebanks and embeddings per language.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Comma-separated language codes.
    #[arg(long, global = true)]
    lang: Option<String>,
    /// Comma-separated layer indices.
    #[arg(long, global = true)]
    layer: Option<String>,
    /// Comma-separated probe ranks.
    #[arg(long, global = true)]
    rank: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    perplexity: Option<f64>,
    /// Sample at most this many difference vectors.
    #[arg(long, global = true)]
    sample: Option<usize>,
    /// `uuas` or `dspr`.
    #[arg(long, global = true)]
    metric: Option<String>,
    /// Explicit probe checkpoint.
    #[arg(long, global = true)]
    probe: Option<PathBuf>,
    /// Input file for `reduce` or `plot`.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Any config key, as `section.key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate random trees with exactly embeddable vectors.
    Synth,
    /// Train probes for each language (or jointly), layer and rank.
    Train,
    /// Score trained probes on held-out data.
    Eval,
    /// Train source, holdout and joint probes and fill the transfer grid.
    Transfer,
    /// Mean principal angles between per-language probe subspaces.
    Angles,
    /// Head-minus-dependent difference vectors.
    Diffvec,
    /// Project difference vectors to two dimensions.
    Reduce,
    /// Render projected points as SVG.
    Plot,
    /// Adjective-edge accuracy of a probe on other languages.
    Extrapolate,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Command::Synth => Mode::Synth,
            Command::Train => Mode::Train,
            Command::Eval => Mode::Eval,
            Command::Transfer => Mode::Transfer,
            Command::Angles => Mode::Angles,
            Command::Diffvec => Mode::Diffvec,
            Command::Reduce => Mode::Reduce,
            Command::Plot => Mode::Plot,
            Command::Extrapolate => Mode::Extrapolate,
        }
    }
}

fn flag_layer(cli: &Cli) -> RawConfig {
    let mode = cli.command.mode();
    let mut raw = RawConfig::default();
    let path = |p: &PathBuf| p.display().to_string();
    if let Some(v) = &cli.manifest {
        raw.set("data.manifest", path(v));
    }
    if let Some(v) = &cli.lang {
        raw.set("data.languages", v);
    }
    if let Some(v) = &cli.layer {
        raw.set("probe.layer", v);
    }
    if let Some(v) = &cli.rank {
        raw.set("probe.rank", v);
    }
    if let Some(v) = cli.seed {
        raw.set("run.seed", v.to_string());
    }
    if let Some(v) = &cli.out {
        raw.set("run.out", path(v));
    }
    if let Some(v) = cli.perplexity {
        raw.set("reduce.perplexity", v.to_string());
    }
    if let Some(v) = cli.sample {
        raw.set("diffvec.sample", v.to_string());
    }
    if let Some(v) = &cli.metric {
        raw.set("eval.metric", v);
    }
    if let Some(v) = &cli.probe {
        raw.set("probe.path", path(v));
    }
    if let Some(v) = &cli.input {
        let key = if mode == Mode::Plot { "plot.input" } else { "reduce.input" };
        raw.set(key, path(v));
    }
    for (k, v) in &cli.set {
        raw.set(k, v);
    }
    raw
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let mut raw = match &cli.config {
        Some(p) => RawConfig::load(p, &mut problems),
        None => RawConfig::default(),
    };
    raw.overlay(&flag_layer(cli));
    let cfg = ExperimentConfig::resolve(cli.command.mode(), &raw, problems)?;
    let outcome = commands::run(&cfg)?;
    for m in &outcome.messages {
        println!("{m}");
    }
    println!("run manifest: {}", outcome.run_manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("synprobe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
