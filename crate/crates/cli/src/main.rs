//! `loadnet`: batch frontend for the load-curve clustering pipeline.
//!
//! Every stage reads its upstream artifacts from the output directory, writes
//! its own artifacts there, and records a `<stage>.manifest.json`.

mod commands;
mod config;
mod error;
mod manifest;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::{CliError, CliResult};
use manifest::Artifacts;

#[derive(Parser, Debug)]
#[command(name = "loadnet", version, about = "Cluster daily load curves through community detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Parse meter CSVs into normalized daily curves.
    Ingest,
    /// Banded DTW distances between all curve pairs.
    Distances,
    /// Epsilon-nearest-neighbour graph from the distance matrix.
    Graph,
    /// Louvain communities at one resolution.
    Cluster,
    /// DBA typical load profile per community.
    Tlp,
    /// Validity indices for the community and/or K-medoids clustering.
    Validate,
    /// K-medoids clustering with a matched or given cluster count.
    Baseline,
    /// Cluster and score every resolution of the gamma grid.
    Sweep,
    /// Pick the best sweep point per cluster-count interval.
    Directory,
    /// Generate a labelled synthetic corpus.
    Synth,
}

/// Flags mirror the config-file keys (`--edge-rule` is `edge_rule`).
#[derive(Args, Debug, Default)]
struct Settings {
    /// Flat key=value config file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Skip upstream checks and recompute even when up to date.
    #[arg(long, global = true)]
    force: bool,

    /// Input meter CSV files, comma separated.
    #[arg(long, global = true, value_name = "CSV[,CSV...]")]
    input: Option<String>,
    /// Artifact directory [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Warping window w, |i-j| < w [default: 4]
    #[arg(long, global = true)]
    window: Option<String>,
    /// DTW per-cell cost: absolute|squared
    #[arg(long, global = true)]
    cost: Option<String>,
    /// Threshold multiplier lambda [default: 0.5]
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// union|intersection|global-mean
    #[arg(long, global = true)]
    edge_rule: Option<String>,
    /// Resolution for `cluster` [default: 1.0]
    #[arg(long, global = true)]
    gamma: Option<String>,
    /// Gain form: literal|standard
    #[arg(long, global = true)]
    gamma_mode: Option<String>,
    /// Sweep grid start [default: 1.0]
    #[arg(long, global = true)]
    gamma_start: Option<String>,
    /// Sweep grid end [default: 0.7]
    #[arg(long, global = true)]
    gamma_end: Option<String>,
    /// Sweep grid step [default: 0.01]
    #[arg(long, global = true)]
    gamma_step: Option<String>,
    /// Interval boundaries [default: 1,10,100]
    #[arg(long, global = true)]
    intervals: Option<String>,
    /// Score Function form: corrected|literal
    #[arg(long, global = true)]
    sf_mode: Option<String>,
    /// S_Dbw density form: corrected|literal
    #[arg(long, global = true)]
    sdbw_mode: Option<String>,
    /// Which clustering `validate` scores: cicd|baseline|both
    #[arg(long, global = true)]
    method: Option<String>,
    /// Score the baseline with DBA centers instead of medoids (true|false)
    #[arg(long, global = true)]
    force_dba: Option<String>,
    /// Baseline cluster count; matched to `cluster` when unset
    #[arg(long, global = true)]
    k: Option<String>,
    /// Baseline seeding: greedy|random
    #[arg(long, global = true)]
    baseline_init: Option<String>,
    /// Seed for random baseline seeding
    #[arg(long, global = true)]
    baseline_seed: Option<String>,
    /// Synthetic curves per template [default: 100]
    #[arg(long, global = true)]
    synth_curves_per_template: Option<String>,
    /// Synthetic noise as a fraction of template peak [default: 0.1]
    #[arg(long, global = true)]
    synth_noise: Option<String>,
    /// Synthetic days per household [default: 10]
    #[arg(long, global = true)]
    synth_days_per_household: Option<String>,
    /// Synthetic generator seed
    #[arg(long, global = true)]
    synth_seed: Option<String>,
    /// Worker threads, 0 for all cores
    #[arg(long, global = true)]
    threads: Option<String>,
}

impl Settings {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("input", &self.input),
            ("out", &self.out),
            ("window", &self.window),
            ("cost", &self.cost),
            ("lambda", &self.lambda),
            ("edge_rule", &self.edge_rule),
            ("gamma", &self.gamma),
            ("gamma_mode", &self.gamma_mode),
            ("gamma_start", &self.gamma_start),
            ("gamma_end", &self.gamma_end),
            ("gamma_step", &self.gamma_step),
            ("intervals", &self.intervals),
            ("sf_mode", &self.sf_mode),
            ("sdbw_mode", &self.sdbw_mode),
            ("method", &self.method),
            ("force_dba", &self.force_dba),
            ("k", &self.k),
            ("baseline_init", &self.baseline_init),
            ("baseline_seed", &self.baseline_seed),
            ("synth_curves_per_template", &self.synth_curves_per_template),
            ("synth_noise", &self.synth_noise),
            ("synth_days_per_household", &self.synth_days_per_household),
            ("synth_seed", &self.synth_seed),
            ("threads", &self.threads),
        ];
        debug_assert_eq!(pairs.len(), config::KEYS.len());
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.settings.config {
        Some(p) => config::read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let cfg = RunConfig::resolve(file, cli.settings.flags())?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cfg.threads)))?;
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let a = Artifacts::new(&cfg, cli.settings.force);
    match cli.command {
        Command::Ingest => commands::ingest(&a),
        Command::Distances => commands::distances(&a),
        Command::Graph => commands::graph(&a),
        Command::Cluster => commands::cluster(&a),
        Command::Tlp => commands::tlp(&a),
        Command::Validate => commands::validate(&a),
        Command::Baseline => commands::baseline(&a),
        Command::Sweep => commands::sweep(&a),
        Command::Directory => commands::directory(&a),
        Command::Synth => commands::synth(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("loadnet: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
