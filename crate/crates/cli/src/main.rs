//! `semproj`: batch front end for semantic projection scoring and evaluation.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! runtime failures (I/O, embedding service, cache).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semproj_core::datastore::read_json;
use semproj_core::pipeline::{Overrides, Pipeline};
use semproj_core::synthetic::{generate, SynthConfig};
use semproj_core::{Construct, Error, TimePointFilter};

#[derive(Debug, Parser)]
#[command(
    name = "semproj",
    version,
    about = "Semantic projection scoring and psychometric evaluation"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "semproj.json")]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Time points to analyse: t1, t2 or pooled.
    #[arg(long, global = true, value_parser = parse_time_point)]
    time_point: Option<TimePointFilter>,
    /// Restrict to one construct: depression or worry.
    #[arg(long, global = true, value_parser = parse_construct)]
    construct: Option<Construct>,
    /// Never contact the embedding service; cache misses are errors.
    #[arg(long, global = true)]
    cache_only: bool,
    /// Random seed; recorded in reports.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip invalid input lines instead of failing.
    #[arg(long, global = true)]
    lenient: bool,
    /// Base URL of the embedding service.
    #[arg(long, global = true, env = "SEMPROJ_EMBED_URL")]
    service_url: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or inspect semantic axes.
    #[command(subcommand)]
    Axes(AxesCommand),
    /// Embed every text the later steps need, filling the cache.
    Embed,
    /// Score all responses against the axes of their construct.
    Score,
    /// Compute one evaluation table from stored scores.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Generate synthetic datasets.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Assemble reports from stored evaluation tables.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
enum AxesCommand {
    /// Embed the anchors and write axes.json.
    Build,
    /// Two-component PCA layout of the anchor embeddings.
    Pca,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    Correlations,
    Reliability,
    Sensitivity,
    Distributions,
    Baseline,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Write responses, clinical totals, anchors, a cache, a run config and
    /// the ground-truth ledger.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Generator parameters (JSON); flags override individual fields.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    participants: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    time_points: Option<u8>,
    /// Concentrate the free-text signal in one unit per response.
    #[arg(long)]
    concentrated_text: bool,
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    Render,
}

fn parse_time_point(s: &str) -> Result<TimePointFilter, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_construct(s: &str) -> Result<Construct, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn pipeline(g: &Global) -> Result<Pipeline, Error> {
    Pipeline::from_config_file(
        &g.config,
        Overrides {
            out_dir: g.out.clone(),
            time_point: g.time_point,
            construct: g.construct,
            seed: g.seed,
            service_url: g.service_url.clone(),
            cache_only: g.cache_only,
            lenient: g.lenient,
        },
    )
}

fn synth_generate(g: &Global, args: &GenerateArgs) -> Result<(), Error> {
    let mut config: SynthConfig = match &args.params {
        Some(p) => read_json(p).map_err(|e| Error::InvalidConfig(e.to_string()))?,
        None => {
            if g.seed.is_none() {
                return Err(Error::InvalidConfig("synth generate needs --seed or --params".into()));
            }
            SynthConfig::default()
        }
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(n) = args.participants {
        config.n_participants = n;
    }
    if let Some(d) = args.dim {
        config.dim = d;
    }
    if let Some(t) = args.time_points {
        config.time_points = t;
    }
    config.concentrated_text |= args.concentrated_text;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
    let ds = generate(&config)?;
    ds.write(&out)?;
    println!(
        "wrote {} responses, {} clinical records and {} vectors to {}",
        ds.responses.len(),
        ds.clinical.len(),
        ds.vectors.len(),
        out.display()
    );
    println!("run config: {}", out.join("config.json").display());
    Ok(())
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    if let Command::Synth(SynthCommand::Generate(args)) = &cli.command {
        return synth_generate(g, args);
    }
    let p = pipeline(g)?;
    let eval_dir = p.out_dir.join("eval");
    match &cli.command {
        Command::Axes(AxesCommand::Build) => {
            let registry = p.build_axes()?;
            println!("built {} axes", registry.len());
            wrote(&p.out_dir.join("axes.json"));
        }
        Command::Axes(AxesCommand::Pca) => {
            let layout = p.anchor_pca()?;
            let ratios: Vec<String> = layout
                .explained_variance_ratio
                .iter()
                .map(|r| format!("{r:.3}"))
                .collect();
            println!("explained variance ratio: {}", ratios.join(", "));
            wrote(&p.out_dir.join("plots/anchor_pca.csv"));
        }
        Command::Embed => {
            let s = p.embed()?;
            println!(
                "{} texts: {} cached before, {} after",
                s.texts, s.cached_before, s.cached_after
            );
        }
        Command::Score => {
            let records = p.score()?;
            println!("{} score records", records.len());
            wrote(&p.scores_path());
        }
        Command::Eval(e) => {
            let name = match e {
                EvalCommand::Correlations => {
                    p.eval_correlations()?;
                    "correlations.json"
                }
                EvalCommand::Reliability => {
                    p.eval_reliability()?;
                    "reliability.json"
                }
                EvalCommand::Sensitivity => {
                    p.eval_sensitivity()?;
                    "sensitivity.json"
                }
                EvalCommand::Distributions => {
                    p.eval_distributions()?;
                    "distributions.json"
                }
                EvalCommand::Baseline => {
                    p.eval_baseline()?;
                    "baseline.json"
                }
            };
            wrote(&eval_dir.join(name));
        }
        Command::Report(ReportCommand::Render) => {
            let report = p.render_report()?;
            if !report.metadata.clamped_cells.is_empty() {
                println!(
                    "{} corrected cells were clamped to [-1, 1]",
                    report.metadata.clamped_cells.len()
                );
            }
            wrote(&p.report_path());
            wrote(&p.out_dir.join("report.md"));
        }
        Command::Synth(_) => unreachable!("handled above"),
    }
    Ok(())
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
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
