//! Command-line driver for history-matching experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hmlab::harness::{
    assemble_report, emit_report, evaluate, generate, load_json, load_or_run, run_forecast, run_methods, save_json,
    write_dataset, write_error_table, Artifacts, Dataset, ExperimentConfig, ForecastReport, GoldStandard,
    MethodReport, MethodResult, Setup,
};
use hmlab::{Error, Result};

#[derive(Parser)]
#[command(name = "hmlab", version, about = "Gaussian approximations vs. a pCN reference posterior")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for stage artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Directory holding cached reference posteriors.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the truth and write noisy observations.
    Generate,
    /// Run (or load from cache) the pCN reference posterior.
    Mcmc,
    /// Run one configured approximation by label, or `all`.
    Approx {
        #[arg(long)]
        method: String,
    },
    /// Relative errors of every approximation against the reference.
    Evaluate,
    /// Forecast spread of the reference and the approximations.
    Forecast,
    /// Assemble report.json and the CSV tables.
    Report,
    /// All stages in order.
    Run,
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Config = 2,
    Generate = 3,
    Mcmc = 4,
    Approx = 5,
    Evaluate = 6,
    Forecast = 7,
    Report = 8,
}

type StageResult<T> = std::result::Result<T, (Stage, Error)>;

fn at<T>(stage: Stage, r: Result<T>) -> StageResult<T> {
    r.map_err(|e| (stage, e))
}

fn load_setup(c: &Common) -> Result<Setup> {
    let path = c
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Setup::new(cfg)
}

fn read_data(art: &Artifacts) -> Result<Dataset> {
    let dir = art.data_dir();
    if !dir.join("observations.csv").exists() {
        return Err(Error::Config(format!("no observations in {}; run `generate` first", dir.display())));
    }
    Dataset::read(&dir)
}

fn read_results(setup: &Setup, art: &Artifacts) -> Result<Vec<MethodResult>> {
    let mut out = Vec::new();
    for m in &setup.cfg.methods {
        let p = art.method(&m.label());
        if p.exists() {
            out.push(load_json(&p)?);
        } else {
            log::warn!("no result for {}; run `approx --method {}`", m.label(), m.label());
        }
    }
    Ok(out)
}

fn stage_generate(setup: &Setup, art: &Artifacts) -> Result<()> {
    let data = generate(setup)?;
    write_dataset(setup, &data, &art.data_dir())?;
    log::info!("wrote {} observations, checksum {}", data.observations.len(), data.checksum());
    Ok(())
}

fn stage_mcmc(setup: &Setup, art: &Artifacts, cache: Option<&Path>) -> Result<()> {
    let data = read_data(art)?;
    let gold = load_or_run(setup, &data, cache)?;
    gold.save(&art.gold())?;
    gold.write_traces(&art.dir.join("chains"))
}

fn stage_approx(setup: &Setup, art: &Artifacts, method: &str) -> Result<()> {
    let data = read_data(art)?;
    let selected: Vec<_> = setup
        .cfg
        .methods
        .iter()
        .filter(|m| method == "all" || m.label() == method)
        .cloned()
        .collect();
    if selected.is_empty() {
        let labels: Vec<String> = setup.cfg.methods.iter().map(|m| m.label()).collect();
        return Err(Error::Config(format!("no configured method {method}; available: {}", labels.join(", "))));
    }
    run_methods(setup, &data, &selected, Some(art))?;
    Ok(())
}

fn stage_evaluate(setup: &Setup, art: &Artifacts) -> Result<()> {
    let gold = GoldStandard::load(&art.gold())?;
    let evals = evaluate(setup, &gold, &read_results(setup, art)?)?;
    save_json(&art.evaluation(), &evals)?;
    write_error_table(&evals, std::fs::File::create(art.dir.join("errors.csv"))?)
}

fn stage_forecast(setup: &Setup, art: &Artifacts) -> Result<()> {
    let gold = GoldStandard::load(&art.gold())?;
    let fc = run_forecast(setup, &gold, &read_results(setup, art)?)?;
    save_json(&art.forecast(), &fc)
}

fn stage_report(setup: &Setup, art: &Artifacts) -> Result<()> {
    let gold = GoldStandard::load(&art.gold())?;
    let evals: Vec<MethodReport> = load_json(&art.evaluation())?;
    let fc: Option<ForecastReport> = if art.forecast().exists() {
        load_json(&art.forecast())?
    } else {
        None
    };
    emit_report(&assemble_report(setup, &gold, evals, fc), &art.dir)
}

fn execute(cli: &Cli) -> StageResult<()> {
    let setup = at(Stage::Config, load_setup(&cli.common))?;
    let art = Artifacts::new(&cli.common.out);
    let cache = cli.common.cache.as_deref();
    match &cli.command {
        Command::Generate => at(Stage::Generate, stage_generate(&setup, &art)),
        Command::Mcmc => at(Stage::Mcmc, stage_mcmc(&setup, &art, cache)),
        Command::Approx { method } => at(Stage::Approx, stage_approx(&setup, &art, method)),
        Command::Evaluate => at(Stage::Evaluate, stage_evaluate(&setup, &art)),
        Command::Forecast => at(Stage::Forecast, stage_forecast(&setup, &art)),
        Command::Report => at(Stage::Report, stage_report(&setup, &art)),
        Command::Run => {
            at(Stage::Generate, stage_generate(&setup, &art))?;
            at(Stage::Mcmc, stage_mcmc(&setup, &art, cache))?;
            if !setup.cfg.methods.is_empty() {
                at(Stage::Approx, stage_approx(&setup, &art, "all"))?;
            }
            at(Stage::Evaluate, stage_evaluate(&setup, &art))?;
            at(Stage::Forecast, stage_forecast(&setup, &art))?;
            at(Stage::Report, stage_report(&setup, &art))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, e)) => {
            eprintln!("hmlab: {stage:?} stage failed: {e}");
            ExitCode::from(stage as u8)
        }
    }
}
