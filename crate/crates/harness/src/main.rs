use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use greenrec::ensemble::Pipeline;
use greenrec_energy::BaselineBand;
use greenrec_harness::config::{suite_names, ExperimentConfig, ModelEntry};
use greenrec_harness::record::{pipeline_str, read_results, Status};
use greenrec_harness::report::{efficiency_tsv, report_comparison, report_efficiency};
use greenrec_harness::{prepare, run_suite, HarnessError, Metering, RunOptions, RESULTS_FILE};

/// Benchmark recommenders for accuracy, energy and carbon.
#[derive(Parser)]
#[command(name = "greenrec", version)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Interaction file to use instead of the configured one.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_pipeline)]
    pipeline: Option<Pipeline>,
    /// Comma-separated model names; replaces the configured list.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Disable energy measurement.
    #[arg(long, global = true)]
    no_meter: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, clean and split the dataset, caching the split.
    Prepare,
    /// Run the model suite, skipping models already in the results file.
    Run {
        /// Re-run models that already have results.
        #[arg(long)]
        force: bool,
    },
    /// Measure mean idle power.
    Baseline {
        #[arg(long, default_value_t = 600.0)]
        duration: f64,
        /// Fail unless the idle draw is within the configured band.
        #[arg(long)]
        check: bool,
    },
    /// Print comparison (or efficiency) tables from the results file.
    Report {
        #[arg(long, default_value = "svd")]
        reference: String,
        /// Ensemble accuracy gain and energy overhead vs. the best single model.
        #[arg(long)]
        efficiency: bool,
    },
    /// List the models of the configured pipeline's suite.
    ListModels,
}

fn parse_pipeline(s: &str) -> Result<Pipeline, String> {
    match s {
        "rating" => Ok(Pipeline::Rating),
        "ranking" => Ok(Pipeline::Ranking),
        _ => Err(format!("`{s}` is not rating or ranking")),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &cli.dataset {
        if cli.config.is_none() {
            cfg.dataset.name = d
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
        }
        cfg.dataset.path = d.clone();
    }
    if let Some(p) = cli.pipeline {
        cfg.pipeline = p;
    }
    if let Some(ms) = &cli.models {
        cfg.models = ms.iter().map(|m| ModelEntry::Name(m.trim().to_owned())).collect();
    }
    if cli.no_meter {
        cfg.meter = None;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
        if let Some(split) = &mut cfg.split {
            split.seed = s;
        }
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(cfg: &ExperimentConfig, name: &str, body: &str) -> Result<(), HarnessError> {
    let dir = cfg.out_dir.join("reports");
    std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io {
        path: dir.clone(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| HarnessError::Io { path, source })?;
    print!("{body}");
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode, HarnessError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Prepare => {
            let p = prepare(&cfg)?;
            println!(
                "{}\tratings={}\tusers={}\titems={}\tsparsity={}\ttrain={}\ttest={}\tsplit={}",
                p.dataset,
                p.stats.ratings,
                p.stats.users,
                p.stats.items,
                p.stats.sparsity,
                p.split.train.len(),
                p.split.test.len(),
                p.split_dir.display()
            );
        }
        Command::Run { force } => {
            let recs = run_suite(&cfg, &RunOptions { force: *force })?;
            let failed = recs.iter().filter(|r| matches!(r.status, Status::Failed(_))).count();
            for r in &recs {
                let metric = r.primary().map_or_else(String::new, |(n, v)| format!("{n}={v:.4}"));
                let energy = r.energy.as_ref().map_or_else(String::new, |e| format!("{:.6} Wh", e.e_experiment_wh));
                println!("{}\t{}\t{metric}\t{energy}", r.model, r.status);
            }
            if failed > 0 {
                eprintln!("{failed} of {} models failed", recs.len());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Baseline { duration, check } => {
            let meter = cfg
                .meter
                .as_ref()
                .ok_or_else(|| HarnessError::Config("baseline needs a meter (drop --no-meter)".into()))?;
            let band = match cfg.idle_check {
                Some(c) => BaselineBand {
                    expected_w: c.expected_w,
                    band_w: c.band_w,
                },
                None => BaselineBand::default(),
            };
            let w = Metering::new(meter, &cfg.out_dir).idle_baseline(*duration, check.then_some(band))?;
            println!("{w:.3}");
        }
        Command::Report { reference, efficiency } => {
            let rows = read_results(&cfg.out_dir.join(RESULTS_FILE))?;
            let p = pipeline_str(cfg.pipeline);
            if *efficiency {
                let t = report_efficiency(&rows, cfg.pipeline)?;
                write_report(&cfg, &format!("efficiency_{p}.tsv"), &efficiency_tsv(&t))?;
            } else {
                let t = report_comparison(&rows, cfg.pipeline, reference)?;
                write_report(&cfg, &format!("comparison_{p}.tsv"), &t.to_tsv())?;
            }
        }
        Command::ListModels => {
            for m in suite_names(cfg.pipeline) {
                println!("{m}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
