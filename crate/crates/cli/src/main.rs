//! `fiberlat`: run single evaluations and convergence studies from a JSON config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fiberlat_core::experiments::output::save_json;
use fiberlat_core::experiments::{
    converge_minimizers, converge_recovery, converge_sigma, fibers_table, field_table, ExperimentConfig, Study,
};
use fiberlat_core::{expected_edge_count, limit_total, restrict, total_energy, Error, ModelParams, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fiberlat", version, about = "Discrete elasticity with random long-range fibers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON study configuration; the default study when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed list by seeds derived from this base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sample symmetric fiber sets.
    #[arg(long)]
    symmetric: bool,
    /// Add per-run wall-clock times to the CSV output.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Clone)]
struct Single {
    #[command(flatten)]
    common: Common,
    /// Grid size; the first entry of `eps_sequence` when absent.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the parameters and print the derived exponents.
    Validate(Common),
    /// Sample one fiber set and write it as CSV.
    SampleFibers(Single),
    /// Evaluate the discrete energy of the sampled displacement preset.
    Energy(Single),
    /// Minimize the discrete energy for one instance.
    Minimize(Single),
    /// Evaluate the continuum limit energy of the displacement preset.
    LimitEnergy(Common),
    /// Coefficient-averaging study.
    ConvergeSigma(Common),
    /// Recovery-sequence study.
    ConvergeRecovery(Common),
    /// Minimizer-convergence study.
    ConvergeMinimizers(Common),
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(base) = self.seed {
            cfg = cfg.reseed(base);
        }
        if self.symmetric {
            cfg.symmetric = true;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        Ok(cfg)
    }

    fn study(&self) -> Result<(ExperimentConfig, Study)> {
        let cfg = self.config()?;
        let study = cfg.resolve()?;
        Ok((cfg, study))
    }
}

/// The output directory, created on demand. `None` means stdout only.
fn out_dir(cfg: &ExperimentConfig) -> Result<Option<PathBuf>> {
    match &cfg.output {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn emit<T: Serialize>(value: &T, dir: Option<&Path>, name: &str) -> Result<()> {
    if let Some(dir) = dir {
        save_json(value, &dir.join(name))?;
    }
    print_json(value);
    Ok(())
}

#[derive(Serialize)]
struct Exponents {
    params: ModelParams,
    kernel: f64,
    probability: f64,
    sigma: f64,
    connection_strength: f64,
    edge_count: f64,
    variance_decay: f64,
    c_bar: f64,
}

fn validate(c: &Common) -> Result<()> {
    let (cfg, study) = c.study()?;
    let p = study.params;
    let report = Exponents {
        params: p,
        kernel: p.kernel_exponent(),
        probability: p.probability_exponent(),
        sigma: p.sigma_exponent(),
        connection_strength: p.connection_strength_exponent(),
        edge_count: p.edge_count_exponent(),
        variance_decay: p.variance_decay_exponent(),
        c_bar: p.c_bar(),
    };
    emit(&report, out_dir(&cfg)?.as_deref(), "validate.json")
}

fn single_eps(s: &Single, study: &Study) -> f64 {
    s.eps.unwrap_or(study.eps_sequence[0])
}

#[derive(Serialize)]
struct SampleReport {
    eps: f64,
    seed: u64,
    nodes: usize,
    edges: usize,
    expected_edges: f64,
    total_weight: f64,
}

fn sample_fibers(s: &Single) -> Result<()> {
    let (cfg, study) = s.common.study()?;
    let eps = single_eps(s, &study);
    let seed = study.seeds[0];
    let inst = study.instance(eps, seed)?;
    let report = SampleReport {
        eps,
        seed,
        nodes: inst.grid.len(),
        edges: inst.fibers.len(),
        expected_edges: expected_edge_count(&inst.params, &inst.grid),
        total_weight: inst.fibers.total_weight(),
    };
    let dir = out_dir(&cfg)?;
    if let Some(dir) = &dir {
        fibers_table(&inst.fibers).save(&dir.join("fibers.csv"))?;
    }
    emit(&report, dir.as_deref(), "sample_fibers.json")
}

#[derive(Serialize)]
struct EnergyReport {
    eps: f64,
    seed: u64,
    displacement: String,
    energy: fiberlat_core::EnergyBreakdown,
}

fn energy(s: &Single) -> Result<()> {
    let (cfg, study) = s.common.study()?;
    let eps = single_eps(s, &study);
    let seed = study.seeds[0];
    let inst = study.instance(eps, seed)?;
    let u = restrict(study.displacement.as_ref(), &inst.grid);
    let energy = total_energy(&u, &inst.force, &inst.fibers, study.potential.as_ref())?;
    let report = EnergyReport {
        eps,
        seed,
        displacement: cfg.displacement.clone(),
        energy,
    };
    emit(&report, out_dir(&cfg)?.as_deref(), "energy.json")
}

#[derive(Serialize)]
struct MinimizeReport {
    eps: f64,
    seed: u64,
    solve: fiberlat_core::solver::SolveSummary,
}

fn minimize(s: &Single) -> Result<()> {
    let (cfg, study) = s.common.study()?;
    let eps = single_eps(s, &study);
    let seed = study.seeds[0];
    let inst = study.instance(eps, seed)?;
    let report = study.minimize(&inst)?;
    let dir = out_dir(&cfg)?;
    if let Some(dir) = &dir {
        field_table(&report.minimizer).save(&dir.join("minimizer.csv"))?;
    }
    let summary = MinimizeReport {
        eps,
        seed,
        solve: report.summary(),
    };
    emit(&summary, dir.as_deref(), "minimize.json")
}

fn limit_energy(c: &Common) -> Result<()> {
    let (cfg, study) = c.study()?;
    let energy = limit_total(
        study.displacement.as_ref(),
        study.force.as_ref(),
        &study.domain,
        &study.params,
        study.potential.as_ref(),
        &study.limit,
    )?;
    emit(&energy, out_dir(&cfg)?.as_deref(), "limit_energy.json")
}

/// Write `<name>.csv` (if an output directory is set) and print the summary.
fn finish<T: Serialize>(
    cfg: &ExperimentConfig,
    name: &str,
    table: fiberlat_core::experiments::Table,
    summary: &T,
) -> Result<()> {
    let dir = out_dir(cfg)?;
    if let Some(dir) = &dir {
        table.save(&dir.join(format!("{name}.csv")))?;
    }
    emit(summary, dir.as_deref(), &format!("{name}_summary.json"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate(c) => validate(&c)?,
        Command::SampleFibers(s) => sample_fibers(&s)?,
        Command::Energy(s) => energy(&s)?,
        Command::Minimize(s) => minimize(&s)?,
        Command::LimitEnergy(c) => limit_energy(&c)?,
        Command::ConvergeSigma(c) => {
            let (cfg, study) = c.study()?;
            let out = converge_sigma(&study)?;
            finish(&cfg, "sigma", out.table(c.timing), &out.summary)?;
        }
        Command::ConvergeRecovery(c) => {
            let (cfg, study) = c.study()?;
            let out = converge_recovery(&study)?;
            finish(&cfg, "recovery", out.table(c.timing), &out.summary)?;
            return Ok(out.summary.passed());
        }
        Command::ConvergeMinimizers(c) => {
            let (cfg, study) = c.study()?;
            let out = converge_minimizers(&study)?;
            finish(&cfg, "minimizers", out.table(c.timing), &out.summary)?;
            return Ok(out.summary.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(passed) => {
            if !passed {
                log::warn!("study finished but did not meet its convergence thresholds");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        1
    } else {
        2
    }
}
