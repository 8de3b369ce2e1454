use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use harvest_sa_cli::commands::{run, Command};
use harvest_sa_cli::error::CliError;
use harvest_sa_cli::manifest::RunManifest;
use harvest_sa_cli::{load_config, Overrides};
use harvest_sa_core::uq::{SobolMethod, StudyCase};

#[derive(Parser)]
#[command(
    name = "harvest-sa",
    version,
    about = "Sensitivity analysis of a bistable piezoelectric energy harvester"
)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides [output] dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides [uq] seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); overrides [output] workers.
    #[arg(long, global = true, env = "HARVEST_SA_WORKERS")]
    workers: Option<usize>,
    /// Study case; overrides [uq] case.
    #[arg(long, global = true, value_enum)]
    case: Option<CaseArg>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Classical,
    #[value(name = "nl_coupling")]
    NlCoupling,
    Asymmetric,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mc,
    Pce,
}

#[derive(Subcommand)]
enum Cmd {
    /// Time series at the nominal parameters.
    Simulate,
    /// Up and down amplitude sweeps with stroboscopic voltages.
    Bifurcation,
    /// Mean power over the (beta, f) grid.
    PowerMap,
    /// Sobol indices at the nominal amplitude.
    Sobol {
        #[arg(long, value_enum, default_value = "pce")]
        method: MethodArg,
    },
    /// Sobol indices at every amplitude of the sweep grid.
    SobolSweep {
        #[arg(long, value_enum, default_value = "pce")]
        method: MethodArg,
    },
    /// Percentile bands of the mean power along the sweep grid.
    Propagate,
    /// Built-in oracle checks.
    Validate,
    /// Checks output files against a run manifest.
    VerifyManifest { manifest: PathBuf },
}

fn method(m: MethodArg) -> SobolMethod {
    match m {
        MethodArg::Mc => SobolMethod::Mc,
        MethodArg::Pce => SobolMethod::Pce,
    }
}

fn case(c: CaseArg) -> StudyCase {
    match c {
        CaseArg::Classical => StudyCase::Classical,
        CaseArg::NlCoupling => StudyCase::NlCoupling,
        CaseArg::Asymmetric => StudyCase::Asymmetric,
        CaseArg::Full => StudyCase::Full,
    }
}

fn verify(path: &std::path::Path) -> Result<(), CliError> {
    let manifest = RunManifest::load(path)?;
    let dir = path.parent().unwrap_or(std::path::Path::new("."));
    let problems = manifest.verify(dir);
    if problems.is_empty() {
        println!(
            "{}: {} files verified",
            path.display(),
            manifest.files.len()
        );
        Ok(())
    } else {
        Err(CliError::Manifest(problems.join("; ")))
    }
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let command = match cli.command {
        Cmd::VerifyManifest { manifest } => return verify(&manifest),
        Cmd::Simulate => Command::Simulate,
        Cmd::Bifurcation => Command::Bifurcation,
        Cmd::PowerMap => Command::PowerMap,
        Cmd::Sobol { method: m } => Command::Sobol(method(m)),
        Cmd::SobolSweep { method: m } => Command::SobolSweep(method(m)),
        Cmd::Propagate => Command::Propagate,
        Cmd::Validate => Command::Validate,
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        workers: cli.workers,
        case: cli.case.map(case),
    };
    let cfg = load_config(cli.config.as_deref(), &overrides)?;
    let outcome = run(&cfg, command)?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for (k, v) in &outcome.manifest.notes {
        println!("{k}: {v}");
    }
    println!("manifest {}", outcome.manifest_path.display());
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(match e {
                CliError::ConfigSyntax { .. } | CliError::ConfigValue { .. } => 2,
                _ => 1,
            })
        }
    }
}
