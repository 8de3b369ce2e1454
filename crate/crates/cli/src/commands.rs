//! Experiment commands. Each command computes its results in memory, then
//! writes its CSV files and a manifest into the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use harvest_sa_core::analysis::{
    bifurcation_sweep, classify_regime, hysteresis_window, poincare_samples, BifurcationData,
    PowerGrid, Regime, SweepDirection,
};
use harvest_sa_core::exec::parallel_map;
use harvest_sa_core::integrator::{integrate, TimeSeries};
use harvest_sa_core::model::HarvesterParams;
use harvest_sa_core::pce::{basis_size, fit, sobol_from_pce, DegreePolicy, PceModel, OVERSAMPLING};
use harvest_sa_core::uq::{
    lhs_sample, mc_first_order, propagate_with, to_physical, Bands, SensitivityReport, SobolMethod,
};

use crate::cache::MeanPowerCache;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_atomic, RunManifest, RunStatus, MANIFEST_VERSION};
use crate::oracles::{run_oracles, OracleCheck};
use crate::table::{self, fmt_f64, Table, VALIDATE_HEADER};

/// Cluster tolerance used when comparing up- and down-sweep attractors.
pub const HYSTERESIS_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Bifurcation,
    PowerMap,
    Sobol(SobolMethod),
    SobolSweep(SobolMethod),
    Propagate,
    Validate,
}

impl Command {
    /// Stem shared by the command's CSV and manifest file names.
    pub fn run_name(self) -> String {
        match self {
            Command::Simulate => "simulate".into(),
            Command::Bifurcation => "bifurcation".into(),
            Command::PowerMap => "power_map".into(),
            Command::Sobol(m) => format!("sobol_{}", m.as_str()),
            Command::SobolSweep(m) => format!("sobol_sweep_{}", m.as_str()),
            Command::Propagate => "propagate".into(),
            Command::Validate => "validate".into(),
        }
    }

    pub fn manifest_name(self) -> String {
        format!("{}.manifest.toml", self.run_name())
    }
}

/// Largest admissible degree policy for `k` inputs and `n` training runs:
/// an adaptive maximum is lowered until the oversampling rule holds.
pub fn admissible_policy(policy: DegreePolicy, k: usize, n: usize) -> CliResult<DegreePolicy> {
    match policy {
        DegreePolicy::Fixed(_) => Ok(policy),
        DegreePolicy::Adaptive { min, max } => {
            let fits = |p: usize| OVERSAMPLING * basis_size(k, p) <= n;
            match (min..=max).rev().find(|&p| fits(p)) {
                Some(top) => Ok(DegreePolicy::Adaptive { min, max: top }),
                None => Err(CliError::Model(harvest_sa_core::error::Error::Config(
                    format!(
                        "{n} training runs cannot support degree {min} with {k} inputs (need {})",
                        OVERSAMPLING * basis_size(k, min)
                    ),
                ))),
            }
        }
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> CliResult<TimeSeries> {
    Ok(integrate(&cfg.nominal, cfg.s0, &cfg.settings)?)
}

/// Up- then down-sweep over the configured amplitude range.
pub fn bifurcation(cfg: &ExperimentConfig) -> CliResult<Vec<BifurcationData>> {
    let opts = cfg.sweep_options();
    let s = &cfg.sweep;
    [SweepDirection::Up, SweepDirection::Down]
        .into_iter()
        .map(|dir| {
            Ok(bifurcation_sweep(
                &cfg.nominal,
                s.f_start,
                s.f_end,
                s.f_steps,
                dir,
                &opts,
            )?)
        })
        .collect()
}

pub fn power_map(cfg: &ExperimentConfig) -> CliResult<PowerGrid> {
    Ok(harvest_sa_core::analysis::power_map(
        &cfg.nominal,
        &cfg.sweep.f_values,
        &cfg.sweep.beta_values,
        &cfg.qoi_options(),
        cfg.workers,
    )?)
}

/// Sobol indices of the configured case at `nominal`. The PCE method also
/// returns the fitted surrogate.
pub fn sobol_at(
    cfg: &ExperimentConfig,
    nominal: &HarvesterParams,
    method: SobolMethod,
    cache: &MeanPowerCache,
) -> CliResult<(SensitivityReport, Option<PceModel>)> {
    let spec = cfg.input_space(nominal)?;
    let opts = cfg.qoi_options();
    let qoi =
        |u: &[f64]| to_physical(u, &spec, nominal).and_then(|prm| cache.mean_power(&prm, &opts));
    match method {
        SobolMethod::Mc => Ok((
            mc_first_order(qoi, &spec, cfg.mc_n, cfg.seed, cfg.workers)?,
            None,
        )),
        SobolMethod::Pce => {
            let policy = admissible_policy(cfg.degree, spec.len(), cfg.pce_n)?;
            let design = lhs_sample(cfg.pce_n, spec.len(), cfg.seed)?;
            let rows: Vec<&[f64]> = design.rows().collect();
            let y = parallel_map(&rows, cfg.workers, |u| qoi(u))?;
            let model = fit(&spec, &design, &y, policy)?;
            let mut report = sobol_from_pce(&model, 2)?;
            report.meta.seed = cfg.seed;
            Ok((report, Some(model)))
        }
    }
}

/// Sobol indices at every amplitude of the sweep grid, with the amplitude
/// itself among the random inputs.
pub fn sobol_sweep(
    cfg: &ExperimentConfig,
    method: SobolMethod,
    cache: &MeanPowerCache,
) -> CliResult<Vec<(f64, SensitivityReport)>> {
    cfg.sweep
        .f_values
        .iter()
        .map(|&f| {
            let nominal = HarvesterParams { f, ..cfg.nominal };
            Ok((f, sobol_at(cfg, &nominal, method, cache)?.0))
        })
        .collect()
}

pub fn propagate(cfg: &ExperimentConfig, cache: &MeanPowerCache) -> CliResult<Bands> {
    let spec = cfg.input_space(&cfg.nominal)?;
    let opts = cfg.qoi_options();
    Ok(propagate_with(
        |prm| cache.mean_power(prm, &opts),
        &spec,
        &cfg.nominal,
        &cfg.sweep.f_values,
        cfg.propagate_n,
        &cfg.percentiles,
        cfg.seed,
        cfg.workers,
    )?)
}

/// Files and facts produced by one command.
struct Product {
    files: Vec<(String, Vec<u8>)>,
    notes: BTreeMap<String, String>,
    simulations: u64,
    /// Set when the command ran but its checks did not pass.
    failure: Option<String>,
}

impl Product {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            notes: BTreeMap::new(),
            simulations: 0,
            failure: None,
        }
    }

    fn csv(&mut self, name: String, t: &Table) -> CliResult<()> {
        self.files.push((name, t.to_csv()?));
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.to_string(), value.to_string());
    }
}

fn regime_note(series: &TimeSeries, omega: f64) -> String {
    match poincare_samples(series, omega, 0.5).and_then(|p| classify_regime(&p)) {
        Ok(Regime::Periodic(k)) => format!("periodic-{k}"),
        Ok(Regime::Aperiodic) => "aperiodic".into(),
        Err(e) => format!("unclassified ({e})"),
    }
}

fn report_notes(p: &mut Product, r: &SensitivityReport) {
    p.note("n_base", r.meta.n_base);
    p.note("n_evaluations", r.meta.n_evaluations);
    p.note("total_explained", fmt_f64(r.total_explained));
    p.note("ranking", r.ranking().join(" > "));
    if let Some(d) = r.meta.degree {
        p.note("pce_degree", d);
    }
    if let Some(loo) = r.meta.loo_error {
        p.note("pce_loo_error", fmt_f64(loo));
    }
}

fn validate_table(checks: &[OracleCheck]) -> Table {
    let mut t = Table::new(&VALIDATE_HEADER);
    for c in checks {
        t.push(vec![
            c.group.into(),
            c.name.into(),
            fmt_f64(c.value),
            fmt_f64(c.tolerance),
            c.passed().to_string(),
        ]);
    }
    t
}

fn execute(cfg: &ExperimentConfig, cmd: Command, cache: &MeanPowerCache) -> CliResult<Product> {
    let mut p = Product::new();
    let stem = cmd.run_name();
    match cmd {
        Command::Simulate => {
            let series = simulate(cfg)?;
            p.simulations = 1;
            p.note("regime", regime_note(&series, cfg.nominal.omega));
            p.csv(format!("{stem}.csv"), &table::time_series_table(&series))?;
        }
        Command::Bifurcation => {
            let sweeps = bifurcation(cfg)?;
            p.simulations = sweeps.iter().map(|s| s.records.len() as u64).sum();
            let window = hysteresis_window(&sweeps[0], &sweeps[1], HYSTERESIS_TOL);
            p.note(
                "hysteresis_f",
                window
                    .iter()
                    .map(|f| fmt_f64(*f))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            let failed: Vec<String> = sweeps
                .iter()
                .flat_map(|s| {
                    s.records
                        .iter()
                        .filter(|r| r.error.is_some())
                        .map(move |r| (s.direction, r))
                })
                .map(|(d, r)| {
                    format!(
                        "{} f={}: {}",
                        d.as_str(),
                        fmt_f64(r.f),
                        r.error.as_deref().unwrap_or("")
                    )
                })
                .collect();
            if !failed.is_empty() {
                p.note("failed_steps", failed.join("; "));
            }
            p.csv(format!("{stem}.csv"), &table::bifurcation_table(&sweeps))?;
        }
        Command::PowerMap => {
            let grid = power_map(cfg)?;
            p.simulations = (grid.f_axis.len() * grid.beta_axis.len()) as u64;
            p.csv(format!("{stem}.csv"), &table::power_map_table(&grid))?;
        }
        Command::Sobol(method) => {
            let (report, model) = sobol_at(cfg, &cfg.nominal, method, cache)?;
            report_notes(&mut p, &report);
            p.csv(format!("{stem}.csv"), &table::sobol_table(&report))?;
            if let Some(model) = model {
                p.files
                    .push(("pce_model.txt".into(), model.to_text().into_bytes()));
            }
        }
        Command::SobolSweep(method) => {
            let reports = sobol_sweep(cfg, method, cache)?;
            if let Some((_, r)) = reports.first() {
                p.note("n_base", r.meta.n_base);
                p.note("n_evaluations_per_point", r.meta.n_evaluations);
            }
            p.csv(format!("{stem}.csv"), &table::sobol_sweep_table(&reports))?;
        }
        Command::Propagate => {
            let bands = propagate(cfg, cache)?;
            p.note("n_samples", bands.n_samples);
            p.note(
                "failures",
                bands
                    .failures
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            p.csv(format!("{stem}.csv"), &table::bands_table(&bands))?;
        }
        Command::Validate => {
            let checks = run_oracles(cfg.workers)?;
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| c.name)
                .collect();
            p.note("checks", checks.len());
            if !failed.is_empty() {
                p.failure = Some(format!("failed checks: {}", failed.join(", ")));
            }
            p.csv(format!("{stem}.csv"), &validate_table(&checks))?;
        }
    }
    p.simulations += cache.misses();
    Ok(p)
}

/// Outcome of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub files: Vec<PathBuf>,
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "harvest-sa-cli".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
        (
            "harvest-sa-core".to_string(),
            harvest_sa_core::VERSION.to_string(),
        ),
    ])
}

fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = write_atomic(&path, bytes) {
            for w in &written {
                let _ = fs::remove_file(w);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}

/// Runs `cmd` and writes its outputs plus a manifest to `cfg.out_dir`. On
/// failure no output file is left behind and the manifest is marked
/// incomplete.
pub fn run(cfg: &ExperimentConfig, cmd: Command) -> CliResult<RunOutcome> {
    let start = Instant::now();
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let manifest_path = dir.join(cmd.manifest_name());
    let cache = MeanPowerCache::new();
    let mut manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        command: cmd.run_name(),
        status: RunStatus::Incomplete,
        error: None,
        config_hash: cfg.hash_hex(),
        seed: cfg.seed,
        workers: cfg.workers,
        wall_clock_seconds: 0.0,
        evaluations: 0,
        cache_hits: 0,
        versions: versions(),
        notes: BTreeMap::new(),
        files: Vec::new(),
    };

    let result = execute(cfg, cmd, &cache).and_then(|product| {
        let written = write_outputs(&dir, &product.files)?;
        Ok((product, written))
    });
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.cache_hits = cache.hits();
    match result {
        Ok((product, written)) => {
            manifest.status = RunStatus::Complete;
            manifest.evaluations = product.simulations;
            manifest.notes = product.notes;
            manifest.files = product
                .files
                .iter()
                .map(|(n, b)| RunManifest::record(n, b))
                .collect();
            if let Err(e) = manifest.write(&manifest_path) {
                for w in &written {
                    let _ = fs::remove_file(w);
                }
                return Err(e);
            }
            if let Some(msg) = product.failure {
                return Err(CliError::Oracle(msg));
            }
            Ok(RunOutcome {
                manifest,
                manifest_path,
                files: written,
            })
        }
        Err(e) => {
            manifest.evaluations = cache.misses();
            manifest.error = Some(e.to_string());
            // The run already failed; a manifest write error would only mask it.
            let _ = manifest.write(&manifest_path);
            Err(e)
        }
    }
}
