//! Experiment configuration: a TOML file with the sections `[model]`,
//! `[integrator]`, `[uq]`, `[pce]`, `[sweep]` and `[output]`.
//!
//! Every key is optional except the seed, which may also come from the
//! command line. Omitted keys take the nominal harvester values. Diagnostics
//! name the offending key and its line.
//!
//! | section | key | default | meaning |
//! |---|---|---|---|
//! | model | `xi`, `chi`, `lambda`, `kappa` | 0.01, 0.05, 0.05, 0.5 | damping and coupling |
//! | model | `f`, `omega` | 0.147, 0.8 | forcing amplitude and frequency |
//! | model | `beta`, `delta`, `p` | 0, 0, 1 | coupling nonlinearity, asymmetry, gravity |
//! | model | `phi_degrees` | 0 | bias angle in degrees |
//! | model | `x0`, `xdot0`, `v0` | 1, 0, 0 | initial state |
//! | integrator | `method` | `"dopri"` | `"dopri"` or `"rk4"` |
//! | integrator | `rel_tol`, `abs_tol` | 1e-6, 1e-9 | adaptive tolerances |
//! | integrator | `t0`, `t1`, `n_out` | 0, 2000, 200001 | span and output grid |
//! | integrator | `max_steps`, `h0`, `dt` | 5000000, 1e-3, none | step budget, first step, RK4 step |
//! | integrator | `window_fraction` | 0.5 | trailing fraction averaged for mean power |
//! | uq | `case` | `"classical"` | `classical`, `nl_coupling`, `asymmetric`, `full` |
//! | uq | `cv` | 0.2 | half-width of relative input intervals |
//! | uq | `seed` | required | master seed |
//! | uq | `mc_n`, `propagate_n` | 1000, 500 | Monte-Carlo base size, propagation size |
//! | uq | `percentiles` | `[5, 50, 95]` | propagation percentiles |
//! | uq.ranges | `<param> = [lo, hi]` | none | replaces or adds an input interval (`phi` in degrees) |
//! | pce | `n` | 1000 | training simulations |
//! | pce | `degree` or `degree_min`, `degree_max` | 2, 6 | fixed or adaptive total degree |
//! | sweep | `f_start`, `f_end`, `f_steps` | 0.02, 0.2, 19 | bifurcation sweep |
//! | sweep | `f_values` | sweep points | amplitudes for `sobol-sweep`, `propagate`, `power-map` |
//! | sweep | `beta_values` | 10 points in [0.5, 3] | power-map rows |
//! | sweep | `n_strobe` | 32 | stroboscopic samples kept per amplitude |
//! | output | `dir`, `workers` | `"out"`, 0 | output directory, threads (0 = all cores) |

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::Range;
use std::path::{Path, PathBuf};

use harvest_sa_core::analysis::{
    sweep_values, QoiOptions, SweepDirection, SweepOptions, DEFAULT_STROBE_POINTS,
};
use harvest_sa_core::integrator::{IntegratorSettings, Method};
use harvest_sa_core::model::{HarvesterParams, Param, State3};
use harvest_sa_core::pce::DegreePolicy;
use harvest_sa_core::uq::{
    build_input_space, InputEntry, RandomInputSpec, StudyCase, MIN_MC_SAMPLES,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::error::{CliError, CliResult};

/// Forcing amplitude used when the file does not set one.
pub const DEFAULT_F: f64 = 0.147;

type Field<T> = Option<Spanned<T>>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    uq: RawUq,
    #[serde(default)]
    pce: RawPce,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    xi: Field<f64>,
    chi: Field<f64>,
    lambda: Field<f64>,
    kappa: Field<f64>,
    f: Field<f64>,
    omega: Field<f64>,
    beta: Field<f64>,
    delta: Field<f64>,
    phi_degrees: Field<f64>,
    p: Field<f64>,
    x0: Field<f64>,
    xdot0: Field<f64>,
    v0: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    method: Field<String>,
    rel_tol: Field<f64>,
    abs_tol: Field<f64>,
    t0: Field<f64>,
    t1: Field<f64>,
    n_out: Field<u64>,
    max_steps: Field<u64>,
    h0: Field<f64>,
    dt: Field<f64>,
    window_fraction: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUq {
    case: Field<String>,
    cv: Field<f64>,
    seed: Field<u64>,
    mc_n: Field<u64>,
    propagate_n: Field<u64>,
    percentiles: Field<Vec<f64>>,
    #[serde(default)]
    ranges: BTreeMap<String, Spanned<[f64; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPce {
    n: Field<u64>,
    degree: Field<u64>,
    degree_min: Field<u64>,
    degree_max: Field<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    f_start: Field<f64>,
    f_end: Field<f64>,
    f_steps: Field<u64>,
    f_values: Field<Vec<f64>>,
    beta_values: Field<Vec<f64>>,
    n_strobe: Field<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Field<String>,
    workers: Field<u64>,
}

/// Amplitude and coupling grids shared by the sweep-type commands.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub f_start: f64,
    pub f_end: f64,
    pub f_steps: usize,
    pub f_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub n_strobe: usize,
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nominal: HarvesterParams,
    pub s0: State3,
    pub settings: IntegratorSettings,
    pub window_fraction: f64,
    pub case: StudyCase,
    pub cv: f64,
    /// Interval overrides in physical units (`phi` in radians).
    pub ranges: Vec<(Param, f64, f64)>,
    pub mc_n: usize,
    pub pce_n: usize,
    pub propagate_n: usize,
    pub degree: DegreePolicy,
    pub seed: u64,
    pub sweep: SweepGrid,
    pub percentiles: Vec<f64>,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn qoi_options(&self) -> QoiOptions {
        QoiOptions {
            s0: self.s0,
            settings: self.settings,
            window_fraction: self.window_fraction,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            s0: self.s0,
            settings: self.settings,
            n_strobe: self.sweep.n_strobe,
        }
    }

    /// Random inputs of the configured case around `nominal`, with the
    /// interval overrides applied.
    pub fn input_space(&self, nominal: &HarvesterParams) -> CliResult<RandomInputSpec> {
        let base = build_input_space(self.case, nominal, self.cv)?;
        if self.ranges.is_empty() {
            return Ok(base);
        }
        let mut entries = base.entries().to_vec();
        for &(param, lower, upper) in &self.ranges {
            let entry = InputEntry {
                name: param.name().to_string(),
                lower,
                upper,
            };
            match entries.iter_mut().find(|e| e.name == entry.name) {
                Some(slot) => *slot = entry,
                None => entries.push(entry),
            }
        }
        Ok(RandomInputSpec::for_harvester(entries, nominal)?)
    }

    /// Text that determines every numerical result; output location and
    /// thread count are excluded.
    pub fn canonical_text(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.workers = 0;
        format!("{c:?}")
    }

    pub fn hash_hex(&self) -> String {
        hex_digest(self.canonical_text().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct Reader<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Reader<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())]
            .matches('\n')
            .count()
            + 1
    }

    fn fail<T>(
        &self,
        key: &str,
        span: Option<Range<usize>>,
        message: impl Into<String>,
    ) -> CliResult<T> {
        Err(CliError::ConfigValue {
            origin: self.origin.to_string(),
            line: span.map(|s| self.line(s)),
            key: key.to_string(),
            message: message.into(),
        })
    }

    /// Value of `field` (or `default`) after `check`.
    fn get<T: Clone + Debug>(
        &self,
        key: &str,
        field: &Field<T>,
        default: T,
        check: impl Fn(&T) -> Result<(), String>,
    ) -> CliResult<T> {
        match field {
            None => Ok(default),
            Some(s) => match check(s.get_ref()) {
                Ok(()) => Ok(s.get_ref().clone()),
                Err(msg) => self.fail(key, Some(s.span()), msg),
            },
        }
    }

    fn span_of<T>(field: &Field<T>) -> Option<Range<usize>> {
        field.as_ref().map(Spanned::span)
    }
}

fn any<T>(_: &T) -> Result<(), String> {
    Ok(())
}

fn finite(v: &f64) -> Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("must be finite, got {v}"))
    }
}

fn non_negative(v: &f64) -> Result<(), String> {
    if v.is_finite() && *v >= 0.0 {
        Ok(())
    } else {
        Err(format!("must be a finite number >= 0, got {v}"))
    }
}

fn positive(v: &f64) -> Result<(), String> {
    if v.is_finite() && *v > 0.0 {
        Ok(())
    } else {
        Err(format!("must be a finite number > 0, got {v}"))
    }
}

fn at_least(min: u64) -> impl Fn(&u64) -> Result<(), String> {
    move |v| {
        if *v >= min {
            Ok(())
        } else {
            Err(format!("must be >= {min}, got {v}"))
        }
    }
}

// The signature matches `Reader::get` for `T = Vec<f64>`.
#[allow(clippy::ptr_arg)]
fn non_negative_list(v: &Vec<f64>) -> Result<(), String> {
    if v.is_empty() {
        return Err("list must not be empty".into());
    }
    match v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        Some(bad) => Err(format!("entries must be finite and >= 0, got {bad}")),
        None => Ok(()),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    sweep_values(lo, hi, n, SweepDirection::Up)
}

/// Reads and validates a configuration file. The seed must be in the file.
pub fn parse_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text, &path.display().to_string(), None)
}

/// Parses configuration text. `seed_override` replaces (or supplies) the seed;
/// `origin` names the source in diagnostics.
pub fn parse_config_str(
    text: &str,
    origin: &str,
    seed_override: Option<u64>,
) -> CliResult<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::ConfigSyntax {
        origin: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let r = Reader { text, origin };

    let m = &raw.model;
    let defaults = HarvesterParams::classical(DEFAULT_F);
    let nominal = HarvesterParams {
        xi: r.get("model.xi", &m.xi, defaults.xi, non_negative)?,
        chi: r.get("model.chi", &m.chi, defaults.chi, finite)?,
        lambda: r.get("model.lambda", &m.lambda, defaults.lambda, non_negative)?,
        kappa: r.get("model.kappa", &m.kappa, defaults.kappa, non_negative)?,
        f: r.get("model.f", &m.f, defaults.f, non_negative)?,
        omega: r.get("model.omega", &m.omega, defaults.omega, positive)?,
        beta: r.get("model.beta", &m.beta, defaults.beta, non_negative)?,
        delta: r.get("model.delta", &m.delta, defaults.delta, finite)?,
        phi: r
            .get("model.phi_degrees", &m.phi_degrees, 0.0, finite)?
            .to_radians(),
        p: r.get("model.p", &m.p, defaults.p, finite)?,
    };
    let s0 = State3::new(
        r.get("model.x0", &m.x0, 1.0, finite)?,
        r.get("model.xdot0", &m.xdot0, 0.0, finite)?,
        r.get("model.v0", &m.v0, 0.0, finite)?,
    );

    let i = &raw.integrator;
    let d = IntegratorSettings::default();
    let method_name = r.get(
        "integrator.method",
        &i.method,
        "dopri".to_string(),
        |s| match s.as_str() {
            "dopri" | "rk4" => Ok(()),
            other => Err(format!("expected \"dopri\" or \"rk4\", got \"{other}\"")),
        },
    )?;
    let dt = r.get("integrator.dt", &i.dt, 0.0, positive)?;
    let method = if method_name == "rk4" {
        if i.dt.is_none() {
            return r.fail(
                "integrator.dt",
                Reader::span_of(&i.method),
                "method \"rk4\" needs a step size dt",
            );
        }
        Method::FixedRk4 { dt }
    } else {
        Method::DormandPrince
    };
    let t0 = r.get("integrator.t0", &i.t0, d.t0, finite)?;
    let t1 = r.get("integrator.t1", &i.t1, d.t1, finite)?;
    if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        let span = Reader::span_of(&i.t1).or(Reader::span_of(&i.t0));
        return r.fail(
            "integrator.t1",
            span,
            format!("t1 must exceed t0 (t0 = {t0}, t1 = {t1})"),
        );
    }
    let settings = IntegratorSettings {
        rel_tol: r.get("integrator.rel_tol", &i.rel_tol, d.rel_tol, positive)?,
        abs_tol: r.get("integrator.abs_tol", &i.abs_tol, d.abs_tol, positive)?,
        t0,
        t1,
        n_out: r.get("integrator.n_out", &i.n_out, d.n_out as u64, at_least(2))? as usize,
        max_steps: r.get(
            "integrator.max_steps",
            &i.max_steps,
            d.max_steps as u64,
            at_least(1),
        )? as usize,
        h0: r.get("integrator.h0", &i.h0, d.h0, positive)?,
        method,
    };
    let window_fraction = r.get("integrator.window_fraction", &i.window_fraction, 0.5, |v| {
        if *v > 0.0 && *v <= 1.0 {
            Ok(())
        } else {
            Err(format!("must lie in (0, 1], got {v}"))
        }
    })?;

    let u = &raw.uq;
    let case_name = r.get(
        "uq.case",
        &u.case,
        "classical".to_string(),
        |s| match StudyCase::parse(s) {
            Some(_) => Ok(()),
            None => Err(format!(
            "expected one of \"classical\", \"nl_coupling\", \"asymmetric\", \"full\", got \"{s}\""
        )),
        },
    )?;
    let case = StudyCase::parse(&case_name).expect("checked above");
    let cv = r.get("uq.cv", &u.cv, 0.2, |v| {
        if *v > 0.0 && *v < 1.0 {
            Ok(())
        } else {
            Err(format!("must lie in (0, 1), got {v}"))
        }
    })?;
    let seed = match (seed_override, &u.seed) {
        (Some(s), _) => s,
        (None, Some(s)) => *s.get_ref(),
        (None, None) => {
            return r.fail(
                "uq.seed",
                None,
                "a seed is required: set it under [uq] or pass --seed",
            );
        }
    };
    let mc_n = r.get("uq.mc_n", &u.mc_n, 1000, at_least(MIN_MC_SAMPLES as u64))? as usize;
    let propagate_n = r.get("uq.propagate_n", &u.propagate_n, 500, at_least(1))? as usize;
    let percentiles = r.get(
        "uq.percentiles",
        &u.percentiles,
        vec![5.0, 50.0, 95.0],
        |p| {
            if p.is_empty() {
                Err("list must not be empty".into())
            } else if p.iter().any(|x| !(*x > 0.0 && *x < 100.0)) {
                Err("percentiles must lie strictly between 0 and 100".into())
            } else if p.windows(2).any(|w| w[0] >= w[1]) {
                Err("percentiles must be strictly increasing".into())
            } else {
                Ok(())
            }
        },
    )?;
    let mut ranges = Vec::with_capacity(u.ranges.len());
    for (name, bounds) in &u.ranges {
        let key = format!("uq.ranges.{name}");
        let Some(param) = Param::from_name(name) else {
            return r.fail(
                &key,
                Some(bounds.span()),
                format!("'{name}' is not a harvester parameter"),
            );
        };
        let [lo, hi] = *bounds.get_ref();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return r.fail(
                &key,
                Some(bounds.span()),
                format!("need finite lo < hi, got [{lo}, {hi}]"),
            );
        }
        let (lo, hi) = if param == Param::Phi {
            (lo.to_radians(), hi.to_radians())
        } else {
            (lo, hi)
        };
        ranges.push((param, lo, hi));
    }

    let pc = &raw.pce;
    let pce_n = r.get("pce.n", &pc.n, 1000, at_least(1))? as usize;
    let degree = match &pc.degree {
        Some(p) => {
            if pc.degree_min.is_some() || pc.degree_max.is_some() {
                return r.fail(
                    "pce.degree",
                    Some(p.span()),
                    "a fixed degree excludes degree_min and degree_max",
                );
            }
            DegreePolicy::Fixed(*p.get_ref() as usize)
        }
        None => {
            let min = r.get("pce.degree_min", &pc.degree_min, 2, any)?;
            let max = r.get("pce.degree_max", &pc.degree_max, 6, any)?;
            if min > max {
                let span = Reader::span_of(&pc.degree_max).or(Reader::span_of(&pc.degree_min));
                return r.fail(
                    "pce.degree_max",
                    span,
                    format!("degree_max {max} is below degree_min {min}"),
                );
            }
            DegreePolicy::Adaptive {
                min: min as usize,
                max: max as usize,
            }
        }
    };

    let s = &raw.sweep;
    let f_start = r.get("sweep.f_start", &s.f_start, 0.02, non_negative)?;
    let f_end = r.get("sweep.f_end", &s.f_end, 0.2, non_negative)?;
    let f_steps = r.get("sweep.f_steps", &s.f_steps, 19, at_least(2))? as usize;
    if f_start == f_end {
        let span = Reader::span_of(&s.f_end).or(Reader::span_of(&s.f_start));
        return r.fail(
            "sweep.f_end",
            span,
            "sweep range is empty (f_start == f_end)",
        );
    }
    let f_values = r.get(
        "sweep.f_values",
        &s.f_values,
        linspace(f_start.min(f_end), f_start.max(f_end), f_steps),
        non_negative_list,
    )?;
    let beta_values = r.get(
        "sweep.beta_values",
        &s.beta_values,
        linspace(0.5, 3.0, 10),
        non_negative_list,
    )?;
    let n_strobe = r.get(
        "sweep.n_strobe",
        &s.n_strobe,
        DEFAULT_STROBE_POINTS as u64,
        at_least(1),
    )? as usize;

    let o = &raw.output;
    let out_dir = PathBuf::from(r.get("output.dir", &o.dir, "out".to_string(), |d| {
        if d.is_empty() {
            Err("must not be empty".into())
        } else {
            Ok(())
        }
    })?);
    let workers = r.get("output.workers", &o.workers, 0, any)? as usize;

    nominal.validate()?;
    settings.validate()?;
    Ok(ExperimentConfig {
        nominal,
        s0,
        settings,
        window_fraction,
        case,
        cv,
        ranges,
        mc_n,
        pce_n,
        propagate_n,
        degree,
        seed,
        sweep: SweepGrid {
            f_start,
            f_end,
            f_steps,
            f_values,
            beta_values,
            n_strobe,
        },
        percentiles,
        out_dir,
        workers,
    })
}
