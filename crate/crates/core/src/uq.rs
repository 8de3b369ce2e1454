//! Uncertain inputs, sampling designs, pick-and-freeze Monte-Carlo Sobol
//! estimation and percentile-band propagation of the mean power.
//!
//! Every random input is an independent uniform variable on `[a, b]`,
//! represented internally by a coordinate `u` in the standard cube `[-1, 1]`
//! through the affine map `x = (a + b)/2 + u (b - a)/2`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::analysis::{simulate_mean_power, QoiOptions};
use crate::error::{Error, Result};
use crate::exec::parallel_map;
use crate::model::{HarvesterParams, Param};

/// Absolute range of the quadratic asymmetry coefficient.
pub const DELTA_RANGE: (f64, f64) = (-0.15, 0.15);
/// Absolute range of the bias angle, in degrees.
pub const PHI_RANGE_DEGREES: (f64, f64) = (-15.0, 15.0);
/// Smallest base sample size accepted by the Monte-Carlo estimator.
pub const MIN_MC_SAMPLES: usize = 64;
/// Output variance below which sensitivity indices are undefined.
pub const DEGENERATE_VARIANCE: f64 = 1e-14;
/// Fraction of successful simulations required for a propagation band.
pub const MIN_SUCCESS_FRACTION: f64 = 0.9;

/// The four harvester configurations studied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyCase {
    Classical,
    NlCoupling,
    Asymmetric,
    Full,
}

impl StudyCase {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyCase::Classical => "classical",
            StudyCase::NlCoupling => "nl_coupling",
            StudyCase::Asymmetric => "asymmetric",
            StudyCase::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classical" => Some(StudyCase::Classical),
            "nl_coupling" => Some(StudyCase::NlCoupling),
            "asymmetric" => Some(StudyCase::Asymmetric),
            "full" => Some(StudyCase::Full),
            _ => None,
        }
    }

    /// Parameters with a relative (c.v.) interval around their nominal value.
    fn relative_params(self) -> &'static [Param] {
        const CLASSICAL: &[Param] = &[
            Param::Xi,
            Param::Chi,
            Param::Lambda,
            Param::Kappa,
            Param::F,
            Param::Omega,
        ];
        const WITH_BETA: &[Param] = &[
            Param::Xi,
            Param::Chi,
            Param::Lambda,
            Param::Kappa,
            Param::F,
            Param::Omega,
            Param::Beta,
        ];
        match self {
            StudyCase::Classical | StudyCase::Asymmetric => CLASSICAL,
            StudyCase::NlCoupling | StudyCase::Full => WITH_BETA,
        }
    }

    fn has_asymmetry(self) -> bool {
        matches!(self, StudyCase::Asymmetric | StudyCase::Full)
    }
}

impl fmt::Display for StudyCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One uniform random input `name ~ U[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEntry {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl InputEntry {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn to_physical(&self, u: f64) -> f64 {
        if u == 1.0 {
            self.upper
        } else if u == -1.0 {
            self.lower
        } else {
            self.midpoint() + u * self.half_width()
        }
    }

    pub fn to_cube(&self, x: f64) -> f64 {
        (x - self.midpoint()) / self.half_width()
    }
}

/// Ordered set of independent uniform inputs, plus the values of the
/// parameters held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInputSpec {
    entries: Vec<InputEntry>,
    frozen: Vec<(String, f64)>,
}

impl RandomInputSpec {
    /// Validates `lower < upper` and unique names.
    pub fn new(entries: Vec<InputEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !(e.lower < e.upper) || !e.lower.is_finite() || !e.upper.is_finite() {
                return Err(Error::Config(format!(
                    "input '{}' needs finite lower < upper, got [{}, {}]",
                    e.name, e.lower, e.upper
                )));
            }
            if entries[..i].iter().any(|o| o.name == e.name) {
                return Err(Error::Config(format!("duplicate input '{}'", e.name)));
            }
        }
        Ok(Self {
            entries,
            frozen: Vec::new(),
        })
    }

    /// Spec over harvester parameters; every name must be a model coefficient
    /// and all remaining coefficients are frozen at `nominal`.
    pub fn for_harvester(entries: Vec<InputEntry>, nominal: &HarvesterParams) -> Result<Self> {
        let mut spec = Self::new(entries)?;
        for e in &spec.entries {
            if Param::from_name(&e.name).is_none() {
                return Err(Error::Config(format!(
                    "'{}' is not a harvester parameter",
                    e.name
                )));
            }
        }
        spec.frozen = Param::ALL
            .iter()
            .filter(|p| spec.position(p.name()).is_none())
            .map(|p| (p.name().to_string(), nominal.get(*p)))
            .collect();
        Ok(spec)
    }

    pub fn with_frozen(mut self, frozen: Vec<(String, f64)>) -> Self {
        self.frozen = frozen;
        self
    }

    /// Degenerate copy whose intervals collapse onto the `nominal` values, so
    /// every sample maps to the nominal parameters. Only meant for checks.
    pub fn collapsed(&self, nominal: &HarvesterParams) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let v = Param::from_name(&e.name).map_or(e.midpoint(), |p| nominal.get(p));
                InputEntry {
                    name: e.name.clone(),
                    lower: v,
                    upper: v,
                }
            })
            .collect();
        Self {
            entries,
            frozen: self.frozen.clone(),
        }
    }

    pub fn entries(&self) -> &[InputEntry] {
        &self.entries
    }

    pub fn frozen(&self) -> &[(String, f64)] {
        &self.frozen
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn entry(&self, name: &str) -> Option<&InputEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Reorders the entries: entry `i` of the result is entry `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            entries: order.iter().map(|&i| self.entries[i].clone()).collect(),
            frozen: self.frozen.clone(),
        }
    }

    /// Maps a cube point to physical input values.
    pub fn cube_to_values(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_cube_point(u, self.len())?;
        Ok(self
            .entries
            .iter()
            .zip(u)
            .map(|(e, &ui)| e.to_physical(ui))
            .collect())
    }

    pub fn values_to_cube(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .zip(x)
            .map(|(e, &xi)| e.to_cube(xi))
            .collect()
    }

    /// Canonical text of the spec, stable across runs.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!("{}:{:?}:{:?};", e.name, e.lower, e.upper));
        }
        s.push('|');
        for (n, v) in &self.frozen {
            s.push_str(&format!("{n}={v:?};"));
        }
        s
    }

    /// SHA-256 of [`canonical_text`](Self::canonical_text), hex encoded.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_cube_point(u: &[f64], k: usize) -> Result<()> {
    if u.len() != k {
        return Err(Error::Domain(format!(
            "cube point has {} coordinates, expected {k}",
            u.len()
        )));
    }
    if let Some(bad) = u.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(Error::Domain(format!(
            "cube coordinate {bad} outside [-1, 1]"
        )));
    }
    Ok(())
}

fn relative_entry(param: Param, nominal: f64, cv: f64) -> Result<InputEntry> {
    if nominal == 0.0 {
        return Err(Error::Config(format!(
            "{param} has zero nominal value; the c.v. rule needs absolute bounds instead"
        )));
    }
    let (a, b) = (nominal * (1.0 - cv), nominal * (1.0 + cv));
    Ok(InputEntry {
        name: param.name().to_string(),
        lower: a.min(b),
        upper: a.max(b),
    })
}

/// Random-input set of a study case. Physical parameters vary uniformly by
/// `±cv` around `nominal`; the asymmetry and bias angle use absolute ranges.
pub fn build_input_space(
    case: StudyCase,
    nominal: &HarvesterParams,
    cv: f64,
) -> Result<RandomInputSpec> {
    if !(cv > 0.0 && cv < 1.0) {
        return Err(Error::Config(format!("c.v. must lie in (0, 1), got {cv}")));
    }
    nominal.validate()?;
    let mut entries = case
        .relative_params()
        .iter()
        .map(|&p| relative_entry(p, nominal.get(p), cv))
        .collect::<Result<Vec<_>>>()?;
    if case.has_asymmetry() {
        entries.push(InputEntry {
            name: Param::Delta.name().into(),
            lower: DELTA_RANGE.0,
            upper: DELTA_RANGE.1,
        });
        entries.push(InputEntry {
            name: Param::Phi.name().into(),
            lower: PHI_RANGE_DEGREES.0.to_radians(),
            upper: PHI_RANGE_DEGREES.1.to_radians(),
        });
    }
    RandomInputSpec::for_harvester(entries, nominal)
}

/// Isoprobabilistic map from the cube to harvester parameters; parameters not
/// in the spec keep their `nominal` values.
pub fn to_physical(
    u: &[f64],
    spec: &RandomInputSpec,
    nominal: &HarvesterParams,
) -> Result<HarvesterParams> {
    let values = spec.cube_to_values(u)?;
    let mut prm = *nominal;
    for (e, x) in spec.entries.iter().zip(values) {
        let p = Param::from_name(&e.name)
            .ok_or_else(|| Error::Config(format!("'{}' is not a harvester parameter", e.name)))?;
        prm.set(p, x);
    }
    Ok(prm)
}

/// Inverse of [`to_physical`] on the random coordinates.
pub fn to_cube(prm: &HarvesterParams, spec: &RandomInputSpec) -> Result<Vec<f64>> {
    spec.entries
        .iter()
        .map(|e| {
            let p = Param::from_name(&e.name).ok_or_else(|| {
                Error::Config(format!("'{}' is not a harvester parameter", e.name))
            })?;
            Ok(e.to_cube(prm.get(p)))
        })
        .collect()
}

/// `n × k` design in `[-1, 1]^k`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * k);
        for r in rows {
            check_cube_point(r, k)?;
            values.extend_from_slice(r);
        }
        Ok(Self { n, k, seed, values })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.k.max(1)).take(self.n)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.values[i * self.k + j]).collect()
    }

    /// Columns reordered: column `i` of the result is column `order[i]`.
    pub fn permuted_columns(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for r in self.rows() {
            values.extend(order.iter().map(|&j| r[j]));
        }
        Self { values, ..*self }
    }
}

/// Latin hypercube design: each column places one point in each of `n`
/// equal-width strata of `[-1, 1]`, jittered uniformly within the stratum.
pub fn lhs_sample(n: usize, k: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::Config("LHS needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n * k];
    let mut strata: Vec<usize> = (0..n).collect();
    let width = 2.0 / n as f64;
    for j in 0..k {
        strata.shuffle(&mut rng);
        for (i, &s) in strata.iter().enumerate() {
            let jitter: f64 = rng.random();
            values[i * k + j] = (-1.0 + (s as f64 + jitter) * width).min(1.0);
        }
    }
    Ok(SampleMatrix { n, k, seed, values })
}

/// Independent uniform points in `[-1, 1]^k`.
pub fn uniform_sample(n: usize, k: usize, seed: u64) -> SampleMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * k).map(|_| rng.random_range(-1.0..=1.0)).collect();
    SampleMatrix { n, k, seed, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SobolMethod {
    Mc,
    Pce,
}

impl SobolMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SobolMethod::Mc => "mc",
            SobolMethod::Pce => "pce",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportMeta {
    /// Base sample size (MC) or training-set size (PCE).
    pub n_base: usize,
    /// Number of model evaluations spent.
    pub n_evaluations: usize,
    pub seed: u64,
    pub degree: Option<usize>,
    pub loo_error: Option<f64>,
}

/// First- and second-order Sobol indices keyed by input name, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub method: SobolMethod,
    pub first_order: Vec<(String, f64)>,
    pub second_order: Vec<((String, String), f64)>,
    /// Sum of all reported indices.
    pub total_explained: f64,
    pub meta: ReportMeta,
}

impl SensitivityReport {
    pub fn new(
        method: SobolMethod,
        first_order: Vec<(String, f64)>,
        second_order: Vec<((String, String), f64)>,
        meta: ReportMeta,
    ) -> Self {
        let total_explained = first_order.iter().map(|(_, v)| v).sum::<f64>()
            + second_order.iter().map(|(_, v)| v).sum::<f64>();
        Self {
            method,
            first_order,
            second_order,
            total_explained,
            meta,
        }
    }

    pub fn first(&self, name: &str) -> Option<f64> {
        self.first_order
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    /// Second-order index of the unordered pair `(a, b)`.
    pub fn second(&self, a: &str, b: &str) -> Option<f64> {
        self.second_order
            .iter()
            .find(|((x, y), _)| (x == a && y == b) || (x == b && y == a))
            .map(|(_, v)| *v)
    }

    /// Input names sorted by decreasing first-order index.
    pub fn ranking(&self) -> Vec<String> {
        let mut v = self.first_order.clone();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        v.into_iter().map(|(n, _)| n).collect()
    }

    /// Largest second-order index and its pair.
    pub fn top_second_order(&self) -> Option<&((String, String), f64)> {
        self.second_order.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn mean_and_variance(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var)
}

/// Pick-and-freeze first-order estimator on given base matrices `A` and `B`:
/// `V_i = (1/N) sum_j f(B)_j (f(A_B^i)_j - f(A)_j)` normalised by the
/// empirical variance of `f(A) ∪ f(B)`.
pub fn pick_freeze_first_order<F>(
    eval: F,
    names: &[String],
    a: &SampleMatrix,
    b: &SampleMatrix,
    workers: usize,
) -> Result<SensitivityReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    let (n, k) = (a.n, a.k);
    if b.n != n || b.k != k || names.len() != k {
        return Err(Error::Config(format!(
            "pick-and-freeze shapes disagree: A {}x{}, B {}x{}, {} names",
            a.n,
            a.k,
            b.n,
            b.k,
            names.len()
        )));
    }
    if n < MIN_MC_SAMPLES {
        return Err(Error::Config(format!(
            "Monte-Carlo Sobol needs N >= {MIN_MC_SAMPLES}, got {n}"
        )));
    }
    // Row layout: A, B, then A_B^(i) for each i.
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n * (k + 2));
    points.extend(a.rows().map(<[f64]>::to_vec));
    points.extend(b.rows().map(<[f64]>::to_vec));
    for i in 0..k {
        for j in 0..n {
            let mut p = a.row(j).to_vec();
            p[i] = b.row(j)[i];
            points.push(p);
        }
    }
    let y = parallel_map(&points, workers, |p| eval(p))?;
    let (ya, rest) = y.split_at(n);
    let (yb, yab) = rest.split_at(n);
    let (_, var) = mean_and_variance(ya.iter().chain(yb.iter()).copied());
    if !(var >= DEGENERATE_VARIANCE) {
        return Err(Error::DegenerateOutput { variance: var });
    }
    let first_order = (0..k)
        .map(|i| {
            let yi = &yab[i * n..(i + 1) * n];
            let vi = (0..n).map(|j| yb[j] * (yi[j] - ya[j])).sum::<f64>() / n as f64;
            (names[i].clone(), vi / var)
        })
        .collect();
    Ok(SensitivityReport::new(
        SobolMethod::Mc,
        first_order,
        Vec::new(),
        ReportMeta {
            n_base: n,
            n_evaluations: n * (k + 2),
            seed: a.seed,
            ..ReportMeta::default()
        },
    ))
}

/// Base matrices `A` and `B` for a Monte-Carlo run: independent uniform
/// streams derived from `seed`.
pub fn mc_base_matrices(n: usize, k: usize, seed: u64) -> (SampleMatrix, SampleMatrix) {
    let a = uniform_sample(n, k, seed);
    let mut b = uniform_sample(n, k, seed ^ 0x9E37_79B9_7F4A_7C15);
    b.seed = seed;
    (a, b)
}

/// Monte-Carlo first-order Sobol indices of `qoi_eval` (a function of the cube
/// point) with `N (k + 2)` evaluations.
pub fn mc_first_order<F>(
    qoi_eval: F,
    spec: &RandomInputSpec,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<SensitivityReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    let (a, b) = mc_base_matrices(n, spec.len(), seed);
    pick_freeze_first_order(qoi_eval, &spec.names(), &a, &b, workers)
}

/// Mean output power as a function of the cube point.
pub fn harvester_qoi<'a>(
    spec: &'a RandomInputSpec,
    nominal: &'a HarvesterParams,
    opts: &'a QoiOptions,
) -> impl Fn(&[f64]) -> Result<f64> + Sync + Send + 'a {
    move |u| {
        let prm = to_physical(u, spec, nominal)?;
        simulate_mean_power(&prm, opts)
    }
}

/// Nearest-rank percentile of sorted data, `0 < pct < 100`.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Percentile bands of the mean power along an amplitude grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub f_grid: Vec<f64>,
    pub percentiles: Vec<f64>,
    /// `values[i][j]`: percentile `j` at grid point `i`.
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Failed simulations per grid point.
    pub failures: Vec<usize>,
    pub n_samples: usize,
}

impl Bands {
    /// Spread between the outermost requested percentiles at grid point `i`.
    pub fn width(&self, i: usize) -> f64 {
        let row = &self.values[i];
        row[row.len() - 1] - row[0]
    }
}

/// Spec at grid amplitude `f`: the `f` entry (if random) keeps its bounds
/// relative to the nominal amplitude.
fn spec_at_amplitude(
    spec: &RandomInputSpec,
    nominal: &HarvesterParams,
    f: f64,
) -> Result<RandomInputSpec> {
    let mut out = spec.clone();
    if let Some(e) = out.entries.iter_mut().find(|e| e.name == Param::F.name()) {
        if nominal.f == 0.0 {
            return Err(Error::Config(
                "cannot rescale the f interval around a zero nominal amplitude".into(),
            ));
        }
        let (lo, hi) = (e.lower / nominal.f, e.upper / nominal.f);
        e.lower = f * lo;
        e.upper = f * hi;
    }
    for (name, v) in &mut out.frozen {
        if name == Param::F.name() {
            *v = f;
        }
    }
    Ok(out)
}

/// Monte-Carlo propagation of the input uncertainty to the mean power at each
/// amplitude on `f_grid`. The same `n` cube samples (from `seed`) are reused
/// at every grid point.
#[allow(clippy::too_many_arguments)]
pub fn propagate(
    spec: &RandomInputSpec,
    nominal: &HarvesterParams,
    f_grid: &[f64],
    n: usize,
    percentiles: &[f64],
    seed: u64,
    opts: &QoiOptions,
    workers: usize,
) -> Result<Bands> {
    propagate_with(
        |prm| simulate_mean_power(prm, opts),
        spec,
        nominal,
        f_grid,
        n,
        percentiles,
        seed,
        workers,
    )
}

/// [`propagate`] with a caller-supplied mean-power evaluator.
#[allow(clippy::too_many_arguments)]
pub fn propagate_with<E>(
    eval: E,
    spec: &RandomInputSpec,
    nominal: &HarvesterParams,
    f_grid: &[f64],
    n: usize,
    percentiles: &[f64],
    seed: u64,
    workers: usize,
) -> Result<Bands>
where
    E: Fn(&HarvesterParams) -> Result<f64> + Sync + Send,
{
    if f_grid.is_empty() {
        return Err(Error::Config("propagation grid is empty".into()));
    }
    if n == 0 {
        return Err(Error::Config("propagation needs n >= 1".into()));
    }
    if percentiles.is_empty()
        || percentiles.iter().any(|p| !(*p > 0.0 && *p < 100.0))
        || percentiles.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::Config(format!(
            "percentiles must be strictly increasing within (0, 100), got {percentiles:?}"
        )));
    }
    let samples = uniform_sample(n, spec.len(), seed);
    let specs = f_grid
        .iter()
        .map(|&f| spec_at_amplitude(spec, nominal, f))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..f_grid.len())
        .flat_map(|g| (0..n).map(move |j| (g, j)))
        .collect();
    let results = parallel_map(&tasks, workers, |&(g, j)| {
        let prm = HarvesterParams {
            f: f_grid[g],
            ..*nominal
        };
        let outcome = to_physical(samples.row(j), &specs[g], &prm).and_then(|p| eval(&p));
        Ok(outcome.ok())
    })?;

    let mut values = Vec::with_capacity(f_grid.len());
    let mut mean = Vec::with_capacity(f_grid.len());
    let mut failures = Vec::with_capacity(f_grid.len());
    for (g, &f) in f_grid.iter().enumerate() {
        let mut ok: Vec<f64> = results[g * n..(g + 1) * n]
            .iter()
            .flatten()
            .copied()
            .collect();
        let failed = n - ok.len();
        if (ok.len() as f64) < MIN_SUCCESS_FRACTION * n as f64 {
            return Err(Error::InsufficientData(format!(
                "{failed} of {n} simulations failed at f = {f}"
            )));
        }
        ok.sort_by(f64::total_cmp);
        values.push(percentiles.iter().map(|&p| nearest_rank(&ok, p)).collect());
        mean.push(ok.iter().sum::<f64>() / ok.len() as f64);
        failures.push(failed);
    }
    Ok(Bands {
        f_grid: f_grid.to_vec(),
        percentiles: percentiles.to_vec(),
        values,
        mean,
        failures,
        n_samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::IntegratorSettings;

    fn nominal() -> HarvesterParams {
        HarvesterParams::classical(0.147)
    }

    #[test]
    fn classical_bounds() {
        let spec = build_input_space(StudyCase::Classical, &nominal(), 0.2).unwrap();
        assert_eq!(spec.len(), 6);
        let k = spec.entry("kappa").unwrap();
        assert!((k.lower - 0.4).abs() < 1e-15 && (k.upper - 0.6).abs() < 1e-15);
        assert!(spec.entry("delta").is_none());
        assert!(spec.frozen().iter().any(|(n, v)| n == "beta" && *v == 0.0));
    }

    #[test]
    fn case_dimensions() {
        let nl = HarvesterParams {
            beta: 1.0,
            ..nominal()
        };
        assert_eq!(
            build_input_space(StudyCase::NlCoupling, &nl, 0.2)
                .unwrap()
                .len(),
            7
        );
        let asym = build_input_space(StudyCase::Asymmetric, &nominal(), 0.2).unwrap();
        assert_eq!(asym.len(), 8);
        let d = asym.entry("delta").unwrap();
        assert_eq!((d.lower, d.upper), (-0.15, 0.15));
        let phi = asym.entry("phi").unwrap();
        assert!((phi.upper - 15f64.to_radians()).abs() < 1e-15);
        assert_eq!(
            build_input_space(StudyCase::Full, &nl, 0.2).unwrap().len(),
            9
        );
    }

    #[test]
    fn degenerate_configs_rejected() {
        assert!(build_input_space(StudyCase::Classical, &nominal(), 0.0).is_err());
        assert!(build_input_space(StudyCase::Classical, &nominal(), 1.0).is_err());
        // beta = 0 cannot take a relative interval.
        assert!(matches!(
            build_input_space(StudyCase::NlCoupling, &nominal(), 0.2),
            Err(Error::Config(_))
        ));
        let dup = vec![
            InputEntry {
                name: "xi".into(),
                lower: 0.0,
                upper: 1.0,
            },
            InputEntry {
                name: "xi".into(),
                lower: 0.0,
                upper: 1.0,
            },
        ];
        assert!(RandomInputSpec::new(dup).is_err());
        let unknown = vec![InputEntry {
            name: "zeta".into(),
            lower: 0.0,
            upper: 1.0,
        }];
        assert!(RandomInputSpec::for_harvester(unknown, &nominal()).is_err());
    }

    #[test]
    fn isoprobabilistic_map() {
        let nom = nominal();
        let spec = build_input_space(StudyCase::Asymmetric, &nom, 0.2).unwrap();
        let mid = to_physical(&[0.0; 8], &spec, &nom).unwrap();
        for e in spec.entries() {
            let p = Param::from_name(&e.name).unwrap();
            assert!((mid.get(p) - e.midpoint()).abs() < 1e-15);
        }
        assert_eq!(mid.p, nom.p);
        let mut u = [0.0; 8];
        u[3] = 1.0;
        let top = to_physical(&u, &spec, &nom).unwrap();
        assert_eq!(top.kappa, spec.entry("kappa").unwrap().upper);
        let u: Vec<f64> = (0..8).map(|i| -0.9 + 0.23 * i as f64).collect();
        let back = to_cube(&to_physical(&u, &spec, &nom).unwrap(), &spec).unwrap();
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(to_physical(&[1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &spec, &nom).is_err());
        assert!(to_physical(&[0.0; 3], &spec, &nom).is_err());
    }

    #[test]
    fn lhs_stratification() {
        let m = lhs_sample(2, 1, 7).unwrap();
        let mut c = m.column(0);
        c.sort_by(f64::total_cmp);
        assert!((-1.0..0.0).contains(&c[0]) && (0.0..=1.0).contains(&c[1]));

        let m = lhs_sample(100, 4, 11).unwrap();
        for j in 0..4 {
            let mut hits = [0usize; 100];
            for v in m.column(j) {
                assert!((-1.0..=1.0).contains(&v));
                hits[(((v + 1.0) / 0.02).floor() as usize).min(99)] += 1;
            }
            assert!(hits.iter().all(|&h| h == 1));
        }
        assert_eq!(m, lhs_sample(100, 4, 11).unwrap());
        assert_ne!(m, lhs_sample(100, 4, 12).unwrap());
        assert!(lhs_sample(0, 3, 1).is_err());
    }

    #[test]
    fn linear_model_mc() {
        let spec = RandomInputSpec::new(vec![
            InputEntry {
                name: "x1".into(),
                lower: -1.0,
                upper: 1.0,
            },
            InputEntry {
                name: "x2".into(),
                lower: -1.0,
                upper: 1.0,
            },
        ])
        .unwrap();
        let r = mc_first_order(|u| Ok(u[0] + 2.0 * u[1]), &spec, 4096, 3, 1).unwrap();
        assert!((r.first("x1").unwrap() - 0.2).abs() < 0.03, "{r:?}");
        assert!((r.first("x2").unwrap() - 0.8).abs() < 0.03, "{r:?}");
        assert_eq!(r.meta.n_evaluations, 4096 * 4);
    }

    #[test]
    fn constant_qoi_is_degenerate() {
        let spec = RandomInputSpec::new(vec![InputEntry {
            name: "x".into(),
            lower: 0.0,
            upper: 1.0,
        }])
        .unwrap();
        assert!(matches!(
            mc_first_order(|_| Ok(2.5), &spec, 128, 1, 1),
            Err(Error::DegenerateOutput { .. })
        ));
        assert!(mc_first_order(|u| Ok(u[0]), &spec, 32, 1, 1).is_err());
    }

    #[test]
    fn permutation_permutes_keys_only() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let f = |u: &[f64]| Ok(u[0] + 0.5 * u[1] * u[1] + u[0] * u[2]);
        let (a, b) = mc_base_matrices(512, 3, 5);
        let base = pick_freeze_first_order(f, &names, &a, &b, 1).unwrap();
        let order = [2, 0, 1];
        let pnames: Vec<String> = order.iter().map(|&i| names[i].clone()).collect();
        let pf = |u: &[f64]| Ok(u[1] + 0.5 * u[2] * u[2] + u[1] * u[0]);
        let perm = pick_freeze_first_order(
            pf,
            &pnames,
            &a.permuted_columns(&order),
            &b.permuted_columns(&order),
            1,
        )
        .unwrap();
        for n in &names {
            assert!((base.first(n).unwrap() - perm.first(n).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn percentiles_nearest_rank() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&d, 5.0), 1.0);
        assert_eq!(nearest_rank(&d, 50.0), 5.0);
        assert_eq!(nearest_rank(&d, 95.0), 10.0);
    }

    fn quick_opts() -> QoiOptions {
        QoiOptions {
            settings: IntegratorSettings {
                t1: 200.0,
                n_out: 20_001,
                ..IntegratorSettings::default()
            },
            ..QoiOptions::default()
        }
    }

    #[test]
    fn collapsed_propagation_is_deterministic() {
        let nom = nominal();
        let spec = build_input_space(StudyCase::Classical, &nom, 0.2)
            .unwrap()
            .collapsed(&nom);
        let opts = quick_opts();
        let bands = propagate(
            &spec,
            &nom,
            &[0.1, 0.147],
            8,
            &[5.0, 50.0, 95.0],
            1,
            &opts,
            1,
        )
        .unwrap();
        for (g, &f) in bands.f_grid.iter().enumerate() {
            let det = simulate_mean_power(&HarvesterParams { f, ..nom }, &opts).unwrap();
            assert!(
                bands.values[g].iter().all(|&v| v == det),
                "{:?} vs {det}",
                bands.values[g]
            );
            assert_eq!(bands.failures[g], 0);
        }
    }

    #[test]
    fn propagation_bands_ordered() {
        let nom = nominal();
        let spec = build_input_space(StudyCase::Classical, &nom, 0.2).unwrap();
        let bands = propagate(
            &spec,
            &nom,
            &[0.12, 0.16],
            24,
            &[5.0, 50.0, 95.0],
            2,
            &quick_opts(),
            1,
        )
        .unwrap();
        for row in &bands.values {
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
        assert!(propagate(&spec, &nom, &[0.1], 4, &[50.0, 5.0], 1, &quick_opts(), 1).is_err());
        assert!(propagate(&spec, &nom, &[0.1], 4, &[100.0], 1, &quick_opts(), 1).is_err());
    }
}
