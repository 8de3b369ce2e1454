//! Polynomial chaos surrogate on the uniform cube: orthonormal Legendre
//! tensor basis over a total-degree multi-index set, least-squares fit with
//! leave-one-out (LOO) validation, and analytic moments and Sobol indices
//! from the coefficients.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lstsq;
use crate::uq::{
    InputEntry, RandomInputSpec, ReportMeta, SampleMatrix, SensitivityReport, SobolMethod,
};

/// Minimum ratio between training size and basis size.
pub const OVERSAMPLING: usize = 2;
const ARTIFACT_HEADER: &str = "# harvest-sa pce model";
const ARTIFACT_VERSION: u32 = 1;

/// Per-dimension polynomial degrees of one basis term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// Dimensions with a positive degree.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        MultiIndex(order.iter().map(|&i| self.0[i]).collect())
    }
}

fn push_degree(k: usize, d: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if k == 1 {
        prefix.push(d);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for a in (0..=d).rev() {
        prefix.push(a);
        push_degree(k - 1, d - a, prefix, out);
        prefix.pop();
    }
}

/// All multi-indices of `k` variables with total degree `<= p`, graded by
/// degree and, within a degree, with leading exponents decreasing.
pub fn multi_indices(k: usize, p: usize) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(basis_size(k, p));
    if k == 0 {
        return out;
    }
    let mut prefix = Vec::with_capacity(k);
    for d in 0..=p {
        push_degree(k, d, &mut prefix, &mut out);
    }
    out
}

/// `C(k + p, k)`.
pub fn basis_size(k: usize, p: usize) -> usize {
    (1..=k).fold(1usize, |acc, i| acc * (p + i) / i)
}

/// Orthonormal Legendre values `psi_0(u) ..= psi_max(u)` with respect to the
/// uniform density on `[-1, 1]`; `psi_n = sqrt(2n + 1) P_n`.
pub fn legendre_orthonormal_all(max_degree: usize, u: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(max_degree + 1);
    p.push(1.0);
    if max_degree >= 1 {
        p.push(u);
    }
    for n in 1..max_degree {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * u * p[n] - nf * p[n - 1]) / (nf + 1.0);
        p.push(next);
    }
    for (n, v) in p.iter_mut().enumerate() {
        *v *= ((2 * n + 1) as f64).sqrt();
    }
    p
}

pub fn legendre_orthonormal(n: usize, u: f64) -> f64 {
    legendre_orthonormal_all(n, u)[n]
}

/// Tensor basis function `prod_i psi_{alpha_i}(u_i)`.
pub fn eval_basis(alpha: &MultiIndex, u: &[f64]) -> f64 {
    alpha
        .0
        .iter()
        .zip(u)
        .filter(|(&a, _)| a > 0)
        .map(|(&a, &ui)| legendre_orthonormal(a, ui))
        .product()
}

/// All basis functions of `indices` at `u`, sharing the 1-D tables.
fn basis_row(indices: &[MultiIndex], u: &[f64], max_degree: usize) -> Vec<f64> {
    let tables: Vec<Vec<f64>> = u
        .iter()
        .map(|&ui| legendre_orthonormal_all(max_degree, ui))
        .collect();
    indices
        .iter()
        .map(|alpha| {
            alpha
                .0
                .iter()
                .enumerate()
                .map(|(i, &a)| tables[i][a])
                .product()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreePolicy {
    Fixed(usize),
    /// Degree in `min..=max` with the smallest LOO error.
    Adaptive {
        min: usize,
        max: usize,
    },
}

impl DegreePolicy {
    pub fn candidates(&self) -> Vec<usize> {
        match *self {
            DegreePolicy::Fixed(p) => vec![p],
            DegreePolicy::Adaptive { min, max } => (min..=max).collect(),
        }
    }

    pub fn max_degree(&self) -> usize {
        match *self {
            DegreePolicy::Fixed(p) => p,
            DegreePolicy::Adaptive { max, .. } => max,
        }
    }
}

/// Fitted surrogate. Coefficients are aligned with `indices`, zero index first.
#[derive(Debug, Clone, PartialEq)]
pub struct PceModel {
    pub spec: RandomInputSpec,
    pub indices: Vec<MultiIndex>,
    pub coeffs: Vec<f64>,
    pub degree: usize,
    /// Normalised leave-one-out error of the selected degree.
    pub loo_error: f64,
    pub n_train: usize,
    /// `(degree, loo_error)` of every candidate tried.
    pub candidates: Vec<(usize, f64)>,
}

struct DegreeFit {
    coeffs: Vec<f64>,
    loo: f64,
}

fn fit_degree(
    design: &SampleMatrix,
    y: &[f64],
    indices: &[MultiIndex],
    p: usize,
) -> Result<DegreeFit> {
    let (m, n) = (design.n, indices.len());
    let mut a = vec![0.0; m * n];
    for (i, row) in design.rows().enumerate() {
        for (c, v) in basis_row(indices, row, p).into_iter().enumerate() {
            a[c * m + i] = v;
        }
    }
    let fit = lstsq::solve(&a, m, n, y)?;
    let mean = y.iter().sum::<f64>() / m as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
    let press = fit
        .residuals
        .iter()
        .zip(&fit.leverages)
        .map(|(r, h)| {
            let e = r / (1.0 - h);
            e * e
        })
        .sum::<f64>()
        / m as f64;
    let scale = mean * mean + f64::MIN_POSITIVE;
    let loo = if var <= 1e-28 * scale {
        // Constant responses: an exact fit has zero error.
        if press <= 1e-24 * scale {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        press / var
    };
    Ok(DegreeFit {
        coeffs: fit.coeffs,
        loo,
    })
}

/// Least-squares PCE fit on the cube design. Every candidate degree must
/// satisfy `n_train >= 2 * basis_size`.
pub fn fit(
    spec: &RandomInputSpec,
    design: &SampleMatrix,
    responses: &[f64],
    policy: DegreePolicy,
) -> Result<PceModel> {
    let k = spec.len();
    if design.k != k || design.n != responses.len() {
        return Err(Error::Config(format!(
            "design is {}x{} with {} responses for {k} inputs",
            design.n,
            design.k,
            responses.len()
        )));
    }
    if let Some(bad) = responses.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite response {bad}")));
    }
    let candidates = policy.candidates();
    if candidates.is_empty() {
        return Err(Error::Config(
            "degree policy has no candidate degree".into(),
        ));
    }
    for &p in &candidates {
        let needed = OVERSAMPLING * basis_size(k, p);
        if design.n < needed {
            return Err(Error::Config(format!(
                "degree {p} with {k} inputs needs at least {needed} training points, got {}",
                design.n
            )));
        }
    }
    let mut tried = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, Vec<MultiIndex>, DegreeFit)> = None;
    for &p in &candidates {
        let indices = multi_indices(k, p);
        let f = fit_degree(design, responses, &indices, p)?;
        tried.push((p, f.loo));
        if best.as_ref().is_none_or(|(_, _, b)| f.loo < b.loo) {
            best = Some((p, indices, f));
        }
    }
    let (degree, indices, f) = best.expect("at least one candidate");
    Ok(PceModel {
        spec: spec.clone(),
        indices,
        coeffs: f.coeffs,
        degree,
        loo_error: f.loo,
        n_train: design.n,
        candidates: tried,
    })
}

/// Mean `y_0` and variance `sum_{alpha != 0} y_alpha^2`.
pub fn moments(model: &PceModel) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (alpha, c) in model.indices.iter().zip(&model.coeffs) {
        if alpha.is_zero() {
            mean = *c;
        } else {
            var += c * c;
        }
    }
    (mean, var)
}

/// Closed Sobol index of exactly the inputs in `subset` (sorted, distinct):
/// share of variance carried by terms whose support equals `subset`.
pub fn subset_index(model: &PceModel, subset: &[usize]) -> Result<f64> {
    let (_, var) = moments(model);
    if !(var > 0.0) {
        return Err(Error::DegenerateOutput { variance: var });
    }
    let part: f64 = model
        .indices
        .iter()
        .zip(&model.coeffs)
        .filter(|(a, _)| a.support() == subset)
        .map(|(_, c)| c * c)
        .sum();
    Ok(part / var)
}

/// First-order (and, for `max_order >= 2`, second-order) Sobol indices read
/// off the coefficients.
pub fn sobol_from_pce(model: &PceModel, max_order: usize) -> Result<SensitivityReport> {
    if !(1..=2).contains(&max_order) {
        return Err(Error::Config(format!(
            "reports hold first and second order indices, got max_order = {max_order}"
        )));
    }
    let (_, var) = moments(model);
    if !(var > 0.0) {
        return Err(Error::DegenerateOutput { variance: var });
    }
    let k = model.spec.len();
    let names = model.spec.names();
    let mut first = vec![0.0; k];
    let mut second = vec![vec![0.0; k]; k];
    for (alpha, c) in model.indices.iter().zip(&model.coeffs) {
        match alpha.support().as_slice() {
            [i] => first[*i] += c * c,
            [i, j] => second[*i][*j] += c * c,
            _ => {}
        }
    }
    let first_order = names
        .iter()
        .zip(&first)
        .map(|(n, v)| (n.clone(), v / var))
        .collect();
    let mut second_order = Vec::new();
    if max_order >= 2 {
        for i in 0..k {
            for j in i + 1..k {
                second_order.push(((names[i].clone(), names[j].clone()), second[i][j] / var));
            }
        }
    }
    Ok(SensitivityReport::new(
        SobolMethod::Pce,
        first_order,
        second_order,
        ReportMeta {
            n_base: model.n_train,
            n_evaluations: model.n_train,
            seed: 0,
            degree: Some(model.degree),
            loo_error: Some(model.loo_error),
        },
    ))
}

/// Surrogate value `sum_alpha y_alpha psi_alpha(u)`.
pub fn surrogate_eval(model: &PceModel, u: &[f64]) -> Result<f64> {
    if u.len() != model.spec.len() {
        return Err(Error::Domain(format!(
            "point has {} coordinates, model has {} inputs",
            u.len(),
            model.spec.len()
        )));
    }
    if let Some(bad) = u.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(Error::Domain(format!(
            "cube coordinate {bad} outside [-1, 1]"
        )));
    }
    Ok(basis_row(&model.indices, u, model.degree)
        .iter()
        .zip(&model.coeffs)
        .map(|(b, c)| b * c)
        .sum())
}

impl PceModel {
    /// The same model with inputs reordered: input `i` of the result is input
    /// `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            spec: self.spec.permuted(order),
            indices: self.indices.iter().map(|a| a.permuted(order)).collect(),
            ..self.clone()
        }
    }

    /// Versioned plain-text artifact: a header (spec hash, inputs, degree,
    /// training size, LOO error) followed by one `alpha_1 .. alpha_k coeff`
    /// row per term.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{ARTIFACT_HEADER}");
        let _ = writeln!(s, "version = {ARTIFACT_VERSION}");
        let _ = writeln!(s, "spec_hash = {}", self.spec.hash_hex());
        let inputs: Vec<String> = self
            .spec
            .entries()
            .iter()
            .map(|e| format!("{}:{:?}:{:?}", e.name, e.lower, e.upper))
            .collect();
        let _ = writeln!(s, "inputs = {}", inputs.join(","));
        let frozen: Vec<String> = self
            .spec
            .frozen()
            .iter()
            .map(|(n, v)| format!("{n}={v:?}"))
            .collect();
        let _ = writeln!(s, "frozen = {}", frozen.join(","));
        let _ = writeln!(s, "degree = {}", self.degree);
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "loo_error = {:?}", self.loo_error);
        let _ = writeln!(s, "terms = {}", self.indices.len());
        for (alpha, c) in self.indices.iter().zip(&self.coeffs) {
            for a in &alpha.0 {
                let _ = write!(s, "{a} ");
            }
            let _ = writeln!(s, "{c:?}");
        }
        s
    }

    /// Parses [`to_text`](Self::to_text) output and checks the spec hash.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("pce artifact: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(ARTIFACT_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut header = std::collections::HashMap::new();
        for _ in 0..8 {
            let line = lines.next().ok_or_else(|| bad("truncated header".into()))?;
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| bad(format!("bad header line '{line}'")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| bad(format!("missing '{k}'")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| bad(format!("bad number for '{k}'")))
        };
        let int = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| bad(format!("bad integer for '{k}'")))
        };
        if int("version")? != ARTIFACT_VERSION as usize {
            return Err(bad(format!("unsupported version {}", get("version")?)));
        }
        let mut entries = Vec::new();
        for item in get("inputs")?.split(',').filter(|s| !s.is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            let [name, lo, hi] = parts[..] else {
                return Err(bad(format!("bad input '{item}'")));
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("bad bound in '{item}'")))
            };
            entries.push(InputEntry {
                name: name.to_string(),
                lower: parse(lo)?,
                upper: parse(hi)?,
            });
        }
        let mut frozen = Vec::new();
        for item in get("frozen")?.split(',').filter(|s| !s.is_empty()) {
            let (n, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("bad frozen value '{item}'")))?;
            frozen.push((
                n.to_string(),
                v.parse()
                    .map_err(|_| bad(format!("bad frozen value '{item}'")))?,
            ));
        }
        let spec = RandomInputSpec::new(entries)?.with_frozen(frozen);
        if spec.hash_hex() != get("spec_hash")? {
            return Err(bad("spec hash does not match the inputs".into()));
        }
        let k = spec.len();
        let terms = int("terms")?;
        let mut indices = Vec::with_capacity(terms);
        let mut coeffs = Vec::with_capacity(terms);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != k + 1 {
                return Err(bad(format!(
                    "term row '{line}' should hold {} fields",
                    k + 1
                )));
            }
            let alpha = fields[..k]
                .iter()
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|_| bad(format!("bad degree in '{line}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            indices.push(MultiIndex(alpha));
            coeffs.push(
                fields[k]
                    .parse()
                    .map_err(|_| bad(format!("bad coefficient in '{line}'")))?,
            );
        }
        if indices.len() != terms {
            return Err(bad(format!(
                "expected {terms} terms, found {}",
                indices.len()
            )));
        }
        let degree = int("degree")?;
        Ok(Self {
            spec,
            indices,
            coeffs,
            degree,
            loo_error: num("loo_error")?,
            n_train: int("n_train")?,
            candidates: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uq::lhs_sample;

    fn cube_spec(k: usize) -> RandomInputSpec {
        RandomInputSpec::new(
            (0..k)
                .map(|i| InputEntry {
                    name: format!("u{}", i + 1),
                    lower: -1.0,
                    upper: 1.0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn fit_fn(k: usize, n: usize, p: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> PceModel {
        let design = lhs_sample(n, k, seed).unwrap();
        let y: Vec<f64> = design.rows().map(&f).collect();
        fit(&cube_spec(k), &design, &y, DegreePolicy::Fixed(p)).unwrap()
    }

    #[test]
    fn multi_index_sets() {
        let m = multi_indices(2, 2);
        let expected: Vec<MultiIndex> = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
            .iter()
            .map(|a| MultiIndex(a.to_vec()))
            .collect();
        assert_eq!(m, expected);
        assert_eq!(multi_indices(6, 3).len(), 84);
        assert_eq!(multi_indices(4, 0), vec![MultiIndex(vec![0; 4])]);
        for (k, p) in [(3, 9), (6, 5), (8, 4)] {
            let set = multi_indices(k, p);
            assert_eq!(set.len(), basis_size(k, p));
            assert!(set.windows(2).all(|w| w[0].degree() <= w[1].degree()));
        }
    }

    #[test]
    fn basis_values() {
        assert_eq!(
            eval_basis(&MultiIndex(vec![0, 0, 0]), &[0.3, -0.9, 1.0]),
            1.0
        );
        assert!((legendre_orthonormal(1, 1.0) - 3f64.sqrt()).abs() < 1e-15);
        assert!((legendre_orthonormal(1, 1.0) - 1.7320508).abs() < 1e-7);
        // psi_n(1) = sqrt(2n + 1).
        for n in 0..12 {
            assert!((legendre_orthonormal(n, 1.0) - ((2 * n + 1) as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_responses() {
        let design = lhs_sample(40, 2, 1).unwrap();
        let y = vec![3.25; 40];
        let m = fit(&cube_spec(2), &design, &y, DegreePolicy::Fixed(2)).unwrap();
        assert!((m.coeffs[0] - 3.25).abs() < 1e-12);
        assert!(m.coeffs[1..].iter().all(|c| c.abs() < 1e-12));
        assert_eq!(m.loo_error, 0.0);
        assert_eq!(moments(&m).0, m.coeffs[0]);
        assert!(moments(&m).1 < 1e-24);
        assert!((surrogate_eval(&m, &[0.4, -0.7]).unwrap() - 3.25).abs() < 1e-12);
    }

    #[test]
    fn square_of_first_input() {
        let m = fit_fn(2, 60, 2, 9, |u| u[0] * u[0]);
        let expect = [1.0 / 3.0, 0.0, 0.0, 2.0 / (3.0 * 5f64.sqrt()), 0.0, 0.0];
        for (c, e) in m.coeffs.iter().zip(expect) {
            assert!((c - e).abs() < 1e-10, "{c} vs {e}");
        }
        assert!(m.loo_error < 1e-10);
        let (mean, var) = moments(&m);
        assert!((mean - 1.0 / 3.0).abs() < 1e-9);
        assert!((var - 4.0 / 45.0).abs() < 1e-9);
        let r = sobol_from_pce(&m, 2).unwrap();
        assert!((r.first("u1").unwrap() - 1.0).abs() < 1e-9);
        assert!(r.first("u2").unwrap().abs() < 1e-9);
        assert!(r.second("u1", "u2").unwrap().abs() < 1e-9);
    }

    #[test]
    fn linear_model_indices() {
        let m = fit_fn(2, 30, 1, 4, |u| u[0] + 2.0 * u[1]);
        let r = sobol_from_pce(&m, 1).unwrap();
        assert!((r.first("u1").unwrap() - 0.2).abs() < 1e-12);
        assert!((r.first("u2").unwrap() - 0.8).abs() < 1e-12);
        assert!(r.second_order.is_empty());
    }

    #[test]
    fn exact_fit_reproduces_training_data() {
        let f = |u: &[f64]| 1.0 + u[0] * u[1] - 0.5 * u[2].powi(3) + u[1] * u[1];
        let design = lhs_sample(80, 3, 2).unwrap();
        let y: Vec<f64> = design.rows().map(f).collect();
        let m = fit(&cube_spec(3), &design, &y, DegreePolicy::Fixed(3)).unwrap();
        for (row, yi) in design.rows().zip(&y) {
            assert!((surrogate_eval(&m, row).unwrap() - yi).abs() < 1e-9);
        }
        // At the centre only even-degree terms survive.
        let centre: f64 = m
            .indices
            .iter()
            .zip(&m.coeffs)
            .filter(|(a, _)| a.0.iter().all(|d| d % 2 == 0))
            .map(|(a, c)| c * eval_basis(a, &[0.0; 3]))
            .sum();
        assert!((surrogate_eval(&m, &[0.0; 3]).unwrap() - centre).abs() < 1e-12);
        assert!(surrogate_eval(&m, &[1.2, 0.0, 0.0]).is_err());
    }

    #[test]
    fn adaptive_picks_lowest_error() {
        let design = lhs_sample(200, 2, 5).unwrap();
        let y: Vec<f64> = design
            .rows()
            .map(|u| (2.0 * u[0]).sin() + u[1] * u[1])
            .collect();
        let m = fit(
            &cube_spec(2),
            &design,
            &y,
            DegreePolicy::Adaptive { min: 2, max: 8 },
        )
        .unwrap();
        assert_eq!(m.candidates.len(), 7);
        let best = m
            .candidates
            .iter()
            .map(|c| c.1)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(m.loo_error, best);
        assert!(m.degree > 2);
    }

    #[test]
    fn oversampling_enforced() {
        let design = lhs_sample(11, 2, 5).unwrap();
        let y = vec![1.0; 11];
        // p = 2 has 6 terms and needs 12 points.
        assert!(matches!(
            fit(&cube_spec(2), &design, &y, DegreePolicy::Fixed(2)),
            Err(Error::Config(_))
        ));
        assert!(fit(&cube_spec(2), &design, &y, DegreePolicy::Fixed(1)).is_ok());
    }

    #[test]
    fn duplicated_design_is_ill_conditioned() {
        let rows = vec![vec![0.5, -0.5]; 20];
        let design = SampleMatrix::from_rows(&rows, 0).unwrap();
        let y = vec![1.0; 20];
        assert!(matches!(
            fit(&cube_spec(2), &design, &y, DegreePolicy::Fixed(1)),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn zero_variance_sobol_is_degenerate() {
        let design = lhs_sample(20, 2, 1).unwrap();
        let m = fit(&cube_spec(2), &design, &[0.0; 20], DegreePolicy::Fixed(1)).unwrap();
        assert!(matches!(
            sobol_from_pce(&m, 1),
            Err(Error::DegenerateOutput { .. })
        ));
        let m = fit_fn(2, 30, 1, 4, |u| u[0]);
        assert!(sobol_from_pce(&m, 3).is_err());
    }

    #[test]
    fn artifact_round_trip() {
        let m = fit_fn(3, 60, 2, 8, |u| u[0] - u[1] * u[2] + 0.1 * u[2]);
        let text = m.to_text();
        let back = PceModel::from_text(&text).unwrap();
        assert_eq!(back.coeffs, m.coeffs);
        assert_eq!(back.indices, m.indices);
        assert_eq!(back.spec, m.spec);
        assert_eq!(back.loo_error, m.loo_error);
        let tampered = text.replace("u1:-1.0:1.0", "u1:-1.0:2.0");
        assert!(PceModel::from_text(&tampered).is_err());
    }
}
