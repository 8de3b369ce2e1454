//! CSV tables with fixed headers. Floats use the shortest representation
//! that parses back to the same value.

use harvest_sa_core::analysis::{BifurcationData, PowerGrid};
use harvest_sa_core::integrator::TimeSeries;
use harvest_sa_core::uq::{Bands, SensitivityReport};

use crate::error::{CliError, CliResult};

pub const SIMULATE_HEADER: [&str; 4] = ["t", "x", "xdot", "v"];
pub const SOBOL_HEADER: [&str; 4] = ["order", "param_1", "param_2", "index"];
pub const SOBOL_SWEEP_HEADER: [&str; 5] = ["f", "order", "param_1", "param_2", "index"];
pub const PROPAGATE_HEADER: [&str; 3] = ["f", "percentile", "mean_power"];
pub const BIFURCATION_HEADER: [&str; 4] = ["direction", "f", "strobe_index", "v"];
pub const POWER_MAP_HEADER: [&str; 3] = ["beta", "f", "mean_power"];
pub const VALIDATE_HEADER: [&str; 5] = ["group", "check", "value", "tolerance", "passed"];

/// Shortest round-trip text of `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)
            .map_err(|e| CliError::Csv(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row)
                .map_err(|e| CliError::Csv(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Csv(e.to_string()))
    }

    pub fn from_csv(bytes: &[u8]) -> CliResult<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(bytes);
        let header = r
            .headers()
            .map_err(|e| CliError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(|e| CliError::Csv(e.to_string()))
            })
            .collect::<CliResult<_>>()?;
        Ok(Self { header, rows })
    }

    /// Column `name` parsed as floats.
    pub fn float_column(&self, name: &str) -> CliResult<Vec<f64>> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Csv(format!("no column '{name}'")))?;
        self.rows
            .iter()
            .map(|row| {
                row[j]
                    .parse::<f64>()
                    .map_err(|e| CliError::Csv(format!("column '{name}': '{}': {e}", row[j])))
            })
            .collect()
    }
}

pub fn time_series_table(series: &TimeSeries) -> Table {
    let mut t = Table::new(&SIMULATE_HEADER);
    for (time, s) in series.t.iter().zip(&series.states) {
        t.push(vec![
            fmt_f64(*time),
            fmt_f64(s.x),
            fmt_f64(s.xdot),
            fmt_f64(s.v),
        ]);
    }
    t
}

fn sobol_rows(report: &SensitivityReport) -> impl Iterator<Item = Vec<String>> + '_ {
    let first = report
        .first_order
        .iter()
        .map(|(name, v)| vec!["1".into(), name.clone(), String::new(), fmt_f64(*v)]);
    let second = report
        .second_order
        .iter()
        .map(|((a, b), v)| vec!["2".into(), a.clone(), b.clone(), fmt_f64(*v)]);
    first.chain(second)
}

pub fn sobol_table(report: &SensitivityReport) -> Table {
    let mut t = Table::new(&SOBOL_HEADER);
    for row in sobol_rows(report) {
        t.push(row);
    }
    t
}

pub fn sobol_sweep_table(reports: &[(f64, SensitivityReport)]) -> Table {
    let mut t = Table::new(&SOBOL_SWEEP_HEADER);
    for (f, report) in reports {
        for row in sobol_rows(report) {
            let mut full = vec![fmt_f64(*f)];
            full.extend(row);
            t.push(full);
        }
    }
    t
}

pub fn bands_table(bands: &Bands) -> Table {
    let mut t = Table::new(&PROPAGATE_HEADER);
    for (f, row) in bands.f_grid.iter().zip(&bands.values) {
        for (pct, v) in bands.percentiles.iter().zip(row) {
            t.push(vec![fmt_f64(*f), fmt_f64(*pct), fmt_f64(*v)]);
        }
    }
    t
}

pub fn bifurcation_table(sweeps: &[BifurcationData]) -> Table {
    let mut t = Table::new(&BIFURCATION_HEADER);
    for sweep in sweeps {
        for record in &sweep.records {
            for (i, v) in record.samples.iter().enumerate() {
                t.push(vec![
                    sweep.direction.as_str().into(),
                    fmt_f64(record.f),
                    i.to_string(),
                    fmt_f64(*v),
                ]);
            }
        }
    }
    t
}

pub fn power_map_table(grid: &PowerGrid) -> Table {
    let mut t = Table::new(&POWER_MAP_HEADER);
    for (b, beta) in grid.beta_axis.iter().enumerate() {
        for (j, f) in grid.f_axis.iter().enumerate() {
            t.push(vec![fmt_f64(*beta), fmt_f64(*f), fmt_f64(grid.get(b, j))]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text_round_trips() {
        for x in [
            0.1,
            1.0,
            -0.0,
            1e-300,
            5e-324,
            f64::MAX,
            0.1 + 0.2,
            123456789.0,
        ] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn header_is_first_line() {
        let mut t = Table::new(&POWER_MAP_HEADER);
        t.push(vec!["0.5".into(), "0.15".into(), "0.03".into()]);
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(text, "beta,f,mean_power\n0.5,0.15,0.03\n");
        assert_eq!(Table::from_csv(text.as_bytes()).unwrap(), t);
    }
}
