//! Result tables and their CSV / JSON renderings.

use serde::Serialize;

use crate::config::{ExperimentConfig, Format};
use crate::CliError;

pub const CSV_COLUMNS: [&str; 8] = ["m", "quantity", "t", "value", "std_error", "engine", "n_reps", "seed"];

/// One value in long format. `std_error` holds the standard error for
/// Monte Carlo rows and the estimated absolute error for analytic rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub m: u32,
    pub quantity: &'static str,
    pub t: Option<f64>,
    pub value: f64,
    pub std_error: f64,
    pub engine: &'static str,
    pub n_reps: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub m: u32,
    pub engine: &'static str,
    pub message: String,
}

/// Optimum over the swept m for one engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub engine: &'static str,
    pub argmax_m: Option<u32>,
    pub max: Option<f64>,
    pub flat_set: Vec<u32>,
    pub no_interior_optimum: bool,
}

/// What was asked for, beyond the config file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub m: Vec<u32>,
    pub quantity: Option<&'static str>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub selection: Selection,
    pub records: Vec<Record>,
    pub failures: Vec<Failure>,
    pub summaries: Vec<Summary>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// Debug formatting switches to exponent notation for tiny and huge values
// and still round-trips exactly.
fn num(v: f64) -> String {
    format!("{v:?}")
}

impl Summary {
    pub fn footer(&self) -> String {
        let flat: Vec<String> = self.flat_set.iter().map(|m| m.to_string()).collect();
        format!(
            "engine={},argmax_m={},max={},flat_set={},no_interior_optimum={}",
            self.engine,
            opt(self.argmax_m),
            self.max.map(num).unwrap_or_default(),
            flat.join(";"),
            self.no_interior_optimum
        )
    }
}

impl Report {
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
        }
    }

    fn to_csv(&self) -> Result<String, CliError> {
        let mut out = String::new();
        out.push_str(&format!("# chainsim {} {}\n", self.version, self.command));
        out.push_str(&format!("# config {}\n", one_line(&self.config)));
        out.push_str(&format!("# selection {}\n", one_line(&self.selection)));
        for f in &self.failures {
            out.push_str(&format!("# failed engine={} m={}: {}\n", f.engine, f.m, f.message.replace('\n', " ")));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for r in &self.records {
            w.write_record([
                r.m.to_string(),
                r.quantity.to_string(),
                r.t.map(num).unwrap_or_default(),
                num(r.value),
                num(r.std_error),
                r.engine.to_string(),
                opt(r.n_reps),
                opt(r.seed),
            ])
            .map_err(io)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        for s in &self.summaries {
            out.push_str(&format!("# {}\n", s.footer()));
        }
        Ok(out)
    }
}

fn one_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report values serialize")
}
