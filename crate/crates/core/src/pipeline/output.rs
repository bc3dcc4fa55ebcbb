use std::str::FromStr;

use serde_json::{Map, Value};

use super::{BenchmarkReport, GlobalReport, SpectrumReport, SCHEMA};
use crate::error::{Error, Result};
use crate::shapley::Attribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::config(format!("bad format {s:?}; use json or csv"))),
        }
    }
}

/// Anything the CLI can emit.
#[derive(Debug, Clone)]
pub enum Report {
    Local(Attribution),
    Global(GlobalReport),
    Spectrum(SpectrumReport),
    Benchmark(BenchmarkReport),
}

impl Report {
    fn kind(&self) -> &'static str {
        match self {
            Report::Local(_) => "local",
            Report::Global(_) => "global",
            Report::Spectrum(_) => "spectrum",
            Report::Benchmark(_) => "benchmark",
        }
    }

    pub fn to_json(&self) -> String {
        let body = match self {
            Report::Local(a) => serde_json::to_value(a),
            Report::Global(g) => serde_json::to_value(g),
            Report::Spectrum(s) => serde_json::to_value(s),
            Report::Benchmark(b) => serde_json::to_value(b),
        }
        .expect("reports serialize");
        let mut out = Map::new();
        out.insert("schema".into(), Value::from(SCHEMA));
        out.insert("kind".into(), Value::from(self.kind()));
        if let Value::Object(fields) = body {
            out.extend(fields);
        }
        serde_json::to_string_pretty(&Value::Object(out)).expect("json") + "\n"
    }

    /// Plot-ready table: per-feature rows, or per-bin rows for spectra.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let feature_rows = |w: &mut csv::Writer<Vec<u8>>, names: &[String], phi: &[f64], se: &[f64]| {
            w.write_record(["feature", "phi", "std_error"]).expect("csv");
            for ((n, p), s) in names.iter().zip(phi).zip(se) {
                w.write_record([n.as_str(), &p.to_string(), &s.to_string()])
                    .expect("csv");
            }
        };
        match self {
            Report::Local(a) => feature_rows(&mut w, &a.feature_names, &a.values, &a.std_errors),
            Report::Global(g) => feature_rows(&mut w, &g.feature_names, &g.values, &g.std_errors),
            Report::Benchmark(b) => {
                let g = &b.global;
                feature_rows(&mut w, &g.feature_names, &g.values, &g.std_errors)
            }
            Report::Spectrum(s) => {
                w.write_record(["bin", "frequency", "phi", "std_error"]).expect("csv");
                for r in &s.rows {
                    w.write_record([
                        r.bin.to_string(),
                        r.frequency.to_string(),
                        r.phi.to_string(),
                        r.std_error.to_string(),
                    ])
                    .expect("csv");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}
