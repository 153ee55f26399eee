//! JSON-lines metrics: a config line, one line per iteration, a summary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use dino_core::dino::{IterationRecord, SgdRecord};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Serialize)]
struct Line<'a, T: Serialize> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct ConfigBody<'a> {
    config: crate::config::Provenance<'a>,
}

pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Ok(MetricsWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    fn line<T: Serialize>(&mut self, kind: &'static str, body: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, &Line { kind, body })?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn config(&mut self, cfg: &RunConfig) -> Result<()> {
        self.line(
            "config",
            &ConfigBody {
                config: cfg.provenance(),
            },
        )
    }

    pub fn iteration(&mut self, r: &IterationRecord) -> Result<()> {
        self.line("iteration", r)
    }

    pub fn sgd_iteration(&mut self, r: &SgdRecord) -> Result<()> {
        self.line("sgd_iteration", r)
    }

    pub fn summary<T: Serialize>(&mut self, s: &T) -> Result<()> {
        self.line("summary", s)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Metrics {
    pub config: Option<Value>,
    pub iterations: Vec<IterationRecord>,
    pub sgd_iterations: Vec<SgdRecord>,
    pub summary: Option<Value>,
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Metrics> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut out = Metrics::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| CliError::Metrics {
            line: lineno,
            message,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let kind = value
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing \"type\" field".into()))?
            .to_string();
        match kind.as_str() {
            "config" => out.config = value.get("config").cloned(),
            "iteration" => out
                .iterations
                .push(serde_json::from_value(value).map_err(|e| bad(e.to_string()))?),
            "sgd_iteration" => out
                .sgd_iterations
                .push(serde_json::from_value(value).map_err(|e| bad(e.to_string()))?),
            "summary" => out.summary = Some(value),
            other => return Err(bad(format!("unknown line type {other:?}"))),
        }
    }
    Ok(out)
}
