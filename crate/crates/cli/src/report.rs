//! Report document and per-run bookkeeping.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

pub const REPORT_SCHEMA: &str = "corrdyn-report/1";

/// Collects config echo, artifacts and timings while a command runs.
pub struct RunContext {
    out: Option<PathBuf>,
    config: Map<String, Value>,
    artifacts: Vec<String>,
    timings: Map<String, Value>,
}

impl RunContext {
    pub fn new(out: Option<PathBuf>) -> CliResult<Self> {
        if let Some(dir) = &out {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        Ok(RunContext {
            out,
            config: Map::new(),
            artifacts: Vec::new(),
            timings: Map::new(),
        })
    }

    /// Records a resolved parameter in the config echo.
    pub fn config(&mut self, key: &str, value: impl Into<Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    pub fn config_map(&self) -> &Map<String, Value> {
        &self.config
    }

    /// Runs `f`, recording its wall time in milliseconds.
    pub fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings
            .insert(label.to_string(), json!(t.elapsed().as_secs_f64() * 1e3));
        out
    }

    pub fn has_out(&self) -> bool {
        self.out.is_some()
    }

    /// Writes an artifact under `--out`; a no-op without it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<Option<PathBuf>> {
        let Some(dir) = &self.out else {
            return Ok(None);
        };
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.push(path.display().to_string());
        Ok(Some(path))
    }

    pub fn finish(self, command: &str, results: Value) -> Value {
        json!({
            "schema": REPORT_SCHEMA,
            "command": command,
            "config": Value::Object(self.config),
            "results": results,
            "artifacts": self.artifacts,
            "timings": Value::Object(self.timings),
        })
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}

pub fn error_report(command: &str, config: &Map<String, Value>, err: &CliError) -> Value {
    let mut e = json!({
        "kind": err.kind(),
        "message": err.to_string(),
        "exit_code": err.exit_code(),
    });
    if let CliError::Parse { offset, .. } = err {
        e["offset"] = json!(offset);
    }
    if let CliError::Budget { required, budget } = err {
        e["required"] = json!(required.to_string());
        e["budget"] = json!(budget.to_string());
    }
    json!({
        "schema": REPORT_SCHEMA,
        "command": command,
        "config": Value::Object(config.clone()),
        "error": e,
    })
}

/// Point as `[re_a, im_a, re_b, im_b]`.
pub fn point_json(p: &corrdyn::ProjPoint) -> Value {
    json!(p.to_array())
}

/// JSON number, or null for non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}
