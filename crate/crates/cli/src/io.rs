use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use injectcheck_core::Matrix;
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = read_text(path)?;
    Matrix::from_csv_str(&text).with_context(|| format!("in {}", path.display()))
}

/// Bias vector: one value per line, or a single comma-separated row.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    anyhow::ensure!(
        m.rows() == 1 || m.cols() == 1,
        "{}: expected a single row or column, got {}x{}",
        path.display(),
        m.rows(),
        m.cols()
    );
    Ok(m.as_slice().to_vec())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        anyhow::anyhow!(
            "{}: parse error at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        )
    })
}

/// Where results go: a file when `--out` is given, stdout otherwise.
pub struct Sink {
    pub out: Option<PathBuf>,
}

impl Sink {
    pub fn emit(&self, text: &str) -> Result<()> {
        let mut text = text.to_string();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        match &self.out {
            Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                lock.write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

/// JSON object with `command` and `seed` recorded next to `body`'s fields.
pub fn tagged(command: &str, seed: u64, body: Value) -> Value {
    let mut map = Map::new();
    map.insert("command".into(), Value::from(command));
    map.insert("seed".into(), Value::from(seed));
    match body {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    Value::Object(map)
}

pub fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}
