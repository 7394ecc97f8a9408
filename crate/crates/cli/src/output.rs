//! Output directory handling: every file starts with a version and
//! config-hash header line, and `summary.txt` collects fixed keys.

use std::fs;
use std::path::{Path, PathBuf};

use twistlab::fmt_sci;

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn header(hash: &str) -> String {
    format!("# twistlab {VERSION} config_hash={hash}")
}

/// Pass/fail record for one assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub struct Output {
    dir: PathBuf,
    hash: String,
    entries: Vec<(String, String)>,
    checks: Vec<Check>,
    files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path, hash: String) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            hash,
            entries: Vec::new(),
            checks: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn value(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn number(&mut self, key: impl Into<String>, x: f64) {
        self.value(key, fmt_sci(x));
    }

    pub fn values(&mut self, prefix: &str, kv: Vec<(String, String)>) {
        for (k, v) in kv {
            self.value(format!("{prefix}{k}"), v);
        }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Write `name` with the header, a column line and the rows.
    pub fn csv(&mut self, name: &str, columns: &str, rows: impl IntoIterator<Item = String>) -> Result<(), CliError> {
        let mut text = format!("{}\n{columns}\n", header(&self.hash));
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        self.write(name, &text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Write `summary.txt`: command, status, failure count and names, files, values
    /// and one `check.<name>` line per assertion.
    pub fn finish(mut self, command: &str) -> Result<Vec<Check>, CliError> {
        let failed: Vec<&str> = self.failures().iter().map(|c| c.name.as_str()).collect();
        let failures = failed.len();
        let mut text = format!("{}\n", header(&self.hash));
        text.push_str(&format!("command = {command}\n"));
        text.push_str(&format!("status = {}\n", if failures == 0 { "pass" } else { "fail" }));
        text.push_str(&format!("checks = {}\n", self.checks.len()));
        text.push_str(&format!("failures = {failures}\n"));
        text.push_str(&format!("failed = {}\n", failed.join(",")));
        text.push_str(&format!("files = {}\n", self.files.join(",")));
        for (k, v) in &self.entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        for c in &self.checks {
            text.push_str(&format!(
                "check.{} = {}{}\n",
                c.name,
                if c.passed { "pass" } else { "fail" },
                if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) }
            ));
        }
        self.write("summary.txt", &text)?;
        Ok(self.checks)
    }
}
