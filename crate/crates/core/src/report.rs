//! Run manifests and deterministic output files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Formats a float with 9 significant digits in scientific notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        // Folds −0 into +0.
        return "0.00000000e0".to_string();
    }
    format!("{x:.8e}")
}

/// Rounds `x` to 9 significant digits, for JSON records.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    fmt_sig(x).parse().expect("formatted float parses")
}

/// Provenance for every output file of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub overrides: Vec<(String, String)>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// From `SOURCE_DATE_EPOCH` when set; absent otherwise so repeated runs
    /// stay byte-identical.
    pub timestamp: Option<u64>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            config: None,
            overrides: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|s| s.trim().parse().ok()),
        }
    }

    pub fn override_param(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.push((key.to_string(), value.to_string()));
        self
    }

    /// Manifest as `# key: value` comment lines for CSV headers.
    pub fn comment_block(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# command: {}\n", self.command));
        if let Some(c) = &self.config {
            s.push_str(&format!("# config: {c}\n"));
        }
        for (k, v) in &self.overrides {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!("# seed: {seed}\n"));
        }
        s.push_str(&format!("# tool_version: {}\n", self.tool_version));
        if let Some(t) = self.timestamp {
            s.push_str(&format!("# timestamp: {t}\n"));
        }
        s
    }
}

/// One output document: a CSV body (prefixed with the manifest as comments)
/// or a JSON value (written alongside a `.manifest.json` sidecar).
#[derive(Debug, Clone)]
pub enum Artifact {
    Csv { name: String, body: String },
    Json { name: String, value: serde_json::Value },
}

impl Artifact {
    pub fn name(&self) -> &str {
        match self {
            Artifact::Csv { name, .. } | Artifact::Json { name, .. } => name,
        }
    }
}

/// Writes `artifacts` into `dir`, creating it if needed. Refuses to replace
/// existing files unless `force` is set. Returns the written paths.
pub fn emit_report(
    dir: &Path,
    manifest: &RunManifest,
    artifacts: &[Artifact],
    force: bool,
) -> Result<Vec<PathBuf>> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut manifest = manifest.clone();
    manifest.outputs = artifacts.iter().map(|a| a.name().to_string()).collect();

    let mut planned: Vec<(PathBuf, String)> = Vec::new();
    for a in artifacts {
        match a {
            Artifact::Csv { name, body } => {
                planned.push((dir.join(name), format!("{}{}", manifest.comment_block(), body)));
            }
            Artifact::Json { name, value } => {
                let mut text = serde_json::to_string_pretty(value).expect("json serializes");
                text.push('\n');
                planned.push((dir.join(name), text));
            }
        }
    }
    if artifacts.iter().any(|a| matches!(a, Artifact::Json { .. })) {
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        planned.push((dir.join("manifest.json"), text));
    }

    if !force {
        if let Some((path, _)) = planned.iter().find(|(p, _)| p.exists()) {
            return Err(Error::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "file exists (use --force to overwrite)",
                ),
            });
        }
    }
    let mut written = Vec::with_capacity(planned.len());
    for (path, text) in planned {
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (RunManifest, Vec<Artifact>) {
        let mut m = RunManifest::new("test");
        m.seed = Some(7);
        m.timestamp = None;
        let arts = vec![
            Artifact::Csv {
                name: "a.csv".into(),
                body: "x\n1\n".into(),
            },
            Artifact::Json {
                name: "b.json".into(),
                value: serde_json::json!({"v": round_sig(1.0 / 3.0)}),
            },
        ];
        (m, arts)
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_sig(-0.0), "0.00000000e0");
        assert_eq!(fmt_sig(161.29032258064515), "1.61290323e2");
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333);
    }

    #[test]
    fn identical_manifest_identical_bytes() {
        let (m, arts) = sample();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = emit_report(d1.path(), &m, &arts, false).unwrap();
        let p2 = emit_report(d2.path(), &m, &arts, false).unwrap();
        assert_eq!(p1.len(), 3);
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
    }

    #[test]
    fn missing_directory_created() {
        let (m, arts) = sample();
        let d = tempfile::tempdir().unwrap();
        let nested = d.path().join("x/y");
        emit_report(&nested, &m, &arts, false).unwrap();
        assert!(nested.join("a.csv").exists());
    }

    #[test]
    fn existing_file_needs_force() {
        let (m, arts) = sample();
        let d = tempfile::tempdir().unwrap();
        emit_report(d.path(), &m, &arts, false).unwrap();
        assert!(emit_report(d.path(), &m, &arts, false).is_err());
        emit_report(d.path(), &m, &arts, true).unwrap();
    }
}
