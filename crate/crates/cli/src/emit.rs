//! CSV and manifest writers.
//!
//! Numbers are written in shortest round-trip exponent form and the manifest
//! is JSON with sorted keys and no timestamps, so identical inputs and seeds
//! give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use optomod_core::{Error, Result};
use serde_json::Value;

use crate::config::Output;

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub struct Emitter {
    dir: PathBuf,
    prefix: String,
    files: Vec<String>,
}

impl Emitter {
    pub fn new(output: &Output) -> Result<Self> {
        let dir = PathBuf::from(&output.dir);
        fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Emitter { dir, prefix: output.prefix.clone(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Names written so far, relative to the output directory.
    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn path_for(&mut self, suffix: &str) -> PathBuf {
        let name = format!("{}{suffix}", self.prefix);
        let path = self.dir.join(&name);
        self.files.push(name);
        path
    }

    /// Writes `{prefix}{suffix}` with a header row and string records.
    pub fn csv(&mut self, suffix: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.path_for(suffix);
        let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    /// Numeric table: each row is formatted with [`num`].
    pub fn table(
        &mut self,
        suffix: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> Result<PathBuf> {
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = rows.into_iter().map(|r| r.into_iter().map(num).collect()).collect();
        self.csv(suffix, &header, &rows)
    }

    pub fn manifest(&mut self, mut manifest: Value) -> Result<PathBuf> {
        let path = self.path_for(".manifest.json");
        if let Value::Object(map) = &mut manifest {
            map.insert("files".into(), Value::from(self.files.clone()));
        }
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0, -2.5e-300, 6.757_8e6, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn manifest_keys_are_sorted_and_files_listed() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output { dir: dir.path().to_string_lossy().into_owned(), prefix: "t".into() };
        let mut e = Emitter::new(&out).unwrap();
        e.table(".csv", &["omega", "value"], vec![vec![1.0, 2.0]]).unwrap();
        let path = e.manifest(json!({"zeta": 1, "alpha": 2})).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
        assert!(text.contains("\"t.csv\""));
        assert_eq!(fs::read_to_string(dir.path().join("t.csv")).unwrap(), "omega,value\n1e0,2e0\n");
    }
}
