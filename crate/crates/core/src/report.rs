//! Machine-readable outputs: CSV with fixed float formatting, JSON reports
//! (`report-v1`) and the trailing manifest (`manifest-v1`) with content
//! digests.  Timestamps and durations live only in the manifest so rerunning
//! with the same seed reproduces every other artifact byte for byte.

use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const REPORT_SCHEMA: &str = "report-v1";
pub const MANIFEST_SCHEMA: &str = "manifest-v1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits: enough for a bit-faithful f64 round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV table with a mandatory header row, comma separated, `.` decimal.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            buf: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[CsvCell]) {
        assert_eq!(cells.len(), self.columns, "column count mismatch");
        let mut first = true;
        for c in cells {
            if !first {
                self.buf.push(',');
            }
            first = false;
            match c {
                CsvCell::Int(v) => write!(self.buf, "{v}").unwrap(),
                CsvCell::Real(v) => self.buf.push_str(&fmt_f64(*v)),
                CsvCell::Text(s) => self.buf.push_str(s),
            }
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

pub enum CsvCell<'a> {
    Int(i64),
    Real(f64),
    Text(&'a str),
}

/// Collects emitted files and writes the manifest last.
pub struct ReportWriter {
    out_dir: PathBuf,
    command: String,
    master_seed: u64,
    config_echo: serde_json::Value,
    outputs: Vec<(String, String)>,
    started: std::time::Instant,
}

impl ReportWriter {
    pub fn new(
        out_dir: &Path,
        command: &str,
        master_seed: u64,
        config_echo: serde_json::Value,
    ) -> std::io::Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(ReportWriter {
            out_dir: out_dir.to_path_buf(),
            command: command.to_string(),
            master_seed,
            config_echo,
            outputs: Vec::new(),
            started: std::time::Instant::now(),
        })
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> std::io::Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, content)?;
        let digest = hex::encode(Sha256::digest(content.as_bytes()));
        self.outputs.push((name.to_string(), digest));
        Ok(path)
    }

    /// JSON report wrapped in the `report-v1` envelope.
    pub fn write_report(
        &mut self,
        name: &str,
        body: serde_json::Value,
    ) -> std::io::Result<PathBuf> {
        let doc = serde_json::json!({
            "schema": REPORT_SCHEMA,
            "tool_version": TOOL_VERSION,
            "command": self.command,
            "master_seed": self.master_seed,
            "body": body,
        });
        self.write_text(name, &format!("{:#}\n", doc))
    }

    /// Writes `manifest.json` and consumes the writer; call after every
    /// other file is out.
    pub fn finalize(self) -> std::io::Result<PathBuf> {
        let manifest = serde_json::json!({
            "schema": MANIFEST_SCHEMA,
            "tool_version": TOOL_VERSION,
            "command": self.command,
            "master_seed": self.master_seed,
            "config": self.config_echo,
            "outputs": self
                .outputs
                .iter()
                .map(|(name, sha256)| serde_json::json!({"file": name, "sha256": sha256}))
                .collect::<Vec<_>>(),
            "timing": {
                "wall_ms": self.started.elapsed().as_millis() as u64,
            },
        });
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, format!("{:#}\n", manifest))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_roundtrip() {
        for v in [
            1.0,
            -0.1,
            std::f64::consts::PI,
            1.559_581_156_259_877,
            1e-300,
            6.02e23,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            assert!(s.contains('e'));
        }
    }

    #[test]
    fn csv_shape() {
        let mut csv = Csv::new(&["n", "value", "label"]);
        csv.row(&[CsvCell::Int(3), CsvCell::Real(0.5), CsvCell::Text("x")]);
        let s = csv.finish();
        assert_eq!(s, "n,value,label\n3,5.0000000000000000e-1,x\n");
    }

    #[test]
    fn manifest_digests_match_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut w =
            ReportWriter::new(dir.path(), "test-cmd", 42, serde_json::json!({"k": 1})).unwrap();
        w.write_text("a.csv", "x\n1\n").unwrap();
        w.write_report("r.json", serde_json::json!({"ok": true})).unwrap();
        let manifest_path = w.finalize().unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(manifest_path).unwrap()).unwrap();
        assert_eq!(manifest["schema"], "manifest-v1");
        for out in manifest["outputs"].as_array().unwrap() {
            let content = std::fs::read(dir.path().join(out["file"].as_str().unwrap())).unwrap();
            assert_eq!(
                out["sha256"].as_str().unwrap(),
                hex::encode(Sha256::digest(&content))
            );
        }
    }
}
