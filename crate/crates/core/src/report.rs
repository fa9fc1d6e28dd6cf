//! Versioned, digest-stamped result reports with JSON and CSV renderings.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Renders the table as CSV. Numbers use the shortest representation
    /// that parses back to the same `f64`; arrays are joined with `;`.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(csv_cell))?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_cell(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(csv_cell).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    }
}

/// A failure confined to one item of a batch run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemError {
    pub item: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    /// What produced the report, e.g. `measure/text` or `protocol/face`.
    pub kind: String,
    pub tool_version: String,
    pub seed: u64,
    /// Fully resolved configuration.
    pub config: Value,
    /// Input name to SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    pub summary: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    pub passed: Option<bool>,
    pub errors: Vec<ItemError>,
}

impl Report {
    pub fn new(kind: impl Into<String>) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            tool_version: TOOL_VERSION.to_string(),
            seed: 0,
            config: Value::Null,
            inputs: BTreeMap::new(),
            summary: BTreeMap::new(),
            tables: Vec::new(),
            passed: None,
            errors: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn error(&mut self, item: impl Into<String>, error: impl ToString) {
        self.errors.push(ItemError {
            item: item.into(),
            error: error.to_string(),
        });
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Structural checks every report must pass.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::parse_msg(format!("invalid report: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("unsupported schema version {}", self.schema_version));
        }
        if self.kind.is_empty() || self.tool_version.is_empty() {
            return fail("kind and tool_version are required".into());
        }
        for (name, digest) in &self.inputs {
            if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
                return fail(format!("input {name:?} has malformed digest {digest:?}"));
            }
        }
        let mut names = std::collections::HashSet::new();
        for table in &self.tables {
            if !names.insert(table.name.as_str()) {
                return fail(format!("duplicate table {:?}", table.name));
            }
            if let Some(row) = table.rows.iter().find(|r| r.len() != table.columns.len()) {
                return fail(format!(
                    "table {:?} has a row of width {} for {} columns",
                    table.name,
                    row.len(),
                    table.columns.len()
                ));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let report: Report = serde_json::from_str(text)?;
        report.validate()?;
        Ok(report)
    }

    /// Summary as a two-column `key,value` CSV.
    pub fn summary_csv(&self) -> Result<String> {
        let mut table = Table::new("summary", &["key", "value"]);
        for (k, v) in &self.summary {
            table.push(vec![Value::from(k.as_str()), v.clone()]);
        }
        table.to_csv()
    }
}

/// Converts a float to JSON, mapping non-finite values to `null`.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().copied().map(num).collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file, or of a directory's files (sorted relative paths and
/// contents) for directory inputs.
pub fn digest_path(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut hasher = Sha256::new();
        for rel in files {
            let bytes = fs::read(path.join(&rel))?;
            hasher.update(rel.as_bytes());
            hasher.update([0u8]);
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        Ok(hex::encode(hasher.finalize()))
    } else {
        Ok(sha256_hex(&fs::read(path)?))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("child of root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Report {
        let mut r = Report::new("protocol/test");
        r.seed = 7;
        r.inputs.insert("lexicon".into(), sha256_hex(b"abc"));
        r.set("kappa", 0.1 + 0.2);
        let mut t = Table::new("values", &["target", "value", "observed"]);
        t.push(vec![json!("nurse"), num(1.0 / 3.0), nums(&[0.25, 0.75])]);
        t.push(vec![json!("chef"), Value::Null, nums(&[])]);
        r.tables.push(t);
        r
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let r = sample();
        let back = Report::from_json_str(&r.to_json_string().unwrap()).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn csv_preserves_full_precision() {
        let r = sample();
        let csv = r.tables[0].to_csv().unwrap();
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        let first = reader.records().next().unwrap().unwrap();
        assert_eq!(first[1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(&first[2], "0.25;0.75");
        assert!(r.summary_csv().unwrap().contains("kappa,0.30000000000000004"));
    }

    #[test]
    fn validation_catches_ragged_rows_and_bad_digests() {
        let mut r = sample();
        r.tables[0].rows.push(vec![json!("x")]);
        assert!(r.validate().is_err());
        let mut r = sample();
        r.inputs.insert("corpus".into(), "nothex".into());
        assert!(r.validate().is_err());
    }

    #[test]
    fn directory_digest_depends_on_names_and_contents() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "one").unwrap();
        fs::write(dir.path().join("b.txt"), "two").unwrap();
        let d1 = digest_path(dir.path()).unwrap();
        assert_eq!(d1, digest_path(dir.path()).unwrap());
        fs::write(dir.path().join("b.txt"), "too").unwrap();
        assert_ne!(d1, digest_path(dir.path()).unwrap());
        assert_eq!(digest_path(dir.path().join("a.txt")).unwrap(), sha256_hex(b"one"));
    }
}
