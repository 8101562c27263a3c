//! Bundle files. Every file goes through a temporary sibling and a rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use kgscatter::linalg::CMat;
use kgscatter::model::{encode_matrix, MatrixHeader};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
}

pub struct BundleWriter {
    dir: PathBuf,
    pub files: Vec<FileEntry>,
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = tempfile::Builder::new().prefix(".kgscatter-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::Output(e.error))?;
    Ok(())
}

/// A numeric table with a units-bearing header. Complex columns are given as `re_`/`im_` pairs by the caller.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip representation; Rust always prints '.' as the decimal mark.
fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

impl BundleWriter {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)?;
        Ok(BundleWriter { dir, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        write_atomic(&self.dir, name, table.to_csv().as_bytes())?;
        self.files.push(FileEntry { name: name.into(), kind: "csv", columns: table.columns.clone() });
        Ok(())
    }

    pub fn matrix(&mut self, stem: &str, a: &CMat, header: MatrixHeader) -> Result<(), CliError> {
        let bin = format!("{stem}.bin");
        let json = format!("{stem}.json");
        write_atomic(&self.dir, &bin, &encode_matrix(a))?;
        let text = serde_json::to_string_pretty(&header).map_err(|e| CliError::Internal(e.to_string()))?;
        write_atomic(&self.dir, &json, text.as_bytes())?;
        self.files.push(FileEntry { name: bin, kind: "matrix", columns: Vec::new() });
        self.files.push(FileEntry { name: json, kind: "matrix_header", columns: Vec::new() });
        Ok(())
    }

    /// Written last, so a present report means a complete bundle.
    pub fn report(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        write_atomic(&self.dir, name, text.as_bytes())?;
        Ok(self.dir.join(name))
    }
}
