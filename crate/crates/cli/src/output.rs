//! Atomic file output. Every file is first written to a temporary file in
//! the target directory and renamed into place, so a failed run never
//! leaves a partial artifact behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub struct OutDir {
    root: PathBuf,
    /// Files written so far, in order.
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(root: PathBuf) -> Self {
        OutDir { root, written: Vec::new() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_with(
        &mut self,
        path: &Path,
        f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            f(&mut w).and_then(|_| w.flush()).map_err(CliError::io(path))?;
        }
        tmp.persist(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.error })?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_bytes(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        self.write_with(path, |w| w.write_all(bytes))
    }

    /// Pretty JSON wrapped with the seed and config digest.
    pub fn write_json<T: Serialize>(&mut self, name: &str, stamp: &Stamp, body: &T) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            seed: u64,
            config_digest: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        let doc = Stamped { seed: stamp.seed, config_digest: &stamp.digest, body };
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("reports serialize");
        bytes.push(b'\n');
        let path = self.path(name);
        self.write_bytes(&path, &bytes)?;
        Ok(path)
    }

    /// Line-delimited records: a tagged header line, a column line, then
    /// one tab-separated record per row.
    pub fn write_records(
        &mut self,
        name: &str,
        kind: &str,
        stamp: &Stamp,
        columns: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        self.write_with(&path, |w| {
            writeln!(w, "#liftbid-{kind}\tv1\tseed={}\tdigest={}", stamp.seed, stamp.digest)?;
            writeln!(w, "#{}", columns.join("\t"))?;
            for r in rows {
                writeln!(w, "{}", r.join("\t"))?;
            }
            Ok(())
        })?;
        Ok(path)
    }
}

#[derive(Debug, Clone)]
pub struct Stamp {
    pub seed: u64,
    pub digest: String,
}

pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}
