//! Report files and the inputs digest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hes_regkit::fmt::to_json_string;
use hes_regkit::signal::SignalArchive;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const TOOL_VERSION: &str = concat!("hes-regkit ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Serialize)]
pub struct ExperimentReport<'a, T: Serialize> {
    pub experiment: &'a str,
    pub tool_version: &'a str,
    pub inputs_digest: String,
    pub config: &'a RunConfig,
    pub results: T,
}

/// SHA-256 over the resolved configuration and every signal sample. The
/// output directory and the archive location are not part of the inputs.
pub fn inputs_digest(cfg: &RunConfig, arch: Option<&SignalArchive>) -> Result<String> {
    let mut c = cfg.clone();
    c.signal.archive = c.signal.archive.map(|_| PathBuf::from("<archive>"));
    let mut h = Sha256::new();
    h.update(to_json_string(&c)?.as_bytes());
    if let Some(a) = arch {
        for w in a.windows() {
            h.update((w.len() as u64).to_le_bytes());
            for r in w.samples() {
                h.update(r.to_bits().to_le_bytes());
            }
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
        w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = to_json_string(value)?;
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }
}
