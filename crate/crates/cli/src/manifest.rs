//! Run manifests, content digests and the output directory writer.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run, embedded in each JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub inputs: Vec<InputDigest>,
    /// Digest of the canonical session config, for commands that use one.
    pub config_sha256: Option<String>,
    pub seeds: Vec<u64>,
}

impl RunInfo {
    pub fn new(command: &[String], config_toml: Option<&str>) -> Self {
        RunInfo {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_vec(),
            inputs: Vec::new(),
            config_sha256: config_toml.map(|t| sha256_hex(t.as_bytes())),
            seeds: Vec::new(),
        }
    }
}

/// `manifest.json`: the run info plus a digest of every file written.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    #[serde(flatten)]
    run: &'a RunInfo,
    outputs: &'a [OutputDigest],
}

/// A report body followed by the manifest of the run that produced it.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    manifest: &'a RunInfo,
}

/// Reader that hashes everything passing through it.
pub struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> HashingReader<R> {
    pub fn new(inner: R) -> Self {
        HashingReader {
            inner,
            hasher: Sha256::new(),
        }
    }

    pub fn hex_digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

/// Buffered file writer that hashes what it writes.
pub struct HashingWriter {
    name: String,
    inner: BufWriter<File>,
    hasher: Sha256,
}

impl Write for HashingWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Output directory that records a digest for every file it writes.
pub struct OutputDir {
    dir: PathBuf,
    outputs: Vec<OutputDigest>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn writer(&self, name: &str) -> Result<HashingWriter> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(HashingWriter {
            name: name.to_string(),
            inner: BufWriter::new(file),
            hasher: Sha256::new(),
        })
    }

    pub fn close(&mut self, mut writer: HashingWriter) -> Result<()> {
        writer.flush().with_context(|| format!("writing {}", writer.name))?;
        self.outputs.push(OutputDigest {
            file: writer.name,
            sha256: hex::encode(writer.hasher.finalize()),
        });
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut w = self.writer(name)?;
        w.write_all(bytes).with_context(|| format!("writing {name}"))?;
        self.close(w)
    }

    pub fn write_report<T: Serialize>(&mut self, name: &str, body: &T, run: &RunInfo) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&Report { body, manifest: run })?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes `manifest.json` listing the digests of everything written so far.
    pub fn finish(self, run: &RunInfo) -> Result<()> {
        let manifest = RunManifest {
            run,
            outputs: &self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }
}
