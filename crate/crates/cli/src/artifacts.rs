//! Output tree bookkeeping. Files are written through a temporary name and
//! renamed into place; the run manifest naming all of them is written last.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const PROBES: &str = "probes";
pub const REPORTS: &str = "reports";
pub const POINTS: &str = "points";
pub const PLOTS: &str = "plots";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactRecord {
    /// Relative to the output root, `/`-separated.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    header: String,
    records: Vec<ArtifactRecord>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn write_atomic(path: &Path, content: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(fail)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, content).map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

impl Artifacts {
    /// `header` is prepended to every report.
    pub fn new(root: &Path, header: String) -> Self {
        Artifacts {
            root: root.to_path_buf(),
            header,
            records: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, content: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(rel);
        write_atomic(&path, content)?;
        self.records.retain(|r| r.path != rel);
        self.records.push(ArtifactRecord {
            path: rel.to_string(),
            bytes: content.len(),
            sha256: hex(&Sha256::digest(content)),
        });
        Ok(path)
    }

    /// Text report with the resolved configuration (and `extra` comment
    /// lines, such as derived seeds) in front.
    pub fn report(&mut self, rel: &str, extra: &[String], body: &str) -> CliResult<PathBuf> {
        let mut text = self.header.clone();
        for line in extra {
            text.push_str("# ");
            text.push_str(line);
            text.push('\n');
        }
        text.push_str(body);
        self.write(rel, text.as_bytes())
    }

    pub fn records(&self) -> &[ArtifactRecord] {
        &self.records
    }

    /// Writes `run.<command>.manifest` listing every artifact, sorted by path.
    pub fn finish(mut self, command: &str) -> CliResult<PathBuf> {
        self.records.sort_by(|a, b| a.path.cmp(&b.path));
        let mut text = self.header.clone();
        text.push_str("path\tbytes\tsha256\n");
        for r in &self.records {
            text.push_str(&format!("{}\t{}\t{}\n", r.path, r.bytes, r.sha256));
        }
        let path = self.path(&format!("run.{command}.manifest"));
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Reads a manifest written by [`Artifacts::finish`].
pub fn read_run_manifest(path: &Path) -> CliResult<Vec<ArtifactRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            match c.as_slice() {
                [p, b, h] => Ok(ArtifactRecord {
                    path: p.to_string(),
                    bytes: b
                        .parse()
                        .map_err(|_| CliError::Data(format!("bad size in {l:?}")))?,
                    sha256: h.to_string(),
                }),
                _ => Err(CliError::Data(format!("bad run manifest line {l:?}"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path(), "# h\n".into());
        a.report("reports/b.txt", &["seed = 3".into()], "body\n").unwrap();
        a.write("probes/a.bin", b"xyz").unwrap();
        let m = a.finish("test").unwrap();
        let recs = read_run_manifest(&m).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].path, "probes/a.bin");
        assert_eq!(recs[0].bytes, 3);
        let report = fs::read_to_string(dir.path().join("reports/b.txt")).unwrap();
        assert_eq!(report, "# h\n# seed = 3\nbody\n");
        assert_eq!(
            recs[1].sha256,
            hex(&Sha256::digest(report.as_bytes()))
        );
        assert!(!dir.path().join("reports/b.txt.partial").exists());
    }
}
