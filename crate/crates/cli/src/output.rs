use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// 17 significant digits, which round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // keep the sign of -0.0 out of the artifacts
        return "0".into();
    }
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory and renames it into
/// place, so readers never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Accumulates CSV text with a fixed header.
pub struct Csv {
    width: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        Self { width: header.len(), text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.width);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// A file written by a command, with the digest recorded in the manifest.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn emit(path: PathBuf, bytes: &[u8]) -> std::io::Result<Artifact> {
    write_atomic(&path, bytes)?;
    Ok(Artifact { sha256: sha256_hex(bytes), path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [1.0, -0.1, std::f64::consts::PI, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, f64::MAX] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.csv");
        write_atomic(&p, b"first version, long").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
