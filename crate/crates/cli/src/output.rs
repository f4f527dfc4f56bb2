use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

/// Directory for relative `--out` paths and for default file names.
pub const OUT_DIR_ENV: &str = "RINGWALK_OUT_DIR";

/// Where an artifact goes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    /// `--out` wins; a relative `--out` is resolved against `dir`. With no
    /// `--out`, a set `dir` receives `default_name`.
    pub fn resolve(out: Option<&Path>, dir: Option<&Path>, default_name: &str) -> Sink {
        match (out, dir) {
            (Some(p), Some(d)) if p.is_relative() => Sink::File(d.join(p)),
            (Some(p), _) => Sink::File(p.to_path_buf()),
            (None, Some(d)) => Sink::File(d.join(default_name)),
            (None, None) => Sink::Stdout,
        }
    }

    pub fn write(&self, body: &str) -> io::Result<()> {
        match self {
            Sink::Stdout => {
                let mut out = io::stdout().lock();
                out.write_all(body.as_bytes())?;
                out.flush()
            }
            Sink::File(path) => write_atomic(path, body.as_bytes()),
        }
    }
}

/// Writes into a temp file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution() {
        let d = Path::new("/tmp/x");
        assert_eq!(Sink::resolve(None, None, "a.json"), Sink::Stdout);
        assert_eq!(
            Sink::resolve(None, Some(d), "a.json"),
            Sink::File(d.join("a.json"))
        );
        assert_eq!(
            Sink::resolve(Some(Path::new("b.csv")), Some(d), "a"),
            Sink::File(d.join("b.csv"))
        );
        assert_eq!(
            Sink::resolve(Some(Path::new("/abs/b.csv")), Some(d), "a"),
            Sink::File(PathBuf::from("/abs/b.csv"))
        );
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
