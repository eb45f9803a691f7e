//! Output files are first written under a temporary name next to their
//! destination and renamed only once every output of the command is
//! complete. A command that fails part-way leaves nothing behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{BoxError, CliError};

const PARTIAL_SUFFIX: &str = ".partial";

#[derive(Debug, Default)]
pub struct Staged {
    /// (temporary, final) pairs, in write order.
    pending: Vec<(PathBuf, PathBuf)>,
    /// Directories this command created, outermost first.
    created_dirs: Vec<PathBuf>,
}

impl Staged {
    pub fn new() -> Self {
        Staged::default()
    }

    /// `create_dir_all`, remembering what did not exist before.
    pub fn create_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        let missing: Vec<PathBuf> =
            dir.ancestors().take_while(|d| !d.as_os_str().is_empty() && !d.exists()).map(Path::to_path_buf).collect();
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        self.created_dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    /// Writes `path` (staged) through `fill`.
    pub fn write<F>(&mut self, path: &Path, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), BoxError>,
    {
        if let Some(parent) = path.parent() {
            self.create_dir(parent)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(PARTIAL_SUFFIX);
        let tmp = PathBuf::from(tmp);
        let file = File::create(&tmp).map_err(|source| CliError::Io { path: tmp.clone(), source })?;
        self.pending.push((tmp, path.to_path_buf()));
        let mut w = BufWriter::new(file);
        fill(&mut w)
            .and_then(|_| w.flush().map_err(BoxError::from))
            .map_err(|source| CliError::Write { path: path.to_path_buf(), source })
    }

    /// Moves every staged file into place and returns the final paths.
    pub fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let pending = std::mem::take(&mut self.pending);
        let mut done = Vec::with_capacity(pending.len());
        for (i, (tmp, dest)) in pending.iter().enumerate() {
            if let Err(source) = fs::rename(tmp, dest) {
                self.pending = pending[i..].to_vec();
                return Err(CliError::Io { path: dest.clone(), source });
            }
            done.push(dest.clone());
        }
        self.created_dirs.clear();
        Ok(done)
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.pending {
            let _ = fs::remove_file(tmp);
        }
        // Only empty directories go; anything else was not ours.
        for dir in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_lands_until_commit() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("sub/a.txt");
        let mut staged = Staged::new();
        staged.write(&a, |w| Ok(writeln!(w, "hello")?)).unwrap();
        assert!(!a.exists());
        assert_eq!(staged.commit().unwrap(), vec![a.clone()]);
        assert_eq!(fs::read_to_string(&a).unwrap(), "hello\n");
    }

    #[test]
    fn failure_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("x/y");
        {
            let mut staged = Staged::new();
            staged.write(&nested.join("ok.txt"), |w| Ok(writeln!(w, "fine")?)).unwrap();
            let err = staged.write(&nested.join("bad.txt"), |_| Err("boom".into())).unwrap_err();
            assert!(err.to_string().contains("bad.txt"));
        }
        assert!(!dir.path().join("x").exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
