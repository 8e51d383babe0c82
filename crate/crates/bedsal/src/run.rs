//! Run directories `runs/<timestamp>-<hash>/` and their manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cache::sha256_hex;
use crate::config::Config;
use crate::error::{IoContext, Result};

pub const MANIFEST: &str = "manifest.txt";

/// Manifest lines that legitimately differ between identical runs.
pub fn is_volatile_line(line: &str) -> bool {
    line.starts_with("started_at=") || line.starts_with("timing.")
}

/// A manifest with its timestamp and timing lines removed.
pub fn stable_manifest(text: &str) -> String {
    text.lines()
        .filter(|l| !is_volatile_line(l))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// SHA-256 of the command and canonical config.
pub fn config_hash(command: &str, cfg: &Config) -> String {
    sha256_hex(format!("{command}\n{}", cfg.canonical()).as_bytes())
}

pub struct Run {
    pub dir: PathBuf,
    command: String,
    hash: String,
    seed: u64,
    started_at: String,
    timings: Vec<(String, f64)>,
    outputs: Vec<String>,
}

impl Run {
    /// Creates a fresh `<root>/<timestamp>-<hash12>` directory.
    pub fn create(root: &Path, command: &str, cfg: &Config) -> Result<Run> {
        let hash = config_hash(command, cfg);
        let now = chrono::Utc::now();
        let stamp = now.format("%Y%m%d-%H%M%S").to_string();
        fs::create_dir_all(root).at(root)?;
        let mut dir = root.join(format!("{stamp}-{}", &hash[..12]));
        let mut n = 1;
        while dir.exists() {
            dir = root.join(format!("{stamp}-{}-{n}", &hash[..12]));
            n += 1;
        }
        fs::create_dir(&dir).at(&dir)?;
        let mut run = Run {
            dir,
            command: command.to_owned(),
            hash,
            seed: cfg.seed,
            started_at: now.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            timings: Vec::new(),
            outputs: Vec::new(),
        };
        run.write("config.txt", cfg.canonical().as_bytes())?;
        Ok(run)
    }

    /// Times one stage.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Run) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self);
        self.timings.push((name.to_owned(), t.elapsed().as_secs_f64()));
        out
    }

    /// Absolute path of a run output, with parents created; the output is
    /// listed in the manifest.
    pub fn output(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).at(parent)?;
        }
        if !self.outputs.iter().any(|o| o == rel) {
            self.outputs.push(rel.to_owned());
        }
        Ok(path)
    }

    /// A subdirectory listed as one output.
    pub fn output_dir(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.output(&format!("{rel}/"))?;
        fs::create_dir_all(&path).at(&path)?;
        Ok(path)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.output(rel)?;
        fs::write(&path, bytes).at(&path)
    }

    fn manifest(&self) -> String {
        let mut out = format!(
            "command={}\nversion={}\nconfig_hash={}\nseed={}\nstarted_at={}\n",
            self.command,
            env!("CARGO_PKG_VERSION"),
            self.hash,
            self.seed,
            self.started_at
        );
        for (name, secs) in &self.timings {
            out.push_str(&format!("timing.{name}={secs:.3}\n"));
        }
        let mut outputs = self.outputs.clone();
        outputs.sort();
        for o in outputs {
            out.push_str(&format!("output={o}\n"));
        }
        out
    }

    /// Writes the manifest atomically and returns the run directory.
    pub fn finish(self) -> Result<PathBuf> {
        let tmp = self.dir.join(".manifest.tmp");
        fs::write(&tmp, self.manifest()).at(&tmp)?;
        let path = self.dir.join(MANIFEST);
        fs::rename(&tmp, &path).at(&path)?;
        Ok(self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_outputs_and_hash() {
        let root = tempfile::tempdir().unwrap();
        let cfg = Config::default();
        let mut run = Run::create(root.path(), "train", &cfg).unwrap();
        run.stage("work", |r| r.write("b/x.txt", b"1")).unwrap();
        run.output_dir("a").unwrap();
        let dir = run.finish().unwrap();
        let name = dir.file_name().unwrap().to_str().unwrap().to_owned();
        let hash = config_hash("train", &cfg);
        assert!(name.ends_with(&hash[..12]), "{name}");
        let text = fs::read_to_string(dir.join(MANIFEST)).unwrap();
        assert!(text.contains(&format!("config_hash={hash}\n")));
        assert!(text.contains("timing.work="));
        let stable = stable_manifest(&text);
        assert!(!stable.contains("started_at") && !stable.contains("timing."));
        assert!(stable.ends_with("output=a/\noutput=b/x.txt\noutput=config.txt\n"), "{stable}");
        assert!(!dir.join(".manifest.tmp").exists());
    }

    #[test]
    fn same_second_runs_get_distinct_dirs() {
        let root = tempfile::tempdir().unwrap();
        let cfg = Config::default();
        let a = Run::create(root.path(), "x", &cfg).unwrap().finish().unwrap();
        let b = Run::create(root.path(), "x", &cfg).unwrap().finish().unwrap();
        assert_ne!(a, b);
        assert_ne!(config_hash("x", &cfg), config_hash("y", &cfg));
    }
}
