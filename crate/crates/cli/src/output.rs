//! Output directory resolution and provenance stamping.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const OUT_ENV: &str = "MSKIT_OUT";
pub const DEFAULT_OUT: &str = "mskit-out";

/// `--out`, then the config's `output`, then `$MSKIT_OUT`, then `mskit-out`.
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: &str) -> Self {
        Self {
            toolkit: "mskit",
            version: VERSION,
            config_hash: config_hash.to_string(),
        }
    }

    /// First line of every CSV and text output.
    pub fn comment(&self) -> String {
        format!("# {} {} config_hash {}", self.toolkit, self.version, self.config_hash)
    }
}

pub struct OutDir {
    pub path: PathBuf,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

impl OutDir {
    pub fn create(path: PathBuf, provenance: Provenance) -> Result<Self, CliError> {
        std::fs::create_dir_all(&path)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", path.display())))?;
        Ok(Self { path, provenance })
    }

    fn open(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.path.join(name);
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))
    }

    /// Writes `body` with the provenance fields merged in at the top level.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let mut w = self.open(name)?;
        let doc = Stamped {
            provenance: &self.provenance,
            body,
        };
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        writeln!(w).and_then(|_| w.flush()).map_err(io_err(name))?;
        Ok(self.path.join(name))
    }

    /// Writes a text file whose first line is the provenance comment.
    pub fn write_text(
        &self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<File>, &str) -> std::io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut w = self.open(name)?;
        fill(&mut w, &self.provenance.comment()).map_err(io_err(name))?;
        w.flush().map_err(io_err(name))?;
        Ok(self.path.join(name))
    }
}

fn io_err(name: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("cannot write {name}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_wins_over_config() {
        let got = resolve_out_dir(Some(Path::new("a")), Some(Path::new("b")));
        assert_eq!(got, PathBuf::from("a"));
        let got = resolve_out_dir(None, Some(Path::new("b")));
        assert_eq!(got, PathBuf::from("b"));
    }

    #[test]
    fn json_carries_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(dir.path().join("x"), Provenance::new("abc")).unwrap();
        #[derive(Serialize)]
        struct Body {
            value: u32,
        }
        let p = out.write_json("r.json", &Body { value: 3 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["value"], 3);
        let p = out.write_text("t.csv", |w, c| writeln!(w, "{c}\na,b")).unwrap();
        assert!(std::fs::read_to_string(p).unwrap().starts_with("# mskit "));
    }
}
