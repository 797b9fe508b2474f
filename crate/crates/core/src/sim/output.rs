use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::engine::Event;

use super::run::BlockRow;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Output directory that refuses to replace existing files unless forced.
#[derive(Clone, Debug)]
pub struct OutDir {
    root: PathBuf,
    force: bool,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>, force: bool) -> Self {
        OutDir {
            root: root.into(),
            force,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Fails if any of `names` already exists and overwriting is not forced.
    pub fn check(&self, names: &[&str]) -> io::Result<()> {
        if self.force {
            return Ok(());
        }
        for n in names {
            let p = self.path(n);
            if p.exists() {
                return Err(io::Error::new(
                    io::ErrorKind::AlreadyExists,
                    format!("{} exists (use --force to overwrite)", p.display()),
                ));
            }
        }
        Ok(())
    }

    fn create(&self, name: &str) -> io::Result<BufWriter<File>> {
        fs::create_dir_all(&self.root)?;
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> io::Result<PathBuf> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(self.path(name))
    }

    pub fn write_rows(&self, name: &str, rows: &[BlockRow]) -> io::Result<PathBuf> {
        let w = self.create(name)?;
        write_csv(w, rows)?;
        Ok(self.path(name))
    }

    pub fn write_events(&self, name: &str, events: &[Event]) -> io::Result<PathBuf> {
        let w = self.create(name)?;
        write_ndjson(w, events)?;
        Ok(self.path(name))
    }
}

pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> io::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(io::Error::other)?;
    }
    csv.flush()
}

/// One JSON object per line.
pub fn write_ndjson<W: Write, T: Serialize>(mut w: W, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
