//! Output emission: CSV tables and JSON sidecars.
//!
//! Every file starts with a comment line carrying the effective config
//! hash and master seed; rerunning with the same pair reproduces each
//! file byte for byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use zext_core::slowfast::TrajectoryGrid;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub struct OutputContext {
    pub dir: PathBuf,
    pub config_hash: String,
    pub master_seed: u64,
}

impl OutputContext {
    pub fn new(dir: &Path, config_hash: &str, master_seed: u64) -> Result<Self, OutputError> {
        std::fs::create_dir_all(dir).map_err(|e| OutputError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(OutputContext {
            dir: dir.to_path_buf(),
            config_hash: config_hash.to_string(),
            master_seed,
        })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, OutputError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| OutputError::Io { path, source: e })?;
        Ok(BufWriter::new(f))
    }

    fn header(&self, w: &mut impl Write, path: &Path) -> Result<(), OutputError> {
        writeln!(w, "# config={} seed={}", self.config_hash, self.master_seed).map_err(|e| {
            OutputError::Io { path: path.to_path_buf(), source: e }
        })
    }

    /// `t,x1..xd` rows of a single trajectory.
    pub fn write_trajectory(&self, name: &str, grid: &TrajectoryGrid) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        let mut w = self.create(name)?;
        self.header(&mut w, &path)?;
        let cols: Vec<String> = (1..=grid.dim()).map(|i| format!("x{i}")).collect();
        let io = |e| OutputError::Io { path: path.clone(), source: e };
        writeln!(w, "t,{}", cols.join(",")).map_err(io)?;
        for i in 0..grid.len() {
            let vals: Vec<String> = grid.state(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{:e},{}", grid.times()[i], vals.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    /// `path_id,t,x1..xd` rows for an ensemble of trajectories.
    pub fn write_path_ensemble(
        &self,
        name: &str,
        paths: &[(u64, TrajectoryGrid)],
    ) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        let mut w = self.create(name)?;
        self.header(&mut w, &path)?;
        let io = |e| OutputError::Io { path: path.clone(), source: e };
        let dim = paths.first().map_or(1, |(_, g)| g.dim());
        let cols: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "path_id,t,{}", cols.join(",")).map_err(io)?;
        for (id, grid) in paths {
            for i in 0..grid.len() {
                let vals: Vec<String> = grid.state(i).iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{id},{:e},{}", grid.times()[i], vals.join(",")).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    /// One scalar sample per row (`path_id,value`).
    pub fn write_samples(&self, name: &str, samples: &[f64]) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        let mut w = self.create(name)?;
        self.header(&mut w, &path)?;
        let io = |e| OutputError::Io { path: path.clone(), source: e };
        writeln!(w, "path_id,value").map_err(io)?;
        for (i, v) in samples.iter().enumerate() {
            writeln!(w, "{i},{v:e}").map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    /// Arbitrary rows under explicit column names.
    pub fn write_table(
        &self,
        name: &str,
        columns: &[&str],
        rows: &[Vec<f64>],
    ) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        let mut w = self.create(name)?;
        self.header(&mut w, &path)?;
        let io = |e| OutputError::Io { path: path.clone(), source: e };
        writeln!(w, "{}", columns.join(",")).map_err(io)?;
        for row in rows {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", vals.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    /// Pretty JSON with the provenance fields injected at the top level.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        let mut w = self.create(name)?;
        let mut doc = serde_json::to_value(value)?;
        if let Some(obj) = doc.as_object_mut() {
            obj.insert("config".into(), serde_json::Value::String(self.config_hash.clone()));
            obj.insert("seed".into(), serde_json::Value::from(self.master_seed));
        }
        let text = serde_json::to_string_pretty(&doc)?;
        let io = |e| OutputError::Io { path: path.clone(), source: e };
        w.write_all(text.as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
        w.flush().map_err(io)?;
        Ok(())
    }
}
