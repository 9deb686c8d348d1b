//! Artifact directory: CSV tables, VTK snapshots and a hashed MANIFEST.

use std::fs;
use std::path::{Path, PathBuf};

use oxytaxis_core::fem::FeFunction;
use oxytaxis_core::mesh::{write_vtk, Mesh};
use oxytaxis_core::state::{Observables, StateTrajectory};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "MANIFEST";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Collects the files written for one run.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self { root: root.to_owned(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn register(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_owned());
        }
        Ok(path)
    }

    pub fn csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<(), CliError>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let path = self.register(name)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| io_err(&path, e))
    }

    pub fn vtk(&mut self, name: &str, mesh: &Mesh, title: &str, u: &FeFunction, sigma: &FeFunction) -> Result<(), CliError> {
        let path = self.register(name)?;
        write_vtk(&path, mesh, title, &[("u", u), ("sigma", sigma)])?;
        Ok(())
    }

    /// Snapshots at every `stride`-th step and at the final step.
    pub fn snapshots(&mut self, prefix: &str, mesh: &Mesh, traj: &StateTrajectory, stride: usize) -> Result<usize, CliError> {
        let last = traj.len() - 1;
        let mut count = 0;
        for n in 0..=last {
            if n % stride == 0 || n == last {
                let title = format!("t = {}", traj.grid.time(n));
                self.vtk(&format!("{prefix}_{n:05}.vtk"), mesh, &title, &traj.u[n], &traj.sigma[n])?;
                count += 1;
            }
        }
        Ok(count)
    }

    /// Writes `MANIFEST`: a status line, then `sha256  name` per artifact.
    pub fn finish(&self, status: &str) -> Result<(), CliError> {
        let mut names = self.files.clone();
        names.sort();
        let mut text = format!("status: {status}\n");
        for name in names {
            let path = self.root.join(&name);
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            text.push_str(&format!("{:x}  {name}\n", Sha256::digest(&bytes)));
        }
        let path = self.root.join(MANIFEST);
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub const OBSERVABLE_HEADER: [&str; 5] = ["t", "u_sq", "max_u", "sigma_dev_sq", "volume"];

pub fn observable_row(o: &Observables) -> Vec<String> {
    vec![num(o.t), num(o.u_sq), num(o.max_u), num(o.sigma_dev_sq), num(o.volume)]
}
