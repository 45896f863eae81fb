//! Artifact writing: JSON, CSV, the run manifest and gnuplot scripts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::Failure;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root)
            .map_err(|e| Failure::Config(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.path(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let w = self.writer(name)?;
        serde_json::to_writer_pretty(w, value).map_err(|e| Failure::Numerical(format!("cannot write {name}: {e}")))
    }

    pub fn text(&self, name: &str, body: &str) -> Result<(), Failure> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))
    }
}

/// Writes `manifest.json`: the full argument set after config merging, the
/// resolved problem, crate versions, seed and status.
pub fn write_manifest(
    out: &OutDir,
    command: &str,
    args: serde_json::Value,
    resolved: Option<serde_json::Value>,
    seed: u64,
    threads: usize,
    status: &str,
) -> Result<(), Failure> {
    let manifest = json!({
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "config": args,
        "resolved": resolved,
        "versions": {
            "hjb-cli": env!("CARGO_PKG_VERSION"),
            "hjb-core": hjb_core::VERSION,
        },
        "seed": seed,
        "threads": threads,
        "status": status,
    });
    out.json("manifest.json", &manifest)
}

/// Gnuplot script for a field CSV (`x,value` or `x,y,value`).
pub fn field_plot(csv: &str, dim: usize, title: &str) -> String {
    let plot = if dim == 1 {
        format!("plot '{csv}' using 1:2 with lines title '{title}'")
    } else {
        format!("set pm3d map\nsplot '{csv}' using 1:2:3 with pm3d title '{title}'")
    };
    format!("set datafile separator ','\nset key autotitle columnhead\n{plot}\npause -1\n")
}

/// Gnuplot script for the snapshots CSV, one curve per stored time in 1D.
pub fn snapshots_plot(times: &[f64], dim: usize) -> String {
    let mut s = String::from("set datafile separator ','\n");
    if dim == 1 {
        let curves: Vec<String> = times
            .iter()
            .map(|t| format!("'snapshots.csv' using ($1 == {t} ? $2 : 1/0):3 with lines title 't = {t}'"))
            .collect();
        s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    } else {
        let last = times.last().copied().unwrap_or(0.0);
        s.push_str(&format!(
            "set pm3d map\nsplot 'snapshots.csv' using 2:3:($1 == {last} ? $4 : 1/0) with pm3d title 't = {last}'\n"
        ));
    }
    s.push_str("pause -1\n");
    s
}

/// Gnuplot script for `margins.csv`, one curve per condition.
pub fn margins_plot(ids: &[String]) -> String {
    let curves: Vec<String> = ids
        .iter()
        .map(|id| format!("'margins.csv' using (strcol(1) eq '{id}' ? $2 : 1/0):3 with linespoints title '{id}'"))
        .collect();
    format!(
        "set datafile separator ','\nset xlabel 'radius'\nset ylabel 'slack'\nplot {}\npause -1\n",
        curves.join(", \\\n     ")
    )
}
