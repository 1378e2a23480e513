#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl From<Output> for Outcome {
    fn from(o: Output) -> Self {
        Self {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

/// Runs the `piece` binary against `runs` with a single worker thread.
pub fn piece(runs: &Path, args: &[&str]) -> Outcome {
    Command::new(env!("CARGO_BIN_EXE_piece"))
        .arg("--runs-dir")
        .arg(runs)
        .args(args)
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .expect("piece binary runs")
        .into()
}

pub fn run_dir(runs: &Path, id: &str) -> PathBuf {
    runs.join(id)
}

pub type Record = HashMap<String, String>;

pub fn read_csv(path: &Path) -> Vec<Record> {
    let mut rdr = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header: Vec<String> = rdr.headers().expect("header").iter().map(String::from).collect();
    rdr.records()
        .map(|r| {
            let r = r.expect("record");
            header.iter().cloned().zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

pub fn num(rec: &Record, key: &str) -> Option<f64> {
    rec.get(key).and_then(|v| v.parse().ok())
}

pub fn find<'a>(rows: &'a [Record], pairs: &[(&str, &str)]) -> Option<&'a Record> {
    rows.iter().find(|r| pairs.iter().all(|(k, v)| r.get(*k).map(String::as_str) == Some(*v)))
}
