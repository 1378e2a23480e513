use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `%.9g`-style rendering; `NA` for missing or non-finite values.
pub fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => fmt_g9(v),
        _ => "NA".into(),
    }
}

fn fmt_g9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::dim("csv row", self.header.len(), row.len()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        for line in std::iter::once(&self.header).chain(&self.rows) {
            w.write_record(line).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 cells")
    }
}

/// One explanation's metrics. Metrics are `None` when undefined or not
/// applicable to the mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub mode: String,
    pub image_id: usize,
    pub category: String,
    pub true_label: usize,
    pub class: usize,
    pub counterfactual: usize,
    pub intended: usize,
    pub mc_mean: Option<f64>,
    pub mc_std: Option<f64>,
    pub nn_dist: Option<f64>,
    pub im1: Option<f64>,
    pub im2: Option<f64>,
    pub l1: Option<f64>,
    pub latent_distance: Option<f64>,
    pub target_distance: Option<f64>,
    pub verified: bool,
    pub failed: bool,
    pub note: String,
}

pub const ROW_HEADER: [&str; 19] = [
    "method", "mode", "image_id", "category", "true_label", "class", "counterfactual", "intended", "mc_mean", "mc_std",
    "nn_dist", "im1", "im2", "l1", "latent_distance", "target_distance", "verified", "failed", "note",
];

pub const METRICS: [&str; 8] = ["mc_mean", "mc_std", "nn_dist", "im1", "im2", "l1", "latent_distance", "target_distance"];

impl MetricRow {
    pub fn key(&self) -> (String, String, usize) {
        (self.method.clone(), self.mode.clone(), self.image_id)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "mc_mean" => self.mc_mean,
            "mc_std" => self.mc_std,
            "nn_dist" => self.nn_dist,
            "im1" => self.im1,
            "im2" => self.im2,
            "l1" => self.l1,
            "latent_distance" => self.latent_distance,
            "target_distance" => self.target_distance,
            _ => None,
        }
    }

    fn cells(&self) -> Vec<String> {
        let mut v = vec![
            self.method.clone(),
            self.mode.clone(),
            self.image_id.to_string(),
            self.category.clone(),
            self.true_label.to_string(),
            self.class.to_string(),
            self.counterfactual.to_string(),
            self.intended.to_string(),
        ];
        v.extend(METRICS.iter().map(|m| fmt_num(self.metric(m))));
        v.push(self.verified.to_string());
        v.push(self.failed.to_string());
        v.push(self.note.clone());
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub mode: String,
    pub n: usize,
    pub n_failed: usize,
    pub n_verified: usize,
    /// `(metric, count, mean, std)` over non-failed rows with a defined value.
    pub metrics: Vec<(String, usize, Option<f64>, Option<f64>)>,
}

impl Aggregate {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.0 == metric).and_then(|m| m.2)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    /// Sorted by (method, mode, image id).
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<Aggregate>,
}

pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

pub fn build_report(mut rows: Vec<MetricRow>) -> Result<MetricReport> {
    rows.sort_by_key(MetricRow::key);
    for w in rows.windows(2) {
        if w[0].key() == w[1].key() {
            return Err(Error::Consistency(format!("duplicate report row {:?}", w[0].key())));
        }
    }
    let groups: BTreeSet<(String, String)> = rows.iter().map(|r| (r.method.clone(), r.mode.clone())).collect();
    let aggregates = groups
        .into_iter()
        .map(|(method, mode)| {
            let members: Vec<&MetricRow> = rows.iter().filter(|r| r.method == method && r.mode == mode).collect();
            let ok: Vec<&&MetricRow> = members.iter().filter(|r| !r.failed).collect();
            let metrics = METRICS
                .iter()
                .map(|m| {
                    let vals: Vec<f64> = ok.iter().filter_map(|r| r.metric(m)).filter(|v| v.is_finite()).collect();
                    let (mean, std) = mean_std(&vals);
                    (m.to_string(), vals.len(), mean, std)
                })
                .collect();
            Aggregate {
                n: members.len(),
                n_failed: members.len() - ok.len(),
                n_verified: members.iter().filter(|r| r.verified).count(),
                method,
                mode,
                metrics,
            }
        })
        .collect();
    Ok(MetricReport { rows, aggregates })
}

impl MetricReport {
    pub fn aggregate(&self, method: &str, mode: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.mode == mode)
    }

    pub fn rows_csv(&self) -> String {
        let mut t = Table::new(&ROW_HEADER);
        for r in &self.rows {
            t.rows.push(r.cells());
        }
        t.to_csv()
    }

    pub fn summary_csv(&self) -> String {
        let mut header = vec!["method", "mode", "n", "n_failed", "n_verified"];
        let names: Vec<String> = METRICS.iter().flat_map(|m| [format!("{m}_n"), format!("{m}_mean"), format!("{m}_std")]).collect();
        header.extend(names.iter().map(String::as_str));
        let mut t = Table::new(&header);
        for a in &self.aggregates {
            let mut row = vec![a.method.clone(), a.mode.clone(), a.n.to_string(), a.n_failed.to_string(), a.n_verified.to_string()];
            for (_, n, mean, std) in &a.metrics {
                row.extend([n.to_string(), fmt_num(*mean), fmt_num(*std)]);
            }
            t.rows.push(row);
        }
        t.to_csv()
    }
}
