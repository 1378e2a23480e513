//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

#[path = "../../core/tests/common/grad_oracle.rs"]
mod grad_oracle;
#[path = "../../core/tests/common/hurdle_oracle.rs"]
mod hurdle_oracle;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{find, num, piece, read_csv, Record};
use piece_core::hurdle::{classify_exceptional, fit_pdf, rules_for, NeuronClassModel, Rule, CANDIDATES, DEFAULT_ALPHA};

const FRACTIONS: [&str; 4] = ["25", "50", "75", "100"];
const BASELINES: [&str; 2] = ["min_edit", "c_min_edit"];

struct Verdicts {
    failed: Vec<u32>,
}

impl Verdicts {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        println!("{} criterion {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

fn gradients(v: &mut Verdicts) {
    let start = Instant::now();
    let seeds = 0..24u64;
    let mut kinds = BTreeSet::new();
    let mut worst: f64 = 0.0;
    for seed in seeds.clone() {
        let (net, _, _) = grad_oracle::random_network(seed);
        kinds.extend(net.layers().iter().map(|l| l.kind_name()));
        worst = worst.max(grad_oracle::max_relative_error(seed));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && kinds.len() == 5 && secs < 30.0;
    let detail = format!("max relative error {worst:.2e} over {} networks, layer kinds {kinds:?}, {secs:.1}s", seeds.count());
    v.record(1, "gradient correctness", pass, detail);
}

fn recovery(v: &mut Verdicts) {
    let start = Instant::now();
    let mut rates = Vec::new();
    let mut worst_param: f64 = 0.0;
    for kind in 0..CANDIDATES.len() {
        let (family, _) = hurdle_oracle::generating_family(kind);
        let mut hits = 0;
        for seed in 0..50 {
            let fit = fit_pdf(&hurdle_oracle::sample_candidate(kind, 1000, seed)).expect("fit");
            if fit.pdf.family() == family {
                hits += 1;
                if let Some(err) = hurdle_oracle::gaussian_param_error(kind, &fit.pdf) {
                    worst_param = worst_param.max(err);
                }
            }
        }
        rates.push(hits as f64 / 50.0);
    }
    let secs = start.elapsed().as_secs_f64();
    let lowest = rates.iter().copied().fold(1.0, f64::min);
    let pass = lowest >= 0.8 && worst_param < 0.1 && secs < 60.0;
    let detail = format!("selection rates {rates:?}, worst gaussian parameter error {worst_param:.3}, {secs:.1}s");
    v.record(2, "distribution recovery", pass, detail);
}

fn oracle_agreement(v: &mut Verdicts) {
    let alpha = DEFAULT_ALPHA;
    let mut lowest: f64 = 1.0;
    let mut neurons = 0;
    for kind in 0..CANDIDATES.len() {
        for &theta in &[0.03, 0.3, 0.8, 0.97, 1.0] {
            for seed in 0..3 {
                let samples = hurdle_oracle::hurdle_samples(theta, kind, 1000, seed);
                let model = NeuronClassModel::fit(&samples);
                let mut pos: Vec<f64> = samples.iter().copied().filter(|&x| x > 0.0).collect();
                if pos.len() < 20 {
                    continue;
                }
                pos.sort_by(f64::total_cmp);
                let grid = hurdle_oracle::probe_grid(&pos);
                let agree = grid
                    .iter()
                    .filter(|&&x| {
                        let fitted: Vec<&str> = rules_for(&model, x, alpha).iter().map(|r| r.0.as_str()).collect();
                        fitted == hurdle_oracle::empirical_rules(model.theta, &pos, x, alpha)
                    })
                    .count();
                lowest = lowest.min(agree as f64 / grid.len() as f64);
                neurons += 1;
            }
        }
    }
    let mut forced = 0;
    for seed in 0..20 {
        let mut model = NeuronClassModel::fit(&hurdle_oracle::sample_candidate(3, 1000, seed));
        model.theta = 0.97;
        let zero = classify_exceptional(&[0.0], std::slice::from_ref(&model), alpha).expect("classify");
        model.theta = 0.02;
        let active = classify_exceptional(&[1.4], std::slice::from_ref(&model), alpha).expect("classify");
        if zero.features.iter().any(|f| f.rule == Rule::E1) && active.features.iter().any(|f| f.rule == Rule::E2) {
            forced += 1;
        }
    }
    let pass = lowest >= 0.9 && forced == 20;
    let detail = format!("lowest agreement {lowest:.3} over {neurons} neurons of 1000 samples, forced cases {forced}/20");
    v.record(3, "exceptionality oracle", pass, detail);
}

fn timed(runs: &Path, args: &[&str], total: &mut Duration, echo: bool) -> Result<(), String> {
    let start = Instant::now();
    let out = piece(runs, args);
    *total += start.elapsed();
    if echo {
        print!("{}", out.stdout);
    }
    if out.code == 0 {
        Ok(())
    } else {
        Err(format!("`piece {}` exited {}: {}", args.join(" "), out.code, out.stderr.trim()))
    }
}

fn mean(rows: &[Record], pairs: &[(&str, &str)], metric: &str) -> Option<f64> {
    find(rows, pairs).and_then(|r| num(r, &format!("{metric}_mean")))
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("NA".into(), |x| format!("{x:.4}"))
}

fn gt(a: Option<f64>, b: Option<f64>) -> bool {
    matches!((a, b), (Some(a), Some(b)) if a > b)
}

fn pipeline(v: &mut Verdicts) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let runs = tmp.path();
    let mut total = Duration::ZERO;
    let stages: [&[&str]; 5] =
        [&["datagen"], &["train"], &["fit-stats"], &["experiment", "1"], &["experiment", "2"]];
    let failure = stages.iter().find_map(|s| timed(runs, s, &mut total, true).err());
    if let Some(msg) = failure {
        for id in 4..=11 {
            v.record(id, "pipeline", false, msg.clone());
        }
        return;
    }
    let reports = runs.join("toy").join("reports");
    let csv = |f: &str| read_csv(&reports.join(f));

    let rows1 = csv("expt1_rows.csv");
    let piece_cf: Vec<&Record> = rows1.iter().filter(|r| r["method"] == "piece").collect();
    let bad: Vec<&&Record> = piece_cf.iter().filter(|r| r["verified"] != "true").collect();
    for r in &bad {
        println!(
            "  unverified counterfactual: image {} ({}) label {} target {} failed {} {}",
            r["image_id"], r["category"], r["true_label"], r["intended"], r["failed"], r["note"]
        );
    }
    let rate = 1.0 - bad.len() as f64 / piece_cf.len().max(1) as f64;
    v.record(
        4,
        "counterfactual validity",
        piece_cf.len() >= 50 && rate >= 0.95,
        format!("{}/{} verified ({:.1}%)", piece_cf.len() - bad.len(), piece_cf.len(), rate * 100.0),
    );

    let rows2 = csv("expt2_rows.csv");
    let semi: Vec<&Record> = rows2
        .iter()
        .filter(|r| r["method"] == "piece" && (r["mode"] == "semifactual" || r["mode"].starts_with("proportional_")))
        .collect();
    let kept = semi.iter().filter(|r| r["failed"] == "false" && r["verified"] == "true").count();
    for r in semi.iter().filter(|r| !(r["failed"] == "false" && r["verified"] == "true")) {
        println!("  class not kept: image {} mode {} {}", r["image_id"], r["mode"], r["note"]);
    }
    v.record(
        5,
        "semi-factual validity",
        !semi.is_empty() && kept == semi.len(),
        format!("{kept}/{} max-edit and proportional semi-factuals keep the predicted class", semi.len()),
    );

    let summary = csv("expt1_summary.csv");
    let sub = csv("expt1_substitutability.csv");
    let cf = |m: &str, metric: &str| mean(&summary, &[("method", m), ("mode", "counterfactual")], metric);
    let k1 = rows_min_k(&sub);
    let score = |m: &str| find(&sub, &[("method", m), ("k", &k1)]).and_then(|r| num(r, "score"));
    let (mc, nn, im1) = (
        (cf("piece", "mc_mean"), cf("min_edit", "mc_mean")),
        (cf("piece", "nn_dist"), cf("min_edit", "nn_dist")),
        (cf("piece", "im1"), cf("min_edit", "im1")),
    );
    let rsub = (score("piece"), score("min_edit"));
    v.record(
        6,
        "counterfactual metric directions",
        gt(mc.0, mc.1) && gt(nn.1, nn.0) && gt(im1.1, im1.0) && gt(rsub.0, rsub.1),
        format!(
            "MC-Mean {} vs {}, NN-Dist {} vs {}, IM1 {} vs {}, R%-Sub(k={k1}) {} vs {} (piece vs min_edit)",
            fmt(mc.0), fmt(mc.1), fmt(nn.0), fmt(nn.1), fmt(im1.0), fmt(im1.1), fmt(rsub.0), fmt(rsub.1)
        ),
    );

    let max_edit = csv("expt2_max_edit.csv");
    let l1 = |rows: &[Record], m: &str, mode: &str| mean(rows, &[("method", m), ("mode", mode)], "l1");
    let p = l1(&max_edit, "piece", "semifactual");
    let mut pass = BASELINES.iter().all(|b| gt(p, l1(&max_edit, b, "semifactual")));
    let mut detail = format!(
        "max-edit L1 piece {} min_edit {} c_min_edit {}",
        fmt(p),
        fmt(l1(&max_edit, "min_edit", "semifactual")),
        fmt(l1(&max_edit, "c_min_edit", "semifactual"))
    );
    let matched = csv("expt2_distance_matched.csv");
    for f in FRACTIONS {
        let mode = format!("distance_{f}");
        let p = l1(&matched, "piece", &mode);
        let b: Vec<Option<f64>> = BASELINES.iter().map(|b| l1(&matched, b, &mode)).collect();
        pass &= b.iter().all(|&b| matches!((p, b), (Some(p), Some(b)) if p >= b));
        detail += &format!("; {f}%: {} / {} / {}", fmt(p), fmt(b[0]), fmt(b[1]));
    }
    v.record(7, "semi-factual edit directions", pass, detail);

    let corr = csv("expt1_correlation.csv");
    let pooled = find(&corr, &[("scope", "pooled")]);
    let n = pooled.and_then(|r| num(r, "n")).unwrap_or(0.0);
    let r_mean = pooled.and_then(|r| num(r, "r_nn_dist_mc_mean"));
    let r_std = pooled.and_then(|r| num(r, "r_nn_dist_mc_std"));
    v.record(
        8,
        "correlation signs",
        n >= 100.0 && r_mean.is_some_and(|r| r < 0.0) && r_std.is_some_and(|r| r > 0.0),
        format!("n {n}, r(NN-Dist, MC-Mean) {}, r(NN-Dist, MC-STD) {}", fmt(r_mean), fmt(r_std)),
    );

    let gof = csv("expt1_gof.csv");
    let ks = |scope: &str| find(&gof, &[("scope", scope)]).and_then(|r| num(r, "mean_ks_p"));
    let flagged = ks("exceptional_features");
    v.record(
        9,
        "goodness of fit",
        flagged.is_some_and(|p| p > 0.1),
        format!(
            "mean KS p over exceptional features {}, applied features {}, all fitted models {}",
            fmt(flagged),
            fmt(ks("applied_features")),
            fmt(ks("all_fitted_models"))
        ),
    );

    let files: Vec<_> = std::fs::read_dir(&reports)
        .expect("reports")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    let first: Vec<Vec<u8>> = files.iter().map(|p| std::fs::read(p).expect("read")).collect();
    let mut rerun = Duration::ZERO;
    let redo = timed(runs, &["--force", "experiment", "1"], &mut rerun, false)
        .and_then(|_| timed(runs, &["--force", "experiment", "2"], &mut rerun, false));
    let (pass, detail) = match redo {
        Err(msg) => (false, msg),
        Ok(()) => {
            let differing: Vec<String> = files
                .iter()
                .zip(&first)
                .filter(|(p, bytes)| std::fs::read(p).ok().as_ref() != Some(*bytes))
                .map(|(p, _)| p.file_name().unwrap().to_string_lossy().into_owned())
                .collect();
            let detail = if differing.is_empty() {
                format!("{} report files byte-identical across reruns", files.len())
            } else {
                format!("differing files: {differing:?}")
            };
            (differing.is_empty() && files.len() >= 14, detail)
        }
    };
    v.record(10, "determinism", pass, detail);

    let secs = total.as_secs_f64();
    v.record(11, "end-to-end budget", secs < 900.0, format!("full pipeline on one worker thread in {secs:.1}s"));
}

fn rows_min_k(sub: &[Record]) -> String {
    sub.iter()
        .filter_map(|r| r["k"].parse::<usize>().ok())
        .min()
        .map_or("1".into(), |k| k.to_string())
}

fn main() {
    let mut v = Verdicts { failed: Vec::new() };
    gradients(&mut v);
    recovery(&mut v);
    oracle_agreement(&mut v);
    pipeline(&mut v);
    if v.failed.is_empty() {
        println!("acceptance: all 11 criteria pass");
    } else {
        println!("acceptance: failing criteria {:?}", v.failed);
        std::process::exit(1);
    }
}
