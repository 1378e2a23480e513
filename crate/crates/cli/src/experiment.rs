use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use piece_core::baselines::{run_baseline, BaselineConfig, BaselineOutcome, BaselineStop, Method};
use piece_core::datagen::Dataset;
use piece_core::evalx::{
    build_report, correlation, fmt_num, im1, im2, knn_accuracy, mc_dropout, mean_std, nn_dist, sf_l1,
    substitutability_against, MetricReport, MetricRow, Table,
};
use piece_core::hurdle::collect_latents;
use piece_core::net::Network;
use piece_core::piece::{
    explain_from, invert_image, select_cf_class, ClassSelection, ExplanationMode, ExplanationRequest, ExplanationResult,
    Inversion, LatentModel, Models, PieceConfig, PROPORTIONAL_FRACTIONS,
};
use piece_core::tensor::{argmax, l2_distance};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::rundir::{guard_stage, Artifacts, RunDir};

pub const PIECE: &str = "piece";
pub const MIN_EDIT: &str = "min_edit";
pub const C_MIN_EDIT: &str = "c_min_edit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Correct,
    CloseCorrect,
    Misclassified,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Correct => "correct",
            Category::CloseCorrect => "close_correct",
            Category::Misclassified => "misclassified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchItem {
    pub index: usize,
    pub category: Category,
    pub label: usize,
    pub predicted: usize,
    pub confidence: f64,
}

/// Confidently correct images per class, close-correct images (top
/// probability below the threshold), and misclassified images, sorted by
/// test index.
pub fn compose_test_set(classifier: &Network, test: &Dataset, cfg: &RunConfig) -> CliResult<Vec<BenchItem>> {
    let b = &cfg.benchmark;
    let scored: Vec<BenchItem> = (0..test.len())
        .map(|i| {
            let p = classifier.predict(test.image(i))?;
            let predicted = argmax(&p);
            let label = test.labels[i];
            let category = if predicted != label {
                Category::Misclassified
            } else if p[predicted] < b.close_threshold {
                Category::CloseCorrect
            } else {
                Category::Correct
            };
            Ok(BenchItem { index: i, category, label, predicted, confidence: p[predicted] })
        })
        .collect::<piece_core::Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(b.seed);
    let mut pick = |cat: Category, label: Option<usize>, n: Option<usize>, shuffle: bool| {
        let mut pool: Vec<BenchItem> =
            scored.iter().filter(|s| s.category == cat && label.is_none_or(|l| s.label == l)).cloned().collect();
        if shuffle {
            pool.shuffle(&mut rng);
        }
        if let Some(n) = n {
            pool.truncate(n);
        }
        pool
    };
    let mut items = Vec::new();
    for c in 0..test.n_classes {
        items.extend(pick(Category::Correct, Some(c), Some(b.correct_per_class), true));
    }
    items.extend(pick(Category::CloseCorrect, None, Some(b.close_correct), true));
    items.extend(pick(Category::Misclassified, None, b.max_misclassified, false));
    items.sort_by_key(|s| s.index);
    Ok(items)
}

/// Inversion and counterfactual class shared by every method for one image.
struct Prepared {
    item: BenchItem,
    image: Vec<f64>,
    start: Result<(Inversion, ClassSelection), String>,
}

pub struct Runner<'a> {
    pub cfg: &'a RunConfig,
    pub art: &'a Artifacts,
    pub latent: LatentModel<'a>,
    pub piece_cfg: PieceConfig,
    pub train_latents: Vec<Vec<f64>>,
}

struct CounterfactualRows {
    rows: Vec<MetricRow>,
    /// Explanation images aligned with `rows`; `None` for failures.
    images: Vec<Option<Vec<f64>>>,
    sweep: Vec<MetricRow>,
    gof_flagged: Vec<f64>,
    gof_applied: Vec<f64>,
}

/// One generated explanation before scoring.
struct Generated {
    method: String,
    mode: String,
    class: usize,
    counterfactual: usize,
    intended: usize,
    image: Option<Vec<f64>>,
    failed: bool,
    verified: bool,
    note: String,
    target_distance: Option<f64>,
}

impl Generated {
    fn failure(method: &str, mode: &str, class: usize, counterfactual: usize, intended: usize, note: String) -> Self {
        Self {
            method: method.into(),
            mode: mode.into(),
            class,
            counterfactual,
            intended,
            image: None,
            failed: true,
            verified: false,
            note,
            target_distance: None,
        }
    }

    fn from_piece(mode: &str, r: &ExplanationResult) -> Self {
        let mut note = format!("applied={};termination={:?}", r.modification.steps.len(), r.termination());
        if let Some(k) = r.reference_count {
            note.push_str(&format!(";k={k}"));
        }
        Self {
            method: PIECE.into(),
            mode: mode.into(),
            class: r.predicted,
            counterfactual: r.counterfactual,
            intended: r.intended,
            image: Some(r.image().to_vec()),
            failed: false,
            verified: r.verified,
            note,
            target_distance: None,
        }
    }

    fn from_baseline(name: &str, mode: &str, class: usize, cp: usize, intended: usize, o: &BaselineOutcome) -> Self {
        Self {
            method: name.into(),
            mode: mode.into(),
            class,
            counterfactual: cp,
            intended,
            image: Some(o.image.clone()),
            failed: !o.succeeded(),
            verified: o.succeeded() && o.predicted == intended,
            note: o.failure.clone().unwrap_or_else(|| format!("step={}", o.step)),
            target_distance: None,
        }
    }
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a RunConfig, art: &'a Artifacts) -> CliResult<Self> {
        let latent = LatentModel::new(&art.generator, &art.classifier)?;
        let piece_cfg = PieceConfig { alpha: art.stats.alpha, ..cfg.piece.clone() };
        let partition = collect_latents(&art.classifier, &art.data.train)?;
        let train_latents = partition.per_class.into_iter().flatten().collect();
        Ok(Self { cfg, art, latent, piece_cfg, train_latents })
    }

    fn models(&self) -> Models<'_> {
        Models { latent: self.latent, stats: &self.art.stats }
    }

    fn seed(&self, index: usize) -> u64 {
        self.cfg.benchmark.seed ^ index as u64
    }

    fn prepare(&self, item: &BenchItem) -> Prepared {
        let image = self.art.data.test.image(item.index).to_vec();
        let start = invert_image(&self.latent, &image, &self.piece_cfg, self.seed(item.index))
            .map_err(|e| format!("inversion: {e}"))
            .and_then(|inv| {
                select_cf_class(&self.latent, &inv.z, &image, item.label, &self.piece_cfg)
                    .map(|sel| (inv, sel))
                    .map_err(|e| format!("class selection: {e}"))
            });
        Prepared { item: item.clone(), image, start }
    }

    fn piece(&self, p: &Prepared, mode: ExplanationMode) -> Result<ExplanationResult, String> {
        let (inv, sel) = p.start.as_ref().map_err(Clone::clone)?;
        let req = ExplanationRequest {
            image: p.image.clone(),
            true_label: p.item.label,
            mode,
            seed: self.seed(p.item.index),
            counterfactual_override: None,
        };
        explain_from(&self.models(), &self.piece_cfg, &req, inv.clone(), sel.clone()).map_err(|e| e.to_string())
    }

    fn baseline(&self, p: &Prepared, method: Method, stop: BaselineStop) -> Result<BaselineOutcome, String> {
        let (inv, sel) = p.start.as_ref().map_err(Clone::clone)?;
        let b = &self.cfg.baselines;
        let cfg = BaselineConfig { method, lr: b.lr, max_steps: b.max_steps, stop };
        run_baseline(&self.latent, &inv.z, &inv.x, sel.predicted, sel.counterfactual, &cfg).map_err(|e| e.to_string())
    }

    fn classes(&self, p: &Prepared) -> (usize, usize) {
        match &p.start {
            Ok((_, sel)) => (sel.predicted, sel.counterfactual),
            Err(_) => (p.item.predicted, p.item.label),
        }
    }

    fn score(&self, p: &Prepared, g: Generated) -> CliResult<MetricRow> {
        let mut row = MetricRow {
            method: g.method,
            mode: g.mode,
            image_id: p.item.index,
            category: p.item.category.as_str().into(),
            true_label: p.item.label,
            class: g.class,
            counterfactual: g.counterfactual,
            intended: g.intended,
            target_distance: g.target_distance,
            verified: g.verified,
            failed: g.failed,
            note: g.note,
            ..Default::default()
        };
        let Some(image) = g.image.filter(|_| !g.failed) else {
            return Ok(row);
        };
        let clf = &self.art.classifier;
        let other = if g.intended == g.class { g.counterfactual } else { g.class };
        let m = &self.cfg.metrics;
        let mc = mc_dropout(clf, &image, g.intended, m.mc_passes, m.seed.wrapping_add(p.item.index as u64 * 1_000_003))?;
        let features = clf.features(&image)?;
        row.mc_mean = Some(mc.mean);
        row.mc_std = Some(mc.std);
        row.nn_dist = Some(nn_dist(&features, &self.train_latents)?);
        let aes = &self.art.autoencoders;
        row.im1 = im1(&image, &aes[other], &aes[g.intended])?;
        row.im2 = im2(&image, &aes[g.intended], &self.art.full_autoencoder)?;
        row.l1 = Some(sf_l1(&p.image, &image)?);
        if let Ok((inv, _)) = &p.start {
            row.latent_distance = Some(l2_distance(&features, &inv.reconstruction_features));
        }
        Ok(row)
    }

    fn counterfactual_rows(&self, p: &Prepared) -> CliResult<CounterfactualRows> {
        let (c, cp) = self.classes(p);
        let mode = "counterfactual";
        let mut gof_flagged = Vec::new();
        let mut gof_applied = Vec::new();
        let piece = match self.piece(p, ExplanationMode::Counterfactual) {
            Ok(r) => {
                let models = self.art.stats.class(r.counterfactual)?;
                gof_flagged.extend(r.exceptional.iter().filter_map(|f| models[f.neuron].ks_p()));
                gof_applied.extend(r.modification.steps.iter().filter_map(|s| models[s.neuron].ks_p()));
                Generated::from_piece(mode, &r)
            }
            Err(e) => Generated::failure(PIECE, mode, c, cp, cp, e),
        };
        let keep = |g: &Generated| if g.failed { None } else { g.image.clone() };
        let mut images = vec![keep(&piece)];
        let mut rows = vec![self.score(p, piece)?];
        let b = &self.cfg.baselines;
        let run = |name: &str, method| -> Generated {
            match self.baseline(p, method, BaselineStop::BoundaryCross) {
                Ok(o) => Generated::from_baseline(name, mode, c, cp, cp, &o),
                Err(e) => Generated::failure(name, mode, c, cp, cp, e),
            }
        };
        for (name, method) in [(MIN_EDIT, Method::MinEdit), (C_MIN_EDIT, Method::CMinEdit { lambda: b.lambda })] {
            let g = run(name, method);
            images.push(keep(&g));
            rows.push(self.score(p, g)?);
        }
        let sweep = b
            .lambda_sweep
            .iter()
            .map(|&l| self.score(p, run(&format!("{C_MIN_EDIT}_lambda_{}", fmt_num(Some(l))), Method::CMinEdit { lambda: l })))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(CounterfactualRows { rows, images, sweep, gof_flagged, gof_applied })
    }

    fn semifactual_rows(&self, p: &Prepared) -> CliResult<Vec<MetricRow>> {
        let (c, cp) = self.classes(p);
        let mut rows = Vec::new();
        let sf = match self.piece(p, ExplanationMode::Semifactual) {
            Ok(r) => Generated::from_piece("semifactual", &r),
            Err(e) => Generated::failure(PIECE, "semifactual", c, cp, c, e),
        };
        rows.push(self.score(p, sf)?);
        let b = &self.cfg.baselines;
        let methods = [(MIN_EDIT, Method::MinEdit), (C_MIN_EDIT, Method::CMinEdit { lambda: b.lambda })];
        for (name, method) in methods {
            let g = match self.baseline(p, method, BaselineStop::SemifactualMaxEdit) {
                Ok(o) => Generated::from_baseline(name, "semifactual", c, cp, c, &o),
                Err(e) => Generated::failure(name, "semifactual", c, cp, c, e),
            };
            rows.push(self.score(p, g)?);
        }
        for f in PROPORTIONAL_FRACTIONS {
            let pct = format!("{:.0}", f * 100.0);
            let prop_mode = format!("proportional_{pct}");
            let dist_mode = format!("distance_{pct}");
            let (prop, target) = match self.piece(p, ExplanationMode::Proportional { fraction: f }) {
                Ok(r) => {
                    let d = l2_distance(&self.art.classifier.features(r.image())?, &r.inversion.reconstruction_features);
                    (Generated::from_piece(&prop_mode, &r), Some(d))
                }
                Err(e) => (Generated::failure(PIECE, &prop_mode, c, cp, c, e), None),
            };
            let prop_row = self.score(p, prop)?;
            let mut matched = prop_row.clone();
            matched.mode = dist_mode.clone();
            matched.target_distance = target;
            rows.push(prop_row);
            rows.push(matched);
            for (name, method) in methods {
                let g = match target {
                    None => Generated::failure(name, &dist_mode, c, cp, c, "no target distance".into()),
                    Some(d) => match self.baseline(p, method, BaselineStop::Distance { target: d }) {
                        Ok(o) => Generated::from_baseline(name, &dist_mode, c, cp, c, &o),
                        Err(e) => Generated::failure(name, &dist_mode, c, cp, c, e),
                    },
                };
                let mut row = self.score(p, g)?;
                row.target_distance = target;
                rows.push(row);
            }
        }
        Ok(rows)
    }
}

fn items_table(items: &[BenchItem]) -> CliResult<Table> {
    let mut t = Table::new(&["image_id", "category", "label", "predicted", "confidence"]);
    for it in items {
        t.push(vec![
            it.index.to_string(),
            it.category.as_str().into(),
            it.label.to_string(),
            it.predicted.to_string(),
            fmt_num(Some(it.confidence)),
        ])?;
    }
    Ok(t)
}

fn failure_rate(rows: &[MetricRow]) -> f64 {
    if rows.is_empty() {
        0.0
    } else {
        rows.iter().filter(|r| r.failed).count() as f64 / rows.len() as f64
    }
}

fn write_reports(run: &RunDir, files: &[(String, String)]) -> CliResult<()> {
    for (name, body) in files {
        std::fs::write(run.report(name), body)?;
    }
    Ok(())
}

fn check_threshold(rows: &[MetricRow], cfg: &RunConfig, what: &str) -> CliResult<()> {
    let rate = failure_rate(rows);
    if rate > cfg.benchmark.max_failure_rate {
        return Err(CliError::Threshold(format!(
            "{what}: {:.1}% of rows failed (limit {:.1}%)",
            rate * 100.0,
            cfg.benchmark.max_failure_rate * 100.0
        )));
    }
    Ok(())
}

pub const EXPT1_FILES: [&str; 7] = [
    "expt1_items.csv",
    "expt1_rows.csv",
    "expt1_summary.csv",
    "expt1_correlation.csv",
    "expt1_substitutability.csv",
    "expt1_gof.csv",
    "expt1_lambda_sweep.csv",
];

pub const EXPT2_FILES: [&str; 7] = [
    "expt2_items.csv",
    "expt2_rows.csv",
    "expt2_max_edit.csv",
    "expt2_distance_matched.csv",
    "expt2_profile.csv",
    "expt2_semifactual_validity.csv",
    "expt2_summary.csv",
];

fn select_summary(report: &MetricReport, keep: impl Fn(&str) -> bool) -> CliResult<String> {
    let rows: Vec<MetricRow> = report.rows.iter().filter(|r| keep(&r.mode)).cloned().collect();
    Ok(build_report(rows)?.summary_csv())
}

pub fn run_expt1(cfg: &RunConfig, art: &Artifacts, run: &RunDir, force: bool) -> CliResult<MetricReport> {
    let outputs: Vec<_> = EXPT1_FILES.iter().map(|f| run.report(f)).collect();
    guard_stage(&outputs, force, "experiment 1")?;
    run.ensure_dirs()?;
    let runner = Runner::new(cfg, art)?;
    let items = compose_test_set(&art.classifier, &art.data.test, cfg)?;
    let per_item: Vec<_> = items
        .par_iter()
        .map(|it| runner.counterfactual_rows(&runner.prepare(it)))
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut sweep = Vec::new();
    let (mut flagged, mut applied) = (Vec::new(), Vec::new());
    let mut explanations: Vec<(String, Vec<f64>, usize)> = Vec::new();
    for out in per_item {
        for (row, img) in out.rows.iter().zip(out.images) {
            if let Some(img) = img {
                explanations.push((row.method.clone(), img, row.intended));
            }
        }
        rows.extend(out.rows);
        sweep.extend(out.sweep);
        flagged.extend(out.gof_flagged);
        applied.extend(out.gof_applied);
    }
    let report = build_report(rows)?;
    let sweep_report = build_report(sweep)?;

    let mut corr = Table::new(&["scope", "n", "r_nn_dist_mc_mean", "r_nn_dist_mc_std"]);
    let scopes = [("pooled", None), (PIECE, Some(PIECE)), (MIN_EDIT, Some(MIN_EDIT)), (C_MIN_EDIT, Some(C_MIN_EDIT))];
    for (name, method) in scopes {
        let pts: Vec<(f64, f64, f64)> = report
            .rows
            .iter()
            .filter(|r| !r.failed && method.is_none_or(|m| r.method == m))
            .filter_map(|r| Some((r.nn_dist?, r.mc_mean?, r.mc_std?)))
            .collect();
        let nn: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let r = |ys: Vec<f64>| -> CliResult<Option<f64>> {
            if nn.len() < 3 {
                return Ok(None);
            }
            Ok(correlation(&nn, &ys)?)
        };
        let r_mean = r(pts.iter().map(|p| p.1).collect())?;
        let r_std = r(pts.iter().map(|p| p.2).collect())?;
        corr.push(vec![name.into(), pts.len().to_string(), fmt_num(r_mean), fmt_num(r_std)])?;
    }

    let test = &art.data.test;
    let m = &cfg.metrics;
    let train_rows: Vec<(&[f64], usize)> = (0..art.data.train.len()).map(|i| (art.data.train.image(i), art.data.train.labels[i])).collect();
    let mut sub = Table::new(&["method", "k", "n_explanations", "accuracy", "reference_accuracy", "score", "missing_classes"]);
    for k in [m.knn_k, m.knn_k_alt] {
        let reference = knn_accuracy(&train_rows, test, k)?;
        for method in [PIECE, MIN_EDIT, C_MIN_EDIT] {
            let expl: Vec<(Vec<f64>, usize)> =
                explanations.iter().filter(|e| e.0 == method).map(|e| (e.1.clone(), e.2)).collect();
            let (acc, score, missing) = if expl.is_empty() {
                (None, None, "all".to_string())
            } else {
                let s = substitutability_against(&expl, reference, test, k)?;
                let missing = s.missing_classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
                (Some(s.accuracy), Some(s.score), missing)
            };
            sub.push(vec![
                method.into(),
                k.to_string(),
                expl.len().to_string(),
                fmt_num(acc),
                fmt_num(Some(reference)),
                fmt_num(score),
                missing,
            ])?;
        }
    }

    let all_ks: Vec<f64> = art.stats.models.iter().flatten().filter_map(|m| m.ks_p()).collect();
    let mut gof = Table::new(&["scope", "n", "mean_ks_p", "std_ks_p"]);
    for (scope, vals) in [("exceptional_features", &flagged), ("applied_features", &applied), ("all_fitted_models", &all_ks)] {
        let (mean, std) = mean_std(vals);
        gof.push(vec![scope.into(), vals.len().to_string(), fmt_num(mean), fmt_num(std)])?;
    }

    write_reports(
        run,
        &[
            (EXPT1_FILES[0].into(), items_table(&items)?.to_csv()),
            (EXPT1_FILES[1].into(), report.rows_csv()),
            (EXPT1_FILES[2].into(), report.summary_csv()),
            (EXPT1_FILES[3].into(), corr.to_csv()),
            (EXPT1_FILES[4].into(), sub.to_csv()),
            (EXPT1_FILES[5].into(), gof.to_csv()),
            (EXPT1_FILES[6].into(), sweep_report.summary_csv()),
        ],
    )?;
    check_threshold(&report.rows, cfg, "experiment 1")?;
    Ok(report)
}

pub fn run_expt2(cfg: &RunConfig, art: &Artifacts, run: &RunDir, force: bool) -> CliResult<MetricReport> {
    let outputs: Vec<_> = EXPT2_FILES.iter().map(|f| run.report(f)).collect();
    guard_stage(&outputs, force, "experiment 2")?;
    run.ensure_dirs()?;
    let runner = Runner::new(cfg, art)?;
    let items = compose_test_set(&art.classifier, &art.data.test, cfg)?;
    let rows: Vec<MetricRow> = items
        .par_iter()
        .map(|it| runner.semifactual_rows(&runner.prepare(it)))
        .collect::<CliResult<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let report = build_report(rows)?;

    let mut validity = Table::new(&["method", "mode", "n", "n_failed", "n_kept_class"]);
    for a in &report.aggregates {
        if a.method == PIECE && (a.mode == "semifactual" || a.mode.starts_with("proportional_")) {
            validity.push(vec![
                a.method.clone(),
                a.mode.clone(),
                a.n.to_string(),
                a.n_failed.to_string(),
                a.n_verified.to_string(),
            ])?;
        }
    }
    write_reports(
        run,
        &[
            (EXPT2_FILES[0].into(), items_table(&items)?.to_csv()),
            (EXPT2_FILES[1].into(), report.rows_csv()),
            (EXPT2_FILES[2].into(), select_summary(&report, |m| m == "semifactual")?),
            (EXPT2_FILES[3].into(), select_summary(&report, |m| m.starts_with("distance_"))?),
            (
                EXPT2_FILES[4].into(),
                select_summary(&report, |m| m.starts_with("proportional_"))?,
            ),
            (EXPT2_FILES[5].into(), validity.to_csv()),
            (EXPT2_FILES[6].into(), report.summary_csv()),
        ],
    )?;
    check_threshold(&report.rows, cfg, "experiment 2")?;
    Ok(report)
}
