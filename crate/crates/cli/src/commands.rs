use std::path::Path;

use piece_core::datagen::{make_glyphs, write_pgm, DatasetManifest, Split};
use piece_core::hurdle::{collect_latents, StatsTable};
use piece_core::net::write_network;
use piece_core::piece::{explain, ExplanationMode, ExplanationRequest, LatentModel, Models, PROPORTIONAL_FRACTIONS};
use piece_core::training::{train_autoencoders, train_classifier, train_generator};
use piece_core::Tensor;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::rundir::{guard_stage, load_artifacts, load_checked_network, load_datasets, provenance, RunDir};

pub fn cmd_datagen(cfg: &RunConfig, run: &RunDir, force: bool) -> CliResult<()> {
    let outputs = [run.dataset("manifest.json"), run.dataset("train.json"), run.dataset("test.json")];
    guard_stage(&outputs, force, "datagen")?;
    run.ensure_dirs()?;
    let d = &cfg.dataset;
    let train = make_glyphs(&d.glyphs, d.train_per_class, Split::Train).map_err(|e| CliError::Config(e.to_string()))?;
    let test = make_glyphs(&d.glyphs, d.test_per_class, Split::Test).map_err(|e| CliError::Config(e.to_string()))?;
    train.save(&outputs[1])?;
    test.save(&outputs[2])?;
    let manifest = DatasetManifest {
        params: d.glyphs.clone(),
        n_per_class_train: d.train_per_class,
        n_per_class_test: d.test_per_class,
        train_counts: train.class_counts(),
        test_counts: test.class_counts(),
        train_hash: train.fingerprint(),
        test_hash: test.fingerprint(),
    };
    std::fs::write(&outputs[0], serde_json::to_string_pretty(&manifest)?)?;
    std::fs::write(run.config(), cfg.to_toml())?;
    println!("datagen: {} train / {} test images, manifest {}", train.len(), test.len(), &manifest.hash()[..12]);
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, run: &RunDir, force: bool) -> CliResult<()> {
    let data = load_datasets(run)?;
    let n = data.train.n_classes;
    let mut outputs = vec![run.classifier_path(), run.generator_path(), run.full_autoencoder_path()];
    outputs.extend((0..n).map(|c| run.class_autoencoder_path(c)));
    guard_stage(&outputs, force, "train")?;
    run.ensure_dirs()?;
    let (tr, te) = (&data.train, &data.test);
    let ((clf, gen), aes) = rayon::join(
        || {
            rayon::join(
                || train_classifier(tr, te, &cfg.classifier),
                || train_generator(tr, te, &cfg.generator),
            )
        },
        || train_autoencoders(tr, te, &cfg.autoencoder),
    );
    let (classifier, clf_report) = clf?;
    let (_, generator, gen_report) = gen?;
    let aes = aes?;
    let h = &data.manifest_hash;
    write_network(&classifier, &provenance(h, &RunConfig::section_hash(&cfg.classifier)), &run.classifier_path())?;
    write_network(&generator, &provenance(h, &RunConfig::section_hash(&cfg.generator)), &run.generator_path())?;
    let ae_prov = provenance(h, &RunConfig::section_hash(&cfg.autoencoder));
    for (c, ae) in aes.per_class.iter().enumerate() {
        write_network(ae, &ae_prov, &run.class_autoencoder_path(c))?;
    }
    write_network(&aes.full, &ae_prov, &run.full_autoencoder_path())?;
    let mut reports = vec![clf_report.clone(), gen_report.clone()];
    reports.extend(aes.reports.iter().cloned());
    std::fs::write(run.model("training.json"), serde_json::to_string_pretty(&reports)?)?;
    println!(
        "train: classifier test accuracy {:.4} ({} epochs), generator test MSE {:.5}",
        clf_report.final_metric,
        clf_report.curve.len(),
        gen_report.final_metric
    );
    for r in &aes.reports {
        println!("train: {} test MSE {:.5}", r.model, r.final_metric);
    }
    Ok(())
}

pub fn cmd_fit_stats(cfg: &RunConfig, run: &RunDir, force: bool) -> CliResult<()> {
    let data = load_datasets(run)?;
    let classifier = load_checked_network(&run.classifier_path(), &data.manifest_hash, "train")?;
    guard_stage(&[run.stats()], force, "fit-stats")?;
    run.ensure_dirs()?;
    let partition = collect_latents(&classifier, &data.train)?;
    for c in partition.empty_classes() {
        eprintln!("warning: no training image is predicted as class {c}; its models are degenerate");
    }
    let table = StatsTable::fit(&partition, cfg.stats.alpha, &classifier.fingerprint(), &data.manifest_hash)?;
    table.save(&run.stats())?;
    let degenerate = table.models.iter().flatten().filter(|m| m.is_degenerate()).count();
    println!(
        "fit-stats: {} classes x {} neurons, {degenerate} degenerate, partition sizes {:?}",
        table.n_classes(),
        table.n_features,
        partition.sizes()
    );
    Ok(())
}

pub fn parse_mode(mode: &str, fraction: Option<f64>, any_fraction: bool) -> CliResult<ExplanationMode> {
    let m = match mode {
        "cf" | "counterfactual" => ExplanationMode::Counterfactual,
        "sf" | "semifactual" => ExplanationMode::Semifactual,
        "prop" | "proportional" => {
            let f = fraction.ok_or_else(|| CliError::Config("--mode prop needs --fraction".into()))?;
            if !any_fraction && !PROPORTIONAL_FRACTIONS.contains(&f) {
                return Err(CliError::Config(format!(
                    "fraction {f} not in {PROPORTIONAL_FRACTIONS:?}; pass --any-fraction to override"
                )));
            }
            ExplanationMode::Proportional { fraction: f }
        }
        other => return Err(CliError::Config(format!("unknown mode {other:?} (cf, sf, prop)"))),
    };
    m.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(m)
}

fn write_image(data: &[f64], side: (usize, usize), path: &Path) -> CliResult<()> {
    let clamped: Vec<f64> = data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    write_pgm(&Tensor::new(vec![side.0, side.1], clamped)?, path)?;
    Ok(())
}

pub fn cmd_explain(
    cfg: &RunConfig,
    run: &RunDir,
    index: usize,
    mode: ExplanationMode,
    target: Option<usize>,
) -> CliResult<()> {
    let art = load_artifacts(run)?;
    let test = &art.data.test;
    if index >= test.len() {
        return Err(CliError::Config(format!("--index {index} outside the {} test images", test.len())));
    }
    let latent = LatentModel::new(&art.generator, &art.classifier)?;
    let models = Models { latent, stats: &art.stats };
    let piece_cfg = piece_core::piece::PieceConfig { alpha: art.stats.alpha, ..cfg.piece.clone() };
    let req = ExplanationRequest {
        image: test.image(index).to_vec(),
        true_label: test.labels[index],
        mode,
        seed: cfg.benchmark.seed ^ index as u64,
        counterfactual_override: target,
    };
    let result = explain(&models, &piece_cfg, &req)?;
    let dir = run.explanation_dir(&format!("{}_{index}", mode.label()));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(&result)?)?;
    let side = (test.height(), test.width());
    write_image(&req.image, side, &dir.join("original.pgm"))?;
    write_image(&result.inversion.reconstruction, side, &dir.join("reconstruction.pgm"))?;
    write_image(result.image(), side, &dir.join("explanation.pgm"))?;
    println!(
        "explain: image {index} label {} predicted {} counterfactual {} mode {} applied {}{} termination {:?} -> classified {} (verified {})",
        result.true_label,
        result.predicted,
        result.counterfactual,
        mode.label(),
        result.modification.steps.len(),
        result.reference_count.map(|k| format!(" of k={k}")).unwrap_or_default(),
        result.termination(),
        result.image_predicted,
        result.verified
    );
    println!("explain: wrote {}", dir.display());
    Ok(())
}
