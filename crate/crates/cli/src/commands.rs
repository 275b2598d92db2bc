use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tcn_aa::augment::{expand_dataset, expansion_source, AugmentConfig};
use tcn_aa::csi::{amplitude, gate_and_trim, generate_synthetic, load_recording, write_synthetic, DatasetManifest, ManifestEntry};
use tcn_aa::dsp::{class_counts, load_dataset, preprocess as preprocess_recording, preprocess_amplitude, save_dataset, PreprocessedSample};
use tcn_aa::model::{load_checkpoint, model_gradient_checks, save_checkpoint};
use tcn_aa::tensor::primitive_checks;
use tcn_aa::train::{ablate as run_ablation, evaluate, run_fold, KFoldPlan, Split, Sweep};
use tcn_aa::Sample64;

use crate::config::{manifest_path, AugmentStage, RunConfig};

const PRIMITIVE_TOLERANCE: f64 = 1e-6;
const MODEL_TOLERANCE: f64 = 1e-4;

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let out = cfg.paths.out.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn input_manifest(cfg: &RunConfig) -> Result<PathBuf> {
    let Some(p) = &cfg.paths.dataset else {
        bail!("no input dataset: pass --input or set paths.dataset");
    };
    let m = manifest_path(p);
    if !m.is_file() {
        bail!("manifest {} does not exist", m.display());
    }
    Ok(m)
}

/// Refuse to write a dataset over the one being read.
fn check_not_in_place(input: &Path, out: &Path) -> Result<()> {
    let target = out.join("manifest.csv");
    if let (Ok(a), Ok(b)) = (input.canonicalize(), target.canonicalize()) {
        if a == b {
            bail!("output directory {} holds the input manifest; choose another --out", out.display());
        }
    }
    Ok(())
}

fn counts_line(samples: &[Sample64]) -> String {
    class_counts(samples).iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// `(pair_id, trial_id)` of each sample's originating recording.
fn ids_of(entries: &[ManifestEntry]) -> Vec<(u32, u32)> {
    entries.iter().map(|e| (e.pair_id, e.trial_id)).collect()
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.synth.spec();
    let data = generate_synthetic(&spec)?;
    let manifest = write_synthetic(out_dir(cfg)?, &data)?;
    println!(
        "synth: {} recordings ({} classes × {}), {}×{} antennas, {} packets × {} subcarriers",
        data.recordings.len(),
        spec.classes,
        spec.samples_per_class,
        spec.n_t,
        spec.n_r,
        spec.n_p,
        spec.n_s
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

/// Load, gate and trim every listed recording. Returns kept entries with
/// their recordings and the number discarded as too short.
fn gated(cfg: &RunConfig, manifest: &Path) -> Result<(Vec<ManifestEntry>, Vec<tcn_aa::csi::CsiRecording>, usize)> {
    let m = DatasetManifest::load(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let (mut entries, mut recs, mut dropped) = (Vec::new(), Vec::new(), 0);
    for e in m.entries() {
        let path = DatasetManifest::resolve(base, e);
        let rec = load_recording(&path).with_context(|| format!("loading {}", path.display()))?;
        match gate_and_trim(&rec, cfg.pipeline.target_packets, cfg.pipeline.steady_state)? {
            Some(r) => {
                entries.push(e.clone());
                recs.push(r);
            }
            None => dropped += 1,
        }
    }
    Ok((entries, recs, dropped))
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let manifest = input_manifest(cfg)?;
    let out = out_dir(cfg)?;
    check_not_in_place(&manifest, out)?;
    let (entries, recs, dropped) = gated(cfg, &manifest)?;
    let samples: Vec<Sample64> = entries
        .iter()
        .zip(&recs)
        .map(|(e, r)| preprocess_recording(r, e.label, &cfg.preprocess))
        .collect::<Result<_, _>>()?;
    let ids = ids_of(&entries);
    let written = save_dataset(out, &samples, |i| ids[i])?;
    let shape = samples.first().map(|s| s.data.shape().to_vec()).unwrap_or_default();
    println!("preprocess: {} samples of shape {shape:?}, {dropped} recordings shorter than {} packets discarded", samples.len(), cfg.pipeline.target_packets);
    println!("per-class counts: {}", counts_line(&samples));
    println!("manifest: {}", written.display());
    Ok(())
}

pub fn augment(cfg: &RunConfig) -> Result<()> {
    let manifest = input_manifest(cfg)?;
    let out = out_dir(cfg)?;
    check_not_in_place(&manifest, out)?;
    let (ids, after) = match cfg.pipeline.augment_stage {
        AugmentStage::Preprocessed => {
            let (m, samples) = load_dataset::<f64>(&manifest)?;
            let expanded = expand_dataset(&samples, &cfg.augment)?;
            (ids_of(m.entries()), expanded)
        }
        AugmentStage::Raw => {
            let (entries, recs, _) = gated(cfg, &manifest)?;
            let raw: Vec<Sample64> = entries
                .iter()
                .zip(&recs)
                .map(|(e, r)| PreprocessedSample::new(amplitude::<f64>(r), e.label))
                .collect::<Result<_, _>>()?;
            (ids_of(&entries), expand_raw(&raw, &cfg.augment, cfg)?)
        }
    };
    let n = ids.len();
    if n == 0 {
        bail!("input dataset is empty");
    }
    let written = save_dataset(out, &after, |j| ids[expansion_source(j, n)])?;
    println!("augment ({:?} stage): {} → {} samples", cfg.pipeline.augment_stage, n, after.len());
    println!("per-class counts before: {}", counts_line(&after[..n]));
    println!("per-class counts after:  {}", counts_line(&after));
    println!("manifest: {}", written.display());
    Ok(())
}

/// Augment raw amplitudes, then run the preprocessing chain on every sample.
fn expand_raw(raw: &[Sample64], aug: &AugmentConfig, cfg: &RunConfig) -> Result<Vec<Sample64>> {
    expand_dataset(raw, aug)?
        .into_iter()
        .map(|s| Ok(PreprocessedSample::new(preprocess_amplitude(&s.data, &cfg.preprocess)?, s.label)?))
        .collect()
}

#[derive(Serialize)]
struct FoldResult {
    fold: usize,
    final_train_accuracy: Option<f64>,
    final_validation_accuracy: Option<f64>,
    best_validation_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct CvReport {
    folds: Vec<FoldResult>,
    mean_validation_accuracy: f64,
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let manifest = input_manifest(cfg)?;
    let (_, samples) = load_dataset::<f64>(&manifest)?;
    let out = out_dir(cfg)?;
    fs::write(out.join("run.toml"), cfg.to_toml()?).context("writing run.toml")?;
    let labels: Vec<_> = samples.iter().map(|s| s.label).collect();
    let plan = KFoldPlan::new(&labels, cfg.cv.folds, cfg.train.seed)?;
    let folds: Vec<usize> = cfg.cv.fold.map_or_else(|| (0..plan.k()).collect(), |f| vec![f]);
    let aug = cfg.cv.augment.then_some(&cfg.augment);
    let mut results = Vec::new();
    for f in folds {
        let outcome = run_fold(&samples, &plan, f, &cfg.model, &cfg.train, aug)?;
        let dir = out.join(format!("fold{f:02}"));
        outcome.metrics.write(&dir)?;
        save_checkpoint(dir.join("model.ckpt"), &outcome.model)?;
        let m = &outcome.metrics;
        let r = FoldResult {
            fold: f,
            final_train_accuracy: m.last(Split::Train).map(|r| r.accuracy),
            final_validation_accuracy: m.last(Split::Validation).map(|r| r.accuracy),
            best_validation_accuracy: m.best_accuracy(Split::Validation),
        };
        println!(
            "fold {f}: train {:.4}, validation {:.4} after {} epochs",
            r.final_train_accuracy.unwrap_or(0.0),
            r.final_validation_accuracy.unwrap_or(0.0),
            m.epochs()
        );
        results.push(r);
    }
    let mean = results.iter().map(|r| r.final_validation_accuracy.unwrap_or(0.0)).sum::<f64>() / results.len() as f64;
    println!("mean validation accuracy: {mean:.4}");
    write_json(&out.join("cv.json"), &CvReport { folds: results, mean_validation_accuracy: mean })
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let manifest = input_manifest(cfg)?;
    let Some(ckpt) = &cfg.paths.checkpoint else {
        bail!("no checkpoint: pass --checkpoint or set paths.checkpoint");
    };
    let model = load_checkpoint::<f64>(ckpt, None).with_context(|| format!("loading {}", ckpt.display()))?;
    let (_, samples) = load_dataset::<f64>(&manifest)?;
    let ev = evaluate(&model, &samples)?;
    let out = out_dir(cfg)?;
    write_json(&out.join("evaluation.json"), &ev)?;
    println!("eval: {} samples, accuracy {:.4}, mean loss {:.4}", samples.len(), ev.accuracy, ev.loss);
    println!("confusion (rows = true class, columns = predicted):");
    for row in ev.confusion.counts() {
        println!("  {}", row.iter().map(|c| format!("{c:4}")).collect::<String>());
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckRow {
    name: String,
    max_rel_error: f64,
    tolerance: f64,
    pass: bool,
}

pub fn gradcheck(cfg: &RunConfig) -> Result<()> {
    let mut rows = Vec::new();
    for (name, r) in primitive_checks(cfg.seed)? {
        rows.push(CheckRow { name: name.into(), max_rel_error: r.max_rel_error, tolerance: PRIMITIVE_TOLERANCE, pass: r.max_rel_error < PRIMITIVE_TOLERANCE });
    }
    for (placement, r) in model_gradient_checks(&cfg.model, cfg.seed)? {
        rows.push(CheckRow {
            name: format!("model/{}", serde_json::to_value(placement)?.as_str().unwrap_or("?")),
            max_rel_error: r.max_rel_error,
            tolerance: MODEL_TOLERANCE,
            pass: r.max_rel_error < MODEL_TOLERANCE,
        });
    }
    for r in &rows {
        println!("{:<24} {:>10.3e}  (< {:.0e})  {}", r.name, r.max_rel_error, r.tolerance, if r.pass { "ok" } else { "FAIL" });
    }
    write_json(&out_dir(cfg)?.join("gradcheck.json"), &rows)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        bail!("{failed} gradient checks exceeded tolerance");
    }
    Ok(())
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let manifest = input_manifest(cfg)?;
    let (_, samples) = load_dataset::<f64>(&manifest)?;
    let sweep = &cfg.ablate.sweep;
    let aug = (cfg.cv.augment || matches!(sweep, Sweep::Augmentation(_))).then_some(&cfg.augment);
    let table = run_ablation(&samples, &cfg.model, &cfg.train, aug, cfg.cv.folds, sweep)?;
    let out = out_dir(cfg)?;
    fs::write(out.join("ablation.csv"), table.to_csv()).context("writing ablation.csv")?;
    write_json(&out.join("ablation.json"), &table)?;
    println!("ablate {} ({})", table.sweep, table.protocol);
    for r in &table.rows {
        let e90 = r.epochs_to_90_train.map_or("-".to_string(), |e| e.to_string());
        println!(
            "  {:<24} train {:.4}  validation {:.4}  best {:.4}  epochs to 90% train {e90}",
            r.setting, r.train_accuracy, r.val_accuracy, r.best_val_accuracy
        );
    }
    Ok(())
}
