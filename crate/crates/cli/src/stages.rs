use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anopipe_core::classifier::{self, evaluate, Classifier, EvalMetrics, LabeledImage};
use anopipe_core::explain::{focus_fraction, gradcam, overlay};
use anopipe_core::gcgan::{self, load_generator, save_generator, write_loss_log};
use anopipe_core::imaging::{histogram_distance, load_image, resize, save_image, ChannelHistograms, DEFAULT_HISTOGRAM_BINS};
use anopipe_core::scenegen::{axial_distance, estimate_lever_angle, read_scenes_csv, sample_dataset, write_scenes_csv, PoolSpec};
use anopipe_core::{seeds, DatasetManifest, Domain, GeoTransform, ImageTensor, Label, LeverMask, ManifestEntry, Split};
use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::layout::*;
use crate::record::{hash_path, Artifact, RunRecord, StageEntry};
use crate::{report, Precondition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Trained on rendered anomalies.
    Cg,
    /// Trained on translated anomalies.
    Gcgan,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Cg, Variant::Gcgan];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cg => "cg",
            Variant::Gcgan => "gcgan",
        }
    }

    pub fn anomaly_domain(self) -> Domain {
        match self {
            Variant::Cg => Domain::CgAnomaly,
            Variant::Gcgan => Domain::ConvertedAnomaly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    GenData,
    TrainGcgan,
    Convert,
    Assemble,
    TrainDetector(Variant),
    Evaluate,
    Explain,
    Report,
}

impl Stage {
    /// Every stage of a complete run, in execution order.
    pub const ALL: [Stage; 9] = [
        Stage::GenData,
        Stage::TrainGcgan,
        Stage::Convert,
        Stage::Assemble,
        Stage::TrainDetector(Variant::Cg),
        Stage::TrainDetector(Variant::Gcgan),
        Stage::Evaluate,
        Stage::Explain,
        Stage::Report,
    ];

    pub fn name(self) -> String {
        match self {
            Stage::GenData => "gen-data".into(),
            Stage::TrainGcgan => "train-gcgan".into(),
            Stage::Convert => "convert".into(),
            Stage::Assemble => "assemble".into(),
            Stage::TrainDetector(v) => format!("train-detector:{}", v.name()),
            Stage::Evaluate => "evaluate".into(),
            Stage::Explain => "explain".into(),
            Stage::Report => "report".into(),
        }
    }

    pub fn upstream(self) -> Vec<Stage> {
        match self {
            Stage::GenData => vec![],
            Stage::TrainGcgan => vec![Stage::GenData],
            Stage::Convert => vec![Stage::GenData, Stage::TrainGcgan],
            Stage::Assemble => vec![Stage::GenData, Stage::Convert],
            Stage::TrainDetector(_) => vec![Stage::Assemble],
            Stage::Evaluate => vec![Stage::Assemble, Stage::TrainDetector(Variant::Cg), Stage::TrainDetector(Variant::Gcgan)],
            Stage::Explain => vec![Stage::Evaluate],
            Stage::Report => Stage::ALL[..8].to_vec(),
        }
    }

    /// Directory owned by the stage; cleared on `--force`.
    fn output_dir(self, l: &Layout) -> PathBuf {
        match self {
            Stage::GenData => l.pools(),
            Stage::TrainGcgan => l.gcgan(),
            Stage::Convert => l.converted(),
            Stage::Assemble => l.datasets(),
            Stage::TrainDetector(v) => l.detector(v.name()),
            Stage::Evaluate => l.evaluation(),
            Stage::Explain => l.explain(),
            Stage::Report => l.report().parent().unwrap().to_path_buf(),
        }
    }
}

/// Runs one stage: checks upstream artifacts, refuses to overwrite without
/// `force`, executes, and appends the stage to the run record.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage, force: bool) -> Result<StageEntry> {
    let layout = Layout::new(&cfg.output_root);
    let mut record = RunRecord::load(&layout.root)?;
    check_upstream(&layout, &record, stage)?;
    let out_dir = stage.output_dir(&layout);
    if is_non_empty(&out_dir) {
        if !force {
            return Err(Precondition(format!(
                "{} already exists and is not empty; pass --force to overwrite",
                out_dir.display()
            ))
            .into());
        }
        std::fs::remove_dir_all(&out_dir).with_context(|| format!("clearing {}", out_dir.display()))?;
    }
    let started = Instant::now();
    let outputs = match stage {
        Stage::GenData => gen_data(cfg, &layout)?,
        Stage::TrainGcgan => train_gcgan(cfg, &layout)?,
        Stage::Convert => convert(cfg, &layout)?,
        Stage::Assemble => assemble(cfg, &layout)?,
        Stage::TrainDetector(v) => train_detector(cfg, &layout, v)?,
        Stage::Evaluate => evaluate_stage(&layout)?,
        Stage::Explain => explain(cfg, &layout)?,
        Stage::Report => vec![report::write_report(&layout, &record)?],
    };
    let artifacts = outputs
        .iter()
        .map(|p| {
            Ok(Artifact {
                path: layout.rel(p).to_path_buf(),
                sha256: hash_path(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let entry = StageEntry {
        stage: stage.name(),
        config_sha256: config_hash(cfg),
        wall_clock_s: started.elapsed().as_secs_f64(),
        artifacts,
    };
    record.append(cfg.to_toml(), entry.clone());
    record.save(&layout.root)?;
    Ok(entry)
}

/// Hash of the configuration with the output location blanked, so that two
/// roots with the same settings compare equal.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    let mut c = cfg.clone();
    c.output_root = PathBuf::new();
    crate::record::sha256_hex(c.to_toml().as_bytes())
}

fn is_non_empty(dir: &Path) -> bool {
    std::fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn check_upstream(layout: &Layout, record: &RunRecord, stage: Stage) -> Result<()> {
    let mut missing = Vec::new();
    for up in stage.upstream() {
        match record.latest(&up.name()) {
            None => missing.push(format!("stage {} has not run", up.name())),
            Some(entry) => {
                for a in &entry.artifacts {
                    if !layout.root.join(&a.path).exists() {
                        missing.push(format!("{} (from {})", a.path.display(), up.name()));
                    }
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Precondition(format!("{} needs: {}", stage.name(), missing.join("; "))).into())
    }
}

/// The pools rendered by `gen-data`, in generation order.
pub fn pool_specs(cfg: &PipelineConfig) -> Vec<PoolSpec> {
    let s = &cfg.scene;
    let spec = |name: &str, n: usize, domain: Domain, split: Split| PoolSpec {
        name: name.into(),
        n,
        domain,
        split,
        sampler: match domain.label() {
            Label::Normal => s.normal_angles.clone(),
            Label::Anomaly => s.anomaly_angles.clone(),
        },
        seed: seeds::named(cfg.seed, &format!("pool/{name}")),
        size: (s.image_size, s.image_size),
        geometry: s.geometry.clone(),
        rule: s.rule,
    };
    vec![
        spec(POOL_NORMAL_TRAIN, cfg.sizes.normal_train, Domain::PseudorealNormal, Split::Train),
        spec(POOL_NORMAL_TEST, cfg.sizes.normal_test, Domain::PseudorealNormal, Split::Test),
        spec(POOL_CG_ANOMALY, cfg.sizes.cg_anomaly, Domain::CgAnomaly, Split::Train),
        spec(POOL_ANOMALY_TEST, cfg.sizes.anomaly_test, Domain::PseudorealAnomaly, Split::Test),
    ]
}

/// Manifest a pool will have once rendered: ids `<name>_<k:04>`.
pub fn planned_manifest(pool: &PoolSpec) -> DatasetManifest {
    let entries = (0..pool.n)
        .map(|k| ManifestEntry::new(format!("{}_{k:04}", pool.name), pool.domain, pool.split))
        .collect();
    DatasetManifest::new(entries).expect("pool ids are unique")
}

/// Manifest `convert` will write for `n` translated images.
pub fn planned_converted_manifest(n: usize) -> DatasetManifest {
    let entries = (0..n)
        .map(|k| ManifestEntry::new(format!("{CONVERTED_PREFIX}_{k:04}"), Domain::ConvertedAnomaly, Split::Train))
        .collect();
    DatasetManifest::new(entries).expect("converted ids are unique")
}

/// Training and test sets of both detector variants.
#[derive(Clone, Debug, PartialEq)]
pub struct AssembledSets {
    pub train: BTreeMap<Variant, DatasetManifest>,
    pub test: DatasetManifest,
}

/// Both variants share the normal training images and differ only in the
/// anomaly source; the test set joins the held-out normal and anomaly pools.
pub fn assemble_sets(
    normal_train: &DatasetManifest,
    cg_anomaly: &DatasetManifest,
    converted: &DatasetManifest,
    normal_test: &DatasetManifest,
    anomaly_test: &DatasetManifest,
) -> Result<AssembledSets> {
    let train = BTreeMap::from([
        (Variant::Cg, DatasetManifest::concat([normal_train, cg_anomaly])?),
        (Variant::Gcgan, DatasetManifest::concat([normal_train, converted])?),
    ]);
    let test = DatasetManifest::concat([normal_test, anomaly_test])?;
    Ok(AssembledSets { train, test })
}

fn gen_data(cfg: &PipelineConfig, l: &Layout) -> Result<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    for pool in pool_specs(cfg) {
        eprintln!("rendering {} ({} images)", pool.name, pool.n);
        let generated = sample_dataset(&pool, &l.pool_images(&pool.name), &l.pool_masks(&pool.name))?;
        generated.manifest.write_csv(l.pool_manifest(&pool.name))?;
        write_scenes_csv(&generated.scenes, &l.pool_scenes(&pool.name))?;
        outputs.extend([
            l.pool_manifest(&pool.name),
            l.pool_scenes(&pool.name),
            l.pool_images(&pool.name),
            l.pool_masks(&pool.name),
        ]);
    }
    Ok(outputs)
}

fn load_pool_images(l: &Layout, manifest: &DatasetManifest, size: Option<usize>) -> Result<Vec<ImageTensor>> {
    manifest
        .entries()
        .iter()
        .map(|e| {
            let path = l.image_path(&e.image_id, e.domain, e.split)?;
            let img = load_image(&path)?.to_rgb();
            Ok(match size {
                Some(s) => resize(&img, s, s)?,
                None => img,
            })
        })
        .collect()
}

fn train_gcgan(cfg: &PipelineConfig, l: &Layout) -> Result<Vec<PathBuf>> {
    let size = Some(cfg.gcgan.input_size);
    let source = load_pool_images(l, &DatasetManifest::read_csv(l.pool_manifest(POOL_CG_ANOMALY))?, size)?;
    let target = load_pool_images(l, &DatasetManifest::read_csv(l.pool_manifest(POOL_NORMAL_TRAIN))?, size)?;
    let ckpt_dir = l.gcgan().join("checkpoints");
    let started = Instant::now();
    let outcome = gcgan::train(&cfg.gcgan, &source, &target, Some(&ckpt_dir), |e| {
        eprintln!(
            "gcgan epoch {:>4}  adv_G {:.4}  adv_D {:.4}  gc {:.4}  idt {:.4}  lr {:.2e}  [{:.0}s]",
            e.epoch + 1,
            e.adv_g,
            e.adv_d,
            e.gc,
            e.idt,
            e.lr,
            started.elapsed().as_secs_f64()
        );
    })?;
    save_generator(&l.generator(), &outcome.generator, &cfg.gcgan)?;
    let log = l.gcgan().join("loss_log.csv");
    write_loss_log(&outcome.state.history, &log)?;
    let selection = l.gcgan().join("selection.json");
    std::fs::write(
        &selection,
        serde_json::to_string_pretty(&serde_json::json!({
            "selected_epoch": outcome.state.best_epoch,
            "criterion": "lowest held-out gc + idt",
            "history": outcome.state.history,
        }))?,
    )?;
    Ok(vec![l.generator(), log, selection, ckpt_dir])
}

/// Geometry and style statistics of the translated set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversionStats {
    pub n: usize,
    /// Tolerance for counting an angle as preserved, degrees.
    pub tolerance_deg: f64,
    pub preserved: usize,
    pub preserved_fraction: f64,
    /// Outputs on which no lever could be measured.
    pub undetected: usize,
    pub median_error_deg: Option<f64>,
    pub histogram_bins: usize,
    /// Mean histogram distance of translated images to the pseudo-real
    /// reference (held-out normal test pool).
    pub converted_hist_distance: f64,
    /// Same for the untranslated rendered sources.
    pub raw_cg_hist_distance: f64,
}

#[derive(Serialize)]
struct AngleRow<'a> {
    image_id: &'a str,
    source_id: &'a str,
    expected_angle: f64,
    measured_angle: Option<f64>,
    error_deg: Option<f64>,
}

pub const PRESERVATION_TOLERANCE_DEG: f64 = 10.0;

fn convert(cfg: &PipelineConfig, l: &Layout) -> Result<Vec<PathBuf>> {
    let (g, gcfg) = load_generator(&l.generator())?;
    let sources = DatasetManifest::read_csv(l.pool_manifest(POOL_CG_ANOMALY))?;
    let source_ids: Vec<String> = sources.entries().iter().map(|e| e.image_id.clone()).collect();
    let cg_dir = l.pool_images(POOL_CG_ANOMALY);
    let out_dir = l.converted_images();
    std::fs::create_dir_all(&out_dir)?;
    let mut outputs: Vec<ImageTensor> = Vec::new();
    let records = gcgan::convert(
        &g,
        &source_ids,
        cfg.sizes.converted_anomaly,
        CONVERTED_PREFIX,
        gcfg.batch_size.max(8),
        |id| {
            let img = load_image(cg_dir.join(format!("{id}.png")))?.to_rgb();
            Ok(resize(&img, gcfg.input_size, gcfg.input_size)?)
        },
        |r, img| {
            save_image(img, out_dir.join(format!("{}.png", r.image_id)))?;
            outputs.push(img.clone());
            Ok(())
        },
    )?;
    let manifest = planned_converted_manifest(records.len());
    manifest.write_csv(l.converted_manifest())?;
    let table = l.converted().join("conversion.csv");
    write_csv(&table, &records)?;

    let scenes: BTreeMap<String, f64> = read_scenes_csv(&l.pool_scenes(POOL_CG_ANOMALY))?
        .into_iter()
        .map(|s| (s.image_id, s.lever_angle))
        .collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut preserved = 0;
    for (r, img) in records.iter().zip(&outputs) {
        let angle = scenes[&r.source_id];
        let expected = if r.transform == GeoTransform::Vflip { -angle } else { angle };
        let measured = estimate_lever_angle(img).ok();
        let error = measured.map(|m| axial_distance(m, expected));
        if let Some(e) = error {
            errors.push(e);
            if e <= PRESERVATION_TOLERANCE_DEG {
                preserved += 1;
            }
        }
        rows.push(AngleRow {
            image_id: &r.image_id,
            source_id: &r.source_id,
            expected_angle: expected,
            measured_angle: measured,
            error_deg: error,
        });
    }
    let angles = l.converted().join("angles.csv");
    write_csv(&angles, &rows)?;

    let reference_set = load_pool_images(l, &DatasetManifest::read_csv(l.pool_manifest(POOL_NORMAL_TEST))?, None)?;
    let reference = ChannelHistograms::of_images(&reference_set, DEFAULT_HISTOGRAM_BINS)?;
    let raw = load_pool_images(l, &sources, None)?;
    let mean_distance = |set: &[ImageTensor]| -> Result<f64> {
        let total = set.iter().map(|img| histogram_distance(img, &reference)).sum::<Result<f64, _>>()?;
        Ok(total / set.len() as f64)
    };
    let stats = ConversionStats {
        n: records.len(),
        tolerance_deg: PRESERVATION_TOLERANCE_DEG,
        preserved,
        preserved_fraction: preserved as f64 / records.len() as f64,
        undetected: records.len() - errors.len(),
        median_error_deg: median(&errors),
        histogram_bins: DEFAULT_HISTOGRAM_BINS,
        converted_hist_distance: mean_distance(&outputs)?,
        raw_cg_hist_distance: mean_distance(&raw)?,
    };
    write_json(&l.converted_stats(), &stats)?;
    Ok(vec![l.converted_manifest(), table, angles, l.converted_stats(), out_dir])
}

fn assemble(cfg: &PipelineConfig, l: &Layout) -> Result<Vec<PathBuf>> {
    let read = |p: PathBuf| DatasetManifest::read_csv(&p).with_context(|| format!("reading {}", p.display()));
    let converted = read(l.converted_manifest())?;
    if converted.len() != cfg.sizes.converted_anomaly {
        eprintln!(
            "note: converted set has {} images, config asks for {}",
            converted.len(),
            cfg.sizes.converted_anomaly
        );
    }
    let sets = assemble_sets(
        &read(l.pool_manifest(POOL_NORMAL_TRAIN))?,
        &read(l.pool_manifest(POOL_CG_ANOMALY))?,
        &converted,
        &read(l.pool_manifest(POOL_NORMAL_TEST))?,
        &read(l.pool_manifest(POOL_ANOMALY_TEST))?,
    )?;
    let mut outputs = Vec::new();
    for (v, m) in &sets.train {
        m.write_csv(l.train_manifest(v.name()))?;
        outputs.push(l.train_manifest(v.name()));
    }
    sets.test.write_csv(l.test_manifest())?;
    outputs.push(l.test_manifest());
    Ok(outputs)
}

fn labeled(l: &Layout, manifest: &DatasetManifest) -> Result<Vec<LabeledImage>> {
    manifest
        .entries()
        .iter()
        .map(|e| {
            let path = l.image_path(&e.image_id, e.domain, e.split)?;
            Ok(LabeledImage {
                image_id: e.image_id.clone(),
                image: load_image(&path).with_context(|| format!("loading {}", path.display()))?.to_rgb(),
                label: e.label,
            })
        })
        .collect()
}

fn train_detector(cfg: &PipelineConfig, l: &Layout, v: Variant) -> Result<Vec<PathBuf>> {
    let manifest = DatasetManifest::read_csv(l.train_manifest(v.name()))?;
    let samples = labeled(l, &manifest)?;
    let mut model = Classifier::build(&cfg.classifier)?;
    eprintln!("training {} detector on {} images", v.name(), samples.len());
    let curve = classifier::train(&mut model, &samples)?;
    model.save(&l.detector_model(v.name()))?;
    let log = l.detector(v.name()).join("loss.csv");
    let mut text = String::from("epoch,loss\n");
    for (e, loss) in curve.iter().enumerate() {
        text.push_str(&format!("{e},{loss}\n"));
    }
    std::fs::write(&log, text)?;
    Ok(vec![l.detector_model(v.name()), log])
}

/// Grad-CAM summary for one detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusSummary {
    pub median_focus_fraction: Option<f64>,
    pub per_image: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusReport {
    /// Target class of every map.
    pub target_class: Label,
    pub image_ids: Vec<String>,
    /// Median share of the image covered by the lever, the focus a uniform
    /// map would score.
    pub median_lever_area_fraction: Option<f64>,
    pub variants: BTreeMap<Variant, FocusSummary>,
}

/// Evaluation JSON: both detectors on the same test set, plus the
/// Grad-CAM focus results once `explain` has run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub test_manifest_sha256: String,
    pub n_normal: usize,
    pub n_anomaly: usize,
    pub variants: BTreeMap<Variant, EvalMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<FocusReport>,
}

impl EvaluationReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn evaluate_stage(l: &Layout) -> Result<Vec<PathBuf>> {
    let test = DatasetManifest::read_csv(l.test_manifest())?;
    let samples = labeled(l, &test)?;
    let mut variants = BTreeMap::new();
    for v in Variant::ALL {
        let model = Classifier::load(&l.detector_model(v.name()))?;
        let m = evaluate(&model, &samples)?;
        eprintln!("{} detector: AUC {:?}", v.name(), m.auc);
        variants.insert(v, m);
    }
    let report = EvaluationReport {
        test_manifest_sha256: hash_path(&l.test_manifest())?,
        n_normal: test.count_where(|e| e.label == Label::Normal),
        n_anomaly: test.count_where(|e| e.label == Label::Anomaly),
        variants,
        focus: None,
    };
    write_json(&l.metrics(), &report)?;
    Ok(vec![l.metrics()])
}

fn load_mask(path: &Path) -> Result<LeverMask> {
    let img = load_image(path)?.to_gray();
    let data = img.pixels().iter().map(|&v| v > 0.5).collect();
    Ok(LeverMask::new(img.height(), img.width(), data))
}

fn explain(cfg: &PipelineConfig, l: &Layout) -> Result<Vec<PathBuf>> {
    let test = DatasetManifest::read_csv(l.test_manifest())?;
    let chosen: Vec<ManifestEntry> = test
        .entries()
        .iter()
        .filter(|e| e.domain == Domain::PseudorealAnomaly)
        .take(cfg.explain.images)
        .cloned()
        .collect();
    if chosen.is_empty() {
        return Err(anyhow!("test set has no anomaly images to explain"));
    }
    let overlays = l.explain().join("overlays");
    std::fs::create_dir_all(&overlays)?;
    let mut areas = Vec::new();
    let mut images = Vec::new();
    for e in &chosen {
        let img = load_image(l.image_path(&e.image_id, e.domain, e.split)?)?.to_rgb();
        let mask = load_mask(&l.pool_masks(POOL_ANOMALY_TEST).join(format!("{}.png", e.image_id)))?;
        areas.push(mask.area_fraction());
        images.push((e.image_id.clone(), img, mask));
    }
    let mut variants = BTreeMap::new();
    for v in Variant::ALL {
        let model = Classifier::load(&l.detector_model(v.name()))?;
        let mut per_image = BTreeMap::new();
        for (id, img, mask) in &images {
            let map = gradcam(&model, id, img, Label::Anomaly)?;
            let blended = overlay(img, &map, cfg.explain.overlay_alpha)?;
            save_image(&blended, overlays.join(format!("{id}.{}.gradcam.png", v.name())))?;
            per_image.insert(id.clone(), focus_fraction(&map, mask)?);
        }
        let values: Vec<f64> = per_image.values().copied().collect();
        variants.insert(
            v,
            FocusSummary {
                median_focus_fraction: median(&values),
                per_image,
            },
        );
    }
    let focus = FocusReport {
        target_class: Label::Anomaly,
        image_ids: chosen.iter().map(|e| e.image_id.clone()).collect(),
        median_lever_area_fraction: median(&areas),
        variants,
    };
    let focus_path = l.explain().join("focus.json");
    write_json(&focus_path, &focus)?;
    let mut evaluation = EvaluationReport::load(&l.metrics())?;
    evaluation.focus = Some(focus);
    write_json(&l.metrics(), &evaluation)?;
    Ok(vec![focus_path, overlays, l.metrics()])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut text = Vec::new();
    {
        let mut w = csv_writer(&mut text);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}
