use std::path::Path;
use std::process::Command;

use anopipe_cli::config::OUTPUT_ROOT_ENV;
use anopipe_cli::record::RunRecord;
use anopipe_cli::stages::{assemble_sets, planned_converted_manifest, planned_manifest, pool_specs, EvaluationReport};
use anopipe_cli::{run_stage, Layout, PipelineConfig, Preset, Stage, Variant};
use anopipe_core::scenegen::sample_dataset;
use anopipe_core::{DatasetManifest, Domain, Label, Split};

fn anopipe(args: &[&str], root: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_anopipe"))
        .args(args)
        .env(OUTPUT_ROOT_ENV, root)
        .output()
        .expect("binary runs")
}

/// A run small enough for a test: 12-image pools at 32 px, two translator
/// epochs, one detector epoch.
fn tiny_config(root: &Path, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::preset(Preset::DeskScale).with_seed(seed);
    cfg.output_root = root.to_path_buf();
    cfg.scene.image_size = 32;
    cfg.sizes.normal_train = 12;
    cfg.sizes.normal_test = 8;
    cfg.sizes.cg_anomaly = 10;
    cfg.sizes.converted_anomaly = 14;
    cfg.sizes.anomaly_test = 8;
    cfg.gcgan.input_size = 32;
    cfg.gcgan.epochs_flat = 1;
    cfg.gcgan.epochs_decay = 1;
    cfg.gcgan.select_from_epoch = 1;
    cfg.gcgan.holdout_fraction = 0.2;
    cfg.classifier.input_size = 32;
    cfg.classifier.epochs = 1;
    cfg.classifier.batch_size = 8;
    cfg.explain.images = 3;
    cfg
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> std::path::PathBuf {
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn presets_have_the_documented_sizes() {
    let desk = PipelineConfig::preset(Preset::DeskScale);
    let s = &desk.sizes;
    assert_eq!((s.normal_train, s.normal_test, s.cg_anomaly, s.anomaly_test), (200, 200, 200, 200));
    assert_eq!((desk.scene.image_size, desk.gcgan.input_size, desk.classifier.input_size), (64, 64, 64));
    assert_eq!((desk.gcgan.epochs_flat, desk.gcgan.epochs_decay, desk.classifier.epochs), (30, 30, 10));
    let paper = PipelineConfig::preset(Preset::PaperFaithful);
    let s = &paper.sizes;
    assert_eq!((s.normal_train, s.normal_test, s.cg_anomaly), (600, 600, 600));
    assert_eq!((paper.gcgan.input_size, paper.gcgan.batch_size, paper.gcgan.lambda_idt), (200, 12, 0.5));
    assert_eq!((paper.gcgan.epochs_flat, paper.gcgan.epochs_decay), (400, 200));
    assert_eq!(paper.classifier.input_size, 224);
    assert!(!paper.gcgan.dropout_enabled);
}

#[test]
fn config_files_overlay_presets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "preset = \"paper_faithful\"\nseed = 9\n[sizes]\nanomaly_test = 50\n[gcgan]\nlambda_gc = 5.0\n").unwrap();
    let cfg = PipelineConfig::resolve(Some(&path), None, None).unwrap();
    assert_eq!(cfg.preset, Preset::PaperFaithful);
    assert_eq!((cfg.seed, cfg.sizes.anomaly_test, cfg.sizes.normal_train, cfg.gcgan.lambda_gc), (9, 50, 600, 5.0));
    let cfg = PipelineConfig::resolve(Some(&path), Some(Preset::DeskScale), Some(3)).unwrap();
    assert_eq!((cfg.preset, cfg.seed, cfg.sizes.normal_train, cfg.sizes.anomaly_test), (Preset::DeskScale, 3, 200, 50));
    assert_eq!(cfg, PipelineConfig::resolve(Some(&path), Some(Preset::DeskScale), Some(3)).unwrap());
    assert_ne!(cfg.gcgan.seed, PipelineConfig::resolve(Some(&path), Some(Preset::DeskScale), Some(4)).unwrap().gcgan.seed);

    let roundtrip = dir.path().join("r.toml");
    std::fs::write(&roundtrip, cfg.to_toml()).unwrap();
    assert_eq!(PipelineConfig::resolve(Some(&roundtrip), None, None).unwrap(), cfg);

    std::fs::write(&path, "[gcgan]\nlamda_gc = 5.0\n").unwrap();
    let err = PipelineConfig::resolve(Some(&path), None, None).unwrap_err();
    assert!(err.downcast_ref::<anopipe_cli::Precondition>().is_some());
    std::fs::write(&path, "[gcgan]\ngc_transform = \"identity\"\n").unwrap();
    assert!(PipelineConfig::resolve(Some(&path), None, None).is_err());
}

#[test]
fn planned_manifests_match_rendered_pools() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 2);
    for mut pool in pool_specs(&cfg) {
        pool.n = 3;
        let generated = sample_dataset(&pool, &dir.path().join("i"), &dir.path().join("m")).unwrap();
        assert_eq!(generated.manifest, planned_manifest(&pool));
    }
}

#[test]
fn assembled_sets_follow_the_two_training_recipes() {
    let cfg = PipelineConfig::preset(Preset::DeskScale);
    let pools: Vec<DatasetManifest> = pool_specs(&cfg).iter().map(planned_manifest).collect();
    let sets = assemble_sets(&pools[0], &pools[2], &planned_converted_manifest(200), &pools[1], &pools[3]).unwrap();
    let cg = &sets.train[&Variant::Cg];
    assert_eq!(cg.count_where(|e| e.domain == Domain::PseudorealNormal && e.split == Split::Train), 200);
    assert_eq!(cg.count_where(|e| e.domain == Domain::CgAnomaly), 200);
    let gc = &sets.train[&Variant::Gcgan];
    assert_eq!(gc.count_where(|e| e.domain == Domain::ConvertedAnomaly), 200);
    assert_eq!(gc.count_where(|e| e.label == Label::Normal), 200);
    assert_eq!(sets.test.count_where(|e| e.split == Split::Test), 400);
    assert_eq!(sets.test.count_where(|e| e.domain == Domain::PseudorealAnomaly), 200);
    // A duplicated pool is rejected.
    assert!(assemble_sets(&pools[0], &pools[0], &pools[2], &pools[1], &pools[3]).is_err());
}

#[test]
fn exit_codes_and_preconditions() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("out");
    let cfg = write_config(dir.path(), &tiny_config(&root, 1));

    let out = anopipe(&["convert", "--config", cfg.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("gen-data") && msg.contains("train-gcgan"), "{msg}");

    let out = anopipe(&["report", "--config", cfg.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-detector:gcgan"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[sizes]\nnormal_train = -1\n").unwrap();
    assert_eq!(anopipe(&["gen-data", "--config", bad.to_str().unwrap()], &root).status.code(), Some(2));
    assert_eq!(anopipe(&["gen-data", "--config", "/nonexistent.toml"], &root).status.code(), Some(2));

    let out = anopipe(&["gen-data", "--config", cfg.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("pools/cg_anomaly/images/cg_anomaly_0009.png").exists());
    let out = anopipe(&["gen-data", "--config", cfg.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    assert_eq!(anopipe(&["gen-data", "--force", "--config", cfg.to_str().unwrap()], &root).status.code(), Some(0));

    // A recorded but unreadable generator is an internal error.
    let mut record = RunRecord::load(&root).unwrap();
    std::fs::create_dir_all(root.join("gcgan")).unwrap();
    std::fs::write(root.join("gcgan/generator.ckpt"), b"not a checkpoint").unwrap();
    record.append(
        String::new(),
        anopipe_cli::record::StageEntry {
            stage: "train-gcgan".into(),
            config_sha256: String::new(),
            wall_clock_s: 0.0,
            artifacts: vec![anopipe_cli::record::Artifact {
                path: "gcgan/generator.ckpt".into(),
                sha256: String::new(),
            }],
        },
    );
    record.save(&root).unwrap();
    let out = anopipe(&["convert", "--config", cfg.to_str().unwrap()], &root);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(anopipe(&["no-such-stage"], &root).status.code(), Some(2));
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn tiny_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&dir.path().join("a"), 5);
    let layout = Layout::new(&cfg.output_root);
    for stage in Stage::ALL {
        run_stage(&cfg, stage, false).unwrap_or_else(|e| panic!("{}: {e:#}", stage.name()));
    }
    let record = RunRecord::load(&layout.root).unwrap();
    assert_eq!(record.stages.len(), Stage::ALL.len());
    for e in &record.stages {
        for a in &e.artifacts {
            assert!(layout.root.join(&a.path).exists(), "{}", a.path.display());
        }
    }

    // Provenance: every training image exists in the directory of its domain.
    for v in Variant::ALL {
        let m = DatasetManifest::read_csv(layout.train_manifest(v.name())).unwrap();
        assert_eq!(m.len(), 12 + if v == Variant::Cg { 10 } else { 14 });
        for e in m.entries() {
            assert!(layout.image_path(&e.image_id, e.domain, e.split).unwrap().exists());
            assert!(e.image_id.starts_with(match e.domain {
                Domain::PseudorealNormal => "pseudoreal_normal_train",
                Domain::CgAnomaly => "cg_anomaly",
                Domain::ConvertedAnomaly => "converted_anomaly",
                other => panic!("unexpected training domain {other}"),
            }));
        }
    }
    // Fourteen outputs from ten sources: the second pass is flipped.
    assert_eq!(std::fs::read_dir(layout.converted_images()).unwrap().count(), 14);
    let table = std::fs::read_to_string(layout.converted().join("conversion.csv")).unwrap();
    assert!(table.contains("converted_anomaly_0010,cg_anomaly_0000,vflip"));

    // Report: two model rows whose AUCs are the evaluation values.
    let html = std::fs::read_to_string(layout.report()).unwrap();
    assert_eq!(html.matches("<tr class=\"model\">").count(), 2);
    let eval = EvaluationReport::load(&layout.metrics()).unwrap();
    let shown: Vec<f64> = html
        .split("<td class=\"auc\">")
        .skip(1)
        .map(|s| s[..s.find('<').unwrap()].parse().unwrap())
        .collect();
    let stored: Vec<f64> = eval.variants.values().map(|m| m.auc.unwrap()).collect();
    assert_eq!(shown, stored);
    let focus = eval.focus.as_ref().unwrap();
    assert_eq!(focus.image_ids.len(), 3);
    for v in Variant::ALL {
        for id in &focus.image_ids {
            assert!(layout.explain().join(format!("overlays/{id}.{}.gradcam.png", v.name())).exists());
        }
    }

    // Regenerating the report from unchanged artifacts is byte-identical.
    let before = read(layout.report());
    run_stage(&cfg, Stage::Report, true).unwrap();
    assert_eq!(before, read(layout.report()));

    // Re-evaluating the same models on the same test set gives the same JSON.
    let metrics_before = read(layout.metrics());
    run_stage(&cfg, Stage::Evaluate, true).unwrap();
    run_stage(&cfg, Stage::Explain, true).unwrap();
    assert_eq!(metrics_before, read(layout.metrics()));

    // Rerunning a stage with --force reproduces its hashes; the record grows.
    let first = RunRecord::load(&layout.root).unwrap().latest("gen-data").unwrap().clone();
    let again = run_stage(&cfg, Stage::GenData, true).unwrap();
    assert_eq!(first.artifacts, again.artifacts);
    assert_eq!(RunRecord::load(&layout.root).unwrap().stages.len(), Stage::ALL.len() + 4);

    // A second root with the same seed reaches the same translator.
    let cfg_b = PipelineConfig {
        output_root: dir.path().join("b"),
        ..cfg.clone()
    };
    run_stage(&cfg_b, Stage::GenData, false).unwrap();
    let b = run_stage(&cfg_b, Stage::TrainGcgan, false).unwrap();
    let a = RunRecord::load(&layout.root).unwrap().latest("train-gcgan").unwrap().clone();
    assert_eq!(a.artifacts, b.artifacts);
}
