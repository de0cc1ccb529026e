use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::{images_to_batch, Tape, Tensor};

fn img8(seed: u64, hi: f64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::from_fn(8, 8, 3, |_, _, _| rng.random_range(0.0..hi)).unwrap()
}

#[test]
fn adversarial_examples() {
    use AdversarialRole::*;
    assert_eq!(adversarial_loss(&[1.0; 4], &[0.0; 4], Discriminator), 0.0);
    assert_eq!(adversarial_loss(&[], &[1.0; 9], Generator), 0.0);
    assert_eq!(adversarial_loss(&[0.5], &[0.5], Discriminator), 0.5);
    assert_eq!(adversarial_loss(&[], &[0.0, 2.0], Generator), 1.0);
}

#[test]
fn gc_loss_zero_for_identity_and_pointwise_maps() {
    let x = vec![img8(1, 0.5), img8(2, 0.5)];
    for t in GeoTransform::ALL {
        assert_eq!(geometry_consistency_loss(|i| i.clone(), &x, t), 0.0);
        assert_eq!(geometry_consistency_loss(|i| i.map(|v| (v + 0.1).min(1.0)), &x, t), 0.0);
    }
}

#[test]
fn gc_loss_overlay_oracle() {
    // Overlay constant within each row: r(i) = 0.1 i / (H - 1). Under vflip
    // the loss is mean_i |r(i) - r(H-1-i)|, independent of x.
    let x = vec![img8(3, 0.5)];
    let overlay = |img: &ImageTensor| {
        let h = img.height();
        ImageTensor::from_fn(h, img.width(), 3, |y, xx, c| img.get(y, xx, c) + 0.1 * y as f64 / (h - 1) as f64).unwrap()
    };
    let expected: f64 = (0..8).map(|i| (0.1 * i as f64 / 7.0 - 0.1 * (7 - i) as f64 / 7.0).abs()).sum::<f64>() / 8.0;
    let got = geometry_consistency_loss(overlay, &x, GeoTransform::Vflip);
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    // A column-wise overlay commutes with vflip.
    let col = |img: &ImageTensor| ImageTensor::from_fn(8, 8, 3, |y, xx, c| img.get(y, xx, c) + 0.05 * xx as f64 / 7.0).unwrap();
    assert!(geometry_consistency_loss(col, &x, GeoTransform::Vflip) < 1e-15);

    // Literal 4x4 case on the tensor ops: rows 0..3 get 0, 1/30, 2/30, 3/30,
    // so the loss is (0.1 + 1/30 + 1/30 + 0.1) / 4 = 1/15.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tape = Tape::<f64>::new();
    let xv: Vec<f64> = (0..48).map(|_| rng.random_range(0.0..0.5)).collect();
    let ramp: Vec<f64> = (0..48).map(|k| 0.1 * ((k / 4) % 4) as f64 / 3.0).collect();
    let x = tape.constant(Tensor::from_f64([1, 3, 4, 4], &xv));
    let r = tape.constant(Tensor::from_f64([1, 3, 4, 4], &ramp));
    let tx = tape.spatial(x, GeoTransform::Vflip);
    let g_tx = tape.add(tx, r);
    let gx = tape.add(x, r);
    let t_gx = tape.spatial(gx, GeoTransform::Vflip);
    let l = tape.mean_abs_diff(g_tx, t_gx);
    assert!((tape.value(l).item() - 1.0 / 15.0).abs() < 1e-15);
}

#[test]
fn identity_loss_examples() {
    let y = vec![ImageTensor::filled(8, 8, 3, 1.0).unwrap()];
    assert_eq!(identity_mapping_loss(|i| i.clone(), &y), 0.0);
    assert_eq!(identity_mapping_loss(|i| i.map(|_| 0.5), &y), 0.5);

    let g = Generator::<f32>::new(GeneratorArch::micro(), &mut ChaCha8Rng::seed_from_u64(5));
    let y = vec![img8(6, 1.0)];
    let out = g.translate(&y, 1).remove(0);
    let mut brute = 0.0;
    for r in 0..8 {
        for c in 0..8 {
            for ch in 0..3 {
                brute += (out.get(r, c, ch) - y[0].get(r, c, ch)).abs();
            }
        }
    }
    brute /= 192.0;
    let got = identity_mapping_loss(|i| g.translate(std::slice::from_ref(i), 1).remove(0), &y);
    assert!((got - brute).abs() < 1e-12);
}

proptest! {
    #[test]
    fn gc_loss_vanishes_for_random_pointwise_maps(a in -1.0f64..1.0, b in -0.5f64..0.5, gamma in 0.3f64..3.0, seed in 0u64..1000) {
        let x = vec![img8(seed, 1.0)];
        let g = |img: &ImageTensor| img.map(|v| a * v.powf(gamma) + b);
        for t in GeoTransform::ALL {
            prop_assert_eq!(geometry_consistency_loss(g, &x, t), 0.0);
        }
    }

    #[test]
    fn losses_are_non_negative(seed in 0u64..1000, r in proptest::collection::vec(-3.0f64..3.0, 6), f in proptest::collection::vec(-3.0f64..3.0, 6)) {
        prop_assert!(adversarial_loss(&r, &f, AdversarialRole::Discriminator) >= 0.0);
        prop_assert!(adversarial_loss(&r, &f, AdversarialRole::Generator) >= 0.0);
        let x = vec![img8(seed, 1.0)];
        let g = |img: &ImageTensor| apply_transform(img, GeoTransform::Rot90);
        prop_assert!(geometry_consistency_loss(g, &x, GeoTransform::Vflip) >= 0.0);
        prop_assert!(identity_mapping_loss(g, &x) >= 0.0);
    }
}

#[test]
fn lr_schedule() {
    let cfg = GcganConfig::default();
    assert_eq!(lr_at(0, &cfg).unwrap(), 2e-4);
    assert_eq!(lr_at(399, &cfg).unwrap(), 2e-4);
    assert!((lr_at(499, &cfg).unwrap() - 1e-4).abs() < 1e-18);
    assert!(lr_at(599, &cfg).unwrap().abs() <= 1e-12);
    assert!(matches!(lr_at(600, &cfg), Err(GcganError::EpochOutOfRange { .. })));
    let mut prev = f64::INFINITY;
    for e in 400..600 {
        let lr = lr_at(e, &cfg).unwrap();
        assert!(lr <= prev);
        prev = lr;
    }
    let desk = GcganConfig::desk();
    assert!(lr_at(desk.total_epochs() - 1, &desk).unwrap().abs() <= 1e-12);
}

#[test]
fn config_validation() {
    assert!(GcganConfig::default().validate().is_ok());
    assert!(GcganConfig::desk().validate().is_ok());
    let bad = [
        GcganConfig { gc_transform: GeoTransform::Identity, ..GcganConfig::desk() },
        GcganConfig { epochs_flat: 0, epochs_decay: 0, ..GcganConfig::desk() },
        GcganConfig { lambda_gc: -1.0, ..GcganConfig::desk() },
        GcganConfig { base_lr: 0.0, ..GcganConfig::desk() },
        GcganConfig { input_size: 66, ..GcganConfig::desk() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err());
    }
}

#[test]
fn network_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let micro = Generator::<f64>::new(GeneratorArch::micro(), &mut rng);
    assert!(micro.num_parameters() <= 500, "{}", micro.num_parameters());
    let g = Generator::<f32>::new(GeneratorArch::desk(), &mut rng);
    let d = Discriminator::<f32>::new(DiscriminatorArch::desk(), &mut rng);
    let imgs = vec![img8(1, 1.0); 1];
    let big = vec![ImageTensor::from_fn(64, 64, 3, |y, x, _| ((x + y) % 7) as f64 / 7.0).unwrap()];
    let out = g.translate(&big, 1);
    assert_eq!(out[0].dims(), (64, 64, 3));
    assert_eq!(micro.translate(&imgs, 1)[0].dims(), (8, 8, 3));
    let mut tape = Tape::<f32>::new();
    let p = d.store.bind(&mut tape, false);
    let x = tape.constant(images_to_batch(&[&big[0]]));
    let s = d.forward(&mut tape, &p, x);
    assert_eq!(tape.shape(s), &[1, 1, 14, 14]);
}

/// Total generator objective of the micro model at the current weights.
fn micro_objective(g: &Generator<f64>, d: &Discriminator<f64>, x: &Tensor<f64>, y: &Tensor<f64>, cfg: &GcganConfig) -> f64 {
    let mut tape = Tape::new();
    let pg = g.store.bind(&mut tape, false);
    let pd = d.store.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let parts = generator_objective(&mut tape, g, &pg, d, &pd, xv, yv, cfg, None);
    tape.value(parts.total).item()
}

#[test]
fn micro_generator_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = GcganConfig {
        generator: GeneratorArch::micro(),
        discriminator: DiscriminatorArch::micro(),
        ..GcganConfig::default()
    };
    let mut g = Generator::<f64>::new(cfg.generator.clone(), &mut rng);
    // Larger weights than the training init so every path carries signal.
    for t in g.store.values_mut() {
        for v in t.data_mut() {
            *v *= 20.0;
        }
    }
    let d = Discriminator::<f64>::new(cfg.discriminator.clone(), &mut rng);
    let x = images_to_batch::<f64>(&[&img8(20, 1.0), &img8(21, 1.0)]);
    let y = images_to_batch::<f64>(&[&img8(22, 1.0), &img8(23, 1.0)]);

    let mut tape = Tape::new();
    let pg = g.store.bind(&mut tape, true);
    let pd = d.store.bind(&mut tape, false);
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let parts = generator_objective(&mut tape, &g, &pg, &d, &pd, xv, yv, &cfg, None);
    let analytic = pg.grads(&tape.backward(parts.total));
    drop(pg);

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let pi = rng.random_range(0..g.store.len());
        let n = g.store.iter().nth(pi).unwrap().1.len();
        let k = rng.random_range(0..n);
        let a = analytic[pi].as_ref().map_or(0.0, |t| t.data()[k]);
        let id = crate::nn::ParamId::from_index(pi);
        let orig = g.store.get(id).data()[k];
        g.store.get_mut(id).data_mut()[k] = orig + h;
        let up = micro_objective(&g, &d, &x, &y, &cfg);
        g.store.get_mut(id).data_mut()[k] = orig - h;
        let down = micro_objective(&g, &d, &x, &y, &cfg);
        g.store.get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / (a.abs().max(numeric.abs()) + 1e-8);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-3, "worst relative error {worst}");
}

fn small_cfg(seed: u64) -> GcganConfig {
    GcganConfig {
        input_size: 16,
        batch_size: 3,
        epochs_flat: 1,
        epochs_decay: 1,
        seed,
        generator: GeneratorArch { ngf: 2, n_downsample: 1, n_blocks: 1, outer_kernel: 3 },
        discriminator: DiscriminatorArch::micro(),
        select_from_epoch: 0,
        holdout_fraction: 0.25,
        ..GcganConfig::default()
    }
}

fn set16(seed: u64, n: usize) -> Vec<ImageTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| ImageTensor::from_fn(16, 16, 3, |_, _, _| rng.random()).unwrap()).collect()
}

#[test]
fn training_bookkeeping_and_determinism() {
    let cfg = small_cfg(3);
    let (src, tgt) = (set16(1, 8), set16(2, 8));
    let dir = tempfile::tempdir().unwrap();
    let mut seen = 0;
    let a = train(&cfg, &src, &tgt, Some(dir.path()), |_| seen += 1).unwrap();
    assert_eq!(seen, 2);
    assert_eq!(a.state.history.len(), 2);
    for r in &a.state.history {
        assert_eq!(r.lr, lr_at(r.epoch, &cfg).unwrap());
        assert!(r.adv_g >= 0.0 && r.adv_d >= 0.0 && r.gc >= 0.0 && r.idt >= 0.0);
        assert!(r.holdout_score.is_some());
    }
    assert!(dir.path().join("epoch_0000.ckpt").exists() && dir.path().join("epoch_0001.ckpt").exists());
    let b = train(&cfg, &src, &tgt, None, |_| {}).unwrap();
    for ((_, x, _), (_, y, _)) in a.last_generator.store.iter().zip(b.last_generator.store.iter()) {
        assert_eq!(x, y);
    }
    let log = dir.path().join("loss_log.csv");
    write_loss_log(&a.state.history, &log).unwrap();
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.starts_with("epoch,adv_G,adv_D,gc,idt,lr\n"));
    assert_eq!(text.lines().count(), 3);

    let path = dir.path().join("g.ckpt");
    save_generator(&path, &a.generator, &cfg).unwrap();
    let (g2, cfg2) = load_generator(&path).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(g2.translate(&src[..1], 1), a.generator.translate(&src[..1], 1));
    assert!(matches!(load_generator(&dir.path().join("nope.ckpt")), Err(GcganError::MissingWeights(_))));
}

#[test]
fn training_input_errors() {
    let cfg = small_cfg(0);
    assert!(matches!(train(&cfg, &[], &set16(1, 2), None, |_| {}), Err(GcganError::EmptyManifest("source"))));
    let wrong = vec![img8(1, 1.0)];
    assert!(matches!(train(&cfg, &wrong, &set16(1, 2), None, |_| {}), Err(GcganError::SizeMismatch { .. })));
}

#[test]
fn conversion_cycles_and_is_deterministic() {
    let g = Generator::<f32>::new(GeneratorArch::micro(), &mut ChaCha8Rng::seed_from_u64(9));
    let src = set16(4, 3);
    let ids: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();
    let run = || {
        let mut outs = Vec::new();
        let recs = convert(
            &g,
            &ids,
            7,
            "conv",
            2,
            |id| Ok(src[id[1..].parse::<usize>().unwrap()].clone()),
            |_, img| {
                outs.push(img.clone());
                Ok(())
            },
        )
        .unwrap();
        (recs, outs)
    };
    let (recs, outs) = run();
    assert_eq!(recs.len(), 7);
    assert_eq!(outs.len(), 7);
    assert_eq!(recs[4].source_id, "s1");
    assert_eq!(recs[4].transform, GeoTransform::Vflip);
    assert_eq!(recs[6].transform, GeoTransform::Identity);
    assert_eq!(outs, run().1);
    assert!(outs.iter().all(|o| o.dims() == (16, 16, 3)));
}
