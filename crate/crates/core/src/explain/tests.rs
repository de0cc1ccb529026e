use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::classifier::ClassifierConfig;
use crate::nn::{Conv2d, Init, Linear, ParamStore};

fn evidence(channels: usize, h: usize, w: usize, a: &[f64], g: &[f64]) -> ConvEvidence {
    ConvEvidence {
        channels,
        height: h,
        width: w,
        activations: a.to_vec(),
        gradients: g.to_vec(),
    }
}

#[test]
fn two_by_two_hand_oracle() {
    // alpha_0 = mean(1, 1, 1, 1) = 1, alpha_1 = mean(-2, 0, 0, 0) = -0.5.
    let ev = evidence(2, 2, 2, &[1.0, 2.0, 3.0, 4.0, 4.0, 2.0, 2.0, 2.0], &[1.0, 1.0, 1.0, 1.0, -2.0, 0.0, 0.0, 0.0]);
    // 1 - 2 = -1 -> 0, 2 - 1 = 1, 3 - 1 = 2, 4 - 1 = 3.
    assert_eq!(ev.raw_map(), vec![0.0, 1.0, 2.0, 3.0]);
    let map = SaliencyMap::from_raw(&ev, 2, 2, "x", Label::Anomaly);
    assert_eq!(map.values, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
}

#[test]
fn single_channel_unit_gradient_is_rectified_activation() {
    let a = [-1.0, 0.5, 2.0, -3.0];
    let ev = evidence(1, 2, 2, &a, &[1.0; 4]);
    assert_eq!(ev.raw_map(), vec![0.0, 0.5, 2.0, 0.0]);
    let map = SaliencyMap::from_raw(&ev, 2, 2, "x", Label::Normal);
    assert_eq!(map.values, vec![0.0, 0.25, 1.0, 0.0]);
}

#[test]
fn non_positive_evidence_gives_zero_map() {
    let ev = evidence(2, 2, 2, &[1.0, 2.0, 0.0, 4.0, 0.5, 0.5, 0.5, 0.5], &[-1.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -0.1]);
    let map = SaliencyMap::from_raw(&ev, 8, 8, "x", Label::Anomaly);
    assert!(map.values.iter().all(|&v| v == 0.0));
    assert_eq!(map.values.len(), 64);
}

proptest! {
    #[test]
    fn positive_gradient_scale_leaves_map_unchanged(
        a in proptest::collection::vec(0.0f64..3.0, 32),
        g in proptest::collection::vec(-1.0f64..1.0, 32),
        scale in 0.01f64..100.0,
    ) {
        let ev = evidence(2, 4, 4, &a, &g);
        let scaled = evidence(2, 4, 4, &a, &g.iter().map(|v| v * scale).collect::<Vec<_>>());
        let m1 = SaliencyMap::from_raw(&ev, 16, 12, "x", Label::Anomaly);
        let m2 = SaliencyMap::from_raw(&scaled, 16, 12, "x", Label::Anomaly);
        prop_assert_eq!(m1.values.len(), 16 * 12);
        for (x, y) in m1.values.iter().zip(&m2.values) {
            prop_assert!((x - y).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(x));
        }
        let peak = m1.values.iter().cloned().fold(0.0, f64::max);
        prop_assert!(peak == 0.0 || (peak - 1.0).abs() < 1e-12);
    }
}

/// One 3x3 stride-2 convolution, ReLU, global average pooling, linear head.
struct MicroCnn {
    store: ParamStore<f32>,
    conv: Conv2d,
    head: Linear,
    channels: usize,
}

impl MicroCnn {
    fn new(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let conv = Conv2d::new(&mut store, &mut rng, "conv", 3, channels, 3, 2, 1, true, Init::Normal { std: 0.5 });
        let head = Linear::new(&mut store, &mut rng, "fc", channels, 2);
        Self {
            store,
            conv,
            head,
            channels,
        }
    }
}

impl ConvModel for MicroCnn {
    fn prepare(&self, _: &str, img: &ImageTensor) -> Result<ImageTensor, ExplainError> {
        Ok(crate::imaging::resize(img, 8, 8)?)
    }

    fn forward_tapped(&self, tape: &mut Tape<f32>, x: Var) -> Tapped {
        let p = self.store.bind(tape, false);
        let a = self.conv.forward(tape, &p, x);
        let a = tape.relu(a);
        let pooled = tape.global_avg_pool(a);
        Tapped {
            logits: self.head.forward(tape, &p, pooled),
            last_conv: Some(a),
        }
    }
}

/// Dense head only.
struct NoConv {
    store: ParamStore<f32>,
    head: Linear,
}

impl ConvModel for NoConv {
    fn prepare(&self, _: &str, img: &ImageTensor) -> Result<ImageTensor, ExplainError> {
        Ok(img.clone())
    }

    fn forward_tapped(&self, tape: &mut Tape<f32>, x: Var) -> Tapped {
        let p = self.store.bind(tape, false);
        let pooled = tape.global_avg_pool(x);
        Tapped {
            logits: self.head.forward(tape, &p, pooled),
            last_conv: None,
        }
    }
}

/// Scalar-loop Grad-CAM for [`MicroCnn`]: the score is
/// `sum_k W[c,k] mean(A^k) + b`, so `alpha_k = W[c,k] / 16` on a 4x4 map.
fn brute_force_raw(m: &MicroCnn, img: &ImageTensor, target: Label) -> Vec<f64> {
    let w = m.store.get(m.conv.weight).to_f64_vec();
    let b = m.store.get(m.conv.bias.unwrap()).to_f64_vec();
    let fc = m.store.get(m.head.weight).to_f64_vec();
    let mut raw = vec![0.0; 16];
    for k in 0..m.channels {
        let alpha = fc[target.index() * m.channels + k] / 16.0;
        for oy in 0..4 {
            for ox in 0..4 {
                let mut s = b[k];
                for c in 0..3 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (iy, ix) = ((oy * 2 + ky) as isize - 1, (ox * 2 + kx) as isize - 1);
                            if (0..8).contains(&iy) && (0..8).contains(&ix) {
                                let v = img.get(iy as usize, ix as usize, c) as f32 as f64;
                                s += w[((k * 3 + c) * 3 + ky) * 3 + kx] * v;
                            }
                        }
                    }
                }
                raw[oy * 4 + ox] += alpha * s.max(0.0);
            }
        }
    }
    raw.iter().map(|v| v.max(0.0)).collect()
}

#[test]
fn micro_cnn_matches_scalar_loops() {
    for seed in 0..20u64 {
        let channels = 1 + (seed % 2) as usize;
        let m = MicroCnn::new(channels, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let img = ImageTensor::from_fn(8, 8, 3, |_, _, _| rng.random()).unwrap();
        for target in [Label::Normal, Label::Anomaly] {
            let ev = conv_evidence(&m, "x", &img, target).unwrap();
            assert_eq!((ev.channels, ev.height, ev.width), (channels, 4, 4));
            let want = brute_force_raw(&m, &img, target);
            for (a, b) in ev.raw_map().iter().zip(&want) {
                assert!((a - b).abs() < 1e-5, "seed {seed}: {a} vs {b}");
            }
            let map = gradcam(&m, "x", &img, target).unwrap();
            assert_eq!((map.height, map.width), (8, 8));
            let up = resize_plane(&want, 4, 4, 8, 8);
            let peak = up.iter().cloned().fold(0.0, f64::max);
            for (got, w) in map.values.iter().zip(&up) {
                let w = if peak > 0.0 { w / peak } else { 0.0 };
                assert!((got - w).abs() < 1e-4, "seed {seed}: {got} vs {w}");
            }
        }
    }
}

#[test]
fn model_without_conv_layer_is_rejected() {
    let mut store = ParamStore::new();
    let head = Linear::new(&mut store, &mut ChaCha8Rng::seed_from_u64(0), "fc", 3, 2);
    let m = NoConv { store, head };
    let img = ImageTensor::filled(8, 8, 3, 0.5).unwrap();
    assert!(matches!(gradcam(&m, "x", &img, Label::Anomaly), Err(ExplainError::NoConvLayer)));
}

#[test]
fn classifier_maps_match_input_size() {
    let model = Classifier::build(&ClassifierConfig::desk()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = ImageTensor::from_fn(80, 72, 3, |_, _, _| rng.random()).unwrap();
    let map = gradcam(&model, "img", &img, Label::Anomaly).unwrap();
    assert_eq!((map.height, map.width, map.values.len()), (80, 72, 80 * 72));
    assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(map.source_image_id, "img");
    assert_eq!(map, gradcam(&model, "img", &img, Label::Anomaly).unwrap());
}

fn const_map(h: usize, w: usize, v: f64) -> SaliencyMap {
    SaliencyMap {
        height: h,
        width: w,
        values: vec![v; h * w],
        source_image_id: "m".into(),
        target_class: Label::Anomaly,
    }
}

#[test]
fn overlay_blends() {
    let img = ImageTensor::filled(8, 8, 3, 0.2).unwrap();
    let map = const_map(8, 8, 1.0);
    assert_eq!(overlay(&img, &map, 0.0).unwrap(), img);
    let pure = overlay(&img, &map, 1.0).unwrap();
    assert_eq!(pure.get(3, 3, 0), heat_color(1.0)[0]);
    assert_eq!(heat_color(1.0), [0.5, 0.0, 0.0]);
    assert_eq!(heat_color(0.0), [0.0, 0.0, 0.5]);
    let half = overlay(&img, &const_map(8, 8, 0.5), 0.5).unwrap();
    // heat(0.5) = (0.5, 1, 0.5)
    let want = [0.35, 0.6, 0.35];
    for c in 0..3 {
        assert!((half.get(0, 0, c) - want[c]).abs() < 1e-12);
    }
    assert!(matches!(overlay(&img, &const_map(8, 9, 0.5), 0.5), Err(ExplainError::SizeMismatch { .. })));
    assert!(matches!(overlay(&img, &map, 1.5), Err(ExplainError::InvalidAlpha(_))));
}

#[test]
fn focus_fraction_examples() {
    let all = LeverMask::new(8, 8, vec![true; 64]);
    let quarter = LeverMask::new(8, 8, (0..64).map(|i| i % 4 == 0).collect());
    let mut inside = const_map(8, 8, 0.0);
    inside.values[9] = 1.0;
    inside.values[10] = 0.5;
    assert_eq!(focus_fraction(&inside, &all).unwrap(), 1.0);
    assert_eq!(focus_fraction(&const_map(8, 8, 0.0), &all).unwrap(), 0.0);
    assert!((focus_fraction(&const_map(8, 8, 0.7), &quarter).unwrap() - 0.25).abs() < 1e-12);
    assert!(focus_fraction(&const_map(4, 8, 0.7), &quarter).is_err());
}
