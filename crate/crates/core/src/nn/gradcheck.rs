//! Central finite-difference checks of every tape operation in `f64`.

use super::*;
use crate::imaging::GeoTransform;

fn pseudo(n: usize, salt: u64) -> Vec<f64> {
    // Deterministic values in (-1, 1) without ties.
    (0..n)
        .map(|i| {
            let z = ((i as u64 + 1) * 2654435761 + salt * 40503) % 10007;
            z as f64 / 5003.5 - 1.0
        })
        .collect()
}

fn check(inputs: &[Tensor<f64>], build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
    let eval = |vals: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out);
    let h = 1e-6;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape().to_vec()));
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            assert!(err < 1e-5, "input {k} element {j}: analytic {a} vs numeric {numeric}");
        }
    }
}

fn t(shape: &[usize], salt: u64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), pseudo(n, salt))
}

#[test]
fn conv2d_gradients() {
    for (k, s, p) in [(3, 1, 1), (3, 2, 1), (4, 2, 1), (1, 1, 0)] {
        check(&[t(&[2, 2, 5, 6], 1), t(&[3, 2, k, k], 2), t(&[3], 3)], |tp, v| {
            let y = tp.conv2d(v[0], v[1], Some(v[2]), s, p);
            tp.mean_squared_to(y, 0.3)
        });
    }
}

#[test]
fn conv_transpose2d_gradients() {
    for (k, s, p, op) in [(3, 2, 1, 1), (4, 2, 1, 0), (3, 1, 1, 0)] {
        check(&[t(&[2, 3, 3, 4], 4), t(&[3, 2, k, k], 5), t(&[2], 6)], |tp, v| {
            let y = tp.conv_transpose2d(v[0], v[1], Some(v[2]), s, p, op);
            tp.mean_squared_to(y, -0.2)
        });
    }
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    // <convT(x, w), y> == <x, conv(y, w)> with shared weights.
    let w = t(&[3, 2, 3, 3], 7);
    let x = t(&[1, 3, 4, 4], 8);
    let y = t(&[1, 2, 8, 8], 9);
    let mut tape = Tape::new();
    let (xv, wv, yv) = (tape.constant(x.clone()), tape.constant(w), tape.constant(y.clone()));
    let up = tape.conv_transpose2d(xv, wv, None, 2, 1, 1);
    let down = tape.conv2d(yv, wv, None, 2, 1);
    let lhs: f64 = tape.value(up).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = tape.value(down).data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-10);
}

#[test]
fn padding_norm_and_activations() {
    check(&[t(&[2, 2, 4, 5], 10)], |tp, v| {
        let y = tp.reflect_pad(v[0], 2);
        tp.mean_squared_to(y, 0.1)
    });
    for kind in [NormKind::Instance, NormKind::Batch] {
        check(&[t(&[3, 2, 3, 4], 11), t(&[2], 12), t(&[2], 13)], |tp, v| {
            let y = tp.normalize(v[0], kind);
            let y = tp.channel_affine(y, v[1], v[2]);
            let y = tp.tanh(y);
            tp.mean_squared_to(y, 0.25)
        });
    }
    check(&[t(&[2, 3, 4, 4], 14), t(&[2, 3, 4, 4], 15)], |tp, v| {
        let a = tp.relu(v[0]);
        let b = tp.leaky_relu(v[1], 0.2);
        let s = tp.add(a, b);
        let s = tp.affine(s, 2.0, -0.5);
        tp.mean_squared_to(s, 0.0)
    });
}

#[test]
fn spatial_permutations() {
    for tr in GeoTransform::ALL {
        check(&[t(&[1, 2, 3, 5], 16)], |tp, v| {
            let y = tp.spatial(v[0], tr);
            let y = tp.affine(y, 1.0, 0.0);
            // Position-dependent loss so the permutation matters.
            let target = tp.constant(Tensor::new(tp.shape(y).to_vec(), pseudo(30, 17)));
            tp.mean_abs_diff(y, target)
        });
    }
    // 2×1 column [0.1, 0.9] flipped vertically.
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new([1, 1, 2, 1], vec![0.1, 0.9]));
    let y = tape.spatial(x, GeoTransform::Vflip);
    assert_eq!(tape.value(y).data(), &[0.9, 0.1]);
}

#[test]
fn pooling_linear_and_losses() {
    check(&[t(&[2, 2, 5, 5], 18)], |tp, v| {
        let y = tp.max_pool(v[0], 3, 2, 1);
        tp.mean_squared_to(y, 0.5)
    });
    check(&[t(&[2, 3, 4, 4], 19), t(&[2, 3], 20), t(&[2], 21)], |tp, v| {
        let y = tp.global_avg_pool(v[0]);
        let logits = tp.linear(y, v[1], Some(v[2]));
        tp.softmax_cross_entropy(logits, &[1, 0])
    });
    check(&[t(&[1, 1, 3, 3], 22), t(&[1, 1, 3, 3], 23)], |tp, v| {
        let a = tp.mean_abs_diff(v[0], v[1]);
        let b = tp.mean_squared_to(v[0], 1.0);
        tp.weighted_sum(&[(a, 0.7), (b, 2.5)])
    });
    let keep: Vec<bool> = (0..24).map(|i| i % 3 != 0).collect();
    check(&[t(&[1, 2, 3, 4], 24)], |tp, v| {
        let y = tp.dropout(v[0], &keep, 0.5);
        tp.mean_squared_to(y, 0.2)
    });
}

#[test]
fn frozen_inputs_receive_no_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[1, 1, 4, 4], 25), true);
    let w = tape.constant(t(&[1, 1, 3, 3], 26));
    let y = tape.conv2d(x, w, None, 1, 1);
    let l = tape.mean_squared_to(y, 0.0);
    let g = tape.backward(l);
    assert!(g.get(w).is_none());
    assert!(g.get(x).is_some());
    // Intermediate gradients stay available.
    assert!(g.get(y).is_some());
}
