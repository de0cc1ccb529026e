use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{geometry_consistency_loss, identity_mapping_loss, lr_at, Discriminator, GcganConfig, GcganError, Generator};
use crate::checkpoint::{read_archive, write_archive, CheckpointError};
use crate::imaging::{apply_transform, GeoTransform, ImageTensor};
use crate::nn::{images_to_batch, Adam, Bound, Scalar, Tape, Tensor, Var};
use crate::seeds;

pub const GENERATOR_KIND: &str = "gcgan-generator";

/// Vars of one generator objective evaluation. `gc` and `idt` are measured
/// on the `[0, 1]` image scale.
pub struct ObjectiveParts {
    pub total: Var,
    pub adv: Var,
    pub gc: Var,
    pub idt: Var,
    /// `G(x)` on the `[-1, 1]` scale.
    pub fake: Var,
}

/// Builds the generator objective for a source batch `x` and target batch
/// `y`, both `[0, 1]` tensors already on the tape. The reported `gc` and
/// `idt` are mean L1 distances on the `[0, 1]` scale; the objective weights
/// the same distances on the network's `[-1, 1]` scale:
/// `adv + lambda_gc * gc' + lambda_idt * l1_base_weight * idt'`.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective<T: Scalar>(
    tape: &mut Tape<T>,
    g: &Generator<T>,
    pg: &Bound<T>,
    d: &Discriminator<T>,
    pd: &Bound<T>,
    x: Var,
    y: Var,
    cfg: &GcganConfig,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> ObjectiveParts {
    let xs = tape.affine(x, 2.0, -1.0);
    let fake = g.forward(tape, pg, xs, dropout.as_deref_mut());
    let xt = tape.spatial(xs, cfg.gc_transform);
    let fake_t = g.forward(tape, pg, xt, dropout.as_deref_mut());
    let t_fake = tape.spatial(fake, cfg.gc_transform);
    let gc_net = tape.mean_abs_diff(fake_t, t_fake);
    let gc = tape.affine(gc_net, 0.5, 0.0);
    let ys = tape.affine(y, 2.0, -1.0);
    let same = g.forward(tape, pg, ys, dropout);
    let idt_net = tape.mean_abs_diff(same, ys);
    let idt = tape.affine(idt_net, 0.5, 0.0);
    let scores = d.forward(tape, pd, fake);
    let adv = tape.mean_squared_to(scores, 1.0);
    let total = tape.weighted_sum(&[
        (adv, 1.0),
        (gc_net, cfg.lambda_gc),
        (idt_net, cfg.lambda_idt * cfg.l1_base_weight),
    ]);
    ObjectiveParts {
        total,
        adv,
        gc,
        idt,
        fake,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub adv_g: f64,
    pub adv_d: f64,
    pub gc: f64,
    pub idt: f64,
    pub lr: f64,
    /// Held-out `gc + idt`, for epochs eligible for selection.
    pub holdout_score: Option<f64>,
}

pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub adam_g: Adam<f32>,
    pub adam_d: Adam<f32>,
    pub current_lr: f64,
    pub history: Vec<EpochLosses>,
    pub best_epoch: Option<usize>,
}

pub struct TrainOutcome {
    /// Weights from the selected epoch.
    pub generator: Generator<f32>,
    /// Weights after the last epoch.
    pub last_generator: Generator<f32>,
    pub state: TrainState,
}

fn check_images(images: &[ImageTensor], role: &'static str, size: usize) -> Result<Vec<Tensor<f32>>, GcganError> {
    if images.is_empty() {
        return Err(GcganError::EmptyManifest(role));
    }
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            if img.dims() != (size, size, 3) {
                return Err(GcganError::SizeMismatch {
                    id: format!("{role}[{i}]"),
                    expected: size,
                    got: img.dims(),
                });
            }
            Ok(images_to_batch(&[img]))
        })
        .collect()
}

fn split_holdout(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
    let train = idx.split_off(k);
    (train, idx)
}

fn stack(samples: &[Tensor<f32>], idx: impl Iterator<Item = usize>) -> Tensor<f32> {
    let parts: Vec<&Tensor<f32>> = idx.map(|i| &samples[i]).collect();
    Tensor::concat(&parts)
}

/// Trains the translator on source (flat render) and target (pseudo-real)
/// images of `cfg.input_size`. Writes `epoch_NNNN.ckpt` per epoch into
/// `checkpoint_dir` when given, and reports each finished epoch.
pub fn train(
    cfg: &GcganConfig,
    source: &[ImageTensor],
    target: &[ImageTensor],
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLosses),
) -> Result<TrainOutcome, GcganError> {
    cfg.validate()?;
    let src = check_images(source, "source", cfg.input_size)?;
    let tgt = check_images(target, "target", cfg.input_size)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seeds::named(cfg.seed, "gcgan/init"));
    let mut g = Generator::<f32>::new(cfg.generator.clone(), &mut init_rng);
    let mut d = Discriminator::<f32>::new(cfg.discriminator.clone(), &mut init_rng);
    let mut split_rng = ChaCha8Rng::seed_from_u64(seeds::named(cfg.seed, "gcgan/holdout"));
    let (src_train, src_hold) = split_holdout(src.len(), cfg.holdout_fraction, &mut split_rng);
    let (tgt_train, tgt_hold) = split_holdout(tgt.len(), cfg.holdout_fraction, &mut split_rng);
    let hold_src: Vec<ImageTensor> = src_hold.iter().map(|&i| source[i].clone()).collect();
    let hold_tgt: Vec<ImageTensor> = tgt_hold.iter().map(|&i| target[i].clone()).collect();
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seeds::named(cfg.seed, "gcgan/dropout"));
    let epoch_seed = seeds::named(cfg.seed, "gcgan/order");

    let mut state = TrainState {
        epoch: 0,
        adam_g: Adam::new(0.5, 0.999),
        adam_d: Adam::new(0.5, 0.999),
        current_lr: cfg.base_lr,
        history: Vec::new(),
        best_epoch: None,
    };
    let mut best: Option<(f64, Generator<f32>)> = None;

    for epoch in 0..cfg.total_epochs() {
        let lr = lr_at(epoch, cfg)?;
        state.current_lr = lr;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(epoch_seed, epoch as u64));
        let mut order_s = src_train.clone();
        let mut order_t = tgt_train.clone();
        order_s.shuffle(&mut rng);
        order_t.shuffle(&mut rng);

        let mut sums = [0.0f64; 4];
        let mut steps = 0usize;
        for (b, chunk) in order_s.chunks(cfg.batch_size).enumerate() {
            let xb = stack(&src, chunk.iter().copied());
            let yb = stack(&tgt, (0..chunk.len()).map(|i| order_t[(b * cfg.batch_size + i) % order_t.len()]));

            // Generator step; discriminator weights are fixed inputs.
            let mut tape = Tape::new();
            let pg = g.store.bind(&mut tape, true);
            let pd = d.store.bind(&mut tape, false);
            let x = tape.constant(xb);
            let y = tape.constant(yb.clone());
            let drop = if cfg.dropout_enabled { Some(&mut dropout_rng) } else { None };
            let parts = generator_objective(&mut tape, &g, &pg, &d, &pd, x, y, cfg, drop);
            let grads = tape.backward(parts.total);
            let g_grads = pg.grads(&grads);
            let fake = tape.value(parts.fake).clone();
            sums[0] += tape.value(parts.adv).item() as f64;
            sums[2] += tape.value(parts.gc).item() as f64;
            sums[3] += tape.value(parts.idt).item() as f64;
            state.adam_g.step(&mut g.store, &g_grads, lr);

            // Discriminator step on real targets and the detached fakes.
            let mut tape = Tape::new();
            let pd = d.store.bind(&mut tape, true);
            let real = tape.constant(yb);
            let real = tape.affine(real, 2.0, -1.0);
            let fake = tape.constant(fake);
            let sr = d.forward(&mut tape, &pd, real);
            let sf = d.forward(&mut tape, &pd, fake);
            let lr_real = tape.mean_squared_to(sr, 1.0);
            let lr_fake = tape.mean_squared_to(sf, 0.0);
            let loss = tape.weighted_sum(&[(lr_real, 1.0), (lr_fake, 1.0)]);
            sums[1] += tape.value(loss).item() as f64;
            let grads = tape.backward(loss);
            let d_grads = pd.grads(&grads);
            state.adam_d.step(&mut d.store, &d_grads, lr);
            steps += 1;
        }

        let n = steps.max(1) as f64;
        let mut record = EpochLosses {
            epoch,
            adv_g: sums[0] / n,
            adv_d: sums[1] / n,
            gc: sums[2] / n,
            idt: sums[3] / n,
            lr,
            holdout_score: None,
        };
        if epoch >= cfg.select_from_epoch {
            let score = if hold_src.is_empty() || hold_tgt.is_empty() {
                record.gc + record.idt
            } else {
                let f = |img: &ImageTensor| g.translate(std::slice::from_ref(img), 1).remove(0);
                geometry_consistency_loss(f, &hold_src, cfg.gc_transform) + identity_mapping_loss(f, &hold_tgt)
            };
            record.holdout_score = Some(score);
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, g.clone()));
                state.best_epoch = Some(epoch);
            }
        }
        if let Some(dir) = checkpoint_dir {
            save_generator(&dir.join(format!("epoch_{epoch:04}.ckpt")), &g, cfg)?;
        }
        on_epoch(&record);
        state.history.push(record);
        state.epoch = epoch + 1;
    }

    let generator = best.map(|(_, g)| g).unwrap_or_else(|| g.clone());
    Ok(TrainOutcome {
        generator,
        last_generator: g,
        state,
    })
}

/// Loss log with header `epoch,adv_G,adv_D,gc,idt,lr`.
pub fn write_loss_log(history: &[EpochLosses], path: &Path) -> std::io::Result<()> {
    use std::fmt::Write as _;
    let mut s = String::from("epoch,adv_G,adv_D,gc,idt,lr\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.epoch, r.adv_g, r.adv_d, r.gc, r.idt, r.lr);
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, s)
}

pub fn save_generator(path: &Path, g: &Generator<f32>, cfg: &GcganConfig) -> Result<(), GcganError> {
    write_archive(path, GENERATOR_KIND, cfg, &g.store)?;
    Ok(())
}

pub fn load_generator(path: &Path) -> Result<(Generator<f32>, GcganConfig), GcganError> {
    let archive = read_archive(path).map_err(|e| match e {
        CheckpointError::Missing(p) => GcganError::MissingWeights(p.display().to_string()),
        other => other.into(),
    })?;
    archive.expect_kind(GENERATOR_KIND)?;
    let cfg: GcganConfig = archive.config_as()?;
    let g = Generator::from_store(cfg.generator.clone(), &archive.params).map_err(GcganError::MissingWeights)?;
    Ok((g, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversionRecord {
    pub image_id: String,
    pub source_id: String,
    /// Applied to the source before translation.
    pub transform: GeoTransform,
}

/// Emits `n_out` translated images, cycling through `source_ids`. Every
/// second pass over the sources is vertically flipped first, which mirrors
/// the lever angle and keeps it anomalous.
pub fn convert(
    g: &Generator<f32>,
    source_ids: &[String],
    n_out: usize,
    prefix: &str,
    batch: usize,
    mut load: impl FnMut(&str) -> Result<ImageTensor, GcganError>,
    mut sink: impl FnMut(&ConversionRecord, &ImageTensor) -> Result<(), GcganError>,
) -> Result<Vec<ConversionRecord>, GcganError> {
    if source_ids.is_empty() {
        return Err(GcganError::EmptyManifest("source"));
    }
    let records: Vec<ConversionRecord> = (0..n_out)
        .map(|k| ConversionRecord {
            image_id: format!("{prefix}_{k:04}"),
            source_id: source_ids[k % source_ids.len()].clone(),
            transform: if (k / source_ids.len()) % 2 == 1 {
                GeoTransform::Vflip
            } else {
                GeoTransform::Identity
            },
        })
        .collect();
    for chunk in records.chunks(batch.max(1)) {
        let inputs = chunk
            .iter()
            .map(|r| Ok(apply_transform(&load(&r.source_id)?, r.transform)))
            .collect::<Result<Vec<_>, GcganError>>()?;
        for (r, out) in chunk.iter().zip(g.translate(&inputs, batch)) {
            sink(r, &out)?;
        }
    }
    Ok(records)
}
