use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AnomalyScore, ClassifierConfig, ClassifierError, LabeledImage, ResidualNet};
use super::net::{Backbone, NetOutput};
use crate::checkpoint::{read_archive, write_archive};
use crate::imaging::{resize, ImageTensor, Label};
use crate::nn::{apply_bn_records, images_to_batch, ForwardCtx, ParamStore, SgdMomentum, Tape, Tensor, Var};
use crate::seeds;

pub const CLASSIFIER_KIND: &str = "residual-classifier";
/// Images per inference forward pass.
const INFER_BATCH: usize = 32;

#[derive(Clone, Debug)]
pub struct Classifier {
    cfg: ClassifierConfig,
    net: ResidualNet<f32>,
}

impl Classifier {
    /// Fresh model. The 50-layer backbone starts from the archive named by
    /// `pretrained_weights`, with a newly initialized two-class head.
    pub fn build(cfg: &ClassifierConfig) -> Result<Self, ClassifierError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::named(cfg.seed, "classifier/init"));
        let mut net = ResidualNet::new(cfg.backbone, &mut rng);
        if cfg.backbone == Backbone::Residual50Pretrained {
            let path = cfg
                .pretrained_weights
                .as_deref()
                .ok_or_else(|| ClassifierError::PretrainedUnavailable("no pretrained_weights path configured".into()))?;
            let archive = read_archive(path).map_err(|e| ClassifierError::PretrainedUnavailable(e.to_string()))?;
            let head = ResidualNet::<f32>::head_names();
            let body: Vec<(String, Tensor<f32>, bool)> = archive
                .params
                .iter()
                .filter(|(name, _, _)| !head.contains(name))
                .map(|(n, t, tr)| (n.to_string(), t.clone(), tr))
                .collect();
            let body = ParamStore::from_named(body);
            let missing = net
                .store
                .load_matching(&body)
                .map_err(ClassifierError::PretrainedUnavailable)?;
            if missing.iter().any(|m| !head.contains(&m.as_str())) {
                return Err(ClassifierError::PretrainedUnavailable(format!("archive lacks {}", missing.join(", "))));
            }
        }
        Ok(Self { cfg: cfg.clone(), net })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.cfg
    }

    pub fn net(&self) -> &ResidualNet<f32> {
        &self.net
    }

    /// Checks the channel count and rescales to the model input size.
    pub fn prepare(&self, id: &str, img: &ImageTensor) -> Result<ImageTensor, ClassifierError> {
        if img.channels() != 3 {
            return Err(ClassifierError::ChannelCount {
                id: id.into(),
                channels: img.channels(),
            });
        }
        Ok(resize(img, self.cfg.input_size, self.cfg.input_size)?)
    }

    /// Inference-mode forward pass over prepared images on `tape`. `x` may
    /// be a gradient-tracking leaf, e.g. for saliency maps.
    pub fn forward_eval(&self, tape: &mut Tape<f32>, x: Var) -> NetOutput {
        let p = self.net.store.bind(tape, false);
        self.net.forward(tape, &p, x, &mut ForwardCtx::eval())
    }

    pub fn predict(&self, img: &ImageTensor) -> Result<AnomalyScore, ClassifierError> {
        Ok(self.predict_batch(&[("image", img)])?[0])
    }

    pub fn predict_batch(&self, images: &[(&str, &ImageTensor)]) -> Result<Vec<AnomalyScore>, ClassifierError> {
        let prepared = images
            .iter()
            .map(|(id, img)| self.prepare(id, img))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::with_capacity(prepared.len());
        for chunk in prepared.chunks(INFER_BATCH) {
            let refs: Vec<&ImageTensor> = chunk.iter().collect();
            let mut tape = Tape::new();
            let x = tape.constant(images_to_batch(&refs));
            let o = self.forward_eval(&mut tape, x);
            let logits = tape.value(o.logits).data();
            out.extend(logits.chunks_exact(2).map(|l| AnomalyScore::from_logits(l[0] as f64, l[1] as f64)));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        write_archive(path, CLASSIFIER_KIND, &self.cfg, &self.net.store)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let archive = read_archive(path)?;
        archive.expect_kind(CLASSIFIER_KIND)?;
        let cfg: ClassifierConfig = archive.config_as()?;
        let mut net = ResidualNet::new(cfg.backbone, &mut ChaCha8Rng::seed_from_u64(0));
        crate::checkpoint::restore_into(&mut net.store, &archive)?;
        Ok(Self { cfg, net })
    }
}

/// Momentum SGD on softmax cross-entropy for `cfg.epochs` epochs. Returns the
/// mean training loss of each epoch.
pub fn train(model: &mut Classifier, samples: &[LabeledImage]) -> Result<Vec<f64>, ClassifierError> {
    let first = samples.first().ok_or(ClassifierError::Empty)?.label;
    if samples.iter().all(|s| s.label == first) {
        return Err(ClassifierError::SingleClass(first));
    }
    let cfg = model.cfg.clone();
    let data: Vec<Tensor<f32>> = samples
        .iter()
        .map(|s| Ok(images_to_batch(&[&model.prepare(&s.image_id, &s.image)?])))
        .collect::<Result<_, ClassifierError>>()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
    debug_assert_eq!(Label::Anomaly.index(), 1);

    let mut opt = SgdMomentum::new(cfg.momentum);
    let order_seed = seeds::named(cfg.seed, "classifier/order");
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds::derive(order_seed, epoch as u64)));
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            // A batch-norm batch of one has no variance to normalize.
            if chunk.len() < 2 {
                continue;
            }
            let parts: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &data[i]).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let p = model.net.store.bind(&mut tape, true);
            let x = tape.constant(Tensor::concat(&parts));
            let mut ctx = ForwardCtx::train();
            let o = model.net.forward(&mut tape, &p, x, &mut ctx);
            let loss = tape.softmax_cross_entropy(o.logits, &batch_labels);
            total += tape.value(loss).item() as f64 * chunk.len() as f64;
            count += chunk.len();
            let grads = p.grads(&tape.backward(loss));
            opt.step(&mut model.net.store, &grads, cfg.learning_rate);
            apply_bn_records(&mut model.net.store, &tape, &ctx.bn_records);
        }
        curve.push(total / count.max(1) as f64);
    }
    Ok(curve)
}
