//! The assembled network: shared backbone, proposal network, detection head
//! and recognition branch, with a per-image training pass and inference.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::data::Sample;
use crate::detection::{
    assign_rpn_targets, decode, det_loss, generate_anchors, nms, proposals, roi_pool_backward,
    roi_pool_forward, rpn_loss, sample_rois, AnchorConfig, BBox, DetectionHead, ProposalConfig,
    RoiSampleConfig, RpnHead, RpnTargetConfig,
};
use crate::error::{Error, Result};
use crate::numerics::{
    maxpool2d_backward, maxpool2d_forward, relu_backward, relu_forward, softmax_forward,
    softmax_xent_loss, Conv2d, Linear, Module, Param, RegressionLoss,
};
use crate::recognition::{center_loss, CenterBank, SNet, MAX_SHARE_DEPTH};
use crate::seed;
use crate::stn::{SpatialTransformer, StnMode};
use crate::tensor::{Real, Tensor};
use crate::training::{BranchLosses, BranchWeights};

/// Backbone blocks followed by a 2x2 max pool.
const POOLED_BLOCKS: usize = 3;
/// Feature stride of the final backbone block.
pub const FEATURE_STRIDE: usize = 1 << POOLED_BLOCKS;
pub const BACKBONE_BLOCKS: usize = 5;
const IMAGE_CHANNELS: usize = 3;
/// Name under which the center bank is persisted.
pub const CENTERS_NAME: &str = "recog.centers";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Output channels of backbone blocks 1..=5.
    pub backbone: [usize; BACKBONE_BLOCKS],
    pub rpn_hidden: usize,
    pub anchors: AnchorConfig,
    /// ROI pool size of the detection branch.
    pub pool: usize,
    /// Width of the two shared fully connected layers of the detection head.
    pub det_width: usize,
    pub det_stn: StnMode,
    pub recog_stn: StnMode,
    /// Backbone blocks shared with recognition (0 = pool from the image).
    pub share_depth: usize,
    pub recog_pool: usize,
    pub recog_widths: Vec<usize>,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub rpn_targets: RpnTargetConfig,
    pub rois: RoiSampleConfig,
    pub train_proposals: ProposalConfig,
    pub test_proposals: ProposalConfig,
    /// NMS threshold applied to final detections.
    pub det_nms: f32,
    pub regression: RegressionLoss,
    pub center_lambda: f64,
    pub center_alpha: f64,
    /// Recognition training boxes are shifted by up to this fraction of
    /// their size and rescaled by up to `exp(±jitter)`, so the branch sees
    /// crops as loose as the detector's.
    pub recog_jitter: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: [16, 32, 48, 64, 64],
            rpn_hidden: 64,
            anchors: AnchorConfig::default(),
            pool: 7,
            det_width: 256,
            det_stn: StnMode::Learned,
            recog_stn: StnMode::Learned,
            share_depth: 3,
            recog_pool: 7,
            recog_widths: vec![32, 64, 128],
            embed_dim: 512,
            num_classes: 20,
            rpn_targets: RpnTargetConfig::default(),
            rois: RoiSampleConfig::default(),
            train_proposals: ProposalConfig::default(),
            test_proposals: ProposalConfig {
                post_nms_top: 16,
                ..ProposalConfig::default()
            },
            det_nms: 0.3,
            regression: RegressionLoss::L2,
            center_lambda: 0.008,
            center_alpha: 0.5,
            recog_jitter: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.share_depth > MAX_SHARE_DEPTH {
            return Err(Error::config(
                "share_depth",
                format!("must be in 0..={MAX_SHARE_DEPTH}, got {}", self.share_depth),
            ));
        }
        if self.anchors.stride != FEATURE_STRIDE {
            return Err(Error::config(
                "anchors.stride",
                format!("backbone stride is {FEATURE_STRIDE}, got {}", self.anchors.stride),
            ));
        }
        if self.anchors.scales.is_empty() || self.anchors.ratios.is_empty() {
            return Err(Error::config("anchors.scales", "need at least one scale and ratio"));
        }
        if self.anchors.scales.iter().chain(&self.anchors.ratios).any(|v| !(*v > 0.0)) {
            return Err(Error::config("anchors.scales", "scales and ratios must be positive"));
        }
        let loc_min = crate::stn::LOC_KERNEL + crate::stn::LOC_POOL - 1;
        for (key, v) in [("model.pool", self.pool), ("recog.pool", self.recog_pool)] {
            if v < loc_min {
                return Err(Error::config(key, format!("must be at least {loc_min}")));
            }
        }
        if self.backbone.contains(&0) || self.recog_widths.contains(&0) || self.recog_widths.is_empty() {
            return Err(Error::config("model.backbone", "layer widths must be positive"));
        }
        for (key, v) in [
            ("model.rpn_hidden", self.rpn_hidden),
            ("model.det_width", self.det_width),
            ("recog.embed_dim", self.embed_dim),
            ("recog.num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(0.0..0.5).contains(&self.recog_jitter) {
            return Err(Error::config("recog.jitter", "must be in [0, 0.5)"));
        }
        if !(self.center_lambda >= 0.0) || !(self.center_alpha >= 0.0 && self.center_alpha <= 1.0) {
            return Err(Error::config(
                "recog.center_lambda",
                "center loss weight must be >= 0 and center rate in [0, 1]",
            ));
        }
        Ok(())
    }

    /// Stride, relative to the image, of the features shared with recognition.
    pub fn share_stride(&self) -> usize {
        block_stride(self.share_depth)
    }
}

/// Stride of the (pre-pool) output of backbone block `d`; block 0 is the image.
fn jitter_box(b: &BBox, jitter: f32, (h, w): (usize, usize), rng: &mut impl Rng) -> BBox {
    if jitter == 0.0 {
        return *b;
    }
    let mut u = || rng.gen_range(-jitter..=jitter);
    let (cx, cy) = b.center();
    let (bw, bh) = (b.width(), b.height());
    let jittered = BBox::from_center(cx + u() * bw, cy + u() * bh, bw * u().exp(), bh * u().exp());
    jittered.clip(w as f32, h as f32)
}

fn block_stride(d: usize) -> usize {
    1 << d.saturating_sub(1).min(POOLED_BLOCKS)
}

/// `conv3x3 -> ReLU` blocks, the first three followed by 2x2 max pooling.
#[derive(Debug, Clone)]
pub struct Backbone<T = f32> {
    pub convs: Vec<Conv2d<T>>,
}

#[derive(Debug, Clone)]
pub struct BackboneCache<T> {
    inputs: Vec<Tensor<T>>,
    /// Post-ReLU, pre-pool output of each block.
    acts: Vec<Tensor<T>>,
    argmax: Vec<Vec<usize>>,
}

impl<T> BackboneCache<T> {
    /// Output of block `d` (1-based), before its pooling.
    pub fn block(&self, d: usize) -> &Tensor<T> {
        &self.acts[d - 1]
    }

    /// Input to the backbone.
    pub fn image(&self) -> &Tensor<T> {
        &self.inputs[0]
    }
}

impl<T: Real> Backbone<T> {
    pub fn new(name: &str, widths: &[usize; BACKBONE_BLOCKS], rng: &mut impl Rng) -> Self {
        let mut inputs = IMAGE_CHANNELS;
        let convs = widths
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let c = Conv2d::new(&format!("{name}.conv{}", k + 1), inputs, w, 3, 1, 1, rng);
                inputs = w;
                c
            })
            .collect();
        Backbone { convs }
    }

    /// Runs blocks `1..=depth`; returns the final (pooled where applicable) output.
    pub fn forward(&self, x: &Tensor<T>, depth: usize) -> Result<(Tensor<T>, BackboneCache<T>)> {
        let mut cache = BackboneCache {
            inputs: Vec::new(),
            acts: Vec::new(),
            argmax: Vec::new(),
        };
        let mut cur = x.clone();
        for (k, conv) in self.convs.iter().enumerate().take(depth) {
            let act = relu_forward(&conv.forward(&cur)?);
            cache.inputs.push(cur);
            cur = if k < POOLED_BLOCKS {
                let (pooled, arg) = maxpool2d_forward(&act, 2, 2)?;
                cache.argmax.push(arg);
                pooled
            } else {
                act.clone()
            };
            cache.acts.push(act);
        }
        Ok((cur, cache))
    }

    /// Backward from the final output gradient (if any) plus an optional
    /// gradient injected at the pre-pool output of block `d`.
    pub fn backward(
        &mut self,
        cache: &BackboneCache<T>,
        grad_out: Option<Tensor<T>>,
        inject: Option<(usize, Tensor<T>)>,
    ) -> Result<()> {
        let depth = cache.acts.len();
        let mut g: Option<Tensor<T>> = grad_out;
        for k in (0..depth).rev() {
            let act = &cache.acts[k];
            let mut g_act = match g.take() {
                Some(go) if k < POOLED_BLOCKS => {
                    Some(maxpool2d_backward(&go, &cache.argmax[k], act.shape())?)
                }
                other => other,
            };
            if let Some((d, gi)) = &inject {
                if *d == k + 1 {
                    match &mut g_act {
                        Some(ga) => ga.add_assign(gi)?,
                        None => g_act = Some(gi.clone()),
                    }
                }
            }
            let Some(g_act) = g_act else { continue };
            let g_pre = relu_backward(&g_act, act)?;
            g = self.convs[k].backward(&cache.inputs[k], &g_pre, k > 0)?;
        }
        Ok(())
    }
}

impl<T: Real> Module<T> for Backbone<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.convs.iter().for_each(|c| c.visit_params(f));
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.convs.iter_mut().for_each(|c| c.visit_params_mut(f));
    }
}

#[derive(Debug, Clone)]
pub struct FaceNet<T = f32> {
    pub cfg: ModelConfig,
    pub backbone: Backbone<T>,
    pub rpn: RpnHead<T>,
    pub det: DetectionHead<T>,
    pub recog_stn: SpatialTransformer<T>,
    pub snet: SNet<T>,
    pub classifier: Linear<T>,
    /// Updated by its own rule, never by the optimizer.
    pub centers: CenterBank<T>,
}

/// Which parts of the network a training pass may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub backbone: bool,
    pub rpn: bool,
    pub det: bool,
    pub recog: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        backbone: true,
        rpn: true,
        det: true,
        recog: true,
    };

    /// Classify by representative parameter names of each group.
    pub fn from_selector(selected: &dyn Fn(&str) -> bool) -> Self {
        Trainable {
            backbone: selected("mnet.conv1.weight"),
            rpn: selected("rpn.conv.weight"),
            det: selected("det.fc6.weight"),
            recog: selected("recog.snet.fc.weight"),
        }
    }
}

/// Detection outputs for one image.
#[derive(Debug, Clone)]
pub struct Detections {
    pub boxes: Vec<BBox>,
}

impl<T: Real> FaceNet<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::rng(seed, "init", &[]);
        let a = cfg.anchors.per_location();
        let b = &cfg.backbone;
        let backbone = Backbone::new("mnet", b, &mut rng);
        let rpn = RpnHead::new("rpn", b[4], cfg.rpn_hidden, a, &mut rng);
        let det = DetectionHead::new("det", b[4], (cfg.pool, cfg.pool), cfg.det_width, cfg.det_stn, &mut rng);
        let shared = if cfg.share_depth == 0 {
            IMAGE_CHANNELS
        } else {
            b[cfg.share_depth - 1]
        };
        let recog_stn = SpatialTransformer::new(
            "recog.stn",
            shared,
            (cfg.recog_pool, cfg.recog_pool),
            cfg.recog_stn,
            &mut rng,
        );
        let snet = SNet::new(
            "recog.snet",
            cfg.share_depth,
            IMAGE_CHANNELS,
            &b[..4],
            &cfg.recog_widths,
            cfg.embed_dim,
            &mut rng,
        )?;
        let classifier = Linear::new("recog.cls", cfg.embed_dim, cfg.num_classes, &mut rng);
        let centers = CenterBank::new(cfg.num_classes, cfg.embed_dim);
        Ok(FaceNet {
            cfg,
            backbone,
            rpn,
            det,
            recog_stn,
            snet,
            classifier,
            centers,
        })
    }

    fn image_tensor(&self, image: &Tensor<f32>) -> Result<Tensor<T>> {
        let (c, _, _) = match image.shape() {
            &[c, h, w] => (c, h, w),
            s => return Err(Error::dim("facenet", format!("expected [3, H, W] image, got {s:?}"))),
        };
        if c != IMAGE_CHANNELS {
            return Err(Error::dim("facenet", format!("expected 3 channels, got {c}")));
        }
        let mut shape = vec![1];
        shape.extend_from_slice(image.shape());
        image.cast::<T>().reshape(&shape)
    }

    /// One image's forward and backward pass. Gradients are accumulated
    /// (scaled by the branch weights) into parameter grad buffers; branches
    /// with zero weight, or whose parameters and inputs are all frozen, are
    /// skipped. The center bank moves when recognition is trainable.
    pub fn train_sample(
        &mut self,
        sample: &Sample,
        weights: BranchWeights,
        trainable: Trainable,
        rng: &mut impl Rng,
    ) -> Result<BranchLosses> {
        let mut losses = BranchLosses::default();
        let image = self.image_tensor(&sample.image)?;
        let (ih, iw) = sample.size();
        let gts = &sample.boxes;
        let labeled: Vec<(BBox, usize)> = sample
            .boxes
            .iter()
            .zip(&sample.identities)
            .filter_map(|(b, id)| id.map(|i| (*b, i as usize)))
            .collect();

        let run_rpn = weights.rpn > 0.0 && (trainable.rpn || trainable.backbone);
        let run_det = weights.det > 0.0 && (trainable.det || trainable.backbone);
        let d = self.cfg.share_depth;
        let run_recog = weights.recog > 0.0
            && !labeled.is_empty()
            && (trainable.recog || (trainable.backbone && d > 0));
        let depth = if run_rpn || run_det {
            BACKBONE_BLOCKS
        } else if run_recog {
            d
        } else {
            return Ok(losses);
        };
        let (feat, cache) = self.backbone.forward(&image, depth)?;
        let mut g_feat: Option<Tensor<T>> = None;
        let mut add_feat = |g: Tensor<T>| -> Result<()> {
            match &mut g_feat {
                Some(acc) => acc.add_assign(&g),
                None => {
                    g_feat = Some(g);
                    Ok(())
                }
            }
        };

        if run_rpn || run_det {
            let (_, _, fh, fw) = feat.dims4("facenet")?;
            let anchors = generate_anchors(&self.cfg.anchors, fh, fw);
            let a = self.cfg.anchors.per_location();
            let (rpn_out, rpn_cache) = self.rpn.forward(&feat)?;
            if run_rpn {
                let targets = assign_rpn_targets(&anchors, gts, &self.cfg.rpn_targets, rng)?;
                let loss = rpn_loss(&rpn_out, a, &targets, self.cfg.regression)?;
                losses.rpn = loss.total().f64();
                let loss = loss.scaled(T::of(weights.rpn));
                if let Some(g) =
                    self.rpn
                        .backward(&rpn_cache, &loss.grad_logits, &loss.grad_deltas, trainable.backbone)?
                {
                    add_feat(g)?;
                }
            }
            if run_det {
                let props = proposals(&rpn_out, &anchors, (ih, iw), &self.cfg.train_proposals)?;
                let batch = sample_rois(&props, gts, &self.cfg.rois, rng);
                if !batch.boxes.is_empty() {
                    let p = self.cfg.pool;
                    let scale = 1.0 / FEATURE_STRIDE as f32;
                    let (pooled, argmax) = roi_pool_forward(&feat, &batch.boxes, scale, (p, p))?;
                    let (logits, deltas, det_cache) = self.det.forward(&pooled)?;
                    let loss = det_loss(&logits, &deltas, &batch.labels, &batch.deltas, self.cfg.regression)?;
                    losses.det = loss.total().f64();
                    let loss = loss.scaled(T::of(weights.det));
                    let g_pooled = self.det.backward(&det_cache, &loss.grad_logits, &loss.grad_deltas)?;
                    if trainable.backbone {
                        add_feat(roi_pool_backward(&g_pooled, &argmax, feat.shape())?)?;
                    }
                }
            }
        }

        let mut inject = None;
        if run_recog {
            let shared = if d == 0 { &image } else { cache.block(d) };
            let boxes: Vec<BBox> = labeled
                .iter()
                .map(|(b, _)| jitter_box(b, self.cfg.recog_jitter, (ih, iw), rng))
                .collect();
            let labels: Vec<usize> = labeled.iter().map(|(_, l)| *l).collect();
            let p = self.cfg.recog_pool;
            let scale = 1.0 / block_stride(d) as f32;
            let (pooled, argmax) = roi_pool_forward(shared, &boxes, scale, (p, p))?;
            let (aligned, stn_cache) = self.recog_stn.forward(&pooled)?;
            let (emb, snet_cache) = self.snet.forward(&aligned)?;
            let logits = self.classifier.forward(&emb)?;
            let (l_soft, g_logits) = softmax_xent_loss(&logits, &labels)?;
            let lambda = T::of(self.cfg.center_lambda);
            let (l_center, g_center) = center_loss(&emb, &labels, &self.centers, lambda)?;
            losses.softmax = l_soft.f64();
            losses.center = l_center.f64();
            let w = T::of(weights.recog);
            let mut g_emb = self.classifier.backward(&emb, &g_logits.map(|g| g * w))?;
            g_emb.add_assign(&g_center.map(|g| g * w))?;
            let g_aligned = self.snet.backward(&snet_cache, &g_emb)?;
            let g_pooled = self.recog_stn.backward(&stn_cache, &g_aligned)?;
            if trainable.backbone && d > 0 {
                inject = Some((d, roi_pool_backward(&g_pooled, &argmax, shared.shape())?));
            }
            if trainable.recog {
                self.centers.update(&emb, &labels, T::of(self.cfg.center_alpha))?;
            }
        }

        if trainable.backbone && (g_feat.is_some() || inject.is_some()) {
            // Only blocks up to the deepest gradient source need a pass.
            let g_out = if cache.acts.len() == depth && depth == BACKBONE_BLOCKS {
                g_feat
            } else {
                None
            };
            self.backbone.backward(&cache, g_out, inject)?;
        }
        Ok(losses)
    }

    /// Scored face boxes, best first, after NMS.
    pub fn detect(&self, image: &Tensor<f32>) -> Result<Detections> {
        let x = self.image_tensor(image)?;
        let (ih, iw) = (image.shape()[1], image.shape()[2]);
        let (feat, _) = self.backbone.forward(&x, BACKBONE_BLOCKS)?;
        let (_, _, fh, fw) = feat.dims4("facenet")?;
        let anchors = generate_anchors(&self.cfg.anchors, fh, fw);
        let (rpn_out, _) = self.rpn.forward(&feat)?;
        let props = proposals(&rpn_out, &anchors, (ih, iw), &self.cfg.test_proposals)?;
        if props.is_empty() {
            return Ok(Detections { boxes: Vec::new() });
        }
        let p = self.cfg.pool;
        let (pooled, _) = roi_pool_forward(&feat, &props, 1.0 / FEATURE_STRIDE as f32, (p, p))?;
        let (logits, deltas, _) = self.det.forward(&pooled)?;
        let probs = softmax_forward(&logits)?;
        let mut boxes = Vec::with_capacity(props.len());
        for (i, prop) in props.iter().enumerate() {
            let d: [f32; 4] = std::array::from_fn(|k| deltas.outer(i)[k].f64() as f32);
            let b = decode(&d, prop).clip(iw as f32, ih as f32);
            if b.is_valid() {
                boxes.push(b.with_score(probs.outer(i)[1].f64() as f32));
            }
        }
        let keep = nms(&boxes, self.cfg.det_nms);
        Ok(Detections {
            boxes: keep.into_iter().map(|i| boxes[i]).collect(),
        })
    }

    /// Embeddings `[R, D]` of the given face boxes.
    pub fn embed(&self, image: &Tensor<f32>, boxes: &[BBox]) -> Result<Tensor<T>> {
        let x = self.image_tensor(image)?;
        let d = self.cfg.share_depth;
        let (_, cache) = self.backbone.forward(&x, d)?;
        let shared = if d == 0 { &x } else { cache.block(d) };
        let p = self.cfg.recog_pool;
        let (pooled, _) = roi_pool_forward(shared, boxes, 1.0 / block_stride(d) as f32, (p, p))?;
        let (aligned, _) = self.recog_stn.forward(&pooled)?;
        let (emb, _) = self.snet.forward(&aligned)?;
        Ok(emb)
    }

    /// Every persisted tensor: trainable parameters, then the center bank.
    pub fn export_params(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push((p.name.clone(), p.value.cast::<f32>())));
        out.push((CENTERS_NAME.to_string(), self.centers.centers.cast::<f32>()));
        out
    }

    /// Load tensors exported by [`FaceNet::export_params`]; names and shapes
    /// must match exactly.
    pub fn import_params(&mut self, params: &[(String, Tensor<f32>)]) -> Result<()> {
        let expected = self.export_params();
        if expected.len() != params.len() {
            return Err(Error::StateMismatch(format!(
                "model has {} tensors, checkpoint has {}",
                expected.len(),
                params.len()
            )));
        }
        for ((en, et), (gn, gt)) in expected.iter().zip(params) {
            if en != gn || et.shape() != gt.shape() {
                return Err(Error::StateMismatch(format!(
                    "expected `{en}` {:?}, found `{gn}` {:?}",
                    et.shape(),
                    gt.shape()
                )));
            }
        }
        let mut it = params.iter();
        self.visit_params_mut(&mut |p| {
            let (_, t) = it.next().expect("lengths checked");
            p.value = t.cast::<T>();
        });
        let (_, c) = it.next().expect("centers are last");
        self.centers.centers = c.cast::<T>();
        Ok(())
    }

    /// SHA-256 over names, shapes and values of every persisted tensor.
    pub fn param_hash(&self) -> String {
        hash_params(&self.export_params())
    }
}

pub fn hash_params(params: &[(String, Tensor<f32>)]) -> String {
    let mut h = Sha256::new();
    for (name, t) in params {
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl<T: Real> Module<T> for FaceNet<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.backbone.visit_params(f);
        self.rpn.visit_params(f);
        self.det.visit_params(f);
        self.recog_stn.visit_params(f);
        self.snet.visit_params(f);
        self.classifier.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.backbone.visit_params_mut(f);
        self.rpn.visit_params_mut(f);
        self.det.visit_params_mut(f);
        self.recog_stn.visit_params_mut(f);
        self.snet.visit_params_mut(f);
        self.classifier.visit_params_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            backbone: [4, 4, 6, 8, 8],
            rpn_hidden: 8,
            anchors: AnchorConfig {
                scales: vec![16.0, 24.0],
                ratios: vec![1.0],
                stride: 8,
            },
            det_width: 16,
            recog_widths: vec![8, 8],
            embed_dim: 8,
            num_classes: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn parameter_names_are_grouped() {
        let net = FaceNet::<f32>::new(tiny(), 0).unwrap();
        let names = net.param_names();
        for prefix in ["mnet.conv1.", "rpn.cls.", "det.stn.fc.", "det.fc7.", "recog.stn.conv.", "recog.snet.", "recog.cls."] {
            assert!(names.iter().any(|n| n.starts_with(prefix)), "{prefix}");
        }
        assert!(names
            .iter()
            .all(|n| ["mnet.", "rpn.", "det.", "recog."].iter().any(|p| n.starts_with(p))));
    }

    #[test]
    fn stride_of_shared_blocks() {
        assert_eq!((0..=4).map(block_stride).collect::<Vec<_>>(), vec![1, 1, 2, 4, 8]);
    }

    #[test]
    fn export_import_round_trip() {
        let a = FaceNet::<f32>::new(tiny(), 1).unwrap();
        let mut b = FaceNet::<f32>::new(tiny(), 2).unwrap();
        assert_ne!(a.param_hash(), b.param_hash());
        b.import_params(&a.export_params()).unwrap();
        assert_eq!(a.param_hash(), b.param_hash());
        let other = FaceNet::<f32>::new(ModelConfig { share_depth: 1, ..tiny() }, 1).unwrap();
        assert!(matches!(b.import_params(&other.export_params()), Err(Error::StateMismatch(_))));
    }

    #[test]
    fn recog_stn_mode_does_not_change_init() {
        let a = FaceNet::<f32>::new(tiny(), 4).unwrap();
        let b = FaceNet::<f32>::new(ModelConfig { recog_stn: StnMode::Identity, ..tiny() }, 4).unwrap();
        assert_eq!(a.param_hash(), b.param_hash());
    }
}
