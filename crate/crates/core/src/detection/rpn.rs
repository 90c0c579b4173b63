//! Region proposal network: a 3x3 conv over shared features, then 1x1
//! objectness and box-delta convs, one `(bg, fg)` pair and one delta
//! quadruple per anchor.

use std::cmp::Ordering;

use rand::Rng;

use super::{decode, nms, BBox, RpnTargets};
use crate::error::{Error, Result};
use crate::numerics::{
    regression_loss, relu_backward, relu_forward, softmax_xent_loss, Conv2d, Module, Param,
    RegressionLoss,
};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct RpnHead<T = f32> {
    pub conv: Conv2d<T>,
    pub cls: Conv2d<T>,
    pub bbox: Conv2d<T>,
    anchors: usize,
}

#[derive(Debug, Clone)]
pub struct RpnOutput<T> {
    /// `[1, 2A, H, W]`, channel `2a + k` with `k = 0` background, `1` face.
    pub logits: Tensor<T>,
    /// `[1, 4A, H, W]`, channel `4a + d`.
    pub deltas: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct RpnCache<T> {
    input: Tensor<T>,
    hidden: Tensor<T>,
}

impl<T: Real> RpnHead<T> {
    pub fn new(name: &str, channels: usize, hidden: usize, anchors: usize, rng: &mut impl Rng) -> Self {
        RpnHead {
            conv: Conv2d::new(&format!("{name}.conv"), channels, hidden, 3, 1, 1, rng),
            cls: Conv2d::new(&format!("{name}.cls"), hidden, 2 * anchors, 1, 1, 0, rng),
            bbox: Conv2d::new(&format!("{name}.bbox"), hidden, 4 * anchors, 1, 1, 0, rng),
            anchors,
        }
    }

    pub fn anchors_per_location(&self) -> usize {
        self.anchors
    }

    pub fn forward(&self, feat: &Tensor<T>) -> Result<(RpnOutput<T>, RpnCache<T>)> {
        let hidden = relu_forward(&self.conv.forward(feat)?);
        let out = RpnOutput {
            logits: self.cls.forward(&hidden)?,
            deltas: self.bbox.forward(&hidden)?,
        };
        Ok((
            out,
            RpnCache {
                input: feat.clone(),
                hidden,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &RpnCache<T>,
        grad_logits: &Tensor<T>,
        grad_deltas: &Tensor<T>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        let mut g_hidden = self
            .cls
            .backward(&cache.hidden, grad_logits, true)?
            .expect("input gradient requested");
        g_hidden.add_assign(
            &self
                .bbox
                .backward(&cache.hidden, grad_deltas, true)?
                .expect("input gradient requested"),
        )?;
        let g_pre = relu_backward(&g_hidden, &cache.hidden)?;
        self.conv.backward(&cache.input, &g_pre, need_input)
    }
}

impl<T: Real> Module<T> for RpnHead<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.conv.visit_params(f);
        self.cls.visit_params(f);
        self.bbox.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv.visit_params_mut(f);
        self.cls.visit_params_mut(f);
        self.bbox.visit_params_mut(f);
    }
}

/// Flat offset of channel `ch` at anchor index `idx` in a `[1, k*A, H, W]` map.
fn anchor_offset(shape: &[usize], anchors: usize, idx: usize, per: usize, k: usize) -> usize {
    let (h, w) = (shape[2], shape[3]);
    let a = idx % anchors;
    let cell = idx / anchors;
    ((a * per + k) * h + cell / w) * w + cell % w
}

impl<T: Real> RpnOutput<T> {
    pub fn anchor_count(&self, anchors: usize) -> usize {
        self.logits.shape()[2] * self.logits.shape()[3] * anchors
    }

    fn check(&self, anchors: usize, n: usize) -> Result<()> {
        if self.anchor_count(anchors) != n {
            return Err(Error::dim(
                "rpn",
                format!("{n} anchors for output {:?}", self.logits.shape()),
            ));
        }
        Ok(())
    }

    /// `(background, face)` logits of anchor `idx`.
    pub fn logits_at(&self, anchors: usize, idx: usize) -> (T, T) {
        let s = self.logits.shape();
        let d = self.logits.data();
        (
            d[anchor_offset(s, anchors, idx, 2, 0)],
            d[anchor_offset(s, anchors, idx, 2, 1)],
        )
    }

    pub fn deltas_at(&self, anchors: usize, idx: usize) -> [T; 4] {
        let s = self.deltas.shape();
        let d = self.deltas.data();
        std::array::from_fn(|k| d[anchor_offset(s, anchors, idx, 4, k)])
    }
}

#[derive(Debug, Clone)]
pub struct RpnLoss<T> {
    pub cls: T,
    pub reg: T,
    pub grad_logits: Tensor<T>,
    pub grad_deltas: Tensor<T>,
}

impl<T: Real> RpnLoss<T> {
    pub fn total(&self) -> T {
        self.cls + self.reg
    }

    /// Scale loss and gradients by a branch weight.
    pub fn scaled(mut self, w: T) -> Self {
        self.cls *= w;
        self.reg *= w;
        self.grad_logits = self.grad_logits.map(|g| g * w);
        self.grad_deltas = self.grad_deltas.map(|g| g * w);
        self
    }
}

/// Softmax objectness loss over sampled anchors plus regression loss over
/// positive anchors, both mean-reduced.
pub fn rpn_loss<T: Real>(
    out: &RpnOutput<T>,
    anchors: usize,
    targets: &RpnTargets,
    mode: RegressionLoss,
) -> Result<RpnLoss<T>> {
    out.check(anchors, targets.labels.len())?;
    let mut grad_logits = Tensor::zeros(out.logits.shape());
    let mut grad_deltas = Tensor::zeros(out.deltas.shape());
    let sampled: Vec<usize> = (0..targets.labels.len())
        .filter(|&i| targets.labels[i] >= 0)
        .collect();
    let mut cls = T::zero();
    if !sampled.is_empty() {
        let mut logits = Vec::with_capacity(sampled.len() * 2);
        let mut labels = Vec::with_capacity(sampled.len());
        for &i in &sampled {
            let (bg, fg) = out.logits_at(anchors, i);
            logits.extend([bg, fg]);
            labels.push(targets.labels[i] as usize);
        }
        let (l, g) = softmax_xent_loss(&Tensor::from_vec(&[sampled.len(), 2], logits)?, &labels)?;
        cls = l;
        let s = out.logits.shape().to_vec();
        for (row, &i) in sampled.iter().enumerate() {
            for k in 0..2 {
                grad_logits.data_mut()[anchor_offset(&s, anchors, i, 2, k)] = g.data()[row * 2 + k];
            }
        }
    }
    let positives: Vec<usize> = sampled
        .iter()
        .copied()
        .filter(|&i| targets.labels[i] == 1)
        .collect();
    let mut reg = T::zero();
    if !positives.is_empty() {
        let mut pred = Vec::with_capacity(positives.len() * 4);
        let mut tgt = Vec::with_capacity(positives.len() * 4);
        for &i in &positives {
            pred.extend(out.deltas_at(anchors, i));
            tgt.extend(targets.deltas[i].iter().map(|&v| T::of(v as f64)));
        }
        let shape = [positives.len(), 4];
        let (l, g) = regression_loss(
            &Tensor::from_vec(&shape, pred)?,
            &Tensor::from_vec(&shape, tgt)?,
            mode,
        )?;
        reg = l;
        let s = out.deltas.shape().to_vec();
        for (row, &i) in positives.iter().enumerate() {
            for k in 0..4 {
                grad_deltas.data_mut()[anchor_offset(&s, anchors, i, 4, k)] = g.data()[row * 4 + k];
            }
        }
    }
    Ok(RpnLoss {
        cls,
        reg,
        grad_logits,
        grad_deltas,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    pub pre_nms_top: usize,
    pub post_nms_top: usize,
    pub nms_iou: f32,
    /// Proposals narrower or shorter than this many pixels are dropped.
    pub min_size: f32,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            pre_nms_top: 600,
            post_nms_top: 64,
            nms_iou: 0.7,
            min_size: 4.0,
        }
    }
}

/// Decode, clip, filter and suppress anchors into scored proposals, best first.
pub fn proposals<T: Real>(
    out: &RpnOutput<T>,
    anchors: &[BBox],
    image_size: (usize, usize),
    cfg: &ProposalConfig,
) -> Result<Vec<BBox>> {
    let a = out.logits.shape()[1] / 2;
    out.check(a, anchors.len())?;
    let (ih, iw) = (image_size.0 as f32, image_size.1 as f32);
    let mut cands: Vec<BBox> = Vec::with_capacity(anchors.len());
    for (i, anchor) in anchors.iter().enumerate() {
        let (bg, fg) = out.logits_at(a, i);
        let score = 1.0 / (1.0 + (bg - fg).f64().exp());
        let d = out.deltas_at(a, i).map(|v| v.f64() as f32);
        let b = decode(&d, anchor).clip(iw, ih);
        if b.is_valid() && b.width() >= cfg.min_size && b.height() >= cfg.min_size {
            cands.push(b.with_score(score as f32));
        }
    }
    cands.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .unwrap_or(Ordering::Equal)
    });
    cands.truncate(cfg.pre_nms_top);
    let keep = nms(&cands, cfg.nms_iou);
    Ok(keep
        .into_iter()
        .take(cfg.post_nms_top)
        .map(|i| cands[i])
        .collect())
}
