//! Finite-difference checks of every hand-written backward pass.
//!
//! Each suite builds small random `f64` instances, reduces the op's output to
//! the scalar `sum(output * R)` for a fixed random `R`, and compares the
//! analytic gradient with central differences at step [`EPSILON`]. The error
//! of one gradient tensor is `|analytic - numeric| / max(|analytic|, |numeric|)`
//! in the L2 norm. Coordinates whose one-sided differences disagree sit on a
//! kink (ReLU, max, the bilinear kernel's cell edges) where the derivative is
//! undefined; they are counted and left out.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::detection::{
    det_loss, roi_pool_backward, roi_pool_forward, rpn_loss, BBox, DetectionHead, RpnHead,
    RpnTargets,
};
use crate::error::{Error, Result};
use crate::numerics::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool2d_backward,
    maxpool2d_forward, regression_loss, relu_backward, relu_forward, softmax_xent_loss, Module,
    RegressionLoss,
};
use crate::recognition::{center_loss, CenterBank, ResidualBlock, SNet};
use crate::seed;
use crate::stn::{
    affine_grid, bilinear_sample_backward, bilinear_sample_forward, theta_backward, AffineTheta,
    SampleGrid, SpatialTransformer, StnMode,
};
use crate::tensor::Tensor;

pub const EPSILON: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;
pub const DEFAULT_INSTANCES: usize = 20;

/// Result of comparing one gradient tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub rel_err: f64,
    pub checked: usize,
    /// Coordinates at a kink.
    pub skipped: usize,
}

pub type SuiteFn = fn(&mut ChaCha8Rng) -> Result<Vec<Check>>;

#[derive(Clone, Copy)]
pub struct GradSuite {
    pub name: &'static str,
    pub run: SuiteFn,
}

impl std::fmt::Debug for GradSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GradSuite").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

pub fn run_suite(suite: &GradSuite, instances: usize, root: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        name: suite.name,
        instances,
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in 0..instances {
        let mut rng = seed::rng(root, "gradcheck", &[fnv(suite.name), i as u64]);
        for c in (suite.run)(&mut rng)? {
            // NaN must fail, so no f64::max here.
            if !(c.rel_err <= report.max_rel_err) {
                report.max_rel_err = c.rel_err;
            }
            report.checked += c.checked;
            report.skipped += c.skipped;
        }
    }
    Ok(report)
}

fn fnv(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

pub fn find_suite(name: &str) -> Option<GradSuite> {
    suites().into_iter().find(|s| s.name == name)
}

pub fn suites() -> Vec<GradSuite> {
    let s = |name, run| GradSuite { name, run };
    vec![
        s("conv2d", conv2d as SuiteFn),
        s("fc", fc),
        s("maxpool2d", maxpool),
        s("relu", relu),
        s("softmax_xent", softmax_xent),
        s("regression_l2", |r| regression(r, RegressionLoss::L2)),
        s("regression_smooth_l1", |r| regression(r, RegressionLoss::SmoothL1)),
        s("roi_pool", roi_pool),
        s("bilinear_sample", bilinear_input),
        s("bilinear_coords", bilinear_coords),
        s("affine_theta", affine_theta),
        s("localization_head", localization_head),
        s("residual_block", residual_block),
        s("snet", snet),
        s("center_loss", center),
        s("rpn", rpn),
        s("detection_head", detection_head),
    ]
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("length matches shape")
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central differences of `f` over every coordinate of `x`, with a flag per
/// coordinate that is false at kinks.
///
/// A kink inside the stencil shows up as disagreement between the central
/// differences at `EPSILON` and `EPSILON / 2`, or as second differences that
/// do not scale by 4 between the two steps; on smooth functions both
/// discrepancies are `O(EPSILON^2)`.
pub fn numeric_grad(
    x: &[f64],
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut probe = x.to_vec();
    let f0 = f(&probe)?;
    let mut grad = Vec::with_capacity(x.len());
    let mut smooth = Vec::with_capacity(x.len());
    let mut at = |probe: &mut Vec<f64>, i: usize, h: f64| -> Result<f64> {
        probe[i] = x[i] + h;
        let v = f(probe);
        probe[i] = x[i];
        v
    };
    let half = EPSILON / 2.0;
    for i in 0..x.len() {
        let (up, down) = (at(&mut probe, i, EPSILON)?, at(&mut probe, i, -EPSILON)?);
        let (up2, down2) = (at(&mut probe, i, half)?, at(&mut probe, i, -half)?);
        let c1 = (up - down) / (2.0 * EPSILON);
        let c2 = (up2 - down2) / EPSILON;
        let curvature = ((up - 2.0 * f0 + down) - 4.0 * (up2 - 2.0 * f0 + down2)) / EPSILON;
        let tol = KINK_TOLERANCE * c1.abs().max(1.0);
        grad.push(c1);
        smooth.push((c1 - c2).abs() <= tol && curvature.abs() <= tol);
    }
    Ok((grad, smooth))
}

/// Stencil disagreement, relative to the slope, that marks a kink.
const KINK_TOLERANCE: f64 = 1e-5;

pub fn compare(analytic: &[f64], numeric: &[f64], smooth: &[bool]) -> Check {
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    let mut checked = 0;
    for ((&a, &n), &ok) in analytic.iter().zip(numeric).zip(smooth) {
        if !ok {
            continue;
        }
        checked += 1;
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    let scale = na.sqrt().max(nn.sqrt());
    let rel_err = if analytic.len() != numeric.len() {
        f64::INFINITY
    } else if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    };
    Check {
        rel_err,
        checked,
        skipped: analytic.len() - checked,
    }
}

/// Check the gradient with respect to one input tensor.
fn check_input(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    f: &mut dyn FnMut(&Tensor<f64>) -> Result<f64>,
) -> Result<Check> {
    let shape = x.shape().to_vec();
    let (n, ok) = numeric_grad(x.data(), &mut |v| f(&Tensor::from_vec(&shape, v.to_vec())?))?;
    Ok(compare(analytic.data(), &n, &ok))
}

fn flat_params<M: Module<f64>>(m: &M) -> (Vec<f64>, Vec<f64>) {
    let (mut values, mut grads) = (Vec::new(), Vec::new());
    m.visit_params(&mut |p| {
        values.extend_from_slice(p.value.data());
        match p.value.grad() {
            Some(g) => grads.extend_from_slice(g),
            None => grads.extend(std::iter::repeat_n(0.0, p.value.len())),
        }
    });
    (values, grads)
}

fn write_params<M: Module<f64>>(m: &mut M, flat: &[f64]) {
    let mut at = 0;
    m.visit_params_mut(&mut |p| {
        let n = p.value.len();
        p.value.data_mut().copy_from_slice(&flat[at..at + n]);
        at += n;
    });
}

/// Check accumulated parameter gradients of `m` against `loss(m)`.
fn check_params<M: Module<f64> + Clone>(
    m: &M,
    loss: &mut dyn FnMut(&M) -> Result<f64>,
) -> Result<Check> {
    let (values, analytic) = flat_params(m);
    let mut probe = m.clone();
    let (n, ok) = numeric_grad(&values, &mut |v| {
        write_params(&mut probe, v);
        loss(&probe)
    })?;
    Ok(compare(&analytic, &n, &ok))
}

fn conv2d(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (n, c, k) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
    let kh = rng.gen_range(1..=3);
    let kw = rng.gen_range(1..=3);
    let stride = rng.gen_range(1..=2);
    let pad = rng.gen_range(0..=1);
    let (h, w) = (rng.gen_range(kh..=6), rng.gen_range(kw..=6));
    let x = random_tensor(rng, &[n, c, h, w]);
    let wt = random_tensor(rng, &[k, c, kh, kw]);
    let b = random_tensor(rng, &[k]);
    let r = random_tensor(rng, conv2d_forward(&x, &wt, &b, stride, pad)?.shape());
    let g = conv2d_backward(&r, &x, &wt, stride, pad)?;
    Ok(vec![
        check_input(&x, g.input.as_ref().expect("requested"), &mut |x| {
            Ok(dot(&conv2d_forward(x, &wt, &b, stride, pad)?, &r))
        })?,
        check_input(&wt, &g.weight, &mut |wt| {
            Ok(dot(&conv2d_forward(&x, wt, &b, stride, pad)?, &r))
        })?,
        check_input(&b, &g.bias, &mut |b| {
            Ok(dot(&conv2d_forward(&x, &wt, b, stride, pad)?, &r))
        })?,
    ])
}

fn fc(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (n, d, m) = (rng.gen_range(1..=3), rng.gen_range(1..=5), rng.gen_range(1..=4));
    let x = random_tensor(rng, &[n, d]);
    let w = random_tensor(rng, &[d, m]);
    let b = random_tensor(rng, &[m]);
    let r = random_tensor(rng, &[n, m]);
    let g = fc_backward(&r, &x, &w)?;
    Ok(vec![
        check_input(&x, &g.input, &mut |x| Ok(dot(&fc_forward(x, &w, &b)?, &r)))?,
        check_input(&w, &g.weight, &mut |w| Ok(dot(&fc_forward(&x, w, &b)?, &r)))?,
        check_input(&b, &g.bias, &mut |b| Ok(dot(&fc_forward(&x, &w, b)?, &r)))?,
    ])
}

fn maxpool(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let k = rng.gen_range(1..=3);
    let stride = rng.gen_range(1..=2);
    let shape = [rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(k..=6), rng.gen_range(k..=6)];
    let x = random_tensor(rng, &shape);
    let (y, arg) = maxpool2d_forward(&x, k, stride)?;
    let r = random_tensor(rng, y.shape());
    let g = maxpool2d_backward(&r, &arg, x.shape())?;
    Ok(vec![check_input(&x, &g, &mut |x| Ok(dot(&maxpool2d_forward(x, k, stride)?.0, &r)))?])
}

fn relu(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let n = rng.gen_range(1..=8);
    let x = random_tensor(rng, &[2, n]);
    let y = relu_forward(&x);
    let r = random_tensor(rng, y.shape());
    let g = relu_backward(&r, &y)?;
    Ok(vec![check_input(&x, &g, &mut |x| Ok(dot(&relu_forward(x), &r)))?])
}

fn softmax_xent(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (n, m) = (rng.gen_range(1..=4), rng.gen_range(2..=5));
    let x = random_tensor(rng, &[n, m]).map(|v| 3.0 * v);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
    let (_, g) = softmax_xent_loss(&x, &labels)?;
    Ok(vec![check_input(&x, &g, &mut |x| Ok(softmax_xent_loss(x, &labels)?.0))?])
}

fn regression(rng: &mut ChaCha8Rng, mode: RegressionLoss) -> Result<Vec<Check>> {
    let shape = [rng.gen_range(1..=4), 4];
    let p = random_tensor(rng, &shape).map(|v| 2.0 * v);
    let t = random_tensor(rng, &shape);
    let (_, g) = regression_loss(&p, &t, mode)?;
    Ok(vec![check_input(&p, &g, &mut |p| Ok(regression_loss(p, &t, mode)?.0))?])
}

fn random_box(rng: &mut impl Rng, h: usize, w: usize, stride: f32) -> BBox {
    let (fw, fh) = (w as f32 * stride, h as f32 * stride);
    let x1 = rng.gen_range(-2.0..fw * 0.7);
    let y1 = rng.gen_range(-2.0..fh * 0.7);
    BBox::new(x1, y1, x1 + rng.gen_range(2.0..fw * 0.6), y1 + rng.gen_range(2.0..fh * 0.6))
}

fn roi_pool(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (c, h, w) = (rng.gen_range(1..=2), rng.gen_range(3..=7), rng.gen_range(3..=7));
    let stride = 4.0;
    let feat = random_tensor(rng, &[1, c, h, w]);
    let boxes: Vec<BBox> = (0..rng.gen_range(1..=3)).map(|_| random_box(rng, h, w, stride)).collect();
    let size = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (y, arg) = roi_pool_forward(&feat, &boxes, 1.0 / stride, size)?;
    let r = random_tensor(rng, y.shape());
    let g = roi_pool_backward(&r, &arg, feat.shape())?;
    Ok(vec![check_input(&feat, &g, &mut |f| {
        Ok(dot(&roi_pool_forward(f, &boxes, 1.0 / stride, size)?.0, &r))
    })?])
}

/// Non-integer sample points spread slightly beyond the map.
fn random_grid(rng: &mut impl Rng, regions: usize, out: (usize, usize), src: (usize, usize)) -> Result<SampleGrid<f64>> {
    let n = regions * out.0 * out.1;
    let mut coords = Vec::with_capacity(2 * n);
    for _ in 0..n {
        coords.push(rng.gen_range(-1.5..src.1 as f64 + 0.5));
        coords.push(rng.gen_range(-1.5..src.0 as f64 + 0.5));
    }
    SampleGrid::from_coords(Tensor::from_vec(&[regions, out.0, out.1, 2], coords)?, src)
}

fn bilinear_input(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (r, c) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
    let src = (rng.gen_range(2..=5), rng.gen_range(2..=5));
    let u = random_tensor(rng, &[r, c, src.0, src.1]);
    let grid = random_grid(rng, r, (3, 3), src)?;
    let rv = random_tensor(rng, &[r, c, 3, 3]);
    let g = bilinear_sample_backward(&rv, &u, &grid)?;
    Ok(vec![check_input(&u, &g.input, &mut |u| Ok(dot(&bilinear_sample_forward(u, &grid)?, &rv)))?])
}

fn bilinear_coords(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (r, c) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
    let src = (rng.gen_range(2..=5), rng.gen_range(2..=5));
    let u = random_tensor(rng, &[r, c, src.0, src.1]);
    let grid = random_grid(rng, r, (3, 3), src)?;
    let rv = random_tensor(rng, &[r, c, 3, 3]);
    let g = bilinear_sample_backward(&rv, &u, &grid)?;
    let coords = grid.coords.clone();
    Ok(vec![check_input(&coords, &g.coords, &mut |k| {
        let grid = SampleGrid::from_coords(k.clone(), src)?;
        Ok(dot(&bilinear_sample_forward(&u, &grid)?, &rv))
    })?])
}

fn thetas_of(t: &Tensor<f64>) -> Vec<AffineTheta<f64>> {
    t.data()
        .chunks(6)
        .map(|p| AffineTheta([p[0], p[1], p[2], p[3], p[4], p[5]]))
        .collect()
}

/// Theta -> grid -> sampler, differentiated with respect to theta.
fn affine_theta(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (r, c) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    let src = (rng.gen_range(3..=6), rng.gen_range(3..=6));
    let out = (rng.gen_range(2..=4), rng.gen_range(2..=4));
    let u = random_tensor(rng, &[r, c, src.0, src.1]);
    let theta = Tensor::from_vec(
        &[r, 6],
        (0..r)
            .flat_map(|_| {
                let a = rng.gen_range(-0.6..0.6f64);
                let s = rng.gen_range(0.6..1.1);
                let sh = rng.gen_range(-0.2..0.2);
                [s * a.cos(), -s * a.sin() + sh, rng.gen_range(-0.3..0.3), s * a.sin(), s * a.cos(), rng.gen_range(-0.3..0.3)]
            })
            .collect(),
    )?;
    let sample = |t: &Tensor<f64>| -> Result<Tensor<f64>> {
        bilinear_sample_forward(&u, &affine_grid(&thetas_of(t), out, src))
    };
    let rv = random_tensor(rng, &[r, c, out.0, out.1]);
    let grid = affine_grid(&thetas_of(&theta), out, src);
    let g = bilinear_sample_backward(&rv, &u, &grid)?;
    let gt = theta_backward(&g.coords, out, src)?;
    let analytic = Tensor::from_vec(&[r, 6], gt.iter().flatten().copied().collect())?;
    Ok(vec![check_input(&theta, &analytic, &mut |t| Ok(dot(&sample(t)?, &rv)))?])
}

/// Full spatial transformer with a perturbed (non-identity) head.
fn localization_head(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let c = rng.gen_range(1..=2);
    let size = (rng.gen_range(6..=8), rng.gen_range(6..=8));
    let mut stn = SpatialTransformer::<f64>::new("stn", c, size, StnMode::Learned, rng);
    let scale = 0.3 / (stn.head.fc.inputs() as f64).sqrt();
    stn.head.fc.weight.value = random_tensor(rng, stn.head.fc.weight.value.shape()).map(|v| v * scale);
    let n = rng.gen_range(1..=2);
    let u = random_tensor(rng, &[n, c, size.0, size.1]);
    let (v, cache) = stn.forward(&u)?;
    let rv = random_tensor(rng, v.shape());
    stn.zero_grads();
    let gu = stn.backward(&cache, &rv)?;
    let loss = |s: &SpatialTransformer<f64>, u: &Tensor<f64>| -> Result<f64> { Ok(dot(&s.forward(u)?.0, &rv)) };
    Ok(vec![
        check_input(&u, &gu, &mut |u| loss(&stn, u))?,
        check_params(&stn, &mut |s| loss(s, &u))?,
    ])
}

fn residual_block(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let cin = rng.gen_range(1..=3);
    let (cout, stride) = if rng.gen_bool(0.5) { (cin, 1) } else { (rng.gen_range(1..=3), 2) };
    let mut block = ResidualBlock::<f64>::new("res", cin, cout, stride, rng);
    let shape = [rng.gen_range(1..=2), cin, rng.gen_range(3..=5), rng.gen_range(3..=5)];
    let x = random_tensor(rng, &shape);
    let (y, cache) = block.forward(&x)?;
    let r = random_tensor(rng, y.shape());
    block.zero_grads();
    let gx = block.backward(&cache, &r, true)?.expect("requested");
    let loss = |b: &ResidualBlock<f64>, x: &Tensor<f64>| -> Result<f64> { Ok(dot(&b.forward(x)?.0, &r)) };
    Ok(vec![
        check_input(&x, &gx, &mut |x| loss(&block, x))?,
        check_params(&block, &mut |b| loss(b, &x))?,
    ])
}

fn snet(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let share = rng.gen_range(2..=4);
    let mut net = SNet::<f64>::new("snet", share, 3, &[2, 2, 3, 3], &[3, 4], 5, rng)?;
    let n = rng.gen_range(1..=2);
    let x = random_tensor(rng, &[n, net.in_channels(), 5, 5]);
    let (e, cache) = net.forward(&x)?;
    let r = random_tensor(rng, e.shape());
    net.zero_grads();
    let gx = net.backward(&cache, &r)?;
    let loss = |n: &SNet<f64>, x: &Tensor<f64>| -> Result<f64> { Ok(dot(&n.forward(x)?.0, &r)) };
    Ok(vec![
        check_input(&x, &gx, &mut |x| loss(&net, x))?,
        check_params(&net, &mut |n| loss(n, &x))?,
    ])
}

fn center(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (k, d, n) = (rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=5));
    let mut bank = CenterBank::<f64>::new(k, d);
    bank.centers = random_tensor(rng, &[k, d]);
    let x = random_tensor(rng, &[n, d]);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let lambda = rng.gen_range(0.1..2.0);
    let (_, g) = center_loss(&x, &labels, &bank, lambda)?;
    Ok(vec![check_input(&x, &g, &mut |x| Ok(center_loss(x, &labels, &bank, lambda)?.0))?])
}

/// Proposal head and its loss over random anchor labels and targets.
fn rpn(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (c, a) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    let mut head = RpnHead::<f64>::new("rpn", c, 3, a, rng);
    let (h, w) = (rng.gen_range(2..=3), rng.gen_range(2..=3));
    let feat = random_tensor(rng, &[1, c, h, w]);
    let count = h * w * a;
    let targets = RpnTargets {
        labels: (0..count).map(|_| rng.gen_range(-1..=1)).collect(),
        deltas: (0..count).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect(),
    };
    let mode = if rng.gen_bool(0.5) { RegressionLoss::L2 } else { RegressionLoss::SmoothL1 };
    let loss = |hd: &RpnHead<f64>, f: &Tensor<f64>| -> Result<f64> {
        Ok(rpn_loss(&hd.forward(f)?.0, a, &targets, mode)?.total())
    };
    let (out, cache) = head.forward(&feat)?;
    let l = rpn_loss(&out, a, &targets, mode)?;
    head.zero_grads();
    let gf = head.backward(&cache, &l.grad_logits, &l.grad_deltas, true)?.expect("requested");
    Ok(vec![
        check_input(&feat, &gf, &mut |f| loss(&head, f))?,
        check_params(&head, &mut |hd| loss(hd, &feat))?,
    ])
}

/// Detection head (transformer, two hidden layers, outputs) and its loss.
fn detection_head(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let c = rng.gen_range(1..=2);
    let mut head = DetectionHead::<f64>::new("det", c, (6, 6), 4, StnMode::Learned, rng);
    let scale = 0.3 / (head.stn.head.fc.inputs() as f64).sqrt();
    head.stn.head.fc.weight.value =
        random_tensor(rng, head.stn.head.fc.weight.value.shape()).map(|v| v * scale);
    let n = rng.gen_range(1..=3);
    let pooled = random_tensor(rng, &[n, c, 6, 6]);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let targets: Vec<[f32; 4]> = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
    let loss = |hd: &DetectionHead<f64>, p: &Tensor<f64>| -> Result<f64> {
        let (lg, d, _) = hd.forward(p)?;
        Ok(det_loss(&lg, &d, &labels, &targets, RegressionLoss::L2)?.total())
    };
    let (lg, d, cache) = head.forward(&pooled)?;
    let l = det_loss(&lg, &d, &labels, &targets, RegressionLoss::L2)?;
    head.zero_grads();
    let gp = head.backward(&cache, &l.grad_logits, &l.grad_deltas)?;
    Ok(vec![
        check_input(&pooled, &gp, &mut |p| loss(&head, p))?,
        check_params(&head, &mut |hd| loss(hd, &pooled))?,
    ])
}

/// Run the named suites (`"all"` for every one).
pub fn run_scope(scope: &str, instances: usize, root: u64) -> Result<Vec<SuiteReport>> {
    let selected = if scope == "all" {
        suites()
    } else {
        vec![find_suite(scope).ok_or_else(|| Error::Input(format!("unknown gradient check `{scope}`")))?]
    };
    selected.iter().map(|s| run_suite(s, instances, root)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinks_are_skipped() {
        let (g, ok) = numeric_grad(&[0.0, 1.0], &mut |v| Ok(v[0].abs() + 2.0 * v[1])).unwrap();
        assert_eq!(ok, vec![false, true]);
        assert!((g[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn compare_flags_wrong_gradient() {
        let c = compare(&[1.0, 2.0], &[1.0, 2.2], &[true, true]);
        assert!(c.rel_err > 0.05);
        assert_eq!(compare(&[0.0], &[0.0], &[true]).rel_err, 0.0);
    }
}
