//! Hand-written reverse-mode gradients of the total loss and a
//! finite-difference verifier.
//!
//! Gradient paths: the consistency term is differentiable through the
//! extractor (conv → ReLU → conv) into all four images and the shared
//! weights. The disparity term treats the predicted map as a fixed input —
//! the classical matcher is not differentiable — so with `lambda = 0` every
//! gradient is exactly zero.

use super::{
    consistency_loss, extract_with_trace, smooth_l1, ConsNorm, ForwardTrace, LossConfig,
    ToyExtractor, FEAT_CHANNELS, IN_CHANNELS, KERNEL,
};
use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::rng::{RngStream, Side, StatKind, StreamKey};
use crate::stereo::DisparityMap;

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

/// Scatter form of the 3×3 reflect-padded convolution used for both backward
/// passes: for every output location and tap,
/// `d_input[ci, ry, rx] += w[co,ci,ky,kx] · d_out[co,y,x]` and
/// `d_weights[co,ci,ky,kx] += input[ci, ry, rx] · d_out[co,y,x]`.
fn conv3x3_reflect_backward(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    out_c: usize,
    d_out: &[f64],
    d_input: &mut [f64],
    d_weights: &mut [f64],
) {
    for co in 0..out_c {
        for ci in 0..in_c {
            let wbase = ((co * in_c + ci) * KERNEL) * KERNEL;
            let ibase = ci * h * w;
            let obase = co * h * w;
            for y in 0..h {
                let ry = [reflect(y as isize - 1, h), y, reflect(y as isize + 1, h)];
                for x in 0..w {
                    let rx = [reflect(x as isize - 1, w), x, reflect(x as isize + 1, w)];
                    let g = d_out[obase + y * w + x];
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let ii = ibase + ry[ky] * w + rx[kx];
                            d_input[ii] += weights[wbase + ky * KERNEL + kx] * g;
                            d_weights[wbase + ky * KERNEL + kx] += input[ii] * g;
                        }
                    }
                }
            }
        }
    }
}

/// Backpropagates an output-feature gradient through one forward trace.
/// Returns the input-image gradient in HWC order and accumulates weight
/// gradients into `d_w1`/`d_w2`.
fn backward_through_extractor(
    trace: &ForwardTrace,
    ext: &ToyExtractor,
    d_output: &[f64],
    d_w1: &mut [f64],
    d_w2: &mut [f64],
) -> Vec<f64> {
    let (h, w) = (trace.height, trace.width);
    let mut d_act1 = vec![0.0; FEAT_CHANNELS * h * w];
    conv3x3_reflect_backward(
        &trace.act1,
        FEAT_CHANNELS,
        h,
        w,
        &ext.w2,
        FEAT_CHANNELS,
        d_output,
        &mut d_act1,
        d_w2,
    );
    // ReLU: pass gradient where the pre-activation is strictly positive;
    // the subgradient at exactly 0 is taken as 0.
    for (g, &pre) in d_act1.iter_mut().zip(trace.pre1.iter()) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    let mut d_input_planar = vec![0.0; IN_CHANNELS * h * w];
    conv3x3_reflect_backward(
        &trace.input_planar,
        IN_CHANNELS,
        h,
        w,
        &ext.w1,
        FEAT_CHANNELS,
        &d_act1,
        &mut d_input_planar,
        d_w1,
    );
    let mut d_input = vec![0.0; IN_CHANNELS * h * w];
    for p in 0..h * w {
        for c in 0..IN_CHANNELS {
            d_input[p * IN_CHANNELS + c] = d_input_planar[c * h * w + p];
        }
    }
    d_input
}

/// Analytic gradients of the total loss.
#[derive(Debug, Clone)]
pub struct LossGradients {
    pub total: f64,
    pub disparity_term: f64,
    pub consistency_term: f64,
    /// Image-pixel gradients, HWC order, one per input image.
    pub d_left: Vec<f64>,
    pub d_right: Vec<f64>,
    pub d_left_aug: Vec<f64>,
    pub d_right_aug: Vec<f64>,
    /// Extractor-weight gradients accumulated over all four forward passes.
    pub d_w1: Vec<f64>,
    pub d_w2: Vec<f64>,
}

/// Gradient of `‖a − b‖ (scaled per cons_norm)` with respect to `a`;
/// the gradient with respect to `b` is its negation. At the minimum
/// (`a == b`) the norm is not differentiable; the subgradient 0 is used.
fn norm_gradient(a: &[f64], b: &[f64], norm: ConsNorm) -> Vec<f64> {
    let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
    let nrm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    if nrm == 0.0 {
        return vec![0.0; a.len()];
    }
    let scale = match norm {
        ConsNorm::Frobenius => 1.0 / nrm,
        ConsNorm::MeanPerElement => 1.0 / (nrm * (a.len() as f64).sqrt()),
    };
    diff.into_iter().map(|d| d * scale).collect()
}

/// Computes the total loss and its analytic gradients with respect to the
/// four input images and the shared extractor weights.
#[allow(clippy::too_many_arguments)]
pub fn loss_gradients(
    left: &ImageF,
    right: &ImageF,
    left_aug: &ImageF,
    right_aug: &ImageF,
    pred: &DisparityMap,
    gt: &DisparityMap,
    ext: &ToyExtractor,
    cfg: &LossConfig,
) -> Result<LossGradients> {
    cfg.validate()?;
    let t_l = extract_with_trace(left, ext)?;
    let t_la = extract_with_trace(left_aug, ext)?;
    let t_r = extract_with_trace(right, ext)?;
    let t_ra = extract_with_trace(right_aug, ext)?;

    let disparity_term = smooth_l1(pred, gt, cfg.smooth_l1_beta)?;
    let consistency_term = consistency_loss(
        &t_l.output,
        &t_la.output,
        &t_r.output,
        &t_ra.output,
        cfg,
    )?;
    let total = disparity_term + cfg.lambda * consistency_term;

    let mut d_w1 = vec![0.0; FEAT_CHANNELS * IN_CHANNELS * KERNEL * KERNEL];
    let mut d_w2 = vec![0.0; FEAT_CHANNELS * FEAT_CHANNELS * KERNEL * KERNEL];

    // d total / d features, scaled by lambda.
    let g_left: Vec<f64> = norm_gradient(&t_l.output.data, &t_la.output.data, cfg.cons_norm)
        .into_iter()
        .map(|v| v * cfg.lambda)
        .collect();
    let g_right: Vec<f64> = norm_gradient(&t_r.output.data, &t_ra.output.data, cfg.cons_norm)
        .into_iter()
        .map(|v| v * cfg.lambda)
        .collect();
    let neg = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| -x).collect() };

    let d_left = backward_through_extractor(&t_l, ext, &g_left, &mut d_w1, &mut d_w2);
    let d_left_aug = backward_through_extractor(&t_la, ext, &neg(&g_left), &mut d_w1, &mut d_w2);
    let d_right = backward_through_extractor(&t_r, ext, &g_right, &mut d_w1, &mut d_w2);
    let d_right_aug = backward_through_extractor(&t_ra, ext, &neg(&g_right), &mut d_w1, &mut d_w2);

    Ok(LossGradients {
        total,
        disparity_term,
        consistency_term,
        d_left,
        d_right,
        d_left_aug,
        d_right_aug,
        d_w1,
        d_w2,
    })
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error over all sampled coordinates.
    pub max_rel_err: f64,
    /// Number of coordinates checked.
    pub checked: usize,
}

const FD_STEP: f64 = 1e-4;

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-6)
}

/// Builds a random loss instance from `seed` and compares analytic gradients
/// against central finite differences (step 1e-4) on a deterministic sample
/// of coordinates from every gradient block (each image, each weight
/// tensor). `corrupt` is a test hook added to each analytic gradient before
/// comparison so detector failures can be exercised; pass 0.0 for a real
/// check.
pub fn finite_difference_check(
    seed: u64,
    height: usize,
    width: usize,
    samples_per_block: usize,
    cfg: &LossConfig,
    corrupt: f64,
) -> Result<GradCheckReport> {
    let stream = |s: u64, ch: u8| {
        RngStream::new(
            s,
            StreamKey {
                pair: 0,
                side: Side::Left,
                channel: ch,
                stat: StatKind::Aux,
            },
        )
    };

    // A central difference straddling a ReLU kink (a pre-activation crossing
    // zero inside the ±step window) measures the wrong one-sided slope, so
    // instances are redrawn until every pre-activation clears this margin.
    // One coordinate step moves a pre-activation by at most
    // step · max(|input|, |weight|), far below the margin.
    const KINK_MARGIN: f64 = 1e-3;
    let mut attempt = 0u64;
    let (left, right, left_aug, right_aug, ext) = 'instance: loop {
        let instance_seed = seed ^ attempt.wrapping_mul(0xD1B5_4A32_D192_ED03);
        let mut img_stream = stream(instance_seed, 0);
        let mut rand_image = |h: usize, w: usize| -> ImageF {
            ImageF::from_vec(
                h,
                w,
                3,
                (0..h * w * 3)
                    .map(|_| 0.05 + 0.9 * img_stream.next_uniform())
                    .collect(),
            )
            .unwrap()
        };
        let left = rand_image(height, width);
        let right = rand_image(height, width);
        let left_aug = rand_image(height, width);
        let right_aug = rand_image(height, width);
        let ext = ToyExtractor::from_seed(instance_seed ^ 0xE47);

        attempt += 1;
        if attempt > 64 {
            return Err(Error::InvalidInput(format!(
                "no kink-free gradient-check instance for seed {seed} after 64 attempts"
            )));
        }
        for img in [&left, &right, &left_aug, &right_aug] {
            let trace = extract_with_trace(img, &ext)?;
            if trace.pre1.iter().any(|v| v.abs() < KINK_MARGIN) {
                continue 'instance;
            }
        }
        break (left, right, left_aug, right_aug, ext);
    };

    let mut disp_stream = stream(seed, 1);
    let mut pred = DisparityMap::new(height, width);
    let mut gt = DisparityMap::new(height, width);
    for i in 0..height * width {
        pred.disparity[i] = 8.0 * disp_stream.next_uniform();
        gt.disparity[i] = 8.0 * disp_stream.next_uniform();
        pred.valid[i] = disp_stream.next_uniform() > 0.2;
        gt.valid[i] = disp_stream.next_uniform() > 0.2;
    }
    // Guarantee overlap so the disparity term is defined.
    pred.valid[0] = true;
    gt.valid[0] = true;

    let grads = loss_gradients(&left, &right, &left_aug, &right_aug, &pred, &gt, &ext, cfg)?;

    // Total loss as a function of a flat parameter block.
    let eval = |l: &ImageF, r: &ImageF, la: &ImageF, ra: &ImageF, e: &ToyExtractor| -> f64 {
        let g = loss_gradients(l, r, la, ra, &pred, &gt, e, cfg).unwrap();
        g.total
    };

    let mut pick_stream = stream(seed, 2);
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;

    // (block length, analytic grads, perturb-and-evaluate closure)
    type Perturb<'a> = Box<dyn Fn(usize, f64) -> f64 + 'a>;
    let blocks: Vec<(usize, &[f64], Perturb)> = vec![
        (
            left.data.len(),
            &grads.d_left,
            Box::new(|i, d| {
                let mut im = left.clone();
                im.data[i] += d;
                eval(&im, &right, &left_aug, &right_aug, &ext)
            }),
        ),
        (
            right.data.len(),
            &grads.d_right,
            Box::new(|i, d| {
                let mut im = right.clone();
                im.data[i] += d;
                eval(&left, &im, &left_aug, &right_aug, &ext)
            }),
        ),
        (
            left_aug.data.len(),
            &grads.d_left_aug,
            Box::new(|i, d| {
                let mut im = left_aug.clone();
                im.data[i] += d;
                eval(&left, &right, &im, &right_aug, &ext)
            }),
        ),
        (
            right_aug.data.len(),
            &grads.d_right_aug,
            Box::new(|i, d| {
                let mut im = right_aug.clone();
                im.data[i] += d;
                eval(&left, &right, &left_aug, &im, &ext)
            }),
        ),
        (
            ext.w1.len(),
            &grads.d_w1,
            Box::new(|i, d| {
                let mut e = ext.clone();
                e.w1[i] += d;
                eval(&left, &right, &left_aug, &right_aug, &e)
            }),
        ),
        (
            ext.w2.len(),
            &grads.d_w2,
            Box::new(|i, d| {
                let mut e = ext.clone();
                e.w2[i] += d;
                eval(&left, &right, &left_aug, &right_aug, &e)
            }),
        ),
    ];

    for (len, analytic, perturb) in &blocks {
        for _ in 0..samples_per_block {
            let i = (pick_stream.next_u64() % *len as u64) as usize;
            let plus = perturb(i, FD_STEP);
            let minus = perturb(i, -FD_STEP);
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[i] + corrupt;
            max_rel = max_rel.max(rel_err(a, fd));
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        checked,
    })
}
