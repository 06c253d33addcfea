//! Feature-consistency loss over a small frozen convolutional extractor,
//! the smooth-L1 disparity loss, and their weighted combination.

pub mod grad;

pub use grad::{finite_difference_check, loss_gradients, GradCheckReport, LossGradients};

use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::rng::{RngStream, Side, StatKind, StreamKey};
use crate::stereo::DisparityMap;

/// Dense feature tensor in planar channel-major order:
/// `data[(c*height + h)*width + w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels
            && self.height == other.height
            && self.width == other.width
    }
}

/// Seed the frozen extractor weights are drawn from unless a caller picks
/// another one.
pub const DEFAULT_EXTRACTOR_SEED: u64 = 901;

/// Input channels, hidden/output channels, and kernel side of the extractor.
pub const IN_CHANNELS: usize = 3;
pub const FEAT_CHANNELS: usize = 8;
pub const KERNEL: usize = 3;

/// Two-layer convolutional feature extractor: 3×3 conv (3→8, reflect
/// padding) → ReLU → 3×3 conv (8→8, reflect padding). Biases are zero and
/// the weights are frozen after initialization, so the extractor is a fixed
/// deterministic map.
///
/// Weights are He-initialized, `N(0, 2/fan_in)`, drawn sequentially per
/// layer from a keyed random stream in (out-channel, in-channel, row,
/// column) order — identical seed, identical weights, bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyExtractor {
    /// Layer-1 weights, shape (8, 3, 3, 3) flattened row-major.
    pub w1: Vec<f64>,
    /// Layer-2 weights, shape (8, 8, 3, 3) flattened row-major.
    pub w2: Vec<f64>,
}

impl ToyExtractor {
    pub fn from_seed(seed: u64) -> Self {
        let draw_layer = |layer: u32, count: usize, fan_in: usize| -> Vec<f64> {
            let mut s = RngStream::new(
                seed,
                StreamKey {
                    pair: layer,
                    side: Side::Left,
                    channel: 0,
                    stat: StatKind::Aux,
                },
            );
            let scale = (2.0 / fan_in as f64).sqrt();
            (0..count).map(|_| scale * s.next_gaussian()).collect()
        };
        ToyExtractor {
            w1: draw_layer(
                1,
                FEAT_CHANNELS * IN_CHANNELS * KERNEL * KERNEL,
                IN_CHANNELS * KERNEL * KERNEL,
            ),
            w2: draw_layer(
                2,
                FEAT_CHANNELS * FEAT_CHANNELS * KERNEL * KERNEL,
                FEAT_CHANNELS * KERNEL * KERNEL,
            ),
        }
    }

    /// The extractor every pipeline component shares by default.
    pub fn default_frozen() -> Self {
        Self::from_seed(DEFAULT_EXTRACTOR_SEED)
    }
}

/// Mirror-without-edge-repeat index for offsets of ±1 (reflect padding).
/// Needs extent ≥ 2.
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

/// 3×3 convolution with reflect padding over planar input
/// (`in_c` × `h` × `w`), weights shaped (out_c, in_c, 3, 3).
fn conv3x3_reflect(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    out_c: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; out_c * h * w];
    for co in 0..out_c {
        for ci in 0..in_c {
            let wbase = ((co * in_c + ci) * KERNEL) * KERNEL;
            let ibase = ci * h * w;
            let obase = co * h * w;
            for y in 0..h {
                let ry = [
                    reflect(y as isize - 1, h),
                    y,
                    reflect(y as isize + 1, h),
                ];
                for x in 0..w {
                    let rx = [
                        reflect(x as isize - 1, w),
                        x,
                        reflect(x as isize + 1, w),
                    ];
                    let mut acc = 0.0;
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            acc += weights[wbase + ky * KERNEL + kx]
                                * input[ibase + ry[ky] * w + rx[kx]];
                        }
                    }
                    out[obase + y * w + x] += acc;
                }
            }
        }
    }
    out
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub height: usize,
    pub width: usize,
    /// Input in planar (3, H, W) order.
    pub input_planar: Vec<f64>,
    /// Layer-1 pre-activations (8, H, W).
    pub pre1: Vec<f64>,
    /// ReLU outputs (8, H, W).
    pub act1: Vec<f64>,
    pub output: FeatureMap,
}

/// Forward pass keeping intermediates.
pub fn extract_with_trace(img: &ImageF, ext: &ToyExtractor) -> Result<ForwardTrace> {
    if img.channels != IN_CHANNELS {
        return Err(Error::InvalidInput(format!(
            "extractor expects {IN_CHANNELS}-channel input, got {}",
            img.channels
        )));
    }
    if img.height < 2 || img.width < 2 {
        return Err(Error::InvalidInput(
            "reflect padding needs height and width >= 2".into(),
        ));
    }
    let (h, w) = (img.height, img.width);
    let mut planar = vec![0.0; 3 * h * w];
    for p in 0..h * w {
        for c in 0..3 {
            planar[c * h * w + p] = img.data[p * 3 + c];
        }
    }
    let pre1 = conv3x3_reflect(&planar, IN_CHANNELS, h, w, &ext.w1, FEAT_CHANNELS);
    let act1: Vec<f64> = pre1.iter().map(|&v| v.max(0.0)).collect();
    let out = conv3x3_reflect(&act1, FEAT_CHANNELS, h, w, &ext.w2, FEAT_CHANNELS);
    Ok(ForwardTrace {
        height: h,
        width: w,
        input_planar: planar,
        pre1,
        act1,
        output: FeatureMap {
            channels: FEAT_CHANNELS,
            height: h,
            width: w,
            data: out,
        },
    })
}

/// Deterministic feature extraction: conv → ReLU → conv, output H×W×8.
pub fn extract_features(img: &ImageF, ext: &ToyExtractor) -> Result<FeatureMap> {
    Ok(extract_with_trace(img, ext)?.output)
}

/// How the consistency norm reduces over feature elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsNorm {
    /// Plain Euclidean norm over all elements.
    Frobenius,
    /// Euclidean norm divided by sqrt(element count); keeps the loss scale
    /// independent of feature-map size.
    MeanPerElement,
}

#[derive(Debug, Clone)]
pub struct LossConfig {
    /// Weight of the consistency term in the total loss.
    pub lambda: f64,
    pub cons_norm: ConsNorm,
    pub smooth_l1_beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.17,
            cons_norm: ConsNorm::MeanPerElement,
            smooth_l1_beta: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.smooth_l1_beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "smooth_l1_beta must be > 0, got {}",
                self.smooth_l1_beta
            )));
        }
        Ok(())
    }
}

fn scaled_norm(diff_sq_sum: f64, count: usize, norm: ConsNorm) -> f64 {
    let n = diff_sq_sum.sqrt();
    match norm {
        ConsNorm::Frobenius => n,
        ConsNorm::MeanPerElement => n / (count as f64).sqrt(),
    }
}

/// Feature-consistency loss: the Euclidean distance between each image's
/// features and its augmented counterpart's, summed over the two sides.
pub fn consistency_loss(
    f_left: &FeatureMap,
    f_left_aug: &FeatureMap,
    f_right: &FeatureMap,
    f_right_aug: &FeatureMap,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !f_left.same_shape(f_left_aug) || !f_right.same_shape(f_right_aug) {
        return Err(Error::DimensionMismatch(
            "feature maps of an original/augmented pair must match in shape".into(),
        ));
    }
    let term = |a: &FeatureMap, b: &FeatureMap| -> f64 {
        let ss = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
        scaled_norm(ss, a.data.len(), cfg.cons_norm)
    };
    Ok(term(f_left, f_left_aug) + term(f_right, f_right_aug))
}

/// Smooth-L1 disparity loss, averaged over pixels valid in both maps:
/// `0.5·e²/beta` for `|e| < beta`, else `|e| − 0.5·beta`.
pub fn smooth_l1(pred: &DisparityMap, gt: &DisparityMap, beta: f64) -> Result<f64> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(Error::DimensionMismatch(format!(
            "disparity maps differ: {}x{} vs {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.disparity.len() {
        if pred.valid[i] && gt.valid[i] {
            let e = (pred.disparity[i] - gt.disparity[i]).abs();
            sum += if e < beta {
                0.5 * e * e / beta
            } else {
                e - 0.5 * beta
            };
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(sum / n as f64)
}

/// Combined objective: smooth-L1 disparity loss plus `lambda` times the
/// feature-consistency loss.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    pred: &DisparityMap,
    gt: &DisparityMap,
    f_left: &FeatureMap,
    f_left_aug: &FeatureMap,
    f_right: &FeatureMap,
    f_right_aug: &FeatureMap,
    cfg: &LossConfig,
) -> Result<f64> {
    let disp = smooth_l1(pred, gt, cfg.smooth_l1_beta)?;
    let cons = consistency_loss(f_left, f_left_aug, f_right, f_right_aug, cfg)?;
    Ok(disp + cfg.lambda * cons)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_map(v: f64) -> FeatureMap {
        FeatureMap {
            channels: 1,
            height: 1,
            width: 1,
            data: vec![v],
        }
    }

    fn random_image(seed: u64, h: usize, w: usize) -> ImageF {
        let mut s = RngStream::new(
            seed,
            StreamKey {
                pair: 7,
                side: Side::Right,
                channel: 0,
                stat: StatKind::Aux,
            },
        );
        ImageF::from_vec(h, w, 3, (0..h * w * 3).map(|_| s.next_uniform()).collect()).unwrap()
    }

    #[test]
    fn weights_have_documented_shapes() {
        let ext = ToyExtractor::default_frozen();
        assert_eq!(ext.w1.len(), 8 * 3 * 3 * 3);
        assert_eq!(ext.w2.len(), 8 * 8 * 3 * 3);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = ToyExtractor::from_seed(5);
        let b = ToyExtractor::from_seed(5);
        assert_eq!(a, b);
        assert_ne!(a, ToyExtractor::from_seed(6));
    }

    #[test]
    fn zero_image_produces_zero_features() {
        let img = ImageF::zeros(6, 5, 3);
        let f = extract_features(&img, &ToyExtractor::default_frozen()).unwrap();
        assert!(f.data.iter().all(|&v| v == 0.0));
        assert_eq!((f.channels, f.height, f.width), (8, 6, 5));
    }

    #[test]
    fn forward_is_deterministic() {
        let img = random_image(3, 8, 8);
        let ext = ToyExtractor::default_frozen();
        let a = extract_features(&img, &ext).unwrap();
        let b = extract_features(&img, &ext).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn doubling_input_doubles_preactivations_exactly() {
        let img = random_image(4, 7, 9);
        let mut doubled = img.clone();
        for v in &mut doubled.data {
            *v *= 2.0;
        }
        let ext = ToyExtractor::default_frozen();
        let t1 = extract_with_trace(&img, &ext).unwrap();
        let t2 = extract_with_trace(&doubled, &ext).unwrap();
        for (a, b) in t1.pre1.iter().zip(t2.pre1.iter()) {
            assert_eq!(b.to_bits(), (a * 2.0).to_bits());
        }
    }

    #[test]
    fn extractor_rejects_bad_inputs() {
        let ext = ToyExtractor::default_frozen();
        assert!(extract_features(&ImageF::zeros(4, 4, 1), &ext).is_err());
        assert!(extract_features(&ImageF::zeros(1, 4, 3), &ext).is_err());
    }

    #[test]
    fn identical_features_cost_nothing() {
        let f = scalar_map(2.5);
        let lc = consistency_loss(&f, &f, &f, &f, &LossConfig::default()).unwrap();
        assert_eq!(lc, 0.0);
    }

    #[test]
    fn scalar_frobenius_example() {
        let cfg = LossConfig {
            cons_norm: ConsNorm::Frobenius,
            ..Default::default()
        };
        let lc = consistency_loss(
            &scalar_map(2.0),
            &scalar_map(5.0),
            &scalar_map(1.0),
            &scalar_map(1.0),
            &cfg,
        )
        .unwrap();
        assert_eq!(lc, 3.0);
    }

    #[test]
    fn single_element_norm_is_absolute_difference() {
        let cfg = LossConfig {
            cons_norm: ConsNorm::Frobenius,
            ..Default::default()
        };
        let (a, b) = (-0.7, 0.4);
        let lc = consistency_loss(
            &scalar_map(a),
            &scalar_map(0.0),
            &scalar_map(b),
            &scalar_map(0.0),
            &cfg,
        )
        .unwrap();
        assert!((lc - (a.abs() + b.abs())).abs() < 1e-15);
    }

    #[test]
    fn mean_per_element_divides_by_sqrt_count() {
        let mk = |v: f64| FeatureMap {
            channels: 1,
            height: 2,
            width: 2,
            data: vec![v; 4],
        };
        let cfg = LossConfig {
            cons_norm: ConsNorm::MeanPerElement,
            ..Default::default()
        };
        // diff 1 on each of 4 elements: frobenius norm 2, per-element 2/2=1;
        // right side identical maps contribute 0.
        let lc = consistency_loss(&mk(1.0), &mk(0.0), &mk(3.0), &mk(3.0), &cfg).unwrap();
        assert!((lc - 1.0).abs() < 1e-15);
    }

    fn one_pixel(pred: f64, gt: f64) -> (DisparityMap, DisparityMap) {
        let mut p = DisparityMap::new(1, 1);
        p.disparity[0] = pred;
        p.valid[0] = true;
        let mut g = DisparityMap::new(1, 1);
        g.disparity[0] = gt;
        g.valid[0] = true;
        (p, g)
    }

    #[test]
    fn smooth_l1_piecewise_values() {
        let (p, g) = one_pixel(3.0, 3.0);
        assert_eq!(smooth_l1(&p, &g, 1.0).unwrap(), 0.0);
        let (p, g) = one_pixel(3.5, 3.0);
        assert!((smooth_l1(&p, &g, 1.0).unwrap() - 0.125).abs() < 1e-15);
        let (p, g) = one_pixel(5.0, 3.0);
        assert!((smooth_l1(&p, &g, 1.0).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn smooth_l1_requires_overlap() {
        let p = DisparityMap::new(2, 2);
        let g = DisparityMap::new(2, 2);
        assert!(matches!(smooth_l1(&p, &g, 1.0), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn total_loss_weighted_sum() {
        // smooth-L1 = 1.0 (|e| = 1.5, beta 1), consistency = 2.0.
        let (p, g) = one_pixel(4.5, 3.0);
        let cfg = LossConfig {
            cons_norm: ConsNorm::Frobenius,
            ..Default::default()
        };
        let total = total_loss(
            &p,
            &g,
            &scalar_map(1.0),
            &scalar_map(0.0),
            &scalar_map(0.0),
            &scalar_map(1.0),
            &cfg,
        )
        .unwrap();
        assert!((total - 1.34).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_reduces_to_disparity_loss() {
        let (p, g) = one_pixel(4.5, 3.0);
        let cfg = LossConfig {
            lambda: 0.0,
            cons_norm: ConsNorm::Frobenius,
            ..Default::default()
        };
        let total = total_loss(
            &p,
            &g,
            &scalar_map(1.0),
            &scalar_map(0.0),
            &scalar_map(0.0),
            &scalar_map(1.0),
            &cfg,
        )
        .unwrap();
        assert_eq!(total, smooth_l1(&p, &g, 1.0).unwrap());
    }

    #[test]
    fn identity_augmentation_means_pure_disparity_loss() {
        let img_l = random_image(10, 6, 6);
        let img_r = random_image(11, 6, 6);
        let ext = ToyExtractor::default_frozen();
        let fl = extract_features(&img_l, &ext).unwrap();
        let fr = extract_features(&img_r, &ext).unwrap();
        let (p, g) = one_pixel(4.5, 3.0);
        let total = total_loss(&p, &g, &fl, &fl, &fr, &fr, &LossConfig::default()).unwrap();
        assert_eq!(total, smooth_l1(&p, &g, 1.0).unwrap());
    }

    #[test]
    fn consistency_triangle_style_bound() {
        let mut s = RngStream::new(
            77,
            StreamKey {
                pair: 0,
                side: Side::Left,
                channel: 9,
                stat: StatKind::Aux,
            },
        );
        let mut rand_map = || FeatureMap {
            channels: 2,
            height: 3,
            width: 3,
            data: (0..18).map(|_| s.next_gaussian()).collect(),
        };
        let cfg = LossConfig::default();
        for _ in 0..50 {
            let (fl, fl1, fl2) = (rand_map(), rand_map(), rand_map());
            let (fr, fr1, fr2) = (rand_map(), rand_map(), rand_map());
            let lhs = consistency_loss(&fl, &fl2, &fr, &fr2, &cfg).unwrap();
            let via = consistency_loss(&fl, &fl1, &fr, &fr1, &cfg).unwrap();
            let hop = consistency_loss(&fl1, &fl2, &fr1, &fr2, &cfg).unwrap();
            assert!(lhs <= via + hop + 1e-12);
        }
    }
}
