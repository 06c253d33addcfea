//! Disparity evaluation metrics and diagnostic artifacts: end-point error,
//! bad-pixel rate at a threshold, per-channel histograms, and error maps.

use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::loss::FeatureMap;
use crate::stereo::DisparityMap;

/// End-point error plus the bad-pixel count at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Mean absolute disparity error over jointly valid pixels.
    pub epe: f64,
    /// `n_bad / n_valid`.
    pub d1: f64,
    pub threshold: f64,
    pub n_valid: usize,
    /// Pixels with error strictly greater than the threshold; a pixel whose
    /// error equals the threshold exactly counts as good.
    pub n_bad: usize,
}

fn check_dims(pred: &DisparityMap, gt: &DisparityMap) -> Result<()> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(Error::DimensionMismatch(format!(
            "disparity maps differ: {}x{} vs {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    Ok(())
}

/// Mean absolute error over pixels valid in both maps.
///
/// The sum runs sequentially in row-major order. That fixed order makes the
/// result an exact, reproducible function of the inputs, directly comparable
/// against an independently written per-pixel reference.
pub fn compute_epe(pred: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    check_dims(pred, gt)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.disparity.len() {
        if pred.valid[i] && gt.valid[i] {
            sum += (pred.disparity[i] - gt.disparity[i]).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(sum / n as f64)
}

/// Bad-pixel rate: the fraction of jointly valid pixels whose absolute error
/// strictly exceeds `threshold`. Also reports the EPE from the same pass.
pub fn compute_d1(pred: &DisparityMap, gt: &DisparityMap, threshold: f64) -> Result<MetricReport> {
    check_dims(pred, gt)?;
    let mut sum = 0.0;
    let mut n_valid = 0usize;
    let mut n_bad = 0usize;
    for i in 0..pred.disparity.len() {
        if pred.valid[i] && gt.valid[i] {
            let e = (pred.disparity[i] - gt.disparity[i]).abs();
            sum += e;
            n_valid += 1;
            if e > threshold {
                n_bad += 1;
            }
        }
    }
    if n_valid == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(MetricReport {
        epe: sum / n_valid as f64,
        d1: n_bad as f64 / n_valid as f64,
        threshold,
        n_valid,
        n_bad,
    })
}

pub const HIST_BINS: usize = 256;

/// 256 equal-width bins over `[lo, hi]`, counts and normalized frequencies
/// per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// `counts[channel][bin]`; per channel the counts sum to the pixel count.
    pub counts: Vec<Vec<u64>>,
    /// `counts` divided by the per-channel total.
    pub freqs: Vec<Vec<f64>>,
}

impl Histogram {
    fn from_counts(lo: f64, hi: f64, counts: Vec<Vec<u64>>) -> Self {
        let freqs = counts
            .iter()
            .map(|ch| {
                let total: u64 = ch.iter().sum();
                let denom = if total == 0 { 1.0 } else { total as f64 };
                ch.iter().map(|&c| c as f64 / denom).collect()
            })
            .collect();
        Histogram {
            lo,
            hi,
            counts,
            freqs,
        }
    }

    /// Mean of the distribution using bin centers.
    pub fn mean(&self, channel: usize) -> f64 {
        let width = (self.hi - self.lo) / HIST_BINS as f64;
        self.freqs[channel]
            .iter()
            .enumerate()
            .map(|(b, &f)| f * (self.lo + (b as f64 + 0.5) * width))
            .sum()
    }
}

/// Per-channel histogram of image samples over the fixed range [0, 1].
/// Out-of-range samples (possible on unclipped augmented images) clamp into
/// the end bins.
pub fn image_histogram(img: &ImageF) -> Histogram {
    let c = img.channels;
    let mut counts = vec![vec![0u64; HIST_BINS]; c];
    for (i, &v) in img.data.iter().enumerate() {
        let bin = ((v * HIST_BINS as f64).floor() as i64).clamp(0, HIST_BINS as i64 - 1) as usize;
        counts[i % c][bin] += 1;
    }
    Histogram::from_counts(0.0, 1.0, counts)
}

/// Histogram of the per-pixel channel mean of a feature map, binned over the
/// observed min–max range (recorded in `lo`/`hi`). A constant feature map
/// puts all mass in bin 0.
pub fn feature_histogram(fm: &FeatureMap) -> Histogram {
    let pixels = fm.height * fm.width;
    let plane = pixels;
    let mut means = vec![0.0f64; pixels];
    for c in 0..fm.channels {
        for p in 0..pixels {
            means[p] += fm.data[c * plane + p];
        }
    }
    for m in &mut means {
        *m /= fm.channels as f64;
    }
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![vec![0u64; HIST_BINS]];
    if hi > lo {
        let scale = HIST_BINS as f64 / (hi - lo);
        for &m in &means {
            let bin = (((m - lo) * scale).floor() as i64).clamp(0, HIST_BINS as i64 - 1) as usize;
            counts[0][bin] += 1;
        }
    } else {
        counts[0][0] = pixels as u64;
    }
    Histogram::from_counts(lo, hi, counts)
}

/// Errors at or above this many pixels saturate the error-map ramp.
pub const DEFAULT_ERROR_CLIP: f64 = 5.0;

/// Renders per-pixel |pred − gt| through a fixed color ramp and returns the
/// image together with the scalar EPE (for a sidecar annotation).
///
/// Ramp: error 0 → black (0,0,0); error ≥ `clip` → pure red (1,0,0); linear
/// in between, red channel only. Pixels invalid in either map are black.
pub fn error_map(pred: &DisparityMap, gt: &DisparityMap, clip: f64) -> Result<(ImageF, f64)> {
    let epe = compute_epe(pred, gt)?;
    let mut img = ImageF::zeros(pred.height, pred.width, 3);
    for i in 0..pred.disparity.len() {
        if pred.valid[i] && gt.valid[i] {
            let e = (pred.disparity[i] - gt.disparity[i]).abs();
            img.data[i * 3] = (e / clip).min(1.0);
        }
    }
    Ok((img, epe))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, Side, StatKind, StreamKey};

    fn map_from(vals: &[f64], valid: &[bool], w: usize) -> DisparityMap {
        DisparityMap {
            height: vals.len() / w,
            width: w,
            disparity: vals.to_vec(),
            valid: valid.to_vec(),
        }
    }

    #[test]
    fn epe_zero_when_equal() {
        let m = map_from(&[1.0, 2.0, 3.0, 4.0], &[true; 4], 2);
        assert_eq!(compute_epe(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn epe_constant_offset() {
        let gt = map_from(&[1.0, 2.0, 3.0, 4.0], &[true; 4], 2);
        let pred = map_from(&[2.0, 3.0, 4.0, 5.0], &[true; 4], 2);
        assert_eq!(compute_epe(&pred, &gt).unwrap(), 1.0);
    }

    #[test]
    fn epe_over_partial_mask() {
        let gt = map_from(
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[true, true, true, true, false, false],
            3,
        );
        let pred = map_from(
            &[0.0, 1.0, 2.0, 5.0, 9.0, 9.0],
            &[true, true, true, true, true, false],
            3,
        );
        assert_eq!(compute_epe(&pred, &gt).unwrap(), 2.0);
    }

    #[test]
    fn epe_requires_overlap() {
        let a = map_from(&[0.0; 4], &[false; 4], 2);
        assert!(matches!(compute_epe(&a, &a), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn d1_counts_bad_pixels() {
        let n = 100;
        let gt = map_from(&vec![0.0; n], &vec![true; n], 10);
        let mut vals = vec![0.0; n];
        for v in vals.iter_mut().take(50) {
            *v = 5.0;
        }
        let pred = map_from(&vals, &vec![true; n], 10);
        let rep = compute_d1(&pred, &gt, 3.0).unwrap();
        assert_eq!(rep.d1, 0.5);
        assert_eq!(rep.n_valid, 100);
        assert_eq!(rep.n_bad, 50);
    }

    #[test]
    fn error_equal_to_threshold_is_good() {
        let gt = map_from(&[0.0], &[true], 1);
        let pred = map_from(&[3.0], &[true], 1);
        assert_eq!(compute_d1(&pred, &gt, 3.0).unwrap().n_bad, 0);
        assert_eq!(compute_d1(&pred, &gt, 2.999).unwrap().n_bad, 1);
    }

    #[test]
    fn d1_antitone_in_threshold() {
        let mut s = RngStream::new(
            9,
            StreamKey {
                pair: 0,
                side: Side::Left,
                channel: 0,
                stat: StatKind::Aux,
            },
        );
        let n = 400;
        let gt_vals: Vec<f64> = (0..n).map(|_| 10.0 * s.next_uniform()).collect();
        let pred_vals: Vec<f64> = gt_vals
            .iter()
            .map(|v| v + 6.0 * (s.next_uniform() - 0.5))
            .collect();
        let valid: Vec<bool> = (0..n).map(|_| s.next_uniform() > 0.3).collect();
        let gt = map_from(&gt_vals, &valid, 20);
        let pred = map_from(&pred_vals, &vec![true; n], 20);
        let d3 = compute_d1(&pred, &gt, 3.0).unwrap().d1;
        let d2 = compute_d1(&pred, &gt, 2.0).unwrap().d1;
        let d1 = compute_d1(&pred, &gt, 1.0).unwrap().d1;
        assert!(d1 >= d2 && d2 >= d3);
    }

    #[test]
    fn constant_image_fills_one_bin() {
        let img = ImageF::constant(4, 4, 3, 0.5);
        let h = image_histogram(&img);
        for c in 0..3 {
            assert_eq!(h.counts[c][128], 16);
            assert_eq!(h.counts[c].iter().sum::<u64>(), 16);
        }
    }

    #[test]
    fn ramp_fills_every_bin_once() {
        let data: Vec<f64> = (0..256).map(|k| k as f64 / 255.0).collect();
        let img = ImageF::from_vec(16, 16, 1, data).unwrap();
        let h = image_histogram(&img);
        assert!(h.counts[0].iter().all(|&c| c == 1));
    }

    #[test]
    fn out_of_range_values_clamp_into_end_bins() {
        let img = ImageF::from_vec(1, 3, 1, vec![-0.5, 0.5, 1.7]).unwrap();
        let h = image_histogram(&img);
        assert_eq!(h.counts[0][0], 1);
        assert_eq!(h.counts[0][128], 1);
        assert_eq!(h.counts[0][255], 1);
    }

    #[test]
    fn histogram_is_permutation_invariant() {
        let img = ImageF::from_vec(2, 3, 1, vec![0.1, 0.4, 0.9, 0.2, 0.6, 0.3]).unwrap();
        let mut rev = img.clone();
        rev.data.reverse();
        assert_eq!(image_histogram(&img), image_histogram(&rev));
    }

    #[test]
    fn feature_histogram_records_observed_range() {
        let fm = FeatureMap {
            channels: 2,
            height: 1,
            width: 3,
            data: vec![0.0, 2.0, 4.0, 2.0, 2.0, 2.0],
        };
        // Channel means per pixel: 1.0, 2.0, 3.0.
        let h = feature_histogram(&fm);
        assert_eq!(h.lo, 1.0);
        assert_eq!(h.hi, 3.0);
        assert_eq!(h.counts[0].iter().sum::<u64>(), 3);
        // Constant map: everything in bin 0.
        let flat = FeatureMap {
            channels: 1,
            height: 2,
            width: 2,
            data: vec![5.0; 4],
        };
        let h = feature_histogram(&flat);
        assert_eq!(h.counts[0][0], 4);
    }

    #[test]
    fn error_map_ramp() {
        let gt = map_from(&[0.0, 0.0, 0.0, 0.0], &[true, true, true, false], 2);
        let pred = map_from(&[0.0, 2.5, 7.0, 1.0], &[true; 4], 2);
        let (img, epe) = error_map(&pred, &gt, 5.0).unwrap();
        assert!((epe - (0.0 + 2.5 + 7.0) / 3.0).abs() < 1e-12);
        assert_eq!(&img.data[0..3], &[0.0, 0.0, 0.0]); // exact → black
        assert_eq!(&img.data[3..6], &[0.5, 0.0, 0.0]); // half the clip
        assert_eq!(&img.data[6..9], &[1.0, 0.0, 0.0]); // saturated
        assert_eq!(&img.data[9..12], &[0.0, 0.0, 0.0]); // invalid → black
    }
}
