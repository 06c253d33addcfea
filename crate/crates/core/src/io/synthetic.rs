//! Synthetic oracle scenes: textured stereo pairs with exactly known
//! disparity, used to probe the matcher and the geometry-preservation
//! properties of augmentation.

use crate::error::{Error, Result};
use crate::image::{ImageF, StereoPair};
use crate::rng::{RngStream, Side, StatKind, StreamKey};
use crate::stereo::DisparityMap;

/// Separable box blur with the given radius; borders clamp.
fn box_blur(data: &mut Vec<f64>, h: usize, w: usize, radius: isize) {
    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dx in -radius..=radius {
                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                acc += data[y * w + xx];
            }
            tmp[y * w + x] = acc / (2 * radius + 1) as f64;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -radius..=radius {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                acc += tmp[yy * w + x];
            }
            data[y * w + x] = acc / (2 * radius + 1) as f64;
        }
    }
}

/// Normalizes a buffer to [0, 1] by its own min-max (no-op on a constant
/// buffer, which cannot happen for non-degenerate noise).
fn normalize01(data: &mut [f64]) {
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        for v in data.iter_mut() {
            *v = (*v - lo) / (hi - lo);
        }
    }
}

/// Builds a smoothed-noise RGB texture of the given size. Channels mix a
/// shared luminance layer with per-channel detail so they are correlated but
/// not identical, and a per-seed brightness/contrast jitter maps values into
/// a seed-dependent subrange of (0, 1) — batches of scenes built from
/// different seeds therefore carry genuine statistic spread.
pub fn make_texture(seed: u64, h: usize, w: usize) -> ImageF {
    let noise = |channel: u8, n: usize| -> Vec<f64> {
        let mut s = RngStream::new(
            seed,
            StreamKey {
                pair: 0,
                side: Side::Left,
                channel,
                stat: StatKind::Aux,
            },
        );
        (0..n).map(|_| s.next_uniform()).collect()
    };
    let mut base = noise(0, h * w);
    box_blur(&mut base, h, w, 2);
    normalize01(&mut base);

    let mut img = ImageF::zeros(h, w, 3);
    for c in 0..3u8 {
        let mut chan = noise(c + 1, h * w);
        box_blur(&mut chan, h, w, 1);
        normalize01(&mut chan);
        for p in 0..h * w {
            img.data[p * 3 + c as usize] = 0.5 * base[p] + 0.5 * chan[p];
        }
    }
    normalize01(&mut img.data);

    // Brightness/contrast jitter: values land in [b, a+b] ⊂ (0, 1).
    let mut js = RngStream::new(
        seed,
        StreamKey {
            pair: 0,
            side: Side::Left,
            channel: 255,
            stat: StatKind::Aux,
        },
    );
    let a = 0.6 + 0.3 * js.next_uniform();
    let b = 0.05 + (0.95 - a - 0.05) * js.next_uniform();
    for v in &mut img.data {
        *v = a * *v + b;
    }
    img
}

/// Builds a rectified stereo pair with a constant-disparity plane.
///
/// A texture of width `w + shift` is generated; the left image takes its
/// columns `[0, w)` and the right image columns `[shift, w + shift)`, so the
/// scene point at left pixel `(y, x)` sits at right pixel `(y, x − shift)`.
/// Ground truth is the constant plane `shift`, with the leftmost `shift`
/// columns invalid (their correspondence falls outside the right image).
pub fn make_synthetic_pair(
    seed: u64,
    h: usize,
    w: usize,
    shift: usize,
) -> Result<(StereoPair, DisparityMap)> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidInput("scene dimensions must be positive".into()));
    }
    if shift >= w {
        return Err(Error::InvalidInput(format!(
            "shift {shift} must be smaller than width {w}"
        )));
    }
    let tex = make_texture(seed, h, w + shift);
    let mut left = ImageF::zeros(h, w, 3);
    let mut right = ImageF::zeros(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                left.data[(y * w + x) * 3 + c] = tex.get(y, x, c);
                right.data[(y * w + x) * 3 + c] = tex.get(y, x + shift, c);
            }
        }
    }
    let mut gt = DisparityMap::new(h, w);
    for y in 0..h {
        for x in 0..w {
            gt.disparity[y * w + x] = shift as f64;
            gt.valid[y * w + x] = x >= shift;
        }
    }
    Ok((StereoPair::new(left, right)?, gt))
}
