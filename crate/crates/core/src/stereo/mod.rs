//! Training-free classical stereo pipeline: census transform → Hamming cost
//! volume → semi-global aggregation → winner-take-all with subpixel
//! refinement → left-right consistency check.
//!
//! The matcher is deterministic and parameter-free in the learned sense, so
//! it serves as a fixed probe: augmentations that preserve scene geometry
//! should leave its output (and the derived metrics) essentially unchanged.

pub mod census;
pub mod sgm;

pub use census::{census_transform, CensusMap, MAX_WINDOW};
pub use sgm::{build_cost_volume, sgm_aggregate, wta_subpixel, CostVolume, Directions, DisparityMap, SgmParams};

use crate::error::Result;
use crate::image::StereoPair;

/// Default disagreement tolerance (pixels) for the left-right check.
pub const DEFAULT_LR_TOLERANCE: f64 = 1.0;

/// Invalidates left-image pixels whose disparity disagrees with the right
/// image's by more than `tol` pixels.
///
/// For a left pixel `p = (y, x)` with disparity `d`, the corresponding right
/// pixel is `(y, round(x − d))`. The pixel is invalidated when that column
/// falls outside the image, the right disparity there is itself invalid, or
/// `|d_left(p) − d_right(p − d)| > tol`. Occluded regions fail this test
/// because the occluder wins the right image's matching.
pub fn lr_consistency_check(
    d_left: &DisparityMap,
    d_right: &DisparityMap,
    tol: f64,
) -> DisparityMap {
    let mut out = d_left.clone();
    let w = d_left.width;
    for y in 0..d_left.height {
        for x in 0..w {
            let i = y * w + x;
            if !out.valid[i] {
                continue;
            }
            let d = out.disparity[i];
            let xr = (x as f64 - d).round();
            if xr < 0.0 || xr >= w as f64 {
                out.valid[i] = false;
                continue;
            }
            let j = y * w + xr as usize;
            if !d_right.valid[j] || (d - d_right.disparity[j]).abs() > tol {
                out.valid[i] = false;
            }
        }
    }
    out
}

/// Disparity of the right image (offsets toward the left image), computed
/// with the same matcher by mirroring: flip both images horizontally, match
/// with the right image as reference, and unflip the result. Mirroring maps
/// the rightward correspondence `x_R = x_L − d` onto the standard leftward
/// form, so no second code path is needed.
fn match_right(pair: &StereoPair, params: &SgmParams, d_max: usize) -> Result<DisparityMap> {
    let flipped_left = pair.right.flip_horizontal();
    let flipped_right = pair.left.flip_horizontal();
    let d = match_one_side(&flipped_left, &flipped_right, params, d_max)?;
    let mut out = DisparityMap::new(d.height, d.width);
    let w = d.width;
    for y in 0..d.height {
        for x in 0..w {
            out.disparity[y * w + x] = d.disparity[y * w + (w - 1 - x)];
            out.valid[y * w + x] = d.valid[y * w + (w - 1 - x)];
        }
    }
    Ok(out)
}

/// Census → cost volume → aggregation → WTA for one reference image. Census
/// border pixels are marked invalid in the result.
fn match_one_side(
    reference: &crate::image::ImageF,
    other: &crate::image::ImageF,
    params: &SgmParams,
    d_max: usize,
) -> Result<DisparityMap> {
    let gray_ref = reference.to_luma()?;
    let gray_other = other.to_luma()?;
    let census_ref = census_transform(&gray_ref, params.census_window)?;
    let census_other = census_transform(&gray_other, params.census_window)?;
    let vol = build_cost_volume(&census_ref, &census_other, d_max)?;
    let agg = sgm_aggregate(&vol, params)?;
    let mut disp = wta_subpixel(&agg);
    for (v, cv) in disp.valid.iter_mut().zip(census_ref.valid.iter()) {
        *v = *v && *cv;
    }
    Ok(disp)
}

/// Full stereo pipeline for a rectified pair, returning the left-image
/// disparity after the left-right consistency check.
///
/// Steps: luma conversion (weights 0.299/0.587/0.114) → census transform →
/// Hamming cost volume → semi-global aggregation → winner-take-all with
/// subpixel refinement, run once for each side; then the left map is
/// filtered by [`lr_consistency_check`] with tolerance `lr_tol`.
pub fn match_pair(
    pair: &StereoPair,
    params: &SgmParams,
    d_max: usize,
    lr_tol: f64,
) -> Result<DisparityMap> {
    params.validate()?;
    let d_left = match_one_side(&pair.left, &pair.right, params, d_max)?;
    let d_right = match_right(pair, params, d_max)?;
    Ok(lr_consistency_check(&d_left, &d_right, lr_tol))
}
