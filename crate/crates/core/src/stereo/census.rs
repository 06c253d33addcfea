//! Census transform: per-pixel bitstrings of intensity-order comparisons.

use crate::error::{Error, Result};
use crate::image::ImageF;

/// Census codes for one image. `codes[h*width + w]` holds one bit per
/// neighbor of the window (window² − 1 bits, LSB first, neighbors enumerated
/// in row-major window order, center excluded). Pixels closer than the
/// window radius to any border are flagged invalid and carry an all-zero
/// code.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusMap {
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub codes: Vec<u128>,
    pub valid: Vec<bool>,
}

/// Largest supported census window (11² − 1 = 120 bits fit a `u128` code).
pub const MAX_WINDOW: usize = 11;

/// Computes the census transform of a single-channel image.
///
/// Bit k of a code is 1 iff the k-th neighbor is strictly darker than the
/// center; ties contribute 0. Codes therefore depend only on the ordering of
/// intensities inside each window, which makes them exactly invariant under
/// any positive-gain affine intensity map.
pub fn census_transform(gray: &ImageF, window: usize) -> Result<CensusMap> {
    if gray.channels != 1 {
        return Err(Error::InvalidInput(format!(
            "census transform expects a single-channel image, got {} channels",
            gray.channels
        )));
    }
    if window < 3 || window % 2 == 0 || window > MAX_WINDOW {
        return Err(Error::InvalidInput(format!(
            "census window must be odd, in 3..={MAX_WINDOW}, got {window}"
        )));
    }
    if window > gray.height || window > gray.width {
        return Err(Error::InvalidInput(format!(
            "census window {window} larger than image {}x{}",
            gray.height, gray.width
        )));
    }
    let (h, w) = (gray.height, gray.width);
    let r = window / 2;
    let mut codes = vec![0u128; h * w];
    let mut valid = vec![false; h * w];
    for y in r..h - r {
        for x in r..w - r {
            let center = gray.data[y * w + x];
            let mut code = 0u128;
            let mut k = 0u32;
            for dy in 0..window {
                for dx in 0..window {
                    if dy == r && dx == r {
                        continue;
                    }
                    let v = gray.data[(y + dy - r) * w + (x + dx - r)];
                    if v < center {
                        code |= 1u128 << k;
                    }
                    k += 1;
                }
            }
            codes[y * w + x] = code;
            valid[y * w + x] = true;
        }
    }
    Ok(CensusMap {
        height: h,
        width: w,
        window,
        codes,
        valid,
    })
}
