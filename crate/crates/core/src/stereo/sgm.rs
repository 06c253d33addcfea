//! Hamming cost volume, semi-global aggregation, and winner-take-all
//! disparity selection.

use super::census::CensusMap;
use crate::error::{Error, Result};

/// Matching costs per pixel and disparity candidate,
/// `cost[(h*width + w)*(d_max+1) + d]`, in Hamming-distance units.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub height: usize,
    pub width: usize,
    pub d_max: usize,
    pub cost: Vec<f64>,
}

impl CostVolume {
    #[inline]
    pub fn at(&self, h: usize, w: usize, d: usize) -> f64 {
        self.cost[(h * self.width + w) * (self.d_max + 1) + d]
    }

    /// Maximum possible Hamming distance for `window`; used as the sentinel
    /// cost where a disparity candidate falls outside the right image's
    /// census interior.
    pub fn sentinel(window: usize) -> f64 {
        (window * window - 1) as f64
    }
}

/// Builds the cost volume: `cost[h][w][d]` is the Hamming distance between
/// the left code at `(h, w)` and the right code at `(h, w − d)`. Candidates
/// with `w − d` inside the right border (closer than the window radius) get
/// the sentinel cost.
pub fn build_cost_volume(left: &CensusMap, right: &CensusMap, d_max: usize) -> Result<CostVolume> {
    if left.height != right.height || left.width != right.width {
        return Err(Error::DimensionMismatch(format!(
            "census maps differ: {}x{} vs {}x{}",
            left.height, left.width, right.height, right.width
        )));
    }
    if left.window != right.window {
        return Err(Error::DimensionMismatch(format!(
            "census windows differ: {} vs {}",
            left.window, right.window
        )));
    }
    if d_max >= left.width {
        return Err(Error::InvalidInput(format!(
            "d_max {} must be smaller than image width {}",
            d_max, left.width
        )));
    }
    let (h, w) = (left.height, left.width);
    let radius = left.window / 2;
    let sentinel = CostVolume::sentinel(left.window);
    let mut cost = vec![0.0; h * w * (d_max + 1)];
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * (d_max + 1);
            let lc = left.codes[y * w + x];
            for d in 0..=d_max {
                cost[base + d] = if x >= d && x - d >= radius {
                    (lc ^ right.codes[y * w + x - d]).count_ones() as f64
                } else {
                    sentinel
                };
            }
        }
    }
    Ok(CostVolume {
        height: h,
        width: w,
        d_max,
        cost,
    })
}

/// Number of scanline directions for semi-global aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directions {
    Four,
    Eight,
}

impl Directions {
    /// Direction vectors `(dy, dx)`: the step from the previous pixel of a
    /// path to the current one. Fixed order; aggregation sums over them
    /// sequentially, so results are bit-reproducible.
    pub fn vectors(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (0, 1),
            (0, -1),
            (1, 0),
            (-1, 0),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        match self {
            Directions::Four => &FOUR,
            Directions::Eight => &EIGHT,
        }
    }

    pub fn count(self) -> usize {
        self.vectors().len()
    }
}

/// Smoothness penalties and matcher configuration.
#[derive(Debug, Clone)]
pub struct SgmParams {
    /// Penalty for a one-level disparity change along a path.
    pub p1: f64,
    /// Penalty for larger jumps; must satisfy `p2 >= p1 >= 0`.
    pub p2: f64,
    pub directions: Directions,
    pub census_window: usize,
}

impl Default for SgmParams {
    fn default() -> Self {
        SgmParams {
            p1: 10.0,
            p2: 120.0,
            directions: Directions::Eight,
            census_window: 5,
        }
    }
}

impl SgmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1 >= 0.0 && self.p2 >= self.p1) {
            return Err(Error::InvalidInput(format!(
                "penalties must satisfy p2 >= p1 >= 0, got p1={} p2={}",
                self.p1, self.p2
            )));
        }
        if self.census_window < 3
            || self.census_window % 2 == 0
            || self.census_window > super::census::MAX_WINDOW
        {
            return Err(Error::InvalidInput(format!(
                "census window must be odd, in 3..={}, got {}",
                super::census::MAX_WINDOW,
                self.census_window
            )));
        }
        Ok(())
    }
}

/// Semi-global cost aggregation.
///
/// Along each direction `r`, paths accumulate
/// `L_r(p,d) = C(p,d) + min(L_r(p−r,d), L_r(p−r,d±1)+p1, min_k L_r(p−r,k)+p2)
/// − min_k L_r(p−r,k)`; pixels without a predecessor start at `C(p,d)`. The
/// output is the sum of `L_r` over directions, taken in the fixed order of
/// [`Directions::vectors`].
pub fn sgm_aggregate(vol: &CostVolume, params: &SgmParams) -> Result<CostVolume> {
    params.validate()?;
    let (h, w, dm) = (vol.height, vol.width, vol.d_max);
    let nd = dm + 1;
    let mut sum = vec![0.0; vol.cost.len()];
    let mut dir_buf = vec![0.0; vol.cost.len()];
    let mut prev = vec![0.0; nd];

    for &(dy, dx) in params.directions.vectors() {
        // Sweep so the predecessor along (dy, dx) is always computed first.
        let rows: Vec<usize> = if dy >= 0 {
            (0..h).collect()
        } else {
            (0..h).rev().collect()
        };
        let cols: Vec<usize> = if dx >= 0 {
            (0..w).collect()
        } else {
            (0..w).rev().collect()
        };
        for &y in &rows {
            for &x in &cols {
                let base = (y * w + x) * nd;
                let py = y as isize - dy;
                let px = x as isize - dx;
                if py < 0 || py >= h as isize || px < 0 || px >= w as isize {
                    dir_buf[base..base + nd].copy_from_slice(&vol.cost[base..base + nd]);
                    continue;
                }
                let pbase = (py as usize * w + px as usize) * nd;
                prev.copy_from_slice(&dir_buf[pbase..pbase + nd]);
                let min_prev = prev.iter().cloned().fold(f64::INFINITY, f64::min);
                for d in 0..nd {
                    let mut best = prev[d];
                    if d > 0 {
                        best = best.min(prev[d - 1] + params.p1);
                    }
                    if d + 1 < nd {
                        best = best.min(prev[d + 1] + params.p1);
                    }
                    best = best.min(min_prev + params.p2);
                    dir_buf[base + d] = vol.cost[base + d] + best - min_prev;
                }
            }
        }
        for (s, v) in sum.iter_mut().zip(dir_buf.iter()) {
            *s += *v;
        }
    }
    Ok(CostVolume {
        height: h,
        width: w,
        d_max: dm,
        cost: sum,
    })
}

/// Per-pixel disparity with a validity mask. Disparities live in the left
/// image's frame and are non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub height: usize,
    pub width: usize,
    pub disparity: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DisparityMap {
    pub fn new(height: usize, width: usize) -> Self {
        DisparityMap {
            height,
            width,
            disparity: vec![0.0; height * width],
            valid: vec![false; height * width],
        }
    }

    #[inline]
    pub fn at(&self, h: usize, w: usize) -> (f64, bool) {
        let i = h * self.width + w;
        (self.disparity[i], self.valid[i])
    }
}

/// Winner-take-all disparity selection with parabolic subpixel refinement.
///
/// The integer argmin breaks ties toward the smaller disparity. When the
/// winner is interior (0 < d < d_max) and the three costs around it form a
/// proper upward parabola, the vertex offset
/// `(c_{d−1} − c_{d+1}) / (2·(c_{d−1} − 2c_d + c_{d+1}))` is added, but only
/// if it lands strictly inside (−0.5, 0.5); otherwise the integer value
/// stands. Every pixel is marked valid (border and occlusion filtering
/// happen downstream).
pub fn wta_subpixel(vol: &CostVolume) -> DisparityMap {
    let (h, w, dm) = (vol.height, vol.width, vol.d_max);
    let nd = dm + 1;
    let mut out = DisparityMap::new(h, w);
    for p in 0..h * w {
        let costs = &vol.cost[p * nd..(p + 1) * nd];
        let mut best = 0usize;
        for d in 1..nd {
            if costs[d] < costs[best] {
                best = d;
            }
        }
        let mut disp = best as f64;
        if best > 0 && best < dm {
            let (c0, c1, c2) = (costs[best - 1], costs[best], costs[best + 1]);
            let denom = c0 - 2.0 * c1 + c2;
            if denom > 0.0 {
                let offset = (c0 - c2) / (2.0 * denom);
                if offset > -0.5 && offset < 0.5 {
                    disp += offset;
                }
            }
        }
        out.disparity[p] = disp;
        out.valid[p] = true;
    }
    out
}
