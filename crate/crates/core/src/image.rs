//! Dense real-valued image containers and elementwise numeric utilities.

use crate::error::{Error, Result};

/// Dense H×W×C image of `f64` samples in row-major, channel-interleaved
/// order: `data[(h*width + w)*channels + c]`.
///
/// Values are nominally in `[0, 1]`. Out-of-range values are legal only on
/// images whose `unclipped` flag is set (augmentation output before export
/// clipping).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    /// Set on augmentation output produced without clipping; such images may
    /// carry values outside `[0, 1]`.
    pub unclipped: bool,
}

impl ImageF {
    /// All-zero image.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ImageF {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            unclipped: false,
        }
    }

    /// Wraps an existing buffer; `data.len()` must equal `h*w*c` and every
    /// element must be finite.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "buffer length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "image contains non-finite sample {bad}"
            )));
        }
        Ok(ImageF {
            height,
            width,
            channels,
            data,
            unclipped: false,
        })
    }

    /// Constant-valued image.
    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        ImageF {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
            unclipped: false,
        }
    }

    #[inline]
    pub fn idx(&self, h: usize, w: usize, c: usize) -> usize {
        (h * self.width + w) * self.channels + c
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        self.data[self.idx(h, w, c)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, c: usize, v: f64) {
        let i = self.idx(h, w, c);
        self.data[i] = v;
    }

    /// Number of spatial positions (H·W).
    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Converts an RGB image to single-channel luma with the fixed weights
    /// 0.299, 0.587, 0.114. A 1-channel image passes through unchanged.
    pub fn to_luma(&self) -> Result<ImageF> {
        match self.channels {
            1 => Ok(self.clone()),
            3 => {
                let mut out = ImageF::zeros(self.height, self.width, 1);
                for p in 0..self.pixels() {
                    let r = self.data[p * 3];
                    let g = self.data[p * 3 + 1];
                    let b = self.data[p * 3 + 2];
                    out.data[p] = 0.299 * r + 0.587 * g + 0.114 * b;
                }
                out.unclipped = self.unclipped;
                Ok(out)
            }
            c => Err(Error::InvalidInput(format!(
                "luma conversion expects 1 or 3 channels, got {c}"
            ))),
        }
    }

    /// Mirrors the image about its vertical axis (left-right flip).
    pub fn flip_horizontal(&self) -> ImageF {
        let mut out = self.clone();
        for h in 0..self.height {
            for w in 0..self.width {
                let src = (h * self.width + (self.width - 1 - w)) * self.channels;
                let dst = (h * self.width + w) * self.channels;
                for c in 0..self.channels {
                    out.data[dst + c] = self.data[src + c];
                }
            }
        }
        out
    }

    /// Clamps every sample into `[0, 1]` and clears the `unclipped` flag.
    pub fn clipped01(&self) -> ImageF {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = v.clamp(0.0, 1.0);
        }
        out.unclipped = false;
        out
    }
}

/// Per-channel affine map: `out[c,h,w] = gain[c]·img[c,h,w] + bias[c]`.
///
/// Dimensions are preserved. Rejects non-finite gains or biases and a
/// coefficient count that does not match the image's channel count.
pub fn elementwise_affine(img: &ImageF, gain: &[f64], bias: &[f64]) -> Result<ImageF> {
    if gain.len() != img.channels || bias.len() != img.channels {
        return Err(Error::DimensionMismatch(format!(
            "{} gains / {} biases for a {}-channel image",
            gain.len(),
            bias.len(),
            img.channels
        )));
    }
    if gain.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "affine gain/bias must be finite".into(),
        ));
    }
    let mut out = img.clone();
    let c = img.channels;
    for (i, v) in out.data.iter_mut().enumerate() {
        let ch = i % c;
        *v = gain[ch] * *v + bias[ch];
    }
    Ok(out)
}

/// A rectified stereo pair. Both images share dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoPair {
    pub left: ImageF,
    pub right: ImageF,
}

impl StereoPair {
    pub fn new(left: ImageF, right: ImageF) -> Result<Self> {
        if left.height != right.height
            || left.width != right.width
            || left.channels != right.channels
        {
            return Err(Error::DimensionMismatch(format!(
                "stereo pair images differ: {}x{}x{} vs {}x{}x{}",
                left.height, left.width, left.channels, right.height, right.width, right.channels
            )));
        }
        Ok(StereoPair { left, right })
    }
}

/// Non-empty sequence of images with a uniform channel count; spatial
/// dimensions may differ between members.
#[derive(Debug, Clone)]
pub struct ImageBatch {
    pub images: Vec<ImageF>,
}

impl ImageBatch {
    pub fn new(images: Vec<ImageF>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidInput("batch must be non-empty".into()))?;
        let channels = first.channels;
        if images.iter().any(|im| im.channels != channels) {
            return Err(Error::DimensionMismatch(
                "batch images must share a channel count".into(),
            ));
        }
        Ok(ImageBatch { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_is_bit_identical() {
        let img = ImageF::from_vec(2, 2, 3, (0..12).map(|i| i as f64 / 11.0).collect()).unwrap();
        let out = elementwise_affine(&img, &[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(out.data, img.data);
    }

    #[test]
    fn affine_on_constant_image() {
        let img = ImageF::constant(3, 4, 3, 0.5);
        let out = elementwise_affine(&img, &[2.0, 2.0, 2.0], &[-0.25, -0.25, -0.25]).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.75));
    }

    #[test]
    fn affine_direct_substitution() {
        let img = ImageF::from_vec(2, 1, 1, vec![0.1, 0.9]).unwrap();
        let out = elementwise_affine(&img, &[0.5], &[0.2]).unwrap();
        assert!((out.data[0] - 0.25).abs() < 1e-15);
        assert!((out.data[1] - 0.65).abs() < 1e-15);
    }

    #[test]
    fn affine_rejects_non_finite() {
        let img = ImageF::constant(2, 2, 1, 0.5);
        assert!(elementwise_affine(&img, &[f64::NAN], &[0.0]).is_err());
        assert!(elementwise_affine(&img, &[1.0], &[f64::INFINITY]).is_err());
    }

    #[test]
    fn affine_rejects_channel_mismatch() {
        let img = ImageF::constant(2, 2, 3, 0.5);
        assert!(elementwise_affine(&img, &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn from_vec_validates_length_and_finiteness() {
        assert!(ImageF::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageF::from_vec(2, 2, 1, vec![0.0, 0.0, f64::NAN, 0.0]).is_err());
        assert!(ImageF::from_vec(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn luma_weights() {
        let mut img = ImageF::zeros(1, 1, 3);
        img.data = vec![1.0, 0.0, 0.0];
        assert!((img.to_luma().unwrap().data[0] - 0.299).abs() < 1e-15);
        img.data = vec![0.0, 1.0, 0.0];
        assert!((img.to_luma().unwrap().data[0] - 0.587).abs() < 1e-15);
        img.data = vec![0.0, 0.0, 1.0];
        assert!((img.to_luma().unwrap().data[0] - 0.114).abs() < 1e-15);
    }

    #[test]
    fn flip_horizontal_involution() {
        let img = ImageF::from_vec(2, 3, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let flipped = img.flip_horizontal();
        assert_eq!(flipped.data, vec![3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        assert_eq!(flipped.flip_horizontal().data, img.data);
    }

    #[test]
    fn pair_requires_matching_dims() {
        let a = ImageF::zeros(2, 2, 3);
        let b = ImageF::zeros(2, 3, 3);
        assert!(StereoPair::new(a.clone(), a.clone()).is_ok());
        assert!(StereoPair::new(a, b).is_err());
    }
}
