//! KITTI-style disparity PNGs: 16-bit grayscale, disparity = value / 256,
//! stored value 0 means invalid.

use crate::error::{Error, Result};
use crate::stereo::DisparityMap;
use image::{DynamicImage, ImageBuffer, Luma};
use std::io::Cursor;
use std::path::Path;

/// Encodes a disparity map as a 16-bit grayscale PNG buffer. Valid pixels
/// store `round(d · 256)`; invalid pixels store 0. A valid disparity small
/// enough to round to 0 (d < 1/512) is indistinguishable from invalid after
/// encoding and will read back as invalid.
pub fn encode_kitti_disparity(d: &DisparityMap) -> Result<Vec<u8>> {
    let mut img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::new(d.width as u32, d.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let v = if d.valid[i] {
            let q = (d.disparity[i] * 256.0).round();
            if !(0.0..=65535.0).contains(&q) {
                return Err(Error::InvalidInput(format!(
                    "disparity {} out of the encodable range [0, 255.996]",
                    d.disparity[i]
                )));
            }
            q as u16
        } else {
            0
        };
        *px = Luma([v]);
    }
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma16(img).write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_kitti_disparity(path: &Path, d: &DisparityMap) -> Result<()> {
    std::fs::write(path, encode_kitti_disparity(d)?)?;
    Ok(())
}

/// Decodes a 16-bit grayscale PNG buffer into a disparity map.
pub fn decode_kitti_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let gray = match img {
        DynamicImage::ImageLuma16(g) => g,
        other => {
            return Err(Error::InvalidInput(format!(
                "disparity png must be 16-bit grayscale, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut d = DisparityMap::new(h, w);
    for (i, px) in gray.pixels().enumerate() {
        let v = px.0[0];
        if v != 0 {
            d.disparity[i] = v as f64 / 256.0;
            d.valid[i] = true;
        }
    }
    Ok(d)
}

pub fn read_kitti_disparity(path: &Path) -> Result<DisparityMap> {
    decode_kitti_disparity(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_value_16384_reads_as_64px() {
        let mut d = DisparityMap::new(1, 1);
        d.disparity[0] = 64.0;
        d.valid[0] = true;
        let bytes = encode_kitti_disparity(&d).unwrap();
        let back = decode_kitti_disparity(&bytes).unwrap();
        assert!(back.valid[0]);
        assert_eq!(back.disparity[0], 64.0);
    }

    #[test]
    fn zero_means_invalid() {
        let d = DisparityMap::new(2, 2); // all invalid
        let back = decode_kitti_disparity(&encode_kitti_disparity(&d).unwrap()).unwrap();
        assert!(back.valid.iter().all(|&v| !v));
    }

    #[test]
    fn quantized_domain_round_trips_exactly() {
        let mut d = DisparityMap::new(4, 8);
        for i in 0..32 {
            let k = (i * 97 + 1) as u16; // never 0
            d.disparity[i] = k as f64 / 256.0;
            d.valid[i] = true;
        }
        let back = decode_kitti_disparity(&encode_kitti_disparity(&d).unwrap()).unwrap();
        assert_eq!(back.disparity, d.disparity);
        assert_eq!(back.valid, d.valid);
    }

    #[test]
    fn reencoding_a_decoded_file_is_byte_identical() {
        let mut d = DisparityMap::new(5, 7);
        for i in 0..35 {
            d.disparity[i] = (i % 9) as f64 + 0.25;
            d.valid[i] = i % 4 != 0;
        }
        let first = encode_kitti_disparity(&d).unwrap();
        let second = encode_kitti_disparity(&decode_kitti_disparity(&first).unwrap()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn out_of_range_disparity_is_rejected() {
        let mut d = DisparityMap::new(1, 1);
        d.disparity[0] = 300.0;
        d.valid[0] = true;
        assert!(encode_kitti_disparity(&d).is_err());
    }
}
