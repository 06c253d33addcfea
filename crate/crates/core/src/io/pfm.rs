//! PFM (portable float map) reader and writer.
//!
//! Format: ASCII header of three tokens — magic (`Pf` for 1 channel, `PF`
//! for 3), `width height`, and a scale factor whose sign encodes byte order
//! (negative ⇒ little-endian) — followed by exactly one whitespace byte and
//! the raw 32-bit float payload. Rows are stored bottom-to-top and flipped
//! on load, so in-memory data is top-to-bottom.

use crate::error::{Error, Result};
use crate::stereo::DisparityMap;
use std::fs;
use std::path::Path;

/// Decoded PFM payload, rows top-to-bottom, channel-interleaved. Kept as raw
/// `f32` because disparity files legitimately contain non-finite samples
/// (occluded/unknown pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct PfmData {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    /// Scale factor as stored in the header (sign already consumed for byte
    /// order; this keeps the original signed value).
    pub scale: f64,
}

fn is_pfm_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

/// Reads one whitespace-delimited ASCII token starting at `*pos`.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && is_pfm_whitespace(bytes[*pos]) {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !is_pfm_whitespace(bytes[*pos]) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::PfmHeader("unexpected end of header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::PfmHeader("header contains non-ASCII bytes".into()))
}

/// Parses a PFM byte buffer.
pub fn parse_pfm(bytes: &[u8]) -> Result<PfmData> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic {
        "Pf" => 1usize,
        "PF" => 3usize,
        other => {
            return Err(Error::PfmHeader(format!(
                "magic must be Pf or PF, got {other:?}"
            )))
        }
    };
    let width: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|e| Error::PfmHeader(format!("width: {e}")))?;
    let height: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|e| Error::PfmHeader(format!("height: {e}")))?;
    let scale: f64 = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|e| Error::PfmHeader(format!("scale: {e}")))?;
    if scale == 0.0 {
        return Err(Error::PfmHeader("scale must be non-zero".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::PfmZeroDims);
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !is_pfm_whitespace(bytes[pos]) {
        return Err(Error::PfmHeader(
            "missing whitespace between header and payload".into(),
        ));
    }
    pos += 1;

    let count = width * height * channels;
    let expected = count * 4;
    let actual = bytes.len() - pos;
    if actual < expected {
        return Err(Error::PfmTruncated { expected, actual });
    }
    let little_endian = scale < 0.0;
    let payload = &bytes[pos..pos + expected];
    let mut data = vec![0.0f32; count];
    // File rows run bottom-to-top; flip while copying.
    for file_row in 0..height {
        let img_row = height - 1 - file_row;
        for i in 0..width * channels {
            let off = (file_row * width * channels + i) * 4;
            let raw: [u8; 4] = payload[off..off + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            data[img_row * width * channels + i] = v;
        }
    }
    Ok(PfmData {
        height,
        width,
        channels,
        data,
        scale,
    })
}

pub fn read_pfm(path: &Path) -> Result<PfmData> {
    parse_pfm(&fs::read(path)?)
}

/// Serializes a PFM buffer; inverse of [`parse_pfm`].
pub fn encode_pfm(pfm: &PfmData) -> Result<Vec<u8>> {
    let magic = match pfm.channels {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::InvalidInput(format!(
                "pfm supports 1 or 3 channels, got {c}"
            )))
        }
    };
    if pfm.data.len() != pfm.width * pfm.height * pfm.channels {
        return Err(Error::DimensionMismatch(format!(
            "pfm payload length {} != {}x{}x{}",
            pfm.data.len(),
            pfm.height,
            pfm.width,
            pfm.channels
        )));
    }
    if pfm.scale == 0.0 {
        return Err(Error::InvalidInput("pfm scale must be non-zero".into()));
    }
    let mut out = format!("{magic}\n{} {}\n{}\n", pfm.width, pfm.height, pfm.scale).into_bytes();
    let little_endian = pfm.scale < 0.0;
    let row_len = pfm.width * pfm.channels;
    for img_row in (0..pfm.height).rev() {
        for i in 0..row_len {
            let v = pfm.data[img_row * row_len + i];
            let raw = if little_endian {
                v.to_le_bytes()
            } else {
                v.to_be_bytes()
            };
            out.extend_from_slice(&raw);
        }
    }
    Ok(out)
}

pub fn write_pfm(path: &Path, pfm: &PfmData) -> Result<()> {
    fs::write(path, encode_pfm(pfm)?)?;
    Ok(())
}

/// Converts a disparity map to a 1-channel PFM buffer. Invalid pixels are
/// written as +∞, the SceneFlow convention for unknown disparity.
pub fn pfm_from_disparity(d: &DisparityMap) -> PfmData {
    let data = d
        .disparity
        .iter()
        .zip(d.valid.iter())
        .map(|(&v, &ok)| if ok { v as f32 } else { f32::INFINITY })
        .collect();
    PfmData {
        height: d.height,
        width: d.width,
        channels: 1,
        data,
        scale: -1.0,
    }
}

/// Interprets a 1-channel PFM buffer as a disparity map; non-finite samples
/// become invalid pixels.
pub fn disparity_from_pfm(pfm: &PfmData) -> Result<DisparityMap> {
    if pfm.channels != 1 {
        return Err(Error::InvalidInput(format!(
            "disparity pfm must be single-channel, got {}",
            pfm.channels
        )));
    }
    let mut d = DisparityMap::new(pfm.height, pfm.width);
    for (i, &v) in pfm.data.iter().enumerate() {
        if v.is_finite() {
            d.disparity[i] = v as f64;
            d.valid[i] = true;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let pfm = PfmData {
            height: 3,
            width: 4,
            channels: 1,
            data: vec![
                0.5, -1.25, f32::INFINITY, 3.75, 0.0, 1e-7, 1e7, -0.125, 2.0, 4.5, -6.25, 8.0,
            ],
            scale: -1.0,
        };
        let bytes = encode_pfm(&pfm).unwrap();
        let back = parse_pfm(&bytes).unwrap();
        assert_eq!(back.height, 3);
        assert_eq!(back.width, 4);
        assert_eq!(back.scale, -1.0);
        for (a, b) in pfm.data.iter().zip(back.data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn big_endian_round_trip() {
        let pfm = PfmData {
            height: 2,
            width: 2,
            channels: 3,
            data: (0..12).map(|i| i as f32 * 0.3).collect(),
            scale: 1.0,
        };
        let bytes = encode_pfm(&pfm).unwrap();
        let back = parse_pfm(&bytes).unwrap();
        assert_eq!(pfm.data, back.data);
        assert_eq!(back.channels, 3);
    }

    #[test]
    fn little_endian_header_construction() {
        // 2×2, little-endian (negative scale); floats 1.0, 2.0, 3.0, 4.0 in
        // file order (bottom row first).
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        for v in [3.0f32, 4.0, 1.0, 2.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let pfm = parse_pfm(&bytes).unwrap();
        // Top row first after the flip.
        assert_eq!(pfm.data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn malformed_inputs_produce_distinct_errors() {
        assert!(matches!(
            parse_pfm(b"P5\n2 2\n-1.0\n"),
            Err(Error::PfmHeader(_))
        ));
        assert!(matches!(
            parse_pfm(b"Pf\n0 2\n-1.0\n"),
            Err(Error::PfmZeroDims)
        ));
        assert!(matches!(
            parse_pfm(b"Pf\nx 2\n-1.0\n"),
            Err(Error::PfmHeader(_))
        ));
        assert!(matches!(
            parse_pfm(b"Pf\n2 2\n0\n"),
            Err(Error::PfmHeader(_))
        ));
        // 3-channel magic with a 1-channel payload length.
        let mut bytes = b"PF\n2 2\n-1.0\n".to_vec();
        bytes.extend_from_slice(&[0u8; 16]);
        assert!(matches!(
            parse_pfm(&bytes),
            Err(Error::PfmTruncated {
                expected: 48,
                actual: 16
            })
        ));
    }

    #[test]
    fn disparity_conversion_round_trip() {
        let mut d = DisparityMap::new(2, 3);
        for i in 0..6 {
            d.disparity[i] = i as f64 * 0.5;
            d.valid[i] = i != 4;
        }
        let pfm = pfm_from_disparity(&d);
        assert!(pfm.data[4].is_infinite());
        let back = disparity_from_pfm(&pfm).unwrap();
        assert_eq!(back.valid, d.valid);
        for i in 0..6 {
            if d.valid[i] {
                assert_eq!(back.disparity[i], d.disparity[i]);
            }
        }
    }
}
