//! Benchmark file I/O: images, PFM and KITTI disparity formats, manifests,
//! and synthetic oracle scenes.

pub mod kitti;
pub mod pfm;
pub mod synthetic;

pub use kitti::{read_kitti_disparity, write_kitti_disparity};
pub use pfm::{disparity_from_pfm, pfm_from_disparity, read_pfm, write_pfm, PfmData};
pub use synthetic::make_synthetic_pair;

use crate::error::{Error, Result};
use crate::image::ImageF;
use image::DynamicImage;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Which benchmark an entry belongs to; controls nothing in the pipeline but
/// is carried through manifests and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetTag {
    Sceneflow,
    Kitti2012,
    Kitti2015,
    Middlebury,
    Eth3d,
    Drivingstereo,
    Synthetic,
}

impl FromStr for DatasetTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sceneflow" => DatasetTag::Sceneflow,
            "kitti2012" => DatasetTag::Kitti2012,
            "kitti2015" => DatasetTag::Kitti2015,
            "middlebury" => DatasetTag::Middlebury,
            "eth3d" => DatasetTag::Eth3d,
            "drivingstereo" => DatasetTag::Drivingstereo,
            "synthetic" => DatasetTag::Synthetic,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown dataset tag {other:?}"
                )))
            }
        })
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetTag::Sceneflow => "sceneflow",
            DatasetTag::Kitti2012 => "kitti2012",
            DatasetTag::Kitti2015 => "kitti2015",
            DatasetTag::Middlebury => "middlebury",
            DatasetTag::Eth3d => "eth3d",
            DatasetTag::Drivingstereo => "drivingstereo",
            DatasetTag::Synthetic => "synthetic",
        })
    }
}

/// One stereo pair on disk: left/right image paths, optional ground-truth
/// disparity (PFM or 16-bit PNG, by extension), and a dataset tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub left: PathBuf,
    pub right: PathBuf,
    pub gt: Option<PathBuf>,
    pub tag: DatasetTag,
}

/// Parses a manifest: one entry per line, `left<TAB>right<TAB>gt<TAB>tag`,
/// with `-` standing for "no ground truth". Blank lines and lines starting
/// with `#` are skipped. Relative paths are resolved against the manifest's
/// directory. Entries are sorted lexicographically by left path, so
/// iteration order never depends on the order lines were written in. All
/// referenced files must exist.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |s: &str| -> PathBuf {
        let p = PathBuf::from(s);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::ManifestParse {
                line: ln + 1,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let tag = fields[3].parse::<DatasetTag>().map_err(|e| Error::ManifestParse {
            line: ln + 1,
            msg: e.to_string(),
        })?;
        let entry = ManifestEntry {
            left: resolve(fields[0]),
            right: resolve(fields[1]),
            gt: match fields[2] {
                "-" => None,
                p => Some(resolve(p)),
            },
            tag,
        };
        for p in [Some(&entry.left), Some(&entry.right), entry.gt.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::MissingPath(p.clone()));
            }
        }
        entries.push(entry);
    }
    entries.sort_by(|a, b| a.left.cmp(&b.left));
    Ok(entries)
}

/// Writes a manifest in the format read by [`read_manifest`], paths as
/// given.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.left.display(),
            e.right.display(),
            e.gt.as_ref().map_or("-".into(), |p| p.display().to_string()),
            e.tag
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads an 8- or 16-bit PNG as a 3-channel image in [0, 1]: 8-bit samples
/// divide by 255, 16-bit by 65535; grayscale replicates to three channels;
/// alpha is dropped.
pub fn load_image(path: &Path) -> Result<ImageF> {
    decode_image(&std::fs::read(path)?)
}

/// In-memory version of [`load_image`].
pub fn decode_image(bytes: &[u8]) -> Result<ImageF> {
    let dynimg = image::load_from_memory(bytes)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let mut out = ImageF::zeros(h, w, 3);
    match dynimg {
        DynamicImage::ImageLuma8(g) => {
            for (i, p) in g.pixels().enumerate() {
                let v = p.0[0] as f64 / 255.0;
                out.data[i * 3..i * 3 + 3].fill(v);
            }
        }
        DynamicImage::ImageLumaA8(g) => {
            for (i, p) in g.pixels().enumerate() {
                let v = p.0[0] as f64 / 255.0;
                out.data[i * 3..i * 3 + 3].fill(v);
            }
        }
        DynamicImage::ImageRgb8(g) => {
            for (i, p) in g.pixels().enumerate() {
                for c in 0..3 {
                    out.data[i * 3 + c] = p.0[c] as f64 / 255.0;
                }
            }
        }
        DynamicImage::ImageRgba8(g) => {
            for (i, p) in g.pixels().enumerate() {
                for c in 0..3 {
                    out.data[i * 3 + c] = p.0[c] as f64 / 255.0;
                }
            }
        }
        DynamicImage::ImageLuma16(g) => {
            for (i, p) in g.pixels().enumerate() {
                let v = p.0[0] as f64 / 65535.0;
                out.data[i * 3..i * 3 + 3].fill(v);
            }
        }
        DynamicImage::ImageLumaA16(g) => {
            for (i, p) in g.pixels().enumerate() {
                let v = p.0[0] as f64 / 65535.0;
                out.data[i * 3..i * 3 + 3].fill(v);
            }
        }
        DynamicImage::ImageRgb16(g) => {
            for (i, p) in g.pixels().enumerate() {
                for c in 0..3 {
                    out.data[i * 3 + c] = p.0[c] as f64 / 65535.0;
                }
            }
        }
        DynamicImage::ImageRgba16(g) => {
            for (i, p) in g.pixels().enumerate() {
                for c in 0..3 {
                    out.data[i * 3 + c] = p.0[c] as f64 / 65535.0;
                }
            }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported pixel format {:?}",
                other.color()
            )))
        }
    }
    Ok(out)
}

/// Encodes an image as an 8-bit PNG (RGB for 3 channels, grayscale for 1).
/// Samples are clamped to [0, 1] and quantized as `round(v · 255)`.
pub fn encode_image_png8(img: &ImageF) -> Result<Vec<u8>> {
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (w, h) = (img.width as u32, img.height as u32);
    let dynimg = match img.channels {
        1 => {
            let buf: Vec<u8> = img.data.iter().map(|&v| quant(v)).collect();
            DynamicImage::ImageLuma8(
                image::ImageBuffer::from_raw(w, h, buf)
                    .expect("buffer length matches dimensions"),
            )
        }
        3 => {
            let buf: Vec<u8> = img.data.iter().map(|&v| quant(v)).collect();
            DynamicImage::ImageRgb8(
                image::ImageBuffer::from_raw(w, h, buf)
                    .expect("buffer length matches dimensions"),
            )
        }
        c => {
            return Err(Error::InvalidInput(format!(
                "png export supports 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynimg.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_image_png8(path: &Path, img: &ImageF) -> Result<()> {
    std::fs::write(path, encode_image_png8(img)?)?;
    Ok(())
}

/// Loads a ground-truth disparity file, dispatching on extension: `.pfm`
/// reads the SceneFlow float format, `.png` the KITTI 16-bit convention.
pub fn load_disparity(path: &Path) -> Result<crate::stereo::DisparityMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => disparity_from_pfm(&read_pfm(path)?),
        Some("png") => read_kitti_disparity(path),
        other => Err(Error::InvalidInput(format!(
            "unsupported disparity extension {other:?} for {}",
            path.display()
        ))),
    }
}
