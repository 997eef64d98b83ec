//! IDX (MNIST-style) image and label files.
//!
//! Layout: big-endian `u32` magic (`0x00000803` for `u8` images with dims
//! `[n, rows, cols]`, `0x00000801` for `u8` labels with dims `[n]`), the
//! big-endian `u32` dimensions, then the payload bytes.

use std::fs;
use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count · rows · cols` bytes, image-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "images: bad magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"
        )));
    }
    let n = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let len = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("images: dimensions overflow".into()))?;
    let payload = &bytes[16..];
    if payload.len() < len {
        return Err(Error::Format(format!(
            "images: truncated payload ({} of {len} bytes)",
            payload.len()
        )));
    }
    if payload.len() > len {
        return Err(Error::Format(format!(
            "images: {} trailing bytes",
            payload.len() - len
        )));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: payload.to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "labels: bad magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"
        )));
    }
    let n = read_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Format(format!(
            "labels: header says {n} labels, payload has {}",
            payload.len()
        )));
    }
    Ok(payload.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a dataset from parsed image and label payloads; pixels are
/// divided by 255.
pub fn dataset_from_idx(images: &IdxImages, labels: &[u8], name: &str) -> Result<Dataset> {
    let n = images.count();
    if n != labels.len() {
        return Err(Error::Format(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    let dim = images.rows * images.cols;
    let data = images
        .pixels
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect();
    let features = DenseMatrix::from_vec(n, dim, data)?;
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, k, name)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let images = parse_images(&fs::read(images_path)?)?;
    let labels = parse_labels(&fs::read(labels_path.as_ref())?)?;
    let name = images_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("idx");
    dataset_from_idx(&images, &labels, name)
}

/// Pixel encoding of a dataset whose features already lie in `[0, 1]`.
/// Values are mapped to `round(255·x)`.
pub fn to_idx(ds: &Dataset, rows: usize, cols: usize) -> Result<(IdxImages, Vec<u8>)> {
    if rows * cols != ds.dim() {
        return Err(Error::Shape(format!(
            "{rows}x{cols} images for {}-dimensional features",
            ds.dim()
        )));
    }
    if ds.num_classes() > 256 {
        return Err(Error::InvalidInput(
            "IDX labels hold at most 256 classes".into(),
        ));
    }
    let mut pixels = Vec::with_capacity(ds.len() * ds.dim());
    for &v in ds.features().data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!(
                "feature {v} outside [0, 1]; quantize first"
            )));
        }
        pixels.push((v * 255.0).round() as u8);
    }
    let labels = ds.labels().iter().map(|&y| y as u8).collect();
    Ok((IdxImages { rows, cols, pixels }, labels))
}

pub fn write_idx(
    ds: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (images, labels) = to_idx(ds, rows, cols)?;
    fs::write(images_path, encode_images(&images))?;
    fs::write(labels_path, encode_labels(&labels))?;
    Ok(())
}

/// Smallest and largest feature value over several datasets.
pub fn feature_range(sets: &[&Dataset]) -> (f64, f64) {
    sets.iter()
        .flat_map(|d| d.features().data().iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Rescales `[lo, hi]` onto `[0, 1]` and snaps to the `k/255` grid, so the
/// result survives an IDX round trip bit-exactly. Values outside the range
/// are clipped.
pub fn quantize_range(ds: &Dataset, lo: f64, hi: f64) -> Result<Dataset> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let features = ds
        .features()
        .map(|v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) / 255.0);
    ds.with_features(features, ds.name())
}

/// [`quantize_range`] over the dataset's own min-max range.
pub fn quantize_unit(ds: &Dataset) -> Result<Dataset> {
    let (lo, hi) = feature_range(&[ds]);
    quantize_range(ds, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let images = encode_images(&IdxImages {
            rows: 2,
            cols: 2,
            pixels: vec![0, 255, 51, 102, 255, 0, 0, 255],
        });
        (images, encode_labels(&[1, 0]))
    }

    #[test]
    fn hand_built_pair() {
        let (images, labels) = fixture();
        assert_eq!(&images[..4], &[0, 0, 8, 3]);
        assert_eq!(&labels[..4], &[0, 0, 8, 1]);
        let ds = dataset_from_idx(
            &parse_images(&images).unwrap(),
            &parse_labels(&labels).unwrap(),
            "t",
        )
        .unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 4));
        assert_eq!(ds.features().row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn label_file_with_image_magic_rejected() {
        let (images, _) = fixture();
        let mut bad = encode_labels(&[0, 1]);
        bad[3] = 0x03;
        assert!(matches!(parse_labels(&bad), Err(Error::Format(_))));
        assert!(matches!(parse_labels(&images), Err(Error::Format(_))));
    }

    #[test]
    fn count_mismatch_and_truncation() {
        let (images, _) = fixture();
        let parsed = parse_images(&images).unwrap();
        assert!(matches!(
            dataset_from_idx(&parsed, &[0, 1, 1], "t"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_images(&images[..images.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(parse_images(&images[..10]), Err(Error::Format(_))));
        let labels = encode_labels(&[0, 1, 2]);
        assert!(matches!(
            parse_labels(&labels[..labels.len() - 1]),
            Err(Error::Format(_))
        ));
    }
}
