//! IDX files (the MNIST distribution format).
//!
//! Layout: a big-endian `u32` magic whose low byte is the number of
//! dimensions and whose third byte is the element type (`0x08`, unsigned
//! byte), then one big-endian `u32` per dimension, then the raw elements.

use std::path::Path;

use super::{Domain, Sample};
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxArray<'a> {
    dims: Vec<usize>,
    data: &'a [u8],
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn parse_array<'a>(bytes: &'a [u8], expected_magic: u32, what: &str) -> Result<IdxArray<'a>> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected_magic {
        return Err(Error::Format(format!(
            "{what}: wrong magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )));
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|i| read_u32(bytes, 4 + 4 * i, what).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let data = bytes.get(start..start + len).ok_or_else(|| {
        Error::Format(format!(
            "{what}: truncated data, header promises {len} bytes, file has {}",
            bytes.len().saturating_sub(start)
        ))
    })?;
    Ok(IdxArray { dims, data })
}

/// Parses in-memory IDX image and label files into a domain. Pixels are
/// scaled to `[0, 1]` by dividing by 255.
pub fn parse_idx(id: &str, images: &[u8], labels: &[u8]) -> Result<Domain> {
    let img = parse_array(images, IDX_IMAGES_MAGIC, "images")?;
    let lab = parse_array(labels, IDX_LABELS_MAGIC, "labels")?;
    let count = img.dims[0];
    if lab.dims[0] != count {
        return Err(Error::Format(format!(
            "count mismatch: {count} images but {} labels",
            lab.dims[0]
        )));
    }
    if count == 0 {
        return Err(Error::Format("no images".into()));
    }
    let pixels = img.dims[1] * img.dims[2];
    let samples = img
        .data
        .chunks_exact(pixels)
        .zip(lab.data)
        .map(|(px, &y)| Sample::new(px.iter().map(|&p| p as f64 / 255.0).collect(), y as usize))
        .collect();
    Domain::new(id, samples)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Domain> {
    let images_path = images_path.as_ref();
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path.as_ref())?;
    let id = images_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("idx")
        .to_string();
    parse_idx(&id, &images, &labels)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn idx_bytes(magic: u32, dims: &[u32], data: &[u8]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn two_blank_images() {
        let images = idx_bytes(IDX_IMAGES_MAGIC, &[2, 28, 28], &[0; 2 * 784]);
        let labels = idx_bytes(IDX_LABELS_MAGIC, &[2], &[3, 7]);
        let dom = parse_idx("m", &images, &labels).unwrap();
        assert_eq!(dom.len(), 2);
        assert_eq!(dom.feature_dim(), 784);
        assert!(dom.samples.iter().all(|s| s.features.iter().all(|&v| v == 0.0)));
        assert_eq!(dom.samples[0].label, 3);
        assert_eq!(dom.samples[1].label, 7);
    }

    #[test]
    fn labels_file_as_images_is_wrong_magic() {
        let labels = idx_bytes(IDX_LABELS_MAGIC, &[2], &[3, 7]);
        let err = parse_idx("m", &labels, &labels).unwrap_err();
        assert!(err.to_string().contains("wrong magic"), "{err}");
    }

    #[test]
    fn count_mismatch_and_truncation() {
        let images = idx_bytes(IDX_IMAGES_MAGIC, &[2, 2, 2], &[0; 8]);
        let labels = idx_bytes(IDX_LABELS_MAGIC, &[3], &[1, 2, 3]);
        assert!(parse_idx("m", &images, &labels).unwrap_err().to_string().contains("count mismatch"));
        let short = idx_bytes(IDX_IMAGES_MAGIC, &[2, 2, 2], &[0; 7]);
        let labels = idx_bytes(IDX_LABELS_MAGIC, &[2], &[1, 2]);
        assert!(parse_idx("m", &short, &labels).unwrap_err().to_string().contains("truncated"));
        assert!(parse_idx("m", &[0, 0, 8], &labels).is_err());
    }

    #[test]
    fn pixels_scaled_to_unit_interval() {
        let images = idx_bytes(IDX_IMAGES_MAGIC, &[1, 1, 3], &[0, 51, 255]);
        let labels = idx_bytes(IDX_LABELS_MAGIC, &[1], &[9]);
        let dom = parse_idx("m", &images, &labels).unwrap();
        assert_eq!(dom.samples[0].features, vec![0.0, 0.2, 1.0]);
    }
}
