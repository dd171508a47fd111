//! IDX reader for MNIST-style image and label files.
//!
//! Images use magic `0x00000803` with a 28×28 shape, labels use `0x00000801`.
//! All header fields are big-endian `u32`. Pixel bytes are scaled by 1/255.

use std::path::Path;

use crate::error::{HqrnError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

/// One image with its digit.
#[derive(Clone, Debug, PartialEq)]
pub struct Digit {
    pub pixels: Vec<f64>,
    pub label: u8,
}

fn idx_err(offset: usize, message: impl Into<String>) -> HqrnError {
    HqrnError::Idx {
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| idx_err(offset, format!("header truncated ({} bytes total)", bytes.len())))?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != want {
        return Err(idx_err(0, format!("magic {magic:#010x}, expected {want:#010x}")));
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    let end = start + len;
    if bytes.len() < end {
        return Err(idx_err(
            bytes.len(),
            format!("truncated: header promises {end} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > end {
        return Err(idx_err(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    Ok(&bytes[start..end])
}

/// Parses an image file into rows of 784 values in [0, 1].
pub fn parse_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(idx_err(8, format!("image shape {rows}x{cols}, expected {SIDE}x{SIDE}")));
    }
    let data = payload(bytes, 16, count * PIXELS)?;
    Ok(data
        .chunks_exact(PIXELS)
        .map(|img| img.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let data = payload(bytes, 8, count)?;
    if let Some(pos) = data.iter().position(|&l| l > 9) {
        return Err(idx_err(8 + pos, format!("label {} is not a digit", data[pos])));
    }
    Ok(data.to_vec())
}

/// Pairs parsed images with labels; the counts must agree.
pub fn pair_records(images: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Vec<Digit>> {
    if images.len() != labels.len() {
        return Err(HqrnError::Data(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| Digit { pixels, label })
        .collect())
}

pub fn ingest_mnist(images_path: &Path, labels_path: &Path) -> Result<Vec<Digit>> {
    let images = parse_images(&std::fs::read(images_path)?)?;
    let labels = parse_labels(&std::fs::read(labels_path)?)?;
    pair_records(images, labels)
}

/// Encodes images back into IDX bytes; used to write fixtures.
pub fn encode_images(images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * PIXELS);
    for v in [IMAGE_MAGIC, images.len() as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_images() -> Vec<Vec<u8>> {
        let mut a = vec![0u8; PIXELS];
        a[0] = 255;
        a[400] = 51;
        vec![a, vec![128u8; PIXELS]]
    }

    #[test]
    fn parses_well_formed_fixture() {
        let imgs = parse_images(&encode_images(&two_images())).unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0][0], 1.0);
        assert!((imgs[0][400] - 0.2).abs() < 1e-15);
        assert!(imgs.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        let recs = pair_records(imgs, parse_labels(&encode_labels(&[3, 7])).unwrap()).unwrap();
        assert_eq!(recs[1].label, 7);
    }

    #[test]
    fn wrong_magic_names_offset_zero() {
        let mut bytes = encode_images(&two_images());
        bytes[3] = 0x01;
        match parse_images(&bytes) {
            Err(HqrnError::Idx { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("0x00000801"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_labels(&encode_images(&two_images())),
            Err(HqrnError::Idx { offset: 0, .. })
        ));
    }

    #[test]
    fn truncation_and_bad_shape() {
        let bytes = encode_images(&two_images());
        assert!(matches!(
            parse_images(&bytes[..bytes.len() - 1]),
            Err(HqrnError::Idx { offset, .. }) if offset == bytes.len() - 1
        ));
        assert!(matches!(parse_images(&bytes[..10]), Err(HqrnError::Idx { offset: 8, .. })));
        let mut shape = bytes.clone();
        shape[11] = 27;
        assert!(matches!(parse_images(&shape), Err(HqrnError::Idx { offset: 8, .. })));
        let mut labels = encode_labels(&[1, 2, 3]);
        labels[9] = 12;
        assert!(matches!(parse_labels(&labels), Err(HqrnError::Idx { offset: 9, .. })));
    }

    #[test]
    fn count_mismatch_is_a_data_error() {
        let imgs = parse_images(&encode_images(&two_images())).unwrap();
        assert!(matches!(pair_records(imgs, vec![1]), Err(HqrnError::Data(_))));
    }

    #[test]
    fn bundled_subset_matches_header_counts() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mnist-subset");
        for split in ["train", "test"] {
            let recs = ingest_mnist(
                &dir.join(format!("{split}-images-idx3-ubyte")),
                &dir.join(format!("{split}-labels-idx1-ubyte")),
            )
            .unwrap();
            assert_eq!(recs.len(), 1000);
            // every digit is present
            let mut seen = [false; 10];
            for r in &recs {
                seen[r.label as usize] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }
}
