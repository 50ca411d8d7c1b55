//! Reader for the big-endian IDX container used by MNIST.
//!
//! Layout: a 4-byte magic (`0x00 0x00 <type> <ndim>`), one `u32` size per
//! dimension, then the payload. Only unsigned-byte payloads are accepted:
//! `0x00000803` (2051) for image stacks and `0x00000801` (2049) for labels.

use std::fs;
use std::path::Path;

use crate::error::{Error, IdxError, Result};
use crate::tensor_nn::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images as `pixel / 255` in `[0, 1]`, one row per image.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub images: Matrix,
    pub labels: Vec<u8>,
    pub height: usize,
    pub width: usize,
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_magic(bytes: &[u8], expected: u32, kind: &'static str) -> std::result::Result<(), IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::TruncatedHeader(bytes.len()));
    }
    let magic = read_u32(bytes, 0);
    match magic {
        m if m == expected => Ok(()),
        IMAGES_MAGIC | LABELS_MAGIC => Err(IdxError::WrongKind {
            expected: kind,
            found: magic,
        }),
        _ => Err(IdxError::UnknownMagic(magic)),
    }
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, &[u8]), IdxError> {
    check_magic(bytes, IMAGES_MAGIC, "image")?;
    if bytes.len() < 16 {
        return Err(IdxError::TruncatedHeader(bytes.len()));
    }
    let n = read_u32(bytes, 4) as usize;
    let rows = read_u32(bytes, 8) as usize;
    let cols = read_u32(bytes, 12) as usize;
    let expected = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < expected {
        return Err(IdxError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    Ok((n, rows, cols, &payload[..expected]))
}

pub fn parse_labels(bytes: &[u8]) -> std::result::Result<&[u8], IdxError> {
    check_magic(bytes, LABELS_MAGIC, "label")?;
    if bytes.len() < 8 {
        return Err(IdxError::TruncatedHeader(bytes.len()));
    }
    let n = read_u32(bytes, 4) as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(IdxError::TruncatedPayload {
            expected: n,
            found: payload.len(),
        });
    }
    Ok(&payload[..n])
}

pub fn decode(image_bytes: &[u8], label_bytes: &[u8]) -> Result<RawDataset> {
    let (n, height, width, pixels) = parse_images(image_bytes)?;
    let labels = parse_labels(label_bytes)?;
    if labels.len() != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: labels.len(),
        }
        .into());
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Input(format!("label {bad} is not a digit")));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(RawDataset {
        images: Matrix::new(n, height * width, data)?,
        labels: labels.to_vec(),
        height,
        width,
    })
}

pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<RawDataset> {
    let ib = fs::read(images.as_ref()).map_err(|e| Error::io(images.as_ref(), e))?;
    let lb = fs::read(labels.as_ref()).map_err(|e| Error::io(labels.as_ref(), e))?;
    decode(&ib, &lb)
}

/// Serialise images (bytes) and labels into IDX files.
pub fn encode(pixels: &[u8], n: usize, rows: usize, cols: usize, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + labels.len());
    for v in [LABELS_MAGIC, labels.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    (img, lab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..2 * 4).map(|v| (v * 30) as u8).collect();
        encode(&pixels, 2, 2, 2, &[1, 7])
    }

    #[test]
    fn accepts_image_magic() {
        let (img, lab) = tiny();
        assert_eq!(&img[..4], &[0x00, 0x00, 0x08, 0x03]);
        let raw = decode(&img, &lab).unwrap();
        assert_eq!(raw.images.rows(), 2);
        assert_eq!(raw.images.cols(), 4);
        assert_eq!(raw.images.get(1, 3), 210.0 / 255.0);
        assert_eq!(raw.labels, vec![1, 7]);
    }

    #[test]
    fn rejects_magic_2052() {
        let (mut img, lab) = tiny();
        img[3] = 0x04;
        assert_eq!(
            decode(&img, &lab).unwrap_err().to_string(),
            Error::Idx(IdxError::UnknownMagic(2052)).to_string()
        );
    }

    #[test]
    fn swapped_files_are_wrong_kind() {
        let (img, lab) = tiny();
        assert!(matches!(
            decode(&lab, &img),
            Err(Error::Idx(IdxError::WrongKind { .. }))
        ));
    }

    #[test]
    fn truncated_payload_and_count_mismatch() {
        let (img, lab) = tiny();
        assert!(matches!(
            decode(&img[..img.len() - 1], &lab),
            Err(Error::Idx(IdxError::TruncatedPayload { expected: 8, found: 7 }))
        ));
        let (_, lab3) = encode(&[], 0, 0, 0, &[1, 7, 7]);
        assert!(matches!(
            decode(&img, &lab3),
            Err(Error::Idx(IdxError::CountMismatch { images: 2, labels: 3 }))
        ));
        assert!(matches!(
            decode(&img[..10], &lab),
            Err(Error::Idx(IdxError::TruncatedHeader(10)))
        ));
    }

    #[test]
    fn full_size_header_arithmetic() {
        let n = 60_000;
        let pixels = vec![0u8; n * 784];
        let (img, lab) = encode(&pixels, n, 28, 28, &vec![3u8; n]);
        let raw = decode(&img, &lab).unwrap();
        assert_eq!((raw.images.rows(), raw.images.cols()), (60_000, 784));
    }

    proptest! {
        #[test]
        fn every_magic_mutation_is_rejected(bytes in any::<[u8; 4]>()) {
            let (mut img, lab) = tiny();
            prop_assume!(bytes != [0x00, 0x00, 0x08, 0x03]);
            img[..4].copy_from_slice(&bytes);
            prop_assert!(matches!(decode(&img, &lab), Err(Error::Idx(_))));
        }
    }
}
