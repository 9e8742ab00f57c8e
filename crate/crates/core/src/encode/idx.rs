//! IDX (MNIST) image and label files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::encode::dog::GrayImage;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub label: u8,
}

fn be_u32(bytes: &[u8], at: usize, context: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(context, "truncated header"))
}

/// Parses an IDX image file into raw `rows x cols` images with pixel values
/// in 0..=255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>> {
    const CTX: &str = "IDX images";
    let magic = be_u32(bytes, 0, CTX)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::parse(CTX, format!("bad magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, CTX)? as usize;
    let rows = be_u32(bytes, 8, CTX)? as usize;
    let cols = be_u32(bytes, 12, CTX)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if size == 0 {
        return Err(Error::parse(CTX, format!("degenerate image size {rows}x{cols}")));
    }
    if body.len() != count * size {
        return Err(Error::parse(
            CTX,
            format!("expected {} pixel bytes, found {}", count * size, body.len()),
        ));
    }
    Ok(body
        .chunks_exact(size)
        .map(|chunk| GrayImage {
            rows,
            cols,
            pixels: chunk.iter().map(|&p| f64::from(p)).collect(),
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    const CTX: &str = "IDX labels";
    let magic = be_u32(bytes, 0, CTX)?;
    if magic != LABELS_MAGIC {
        return Err(Error::parse(CTX, format!("bad magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, CTX)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::parse(
            CTX,
            format!("expected {count} labels, found {}", body.len()),
        ));
    }
    Ok(body.to_vec())
}

pub fn write_idx_labels<W: Write>(mut out: W, labels: &[u8]) -> Result<()> {
    out.write_all(&LABELS_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)?;
    Ok(())
}

/// Drops the last row and last column (28x28 MNIST becomes 27x27).
pub fn crop_outer(image: &GrayImage) -> GrayImage {
    let rows = image.rows.saturating_sub(1).max(1);
    let cols = image.cols.saturating_sub(1).max(1);
    let mut pixels = Vec::with_capacity(rows * cols);
    for u in 0..rows {
        pixels.extend_from_slice(&image.pixels[u * image.cols..u * image.cols + cols]);
    }
    GrayImage { rows, cols, pixels }
}

/// Loads an image/label file pair, cropping every image by one row and column.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<Vec<LabeledImage>> {
    let imgs = parse_idx_images(&fs::read(images)?)
        .map_err(|e| annotate(e, images))?;
    let labs = parse_idx_labels(&fs::read(labels)?).map_err(|e| annotate(e, labels))?;
    if imgs.len() != labs.len() {
        return Err(Error::parse(
            "IDX pair",
            format!("{} images but {} labels", imgs.len(), labs.len()),
        ));
    }
    Ok(imgs
        .iter()
        .zip(labs)
        .map(|(img, label)| LabeledImage {
            image: crop_outer(img),
            label,
        })
        .collect())
}

fn annotate(err: Error, path: &Path) -> Error {
    match err {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{context} ({})", path.display()),
            message,
        },
        other => other,
    }
}
