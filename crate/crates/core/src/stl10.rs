//! STL-10 binary reader, grayscale conversion and the predefined fold plan.
//!
//! Image files hold, per image, three 96x96 byte planes (red, green, blue),
//! each plane stored column-major. Label files hold one byte per image with
//! classes numbered from 1.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

pub const SIDE: usize = 96;
pub const PLANE_BYTES: usize = SIDE * SIDE;
pub const IMAGE_BYTES: usize = 3 * PLANE_BYTES;
pub const NUM_CLASSES: usize = 10;
pub const NUM_TRAIN: usize = 5000;
pub const NUM_FOLDS: usize = 10;
pub const FOLD_SIZE: usize = 1000;

/// Grayscale image with its 0-based class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Array2<f64>,
    pub label: usize,
}

impl LabeledImage {
    pub fn new(pixels: Array2<f64>, label: usize) -> Self {
        Self { pixels, label }
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }
}

/// BT.601 luma `0.299 r + 0.587 g + 0.114 b`, arranged around the green
/// channel so equal channels map to themselves exactly.
pub fn to_grayscale(r: f64, g: f64, b: f64) -> f64 {
    g + 0.299 * (r - g) + 0.114 * (b - g)
}

/// Decodes raw image bytes into `(channel, row, col)` byte arrays.
pub fn decode_rgb(bytes: &[u8]) -> Result<Vec<Array3<u8>>> {
    if !bytes.len().is_multiple_of(IMAGE_BYTES) {
        return Err(Error::Format(format!(
            "image data length {} is not a multiple of {IMAGE_BYTES}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(IMAGE_BYTES)
        .map(|img| {
            Array3::from_shape_fn((3, SIDE, SIDE), |(ch, row, col)| {
                img[ch * PLANE_BYTES + col * SIDE + row]
            })
        })
        .collect())
}

/// Inverse of [`decode_rgb`].
pub fn encode_rgb(images: &[Array3<u8>]) -> Result<Vec<u8>> {
    let mut out = vec![0u8; images.len() * IMAGE_BYTES];
    for (img, chunk) in images.iter().zip(out.chunks_exact_mut(IMAGE_BYTES)) {
        if img.dim() != (3, SIDE, SIDE) {
            return Err(Error::Dim(format!("expected 3x96x96, got {:?}", img.dim())));
        }
        for ((ch, row, col), &v) in img.indexed_iter() {
            chunk[ch * PLANE_BYTES + col * SIDE + row] = v;
        }
    }
    Ok(out)
}

pub fn rgb_to_gray(img: &Array3<u8>) -> Array2<f64> {
    let (_, h, w) = img.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        to_grayscale(
            img[[0, r, c]] as f64 / 255.0,
            img[[1, r, c]] as f64 / 255.0,
            img[[2, r, c]] as f64 / 255.0,
        )
    })
}

/// Reads a label file, converting 1-based classes to 0-based.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let bytes = fs::read(path)?;
    bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| match b as usize {
            1..=NUM_CLASSES => Ok(b as usize - 1),
            other => Err(Error::Format(format!("label {other} at index {i} outside 1..=10"))),
        })
        .collect()
}

pub fn load_stl10(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Vec<LabeledImage>> {
    let bytes = fs::read(images_path)?;
    let rgb = decode_rgb(&bytes)?;
    let labels = load_labels(labels_path)?;
    if labels.len() != rgb.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            rgb.len(),
            labels.len()
        )));
    }
    Ok(rgb
        .iter()
        .zip(labels)
        .map(|(img, label)| LabeledImage::new(rgb_to_gray(img), label))
        .collect())
}

/// Writes images and 0-based labels in the on-disk layout.
pub fn write_stl10(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    images: &[Array3<u8>],
    labels: &[usize],
) -> Result<()> {
    if images.len() != labels.len() {
        return Err(Error::Dim("image and label counts differ".into()));
    }
    fs::write(images_path, encode_rgb(images)?)?;
    let label_bytes = labels
        .iter()
        .map(|&l| {
            if l < NUM_CLASSES {
                Ok(l as u8 + 1)
            } else {
                Err(Error::Format(format!("label {l} out of range")))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    fs::write(labels_path, label_bytes)?;
    Ok(())
}

/// Training-index lists, one per fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Validates that indices are unique within each fold and below `pool_size`.
    pub fn new(folds: Vec<Vec<usize>>, pool_size: usize) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Format("fold plan has no folds".into()));
        }
        for (f, fold) in folds.iter().enumerate() {
            if fold.is_empty() {
                return Err(Error::Format(format!("fold {f} is empty")));
            }
            let mut seen = HashSet::with_capacity(fold.len());
            for &i in fold {
                if i >= pool_size {
                    return Err(Error::Format(format!(
                        "fold {f}: index {i} not below {pool_size}"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::Format(format!("fold {f}: duplicate index {i}")));
                }
            }
        }
        Ok(Self { folds })
    }

    /// Single fold covering `0..n`.
    pub fn whole(n: usize) -> Result<Self> {
        Self::new(vec![(0..n).collect()], n)
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

/// Parses the STL-10 fold file: ten lines of whitespace-separated 0-based
/// indices, each fold holding 1000 unique indices below 5000.
pub fn parse_fold_plan(text: &str) -> Result<FoldPlan> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != NUM_FOLDS {
        return Err(Error::Format(format!(
            "expected {NUM_FOLDS} fold lines, found {}",
            lines.len()
        )));
    }
    let folds = lines
        .iter()
        .enumerate()
        .map(|(f, line)| {
            let idx = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|e| Error::Format(format!("fold {f}: bad index {t:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if idx.len() != FOLD_SIZE {
                return Err(Error::Format(format!(
                    "fold {f} has {} indices, expected {FOLD_SIZE}",
                    idx.len()
                )));
            }
            Ok(idx)
        })
        .collect::<Result<Vec<_>>>()?;
    FoldPlan::new(folds, NUM_TRAIN)
}

pub fn load_fold_plan(path: impl AsRef<Path>) -> Result<FoldPlan> {
    parse_fold_plan(&fs::read_to_string(path)?)
}
