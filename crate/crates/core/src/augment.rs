//! Training-set augmentation: left-right mirroring, small rotations and
//! downscaling.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl10::LabeledImage;

pub const MAX_ROTATION_DEG: f64 = 45.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    #[serde(default)]
    pub mirror: bool,
    #[serde(default)]
    pub rotations_deg: Vec<f64>,
    #[serde(default)]
    pub scale_factor: Option<f64>,
}

impl AugmentPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn mirror() -> Self {
        Self {
            mirror: true,
            ..Self::default()
        }
    }

    pub fn mirror_and_rotations() -> Self {
        Self {
            mirror: true,
            rotations_deg: vec![10.0, -10.0],
            scale_factor: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.scale_factor {
            check_scale(f)?;
        }
        if let Some(a) = self.rotations_deg.iter().find(|a| !(a.abs() <= MAX_ROTATION_DEG)) {
            return Err(Error::Config(format!("rotation {a} exceeds ±{MAX_ROTATION_DEG}°")));
        }
        Ok(())
    }

    /// Number of images produced per input image.
    pub fn multiplicity(&self) -> usize {
        1 + self.mirror as usize + self.rotations_deg.len()
    }
}

fn check_scale(factor: f64) -> Result<()> {
    if factor > 0.0 && factor <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("scale factor {factor} outside (0, 1]")))
    }
}

pub fn mirror_lr(img: &LabeledImage) -> LabeledImage {
    let w = img.width();
    let pixels = Array2::from_shape_fn(img.pixels.dim(), |(r, c)| img.pixels[[r, w - 1 - c]]);
    LabeledImage::new(pixels, img.label)
}

/// Augmentation rotation, limited to `±MAX_ROTATION_DEG`.
pub fn rotate(img: &LabeledImage, angle_deg: f64) -> Result<LabeledImage> {
    if !(angle_deg.abs() <= MAX_ROTATION_DEG) {
        return Err(Error::Config(format!("rotation {angle_deg} exceeds ±{MAX_ROTATION_DEG}°")));
    }
    Ok(rotate_any(img, angle_deg))
}

/// Rotates counterclockwise (as displayed, rows running downward) about the
/// image center by any angle. Each output pixel is sampled from the
/// inverse-rotated position by bilinear interpolation over a zero-extended
/// image.
pub fn rotate_any(img: &LabeledImage, angle_deg: f64) -> LabeledImage {
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (h, w) = img.pixels.dim();
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let src = &img.pixels;
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            src[[r as usize, c as usize]]
        }
    };
    let pixels = Array2::from_shape_fn((h, w), |(r, c)| {
        let dy = r as f64 - cy;
        let dx = c as f64 - cx;
        let sx = cx + cos * dx - sin * dy;
        let sy = cy + sin * dx + cos * dy;
        let x0 = sx.floor();
        let y0 = sy.floor();
        let fx = sx - x0;
        let fy = sy - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
            + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1))
    });
    LabeledImage::new(pixels, img.label)
}

/// Area-average resampling to `round(dim * factor)` on each axis.
pub fn scale(img: &LabeledImage, factor: f64) -> Result<LabeledImage> {
    check_scale(factor)?;
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let (h, w) = img.pixels.dim();
    let oh = ((h as f64 * factor).round() as usize).max(1);
    let ow = ((w as f64 * factor).round() as usize).max(1);
    let rows = overlap_weights(h, oh);
    let cols = overlap_weights(w, ow);
    let pixels = Array2::from_shape_fn((oh, ow), |(r, c)| {
        let mut acc = 0.0;
        for &(sr, wr) in &rows[r] {
            for &(sc, wc) in &cols[c] {
                acc += wr * wc * img.pixels[[sr, sc]];
            }
        }
        acc
    });
    Ok(LabeledImage::new(pixels, img.label))
}

/// For each output cell, the source indices it covers and their normalized
/// overlap weights.
fn overlap_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let step = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * step;
            let hi = lo + step;
            let mut cells = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src {
                let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    cells.push((s, overlap / step));
                }
                s += 1;
            }
            cells
        })
        .collect()
}

/// Originals first, then every mirrored image, then each rotation of every
/// original in plan order. A scale factor, if set, is applied to every
/// output image instead of adding new ones.
pub fn expand_set(images: &[LabeledImage], plan: &AugmentPlan) -> Result<Vec<LabeledImage>> {
    plan.validate()?;
    let mut out = Vec::with_capacity(images.len() * plan.multiplicity());
    out.extend(images.iter().cloned());
    if plan.mirror {
        out.extend(images.iter().map(mirror_lr));
    }
    for &angle in &plan.rotations_deg {
        for img in images {
            out.push(rotate(img, angle)?);
        }
    }
    if let Some(f) = plan.scale_factor {
        out = out.iter().map(|img| scale(img, f)).collect::<Result<_>>()?;
    }
    Ok(out)
}
