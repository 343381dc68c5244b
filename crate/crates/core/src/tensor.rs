//! Feature-map stacks flowing between layers.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Stack of 2D feature maps for one image, stored depth-first as
/// `(depth, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSet {
    maps: Array3<f64>,
    source_image_id: u64,
}

impl FeatureMapSet {
    /// Builds a set after checking that every dimension is non-zero and all
    /// values are finite.
    pub fn new(maps: Array3<f64>, source_image_id: u64) -> Result<Self> {
        let (d, h, w) = maps.dim();
        if d == 0 || h == 0 || w == 0 {
            return Err(Error::Dim(format!("empty feature map set {d}x{h}x{w}")));
        }
        let set = Self {
            maps,
            source_image_id,
        };
        set.assert_finite()?;
        Ok(set)
    }

    /// Single-map set wrapping a grayscale image.
    pub fn from_image(pixels: &Array2<f64>, source_image_id: u64) -> Result<Self> {
        Self::new(pixels.clone().insert_axis(Axis(0)), source_image_id)
    }

    pub fn maps(&self) -> &Array3<f64> {
        &self.maps
    }

    pub fn into_maps(self) -> Array3<f64> {
        self.maps
    }

    pub fn map(&self, depth: usize) -> ArrayView2<'_, f64> {
        self.maps.index_axis(Axis(0), depth)
    }

    pub fn height(&self) -> usize {
        self.maps.dim().1
    }

    pub fn width(&self) -> usize {
        self.maps.dim().2
    }

    pub fn depth(&self) -> usize {
        self.maps.dim().0
    }

    pub fn source_image_id(&self) -> u64 {
        self.source_image_id
    }

    /// Maps at `depth_indices`, in the order given.
    pub fn slice_depths(&self, depth_indices: &[usize]) -> Result<Self> {
        let depth = self.depth();
        if let Some(&index) = depth_indices.iter().find(|&&i| i >= depth) {
            return Err(Error::Index { index, depth });
        }
        if depth_indices.is_empty() {
            return Err(Error::Dim("empty depth selection".into()));
        }
        Ok(Self {
            maps: self.maps.select(Axis(0), depth_indices),
            source_image_id: self.source_image_id,
        })
    }

    /// Stacks sets along depth. All parts must share spatial dimensions.
    pub fn concat(parts: &[FeatureMapSet]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dim("nothing to concatenate".into()))?;
        let (h, w) = (first.height(), first.width());
        if parts.iter().any(|p| p.height() != h || p.width() != w) {
            return Err(Error::Dim("spatial dimensions differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.maps.view()).collect();
        let maps = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Dim(e.to_string()))?;
        Ok(Self {
            maps,
            source_image_id: first.source_image_id,
        })
    }

    /// Fails with the first non-finite coordinate `(depth, row, col)`.
    pub fn assert_finite(&self) -> Result<()> {
        match self.maps.indexed_iter().find(|(_, v)| !v.is_finite()) {
            Some(((d, r, c), &value)) => Err(Error::NonFiniteValue {
                coord: vec![d, r, c],
                value,
            }),
            None => Ok(()),
        }
    }

    /// Row-major flattening (depth, row, col).
    pub fn flatten(&self) -> Vec<f64> {
        self.maps.iter().copied().collect()
    }
}

/// Free-function form of [`FeatureMapSet::slice_depths`].
pub fn tensor_slice(set: &FeatureMapSet, depth_indices: &[usize]) -> Result<FeatureMapSet> {
    set.slice_depths(depth_indices)
}

/// Free-function form of [`FeatureMapSet::assert_finite`].
pub fn assert_finite(set: &FeatureMapSet) -> Result<()> {
    set.assert_finite()
}
