//! Volume and label grids shared by every other module.
//!
//! Storage is C-order over `[d0, d1, d2]` (last axis fastest). For NIfTI
//! files the axes are (i, j, k) of the header, so `spacing[a]` is
//! `pixdim[a + 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque NIfTI header bytes carried through a read/write round trip so
/// orientation fields (qform/sform, xyzt units, descrip) survive untouched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderBlob(pub Vec<u8>);

/// Grid extent plus physical voxel size in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub shape: [usize; 3],
    pub spacing: [f32; 3],
}

impl Geometry {
    pub fn new(shape: [usize; 3], spacing: [f32; 3]) -> Result<Self> {
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("empty shape {shape:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        Ok(Geometry { shape, spacing })
    }

    pub fn isotropic(shape: [usize; 3]) -> Self {
        Geometry {
            shape,
            spacing: [1.0; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.shape[2];
        let rest = idx / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], k]
    }

    /// Index of `c + offset`, or `None` when it falls outside the grid.
    #[inline]
    pub fn offset(&self, c: [usize; 3], d: [isize; 3]) -> Option<usize> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as isize + d[a];
            if v < 0 || v >= self.shape[a] as isize {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }

    pub fn contains(&self, p: [isize; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.shape[a])
    }
}

/// Scalar intensity grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    pub geom: Geometry,
    pub data: Vec<f32>,
    pub header: Option<HeaderBlob>,
}

impl Volume3D {
    pub fn new(geom: Geometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                geom.shape
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite intensity".into()));
        }
        Ok(Volume3D {
            geom,
            data,
            header: None,
        })
    }

    pub fn zeros(geom: Geometry) -> Self {
        Volume3D {
            data: vec![0.0; geom.len()],
            geom,
            header: None,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.geom.shape
    }

    /// Per-volume min-max scaling to [0, 1]. A constant volume maps to zeros.
    pub fn min_max_scaled(&self) -> Volume3D {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        let data = if range > 0.0 {
            self.data.iter().map(|&v| (v - lo) / range).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Volume3D {
            geom: self.geom,
            data,
            header: self.header.clone(),
        }
    }
}

/// Binary foreground mask; every value is 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    pub geom: Geometry,
    pub data: Vec<u8>,
    pub header: Option<HeaderBlob>,
}

impl LabelVolume {
    /// Builds a label, mapping any nonzero value to 1.
    pub fn new(geom: Geometry, mut data: Vec<u8>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                geom.shape
            )));
        }
        for v in data.iter_mut() {
            *v = (*v != 0) as u8;
        }
        Ok(LabelVolume {
            geom,
            data,
            header: None,
        })
    }

    pub fn empty(geom: Geometry) -> Self {
        LabelVolume {
            data: vec![0; geom.len()],
            geom,
            header: None,
        }
    }

    pub fn from_fn(geom: Geometry, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let data = (0..geom.len()).map(|i| f(geom.coords(i)) as u8).collect();
        LabelVolume {
            geom,
            data,
            header: None,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.geom.shape
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    #[inline]
    pub fn get(&self, c: [usize; 3]) -> bool {
        self.data[self.geom.index(c[0], c[1], c[2])] != 0
    }

    #[inline]
    pub fn set(&mut self, c: [usize; 3], v: bool) {
        let i = self.geom.index(c[0], c[1], c[2]);
        self.data[i] = v as u8;
    }

    /// Voxelwise `self ⊆ other`.
    pub fn is_subset_of(&self, other: &LabelVolume) -> bool {
        self.data
            .iter()
            .zip(&other.data)
            .all(|(&a, &b)| a == 0 || b != 0)
    }

    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            geom: self.geom,
            data: self.data.iter().map(|&v| v as f32).collect(),
            header: self.header.clone(),
        }
    }

    pub(crate) fn with_data(&self, data: Vec<u8>) -> LabelVolume {
        LabelVolume {
            geom: self.geom,
            data,
            header: self.header.clone(),
        }
    }
}

/// Voxel-level confusion counts between a prediction and a reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

pub fn confusion_counts(pred: &LabelVolume, gt: &LabelVolume) -> Result<ConfusionCounts> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(pred.shape(), gt.shape()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p != 0, g != 0) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}
