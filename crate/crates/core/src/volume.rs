//! Spacing-aware 3D grids: scalar [`Volume`]s and [`BinaryMask`]s.
//!
//! Both are stored in C order with shape `(D, H, W)` and the W axis fastest.
//! Spacing is given in millimetres per voxel in the same `(z, y, x)` order.

use crate::error::{Error, Result};

pub type Shape3 = [usize; 3];
pub type Spacing3 = [f64; 3];

pub(crate) fn check_spacing(spacing: Spacing3) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "spacing must be finite and positive, got {spacing:?}"
        )))
    }
}

fn check_shape(shape: Shape3, len: usize) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Dimension(format!("shape {shape:?} has a zero extent")));
    }
    let expected = shape[0] * shape[1] * shape[2];
    if expected != len {
        return Err(Error::Dimension(format!(
            "shape {shape:?} needs {expected} values, got {len}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn linear_index(shape: Shape3, z: usize, y: usize, x: usize) -> usize {
    (z * shape[1] + y) * shape[2] + x
}

/// A dense 3D scalar image with physical voxel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Vec<f64>,
    shape: Shape3,
    spacing: Spacing3,
}

impl Volume {
    pub fn new(data: Vec<f64>, shape: Shape3, spacing: Spacing3) -> Result<Self> {
        check_shape(shape, data.len())?;
        check_spacing(spacing)?;
        Ok(Self {
            data,
            shape,
            spacing,
        })
    }

    pub fn zeros(shape: Shape3, spacing: Spacing3) -> Result<Self> {
        Self::new(vec![0.0; shape.iter().product()], shape, spacing)
    }

    pub fn filled(shape: Shape3, spacing: Spacing3, value: f64) -> Result<Self> {
        Self::new(vec![value; shape.iter().product()], shape, spacing)
    }

    /// Builds a volume by evaluating `f(z, y, x)` at every voxel.
    pub fn from_fn(
        shape: Shape3,
        spacing: Spacing3,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.iter().product());
        for z in 0..shape[0] {
            for y in 0..shape[1] {
                for x in 0..shape[2] {
                    data.push(f(z, y, x));
                }
            }
        }
        Self::new(data, shape, spacing)
    }

    /// Same geometry, new payload.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(data, self.shape, self.spacing)
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn spacing(&self) -> Spacing3 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        linear_index(self.shape, z, y, x)
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, value: f64) {
        let i = self.index(z, y, x);
        self.data[i] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    /// Population variance (divides by N).
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.len() as f64
    }

    pub fn non_finite_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_finite()).count()
    }
}

/// A dense 3D boolean grid with spacing, used for segmentation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    data: Vec<bool>,
    shape: Shape3,
    spacing: Spacing3,
}

impl BinaryMask {
    pub fn new(data: Vec<bool>, shape: Shape3, spacing: Spacing3) -> Result<Self> {
        check_shape(shape, data.len())?;
        check_spacing(spacing)?;
        Ok(Self {
            data,
            shape,
            spacing,
        })
    }

    pub fn empty(shape: Shape3, spacing: Spacing3) -> Result<Self> {
        Self::new(vec![false; shape.iter().product()], shape, spacing)
    }

    pub fn from_fn(
        shape: Shape3,
        spacing: Spacing3,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.iter().product());
        for z in 0..shape[0] {
            for y in 0..shape[1] {
                for x in 0..shape[2] {
                    data.push(f(z, y, x));
                }
            }
        }
        Self::new(data, shape, spacing)
    }

    /// Converts a volume whose values are exactly 0 or 1.
    pub fn from_volume(v: &Volume) -> Result<Self> {
        let mut data = Vec::with_capacity(v.len());
        for &value in v.data() {
            if value == 0.0 {
                data.push(false);
            } else if value == 1.0 {
                data.push(true);
            } else {
                return Err(Error::Domain(format!(
                    "mask values must be 0 or 1, found {value}"
                )));
            }
        }
        Self::new(data, v.shape(), v.spacing())
    }

    /// Voxels strictly above `level` become foreground.
    pub fn threshold(v: &Volume, level: f64) -> Self {
        Self {
            data: v.data().iter().map(|&x| x > level).collect(),
            shape: v.shape(),
            spacing: v.spacing(),
        }
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            shape: self.shape,
            spacing: self.spacing,
        }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn spacing(&self) -> Spacing3 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        linear_index(self.shape, z, y, x)
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.data[self.index(z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, value: bool) {
        let i = self.index(z, y, x);
        self.data[i] = value;
    }

    /// Number of foreground voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground voxel coordinates in C order.
    pub fn points(&self) -> Vec<[usize; 3]> {
        let [_, h, w] = self.shape;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| [i / (h * w), (i / w) % h, i % w])
            .collect()
    }
}
