//! Image container, gradient/divergence pair and the ribbon generator.
//!
//! The gradient uses forward differences with a Neumann boundary (the outward
//! difference on the last row/column is zero) and the divergence is its exact
//! negative adjoint, so `<grad u, p> = -<u, div p>` holds to rounding error.
//! This is the discretization under which the dual projection step bound
//! `tau <= 1/8` is valid.

use crate::error::{Error, Result};

/// Real-valued 2-D scalar field stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Grid filled with a constant value.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be >= 1");
        ImageGrid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// All-zero grid.
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Build from raw row-major data.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::Dimension(format!(
                "grid dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(ImageGrid {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // width, height >= 1 by construction
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Bilinear sample at real coordinates; zero outside the grid.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        if x < 0.0 || y < 0.0 || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return 0.0;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let v00 = self.get(x0, y0);
        let v10 = self.get(x1, y0);
        let v01 = self.get(x0, y1);
        let v11 = self.get(x1, y1);
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Maximum absolute value.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Inner product with another grid of the same dimensions.
    pub fn dot(&self, other: &ImageGrid) -> f64 {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Pointwise map into a new grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two grids.
    pub fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Absolute values, rescaled so the maximum maps to 255 (all-zero stays zero).
    pub fn abs_rescaled(&self) -> ImageGrid {
        let max = self.max_abs();
        if max <= 0.0 {
            return ImageGrid::zeros(self.width, self.height);
        }
        self.map(|v| v.abs() * 255.0 / max)
    }

    /// True when every value is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-pixel 2-vector field (gradients, dual variables).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1);
        VectorField {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }

    pub fn from_components(width: usize, height: usize, gx: Vec<f64>, gy: Vec<f64>) -> Result<Self> {
        if gx.len() != width * height || gy.len() != width * height {
            return Err(Error::Dimension(format!(
                "component length {}/{} does not match {width}x{height}",
                gx.len(),
                gy.len()
            )));
        }
        Ok(VectorField {
            width,
            height,
            gx,
            gy,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gx(&self) -> &[f64] {
        &self.gx
    }

    pub fn gy(&self) -> &[f64] {
        &self.gy
    }

    pub fn gx_mut(&mut self) -> &mut [f64] {
        &mut self.gx
    }

    pub fn gy_mut(&mut self) -> &mut [f64] {
        &mut self.gy
    }

    /// Mutable access to both components at once.
    pub fn components_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.gx, &mut self.gy)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, gx: f64, gy: f64) {
        let i = y * self.width + x;
        self.gx[i] = gx;
        self.gy[i] = gy;
    }

    /// Largest pointwise Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.gx
            .iter()
            .zip(&self.gy)
            .fold(0.0f64, |m, (&a, &b)| m.max(a.hypot(b)))
    }

    /// Inner product treating the field as one long vector.
    pub fn dot(&self, other: &VectorField) -> f64 {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        let x: f64 = self.gx.iter().zip(&other.gx).map(|(a, b)| a * b).sum();
        let y: f64 = self.gy.iter().zip(&other.gy).map(|(a, b)| a * b).sum();
        x + y
    }
}

/// Forward-difference gradient with Neumann boundary.
///
/// The x component of the last column and the y component of the last row
/// are zero.
pub fn gradient(img: &ImageGrid) -> VectorField {
    let (w, h) = (img.width, img.height);
    let mut field = VectorField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = img.data[i];
            field.gx[i] = if x + 1 < w { img.data[i + 1] - v } else { 0.0 };
            field.gy[i] = if y + 1 < h { img.data[i + w] - v } else { 0.0 };
        }
    }
    field
}

/// Backward-difference divergence, the exact negative adjoint of [`gradient`].
///
/// The last column of `gx` and the last row of `gy` never enter the result;
/// they are the components the Neumann gradient forces to zero.
pub fn divergence(field: &VectorField) -> ImageGrid {
    let (w, h) = (field.width, field.height);
    let mut out = ImageGrid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut dx = 0.0;
            if x + 1 < w {
                dx += field.gx[i];
            }
            if x > 0 {
                dx -= field.gx[i - 1];
            }
            let mut dy = 0.0;
            if y + 1 < h {
                dy += field.gy[i];
            }
            if y > 0 {
                dy -= field.gy[i - w];
            }
            out.data[i] = dx + dy;
        }
    }
    out
}

/// Binary ribbon indicator: a `width_px` x `n * width_px` rectangle of ones
/// centered in the grid, long axis vertical.
pub fn make_ribbon(n: usize, width_px: usize, grid_w: usize, grid_h: usize) -> Result<ImageGrid> {
    if n == 0 || width_px == 0 {
        return Err(Error::Domain(
            "ribbon aspect ratio and width must be positive".into(),
        ));
    }
    let len = n * width_px;
    if width_px > grid_w || len > grid_h {
        return Err(Error::Dimension(format!(
            "ribbon {width_px}x{len} does not fit in {grid_w}x{grid_h} grid"
        )));
    }
    let x0 = (grid_w - width_px) / 2;
    let y0 = (grid_h - len) / 2;
    let mut img = ImageGrid::zeros(grid_w, grid_h);
    for y in y0..y0 + len {
        for x in x0..x0 + width_px {
            img.set(x, y, 1.0);
        }
    }
    Ok(img)
}
