//! Row-major rasters and the sample types they carry.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// A row-major `width × height` grid of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Depth on the common 0..=255 scale; larger is farther.
pub type DepthImage = Raster<f64>;
/// Ground-truth saliency in [0, 1]; binary masks hold {0, 1}.
pub type GroundTruth = Raster<f64>;
/// Predicted saliency in [0, 1].
pub type SaliencyMap = Raster<f64>;
/// 8-bit sRGB.
pub type RgbImage = Raster<[u8; 3]>;

impl<T> Raster<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                found: data.len(),
            });
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub(crate) fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

/// Raw sensor depth at arbitrary bit depth plus a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDepthImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u32>,
    pub valid: Vec<bool>,
}

impl RawDepthImage {
    pub fn new(width: usize, height: usize, values: Vec<u32>, valid: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        for len in [values.len(), valid.len()] {
            if len != width * height {
                return Err(Error::LengthMismatch {
                    expected: width * height,
                    found: len,
                });
            }
        }
        Ok(RawDepthImage {
            width,
            height,
            values,
            valid,
        })
    }

    /// Zero marks a missing measurement.
    pub fn from_values(width: usize, height: usize, values: Vec<u32>) -> Result<Self> {
        let valid = values.iter().map(|&v| v != 0).collect();
        Self::new(width, height, values, valid)
    }
}

/// Sample types that can be blended for bilinear resampling.
pub trait Sample: Copy {
    /// Blend the four neighbours `[top-left, top-right, bottom-left, bottom-right]`.
    fn bilinear(corners: [Self; 4], fx: f64, fy: f64) -> Self;
}

impl Sample for f64 {
    #[inline]
    fn bilinear(c: [f64; 4], fx: f64, fy: f64) -> f64 {
        let top = c[0] + (c[1] - c[0]) * fx;
        let bottom = c[2] + (c[3] - c[2]) * fx;
        top + (bottom - top) * fy
    }
}

impl Sample for [u8; 3] {
    #[inline]
    fn bilinear(c: [[u8; 3]; 4], fx: f64, fy: f64) -> [u8; 3] {
        let mut out = [0u8; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            let v = f64::bilinear(
                [
                    c[0][ch] as f64,
                    c[1][ch] as f64,
                    c[2][ch] as f64,
                    c[3][ch] as f64,
                ],
                fx,
                fy,
            );
            *o = math::round(v).clamp(0.0, 255.0) as u8;
        }
        out
    }
}

/// Bilinear lookup at continuous pixel-index coordinates with edge clamping.
pub(crate) fn sample_bilinear<T: Sample>(img: &Raster<T>, sx: f64, sy: f64) -> T {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let sx = sx.clamp(0.0, max_x);
    let sy = sy.clamp(0.0, max_y);
    let x0 = math::floor(sx);
    let y0 = math::floor(sy);
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    T::bilinear(
        [
            *img.get(x0, y0),
            *img.get(x1, y0),
            *img.get(x0, y1),
            *img.get(x1, y1),
        ],
        fx,
        fy,
    )
}

/// Nearest-pixel lookup at continuous pixel-index coordinates with edge clamping.
pub(crate) fn sample_nearest<T: Copy>(img: &Raster<T>, sx: f64, sy: f64) -> T {
    let x = math::floor(sx + 0.5).clamp(0.0, (img.width - 1) as f64) as usize;
    let y = math::floor(sy + 0.5).clamp(0.0, (img.height - 1) as f64) as usize;
    *img.get(x, y)
}
