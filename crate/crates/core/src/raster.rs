//! Single-channel rasters and bilinear sampling.
//!
//! Pixel `(x, y)` has its centre at integer coordinates; `x` runs along a row,
//! `y` down the columns. Sampling at exact integer coordinates returns the stored
//! value bit-for-bit.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster data length {got} does not match {width}x{height}")]
    Shape { width: usize, height: usize, got: usize },
    #[error("image io: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    #[inline]
    pub fn dist2(self, other: Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn cast<U: Scalar>(self) -> Point2<U> {
        Point2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

/// What a sampler returns for coordinates outside the raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Border<T> {
    Constant(T),
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, RasterError> {
        if data.len() != width * height {
            return Err(RasterError::Shape {
                width,
                height,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
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
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[T] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Bilinear sample at a real-valued position.
    pub fn sample(&self, x: T, y: T, border: Border<T>) -> T {
        if self.width == 0 || self.height == 0 {
            return match border {
                Border::Constant(v) => v,
                Border::Clamp => T::zero(),
            };
        }
        let (wmax, hmax) = (T::lit((self.width - 1) as f64), T::lit((self.height - 1) as f64));
        let (x, y) = match border {
            Border::Constant(v) => {
                if !(x >= T::zero() && x <= wmax && y >= T::zero() && y <= hmax) {
                    return v;
                }
                (x, y)
            }
            Border::Clamp => {
                if !(x.is_finite() && y.is_finite()) {
                    return T::zero();
                }
                (x.max(T::zero()).min(wmax), y.max(T::zero()).min(hmax))
            }
        };
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let x0 = x0f.to_usize().unwrap_or(0);
        let y0 = y0f.to_usize().unwrap_or(0);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let one = T::one();
        let top = self.get(x0, y0) * (one - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (one - fx) + self.get(x1, y1) * fx;
        top * (one - fy) + bottom * fy
    }

    /// Builds a new raster by inverse mapping: output pixel `(x, y)` takes the
    /// source value at `map(x, y)`. Rows are filled in parallel.
    pub fn remap(
        &self,
        width: usize,
        height: usize,
        border: Border<T>,
        map: impl Fn(T, T) -> Point2<T> + Sync,
    ) -> Self {
        let mut data = vec![T::zero(); width * height];
        if width > 0 {
            data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
                let fy = T::lit(y as f64);
                for (x, v) in row.iter_mut().enumerate() {
                    let src = map(T::lit(x as f64), fy);
                    *v = self.sample(src.x, src.y, border);
                }
            });
        }
        Self { width, height, data }
    }

    pub fn cast<U: Scalar>(&self) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Copies a `width`×`height` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Option<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return None;
        }
        Some(Self::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }
}

impl Raster<f32> {
    /// Writes an 8-bit grayscale PNG, values clamped to [0, 1].
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer sized from raster")
            .save(path)?;
        Ok(())
    }

    /// Reads any image as luma, scaled to [0, 1].
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|b| f32::from(b) / 255.0).collect();
        Self::from_vec(w as usize, h as usize, data)
    }
}
