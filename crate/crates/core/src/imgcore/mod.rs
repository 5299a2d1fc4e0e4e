//! Pixel-level primitives.
//!
//! Images are row-major grids of `f64` samples in `[0, 1]`, interleaved by
//! channel (`data[(y * width + x) * channels + c]`). Quantization to 8 bits
//! happens only at the file boundary (see [`io`]).

mod blend;
mod color;
mod filter;
pub mod io;
mod resample;

pub use blend::{alpha_blend, gaussian_weight_mask, BlendKernelSpec};
pub use color::rgb_to_hsv;
pub(crate) use color::{hsv_pixel, hsv_to_rgb};
pub use filter::{gaussian_blur, morphology, pixelate, MorphOp};
pub use resample::{crop, resize_bilinear, sample_bilinear};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row-major image with 1 or 3 interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Single-channel weight image with values in `[0, 1]`.
pub type Mask = Image;

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidChannels {
                expected: 3,
                got: channels,
            });
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "data length {} != {width}*{height}*{channels}",
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "sample {i} = {} is outside [0, 1]",
                data[i]
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image from samples that are clamped into `[0, 1]` first.
    pub fn from_clamped(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn from_rgb_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::from_clamped(width, height, 3, data)
    }

    pub fn mask_from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Mask> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_clamped(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Sets a sample, clamping into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = (y * self.width + x) * self.channels + c;
        self.data[i] = v.clamp(0.0, 1.0);
    }

    /// Applies `f` to every sample and clamps the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let data = self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect();
        Image::from_parts_unchecked(self.width, self.height, self.channels, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Image {
        debug_assert_eq!(data.len(), width * height * channels);
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub(crate) fn require_channels(&self, expected: usize) -> Result<()> {
        if self.channels != expected {
            return Err(Error::InvalidChannels {
                expected,
                got: self.channels,
            });
        }
        Ok(())
    }
}

/// Axis-aligned pixel rectangle. `x`, `y` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BoundingBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    /// Intersection with a `width`×`height` image, or `None` when empty.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<BoundingBox> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = self.right().min(width as i64);
        let y1 = self.bottom().min(height as i64);
        (x1 > x0 && y1 > y0).then(|| BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64
            && y >= self.y as f64
            && x <= self.right() as f64
            && y <= self.bottom() as f64
    }

    /// Moves each side inward by `floor(fraction * side)`.
    pub fn shrink(&self, fraction: f64) -> Result<BoundingBox> {
        if !(0.0..0.5).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "shrink fraction must be in [0, 0.5), got {fraction}"
            )));
        }
        let dx = (fraction * self.w as f64).floor() as i64;
        let dy = (fraction * self.h as f64).floor() as i64;
        let out = BoundingBox::new(self.x + dx, self.y + dy, self.w - 2 * dx, self.h - 2 * dy);
        if out.w < 1 || out.h < 1 {
            return Err(Error::InvalidArgument(format!(
                "shrinking {self} by {fraction} leaves an empty box"
            )));
        }
        Ok(out)
    }

    /// Moves each side outward by `round(fraction * side)`.
    pub fn grow(&self, fraction: f64) -> BoundingBox {
        let dx = (fraction * self.w as f64).round() as i64;
        let dy = (fraction * self.h as f64).round() as i64;
        BoundingBox::new(self.x - dx, self.y - dy, self.w + 2 * dx, self.h + 2 * dy)
    }
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}x{})", self.x, self.y, self.w, self.h)
    }
}

/// Trims a detector box by `fraction` of its size on every side.
pub fn shrink_bbox(bbox: BoundingBox, fraction: f64) -> Result<BoundingBox> {
    bbox.shrink(fraction)
}
