use crate::error::{Error, Result};
use crate::imgcore::Image;

/// Dense row-major tensor. Batched activations use `[N, features]` or
/// `[N, C, H, W]` layouts.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "tensor contains non-finite values".into(),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn reshaped(self, shape: Vec<usize>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "reshape size mismatch"
        );
        Tensor {
            shape,
            data: self.data,
        }
    }

    /// Stacks images as planar `[N, C, H, W]`.
    pub fn from_images(images: &[&Image]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero images".into()))?;
        let (w, h, c) = (first.width(), first.height(), first.channels());
        let mut data = Vec::with_capacity(images.len() * w * h * c);
        for img in images {
            if img.width() != w || img.height() != h || img.channels() != c {
                return Err(Error::DimensionMismatch(
                    "images in a batch must share dims".into(),
                ));
            }
            for ch in 0..c {
                data.extend(img.data().iter().skip(ch).step_by(c));
            }
        }
        Ok(Tensor::from_parts(vec![images.len(), c, h, w], data))
    }

    /// Converts batch item `n` of a `[N, C, H, W]` tensor back to an image.
    pub fn to_image(&self, n: usize) -> Result<Image> {
        if self.shape.len() != 4 {
            return Err(Error::DimensionMismatch(format!(
                "expected [N,C,H,W], got {:?}",
                self.shape
            )));
        }
        let (c, h, w) = (self.shape[1], self.shape[2], self.shape[3]);
        let plane = h * w;
        let item = &self.data[n * c * plane..(n + 1) * c * plane];
        let mut data = Vec::with_capacity(c * plane);
        for i in 0..plane {
            for ch in 0..c {
                data.push(item[ch * plane + i]);
            }
        }
        Image::from_clamped(w, h, c, data)
    }
}
