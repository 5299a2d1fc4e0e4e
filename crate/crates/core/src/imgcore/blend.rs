use super::{Image, Mask};
use crate::error::{Error, Result};

/// Size of the generated image the blending kernel is built for.
///
/// With `s = min(w, h)` the kernel is centered at `(s/2, s/2)` with standard
/// deviation `s/6`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendKernelSpec {
    pub w: usize,
    pub h: usize,
}

impl BlendKernelSpec {
    pub fn new(w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel dims must be positive, got {w}x{h}"
            )));
        }
        Ok(BlendKernelSpec { w, h })
    }

    pub fn side(&self) -> f64 {
        self.w.min(self.h) as f64
    }

    pub fn mu(&self) -> (f64, f64) {
        (self.side() / 2.0, self.side() / 2.0)
    }

    pub fn sigma(&self) -> f64 {
        self.side() / 6.0
    }

    /// Kernel value at real coordinates.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (mx, my) = self.mu();
        let s = self.sigma();
        (-((x - mx).powi(2) + (y - my).powi(2)) / (2.0 * s * s)).exp()
    }
}

/// Gaussian weight mask evaluated at integer pixel coordinates, unnormalized.
pub fn gaussian_weight_mask(spec: BlendKernelSpec) -> Mask {
    let mut data = Vec::with_capacity(spec.w * spec.h);
    for y in 0..spec.h {
        for x in 0..spec.w {
            data.push(spec.value(x as f64, y as f64));
        }
    }
    Image::from_parts_unchecked(spec.w, spec.h, 1, data)
}

/// `mask * synthetic + (1 - mask) * original`, the mask broadcast over channels.
pub fn alpha_blend(original: &Image, synthetic: &Image, mask: &Mask) -> Result<Image> {
    mask.require_channels(1)?;
    if !original.same_dims(synthetic)
        || !original.same_dims(mask)
        || original.channels() != synthetic.channels()
    {
        return Err(Error::DimensionMismatch(format!(
            "blend inputs {}x{}x{}, {}x{}x{}, mask {}x{}",
            original.width(),
            original.height(),
            original.channels(),
            synthetic.width(),
            synthetic.height(),
            synthetic.channels(),
            mask.width(),
            mask.height()
        )));
    }
    let c = original.channels();
    let mut out = original.data().to_vec();
    for (i, &m) in mask.data().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for ch in 0..c {
            let k = i * c + ch;
            out[k] = (m * synthetic.data()[k] + (1.0 - m) * original.data()[k]).clamp(0.0, 1.0);
        }
    }
    Ok(Image::from_parts_unchecked(
        original.width(),
        original.height(),
        c,
        out,
    ))
}
