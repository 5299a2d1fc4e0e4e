use super::Homography;
use crate::error::Result;
use crate::imgcore::{sample_bilinear, Image};

/// Warps `img` into an `out_w`×`out_h` canvas.
///
/// Each output pixel `(x, y)` is pulled from `H⁻¹·(x, y)` in the source with
/// bilinear sampling; samples that fall outside the source take `fill`.
pub fn warp_image(
    img: &Image,
    h: &Homography,
    out_w: usize,
    out_h: usize,
    fill: f64,
) -> Result<Image> {
    let inv = h.inverse()?;
    let c = img.channels();
    let fill = fill.clamp(0.0, 1.0);
    let mut data = vec![fill; out_w * out_h * c];
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy, sw) = inv.project_raw(x as f64, y as f64);
            if sw.abs() < 1e-12 {
                continue;
            }
            let (sx, sy) = (sx / sw, sy / sw);
            let base = (y * out_w + x) * c;
            for ch in 0..c {
                if let Some(v) = sample_bilinear(img, sx, sy, ch) {
                    data[base + ch] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Image::new(out_w, out_h, c, data)
}
