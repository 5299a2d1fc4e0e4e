use super::{BoundingBox, Image};
use crate::error::{Error, Result};

/// Copies the part of `img` covered by `bbox` (clamped to the image).
pub fn crop(img: &Image, bbox: BoundingBox) -> Result<Image> {
    let b = bbox
        .clamp_to(img.width(), img.height())
        .ok_or_else(|| Error::EmptyIntersection(bbox.to_string()))?;
    let c = img.channels();
    let (bw, bh) = (b.w as usize, b.h as usize);
    let mut data = Vec::with_capacity(bw * bh * c);
    for y in b.y as usize..b.y as usize + bh {
        let row = (y * img.width() + b.x as usize) * c;
        data.extend_from_slice(&img.data()[row..row + bw * c]);
    }
    Ok(Image::from_parts_unchecked(bw, bh, c, data))
}

/// Bilinear sample of channel `c` at real coordinates; `None` outside
/// `[0, w-1] x [0, h-1]`.
#[inline]
pub fn sample_bilinear(img: &Image, x: f64, y: f64, c: usize) -> Option<f64> {
    const EPS: f64 = 1e-9;
    let (w, h) = (img.width(), img.height());
    if !(x >= -EPS && y >= -EPS && x <= (w - 1) as f64 + EPS && y <= (h - 1) as f64 + EPS) {
        return None;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = lerp(img.get(x0, y0, c), img.get(x1, y0, c), fx);
    let bottom = lerp(img.get(x0, y1, c), img.get(x1, y1, c), fx);
    Some(lerp(top, bottom, fy))
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a * (1.0 - t) + b * t
    }
}

/// Bilinear resize with corner-aligned sampling: output pixel `i` reads
/// source coordinate `i * (in - 1) / (out - 1)`, so corners map to corners.
/// A single output row/column samples the source center.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "output dims must be positive, got {out_w}x{out_h}"
        )));
    }
    if out_w == img.width() && out_h == img.height() {
        return Ok(img.clone());
    }
    let scale = |out: usize, inp: usize, i: usize| -> f64 {
        if out == 1 {
            (inp - 1) as f64 / 2.0
        } else {
            i as f64 * (inp - 1) as f64 / (out - 1) as f64
        }
    };
    let c = img.channels();
    let mut data = Vec::with_capacity(out_w * out_h * c);
    for y in 0..out_h {
        let sy = scale(out_h, img.height(), y);
        for x in 0..out_w {
            let sx = scale(out_w, img.width(), x);
            for ch in 0..c {
                data.push(
                    sample_bilinear(img, sx, sy, ch)
                        .unwrap_or(0.0)
                        .clamp(0.0, 1.0),
                );
            }
        }
    }
    Ok(Image::from_parts_unchecked(out_w, out_h, c, data))
}
