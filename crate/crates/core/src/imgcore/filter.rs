use super::{Image, Mask};
use crate::error::{Error, Result};

/// Separable Gaussian blur. The kernel is truncated at `ceil(3 sigma)` and
/// renormalized over the in-bounds taps at the borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let (w, h, c) = (img.width(), img.height(), img.channels());

    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    let mut norm = 0.0;
                    for (k, &wk) in kernel.iter().enumerate() {
                        let d = k as isize - radius;
                        let (sx, sy) = if horizontal {
                            (x as isize + d, y as isize)
                        } else {
                            (x as isize, y as isize + d)
                        };
                        if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                            continue;
                        }
                        acc += wk * src[(sy as usize * w + sx as usize) * c + ch];
                        norm += wk;
                    }
                    dst[(y * w + x) * c + ch] = (acc / norm).clamp(0.0, 1.0);
                }
            }
        }
        dst
    };
    let tmp = pass(img.data(), true);
    let out = pass(&tmp, false);
    Ok(Image::from_parts_unchecked(w, h, c, out))
}

/// Replaces every `block`×`block` tile (anchored at the origin) by its mean.
/// Edge tiles average only the pixels they cover.
pub fn pixelate(img: &Image, block: usize) -> Result<Image> {
    if block == 0 {
        return Err(Error::InvalidArgument(
            "pixelation block must be at least 1".into(),
        ));
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = img.data().to_vec();
    for ty in (0..h).step_by(block) {
        for tx in (0..w).step_by(block) {
            let (x1, y1) = ((tx + block).min(w), (ty + block).min(h));
            let n = ((x1 - tx) * (y1 - ty)) as f64;
            for ch in 0..c {
                let first = img.get(tx, ty, ch);
                let mut sum = 0.0;
                let mut constant = true;
                for y in ty..y1 {
                    for x in tx..x1 {
                        let v = img.get(x, y, ch);
                        constant &= v == first;
                        sum += v;
                    }
                }
                // A constant tile keeps its exact value, which makes the
                // operation idempotent in floating point.
                let mean = if constant {
                    first
                } else {
                    (sum / n).clamp(0.0, 1.0)
                };
                for y in ty..y1 {
                    for x in tx..x1 {
                        out[(y * w + x) * c + ch] = mean;
                    }
                }
            }
        }
    }
    Ok(Image::from_parts_unchecked(w, h, c, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
}

/// Binary erosion/dilation with a square `(2r+1)`-wide structuring element.
///
/// The input is thresholded at 0.5; pixels outside the image count as 0.
pub fn morphology(mask: &Mask, op: MorphOp, radius: usize) -> Result<Mask> {
    mask.require_channels(1)?;
    let (w, h) = (mask.width(), mask.height());
    let bin: Vec<bool> = mask.data().iter().map(|&v| v >= 0.5).collect();
    let r = radius as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut hit_one = false;
            let mut all_one = true;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x + dx, y + dy);
                    let v = sx >= 0
                        && sy >= 0
                        && sx < w as isize
                        && sy < h as isize
                        && bin[(sy * w as isize + sx) as usize];
                    hit_one |= v;
                    all_one &= v;
                }
            }
            let on = match op {
                MorphOp::Erode => all_one,
                MorphOp::Dilate => hit_one,
            };
            out[(y * w as isize + x) as usize] = if on { 1.0 } else { 0.0 };
        }
    }
    Ok(Image::from_parts_unchecked(w, h, 1, out))
}
