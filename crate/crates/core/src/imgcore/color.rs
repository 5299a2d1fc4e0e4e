use super::Image;
use crate::error::Result;

/// Converts RGB to HSV in the 8-bit convention rescaled to the unit range.
///
/// Hue covers `[0, 180)` in 8-bit terms, so the output hue channel is
/// `degrees / 2 / 255`; saturation and value are in `[0, 1]` directly.
pub fn rgb_to_hsv(img: &Image) -> Result<Image> {
    img.require_channels(3)?;
    let mut out = Vec::with_capacity(img.data().len());
    for px in img.data().chunks_exact(3) {
        let (h, s, v) = hsv_pixel(px[0], px[1], px[2]);
        out.push(h / 2.0 / 255.0);
        out.push(s);
        out.push(v);
    }
    Ok(Image::from_parts_unchecked(
        img.width(),
        img.height(),
        3,
        out,
    ))
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub(crate) fn hsv_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, max);
    }
    let mut h = if max == r {
        60.0 * (g - b) / delta
    } else if max == g {
        60.0 * (b - r) / delta + 120.0
    } else {
        60.0 * (r - g) / delta + 240.0
    };
    if h < 0.0 {
        h += 360.0;
    }
    (h, s, max)
}

/// Inverse of [`hsv_pixel`]; used by the procedural renderer.
pub(crate) fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h_deg.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

#[cfg(test)]
mod tests {
    use super::*;

    // Textbook scalar conversion written independently of `hsv_pixel`.
    fn oracle(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
        let v = [r, g, b].into_iter().fold(f64::MIN, f64::max);
        let mn = [r, g, b].into_iter().fold(f64::MAX, f64::min);
        let c = v - mn;
        let s = if v == 0.0 { 0.0 } else { c / v };
        let hp = if c == 0.0 {
            0.0
        } else if v == r {
            ((g - b) / c).rem_euclid(6.0)
        } else if v == g {
            (b - r) / c + 2.0
        } else {
            (r - g) / c + 4.0
        };
        (hp * 60.0, s, v)
    }

    #[test]
    fn gray_has_zero_saturation() {
        let img = Image::filled(1, 1, 3, 0.5).unwrap();
        let hsv = rgb_to_hsv(&img).unwrap();
        assert_eq!(hsv.get(0, 0, 1), 0.0);
        assert_eq!(hsv.get(0, 0, 2), 0.5);
    }

    #[test]
    fn pure_red() {
        let img = Image::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let hsv = rgb_to_hsv(&img).unwrap();
        assert_eq!(hsv.pixel(0, 0), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn matches_formula_oracle() {
        let img = Image::new(1, 1, 3, vec![0.5, 0.25, 0.125]).unwrap();
        let hsv = rgb_to_hsv(&img).unwrap();
        let (h, s, v) = oracle(0.5, 0.25, 0.125);
        // 20 degrees, s = 0.75, v = 0.5
        assert!((h - 20.0).abs() < 1e-12);
        assert!((hsv.get(0, 0, 0) - h / 510.0).abs() < 1e-12);
        assert!((hsv.get(0, 0, 1) - s).abs() < 1e-12);
        assert!((hsv.get(0, 0, 2) - v).abs() < 1e-12);

        let mut seed = 7u64;
        for _ in 0..500 {
            let mut next = || {
                seed = seed
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (seed >> 11) as f64 / (1u64 << 53) as f64
            };
            let (r, g, b) = (next(), next(), next());
            let (h0, s0, v0) = hsv_pixel(r, g, b);
            let (h1, s1, v1) = oracle(r, g, b);
            assert!((h0 - h1).abs() < 1e-9, "{r} {g} {b}: {h0} vs {h1}");
            assert!((s0 - s1).abs() < 1e-12);
            assert!((v0 - v1).abs() < 1e-12);
            let back = hsv_to_rgb(h0, s0, v0);
            assert!(
                (back[0] - r).abs() < 1e-9
                    && (back[1] - g).abs() < 1e-9
                    && (back[2] - b).abs() < 1e-9
            );
        }
    }

    #[test]
    fn single_channel_is_rejected() {
        let img = Image::filled(2, 2, 1, 0.3).unwrap();
        assert!(rgb_to_hsv(&img).is_err());
    }
}
