//! Fits a homography to landmark correspondences with gross outliers and
//! warps an image through it.

use facedeid::geom::{
    apply_homography, estimate_homography_dlt, robust_homography, warp_image, Homography, Point2,
    RobustFitConfig,
};
use facedeid::imgcore::Image;

fn main() -> facedeid::Result<()> {
    let truth = Homography::new([[0.9, 0.08, 14.0], [-0.05, 1.1, -4.0], [4e-4, 2e-4, 1.0]])?;
    let src: Vec<Point2> = (0..12)
        .map(|i| Point2::new((i * 23 % 60) as f64, (i * 37 % 55) as f64))
        .collect();
    let mut dst: Vec<Point2> = src
        .iter()
        .map(|p| apply_homography(*p, &truth))
        .collect::<facedeid::Result<_>>()?;
    // Three badly detected landmarks.
    for (i, d) in dst.iter_mut().enumerate().take(3) {
        d.x += 25.0 + i as f64;
        d.y -= 30.0;
    }

    let plain = estimate_homography_dlt(&src, &dst)?;
    let (robust, inliers) = robust_homography(&src, &dst, &RobustFitConfig::default())?;
    println!("plain DLT  max |ΔH| = {:.3}", plain.max_abs_diff(&truth));
    println!(
        "robust fit max |ΔH| = {:.2e}, inliers {inliers:?}",
        robust.max_abs_diff(&truth)
    );

    let img = Image::from_rgb_fn(64, 64, |x, y| {
        if (x / 8 + y / 8) % 2 == 0 {
            [0.9, 0.8, 0.2]
        } else {
            [0.1, 0.2, 0.6]
        }
    })?;
    let warped = warp_image(&img, &robust, 96, 96, 0.0)?;
    let covered = warped.data().iter().filter(|&&v| v > 0.0).count() / 3;
    println!(
        "warped checkerboard covers {covered} of {} output pixels",
        96 * 96
    );
    Ok(())
}
