use super::linalg::{mat3_det, mat3_inverse, mat3_mul, symmetric_eigen, Mat3};
use super::{Homography, Point2};
use crate::error::{Error, Result};

/// Similarity transform that centers `pts` and scales their mean distance
/// from the centroid to `sqrt(2)`.
fn hartley(pts: &[Point2]) -> Result<Mat3> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_d = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_d > 1e-12) || !mean_d.is_finite() {
        return Err(Error::Degenerate("points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_d;
    Ok([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn transform(t: &Mat3, p: &Point2) -> Point2 {
    Point2::new(t[0][0] * p.x + t[0][2], t[1][1] * p.y + t[1][2])
}

/// Homography in Hartley-normalized coordinates plus the two normalizing
/// transforms, so that `H = T_dst^-1 · Hn · T_src`.
pub(crate) fn dlt_normalized(src: &[Point2], dst: &[Point2]) -> Result<(Mat3, Mat3, Mat3)> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source vs {} destination points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 correspondences, got {}",
            src.len()
        )));
    }
    if src
        .iter()
        .chain(dst)
        .any(|p| !p.x.is_finite() || !p.y.is_finite())
    {
        return Err(Error::InvalidArgument("non-finite point".into()));
    }
    let ts = hartley(src)?;
    let td = hartley(dst)?;

    // Normal equations AᵀA of the 2n×9 DLT system.
    let mut ata = [0.0; 81];
    for (p, q) in src.iter().zip(dst) {
        let a = transform(&ts, p);
        let b = transform(&td, q);
        let r1 = [-a.x, -a.y, -1.0, 0.0, 0.0, 0.0, b.x * a.x, b.x * a.y, b.x];
        let r2 = [0.0, 0.0, 0.0, -a.x, -a.y, -1.0, b.y * a.x, b.y * a.y, b.y];
        for r in [r1, r2] {
            for i in 0..9 {
                for j in 0..9 {
                    ata[i * 9 + j] += r[i] * r[j];
                }
            }
        }
    }
    let (vals, vecs) = symmetric_eigen(&ata, 9);
    let top = vals[8].abs().max(f64::MIN_POSITIVE);
    if vals[1] <= 1e-12 * top {
        return Err(Error::Degenerate(
            "rank-deficient correspondence system".into(),
        ));
    }
    let h = &vecs[0];
    let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], h[8]]];
    // Scale-free singularity test on the unit-norm solution.
    if mat3_det(&hn).abs() < 1e-9 {
        return Err(Error::Degenerate(
            "solution is singular (collinear points?)".into(),
        ));
    }
    Ok((hn, ts, td))
}

/// Least-squares homography from ≥4 correspondences using the normalized
/// direct linear transform.
pub fn estimate_homography_dlt(src: &[Point2], dst: &[Point2]) -> Result<Homography> {
    let (hn, ts, td) = dlt_normalized(src, dst)?;
    let td_inv = mat3_inverse(&td, 0.0).ok_or(Error::NotInvertible)?;
    let m = mat3_mul(&td_inv, &mat3_mul(&hn, &ts));
    Homography::new(m).map_err(|e| match e {
        Error::NotInvertible => Error::Degenerate("estimated homography is singular".into()),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::apply_homography;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(40.0, 2.0),
            Point2::new(38.0, 45.0),
            Point2::new(-3.0, 41.0),
            Point2::new(20.0, 18.0),
            Point2::new(11.0, 30.0),
        ]
    }

    fn random_h(rng: &mut ChaCha8Rng) -> Homography {
        Homography::new([
            [
                rng.gen_range(0.8..1.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-10.0..10.0),
            ],
            [
                rng.gen_range(-0.2..0.2),
                rng.gen_range(0.8..1.2),
                rng.gen_range(-10.0..10.0),
            ],
            [rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3), 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn identical_sets_give_identity() {
        let h = estimate_homography_dlt(&grid(), &grid()).unwrap();
        assert!(h.max_abs_diff(&Homography::identity()) < 1e-9);
    }

    #[test]
    fn translation_is_recovered() {
        let dst: Vec<Point2> = grid()
            .iter()
            .map(|p| Point2::new(p.x + 5.0, p.y + 3.0))
            .collect();
        let h = estimate_homography_dlt(&grid(), &dst).unwrap();
        assert!(h.max_abs_diff(&Homography::translation(5.0, 3.0)) < 1e-9);
    }

    #[test]
    fn exact_four_point_reprojection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let h = random_h(&mut rng);
            let src: Vec<Point2> = (0..4)
                .map(|i| {
                    let (bx, by) = [(0.0, 0.0), (60.0, 0.0), (60.0, 60.0), (0.0, 60.0)][i];
                    Point2::new(bx + rng.gen_range(-8.0..8.0), by + rng.gen_range(-8.0..8.0))
                })
                .collect();
            let dst: Vec<Point2> = src
                .iter()
                .map(|p| apply_homography(*p, &h).unwrap())
                .collect();
            let est = estimate_homography_dlt(&src, &dst).unwrap();
            for (p, q) in src.iter().zip(&dst) {
                assert!(apply_homography(*p, &est).unwrap().dist(q) <= 1e-6);
            }
        }
    }

    #[test]
    fn scaling_inputs_leaves_normalized_solution_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_h(&mut rng);
        let src = grid();
        let dst: Vec<Point2> = src
            .iter()
            .map(|p| apply_homography(*p, &h).unwrap())
            .collect();
        let (hn, _, _) = dlt_normalized(&src, &dst).unwrap();
        for factor in [0.01, 0.5, 3.0, 250.0] {
            let s: Vec<Point2> = src
                .iter()
                .map(|p| Point2::new(p.x * factor, p.y * factor))
                .collect();
            let d: Vec<Point2> = dst
                .iter()
                .map(|p| Point2::new(p.x * factor, p.y * factor))
                .collect();
            let (hn2, _, _) = dlt_normalized(&s, &d).unwrap();
            // Eigenvectors carry an arbitrary sign.
            let sign = if (hn[2][2] > 0.0) == (hn2[2][2] > 0.0) {
                1.0
            } else {
                -1.0
            };
            for i in 0..3 {
                for j in 0..3 {
                    assert!((hn[i][j] - sign * hn2[i][j]).abs() < 1e-6);
                }
            }
            // And the denormalized estimate is the conjugated transform.
            let hs = estimate_homography_dlt(&s, &d).unwrap();
            let p = Point2::new(13.0 * factor, 7.0 * factor);
            let q = apply_homography(Point2::new(13.0, 7.0), &h).unwrap();
            let r = apply_homography(p, &hs).unwrap();
            assert!((r.x / factor - q.x).abs() < 1e-6 && (r.y / factor - q.y).abs() < 1e-6);
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let src: Vec<Point2> = (0..5)
            .map(|i| Point2::new(i as f64 * 3.0, i as f64 * 2.0))
            .collect();
        let dst: Vec<Point2> = src.iter().map(|p| Point2::new(p.x + 1.0, p.y)).collect();
        assert!(matches!(
            estimate_homography_dlt(&src, &dst),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let g = grid();
        assert!(estimate_homography_dlt(&g[..3], &g[..3]).is_err());
    }
}
