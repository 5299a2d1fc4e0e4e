use super::*;
use crate::embednet::build_gallery;
use crate::geom::apply_homography;
use crate::imgcore::hsv_to_rgb;
use crate::synthface::{render_face, IdentityParams, Pose, Scene, FRAME_SIZE};
use proptest::prelude::*;

fn constant(rgb: [f64; 3]) -> Image {
    Image::from_rgb_fn(8, 8, |_, _| rgb).unwrap()
}

#[test]
fn skin_bounds_examples() {
    let b = SkinBounds::default();
    let all = |m: &Mask, v: f64| m.data().iter().all(|&x| x == v);
    assert!(all(&skin_segment(&constant([0.0; 3]), &b).unwrap(), 0.0));
    assert!(all(&skin_segment(&constant([0.5; 3]), &b).unwrap(), 0.0));
    // (15°·2 = 30°, 120/255, 200/255) in 8-bit terms.
    let skin = hsv_to_rgb(30.0, 120.0 / 255.0, 200.0 / 255.0);
    assert!(all(&skin_segment(&constant(skin), &b).unwrap(), 1.0));
    // Just below the value floor and the saturation floor.
    assert!(all(
        &skin_segment(&constant(hsv_to_rgb(30.0, 0.5, 19.0 / 255.0)), &b).unwrap(),
        0.0
    ));
    assert!(all(
        &skin_segment(&constant(hsv_to_rgb(30.0, 9.0 / 255.0, 0.8)), &b).unwrap(),
        0.0
    ));
    assert!(SkinBounds {
        lower: [10.0, 0.0, 0.0],
        upper: [5.0, 255.0, 255.0]
    }
    .validate()
    .is_err());
    assert!(skin_segment(&Image::filled(4, 4, 1, 0.5).unwrap(), &b).is_err());
}

#[test]
fn opening_removes_specks_and_keeps_blobs() {
    let m = Image::mask_from_fn(20, 20, |x, y| {
        let blob = (5..15).contains(&x) && (5..15).contains(&y);
        if blob || (x, y) == (1, 18) {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    let c = clean_mask(&m, 1).unwrap();
    assert_eq!(c.get(1, 18, 0), 0.0);
    for y in 0..20 {
        for x in 0..20 {
            let inside = (5..15).contains(&x) && (5..15).contains(&y);
            assert_eq!(c.get(x, y, 0), if inside { 1.0 } else { 0.0 }, "({x},{y})");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn opening_is_idempotent(bits in proptest::collection::vec(any::<bool>(), 12 * 10), r in 0usize..3) {
        let m = Image::new(12, 10, 1, bits.iter().map(|&b| b as u8 as f64).collect()).unwrap();
        let once = clean_mask(&m, r).unwrap();
        prop_assert_eq!(clean_mask(&once, r).unwrap(), once);
    }
}

fn template() -> [Point2; 5] {
    [
        Point2::new(20.0, 27.0),
        Point2::new(43.0, 27.0),
        Point2::new(32.0, 36.0),
        Point2::new(24.0, 43.0),
        Point2::new(40.0, 43.0),
    ]
}

#[test]
fn translated_template_gives_translation() {
    let c = template();
    let o = c.map(|p| Point2::new(p.x + 7.5, p.y - 3.0));
    let h = plan_alignment(&o, &c, &RobustFitConfig::default()).unwrap();
    assert!(h.max_abs_diff(&Homography::translation(7.5, -3.0)) < 1e-9);
}

#[test]
fn collinear_landmarks_fail_alignment() {
    let o = [0.0, 1.0, 2.0, 3.0, 4.0].map(|t| Point2::new(10.0 + 5.0 * t, 20.0 + 2.0 * t));
    assert!(matches!(
        plan_alignment(&o, &template(), &RobustFitConfig::default()),
        Err(Error::Alignment(_))
    ));
}

#[test]
fn blend_mask_trivial_cases() {
    let k = gaussian_weight_mask(BlendKernelSpec::new(16, 16).unwrap());
    let ones = Image::filled(16, 16, 1, 1.0).unwrap();
    let zeros = Image::filled(16, 16, 1, 0.0).unwrap();
    let id = Homography::identity();
    assert_eq!(compose_blend_mask(&k, &ones, &id, 16, 16).unwrap(), k);
    let z = compose_blend_mask(&k, &zeros, &Homography::translation(3.0, 2.0), 30, 30).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.0));
    assert!(compose_blend_mask(&k, &Image::filled(8, 8, 1, 1.0).unwrap(), &id, 16, 16).is_err());
}

#[test]
fn product_commutes_with_warp_in_the_interior() {
    let n = 64;
    let k = gaussian_weight_mask(BlendKernelSpec::new(n, n).unwrap());
    let b = Image::mask_from_fn(n, n, |x, y| {
        if (x as i64 - 30).pow(2) + (y as i64 - 34).pow(2) < 300 {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    let h = Homography::new([[1.1, 0.05, 12.0], [-0.04, 1.05, 9.0], [0.0, 0.0, 1.0]]).unwrap();
    let joint = compose_blend_mask(&k, &b, &h, 96, 96).unwrap();
    let wk = warp_image(&k, &h, 96, 96, 0.0).unwrap();
    let wb = warp_image(&b, &h, 96, 96, 0.0).unwrap();
    let inv = h.inverse().unwrap();
    let mut checked = 0;
    for y in 0..96 {
        for x in 0..96 {
            // Away from the binary edge: all four bilinear taps agree.
            let p = apply_homography(Point2::new(x as f64, y as f64), &inv).unwrap();
            let (fx, fy) = (p.x.floor(), p.y.floor());
            if fx < 0.0 || fy < 0.0 || fx + 1.0 >= n as f64 || fy + 1.0 >= n as f64 {
                continue;
            }
            let taps = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
                .map(|(dx, dy)| b.get((fx + dx) as usize, (fy + dy) as usize, 0));
            if taps.iter().any(|&t| t != taps[0]) {
                continue;
            }
            checked += 1;
            let d = (joint.get(x, y, 0) - wk.get(x, y, 0) * wb.get(x, y, 0)).abs();
            assert!(d <= 0.02, "({x},{y}) differs by {d}");
        }
    }
    assert!(checked > 2000);
}

#[test]
fn annotation_validation() {
    let s = face(0, Pose::Frontal);
    let ok = annotation(&s, None);
    assert!(ok.validate(FRAME_SIZE, FRAME_SIZE).is_ok());
    let mut bad = ok.clone();
    bad.context = BoundingBox::new(FRAME_SIZE as i64 - 50, 50, 60, 60);
    assert!(bad.validate(FRAME_SIZE, FRAME_SIZE).is_err());
    let mut bad = ok.clone();
    bad.landmarks[2] = Point2::new(-1.0, 3.0);
    assert!(bad.validate(FRAME_SIZE, FRAME_SIZE).is_err());
}

#[test]
fn sidecar_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let frame = dir.path().join("f001.ppm");
    let p = sidecar_path(&frame);
    assert!(p.to_string_lossy().ends_with("f001.ppm.faces"));
    let s = face(2, Pose::Profile);
    let faces = vec![
        annotation(&s, Some(7)),
        annotation(&face(1, Pose::Frontal), None),
    ];
    write_sidecar(&p, &faces).unwrap();
    assert_eq!(read_sidecar(&p).unwrap(), faces);
    write_sidecar(&p, &[]).unwrap();
    assert!(read_sidecar(&p).unwrap().is_empty());
    std::fs::write(
        &p,
        "# header\n\n1,2,3,4,5,6,7,8,1,1,2,2,3,3,4,4,5,5\n1,2,3\n",
    )
    .unwrap();
    match read_sidecar(&p) {
        Err(Error::Annotation { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected annotation error, got {other:?}"),
    }
}

// ---- pipeline with small untrained models ----

fn face(id: usize, pose: Pose) -> crate::synthface::FaceSample {
    render_face(
        &IdentityParams::from_seed(3, id),
        id,
        Expression::Neutral,
        pose,
        1.0,
        Scene::Street,
    )
    .unwrap()
}

fn annotation(s: &crate::synthface::FaceSample, track: Option<u64>) -> FaceAnnotation {
    FaceAnnotation {
        tight: s.tight,
        context: s.context,
        landmarks: s.landmarks,
        track,
    }
}

struct Kit {
    encoder: EncoderModel,
    featdb: FeatDb,
    generator: GeneratorModel,
}

impl Kit {
    fn models(&self) -> Models<'_> {
        Models {
            encoder: &self.encoder,
            featdb: &self.featdb,
            generator: &self.generator,
        }
    }
}

fn kit() -> Kit {
    let encoder = EncoderModel::new(4, 1).unwrap();
    let crops: Vec<Image> = (0..4)
        .map(|i| {
            crop(
                &face(10 + i, Pose::Frontal).image,
                face(0, Pose::Frontal).context,
            )
            .unwrap()
        })
        .collect();
    let groups: Vec<(String, Vec<&Image>)> = crops
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("g{i}"), vec![c]))
        .collect();
    let featdb = build_gallery(&encoder, &groups).unwrap();
    let mut generator = GeneratorModel::new(4, 4, 2).unwrap();
    let origin = face(0, Pose::Frontal).context;
    let s = 63.0 / (origin.w - 1) as f64;
    generator.set_canonical_landmarks(
        face(0, Pose::Frontal)
            .landmarks
            .map(|p| Point2::new((p.x - origin.x as f64) * s, (p.y - origin.y as f64) * s)),
    );
    Kit {
        encoder,
        featdb,
        generator,
    }
}

#[test]
fn no_faces_leaves_frame_identical() {
    let k = kit();
    let f = face(0, Pose::Frontal).image;
    assert_eq!(
        deidentify_frame(&f, &[], &k.models(), &PipelineConfig::default()).unwrap(),
        f
    );
}

#[test]
fn face_changes_only_under_the_mask_and_is_deterministic() {
    let k = kit();
    let cfg = PipelineConfig::default();
    for pose in [Pose::Frontal, Pose::Profile] {
        let s = face(1, pose);
        let a = annotation(&s, None);
        let (out, o) = deidentify_face_detailed(&s.image, &a, &k.models(), &cfg).unwrap();
        let mask = o.mask.unwrap();
        assert!(mask.data().iter().all(|&m| (0.0..=1.0).contains(&m)));
        let mut changed = 0;
        for (i, &m) in mask.data().iter().enumerate() {
            let (a, b) = (
                &s.image.data()[3 * i..3 * i + 3],
                &out.data()[3 * i..3 * i + 3],
            );
            if m == 0.0 {
                assert_eq!(a, b);
            } else if a != b {
                changed += 1;
            }
        }
        assert!(changed > 500);
        assert_eq!(
            deidentify_face(&s.image, &a, &k.models(), &cfg).unwrap(),
            out
        );
    }
}

#[test]
fn unalignable_face_is_skipped_untouched() {
    let k = kit();
    let s = face(1, Pose::Frontal);
    let mut a = annotation(&s, None);
    a.landmarks = [0.0, 1.0, 2.0, 3.0, 4.0].map(|t| Point2::new(30.0 + 5.0 * t, 40.0 + 2.0 * t));
    let (out, o) =
        deidentify_face_detailed(&s.image, &a, &k.models(), &PipelineConfig::default()).unwrap();
    assert!(o.mask.is_none());
    assert_eq!(out, s.image);
}

#[test]
fn k_above_gallery_size_is_rejected() {
    let k = kit();
    let s = face(1, Pose::Frontal);
    let cfg = PipelineConfig {
        k: 5,
        ..Default::default()
    };
    assert!(deidentify_face(&s.image, &annotation(&s, None), &k.models(), &cfg).is_err());
}

fn sequence() -> Vec<(Image, FrameAnnotation)> {
    (0..6)
        .map(|i| {
            let illum = 0.7 + 0.12 * i as f64;
            let s = render_face(
                &IdentityParams::from_seed(3, 1),
                1,
                Expression::ALL[i % 4],
                Pose::Frontal,
                illum,
                Scene::Street,
            )
            .unwrap();
            let a = annotation(&s, Some(42));
            (s.image, vec![a])
        })
        .collect()
}

#[test]
fn lock_pins_the_first_selection_per_track() {
    let k = kit();
    let seq = sequence();
    let cfg = PipelineConfig {
        identity_lock: true,
        ..Default::default()
    };
    let out = deidentify_sequence(&seq, &k.models(), &cfg).unwrap();
    assert_eq!(out.frames.len(), seq.len());
    let sel = out.selections();
    assert!(sel.iter().all(|f| f[0] == sel[0][0]));
    for (o, (i, _)) in out.frames.iter().zip(&seq) {
        assert!(o.same_dims(i));
    }
    let free = deidentify_sequence(&seq, &k.models(), &PipelineConfig::default()).unwrap();
    assert_eq!(free.frames[0], out.frames[0]);
}

#[test]
fn bad_face_does_not_abort_a_sequence() {
    let k = kit();
    let mut seq = sequence();
    seq[2].1[0].context = BoundingBox::new(FRAME_SIZE as i64 - 20, 0, 40, 40);
    let out = deidentify_sequence(&seq, &k.models(), &PipelineConfig::default()).unwrap();
    assert!(out.outcomes[2][0].is_none());
    assert_eq!(out.frames[2], seq[2].0);
    assert!(out.outcomes[3][0].is_some());
}
