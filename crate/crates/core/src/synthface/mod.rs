//! Procedural cartoon faces with exact landmarks.
//!
//! Every identity is a small set of bounded parameters drawn from a seeded
//! generator. Most of the identity signal lives inside the face (skin tone,
//! lip and iris colour, brow weight, nose width). Hair colour, hairline and
//! clothing colour come from small shared palettes, so they are weaker cues,
//! and mostly sit outside the tight box.

mod corpus;
mod manifest;

pub use corpus::{generate_corpus, Corpus, CorpusSpec};
pub use manifest::{load_corpus, read_manifest, write_corpus, write_manifest, ManifestRecord};

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::imgcore::{hsv_to_rgb, BoundingBox, Image};

pub const FRAME_SIZE: usize = 176;
/// Face centre in canonical (frontal) coordinates.
const CX: f64 = 88.0;
const CY: f64 = 90.0;
const TIGHT: i64 = 44;
/// Horizontal offset of the profile pose.
const PROFILE_SHIFT: f64 = 4.0;
const SUPERSAMPLE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expression {
    Neutral,
    Happy,
    Angry,
    Surprised,
}

impl Expression {
    pub const ALL: [Expression; 4] = [
        Expression::Neutral,
        Expression::Happy,
        Expression::Angry,
        Expression::Surprised,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Expression::Neutral => "neutral",
            Expression::Happy => "happy",
            Expression::Angry => "angry",
            Expression::Surprised => "surprised",
        }
    }

    /// Brow rotation in degrees; positive lowers the inner ends.
    fn brow_angle(self) -> f64 {
        match self {
            Expression::Neutral => 0.0,
            Expression::Happy => -4.0,
            Expression::Angry => 14.0,
            Expression::Surprised => -12.0,
        }
    }

    /// Mouth bend; positive pulls the middle down (a smile).
    fn mouth_curvature(self) -> f64 {
        match self {
            Expression::Neutral => 0.0,
            Expression::Happy => 1.0,
            Expression::Angry => -0.8,
            Expression::Surprised => -0.3,
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expression::ALL
            .into_iter()
            .find(|e| e.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown expression {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pose {
    Frontal,
    Profile,
}

impl Pose {
    pub fn label(self) -> &'static str {
        match self {
            Pose::Frontal => "frontal",
            Pose::Profile => "profile",
        }
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frontal" => Ok(Pose::Frontal),
            "profile" => Ok(Pose::Profile),
            _ => Err(Error::InvalidArgument(format!("unknown pose {s:?}"))),
        }
    }
}

/// Plain studio backdrop with neutral clothing (gallery) or a street scene
/// with the identity's clothing colour (evaluation footage).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scene {
    Studio,
    Street,
}

/// Per-identity appearance. Hues in degrees, other colour terms in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub skin_hue: f64,
    pub skin_sat: f64,
    pub skin_val: f64,
    /// Horizontal face semi-axis scale.
    pub face_aspect: f64,
    pub eye_spacing: f64,
    pub eye_size: f64,
    pub iris_hue: f64,
    pub brow_angle: f64,
    pub brow_thickness: f64,
    pub nose_width: f64,
    pub mouth_width: f64,
    pub lip_hue: f64,
    pub lip_sat: f64,
    pub hair_hue: f64,
    pub hair_val: f64,
    /// 0 flat, 1 widow's peak, 2 side part, 3 receding.
    pub hairline: u8,
    pub clothing_hue: f64,
}

/// Black, dark brown, brown, auburn, blond as (hue, value); darker shades
/// are more common.
const HAIR_PALETTE: [(f64, f64); 5] = [
    (22.0, 0.10),
    (26.0, 0.24),
    (30.0, 0.38),
    (14.0, 0.40),
    (42.0, 0.62),
];

fn hair_weights() -> WeightedIndex<u32> {
    WeightedIndex::new([6, 3, 1, 1, 1]).expect("static weights")
}

/// Brown, amber, hazel, green, blue, grey-blue iris hues.
const IRIS_PALETTE: [f64; 6] = [25.0, 38.0, 60.0, 120.0, 205.0, 220.0];

/// Declared ranges, in field order of [`IdentityParams`].
pub const PARAM_RANGES: [(&str, f64, f64); 17] = [
    ("skin_hue", 16.0, 28.0),
    ("skin_sat", 0.33, 0.47),
    ("skin_val", 0.65, 0.83),
    ("face_aspect", 0.86, 1.14),
    ("eye_spacing", 13.0, 17.5),
    ("eye_size", 0.8, 1.2),
    ("iris_hue", 22.0, 223.0),
    ("brow_angle", -5.0, 5.0),
    ("brow_thickness", 1.0, 2.6),
    ("nose_width", 1.6, 4.4),
    ("mouth_width", 8.5, 15.0),
    ("lip_hue", 330.0, 375.0),
    ("lip_sat", 0.35, 0.75),
    ("hair_hue", 10.0, 46.0),
    ("hair_val", 0.08, 0.66),
    ("hairline", 0.0, 3.0),
    ("clothing_hue", 0.0, 360.0),
];

impl IdentityParams {
    /// Deterministic function of `(seed, index)`.
    pub fn from_seed(seed: u64, index: usize) -> Self {
        let mix = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
            ^ 0x1D3A_5EED;
        let mut rng = ChaCha8Rng::seed_from_u64(mix);
        let mut u = |k: usize| {
            let (_, lo, hi) = PARAM_RANGES[k];
            rng.gen_range(lo..hi)
        };
        let mut p = IdentityParams {
            skin_hue: u(0),
            skin_sat: u(1),
            skin_val: u(2),
            face_aspect: u(3),
            eye_spacing: u(4),
            eye_size: u(5),
            iris_hue: 0.0,
            brow_angle: u(7),
            brow_thickness: u(8),
            nose_width: u(9),
            mouth_width: u(10),
            lip_hue: u(11),
            lip_sat: u(12),
            hair_hue: 0.0,
            hair_val: 0.0,
            hairline: (u(15).floor() as u8).min(3),
            clothing_hue: 0.0,
        };
        // Coarse, shared categories: many identities have the same hair
        // colour or wear the same clothing colour.
        let (hh, hv) = HAIR_PALETTE[hair_weights().sample(&mut rng)];
        p.hair_hue = hh + rng.gen_range(-2.0..2.0);
        p.hair_val = hv + rng.gen_range(-0.02..0.02);
        p.iris_hue = IRIS_PALETTE[rng.gen_range(0..IRIS_PALETTE.len())] + rng.gen_range(-3.0..3.0);
        p.clothing_hue = 45.0 * rng.gen_range(0..8) as f64;
        p
    }

    fn values(&self) -> [f64; 17] {
        [
            self.skin_hue,
            self.skin_sat,
            self.skin_val,
            self.face_aspect,
            self.eye_spacing,
            self.eye_size,
            self.iris_hue,
            self.brow_angle,
            self.brow_thickness,
            self.nose_width,
            self.mouth_width,
            self.lip_hue,
            self.lip_sat,
            self.hair_hue,
            self.hair_val,
            self.hairline as f64,
            self.clothing_hue,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for ((name, lo, hi), v) in PARAM_RANGES.iter().zip(self.values()) {
            if !(v >= *lo && v <= *hi) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceSample {
    pub image: Image,
    /// Left eye, right eye, nose tip, left and right mouth corner.
    pub landmarks: [Point2; 5],
    pub tight: BoundingBox,
    pub context: BoundingBox,
    pub identity: usize,
    pub expression: Expression,
    pub pose: Pose,
    pub illumination: f64,
}

fn skin_rgb(p: &IdentityParams) -> [f64; 3] {
    hsv_to_rgb(p.skin_hue, p.skin_sat, p.skin_val)
}

fn scale(c: [f64; 3], k: f64) -> [f64; 3] {
    [c[0] * k, c[1] * k, c[2] * k]
}

fn ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)
}

fn segment_dist(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((px - a.0) * dx + (py - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((px - a.0 - t * dx).powi(2) + (py - a.1 - t * dy).powi(2)).sqrt()
}

struct Layout {
    fa: f64,
    fb: f64,
    eyes: [(f64, f64); 2],
    nose: (f64, f64),
    mouth: [(f64, f64); 2],
}

fn layout(p: &IdentityParams) -> Layout {
    let half = p.eye_spacing / 2.0;
    let mw = p.mouth_width / 2.0;
    Layout {
        fa: 16.0 * p.face_aspect,
        fb: 20.0,
        eyes: [(CX - half, CY - 4.0), (CX + half, CY - 4.0)],
        nose: (CX, CY + 4.0),
        mouth: [(CX - mw, CY + 11.0), (CX + mw, CY + 11.0)],
    }
}

fn hairline_y(p: &IdentityParams, x: f64) -> f64 {
    let base = CY - 13.0;
    match p.hairline {
        0 => base,
        1 => base + 3.5 * (1.0 - (x - CX).abs() / 6.0).max(0.0),
        2 => base + 0.25 * (x - CX),
        _ => base - 3.5,
    }
}

/// Colour at canonical coordinates, before illumination.
fn shade(
    p: &IdentityParams,
    l: &Layout,
    expr: Expression,
    scene: Scene,
    x: f64,
    y: f64,
) -> [f64; 3] {
    let skin = skin_rgb(p);
    let hair = hsv_to_rgb(p.hair_hue, 0.55, p.hair_val);
    let (bg, cloth) = match scene {
        Scene::Studio => ([0.55; 3], [0.2; 3]),
        Scene::Street => (
            hsv_to_rgb(210.0, 0.08, 0.62),
            hsv_to_rgb(p.clothing_hue, 0.35, 0.5),
        ),
    };

    let face = ellipse(x, y, CX, CY, l.fa, l.fb);
    if face > 1.0 {
        if ellipse(x, y, CX, CY - 3.0, l.fa + 4.5, l.fb + 5.0) <= 1.0 && y < CY + 6.0 {
            return hair;
        }
        let shoulders = CY + 24.0 + 0.02 * (x - CX).powi(2);
        if y > shoulders {
            return cloth;
        }
        if (x - CX).abs() < 8.0 && y > CY + 10.0 {
            return scale(skin, 0.85);
        }
        return bg;
    }
    if y < hairline_y(p, x) {
        return hair;
    }

    // Brows: inner ends rotate down for positive angles.
    let angle = (p.brow_angle + expr.brow_angle()).to_radians();
    for (side, &(ex, ey)) in [-1.0, 1.0].iter().zip(&l.eyes) {
        let (bx, by) = (ex, ey - 6.0);
        let (ux, uy) = (-side * angle.cos() * 4.0, angle.sin() * 4.0);
        if segment_dist(x, y, (bx - ux, by - uy), (bx + ux, by + uy)) < p.brow_thickness / 2.0 {
            return scale(hair, 0.8);
        }
    }

    for &(ex, ey) in &l.eyes {
        let r2 = (x - ex).powi(2) + (y - ey).powi(2);
        if r2 < 0.9f64.powi(2) {
            return [0.04; 3];
        }
        if r2 < (1.9 * p.eye_size).powi(2) {
            return hsv_to_rgb(p.iris_hue, 0.6, 0.55);
        }
        if ellipse(x, y, ex, ey, 3.6 * p.eye_size, 2.3 * p.eye_size) <= 1.0 {
            return hsv_to_rgb(30.0, 0.1, 0.93);
        }
    }

    // Mouth: a bent band between the corners.
    let mw = (l.mouth[1].0 - l.mouth[0].0) / 2.0;
    let t = (x - CX) / mw;
    if t.abs() <= 1.0 {
        let mid = l.mouth[0].1 + expr.mouth_curvature() * 3.5 * (1.0 - t * t);
        let half = 0.6 + 1.2 * (1.0 - t * t);
        if (y - mid).abs() < half {
            return hsv_to_rgb(p.lip_hue, p.lip_sat, 0.62);
        }
    }

    let (nx, ny) = l.nose;
    for side in [-1.0, 1.0] {
        if (x - nx - side * p.nose_width * 0.6).powi(2) + (y - ny).powi(2) < 0.8 {
            return scale(skin, 0.5);
        }
    }
    if ellipse(x, y, nx, ny - 3.0, p.nose_width, 4.5) <= 1.0 {
        return scale(skin, 0.82);
    }
    scale(skin, 1.0 - 0.12 * face)
}

/// Canonical → image coordinates for a pose.
fn pose_forward(pose: Pose, x: f64, y: f64) -> (f64, f64) {
    match pose {
        Pose::Frontal => (x, y),
        Pose::Profile => (CX + 0.82 * (x - CX) + 0.12 * (y - CY) + PROFILE_SHIFT, y),
    }
}

fn pose_inverse(pose: Pose, x: f64, y: f64) -> (f64, f64) {
    match pose {
        Pose::Frontal => (x, y),
        Pose::Profile => (CX + (x - CX - 0.12 * (y - CY) - PROFILE_SHIFT) / 0.82, y),
    }
}

pub fn render_face(
    params: &IdentityParams,
    identity: usize,
    expression: Expression,
    pose: Pose,
    illumination: f64,
    scene: Scene,
) -> Result<FaceSample> {
    params.validate()?;
    if !(0.5..=1.5).contains(&illumination) {
        return Err(Error::InvalidArgument(format!(
            "illumination {illumination} outside [0.5, 1.5]"
        )));
    }
    let l = layout(params);
    let n = FRAME_SIZE;
    let ss = SUPERSAMPLE as f64;
    let mut data = Vec::with_capacity(n * n * 3);
    for py in 0..n {
        for px in 0..n {
            let mut acc = [0.0; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = px as f64 + (sx as f64 + 0.5) / ss - 0.5;
                    let y = py as f64 + (sy as f64 + 0.5) / ss - 0.5;
                    let (cx, cy) = pose_inverse(pose, x, y);
                    let c = shade(params, &l, expression, scene, cx, cy);
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            for a in acc {
                data.push(a / (ss * ss) * illumination);
            }
        }
    }
    let image = Image::from_clamped(n, n, 3, data)?;
    let pts = [l.eyes[0], l.eyes[1], l.nose, l.mouth[0], l.mouth[1]];
    let landmarks = pts.map(|(x, y)| {
        let (u, v) = pose_forward(pose, x, y);
        Point2::new(u, v)
    });
    let shift = if pose == Pose::Profile {
        PROFILE_SHIFT as i64
    } else {
        0
    };
    let tight = BoundingBox::new(
        CX as i64 - TIGHT / 2 + shift,
        CY as i64 - TIGHT / 2,
        TIGHT,
        TIGHT,
    );
    Ok(FaceSample {
        image,
        landmarks,
        tight,
        context: tight.grow(0.25),
        identity,
        expression,
        pose,
        illumination,
    })
}
