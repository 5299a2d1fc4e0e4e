//! Image primitives: HSV skin segmentation, morphology, the Gaussian blend
//! kernel, alpha blending and the naive pixelate/blur obfuscations.

use facedeid::deident::{clean_mask, skin_segment, SkinBounds};
use facedeid::imgcore::{
    alpha_blend, gaussian_blur, gaussian_weight_mask, io, pixelate, resize_bilinear,
    BlendKernelSpec, Image,
};
use facedeid::synthface::{render_face, Expression, IdentityParams, Pose, Scene};

fn main() -> facedeid::Result<()> {
    let out = std::env::temp_dir().join("facedeid-image-ops");
    std::fs::create_dir_all(&out).expect("output directory is writable");

    let face = render_face(
        &IdentityParams::from_seed(7, 0),
        0,
        Expression::Happy,
        Pose::Frontal,
        1.0,
        Scene::Street,
    )?;
    let frame = &face.image;
    io::save(frame, out.join("frame.ppm"))?;

    let skin = skin_segment(frame, &SkinBounds::default())?;
    let cleaned = clean_mask(&skin, 1)?;
    let frac =
        |m: &Image| m.data().iter().filter(|&&v| v > 0.5).count() as f64 / m.data().len() as f64;
    println!(
        "pixels in the skin range: {:.1}% raw, {:.1}% after opening",
        100.0 * frac(&skin),
        100.0 * frac(&cleaned)
    );
    io::save(&cleaned, out.join("skin.pgm"))?;

    // The kernel is built for a generated image and falls to e^-4.5 at the
    // edge midpoints.
    let kernel = gaussian_weight_mask(BlendKernelSpec::new(64, 64)?);
    println!(
        "kernel centre {:.3}, edge {:.4}, corner {:.2e}",
        kernel.get(32, 32, 0),
        kernel.get(0, 32, 0),
        kernel.get(0, 0, 0)
    );
    let (w, h) = (frame.width(), frame.height());
    let grey = Image::filled(w, h, 3, 0.5)?;
    let big = resize_bilinear(&kernel, w, h)?;
    io::save(&alpha_blend(frame, &grey, &big)?, out.join("blended.ppm"))?;

    let block = (face.tight.w as usize).div_ceil(8);
    io::save(&pixelate(frame, block)?, out.join("pixelated.ppm"))?;
    io::save(
        &gaussian_blur(frame, face.tight.w as f64 / 16.0)?,
        out.join("blurred.ppm"),
    )?;
    println!("images written to {}", out.display());
    Ok(())
}
