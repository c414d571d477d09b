//! Binary PPM (P6) frames from the colour channels of an observation.

use mrav_core::GridImage;

pub fn encode(img: &GridImage, comment: &str) -> Vec<u8> {
    let (h, w, _) = img.shape();
    let comment = comment.replace(['\n', '\r'], " ");
    let mut out = format!("P6\n# {comment}\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            for &v in &img.pixel(r, c)[..3] {
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    out
}
