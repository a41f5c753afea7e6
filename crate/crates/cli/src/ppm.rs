use maskcal::superpixel::SuperpixelMap;
use maskcal::types::FeatureMap;

/// Binary PPM (P6) of the first three image channels with superpixel
/// boundaries painted red.
pub fn overlay(image: &FeatureMap, sp: &SuperpixelMap) -> Vec<u8> {
    let (h, w) = image.dims();
    let boundary = sp.boundary_mask();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for idx in 0..h * w {
        if boundary.get_index(idx) {
            out.extend_from_slice(&[255, 0, 0]);
            continue;
        }
        for ch in 0..3 {
            let v = image.at(ch.min(image.channels() - 1), idx);
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}
