//! Binary PGM/PPM output with ON drawn green and OFF drawn red.

use super::ReconFeature;

fn level(v: f64, max: f64) -> u8 {
    if max <= 0.0 {
        return 0;
    }
    (255.0 * (v / max).clamp(0.0, 1.0)).round() as u8
}

/// Grayscale `P5` image of a row-major plane, scaled so `max` maps to 255.
/// Negative values render black.
pub fn pgm(plane: &[f64], width: usize, height: usize, max: f64) -> Vec<u8> {
    assert_eq!(plane.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(plane.iter().map(|&v| level(v, max)));
    out
}

fn ppm_header(width: usize, height: usize) -> Vec<u8> {
    format!("P6\n{width} {height}\n255\n").into_bytes()
}

/// Pixel of `f` at `(r, c)`, normalized to the feature's largest magnitude.
fn rgb(f: &ReconFeature, max: f64, r: usize, c: usize) -> [u8; 3] {
    let i = r * f.size + c;
    [level(f.off[i], max), level(f.on[i], max), 0]
}

/// Color `P6` image of one feature.
pub fn feature_ppm(f: &ReconFeature) -> Vec<u8> {
    let max = f.max_abs();
    let mut out = ppm_header(f.size, f.size);
    for r in 0..f.size {
        for c in 0..f.size {
            out.extend(rgb(f, max, r, c));
        }
    }
    out
}

/// Grid of features, `cols` per row, separated by `gap` black pixels. Each
/// feature is normalized on its own. All features must share a size.
pub fn montage_ppm(features: &[ReconFeature], cols: usize, gap: usize) -> Vec<u8> {
    let cols = cols.max(1);
    let size = features.first().map_or(0, |f| f.size);
    assert!(features.iter().all(|f| f.size == size), "montage features differ in size");
    let rows = features.len().div_ceil(cols);
    let width = cols * size + cols.saturating_sub(1) * gap;
    let height = rows * size + rows.saturating_sub(1) * gap;
    let mut pixels = vec![0u8; width * height * 3];
    for (n, f) in features.iter().enumerate() {
        let (gr, gc) = (n / cols, n % cols);
        let (top, left) = (gr * (size + gap), gc * (size + gap));
        let max = f.max_abs();
        for r in 0..size {
            for c in 0..size {
                let at = ((top + r) * width + left + c) * 3;
                pixels[at..at + 3].copy_from_slice(&rgb(f, max, r, c));
            }
        }
    }
    let mut out = ppm_header(width, height);
    out.extend(pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(on: Vec<f64>, off: Vec<f64>) -> ReconFeature {
        ReconFeature { source_map: 0, size: 2, on, off }
    }

    #[test]
    fn pgm_scales_to_max() {
        let img = pgm(&[0.0, 0.5, 1.0, -1.0], 2, 2, 1.0);
        assert!(img.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&img[img.len() - 4..], &[0, 128, 255, 0]);
    }

    #[test]
    fn ppm_puts_on_in_green_and_off_in_red() {
        let f = feature(vec![2.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]);
        let img = feature_ppm(&f);
        let header = b"P6\n2 2\n255\n".len();
        assert_eq!(&img[header..header + 6], &[0, 255, 0, 128, 0, 0]);
    }

    #[test]
    fn montage_lays_out_grid() {
        let fs = vec![feature(vec![1.0; 4], vec![0.0; 4]); 3];
        let img = montage_ppm(&fs, 2, 1);
        assert!(img.starts_with(b"P6\n5 5\n255\n"));
        assert_eq!(img.len(), b"P6\n5 5\n255\n".len() + 5 * 5 * 3);
    }

    #[test]
    fn zero_feature_renders_black() {
        let img = feature_ppm(&feature(vec![0.0; 4], vec![0.0; 4]));
        assert!(img[b"P6\n2 2\n255\n".len()..].iter().all(|&b| b == 0));
    }
}
