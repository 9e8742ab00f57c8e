//! Difference-of-Gaussians contrast filtering.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DOG_RADIUS: usize = 3;
pub const DOG_SIZE: usize = 2 * DOG_RADIUS + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn channel(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }
}

/// Row-major grey-scale image.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || pixels.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} pixels for a {rows}x{cols} image",
                pixels.len()
            )));
        }
        Ok(GrayImage { rows, cols, pixels })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        GrayImage {
            rows,
            cols,
            pixels: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.pixels[u * self.cols + v]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.pixels[u * self.cols + v] = value;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DogKernel {
    /// `values[i + 3][j + 3]` holds K(i, j) for -3 <= i, j <= 3.
    pub values: [[f64; DOG_SIZE]; DOG_SIZE],
    pub sigma_center: f64,
    pub sigma_surround: f64,
    pub polarity: Polarity,
}

impl DogKernel {
    pub fn at(&self, i: isize, j: isize) -> f64 {
        let r = DOG_RADIUS as isize;
        if i.abs() > r || j.abs() > r {
            return 0.0;
        }
        self.values[(i + r) as usize][(j + r) as usize]
    }
}

/// Builds the 7x7 kernel `G(sigma_center) - G(sigma_surround)`.
///
/// A narrow centre (`sigma_center < sigma_surround`) gives the ON kernel;
/// swapping the two sigmas negates it.
pub fn make_dog_kernel(sigma_center: f64, sigma_surround: f64) -> Result<DogKernel> {
    if !(sigma_center > 0.0 && sigma_surround > 0.0)
        || !sigma_center.is_finite()
        || !sigma_surround.is_finite()
    {
        return Err(Error::param(format!(
            "DoG sigmas must be positive, got ({sigma_center}, {sigma_surround})"
        )));
    }
    let gauss = |sigma: f64, d2: f64| (-d2 / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma);
    let mut values = [[0.0; DOG_SIZE]; DOG_SIZE];
    let r = DOG_RADIUS as isize;
    for i in -r..=r {
        for j in -r..=r {
            let d2 = (i * i + j * j) as f64;
            values[(i + r) as usize][(j + r) as usize] =
                gauss(sigma_center, d2) - gauss(sigma_surround, d2);
        }
    }
    let polarity = if sigma_center < sigma_surround {
        Polarity::On
    } else {
        Polarity::Off
    };
    Ok(DogKernel {
        values,
        sigma_center,
        sigma_surround,
        polarity,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub polarity: Polarity,
}

impl ContrastMap {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.cols + v]
    }
}

/// Same-mode filtering with zero padding:
/// `out(u, v) = sum_{i,j} image(u + i, v + j) * K(i, j)`.
pub fn dog_filter(image: &GrayImage, kernel: &DogKernel) -> Result<ContrastMap> {
    if image.rows == 0 || image.cols == 0 || image.pixels.len() != image.rows * image.cols {
        return Err(Error::shape("image must be at least 1x1"));
    }
    let (rows, cols) = (image.rows, image.cols);
    let r = DOG_RADIUS;
    let padded_cols = cols + 2 * r;
    let mut padded = vec![0.0; (rows + 2 * r) * padded_cols];
    for u in 0..rows {
        let dst = (u + r) * padded_cols + r;
        padded[dst..dst + cols].copy_from_slice(&image.pixels[u * cols..(u + 1) * cols]);
    }

    let mut values = vec![0.0; rows * cols];
    for (di, krow) in kernel.values.iter().enumerate() {
        for (dj, &k) in krow.iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            for u in 0..rows {
                let src = &padded[(u + di) * padded_cols + dj..][..cols];
                let dst = &mut values[u * cols..(u + 1) * cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s * k;
                }
            }
        }
    }
    Ok(ContrastMap {
        rows,
        cols,
        values,
        polarity: kernel.polarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Direct evaluation with explicit bounds checks.
    fn brute_force(image: &GrayImage, kernel: &DogKernel) -> Vec<f64> {
        let mut out = vec![0.0; image.rows * image.cols];
        for u in 0..image.rows as isize {
            for v in 0..image.cols as isize {
                let mut acc = 0.0;
                for i in -3..=3isize {
                    for j in -3..=3isize {
                        let (y, x) = (u + i, v + j);
                        if y >= 0 && x >= 0 && (y as usize) < image.rows && (x as usize) < image.cols {
                            acc += image.get(y as usize, x as usize) * kernel.at(i, j);
                        }
                    }
                }
                out[u as usize * image.cols + v as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn on_kernel_closed_form_values() {
        let k = make_dog_kernel(1.0, 2.0).unwrap();
        assert_eq!(k.polarity, Polarity::On);
        assert!((k.at(0, 0) - 3.0 / (8.0 * PI)).abs() < 1e-15);
        assert!((k.at(0, 0) - 0.119_366_207_318_921_5).abs() < 1e-12);
        assert!((k.at(3, 3) - (-4.174_060_616_421_957e-3)).abs() < 1e-12);
        assert_eq!(k.at(4, 0), 0.0);
    }

    #[test]
    fn off_kernel_is_negated_on_kernel() {
        let on = make_dog_kernel(1.0, 2.0).unwrap();
        let off = make_dog_kernel(2.0, 1.0).unwrap();
        assert_eq!(off.polarity, Polarity::Off);
        for i in 0..DOG_SIZE {
            for j in 0..DOG_SIZE {
                assert_eq!(off.values[i][j], -on.values[i][j]);
            }
        }
    }

    #[test]
    fn rejects_non_positive_sigma() {
        assert!(make_dog_kernel(0.0, 2.0).is_err());
        assert!(make_dog_kernel(1.0, -1.0).is_err());
        assert!(make_dog_kernel(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn zero_image_gives_zero_map() {
        let k = make_dog_kernel(1.0, 2.0).unwrap();
        let map = dog_filter(&GrayImage::zeros(27, 27), &k).unwrap();
        assert_eq!(map.values.len(), 27 * 27);
        assert!(map.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let k = make_dog_kernel(1.0, 2.0).unwrap();
        let mut img = GrayImage::zeros(27, 27);
        img.set(13, 13, 1.0);
        let map = dog_filter(&img, &k).unwrap();
        for u in 0..27isize {
            for v in 0..27isize {
                // Correlation with a symmetric kernel: out(u,v) = K(13-u, 13-v).
                let expected = k.at(13 - u, 13 - v);
                assert_eq!(map.get(u as usize, v as usize), expected);
            }
        }
    }

    #[test]
    fn matches_brute_force_on_random_images() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (s1, s2) in [(1.0, 2.0), (2.0, 1.0)] {
            let k = make_dog_kernel(s1, s2).unwrap();
            for _ in 0..20 {
                let pixels = (0..27 * 27).map(|_| rng.random_range(0.0..255.0)).collect();
                let img = GrayImage::new(27, 27, pixels).unwrap();
                let fast = dog_filter(&img, &k).unwrap();
                let slow = brute_force(&img, &k);
                for (a, b) in fast.values.iter().zip(&slow) {
                    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn non_square_and_tiny_images() {
        let k = make_dog_kernel(1.0, 2.0).unwrap();
        let img = GrayImage::new(1, 1, vec![2.0]).unwrap();
        let map = dog_filter(&img, &k).unwrap();
        assert_eq!(map.values, vec![2.0 * k.at(0, 0)]);
        let img = GrayImage::new(3, 5, (0..15).map(f64::from).collect()).unwrap();
        let fast = dog_filter(&img, &k).unwrap();
        let slow = brute_force(&img, &k);
        for (a, b) in fast.values.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
