//! Preprocessing chain for grayscale spectrograms: Gaussian smoothing,
//! Sobel/Scharr/Laplace edge enhancement, and area resizing.
//!
//! All kernels are 3x3, all borders replicate the nearest edge pixel, and
//! every integer pixel is produced by rounding half away from zero. Edge
//! enhancement converts each directional response to 8 bits (absolute value,
//! saturating) before the weighted blend, then saturates again.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectro::GrayImage;

#[derive(Debug, Error)]
pub enum ImgError {
    #[error("image is empty")]
    EmptyImage,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
}

/// A 3x3 real-valued kernel, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel3(pub [[f64; 3]; 3]);

impl Kernel3 {
    pub fn sum(&self) -> f64 {
        self.0.iter().flatten().sum()
    }
}

/// Gaussian smoothing configuration. The kernel is always 3x3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianConfig {
    pub sigma: f64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        GaussianConfig { sigma: 1.0 }
    }
}

/// Edge operators named by the stencil they apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeOperator {
    Sobel,
    Scharr,
    Laplace,
}

/// Weighted superposition of the horizontal and vertical responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub operator: EdgeOperator,
    pub alpha: f64,
    pub beta: f64,
}

impl EdgeConfig {
    pub fn new(operator: EdgeOperator) -> Self {
        EdgeConfig {
            operator,
            alpha: 0.5,
            beta: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ImgError> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(ImgError::InvalidConfig(
                "alpha and beta must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Border handling. Replicate is the only supported mode: out-of-range
/// coordinates clamp to the nearest edge pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BorderMode {
    #[default]
    Replicate,
}

/// Gradient axis for the directional operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// A signed integer response plane, same geometry as the source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntPlane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<i32>,
}

impl IntPlane {
    pub fn at(&self, row: usize, col: usize) -> i32 {
        self.data[row * self.width + col]
    }
}

const SOBEL_X: [[i32; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
const SCHARR_X: [[i32; 3]; 3] = [[-3, 0, 3], [-10, 0, 10], [-3, 0, 3]];
const LAPLACE: [[i32; 3]; 3] = [[0, 1, 0], [1, -4, 1], [0, 1, 0]];

fn transpose(k: [[i32; 3]; 3]) -> [[i32; 3]; 3] {
    let mut t = [[0i32; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            t[c][r] = k[r][c];
        }
    }
    t
}

/// The normalized 3x3 Gaussian kernel: coefficients proportional to
/// `exp(-(x^2 + y^2) / (2 sigma^2))` on the lattice `{-1, 0, 1}^2`, scaled to
/// sum exactly 1.
pub fn gaussian_kernel(cfg: GaussianConfig) -> Result<Kernel3, ImgError> {
    if cfg.sigma <= 0.0 || cfg.sigma.is_nan() {
        return Err(ImgError::InvalidConfig(format!(
            "sigma {} must be positive",
            cfg.sigma
        )));
    }
    let mut k = [[0.0f64; 3]; 3];
    let denom = 2.0 * cfg.sigma * cfg.sigma;
    for (r, row) in k.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let y = r as f64 - 1.0;
            let x = c as f64 - 1.0;
            *v = (-(x * x + y * y) / denom).exp();
        }
    }
    let sum: f64 = k.iter().flatten().sum();
    for v in k.iter_mut().flatten() {
        *v /= sum;
    }
    Ok(Kernel3(k))
}

fn check_nonempty(img: &GrayImage) -> Result<(), ImgError> {
    if img.height == 0 || img.width == 0 || img.pixels.is_empty() {
        return Err(ImgError::EmptyImage);
    }
    Ok(())
}

#[inline]
fn clamped(img: &GrayImage, row: isize, col: isize) -> u8 {
    let r = row.clamp(0, img.height as isize - 1) as usize;
    let c = col.clamp(0, img.width as isize - 1) as usize;
    img.pixels[r * img.width + c]
}

fn round_half_away(x: f64) -> f64 {
    x.round()
}

#[inline]
fn sat_u8(v: f64) -> u8 {
    round_half_away(v).clamp(0.0, 255.0) as u8
}

#[inline]
fn sat_u8_i32(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Correlation with the normalized Gaussian kernel, replicate border,
/// rounded half away from zero. The output stays in `[0, 255]` because the
/// kernel is non-negative and sums to 1.
pub fn smooth_gaussian(
    img: &GrayImage,
    cfg: GaussianConfig,
    _border: BorderMode,
) -> Result<GrayImage, ImgError> {
    check_nonempty(img)?;
    let kernel = gaussian_kernel(cfg)?;
    let mut out = vec![0u8; img.pixels.len()];
    for r in 0..img.height {
        for c in 0..img.width {
            let mut acc = 0.0f64;
            for (dr, krow) in kernel.0.iter().enumerate() {
                for (dc, &kv) in krow.iter().enumerate() {
                    let v = clamped(img, r as isize + dr as isize - 1, c as isize + dc as isize - 1);
                    acc += kv * v as f64;
                }
            }
            out[r * img.width + c] = sat_u8(acc);
        }
    }
    Ok(GrayImage {
        height: img.height,
        width: img.width,
        pixels: out,
    })
}

fn correlate_i32(img: &GrayImage, kernel: [[i32; 3]; 3]) -> IntPlane {
    let mut data = vec![0i32; img.pixels.len()];
    for r in 0..img.height {
        for c in 0..img.width {
            let mut acc = 0i32;
            for (dr, krow) in kernel.iter().enumerate() {
                for (dc, &kv) in krow.iter().enumerate() {
                    let v = clamped(img, r as isize + dr as isize - 1, c as isize + dc as isize - 1);
                    acc += kv * v as i32;
                }
            }
            data[r * img.width + c] = acc;
        }
    }
    IntPlane {
        height: img.height,
        width: img.width,
        data,
    }
}

/// Signed response of the Sobel or Scharr stencil along one axis, computed
/// with exact integer arithmetic and a replicate border.
///
/// The X kernels are `[[-1,0,1],[-2,0,2],[-1,0,1]]` (Sobel) and
/// `[[-3,0,3],[-10,0,10],[-3,0,3]]` (Scharr); the Y kernels are their
/// transposes. Laplace has no axis; see [`laplace_response`].
pub fn directional_response(
    img: &GrayImage,
    operator: EdgeOperator,
    axis: Axis,
    _border: BorderMode,
) -> Result<IntPlane, ImgError> {
    check_nonempty(img)?;
    let base = match operator {
        EdgeOperator::Sobel => SOBEL_X,
        EdgeOperator::Scharr => SCHARR_X,
        EdgeOperator::Laplace => {
            return Err(ImgError::InvalidConfig(
                "laplace has no directional split".into(),
            ))
        }
    };
    let kernel = match axis {
        Axis::X => base,
        Axis::Y => transpose(base),
    };
    Ok(correlate_i32(img, kernel))
}

/// Signed response of the 4-neighbor Laplacian `[[0,1,0],[1,-4,1],[0,1,0]]`,
/// replicate border, exact integer arithmetic.
pub fn laplace_response(img: &GrayImage, _border: BorderMode) -> Result<IntPlane, ImgError> {
    check_nonempty(img)?;
    Ok(correlate_i32(img, LAPLACE))
}

/// Edge enhancement.
///
/// Sobel/Scharr: each directional response is rectified and saturated to
/// 8 bits first (`U = sat(|Gx|)`, `V = sat(|Gy|)`), then blended as
/// `sat(round(alpha*U + beta*V))`. Laplace is isotropic: `sat(|L|)` with no
/// blend.
pub fn edge_enhance(img: &GrayImage, cfg: EdgeConfig) -> Result<GrayImage, ImgError> {
    check_nonempty(img)?;
    cfg.validate()?;
    let pixels = match cfg.operator {
        EdgeOperator::Laplace => {
            let lap = laplace_response(img, BorderMode::Replicate)?;
            lap.data
                .iter()
                .map(|&v| sat_u8_i32(v.abs()))
                .collect::<Vec<u8>>()
        }
        op => {
            let gx = directional_response(img, op, Axis::X, BorderMode::Replicate)?;
            let gy = directional_response(img, op, Axis::Y, BorderMode::Replicate)?;
            gx.data
                .iter()
                .zip(&gy.data)
                .map(|(&x, &y)| {
                    let u = sat_u8_i32(x.abs()) as f64;
                    let v = sat_u8_i32(y.abs()) as f64;
                    sat_u8(cfg.alpha * u + cfg.beta * v)
                })
                .collect()
        }
    };
    Ok(GrayImage {
        height: img.height,
        width: img.width,
        pixels,
    })
}

/// Area resize. When the output dimensions divide the input exactly, each
/// output pixel is the rounded mean of its source block; otherwise a
/// bilinear fallback with pixel-center alignment is used.
pub fn resize_area(img: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage, ImgError> {
    check_nonempty(img)?;
    if out_h == 0 || out_w == 0 {
        return Err(ImgError::BadDimensions("output dims must be positive".into()));
    }
    if img.height == out_h && img.width == out_w {
        return Ok(img.clone());
    }
    let pixels = if img.height % out_h == 0 && img.width % out_w == 0 {
        let bh = img.height / out_h;
        let bw = img.width / out_w;
        let block_len = (bh * bw) as f64;
        let mut out = vec![0u8; out_h * out_w];
        for r in 0..out_h {
            for c in 0..out_w {
                let mut acc = 0u32;
                for br in 0..bh {
                    for bc in 0..bw {
                        acc += img.at(r * bh + br, c * bw + bc) as u32;
                    }
                }
                out[r * out_w + c] = sat_u8(acc as f64 / block_len);
            }
        }
        out
    } else {
        let scale_y = img.height as f64 / out_h as f64;
        let scale_x = img.width as f64 / out_w as f64;
        let mut out = vec![0u8; out_h * out_w];
        for r in 0..out_h {
            for c in 0..out_w {
                let sy = ((r as f64 + 0.5) * scale_y - 0.5).max(0.0);
                let sx = ((c as f64 + 0.5) * scale_x - 0.5).max(0.0);
                let y0 = (sy.floor() as usize).min(img.height - 1);
                let x0 = (sx.floor() as usize).min(img.width - 1);
                let y1 = (y0 + 1).min(img.height - 1);
                let x1 = (x0 + 1).min(img.width - 1);
                let fy = sy - y0 as f64;
                let fx = sx - x0 as f64;
                let v = img.at(y0, x0) as f64 * (1.0 - fy) * (1.0 - fx)
                    + img.at(y0, x1) as f64 * (1.0 - fy) * fx
                    + img.at(y1, x0) as f64 * fy * (1.0 - fx)
                    + img.at(y1, x1) as f64 * fy * fx;
                out[r * out_w + c] = sat_u8(v);
            }
        }
        out
    };
    Ok(GrayImage {
        height: out_h,
        width: out_w,
        pixels,
    })
}

/// Full preprocessing pipeline for one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub gaussian: GaussianConfig,
    /// `None` leaves the smoothed image as-is (the control arm).
    pub edge: Option<EdgeConfig>,
    pub out_height: usize,
    pub out_width: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            gaussian: GaussianConfig::default(),
            edge: Some(EdgeConfig::new(EdgeOperator::Sobel)),
            out_height: 128,
            out_width: 256,
        }
    }
}

/// Gaussian smoothing, then optional edge enhancement at full resolution,
/// then area resize to the configured output dimensions.
pub fn preprocess(img: &GrayImage, cfg: &PreprocessConfig) -> Result<GrayImage, ImgError> {
    let smoothed = smooth_gaussian(img, cfg.gaussian, BorderMode::Replicate)?;
    let enhanced = match cfg.edge {
        Some(edge) => edge_enhance(&smoothed, edge)?,
        None => smoothed,
    };
    resize_area(&enhanced, cfg.out_height, cfg.out_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> GrayImage {
        GrayImage::new(h, w, (0..h * w).map(|_| rng.gen()).collect())
    }

    /// Nested-loop correlation oracle over f64 with replicate border.
    fn brute_force_f64(img: &GrayImage, kernel: &Kernel3) -> Vec<f64> {
        let mut out = vec![0.0; img.pixels.len()];
        for r in 0..img.height as isize {
            for c in 0..img.width as isize {
                let mut acc = 0.0;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let rr = (r + dr).clamp(0, img.height as isize - 1) as usize;
                        let cc = (c + dc).clamp(0, img.width as isize - 1) as usize;
                        acc += kernel.0[(dr + 1) as usize][(dc + 1) as usize]
                            * img.pixels[rr * img.width + cc] as f64;
                    }
                }
                out[(r * img.width as isize + c) as usize] = acc;
            }
        }
        out
    }

    /// Nested-loop integer correlation oracle with replicate border.
    fn brute_force_i32(img: &GrayImage, kernel: [[i32; 3]; 3]) -> Vec<i32> {
        let mut out = vec![0i32; img.pixels.len()];
        for r in 0..img.height as isize {
            for c in 0..img.width as isize {
                let mut acc = 0i32;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let rr = (r + dr).clamp(0, img.height as isize - 1) as usize;
                        let cc = (c + dc).clamp(0, img.width as isize - 1) as usize;
                        acc += kernel[(dr + 1) as usize][(dc + 1) as usize]
                            * img.pixels[rr * img.width + cc] as i32;
                    }
                }
                out[(r * img.width as isize + c) as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn gaussian_kernel_normalization_and_shape() {
        let k = gaussian_kernel(GaussianConfig { sigma: 1.0 }).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-12);
        // corner/center ratio survives normalization: exp(-1)
        let ratio = k.0[0][0] / k.0[1][1];
        assert!((ratio - (-1.0f64).exp()).abs() < 1e-12);
        // frozen center coefficient: 1 / (1 + 4 e^{-1/2} + 4 e^{-1})
        assert!((k.0[1][1] - 0.2042).abs() < 1e-4);
        let exact = 1.0 / (1.0 + 4.0 * (-0.5f64).exp() + 4.0 * (-1.0f64).exp());
        assert!((k.0[1][1] - exact).abs() < 1e-15);
    }

    #[test]
    fn gaussian_kernel_limits() {
        let wide = gaussian_kernel(GaussianConfig { sigma: 100.0 }).unwrap();
        for v in wide.0.iter().flatten() {
            assert!((v - 1.0 / 9.0).abs() < 1e-3);
        }
        assert!(gaussian_kernel(GaussianConfig { sigma: 0.0 }).is_err());
        assert!(gaussian_kernel(GaussianConfig { sigma: -1.0 }).is_err());
    }

    #[test]
    fn smoothing_preserves_constant_images() {
        let img = GrayImage::filled(6, 9, 100);
        let out = smooth_gaussian(&img, GaussianConfig::default(), BorderMode::Replicate).unwrap();
        assert!(out.pixels.iter().all(|&p| p == 100));
    }

    #[test]
    fn smoothing_single_bright_pixel_center_is_52() {
        let mut img = GrayImage::filled(7, 7, 0);
        img.set(3, 3, 255);
        let out = smooth_gaussian(&img, GaussianConfig::default(), BorderMode::Replicate).unwrap();
        // round(255 * 0.204180) = 52
        assert_eq!(out.at(3, 3), 52);
    }

    #[test]
    fn smoothing_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let kernel = gaussian_kernel(GaussianConfig::default()).unwrap();
        for _ in 0..100 {
            let img = random_image(&mut rng, 8, 8);
            let fast =
                smooth_gaussian(&img, GaussianConfig::default(), BorderMode::Replicate).unwrap();
            let oracle = brute_force_f64(&img, &kernel);
            for (f, o) in fast.pixels.iter().zip(&oracle) {
                assert_eq!(*f as f64, o.round().clamp(0.0, 255.0));
            }
        }
    }

    #[test]
    fn directional_responses_match_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let cases = [
            (EdgeOperator::Sobel, Axis::X, SOBEL_X),
            (EdgeOperator::Sobel, Axis::Y, transpose(SOBEL_X)),
            (EdgeOperator::Scharr, Axis::X, SCHARR_X),
            (EdgeOperator::Scharr, Axis::Y, transpose(SCHARR_X)),
        ];
        for (op, axis, kernel) in cases {
            for _ in 0..100 {
                let img = random_image(&mut rng, 8, 8);
                let fast = directional_response(&img, op, axis, BorderMode::Replicate).unwrap();
                assert_eq!(fast.data, brute_force_i32(&img, kernel));
            }
        }
    }

    #[test]
    fn laplace_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        for _ in 0..100 {
            let img = random_image(&mut rng, 8, 8);
            let fast = laplace_response(&img, BorderMode::Replicate).unwrap();
            assert_eq!(fast.data, brute_force_i32(&img, LAPLACE));
        }
    }

    #[test]
    fn constant_image_has_zero_response() {
        let img = GrayImage::filled(5, 5, 200);
        let gx =
            directional_response(&img, EdgeOperator::Sobel, Axis::X, BorderMode::Replicate)
                .unwrap();
        assert!(gx.data.iter().all(|&v| v == 0));
        let lap = laplace_response(&img, BorderMode::Replicate).unwrap();
        assert!(lap.data.iter().all(|&v| v == 0));
        for op in [EdgeOperator::Sobel, EdgeOperator::Scharr, EdgeOperator::Laplace] {
            let e = edge_enhance(&img, EdgeConfig::new(op)).unwrap();
            assert!(e.pixels.iter().all(|&p| p == 0));
        }
    }

    fn vertical_step_image(h: usize, w: usize, step_col: usize) -> GrayImage {
        let mut img = GrayImage::filled(h, w, 0);
        for r in 0..h {
            for c in step_col..w {
                img.set(r, c, 255);
            }
        }
        img
    }

    #[test]
    fn sobel_x_at_vertical_step_is_1020() {
        // columns 0,0,255,255...: at the column left of the step the x kernel
        // sees (-1*0 + 1*255) * (1+2+1) = 1020
        let img = vertical_step_image(6, 6, 2);
        let gx =
            directional_response(&img, EdgeOperator::Sobel, Axis::X, BorderMode::Replicate)
                .unwrap();
        for r in 0..img.height {
            assert_eq!(gx.at(r, 1), 1020);
            assert_eq!(gx.at(r, 2), 1020);
            assert_eq!(gx.at(r, 0), 0);
            assert_eq!(gx.at(r, 4), 0);
        }
    }

    #[test]
    fn sobel_blend_at_vertical_step_is_128() {
        // |Gx| saturates to 255, Gy = 0: round(0.5*255 + 0.5*0) = 128
        let img = vertical_step_image(6, 6, 2);
        let out = edge_enhance(&img, EdgeConfig::new(EdgeOperator::Sobel)).unwrap();
        for r in 0..img.height {
            assert_eq!(out.at(r, 1), 128);
            assert_eq!(out.at(r, 2), 128);
            assert_eq!(out.at(r, 0), 0);
            assert_eq!(out.at(r, 4), 0);
        }
    }

    #[test]
    fn gx_equals_gy_of_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(400);
        let img = random_image(&mut rng, 6, 9);
        let transposed = GrayImage::new(
            img.width,
            img.height,
            (0..img.width * img.height)
                .map(|i| img.at(i % img.height, i / img.height))
                .collect(),
        );
        let gx =
            directional_response(&img, EdgeOperator::Sobel, Axis::X, BorderMode::Replicate)
                .unwrap();
        let gy_t = directional_response(
            &transposed,
            EdgeOperator::Sobel,
            Axis::Y,
            BorderMode::Replicate,
        )
        .unwrap();
        for r in 0..img.height {
            for c in 0..img.width {
                assert_eq!(gx.at(r, c), gy_t.at(c, r));
            }
        }
    }

    #[test]
    fn laplace_single_pixel_response() {
        let mut img = GrayImage::filled(7, 7, 0);
        img.set(3, 3, 100);
        let lap = laplace_response(&img, BorderMode::Replicate).unwrap();
        assert_eq!(lap.at(3, 3), -400);
        assert_eq!(lap.at(2, 3), 100);
        assert_eq!(lap.at(4, 3), 100);
        assert_eq!(lap.at(3, 2), 100);
        assert_eq!(lap.at(3, 4), 100);
        let enhanced = edge_enhance(&img, EdgeConfig::new(EdgeOperator::Laplace)).unwrap();
        assert_eq!(enhanced.at(3, 3), 255); // |-400| saturates
        assert_eq!(enhanced.at(2, 3), 100);
    }

    #[test]
    fn laplace_of_linear_ramp_is_zero_in_interior() {
        let w = 10;
        let img = GrayImage::new(
            6,
            w,
            (0..6 * w).map(|i| (i % w) as u8 * 20).collect(),
        );
        let lap = laplace_response(&img, BorderMode::Replicate).unwrap();
        for r in 1..5 {
            for c in 1..w - 1 {
                assert_eq!(lap.at(r, c), 0, "interior ({r},{c})");
            }
        }
    }

    proptest! {
        /// |G(255 - img)| = |G(img)| for zero-sum kernels, so enhancement is
        /// invariant under image negation (replicate border included).
        #[test]
        fn enhancement_invariant_under_negation(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, 8, 8);
            let negated = GrayImage::new(8, 8, img.pixels.iter().map(|&p| 255 - p).collect());
            for op in [EdgeOperator::Sobel, EdgeOperator::Scharr] {
                let a = edge_enhance(&img, EdgeConfig::new(op)).unwrap();
                let b = edge_enhance(&negated, EdgeConfig::new(op)).unwrap();
                prop_assert_eq!(&a.pixels, &b.pixels);
            }
        }
    }

    #[test]
    fn resize_constant_image() {
        let img = GrayImage::filled(12, 8, 77);
        let out = resize_area(&img, 4, 4).unwrap();
        assert_eq!(out.height, 4);
        assert_eq!(out.width, 4);
        assert!(out.pixels.iter().all(|&p| p == 77));
    }

    #[test]
    fn resize_two_by_two_block_rounds_half_away() {
        let img = GrayImage::new(2, 2, vec![0, 0, 255, 255]);
        let out = resize_area(&img, 1, 1).unwrap();
        assert_eq!(out.pixels, vec![128]); // mean 127.5 rounds away from zero
    }

    #[test]
    fn resize_checkerboard_at_block_granularity_is_exact() {
        // 384x512 board of 3x2 blocks alternating 0/255 resizes to an exact
        // 128x256 checkerboard
        let (h, w) = (384usize, 512usize);
        let mut img = GrayImage::filled(h, w, 0);
        for r in 0..h {
            for c in 0..w {
                if ((r / 3) + (c / 2)) % 2 == 0 {
                    img.set(r, c, 255);
                }
            }
        }
        let out = resize_area(&img, 128, 256).unwrap();
        for r in 0..128 {
            for c in 0..256 {
                let expect = if (r + c) % 2 == 0 { 255 } else { 0 };
                assert_eq!(out.at(r, c), expect);
            }
        }
    }

    #[test]
    fn resize_block_mean_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        let img = random_image(&mut rng, 12, 10);
        let out = resize_area(&img, 4, 5).unwrap();
        for r in 0..4 {
            for c in 0..5 {
                let mut sum = 0u32;
                for br in 0..3 {
                    for bc in 0..2 {
                        sum += img.at(r * 3 + br, c * 2 + bc) as u32;
                    }
                }
                let mean = sum as f64 / 6.0;
                assert_eq!(out.at(r, c) as f64, mean.round());
            }
        }
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let img = GrayImage::filled(4, 4, 1);
        assert!(resize_area(&img, 0, 4).is_err());
        assert!(resize_area(&img, 4, 0).is_err());
    }

    #[test]
    fn preprocess_without_edge_equals_smooth_then_resize() {
        let mut rng = ChaCha8Rng::seed_from_u64(600);
        let img = random_image(&mut rng, 384, 512);
        let cfg = PreprocessConfig {
            edge: None,
            ..PreprocessConfig::default()
        };
        let out = preprocess(&img, &cfg).unwrap();
        let expect = resize_area(
            &smooth_gaussian(&img, cfg.gaussian, BorderMode::Replicate).unwrap(),
            128,
            256,
        )
        .unwrap();
        assert_eq!(out, expect);
    }

    #[test]
    fn preprocess_output_dims_and_degenerate_input() {
        let img = GrayImage::filled(384, 512, 42);
        for edge in [
            None,
            Some(EdgeConfig::new(EdgeOperator::Sobel)),
            Some(EdgeConfig::new(EdgeOperator::Scharr)),
            Some(EdgeConfig::new(EdgeOperator::Laplace)),
        ] {
            let cfg = PreprocessConfig {
                edge,
                ..PreprocessConfig::default()
            };
            let out = preprocess(&img, &cfg).unwrap();
            assert_eq!((out.height, out.width), (128, 256));
            if edge.is_some() {
                assert!(out.pixels.iter().all(|&p| p == 0));
            }
        }
    }
}
