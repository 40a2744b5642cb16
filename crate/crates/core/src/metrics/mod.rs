//! Desk-scale metric suite: pixel error, PSNR, perceptual distance through a
//! fixed seeded feature net, and Fréchet feature-distribution distance.

pub mod feature;
pub mod frechet;
pub mod report;

pub use feature::{chw_to_image, image_to_chw, FeatureNet, DEFAULT_FEATURE_SEED};
pub use frechet::{frechet_distance, jacobi_eigen_sym, sqrtm_sym};
pub use report::{ChannelMetrics, MetricReport};

use crate::error::{MatError, Result};
use crate::render::image::ImageF;

/// PSNR values for exact matches are reported as this documented cap.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Mean squared difference over all pixels and channels.
pub fn mse(a: &ImageF, b: &ImageF) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(MatError::Dimension(format!(
            "mse shapes {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(mse_slices(a.data(), b.data()))
}

pub fn mse_slices(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = (x - y) as f64;
        acc += d * d;
    }
    acc / a.len() as f64
}

/// `10 log10(peak^2 / mse)`; an exact match (mse = 0) reports the 99 dB cap.
pub fn psnr(a: &ImageF, b: &ImageF, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_identity_offset_symmetry() {
        let a = ImageF::filled(4, 4, 3, 0.5);
        let mut b = a.clone();
        for v in b.data_mut() {
            *v += 0.1;
        }
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-7);
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
    }

    #[test]
    fn psnr_arithmetic_and_cap() {
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-9);
        assert!((psnr_from_mse(0.0001, 1.0) - 40.0).abs() < 1e-9);
        assert_eq!(psnr_from_mse(0.0, 1.0), PSNR_CAP_DB);
    }

    #[test]
    fn mse_shape_mismatch_errors() {
        let a = ImageF::new(4, 4, 3);
        let b = ImageF::new(4, 5, 3);
        assert!(mse(&a, &b).is_err());
    }
}
