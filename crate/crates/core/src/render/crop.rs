//! Coverage-constrained centered cropping.

use crate::error::{MatError, Result};
use crate::render::image::ImageF;

/// Largest centered square crop whose mask coverage reaches `min_coverage`,
/// resized to `out_res`. The search starts at the full centered square and
/// steps inward by 1/16 of the side down to half the side; if no candidate
/// qualifies the sample is rejected with `CoverageUnsatisfiable`.
pub fn crop_to_coverage(
    image: &ImageF,
    mask: &ImageF,
    min_coverage: f32,
    out_res: usize,
) -> Result<ImageF> {
    if !(0.0 < min_coverage && min_coverage <= 1.0) {
        return Err(MatError::Config(format!(
            "min_coverage {min_coverage} outside (0, 1]"
        )));
    }
    if image.height() != mask.height() || image.width() != mask.width() {
        return Err(MatError::Dimension("image/mask size mismatch".to_string()));
    }
    let (h, w) = (image.height(), image.width());
    let side0 = h.min(w);
    let step = (side0 / 16).max(1);
    let mut side = side0;
    while side >= side0 / 2 {
        let y0 = (h - side) / 2;
        let x0 = (w - side) / 2;
        let mut covered = 0usize;
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                if mask.px(y, x)[0] > 0.5 {
                    covered += 1;
                }
            }
        }
        let coverage = covered as f32 / (side * side) as f32;
        if coverage >= min_coverage {
            let cropped = image.crop(y0, x0, side, side);
            return Ok(cropped.resize_bilinear(out_res, out_res));
        }
        if side < step || side - step < side0 / 2 {
            break;
        }
        side -= step;
    }
    Err(MatError::CoverageUnsatisfiable { min_coverage })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_mask(res: usize, area_fraction: f32) -> ImageF {
        let radius = (area_fraction / std::f32::consts::PI).sqrt() * res as f32;
        let mut mask = ImageF::new(res, res, 1);
        let c = res as f32 / 2.0;
        for y in 0..res {
            for x in 0..res {
                let dy = y as f32 + 0.5 - c;
                let dx = x as f32 + 0.5 - c;
                if (dx * dx + dy * dy).sqrt() <= radius {
                    mask.px_mut(y, x)[0] = 1.0;
                }
            }
        }
        mask
    }

    #[test]
    fn full_mask_gives_full_frame() {
        let img = ImageF::filled(32, 32, 3, 0.5);
        let mask = ImageF::filled(32, 32, 1, 1.0);
        let out = crop_to_coverage(&img, &mask, 0.7, 32).unwrap();
        assert_eq!(out.height(), 32);
        assert!((out.mean() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn empty_mask_is_unsatisfiable() {
        let img = ImageF::filled(32, 32, 3, 0.5);
        let mask = ImageF::new(32, 32, 1);
        assert!(matches!(
            crop_to_coverage(&img, &mask, 0.7, 32),
            Err(MatError::CoverageUnsatisfiable { .. })
        ));
    }

    #[test]
    fn disk_three_quarters_accepted_at_full_frame() {
        let img = ImageF::filled(64, 64, 3, 0.5);
        let mask = disk_mask(64, 0.75);
        // full-frame coverage is already ~0.75 >= 0.70, so no shrinking
        let out = crop_to_coverage(&img, &mask, 0.70, 64).unwrap();
        assert_eq!(out.height(), 64);
        // the accepted crop is the whole frame: re-check its coverage directly
        let coverage = mask.mean();
        assert!(coverage >= 0.70, "coverage {coverage}");
    }

    #[test]
    fn disk_two_thirds_shrinks_until_satisfied() {
        let img = ImageF::filled(64, 64, 3, 0.5);
        let mask = disk_mask(64, 0.65);
        // full frame fails (0.65 < 0.70) but an inner centered square reaches
        // the bound, so the search must succeed by shrinking
        let out = crop_to_coverage(&img, &mask, 0.70, 64).unwrap();
        assert_eq!(out.height(), 64); // resized back to the dataset resolution
    }
}
