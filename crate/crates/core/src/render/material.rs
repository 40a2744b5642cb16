//! The four-map SVBRDF material representation.

use std::path::Path;

use crate::error::{MatError, Result};
use crate::render::image::ImageF;
use crate::render::vec3::{v3, Vec3};

/// Basecolor, tangent-space normal, roughness and metallic maps plus
/// resolution metadata. All texel values live in [0,1]; normals use the
/// +Y-up, +Z-out tangent convention.
#[derive(Clone, Debug)]
pub struct MaterialMaps {
    pub basecolor: ImageF,
    pub normal: ImageF,
    pub roughness: ImageF,
    pub metallic: ImageF,
}

impl MaterialMaps {
    pub fn resolution(&self) -> (usize, usize) {
        (self.basecolor.height(), self.basecolor.width())
    }

    /// Flat material with uniform values; normals flat (0.5, 0.5, 1.0).
    pub fn uniform(h: usize, w: usize, basecolor: [f32; 3], roughness: f32, metallic: f32) -> Self {
        let mut bc = ImageF::new(h, w, 3);
        for y in 0..h {
            for x in 0..w {
                bc.px_mut(y, x).copy_from_slice(&basecolor);
            }
        }
        let mut n = ImageF::new(h, w, 3);
        for y in 0..h {
            for x in 0..w {
                n.px_mut(y, x).copy_from_slice(&[0.5, 0.5, 1.0]);
            }
        }
        MaterialMaps {
            basecolor: bc,
            normal: n,
            roughness: ImageF::filled(h, w, 1, roughness),
            metallic: ImageF::filled(h, w, 1, metallic),
        }
    }

    pub fn validate(&self, spatial_factor: usize) -> Result<()> {
        let (h, w) = self.resolution();
        for (name, img, c) in [
            ("basecolor", &self.basecolor, 3),
            ("normal", &self.normal, 3),
            ("roughness", &self.roughness, 1),
            ("metallic", &self.metallic, 1),
        ] {
            if img.height() != h || img.width() != w || img.channels() != c {
                return Err(MatError::Dimension(format!(
                    "map {name} is {}x{}x{}, expected {h}x{w}x{c}",
                    img.height(),
                    img.width(),
                    img.channels()
                )));
            }
            if !img.all_in_unit_range() {
                return Err(MatError::Contract(format!("map {name} outside [0,1]")));
            }
        }
        if h < 8 || w < 8 {
            return Err(MatError::Contract(format!("resolution {h}x{w} below 8x8")));
        }
        if spatial_factor > 0 && (h % spatial_factor != 0 || w % spatial_factor != 0) {
            return Err(MatError::Contract(format!(
                "resolution {h}x{w} not a multiple of spatial factor {spatial_factor}"
            )));
        }
        Ok(())
    }

    /// Per-texel shading inputs at integer coordinates.
    pub fn texel(&self, y: usize, x: usize) -> TexelSample {
        TexelSample {
            basecolor: self.basecolor.rgb(y, x),
            normal_rgb: self.normal.rgb(y, x),
            roughness: self.roughness.px(y, x)[0],
            metallic: self.metallic.px(y, x)[0],
        }
    }

    /// Bilinear wrap-around sample in UV space.
    pub fn sample(&self, u: f32, v: f32) -> TexelSample {
        let bc = self.basecolor.sample_wrap(u, v);
        let n = self.normal.sample_wrap(u, v);
        TexelSample {
            basecolor: [bc[0], bc[1], bc[2]],
            normal_rgb: [n[0], n[1], n[2]],
            roughness: self.roughness.sample_wrap(u, v)[0],
            metallic: self.metallic.sample_wrap(u, v)[0],
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        crate::render::image::save_f32(&self.basecolor, &dir.join("basecolor.f32"))?;
        crate::render::image::save_f32(&self.normal, &dir.join("normal.f32"))?;
        crate::render::image::save_f32(&self.roughness, &dir.join("roughness.f32"))?;
        crate::render::image::save_f32(&self.metallic, &dir.join("metallic.f32"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<MaterialMaps> {
        Ok(MaterialMaps {
            basecolor: crate::render::image::load_f32(&dir.join("basecolor.f32"))?,
            normal: crate::render::image::load_f32(&dir.join("normal.f32"))?,
            roughness: crate::render::image::load_f32(&dir.join("roughness.f32"))?,
            metallic: crate::render::image::load_f32(&dir.join("metallic.f32"))?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TexelSample {
    pub basecolor: [f32; 3],
    pub normal_rgb: [f32; 3],
    pub roughness: f32,
    pub metallic: f32,
}

/// Decode an RGB-encoded tangent-space normal: `normalize(2 p - 1)`.
/// (0.5, 0.5, 1.0) is the flat normal (0, 0, 1); an exactly zero vector
/// before normalization (pixel 0.5, 0.5, 0.5) is an error.
pub fn decode_normal(pixel: [f32; 3]) -> Result<Vec3> {
    let v = v3(
        2.0 * pixel[0] - 1.0,
        2.0 * pixel[1] - 1.0,
        2.0 * pixel[2] - 1.0,
    );
    let len = v.length();
    if len < 1e-8 {
        return Err(MatError::Contract(
            "normal pixel decodes to the zero vector".to_string(),
        ));
    }
    Ok(v / len)
}

/// Encode a unit tangent-space normal back into RGB.
pub fn encode_normal(n: Vec3) -> [f32; 3] {
    [
        (n.x * 0.5 + 0.5).clamp(0.0, 1.0),
        (n.y * 0.5 + 0.5).clamp(0.0, 1.0),
        (n.z * 0.5 + 0.5).clamp(0.0, 1.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{hash_coords, hash_unit};

    #[test]
    fn flat_normal_decodes_to_z() {
        let n = decode_normal([0.5, 0.5, 1.0]).unwrap();
        assert!((n.x).abs() < 1e-6 && (n.y).abs() < 1e-6 && (n.z - 1.0).abs() < 1e-6);
    }

    #[test]
    fn axis_normal_decodes_to_x() {
        let n = decode_normal([1.0, 0.5, 0.5]).unwrap();
        assert!((n.x - 1.0).abs() < 1e-6 && n.y.abs() < 1e-6 && n.z.abs() < 1e-6);
    }

    #[test]
    fn zero_vector_pixel_is_an_error() {
        assert!(decode_normal([0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn random_pixels_decode_to_unit_length() {
        for i in 0..500 {
            let px = [
                hash_unit(hash_coords(1, i, 0, 0)),
                hash_unit(hash_coords(1, i, 1, 0)),
                hash_unit(hash_coords(1, i, 2, 0)),
            ];
            if let Ok(n) = decode_normal(px) {
                assert!((n.length() - 1.0).abs() < 1e-6);
            }
        }
    }
}
