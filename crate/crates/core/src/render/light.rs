//! Light sources: directional, point, and lat-long environment maps.

use crate::error::{MatError, Result};
use crate::render::image::ImageF;
use crate::render::vec3::{v3, Vec3};

#[derive(Clone, Debug)]
pub enum Light {
    /// `toward` points from the surface toward the light.
    Directional { toward: Vec3, radiance: [f32; 3] },
    Point { pos: Vec3, intensity: [f32; 3] },
    /// Lat-long radiance grid, row 0 at the zenith. Nonnegative values.
    Env { map: ImageF },
}

impl Light {
    pub fn validate(&self) -> Result<()> {
        match self {
            Light::Directional { toward, radiance } => {
                if !toward.is_unit(1e-3) {
                    return Err(MatError::Contract("directional light not unit".into()));
                }
                if radiance.iter().any(|&v| v < 0.0) {
                    return Err(MatError::Contract("negative radiance".into()));
                }
            }
            Light::Point { intensity, .. } => {
                if intensity.iter().any(|&v| v < 0.0) {
                    return Err(MatError::Contract("negative intensity".into()));
                }
            }
            Light::Env { map } => {
                if map.height() < 4 || map.width() < 8 || map.channels() != 3 {
                    return Err(MatError::Contract(format!(
                        "env map grid {}x{}x{} below 4x8x3",
                        map.height(),
                        map.width(),
                        map.channels()
                    )));
                }
                if map.data().iter().any(|&v| v < 0.0) {
                    return Err(MatError::Contract("negative env radiance".into()));
                }
            }
        }
        Ok(())
    }

    /// Enumerate discrete (direction, radiance * solid angle) contributions at
    /// a surface point. Environment maps are summed texel by texel with
    /// solid-angle weights; no stochastic sampling anywhere.
    pub fn gather(&self, point: Vec3, out: &mut Vec<(Vec3, [f32; 3])>) {
        out.clear();
        match self {
            Light::Directional { toward, radiance } => out.push((*toward, *radiance)),
            Light::Point { pos, intensity } => {
                let d = *pos - point;
                let dist2 = d.dot(d).max(1e-6);
                let l = d / dist2.sqrt();
                out.push((
                    l,
                    [
                        intensity[0] / dist2,
                        intensity[1] / dist2,
                        intensity[2] / dist2,
                    ],
                ));
            }
            Light::Env { map } => {
                let (rows, cols) = (map.height(), map.width());
                let d_theta = std::f32::consts::PI / rows as f32;
                let d_phi = 2.0 * std::f32::consts::PI / cols as f32;
                for i in 0..rows {
                    let theta = (i as f32 + 0.5) * d_theta;
                    let dw = theta.sin() * d_theta * d_phi;
                    if dw <= 0.0 {
                        continue;
                    }
                    for j in 0..cols {
                        let px = map.rgb(i, j);
                        if px == [0.0, 0.0, 0.0] {
                            continue;
                        }
                        let phi = (j as f32 + 0.5) * d_phi;
                        let l = v3(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                        out.push((l, [px[0] * dw, px[1] * dw, px[2] * dw]));
                    }
                }
            }
        }
    }

    /// Identifier used in dataset provenance records.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Light::Directional { .. } => "directional",
            Light::Point { .. } => "point",
            Light::Env { .. } => "envmap",
        }
    }
}
