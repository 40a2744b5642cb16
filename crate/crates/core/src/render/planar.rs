//! Planar (flat quad, orthographic top-down) rendering of a material.

use crate::error::Result;
use crate::render::brdf::{shade, ShadePoint};
use crate::render::image::{tonemap, ImageF};
use crate::render::light::Light;
use crate::render::material::{decode_normal, MaterialMaps};
use crate::render::vec3::v3;

/// Render a material as a flat surface seen orthographically from above.
///
/// The surface spans [0,1]^2 at z = 0 with its tangent frame equal to the
/// world frame, so decoded map normals are used directly. Output is the
/// LDR tone-mapped image (clamp + sRGB), same resolution as the maps.
/// Deterministic: environment light integration is a solid-angle-weighted
/// texel sum.
pub fn render_planar(mat: &MaterialMaps, light: &Light) -> Result<ImageF> {
    light.validate()?;
    let (h, w) = mat.resolution();
    let view = v3(0.0, 0.0, 1.0);
    let mut out = ImageF::new(h, w, 3);
    let mut gathered = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let t = mat.texel(y, x);
            let point = ShadePoint {
                basecolor: t.basecolor,
                normal: decode_normal(t.normal_rgb)?,
                roughness: t.roughness,
                metallic: t.metallic,
            };
            // surface position in world units (plane is 1x1)
            let p = v3(
                (x as f32 + 0.5) / w as f32,
                (y as f32 + 0.5) / h as f32,
                0.0,
            );
            light.gather(p, &mut gathered);
            let mut acc = [0.0f32; 3];
            for &(l, e) in &gathered {
                let (diffuse, specular) = shade(&point, view, l, e)?;
                for ch in 0..3 {
                    acc[ch] += diffuse[ch] + specular[ch];
                }
            }
            out.px_mut(y, x).copy_from_slice(&tonemap(acc));
        }
    }
    Ok(out)
}
