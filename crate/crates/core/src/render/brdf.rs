//! Cook-Torrance microfacet shading: GGX distribution, height-correlated
//! Smith visibility, Schlick Fresnel, metallic workflow with dielectric
//! F0 = 0.04 and diffuse = (1-m)(1-F_avg) * albedo / pi.

use crate::error::{MatError, Result};
use crate::render::vec3::Vec3;

use std::f32::consts::PI;

/// Lower clamp on alpha = roughness^2; keeps the GGX lobe representable at
/// r -> 0 without blowing up the distribution term.
pub const MIN_ALPHA: f32 = 1e-3;

/// GGX normal distribution D(n.h) for width alpha.
pub fn ggx_d(n_dot_h: f32, alpha: f32) -> f32 {
    if n_dot_h <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let t = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    a2 / (PI * t * t)
}

/// Height-correlated Smith visibility term; the 4 (n.l)(n.v) denominator of
/// the specular BRDF is folded in.
pub fn smith_v(n_dot_v: f32, n_dot_l: f32, alpha: f32) -> f32 {
    let a2 = alpha * alpha;
    let lv = n_dot_l * (n_dot_v * n_dot_v * (1.0 - a2) + a2).sqrt();
    let ll = n_dot_v * (n_dot_l * n_dot_l * (1.0 - a2) + a2).sqrt();
    0.5 / (lv + ll).max(1e-8)
}

/// Schlick Fresnel per channel.
pub fn fresnel_schlick(f0: [f32; 3], h_dot_v: f32) -> [f32; 3] {
    let p = (1.0 - h_dot_v).clamp(0.0, 1.0).powi(5);
    [
        f0[0] + (1.0 - f0[0]) * p,
        f0[1] + (1.0 - f0[1]) * p,
        f0[2] + (1.0 - f0[2]) * p,
    ]
}

/// Per-pixel material inputs to [`shade`]; `normal` is the unit shading
/// normal in the same frame as `view`/`light` directions.
#[derive(Clone, Copy, Debug)]
pub struct ShadePoint {
    pub basecolor: [f32; 3],
    pub normal: Vec3,
    pub roughness: f32,
    pub metallic: f32,
}

/// Evaluate the BRDF under one light direction.
///
/// `view` and `light` point away from the surface; `radiance` is the incident
/// radiance along `light`. Returns (diffuse, specular) contributions, both
/// zero when the light is below the horizon. Inputs must be unit vectors
/// within 1e-3.
pub fn shade(p: &ShadePoint, view: Vec3, light: Vec3, radiance: [f32; 3]) -> Result<([f32; 3], [f32; 3])> {
    for (v, name) in [(view, "view"), (light, "light"), (p.normal, "normal")] {
        if !v.is_unit(1e-3) {
            return Err(MatError::Contract(format!(
                "shade: {name} vector not unit length (|v| = {})",
                v.length()
            )));
        }
    }
    let n = p.normal;
    let n_dot_l = n.dot(light);
    let n_dot_v = n.dot(view);
    if n_dot_l <= 0.0 || n_dot_v <= 0.0 {
        return Ok(([0.0; 3], [0.0; 3]));
    }
    let alpha = (p.roughness * p.roughness).max(MIN_ALPHA);
    let h = (view + light).normalized();
    let n_dot_h = n.dot(h).clamp(0.0, 1.0);
    let h_dot_v = h.dot(view).clamp(0.0, 1.0);

    let m = p.metallic;
    let f0 = [
        0.04 + (p.basecolor[0] - 0.04) * m,
        0.04 + (p.basecolor[1] - 0.04) * m,
        0.04 + (p.basecolor[2] - 0.04) * m,
    ];
    let f = fresnel_schlick(f0, h_dot_v);
    let f_avg = (f[0] + f[1] + f[2]) / 3.0;
    let d = ggx_d(n_dot_h, alpha);
    let vis = smith_v(n_dot_v, n_dot_l, alpha);

    let spec_scale = d * vis * n_dot_l;
    let specular = [
        spec_scale * f[0] * radiance[0],
        spec_scale * f[1] * radiance[1],
        spec_scale * f[2] * radiance[2],
    ];
    let diff_scale = (1.0 - m) * (1.0 - f_avg) * n_dot_l / PI;
    let diffuse = [
        diff_scale * p.basecolor[0] * radiance[0],
        diff_scale * p.basecolor[1] * radiance[1],
        diff_scale * p.basecolor[2] * radiance[2],
    ];
    Ok((diffuse, specular))
}
