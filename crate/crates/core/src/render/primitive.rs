//! Analytic primitives rendered by deterministic SDF ray marching, with
//! per-shape UV parameterizations and tangent frames.

use crate::error::{MatError, Result};
use crate::render::brdf::{shade, ShadePoint};
use crate::render::image::{tonemap, ImageF};
use crate::render::light::Light;
use crate::render::material::{decode_normal, MaterialMaps};
use crate::render::vec3::{v3, Vec3};

use std::f32::consts::PI;

#[derive(Clone, Copy, Debug)]
pub enum PrimitiveShape {
    Cube { half: f32 },
    Sphere { radius: f32 },
    Cylinder { radius: f32, half_h: f32 },
    Cone { radius: f32, half_h: f32 },
    Torus { major: f32, minor: f32 },
}

pub const PRIMITIVE_KINDS: [&str; 5] = ["cube", "sphere", "cylinder", "cone", "torus"];

impl PrimitiveShape {
    /// The five default shapes, indexed by id, all roughly unit-sized.
    pub fn by_id(id: usize) -> PrimitiveShape {
        match id % 5 {
            0 => PrimitiveShape::Cube { half: 0.8 },
            1 => PrimitiveShape::Sphere { radius: 1.0 },
            2 => PrimitiveShape::Cylinder {
                radius: 0.7,
                half_h: 0.9,
            },
            3 => PrimitiveShape::Cone {
                radius: 0.9,
                half_h: 0.9,
            },
            _ => PrimitiveShape::Torus {
                major: 0.75,
                minor: 0.35,
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveShape::Cube { .. } => "cube",
            PrimitiveShape::Sphere { .. } => "sphere",
            PrimitiveShape::Cylinder { .. } => "cylinder",
            PrimitiveShape::Cone { .. } => "cone",
            PrimitiveShape::Torus { .. } => "torus",
        }
    }

    /// Radius of a bounding sphere centered at the origin.
    pub fn bounding_radius(&self) -> f32 {
        match *self {
            PrimitiveShape::Cube { half } => half * 3f32.sqrt(),
            PrimitiveShape::Sphere { radius } => radius,
            PrimitiveShape::Cylinder { radius, half_h } => (radius * radius + half_h * half_h).sqrt(),
            PrimitiveShape::Cone { radius, half_h } => (radius * radius + half_h * half_h).sqrt(),
            PrimitiveShape::Torus { major, minor } => major + minor,
        }
    }

    pub fn sdf(&self, p: Vec3) -> f32 {
        match *self {
            PrimitiveShape::Sphere { radius } => p.length() - radius,
            PrimitiveShape::Cube { half } => {
                let q = p.abs() - v3(half, half, half);
                let outside = v3(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).length();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            PrimitiveShape::Cylinder { radius, half_h } => {
                let dxz = (p.x * p.x + p.z * p.z).sqrt() - radius;
                let dy = p.y.abs() - half_h;
                let outside = (dxz.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
                outside + dxz.max(dy).min(0.0)
            }
            PrimitiveShape::Cone { radius, half_h } => {
                // capped cone: apex at +half_h, base radius at -half_h
                let q = (p.x * p.x + p.z * p.z).sqrt();
                // side plane through (0, half_h) and (radius, -half_h)
                let side = (q * 2.0 * half_h + (p.y - half_h) * radius)
                    / (radius * radius + 4.0 * half_h * half_h).sqrt();
                let base = -half_h - p.y;
                side.max(base)
            }
            PrimitiveShape::Torus { major, minor } => {
                let qx = (p.x * p.x + p.z * p.z).sqrt() - major;
                (qx * qx + p.y * p.y).sqrt() - minor
            }
        }
    }

    fn normal(&self, p: Vec3) -> Vec3 {
        let e = 1e-4;
        let d = |q: Vec3| self.sdf(q);
        v3(
            d(p + v3(e, 0.0, 0.0)) - d(p - v3(e, 0.0, 0.0)),
            d(p + v3(0.0, e, 0.0)) - d(p - v3(0.0, e, 0.0)),
            d(p + v3(0.0, 0.0, e)) - d(p - v3(0.0, 0.0, e)),
        )
        .normalized()
    }

    /// UV in [0,1]^2 plus the world-space direction of increasing u.
    fn uv_tangent(&self, p: Vec3) -> ([f32; 2], Vec3) {
        let angular = |x: f32, z: f32| -> (f32, Vec3) {
            let phi = z.atan2(x);
            let u = phi / (2.0 * PI) + 0.5;
            (u, v3(-phi.sin(), 0.0, phi.cos()))
        };
        match *self {
            PrimitiveShape::Sphere { radius } => {
                let (u, tu) = angular(p.x, p.z);
                let vv = (p.y / radius).clamp(-1.0, 1.0).acos() / PI;
                ([u, vv], tu)
            }
            PrimitiveShape::Cube { half } => {
                let a = p.abs();
                let m = |c: f32| (c / (2.0 * half) + 0.5).clamp(0.0, 1.0);
                if a.x >= a.y && a.x >= a.z {
                    ([m(p.z * p.x.signum()), m(p.y)], v3(0.0, 0.0, p.x.signum()))
                } else if a.y >= a.x && a.y >= a.z {
                    ([m(p.x), m(p.z * p.y.signum())], v3(1.0, 0.0, 0.0))
                } else {
                    ([m(p.x * -p.z.signum()), m(p.y)], v3(-p.z.signum(), 0.0, 0.0))
                }
            }
            PrimitiveShape::Cylinder { radius, half_h } => {
                let side = (p.x * p.x + p.z * p.z).sqrt() - radius;
                if p.y.abs() > half_h - 1e-3 && side < -1e-3 {
                    // caps: planar projection
                    let m = |c: f32| (c / (2.0 * radius) + 0.5).clamp(0.0, 1.0);
                    ([m(p.x), m(p.z)], v3(1.0, 0.0, 0.0))
                } else {
                    let (u, tu) = angular(p.x, p.z);
                    ([u, (p.y / (2.0 * half_h) + 0.5).clamp(0.0, 1.0)], tu)
                }
            }
            PrimitiveShape::Cone { radius, half_h } => {
                if p.y < -half_h + 1e-3 {
                    let m = |c: f32| (c / (2.0 * radius) + 0.5).clamp(0.0, 1.0);
                    ([m(p.x), m(p.z)], v3(1.0, 0.0, 0.0))
                } else {
                    let (u, tu) = angular(p.x, p.z);
                    ([u, (p.y / (2.0 * half_h) + 0.5).clamp(0.0, 1.0)], tu)
                }
            }
            PrimitiveShape::Torus { .. } => {
                let (u, tu) = angular(p.x, p.z);
                let qx = (p.x * p.x + p.z * p.z).sqrt();
                let vv = p.y.atan2(qx - self.major_radius()) / (2.0 * PI) + 0.5;
                ([u, vv], tu)
            }
        }
    }

    fn major_radius(&self) -> f32 {
        match *self {
            PrimitiveShape::Torus { major, .. } => major,
            _ => 0.0,
        }
    }
}

/// Pinhole camera with vertical FOV in degrees.
#[derive(Clone, Copy, Debug)]
pub struct Camera {
    pub pos: Vec3,
    pub look_at: Vec3,
    pub fov_deg: f32,
    pub res: (usize, usize),
}

impl Camera {
    pub fn validate(&self, shape: Option<&PrimitiveShape>) -> Result<()> {
        if !(self.fov_deg > 10.0 && self.fov_deg < 120.0) {
            return Err(MatError::Contract(format!(
                "camera FOV {} outside (10, 120)",
                self.fov_deg
            )));
        }
        if let Some(s) = shape {
            if s.sdf(self.pos) <= 0.0 {
                return Err(MatError::Contract("camera inside the primitive".into()));
            }
        }
        Ok(())
    }

    fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let fwd = (self.look_at - self.pos).normalized();
        let up_hint = if fwd.y.abs() > 0.99 {
            v3(0.0, 0.0, 1.0)
        } else {
            v3(0.0, 1.0, 0.0)
        };
        let right = fwd.cross(up_hint).normalized();
        let up = right.cross(fwd);
        (right, up, fwd)
    }

    pub fn ray(&self, y: usize, x: usize) -> (Vec3, Vec3) {
        let (w, h) = (self.res.0 as f32, self.res.1 as f32);
        let aspect = w / h;
        let tan_half = (self.fov_deg.to_radians() / 2.0).tan();
        let px = ((x as f32 + 0.5) / w * 2.0 - 1.0) * tan_half * aspect;
        let py = (1.0 - (y as f32 + 0.5) / h * 2.0) * tan_half;
        let (right, up, fwd) = self.basis();
        let dir = (fwd + right * px + up * py).normalized();
        (self.pos, dir)
    }

    /// Default view of a shape: distance chosen so the bounding sphere
    /// slightly overfills the frame, guaranteeing coverage of at least the
    /// inscribed disk (pi/4 of the frame) for convex silhouettes.
    pub fn default_for(shape: &PrimitiveShape, res: usize) -> Camera {
        let fov = 50.0f32;
        let r = shape.bounding_radius();
        let dist = r / (fov.to_radians() / 2.0).sin() * 0.9;
        Camera {
            pos: v3(0.0, 0.35 * dist, dist).normalized() * dist,
            look_at: Vec3::ZERO,
            fov_deg: fov,
            res: (res, res),
        }
    }
}

const MARCH_STEPS: usize = 256;
const HIT_EPS: f32 = 1e-4;

fn march(shape: &PrimitiveShape, origin: Vec3, dir: Vec3, t_max: f32) -> Option<(f32, Vec3)> {
    let mut t = 0.0f32;
    for _ in 0..MARCH_STEPS {
        let p = origin + dir * t;
        let d = shape.sdf(p);
        if d < HIT_EPS {
            return Some((t, p));
        }
        t += d.max(HIT_EPS);
        if t > t_max {
            return None;
        }
    }
    None
}

/// Ray-march the primitive and shade it with the material wrapped by the
/// shape's UV mapping. Returns the tone-mapped image and the hit mask.
pub fn render_primitive(
    mat: &MaterialMaps,
    shape: &PrimitiveShape,
    camera: &Camera,
    light: &Light,
) -> Result<(ImageF, ImageF)> {
    camera.validate(Some(shape))?;
    light.validate()?;
    let (w, h) = camera.res;
    let mut img = ImageF::new(h, w, 3);
    let mut mask = ImageF::new(h, w, 1);
    let t_max = (camera.pos.length() + shape.bounding_radius()) * 2.0;
    let mut gathered = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (origin, dir) = camera.ray(y, x);
            let Some((_, p)) = march(shape, origin, dir, t_max) else {
                continue;
            };
            mask.px_mut(y, x)[0] = 1.0;
            let n_geom = shape.normal(p);
            let ([u, v], tu) = shape.uv_tangent(p);
            // orthonormal TBN from the UV tangent
            let t_ortho = (tu - n_geom * n_geom.dot(tu)).normalized();
            let t_frame = if t_ortho.length() > 0.5 {
                t_ortho
            } else {
                // degenerate tangent (poles); any perpendicular works
                n_geom.cross(v3(0.0, 1.0, 0.0)).normalized()
            };
            let b_frame = n_geom.cross(t_frame);
            let s = mat.sample(u, v);
            let n_ts = decode_normal(s.normal_rgb)?;
            let n_shading =
                (t_frame * n_ts.x + b_frame * n_ts.y + n_geom * n_ts.z).normalized();
            let point = ShadePoint {
                basecolor: s.basecolor,
                normal: n_shading,
                roughness: s.roughness,
                metallic: s.metallic,
            };
            let view = -dir;
            light.gather(p, &mut gathered);
            let mut acc = [0.0f32; 3];
            for &(l, e) in &gathered {
                // skip lights occluded by the horizon of the shading normal
                if n_shading.dot(l) <= 0.0 || n_geom.dot(l) <= 0.0 {
                    continue;
                }
                let (diffuse, specular) = shade(&point, view, l, e)?;
                for ch in 0..3 {
                    acc[ch] += diffuse[ch] + specular[ch];
                }
            }
            img.px_mut(y, x).copy_from_slice(&tonemap(acc));
        }
    }
    Ok((img, mask))
}
