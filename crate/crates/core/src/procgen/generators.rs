//! The five procedural SVBRDF generator families.

use serde::{Deserialize, Serialize};

use crate::error::{MatError, Result};
use crate::procgen::captions;
use crate::procgen::noise::fbm;
use crate::render::image::ImageF;
use crate::render::material::{encode_normal, MaterialMaps};
use crate::render::vec3::v3;
use crate::rng::{hash_coords, hash_unit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Checker,
    Stripes,
    Bricks,
    FbmBump,
    MetalPlate,
}

impl GeneratorKind {
    pub fn parse(name: &str) -> Result<GeneratorKind> {
        match name {
            "checker" => Ok(GeneratorKind::Checker),
            "stripes" => Ok(GeneratorKind::Stripes),
            "bricks" => Ok(GeneratorKind::Bricks),
            "fbm_bump" => Ok(GeneratorKind::FbmBump),
            "metal_plate" => Ok(GeneratorKind::MetalPlate),
            other => Err(MatError::UnknownGenerator(other.to_string())),
        }
    }

    /// Family tag used in captions.
    pub fn tag(&self) -> &'static str {
        match self {
            GeneratorKind::Checker => "checker",
            GeneratorKind::Stripes => "stripes",
            GeneratorKind::Bricks => "bricks",
            GeneratorKind::FbmBump => "bumpy",
            GeneratorKind::MetalPlate => "metal",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GenParams {
    pub color_a: [f32; 3],
    pub color_b: [f32; 3],
    /// Cells / stripes / bricks / plates per axis, or noise base frequency.
    pub scale: u32,
    /// Strength of the height-to-normal conversion; 0 gives flat normals.
    pub bump_height: f32,
    pub roughness_a: f32,
    pub roughness_b: f32,
    pub metallic: f32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub generator: GeneratorKind,
    pub params: GenParams,
    pub seed: u64,
    pub caption: String,
}

struct Texel {
    color: [f32; 3],
    height: f32,
    roughness: f32,
    metallic: f32,
}

fn lerp3(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn texel(spec: &MaterialSpec, u: f32, v: f32) -> Texel {
    let p = &spec.params;
    let s = p.scale.max(1);
    match spec.generator {
        GeneratorKind::Checker => {
            let cx = (u * s as f32).floor() as i64;
            let cy = (v * s as f32).floor() as i64;
            let a_cell = (cx + cy).rem_euclid(2) == 0;
            Texel {
                color: if a_cell { p.color_a } else { p.color_b },
                height: if a_cell { 1.0 } else { 0.0 },
                roughness: if a_cell { p.roughness_a } else { p.roughness_b },
                metallic: p.metallic,
            }
        }
        GeneratorKind::Stripes => {
            let idx = (u * s as f32).floor() as i64;
            let a_stripe = idx.rem_euclid(2) == 0;
            let ridge = (u * s as f32 * std::f32::consts::TAU).sin() * 0.5 + 0.5;
            Texel {
                color: if a_stripe { p.color_a } else { p.color_b },
                height: ridge,
                roughness: if a_stripe { p.roughness_a } else { p.roughness_b },
                metallic: p.metallic,
            }
        }
        GeneratorKind::Bricks => {
            let rows = s.max(2);
            let cols = rows; // square-ish layout, offset every other row
            let fy = v * rows as f32;
            let row = fy.floor() as i64;
            let offset = if row.rem_euclid(2) == 0 { 0.0 } else { 0.5 };
            let fx = u * cols as f32 + offset;
            let col = fx.floor() as i64;
            let (bx, by) = (fx - fx.floor(), fy - fy.floor());
            let mortar = 0.08;
            let in_brick = bx > mortar && by > mortar;
            let jitter = hash_unit(hash_coords(spec.seed, col, row, 7)) * 0.25 - 0.125;
            Texel {
                color: if in_brick {
                    [
                        (p.color_a[0] + jitter).clamp(0.0, 1.0),
                        (p.color_a[1] + jitter * 0.6).clamp(0.0, 1.0),
                        (p.color_a[2] + jitter * 0.4).clamp(0.0, 1.0),
                    ]
                } else {
                    p.color_b
                },
                height: if in_brick { 1.0 } else { 0.0 },
                roughness: if in_brick { p.roughness_a } else { p.roughness_b },
                metallic: p.metallic,
            }
        }
        GeneratorKind::FbmBump => {
            let h = fbm(u, v, s, 4, 11, spec.seed);
            let c = fbm(u, v, s, 3, 23, spec.seed);
            let r = fbm(u, v, s * 2, 2, 37, spec.seed);
            Texel {
                color: lerp3(p.color_a, p.color_b, c),
                height: h,
                roughness: p.roughness_a + (p.roughness_b - p.roughness_a) * r,
                metallic: p.metallic,
            }
        }
        GeneratorKind::MetalPlate => {
            let fx = u * s as f32;
            let fy = v * s as f32;
            let (px, py) = (fx.floor() as i64, fy.floor() as i64);
            let (bx, by) = (fx - fx.floor(), fy - fy.floor());
            let seam = 0.05;
            let in_plate = bx > seam && by > seam;
            // brushed streaks: noise stretched along u
            let streak = fbm(u * 6.0 % 1.0, v, s.max(2) * 4, 2, 53, spec.seed);
            let tint = hash_unit(hash_coords(spec.seed, px, py, 13)) * 0.12 - 0.06;
            Texel {
                color: if in_plate {
                    [
                        (p.color_a[0] + tint).clamp(0.0, 1.0),
                        (p.color_a[1] + tint).clamp(0.0, 1.0),
                        (p.color_a[2] + tint).clamp(0.0, 1.0),
                    ]
                } else {
                    p.color_b
                },
                height: if in_plate { 1.0 } else { 0.0 },
                roughness: (p.roughness_a + streak * 0.15).clamp(0.0, 1.0),
                metallic: p.metallic,
            }
        }
    }
}

/// Generate the four maps for a spec. Deterministic: the same spec produces
/// bitwise-identical maps. Normals come from the generator's height field by
/// central differences (wrap addressing), then tangent-space encoding.
pub fn gen_material(spec: &MaterialSpec, resolution: usize, spatial_factor: usize) -> Result<MaterialMaps> {
    if resolution < 8 {
        return Err(MatError::Contract(format!("resolution {resolution} below 8")));
    }
    if spatial_factor > 1 && resolution % spatial_factor != 0 {
        return Err(MatError::Contract(format!(
            "resolution {resolution} not a multiple of spatial factor {spatial_factor}"
        )));
    }
    captions::tokenize(&spec.caption)?;
    let n = resolution;
    let mut basecolor = ImageF::new(n, n, 3);
    let mut normal = ImageF::new(n, n, 3);
    let mut roughness = ImageF::new(n, n, 1);
    let mut metallic = ImageF::new(n, n, 1);
    let mut height = vec![0.0f32; n * n];

    for y in 0..n {
        for x in 0..n {
            let u = (x as f32 + 0.5) / n as f32;
            let v = (y as f32 + 0.5) / n as f32;
            let t = texel(spec, u, v);
            basecolor.px_mut(y, x).copy_from_slice(&[
                t.color[0].clamp(0.0, 1.0),
                t.color[1].clamp(0.0, 1.0),
                t.color[2].clamp(0.0, 1.0),
            ]);
            roughness.px_mut(y, x)[0] = t.roughness.clamp(0.0, 1.0);
            metallic.px_mut(y, x)[0] = t.metallic.clamp(0.0, 1.0);
            height[y * n + x] = t.height;
        }
    }

    let k = spec.params.bump_height;
    for y in 0..n {
        for x in 0..n {
            let nm = if k == 0.0 {
                v3(0.0, 0.0, 1.0)
            } else {
                let xm = height[y * n + (x + n - 1) % n];
                let xp = height[y * n + (x + 1) % n];
                let ym = height[((y + n - 1) % n) * n + x];
                let yp = height[((y + 1) % n) * n + x];
                v3(-(xp - xm) * 0.5 * k, -(yp - ym) * 0.5 * k, 1.0).normalized()
            };
            normal.px_mut(y, x).copy_from_slice(&encode_normal(nm));
        }
    }

    let maps = MaterialMaps {
        basecolor,
        normal,
        roughness,
        metallic,
    };
    maps.validate(spatial_factor.max(1))?;
    Ok(maps)
}
