//! Corpus construction: material spec bank, light bank, paired and RGB-only
//! dataset builds, and the hybrid mix.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;

use crate::error::{MatError, Result};
use crate::procgen::captions::finish_word;
use crate::procgen::generators::{gen_material, GenParams, GeneratorKind, MaterialSpec};
use crate::render::image::{save_png, ImageF};
use crate::render::light::Light;
use crate::render::primitive::{render_primitive, Camera, PrimitiveShape};
use crate::render::{crop_to_coverage, render_planar, v3};
use crate::rng::{derive_seed, hash_coords, hash_unit, rng_for};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Paired,
    RgbOnly,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapPaths {
    pub basecolor: String,
    pub normal: String,
    pub roughness: String,
    pub metallic: String,
}

impl MapPaths {
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        [
            self.basecolor.as_str(),
            self.normal.as_str(),
            self.roughness.as_str(),
            self.metallic.as_str(),
        ]
        .into_iter()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub material: String,
    pub light: usize,
    /// "planar" or the primitive name.
    pub geometry: String,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub kind: RecordKind,
    /// Path of the RGB render, relative to the dataset root.
    pub rgb: String,
    /// The four map paths; present exactly for paired records.
    pub maps: Option<MapPaths>,
    pub caption: String,
    pub provenance: Provenance,
}

impl SampleRecord {
    pub fn file_count(&self) -> usize {
        1 + if self.maps.is_some() { 4 } else { 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Counts {
    pub paired: usize,
    pub rgb_only: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub global_seed: u64,
    pub counts: Counts,
    pub records: Vec<SampleRecord>,
    /// Ids of samples skipped by the coverage constraint (logged, not fatal).
    #[serde(default)]
    pub skipped: Vec<String>,
}

impl DatasetManifest {
    pub fn empty(seed: u64) -> Self {
        DatasetManifest {
            version: 1,
            global_seed: seed,
            counts: Counts::default(),
            records: Vec::new(),
            skipped: Vec::new(),
        }
    }

    fn recount(&mut self) {
        let mut c = Counts::default();
        for r in &self.records {
            match r.kind {
                RecordKind::Paired => c.paired += 1,
                RecordKind::RgbOnly => c.rgb_only += 1,
            }
        }
        self.counts = c;
    }

    pub fn validate(&self) -> Result<()> {
        let mut c = Counts::default();
        for r in &self.records {
            match (&r.kind, &r.maps) {
                (RecordKind::Paired, Some(_)) => c.paired += 1,
                (RecordKind::RgbOnly, None) => c.rgb_only += 1,
                (k, m) => {
                    return Err(MatError::Contract(format!(
                        "record {} kind {:?} has maps={}",
                        r.id,
                        k,
                        m.is_some()
                    )))
                }
            }
        }
        if c.paired != self.counts.paired || c.rgb_only != self.counts.rgb_only {
            return Err(MatError::Contract(format!(
                "manifest counts {:?} disagree with records ({c:?})",
                self.counts
            )));
        }
        Ok(())
    }

    /// Check that every referenced file exists under `root`.
    pub fn check_files(&self, root: &Path) -> Result<()> {
        for r in &self.records {
            let mut paths: Vec<&str> = vec![&r.rgb];
            if let Some(m) = &r.maps {
                paths.extend(m.iter());
            }
            for p in paths {
                if !root.join(p).exists() {
                    return Err(MatError::MissingPrerequisite(format!(
                        "dataset file {p} (record {})",
                        r.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        if !path.exists() {
            return Err(MatError::MissingPrerequisite(format!(
                "manifest {} not found",
                path.display()
            )));
        }
        let m: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }
}

/// Expected planar pair count for a paired build: one pair per (material,
/// light) combination.
pub fn expected_planar_pairs(n_materials: usize, lights_per_material: usize) -> usize {
    n_materials * lights_per_material
}

const COLOR_PALETTE: &[(&str, [f32; 3])] = &[
    ("red", [0.72, 0.12, 0.10]),
    ("green", [0.12, 0.52, 0.18]),
    ("blue", [0.15, 0.26, 0.68]),
    ("white", [0.92, 0.92, 0.90]),
    ("black", [0.05, 0.05, 0.06]),
    ("gray", [0.50, 0.50, 0.52]),
    ("yellow", [0.86, 0.76, 0.20]),
    ("brown", [0.44, 0.28, 0.15]),
    ("purple", [0.48, 0.20, 0.58]),
];

const METAL_PALETTE: &[(&str, [f32; 3])] = &[
    ("steel", [0.62, 0.64, 0.68]),
    ("copper", [0.88, 0.52, 0.35]),
    ("gold", [0.95, 0.78, 0.34]),
];

/// Deterministic bank of material specs cycling through the five families.
pub fn material_spec_bank(n: usize, seed: u64) -> Vec<MaterialSpec> {
    let families = [
        GeneratorKind::Checker,
        GeneratorKind::Stripes,
        GeneratorKind::Bricks,
        GeneratorKind::FbmBump,
        GeneratorKind::MetalPlate,
    ];
    (0..n)
        .map(|i| {
            let gen = families[i % families.len()];
            let h = |salt: i64| hash_coords(seed, i as i64, salt, 0);
            let metal = gen == GeneratorKind::MetalPlate;
            let (name_a, color_a) = if metal {
                METAL_PALETTE[(h(1) % METAL_PALETTE.len() as u64) as usize]
            } else {
                COLOR_PALETTE[(h(1) % COLOR_PALETTE.len() as u64) as usize]
            };
            let (mut name_b, mut color_b) =
                COLOR_PALETTE[(h(2) % COLOR_PALETTE.len() as u64) as usize];
            if name_b == name_a {
                let alt = (h(2) as usize + 1) % COLOR_PALETTE.len();
                name_b = COLOR_PALETTE[alt].0;
                color_b = COLOR_PALETTE[alt].1;
            }
            let roughness_a = if metal {
                0.15 + hash_unit(h(3)) * 0.3
            } else {
                0.3 + hash_unit(h(3)) * 0.6
            };
            let roughness_b = (roughness_a + 0.2).min(1.0);
            let bump = match gen {
                GeneratorKind::Checker => 0.0,
                GeneratorKind::Stripes => 1.0 + hash_unit(h(4)) * 1.0,
                GeneratorKind::Bricks => 2.0 + hash_unit(h(4)) * 2.0,
                GeneratorKind::FbmBump => 2.0 + hash_unit(h(4)) * 3.0,
                GeneratorKind::MetalPlate => 0.5 + hash_unit(h(4)) * 0.5,
            };
            let scale = 2 + (h(5) % 3) as u32;
            let caption = format!("{} {} {} {}", gen.tag(), name_a, name_b, finish_word(roughness_a));
            MaterialSpec {
                generator: gen,
                params: GenParams {
                    color_a,
                    color_b,
                    scale,
                    bump_height: bump,
                    roughness_a,
                    roughness_b,
                    metallic: if metal { 1.0 } else { 0.0 },
                },
                seed: h(6),
                caption,
            }
        })
        .collect()
}

/// Deterministic environment-light bank: sky gradient plus 1-2 warm lobes,
/// HDR values up to about 4.
pub fn envmap_bank(n: usize, seed: u64) -> Vec<Light> {
    (0..n)
        .map(|id| {
            let h = |salt: i64| hash_coords(seed, id as i64, salt, 1);
            let (rows, cols) = (16usize, 32usize);
            let zenith = [
                0.35 + hash_unit(h(1)) * 0.5,
                0.45 + hash_unit(h(2)) * 0.4,
                0.6 + hash_unit(h(3)) * 0.4,
            ];
            let horizon = [
                0.5 + hash_unit(h(4)) * 0.4,
                0.4 + hash_unit(h(5)) * 0.3,
                0.3 + hash_unit(h(6)) * 0.2,
            ];
            let n_suns = 1 + (h(7) % 2) as usize;
            let suns: Vec<([f32; 3], [f32; 3], f32)> = (0..n_suns)
                .map(|s| {
                    let hs = |salt: i64| hash_coords(seed, (id * 31 + s) as i64, salt, 2);
                    let theta = 0.25 + hash_unit(hs(1)) * 1.0; // keep above horizon
                    let phi = hash_unit(hs(2)) * std::f32::consts::TAU;
                    let dir = [
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ];
                    let intensity = 4.0 + hash_unit(hs(3)) * 6.0;
                    let col = [
                        intensity,
                        intensity * (0.85 + hash_unit(hs(4)) * 0.15),
                        intensity * (0.7 + hash_unit(hs(5)) * 0.25),
                    ];
                    (dir, col, 24.0 + hash_unit(hs(6)) * 40.0)
                })
                .collect();
            let mut map = ImageF::new(rows, cols, 3);
            for i in 0..rows {
                let theta = (i as f32 + 0.5) / rows as f32 * std::f32::consts::PI;
                for j in 0..cols {
                    let phi = (j as f32 + 0.5) / cols as f32 * std::f32::consts::TAU;
                    let d = [
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ];
                    let t = (d[2] * 0.5 + 0.5).clamp(0.0, 1.0);
                    let mut px = [
                        horizon[0] + (zenith[0] - horizon[0]) * t,
                        horizon[1] + (zenith[1] - horizon[1]) * t,
                        horizon[2] + (zenith[2] - horizon[2]) * t,
                    ];
                    for (sd, sc, sharp) in &suns {
                        let cosang = d[0] * sd[0] + d[1] * sd[1] + d[2] * sd[2];
                        let lobe = ((cosang - 1.0) * sharp).exp();
                        px[0] += sc[0] * lobe;
                        px[1] += sc[1] * lobe;
                        px[2] += sc[2] * lobe;
                    }
                    map.px_mut(i, j).copy_from_slice(&px);
                }
            }
            Light::Env { map }
        })
        .collect()
}

/// Deterministic point light for a (material, primitive) render.
fn point_light_for(seed: u64, mat_idx: usize, prim_idx: usize) -> Light {
    let h = |salt: i64| hash_coords(seed, (mat_idx * 17 + prim_idx) as i64, salt, 3);
    let phi = hash_unit(h(1)) * std::f32::consts::TAU;
    let height = 1.5 + hash_unit(h(2)) * 2.0;
    let radius = 2.0 + hash_unit(h(3)) * 1.5;
    let intensity = 18.0 + hash_unit(h(4)) * 18.0;
    Light::Point {
        pos: v3(radius * phi.cos(), height, radius * phi.sin()),
        intensity: [intensity; 3],
    }
}

fn camera_for(shape: &PrimitiveShape, res: usize, seed: u64, mat_idx: usize, prim_idx: usize) -> Camera {
    let mut cam = Camera::default_for(shape, res);
    let h = hash_coords(seed, (mat_idx * 29 + prim_idx) as i64, 9, 4);
    let ang = hash_unit(h) * std::f32::consts::TAU;
    let d = cam.pos.length();
    let y = cam.pos.y;
    let r_xz = (d * d - y * y).sqrt();
    cam.pos = v3(r_xz * ang.cos(), y, r_xz * ang.sin());
    cam
}

#[derive(Clone, Debug)]
pub struct PairedBuildConfig {
    pub n_materials: usize,
    pub lights_per_material: usize,
    pub primitives_per_material: usize,
    pub resolution: usize,
    /// Primitive renders happen at this resolution before cropping.
    pub render_resolution: usize,
    pub min_coverage: f32,
    pub spatial_factor: usize,
}

impl Default for PairedBuildConfig {
    fn default() -> Self {
        PairedBuildConfig {
            n_materials: 64,
            lights_per_material: 4,
            primitives_per_material: 5,
            resolution: 64,
            render_resolution: 96,
            min_coverage: 0.70,
            spatial_factor: 16,
        }
    }
}

/// Build the paired subset: per material, planar renders under each
/// environment light (for decomposition training) and cropped primitive
/// renders (for image-to-material training). Coverage failures are skipped
/// and logged in the manifest.
pub fn build_paired_set(cfg: &PairedBuildConfig, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    if cfg.lights_per_material < 1 {
        return Err(MatError::Config("lights_per_material must be >= 1".into()));
    }
    let specs = material_spec_bank(cfg.n_materials, derive_seed(seed, "materials"));
    let lights = envmap_bank(cfg.lights_per_material, derive_seed(seed, "lights"));
    let mut manifest = DatasetManifest::empty(seed);

    for (mi, spec) in specs.iter().enumerate() {
        let mat_name = format!("m{mi:03}");
        let maps = gen_material(spec, cfg.resolution, cfg.spatial_factor)?;
        let mat_dir = out_dir.join("materials").join(&mat_name);
        maps.save(&mat_dir)?;
        let map_paths = MapPaths {
            basecolor: format!("materials/{mat_name}/basecolor.f32"),
            normal: format!("materials/{mat_name}/normal.f32"),
            roughness: format!("materials/{mat_name}/roughness.f32"),
            metallic: format!("materials/{mat_name}/metallic.f32"),
        };

        for (li, light) in lights.iter().enumerate() {
            let img = render_planar(&maps, light)?;
            let rel = format!("renders/{mat_name}_planar_l{li}.png");
            save_png(&img, &out_dir.join(&rel))?;
            manifest.records.push(SampleRecord {
                id: format!("{mat_name}_planar_l{li}"),
                kind: RecordKind::Paired,
                rgb: rel,
                maps: Some(map_paths.clone()),
                caption: spec.caption.clone(),
                provenance: Provenance {
                    material: mat_name.clone(),
                    light: li,
                    geometry: "planar".to_string(),
                    seed,
                },
            });
        }

        for pi in 0..cfg.primitives_per_material {
            let shape = PrimitiveShape::by_id(pi);
            let cam = camera_for(&shape, cfg.render_resolution, seed, mi, pi);
            let light = point_light_for(seed, mi, pi);
            let (img, mask) = render_primitive(&maps, &shape, &cam, &light)?;
            let id = format!("{mat_name}_prim_p{pi}");
            match crop_to_coverage(&img, &mask, cfg.min_coverage, cfg.resolution) {
                Ok(cropped) => {
                    let rel = format!("renders/{id}.png");
                    save_png(&cropped, &out_dir.join(&rel))?;
                    manifest.records.push(SampleRecord {
                        id: id.clone(),
                        kind: RecordKind::Paired,
                        rgb: rel,
                        maps: Some(map_paths.clone()),
                        caption: spec.caption.clone(),
                        provenance: Provenance {
                            material: mat_name.clone(),
                            light: pi,
                            geometry: shape.name().to_string(),
                            seed,
                        },
                    });
                }
                Err(MatError::CoverageUnsatisfiable { .. }) => {
                    manifest.skipped.push(id);
                }
                Err(e) => return Err(e),
            }
        }
    }
    manifest.recount();
    manifest.validate()?;
    Ok(manifest)
}

/// Build the RGB-only subset: planar renders whose PBR maps are generated
/// transiently and discarded; captions are retained.
pub fn build_rgbonly_set(
    n: usize,
    resolution: usize,
    spatial_factor: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let specs = material_spec_bank(n, derive_seed(seed, "rgbonly-materials"));
    let lights = envmap_bank(n.max(1), derive_seed(seed, "rgbonly-lights"));
    let mut manifest = DatasetManifest::empty(seed);
    for (i, spec) in specs.iter().enumerate() {
        let maps = gen_material(spec, resolution, spatial_factor)?; // discarded after render
        let img = render_planar(&maps, &lights[i % lights.len()])?;
        let rel = format!("renders/rgbonly_{i:03}.png");
        save_png(&img, &out_dir.join(&rel))?;
        manifest.records.push(SampleRecord {
            id: format!("rgbonly_{i:03}"),
            kind: RecordKind::RgbOnly,
            rgb: rel,
            maps: None,
            caption: spec.caption.clone(),
            provenance: Provenance {
                material: format!("rgbonly_{i:03}"),
                light: i % lights.len(),
                geometry: "planar".to_string(),
                seed,
            },
        });
    }
    manifest.recount();
    manifest.validate()?;
    Ok(manifest)
}

/// Interleave the paired corpus with RGB-only records. `rgbonly_fraction` is
/// the target fraction of RGB-only records in the result; the shuffle is a
/// seeded deterministic permutation.
pub fn mix_corpus(
    paired: &DatasetManifest,
    rgbonly: &DatasetManifest,
    rgbonly_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(0.0..1.0).contains(&rgbonly_fraction) {
        return Err(MatError::Config(format!(
            "rgbonly_fraction {rgbonly_fraction} outside [0, 1)"
        )));
    }
    let p = paired.records.len();
    let want_rgb = if rgbonly_fraction == 0.0 {
        0
    } else {
        ((p as f64 * rgbonly_fraction / (1.0 - rgbonly_fraction)).round() as usize)
            .min(rgbonly.records.len())
    };
    let mut records: Vec<SampleRecord> = paired.records.clone();
    records.extend(rgbonly.records.iter().take(want_rgb).cloned());
    let mut rng = rng_for(seed, "mix-corpus");
    records.shuffle(&mut rng);
    let mut out = DatasetManifest::empty(seed);
    out.records = records;
    out.skipped = paired.skipped.clone();
    out.recount();
    out.validate()?;
    Ok(out)
}

/// Resolve a record's RGB path against the dataset root.
pub fn record_rgb_path(root: &Path, rec: &SampleRecord) -> PathBuf {
    root.join(&rec.rgb)
}
