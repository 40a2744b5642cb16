//! Physically-based shading of SVBRDF map sets under point, directional, and
//! environment lighting; planar and primitive-distorted renders.

pub mod brdf;
pub mod crop;
pub mod image;
pub mod light;
pub mod material;
pub mod planar;
pub mod primitive;
pub mod vec3;

pub use brdf::{shade, ShadePoint};
pub use crop::crop_to_coverage;
pub use image::{load_f32, load_png, save_f32, save_png, srgb_decode, srgb_encode, tonemap, ImageF};
pub use light::Light;
pub use material::{decode_normal, encode_normal, MaterialMaps, TexelSample};
pub use planar::render_planar;
pub use primitive::{render_primitive, Camera, PrimitiveShape, PRIMITIVE_KINDS};
pub use vec3::{v3, Vec3};
