//! Procedural corpus generation: ground-truth PBR material sets with text
//! tags, paired and RGB-only rendered subsets, and the hybrid mix.

pub mod captions;
pub mod dataset;
pub mod generators;
pub mod noise;

pub use captions::{tag_id, tokenize, vocab_size, VOCAB};
pub use dataset::{
    build_paired_set, build_rgbonly_set, envmap_bank, expected_planar_pairs, material_spec_bank,
    mix_corpus, Counts, DatasetManifest, MapPaths, PairedBuildConfig, Provenance, RecordKind,
    SampleRecord,
};
pub use generators::{gen_material, GenParams, GeneratorKind, MaterialSpec};
