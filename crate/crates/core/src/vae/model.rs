//! Joint RGB-PBR 3D causal VAE.
//!
//! The RGB frame is encoded by a spatial-only branch; the four PBR frames go
//! through a branch that consumes the RGB branch's cached activations at every
//! resolution level and collapses its 4 frames into one latent frame with a
//! full-stride temporal conv, reproducing the 1 + T/4 latent schedule at T=4.
//! Decoding mirrors this: the RGB decoder runs alone from z_rgb; the PBR
//! decoder consumes the RGB decoder's cached activations plus z_pbr.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MatError, Result};
use crate::render::image::ImageF;
use crate::render::material::MaterialMaps;
use crate::tensor::{Graph, NodeId, ParamStore, Scalar, Tensor};
use crate::vae::pack::FrameSequence;

pub const PBR_FRAMES: usize = 4;
const GN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    /// Spatial downsampling factor (a power of two; 16 reproduces the
    /// reference schedule).
    pub spatial_factor: usize,
    pub latent_channels: usize,
    /// Encoder widths per level, coarse count = log2(spatial_factor).
    pub enc_widths: Vec<usize>,
    /// RGB decoder widths: entry 0 at the latent resolution, then one per
    /// upsampling stage.
    pub dec_widths: Vec<usize>,
    /// PBR decoder widths, same layout as `dec_widths`.
    pub dec_pbr_widths: Vec<usize>,
    pub groups: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            spatial_factor: 16,
            latent_channels: 4,
            enc_widths: vec![16, 24, 32, 48],
            dec_widths: vec![48, 32, 24, 16, 16],
            dec_pbr_widths: vec![48, 32, 16, 12, 8],
            groups: 8,
        }
    }
}

impl VaeConfig {
    pub fn levels(&self) -> usize {
        self.spatial_factor.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !self.spatial_factor.is_power_of_two() || self.spatial_factor < 2 {
            return Err(MatError::Config(format!(
                "spatial_factor {} must be a power of two >= 2",
                self.spatial_factor
            )));
        }
        if self.enc_widths.len() != self.levels() {
            return Err(MatError::Config(format!(
                "enc_widths needs {} entries, got {}",
                self.levels(),
                self.enc_widths.len()
            )));
        }
        for (name, widths, want) in [
            ("dec_widths", &self.dec_widths, self.levels() + 1),
            ("dec_pbr_widths", &self.dec_pbr_widths, self.levels() + 1),
        ] {
            if widths.len() != want {
                return Err(MatError::Config(format!(
                    "{name} needs {want} entries, got {}",
                    widths.len()
                )));
            }
        }
        for &w in self
            .enc_widths
            .iter()
            .chain(&self.dec_widths)
            .chain(&self.dec_pbr_widths)
        {
            if w % self.gn_groups(w) != 0 {
                return Err(MatError::Config(format!("width {w} not groupable")));
            }
        }
        Ok(())
    }

    /// Group count for a channel width: the configured number when it
    /// divides, otherwise the largest divisor not exceeding it.
    pub fn gn_groups(&self, channels: usize) -> usize {
        let mut g = self.groups.min(channels).max(1);
        while channels % g != 0 {
            g -= 1;
        }
        g
    }
}

/// Two interdependent latents. Each is one [Cz, 1, h, w] latent frame; the
/// pair is the full 1 + T/4 = 2 frame latent of the 5-frame sequence.
#[derive(Clone, Debug)]
pub struct LatentPair {
    pub z_rgb: Tensor<f32>,
    pub z_pbr: Tensor<f32>,
    /// (mu, logvar) per branch, retained when encoding in training mode.
    pub moments: Option<LatentMoments>,
}

#[derive(Clone, Debug)]
pub struct LatentMoments {
    pub mu_rgb: Tensor<f32>,
    pub logvar_rgb: Tensor<f32>,
    pub mu_pbr: Tensor<f32>,
    pub logvar_pbr: Tensor<f32>,
}

#[derive(Clone, Copy, Debug)]
pub enum SampleMode {
    /// Deterministic: z = mu.
    Mean,
    /// Reparameterized draw with this seed.
    Sample(u64),
}

pub struct VaeModel {
    pub cfg: VaeConfig,
    pub params: ParamStore<f32>,
}

/// Create all parameters of the VAE under the "vae." prefix.
pub fn init_params<S: Scalar>(cfg: &VaeConfig, rng: &mut ChaCha8Rng) -> ParamStore<S> {
    let mut p = ParamStore::new();
    let cz = cfg.latent_channels;
    let conv = |p: &mut ParamStore<S>, name: &str, co: usize, ci: usize, kt: usize, k: usize, rng: &mut ChaCha8Rng| {
        p.init_uniform(&format!("{name}.conv.w"), &[co, ci, kt, k, k], ci * kt * k * k, rng);
        p.init_zeros(&format!("{name}.conv.b"), &[co]);
    };
    let gn = |p: &mut ParamStore<S>, name: &str, c: usize| {
        p.init_full(&format!("{name}.gn.g"), &[c], 1.0);
        p.init_zeros(&format!("{name}.gn.b"), &[c]);
    };
    // moment heads: first Cz channels mu (bias 0), last Cz logvar (bias -4)
    let head = |p: &mut ParamStore<S>, name: &str, ci: usize, rng: &mut ChaCha8Rng| {
        p.init_uniform(&format!("{name}.w"), &[2 * cz, ci, 1, 1, 1], ci, rng);
        let mut bias = vec![0.0f64; 2 * cz];
        for b in bias.iter_mut().skip(cz) {
            *b = -4.0;
        }
        p.insert(
            &format!("{name}.b"),
            Tensor::from_f64_slice(&[2 * cz], &bias).unwrap(),
        );
    };

    // RGB encoder
    let mut ci = 3;
    for (i, &co) in cfg.enc_widths.iter().enumerate() {
        conv(&mut p, &format!("vae.enc.rgb.l{i}"), co, ci, 1, 3, rng);
        gn(&mut p, &format!("vae.enc.rgb.l{i}"), co);
        ci = co;
    }
    head(&mut p, "vae.enc.rgb.head", ci, rng);

    // PBR encoder: input at level i is previous output concat the RGB tap
    let mut ci = 3;
    for (i, &co) in cfg.enc_widths.iter().enumerate() {
        let kt = enc_pbr_kt(i);
        conv(&mut p, &format!("vae.enc.pbr.l{i}"), co, ci, kt, 3, rng);
        gn(&mut p, &format!("vae.enc.pbr.l{i}"), co);
        ci = co + cfg.enc_widths[i]; // concat with the RGB tap of this level
    }
    let merge_w = *cfg.enc_widths.last().unwrap();
    conv(&mut p, "vae.enc.pbr.merge", merge_w, ci, PBR_FRAMES, 1, rng);
    gn(&mut p, "vae.enc.pbr.merge", merge_w);
    head(&mut p, "vae.enc.pbr.head", merge_w, rng);

    // RGB decoder
    let mut ci = cz;
    for (i, &co) in cfg.dec_widths.iter().enumerate() {
        conv(&mut p, &format!("vae.dec.rgb.l{i}"), co, ci, 1, 3, rng);
        gn(&mut p, &format!("vae.dec.rgb.l{i}"), co);
        ci = co;
    }
    conv(&mut p, "vae.dec.rgb.head", 3, ci, 1, 3, rng);

    // PBR decoder: input at stage i is previous output concat the RGB
    // decoder tap of that stage
    let mut ci = cz;
    for (i, &co) in cfg.dec_pbr_widths.iter().enumerate() {
        let kt = dec_pbr_kt(i);
        conv(
            &mut p,
            &format!("vae.dec.pbr.l{i}"),
            co,
            ci + cfg.dec_widths[i],
            kt,
            3,
            rng,
        );
        gn(&mut p, &format!("vae.dec.pbr.l{i}"), co);
        ci = co;
    }
    conv(&mut p, "vae.dec.pbr.head", 3, ci, 1, 3, rng);
    p
}

/// Temporal kernel schedule of the PBR encoder: per-frame convs at the two
/// finest levels, causal kt=2 once features are small.
fn enc_pbr_kt(level: usize) -> usize {
    if level >= 2 {
        2
    } else {
        1
    }
}

fn dec_pbr_kt(stage: usize) -> usize {
    if stage <= 1 {
        2
    } else {
        1
    }
}

/// Graph-building forward passes, generic over dtype so gradient-check
/// oracles can run the same code in f64.
pub struct VaeForward<'a, S: Scalar> {
    pub cfg: &'a VaeConfig,
    pub params: &'a ParamStore<S>,
}

pub struct EncodeOut {
    pub mu_rgb: NodeId,
    pub logvar_rgb: NodeId,
    pub mu_pbr: NodeId,
    pub logvar_pbr: NodeId,
}

impl<'a, S: Scalar> VaeForward<'a, S> {
    pub fn new(cfg: &'a VaeConfig, params: &'a ParamStore<S>) -> Self {
        VaeForward { cfg, params }
    }

    fn block(
        &self,
        g: &mut Graph<S>,
        name: &str,
        x: NodeId,
        stride: (usize, usize, usize),
        causal: bool,
    ) -> Result<NodeId> {
        let w = g.param(self.params, &format!("{name}.conv.w"))?;
        let b = g.param(self.params, &format!("{name}.conv.b"))?;
        let h = if causal {
            g.conv3d_causal(x, w, Some(b), stride)?
        } else {
            g.conv3d_merge(x, w, Some(b), stride)?
        };
        let gamma = g.param(self.params, &format!("{name}.gn.g"))?;
        let beta = g.param(self.params, &format!("{name}.gn.b"))?;
        let c = g.shape(h)[0];
        let h = g.group_norm(h, gamma, beta, self.cfg.gn_groups(c), GN_EPS)?;
        Ok(g.silu(h))
    }

    /// RGB branch: returns the moment head plus the per-level activation
    /// taps that the PBR branch consumes.
    pub fn encode_rgb(&self, g: &mut Graph<S>, rgb: NodeId) -> Result<(NodeId, NodeId, Vec<NodeId>)> {
        let mut taps = Vec::with_capacity(self.cfg.levels());
        let mut h = rgb;
        for i in 0..self.cfg.levels() {
            h = self.block(g, &format!("vae.enc.rgb.l{i}"), h, (1, 2, 2), true)?;
            taps.push(h);
        }
        let (mu, logvar) = self.moment_head(g, "vae.enc.rgb.head", h)?;
        Ok((mu, logvar, taps))
    }

    /// PBR branch over [3, 4, H, W], fusing the cached RGB taps at each level
    /// and collapsing the 4 frames with the full-stride temporal merge.
    pub fn encode_pbr(
        &self,
        g: &mut Graph<S>,
        pbr: NodeId,
        taps: &[NodeId],
    ) -> Result<(NodeId, NodeId)> {
        let mut h = pbr;
        for (i, &tap) in taps.iter().enumerate() {
            h = self.block(g, &format!("vae.enc.pbr.l{i}"), h, (1, 2, 2), true)?;
            let tap_b = g.repeat_axis(tap, 1, PBR_FRAMES)?;
            h = g.concat(&[h, tap_b], 0)?;
        }
        h = self.block(g, "vae.enc.pbr.merge", h, (PBR_FRAMES, 1, 1), false)?;
        self.moment_head(g, "vae.enc.pbr.head", h)
    }

    fn moment_head(&self, g: &mut Graph<S>, name: &str, h: NodeId) -> Result<(NodeId, NodeId)> {
        let w = g.param(self.params, &format!("{name}.w"))?;
        let b = g.param(self.params, &format!("{name}.b"))?;
        let out = g.conv3d_causal(h, w, Some(b), (1, 1, 1))?;
        let cz = self.cfg.latent_channels;
        let mu = g.narrow(out, 0, 0, cz)?;
        let logvar = g.narrow(out, 0, cz, cz)?;
        Ok((mu, logvar))
    }

    /// z = mu + exp(logvar/2) * eps.
    pub fn reparam(&self, g: &mut Graph<S>, mu: NodeId, logvar: NodeId, eps: NodeId) -> Result<NodeId> {
        let half = g.mul_scalar(logvar, 0.5);
        let std = g.exp(half);
        let noise = g.mul(std, eps)?;
        g.add(mu, noise)
    }

    /// RGB decoder; returns the output frame in [0,1] and the per-stage taps
    /// the PBR decoder consumes.
    pub fn decode_rgb(&self, g: &mut Graph<S>, z_rgb: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        let mut taps = Vec::with_capacity(self.cfg.dec_widths.len());
        let mut h = z_rgb;
        for i in 0..self.cfg.dec_widths.len() {
            if i > 0 {
                h = g.upsample2x(h)?;
            }
            h = self.block(g, &format!("vae.dec.rgb.l{i}"), h, (1, 1, 1), true)?;
            taps.push(h);
        }
        let w = g.param(self.params, "vae.dec.rgb.head.conv.w")?;
        let b = g.param(self.params, "vae.dec.rgb.head.conv.b")?;
        let out = g.conv3d_causal(h, w, Some(b), (1, 1, 1))?;
        Ok((g.sigmoid(out), taps))
    }

    /// PBR decoder from z_pbr plus the RGB decoder's cached taps; produces
    /// the four maps as [3, 4, H, W] in [0,1].
    pub fn decode_pbr(&self, g: &mut Graph<S>, z_pbr: NodeId, dtaps: &[NodeId]) -> Result<NodeId> {
        let mut h = g.repeat_axis(z_pbr, 1, PBR_FRAMES)?;
        for (i, &tap) in dtaps.iter().enumerate() {
            if i > 0 {
                h = g.upsample2x(h)?;
            }
            let tap_b = g.repeat_axis(tap, 1, PBR_FRAMES)?;
            h = g.concat(&[h, tap_b], 0)?;
            h = self.block(g, &format!("vae.dec.pbr.l{i}"), h, (1, 1, 1), true)?;
        }
        let w = g.param(self.params, "vae.dec.pbr.head.conv.w")?;
        let b = g.param(self.params, "vae.dec.pbr.head.conv.b")?;
        let out = g.conv3d_causal(h, w, Some(b), (1, 1, 1))?;
        Ok(g.sigmoid(out))
    }
}

impl VaeModel {
    pub fn init(cfg: VaeConfig, seed: u64) -> Result<VaeModel> {
        cfg.validate()?;
        let mut rng = crate::rng::rng_for(seed, "vae-init");
        let params = init_params::<f32>(&cfg, &mut rng);
        Ok(VaeModel { cfg, params })
    }

    pub fn latent_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h / self.cfg.spatial_factor, w / self.cfg.spatial_factor)
    }

    fn check_resolution(&self, h: usize, w: usize) -> Result<()> {
        let s = self.cfg.spatial_factor;
        if h % s != 0 || w % s != 0 || h == 0 || w == 0 {
            return Err(MatError::Contract(format!(
                "resolution {h}x{w} not a positive multiple of spatial factor {s}"
            )));
        }
        Ok(())
    }

    /// Encode a sequence into the two latents. `Mean` is fully deterministic;
    /// `Sample` applies the reparameterization with a seeded draw. Moments are
    /// always retained.
    pub fn encode(&self, seq: &FrameSequence, mode: SampleMode) -> Result<LatentPair> {
        let (h, w) = seq.resolution();
        self.check_resolution(h, w)?;
        let mut g = Graph::<f32>::inference();
        let fwd = VaeForward::new(&self.cfg, &self.params);
        let rgb = g.input(seq.frame_chw(crate::vae::pack::FRAME_RGB));
        let pbr = g.input(seq.pbr_chw());
        let (mu_rgb, logvar_rgb, taps) = fwd.encode_rgb(&mut g, rgb)?;
        let (mu_pbr, logvar_pbr) = fwd.encode_pbr(&mut g, pbr, &taps)?;
        let moments = LatentMoments {
            mu_rgb: g.value(mu_rgb).clone(),
            logvar_rgb: g.value(logvar_rgb).clone(),
            mu_pbr: g.value(mu_pbr).clone(),
            logvar_pbr: g.value(logvar_pbr).clone(),
        };
        let (z_rgb, z_pbr) = match mode {
            SampleMode::Mean => (moments.mu_rgb.clone(), moments.mu_pbr.clone()),
            SampleMode::Sample(seed) => {
                let mut rng = crate::rng::rng_for(seed, "vae-encode-sample");
                let draw = |mu: &Tensor<f32>, logvar: &Tensor<f32>, rng: &mut ChaCha8Rng| {
                    let data: Vec<f32> = mu
                        .data()
                        .iter()
                        .zip(logvar.data())
                        .map(|(&m, &lv)| {
                            let z: f64 = StandardNormal.sample(rng);
                            m + (0.5 * lv).exp() * z as f32
                        })
                        .collect();
                    Tensor::new(mu.shape().to_vec(), data).unwrap()
                };
                (
                    draw(&moments.mu_rgb, &moments.logvar_rgb, &mut rng),
                    draw(&moments.mu_pbr, &moments.logvar_pbr, &mut rng),
                )
            }
        };
        Ok(LatentPair {
            z_rgb,
            z_pbr,
            moments: Some(moments),
        })
    }

    fn check_latent(&self, z: &Tensor<f32>) -> Result<()> {
        let s = z.shape();
        if s.len() != 4 || s[0] != self.cfg.latent_channels || s[1] != 1 {
            return Err(MatError::Dimension(format!(
                "latent must be [{}, 1, h, w], got {s:?}",
                self.cfg.latent_channels
            )));
        }
        Ok(())
    }

    /// Decode the RGB frame from z_rgb alone.
    pub fn decode_rgb(&self, z_rgb: &Tensor<f32>) -> Result<ImageF> {
        self.check_latent(z_rgb)?;
        let mut g = Graph::<f32>::inference();
        let fwd = VaeForward::new(&self.cfg, &self.params);
        let z = g.input(z_rgb.clone());
        let (out, _) = fwd.decode_rgb(&mut g, z)?;
        Ok(crate::metrics::chw_to_image(g.value(out)))
    }

    /// Decode the four maps: runs the RGB decoder to populate the cached
    /// features, then the PBR decoder on [cached features, z_pbr].
    pub fn decode_pbr(&self, z_rgb: &Tensor<f32>, z_pbr: &Tensor<f32>) -> Result<MaterialMaps> {
        Ok(self.decode_both(z_rgb, z_pbr)?.1)
    }

    pub fn decode_both(
        &self,
        z_rgb: &Tensor<f32>,
        z_pbr: &Tensor<f32>,
    ) -> Result<(ImageF, MaterialMaps)> {
        self.check_latent(z_rgb)?;
        self.check_latent(z_pbr)?;
        let mut g = Graph::<f32>::inference();
        let fwd = VaeForward::new(&self.cfg, &self.params);
        let zr = g.input(z_rgb.clone());
        let zp = g.input(z_pbr.clone());
        let (rgb_out, dtaps) = fwd.decode_rgb(&mut g, zr)?;
        let pbr_out = fwd.decode_pbr(&mut g, zp, &dtaps)?;
        let rgb = crate::metrics::chw_to_image(g.value(rgb_out));
        let maps = pbr_tensor_to_maps(g.value(pbr_out));
        Ok((rgb, maps))
    }

    /// Full roundtrip with mean latents.
    pub fn reconstruct(&self, seq: &FrameSequence) -> Result<(ImageF, MaterialMaps)> {
        let lat = self.encode(seq, SampleMode::Mean)?;
        self.decode_both(&lat.z_rgb, &lat.z_pbr)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::tensor::checkpoint::save(&self.params, path)
    }

    pub fn load(cfg: VaeConfig, path: &std::path::Path) -> Result<VaeModel> {
        cfg.validate()?;
        let params = crate::tensor::checkpoint::load::<f32>(path)?;
        Ok(VaeModel { cfg, params })
    }
}

/// [3, 4, H, W] decoder output to the four maps (frame order basecolor,
/// normal, roughness, metallic; single-channel maps by channel mean).
pub fn pbr_tensor_to_maps(t: &Tensor<f32>) -> MaterialMaps {
    let s = t.shape();
    let (h, w) = (s[2], s[3]);
    let hw = h * w;
    let frame = |f: usize| -> ImageF {
        let mut img = ImageF::new(h, w, 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    img.px_mut(y, x)[c] = t.data()[(c * 4 + f) * hw + y * w + x];
                }
            }
        }
        img
    };
    let single = |f: usize| -> ImageF {
        let mut img = ImageF::new(h, w, 1);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for c in 0..3 {
                    acc += t.data()[(c * 4 + f) * hw + y * w + x];
                }
                img.px_mut(y, x)[0] = acc / 3.0;
            }
        }
        img
    };
    MaterialMaps {
        basecolor: frame(0),
        normal: frame(1),
        roughness: single(2),
        metallic: single(3),
    }
}
