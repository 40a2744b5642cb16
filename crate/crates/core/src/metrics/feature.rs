//! Fixed random-weight convolutional feature extractor.
//!
//! One seeded, frozen network stands in for the pretrained perceptual and
//! embedding networks: it backs the perceptual loss term, the perceptual
//! metric, the Fréchet metric features, and the tag-retrieval substitute
//! score. Same seed, same features, forever; it is never trained.

use crate::error::Result;
use crate::render::image::ImageF;
use crate::tensor::{Graph, NodeId, ParamStore, Scalar, Tensor};

pub const DEFAULT_FEATURE_SEED: u64 = 0x4d46_0007;

/// Channel widths of the three tap levels.
const WIDTHS: [usize; 3] = [16, 32, 32];

#[derive(Clone)]
pub struct FeatureNet {
    params: ParamStore<f32>,
    pub seed: u64,
}

impl FeatureNet {
    pub fn new(seed: u64) -> Self {
        let mut rng = crate::rng::rng_for(seed, "feature-net");
        let mut params = ParamStore::new();
        let mut c_in = 3;
        for (i, &c_out) in WIDTHS.iter().enumerate() {
            let fan_in = c_in * 9;
            let std = (2.0 / fan_in as f64).sqrt();
            params.init_normal(&format!("featnet.c{i}.w"), &[c_out, c_in, 1, 3, 3], std, &mut rng);
            params.init_zeros(&format!("featnet.c{i}.b"), &[c_out]);
            c_in = c_out;
        }
        params.set_frozen_prefix("featnet.", true);
        FeatureNet { params, seed }
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    /// Frozen parameters cast to the graph dtype.
    pub fn params_as<S: Scalar>(&self) -> ParamStore<S> {
        self.params.cast::<S>()
    }

    /// Build the tap pyramid inside a graph. `x` is [3, 1, H, W] in [0,1];
    /// gradients flow through `x` only (weights are frozen).
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        params: &ParamStore<S>,
        x: NodeId,
    ) -> Result<Vec<NodeId>> {
        let scaled = g.mul_scalar(x, 2.0);
        let mut h = g.add_scalar(scaled, -1.0);
        let mut taps = Vec::with_capacity(WIDTHS.len());
        for i in 0..WIDTHS.len() {
            let w = g.param(params, &format!("featnet.c{i}.w"))?;
            let b = g.param(params, &format!("featnet.c{i}.b"))?;
            h = g.conv3d_causal(h, w, Some(b), (1, 2, 2))?;
            h = g.silu(h);
            taps.push(h);
        }
        Ok(taps)
    }

    /// Tap tensors of an image, computed without gradient tracking.
    pub fn taps(&self, img: &ImageF) -> Result<Vec<Tensor<f32>>> {
        let mut g = Graph::<f32>::inference();
        let x = g.input(image_to_chw(img));
        let taps = self.forward(&mut g, &self.params, x)?;
        Ok(taps.into_iter().map(|t| g.value(t).clone()).collect())
    }

    /// Sum over taps of the mean squared feature difference.
    pub fn perceptual_dist(&self, a: &ImageF, b: &ImageF) -> Result<f64> {
        if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
            return Err(crate::error::MatError::Dimension(format!(
                "perceptual_dist shapes {}x{}x{} vs {}x{}x{}",
                a.height(),
                a.width(),
                a.channels(),
                b.height(),
                b.width(),
                b.channels()
            )));
        }
        let ta = self.taps(a)?;
        let tb = self.taps(b)?;
        let mut total = 0.0f64;
        for (x, y) in ta.iter().zip(&tb) {
            let mut acc = 0.0f64;
            for (&u, &v) in x.data().iter().zip(y.data()) {
                let d = (u - v) as f64;
                acc += d * d;
            }
            total += acc / x.numel() as f64;
        }
        Ok(total)
    }

    /// Global-average-pooled embedding of the last tap (length 32): the
    /// feature vector for Fréchet-style metrics and retrieval.
    pub fn embed(&self, img: &ImageF) -> Result<Vec<f32>> {
        let taps = self.taps(img)?;
        let last = taps.last().expect("at least one tap");
        let c = last.shape()[0];
        let per_ch = last.numel() / c;
        let mut out = vec![0.0f32; c];
        for (ch, o) in out.iter_mut().enumerate() {
            let seg = &last.data()[ch * per_ch..(ch + 1) * per_ch];
            let s: f64 = seg.iter().map(|&v| v as f64).sum();
            *o = (s / per_ch as f64) as f32;
        }
        Ok(out)
    }

    /// Index of the candidate whose embedding is nearest to the query's.
    pub fn nearest(&self, query: &ImageF, candidates: &[&ImageF]) -> Result<usize> {
        let q = self.embed(query)?;
        let mut best = (0usize, f64::INFINITY);
        for (i, c) in candidates.iter().enumerate() {
            let e = self.embed(c)?;
            let d: f64 = q
                .iter()
                .zip(&e)
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }
}

/// [H,W,3] image to a [3,1,H,W] tensor.
pub fn image_to_chw(img: &ImageF) -> Tensor<f32> {
    let (h, w) = (img.height(), img.width());
    debug_assert_eq!(img.channels(), 3);
    let mut data = vec![0.0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = img.px(y, x);
            for c in 0..3 {
                data[c * h * w + y * w + x] = px[c];
            }
        }
    }
    Tensor::new(vec![3, 1, h, w], data).unwrap()
}

/// [3,1,H,W] (or [3,T,H,W] frame 0) tensor back to an image.
pub fn chw_to_image(t: &Tensor<f32>) -> ImageF {
    let s = t.shape();
    let (h, w) = (s[2], s[3]);
    let mut img = ImageF::new(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                img.px_mut(y, x)[c] = t.data()[c * s[1] * h * w + y * w + x];
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{hash_coords, hash_unit};

    fn noise_image(seed: u64, n: usize) -> ImageF {
        let mut img = ImageF::new(n, n, 3);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = hash_unit(hash_coords(seed, i as i64, 0, 0));
        }
        img
    }

    #[test]
    fn same_seed_same_features_bitwise() {
        let a = FeatureNet::new(7);
        let b = FeatureNet::new(7);
        let img = noise_image(1, 16);
        let ea = a.embed(&img).unwrap();
        let eb = b.embed(&img).unwrap();
        let bits = |v: &[f32]| -> Vec<u32> { v.iter().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(&ea), bits(&eb));
    }

    #[test]
    fn perceptual_identity_is_zero_and_nonnegative() {
        let net = FeatureNet::new(DEFAULT_FEATURE_SEED);
        let a = noise_image(2, 16);
        let b = noise_image(3, 16);
        assert_eq!(net.perceptual_dist(&a, &a).unwrap(), 0.0);
        assert!(net.perceptual_dist(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn perceptual_blend_is_usually_monotone() {
        // d(a, lerp(a,b,0.5)) <= d(a,b) in at least 95% of 1000 trials
        let net = FeatureNet::new(DEFAULT_FEATURE_SEED);
        let mut ok = 0usize;
        let trials = 1000usize;
        for t in 0..trials as u64 {
            let a = noise_image(100 + t, 8);
            let b = noise_image(5000 + t, 8);
            let mut half = a.clone();
            for (h, (&x, &y)) in half
                .data_mut()
                .iter_mut()
                .zip(a.data().iter().zip(b.data()))
            {
                let _ = x;
                *h = (x + y) * 0.5;
            }
            let d_half = net.perceptual_dist(&a, &half).unwrap();
            let d_full = net.perceptual_dist(&a, &b).unwrap();
            if d_half <= d_full {
                ok += 1;
            }
        }
        assert!(ok * 100 >= trials * 95, "monotone in {ok}/{trials}");
    }

    #[test]
    fn image_tensor_roundtrip() {
        let img = noise_image(9, 12);
        let t = image_to_chw(&img);
        let back = chw_to_image(&t);
        assert_eq!(img, back);
    }
}
