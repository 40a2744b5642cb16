//! Reconstruction loss: lambda1 * L1 + lambda2 * perceptual, plus the
//! beta-weighted KL regularizer used by from-scratch training.

use crate::error::Result;
use crate::metrics::FeatureNet;
use crate::tensor::{Graph, NodeId, ParamStore, Scalar, Tensor};
use crate::vae::pack::FrameSequence;

/// Mean absolute difference between two equally-shaped nodes.
pub fn l1_term<S: Scalar>(g: &mut Graph<S>, xhat: NodeId, x: NodeId) -> Result<NodeId> {
    let d = g.sub(xhat, x)?;
    let a = g.abs(d);
    Ok(g.mean_all(a))
}

/// Sum over taps of mean squared feature difference, averaged over the 5
/// frames. `x_all`/`xhat_all` are [3, 5, H, W]; reference taps are
/// precomputed constants per frame.
pub fn perceptual_term<S: Scalar>(
    g: &mut Graph<S>,
    feat: &FeatureNet,
    feat_params: &ParamStore<S>,
    xhat_all: NodeId,
    ref_taps: &[Vec<Tensor<S>>],
) -> Result<NodeId> {
    let mut acc: Option<NodeId> = None;
    for (f, refs) in ref_taps.iter().enumerate() {
        let frame = g.narrow(xhat_all, 1, f, 1)?;
        let taps = feat.forward(g, feat_params, frame)?;
        for (tap, reference) in taps.into_iter().zip(refs) {
            let r = g.input(reference.clone());
            let d = g.sub(tap, r)?;
            let d2 = g.mul(d, d)?;
            let m = g.mean_all(d2);
            acc = Some(match acc {
                None => m,
                Some(a) => g.add(a, m)?,
            });
        }
    }
    let total = acc.expect("at least one frame");
    Ok(g.mul_scalar(total, 1.0 / ref_taps.len() as f64))
}

/// -0.5 * mean(1 + logvar - mu^2 - exp(logvar)).
pub fn kl_term<S: Scalar>(g: &mut Graph<S>, mu: NodeId, logvar: NodeId) -> Result<NodeId> {
    let t1 = g.add_scalar(logvar, 1.0);
    let mu2 = g.mul(mu, mu)?;
    let t2 = g.sub(t1, mu2)?;
    let ev = g.exp(logvar);
    let t3 = g.sub(t2, ev)?;
    let m = g.mean_all(t3);
    Ok(g.mul_scalar(m, -0.5))
}

/// Reference taps of all five frames of a ground-truth sequence, computed
/// once (the perceptual targets are constants during training).
pub fn reference_taps<S: Scalar>(feat: &FeatureNet, seq: &FrameSequence) -> Result<Vec<Vec<Tensor<S>>>> {
    let feat_params = feat.params_as::<S>();
    let mut out = Vec::with_capacity(5);
    for f in 0..5 {
        let mut g = Graph::<S>::inference();
        let x = g.input(seq.frame_chw(f).cast::<S>());
        let taps = feat.forward(&mut g, &feat_params, x)?;
        out.push(taps.into_iter().map(|t| g.value(t).clone()).collect());
    }
    Ok(out)
}

/// Standalone Eq-form reconstruction loss value between two sequences:
/// `lambda1 * L1 + lambda2 * perceptual` (no KL).
pub fn vae_loss_value(
    xhat: &FrameSequence,
    x: &FrameSequence,
    lambda1: f64,
    lambda2: f64,
    feat: &FeatureNet,
) -> Result<f64> {
    if xhat.resolution() != x.resolution() {
        return Err(crate::error::MatError::Dimension(format!(
            "sequence resolutions {:?} vs {:?}",
            xhat.resolution(),
            x.resolution()
        )));
    }
    let mut g = Graph::<f32>::inference();
    let xhat_all = g.input(seq_chw(xhat));
    let x_all = g.input(seq_chw(x));
    let l1 = l1_term(&mut g, xhat_all, x_all)?;
    let refs = reference_taps::<f32>(feat, x)?;
    let feat_params = feat.params_as::<f32>();
    let perc = perceptual_term(&mut g, feat, &feat_params, xhat_all, &refs)?;
    let l1w = g.mul_scalar(l1, lambda1);
    let pw = g.mul_scalar(perc, lambda2);
    let total = g.add(l1w, pw)?;
    Ok(g.value(total).item() as f64)
}

/// Sequence as one channel-major [3, 5, H, W] tensor (frame 0 = RGB).
pub fn seq_chw(seq: &FrameSequence) -> Tensor<f32> {
    let (h, w) = seq.resolution();
    let hw = h * w;
    let mut data = vec![0.0f32; 3 * 5 * hw];
    for f in 0..5 {
        let frame = seq.frame_chw(f);
        for c in 0..3 {
            data[(c * 5 + f) * hw..(c * 5 + f + 1) * hw]
                .copy_from_slice(&frame.data()[c * hw..(c + 1) * hw]);
        }
    }
    Tensor::new(vec![3, 5, h, w], data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::DEFAULT_FEATURE_SEED;
    use crate::render::image::ImageF;
    use crate::render::material::MaterialMaps;
    use crate::vae::pack::pack_sequence;

    fn toy_seq(offset: f32) -> FrameSequence {
        let mat = MaterialMaps::uniform(16, 16, [0.4 + offset, 0.3, 0.2], 0.5, 0.0);
        let mut rgb = ImageF::filled(16, 16, 3, 0.5);
        for v in rgb.data_mut() {
            *v += offset;
        }
        pack_sequence(&mat, &rgb).unwrap()
    }

    #[test]
    fn identical_sequences_give_zero_loss() {
        let feat = FeatureNet::new(DEFAULT_FEATURE_SEED);
        let x = toy_seq(0.0);
        let v = vae_loss_value(&x, &x, 10.0, 1.0, &feat).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn pixel_term_arithmetic_with_lambda2_zero() {
        // xhat = x + 0.1 everywhere, lambda1=10 -> loss = 10 * 0.1 = 1.0
        let feat = FeatureNet::new(DEFAULT_FEATURE_SEED);
        let x = toy_seq(0.0);
        let mut shifted = seq_chw(&x);
        for v in shifted.data_mut() {
            *v += 0.1;
        }
        // rebuild a sequence from the shifted tensor
        let (h, w) = x.resolution();
        let hw = h * w;
        let mut frame_major = vec![0.0f32; 5 * 3 * hw];
        for f in 0..5 {
            for c in 0..3 {
                for i in 0..hw {
                    frame_major[(f * 3 + c) * hw + i] = shifted.data()[(c * 5 + f) * hw + i];
                }
            }
        }
        let xhat = FrameSequence::from_tensor(
            Tensor::new(vec![5, 3, h, w], frame_major).unwrap(),
        )
        .unwrap();
        let v = vae_loss_value(&xhat, &x, 10.0, 0.0, &feat).unwrap();
        assert!((v - 1.0).abs() < 1e-5, "loss {v}");
    }

    #[test]
    fn kl_of_standard_normal_moments_is_zero() {
        let mut g = Graph::<f32>::new();
        let mu = g.input(Tensor::zeros(&[4, 1, 2, 2]));
        let logvar = g.input(Tensor::zeros(&[4, 1, 2, 2]));
        let kl = kl_term(&mut g, mu, logvar).unwrap();
        assert!(g.value(kl).item().abs() < 1e-7);
    }

    #[test]
    fn kl_positive_for_shifted_moments() {
        let mut g = Graph::<f32>::new();
        let mu = g.input(Tensor::full(&[4, 1, 2, 2], 1.0f32));
        let logvar = g.input(Tensor::zeros(&[4, 1, 2, 2]));
        let kl = kl_term(&mut g, mu, logvar).unwrap();
        assert!((g.value(kl).item() - 0.5).abs() < 1e-6);
    }
}
