//! Two-stage VAE training: from-scratch with reconstruction + beta KL, then
//! decoder fine-tuning with the encoder frozen.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MatError, Result};
use crate::metrics::FeatureNet;
use crate::tensor::{AdamConfig, AdamW, Graph, NodeId, Tensor};
use crate::vae::loss::{kl_term, l1_term, perceptual_term, reference_taps, seq_chw};
use crate::vae::model::{VaeForward, VaeModel};
use crate::vae::pack::FrameSequence;

#[derive(Clone, Debug)]
pub struct VaeTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta_kl: f64,
    /// Reparameterized sampling during training; mean latents when false.
    pub sample_latents: bool,
    pub seed: u64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            steps: 1500,
            lr: 2e-3,
            batch: 1,
            lambda1: 10.0,
            lambda2: 1.0,
            beta_kl: 1e-6,
            sample_latents: true,
            seed: 0,
        }
    }
}

pub struct VaeTrainer {
    pub model: VaeModel,
    pub cfg: VaeTrainConfig,
    feat: FeatureNet,
    corpus: Vec<FrameSequence>,
    corpus_chw: Vec<Tensor<f32>>,
    ref_taps: Vec<Vec<Vec<Tensor<f32>>>>,
    opt: AdamW<f32>,
    rng: ChaCha8Rng,
    step: usize,
    pub losses: Vec<f64>,
}

impl VaeTrainer {
    pub fn new(
        model: VaeModel,
        feat: FeatureNet,
        corpus: Vec<FrameSequence>,
        cfg: VaeTrainConfig,
    ) -> Result<VaeTrainer> {
        if corpus.is_empty() {
            return Err(MatError::Config("empty training corpus".into()));
        }
        let ref_taps = corpus
            .iter()
            .map(|s| reference_taps::<f32>(&feat, s))
            .collect::<Result<Vec<_>>>()?;
        let corpus_chw = corpus.iter().map(seq_chw).collect();
        let opt = AdamW::new(AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        });
        let rng = crate::rng::rng_for(cfg.seed, "vae-train");
        Ok(VaeTrainer {
            model,
            cfg,
            feat,
            corpus,
            corpus_chw,
            ref_taps,
            opt,
            rng,
            step: 0,
            losses: Vec::new(),
        })
    }

    fn sample_loss(
        &self,
        g: &mut Graph<f32>,
        idx: usize,
        eps: Option<(Tensor<f32>, Tensor<f32>)>,
    ) -> Result<NodeId> {
        let fwd = VaeForward::new(&self.model.cfg, &self.model.params);
        let seq = &self.corpus[idx];
        let rgb = g.input(seq.frame_chw(crate::vae::pack::FRAME_RGB));
        let pbr = g.input(seq.pbr_chw());
        let (mu_rgb, logvar_rgb, taps) = fwd.encode_rgb(g, rgb)?;
        let (mu_pbr, logvar_pbr) = fwd.encode_pbr(g, pbr, &taps)?;
        let (z_rgb, z_pbr) = match eps {
            Some((er, ep)) => {
                let er = g.input(er);
                let ep = g.input(ep);
                (
                    fwd.reparam(g, mu_rgb, logvar_rgb, er)?,
                    fwd.reparam(g, mu_pbr, logvar_pbr, ep)?,
                )
            }
            None => (mu_rgb, mu_pbr),
        };
        let (xhat_rgb, dtaps) = fwd.decode_rgb(g, z_rgb)?;
        let xhat_pbr = fwd.decode_pbr(g, z_pbr, &dtaps)?;
        let xhat_all = g.concat(&[xhat_rgb, xhat_pbr], 1)?;
        let x_all = g.input(self.corpus_chw[idx].clone());
        let l1 = l1_term(g, xhat_all, x_all)?;
        let feat_params = self.feat.params_as::<f32>();
        let perc = perceptual_term(g, &self.feat, &feat_params, xhat_all, &self.ref_taps[idx])?;
        let l1w = g.mul_scalar(l1, self.cfg.lambda1);
        let pw = g.mul_scalar(perc, self.cfg.lambda2);
        let mut total = g.add(l1w, pw)?;
        if self.cfg.beta_kl > 0.0 {
            let kl_r = kl_term(g, mu_rgb, logvar_rgb)?;
            let kl_p = kl_term(g, mu_pbr, logvar_pbr)?;
            let kl = g.add(kl_r, kl_p)?;
            let klw = g.mul_scalar(kl, self.cfg.beta_kl);
            total = g.add(total, klw)?;
        }
        Ok(total)
    }

    fn draw_eps(&mut self, shape: &[usize]) -> Tensor<f32> {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                z as f32
            })
            .collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    /// One optimizer step over the next round-robin batch. Returns the batch
    /// loss; NaN aborts with a divergence error.
    pub fn step(&mut self) -> Result<f64> {
        let n = self.corpus.len();
        let batch: Vec<usize> = (0..self.cfg.batch.max(1))
            .map(|i| (self.step * self.cfg.batch.max(1) + i) % n)
            .collect();
        let (h, w) = self.corpus[0].resolution();
        let (lh, lw) = self.model.latent_hw(h, w);
        let cz = self.model.cfg.latent_channels;
        let mut g = Graph::<f32>::new();
        let mut acc: Option<NodeId> = None;
        for &idx in &batch {
            let eps = if self.cfg.sample_latents {
                Some((
                    self.draw_eps(&[cz, 1, lh, lw]),
                    self.draw_eps(&[cz, 1, lh, lw]),
                ))
            } else {
                None
            };
            let loss = self.sample_loss(&mut g, idx, eps)?;
            acc = Some(match acc {
                None => loss,
                Some(a) => g.add(a, loss)?,
            });
        }
        let total = g.mul_scalar(acc.unwrap(), 1.0 / batch.len() as f64);
        let loss_val = g.value(total).item() as f64;
        if !loss_val.is_finite() {
            return Err(MatError::Divergence {
                step: self.step,
                what: format!("loss {loss_val} (batch {batch:?})"),
            });
        }
        let grads = g.backward(total)?;
        self.opt.step(&mut self.model.params, &grads)?;
        self.step += 1;
        self.losses.push(loss_val);
        Ok(loss_val)
    }

    pub fn train(&mut self) -> Result<()> {
        for _ in 0..self.cfg.steps {
            self.step()?;
        }
        Ok(())
    }

    /// Deterministic full-corpus loss snapshot (mean latents, no sampling).
    pub fn eval_loss(&self) -> Result<f64> {
        let mut total = 0.0f64;
        for idx in 0..self.corpus.len() {
            let mut g = Graph::<f32>::inference();
            let loss = self.sample_loss(&mut g, idx, None)?;
            total += g.value(loss).item() as f64;
        }
        Ok(total / self.corpus.len() as f64)
    }

    pub fn into_model(self) -> VaeModel {
        self.model
    }
}

/// Stage-1 training: encoder + decoder with reconstruction and beta KL.
pub fn train_vae(
    model: VaeModel,
    feat: &FeatureNet,
    corpus: Vec<FrameSequence>,
    cfg: VaeTrainConfig,
) -> Result<(VaeModel, Vec<f64>)> {
    let mut trainer = VaeTrainer::new(model, feat.clone(), corpus, cfg)?;
    trainer.train()?;
    let losses = trainer.losses.clone();
    Ok((trainer.into_model(), losses))
}

/// Stage-2 fine-tuning: the encoder is frozen (bit-identical afterwards);
/// only decoder parameters receive updates. Mean latents, no KL.
pub fn finetune_decoder(
    mut model: VaeModel,
    feat: &FeatureNet,
    corpus: Vec<FrameSequence>,
    mut cfg: VaeTrainConfig,
) -> Result<(VaeModel, Vec<f64>)> {
    model.params.set_frozen_prefix("vae.enc.", true);
    cfg.sample_latents = false;
    cfg.beta_kl = 0.0;
    let trainable: Vec<String> = model
        .params
        .iter()
        .filter(|p| !p.frozen)
        .map(|p| p.name.clone())
        .collect();
    let mut trainer = VaeTrainer::new(model, feat.clone(), corpus, cfg.clone())?;
    trainer.opt = AdamW::with_trainable(
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
        trainable,
    );
    trainer.train()?;
    let losses = trainer.losses.clone();
    let mut model = trainer.into_model();
    model.params.set_frozen_prefix("vae.enc.", false);
    Ok((model, losses))
}
