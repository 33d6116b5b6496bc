//! The teacher VAE: amortized posterior `q(z_v|x)`, decoder `p(x|z_v)` and a
//! standard normal prior over `z_v`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape, Var};
use crate::checkpoint;
use crate::distributions::{
    bernoulli_logits_log_prob_rows, gaussian_obs_log_prob_rows, kl_standard_rows, reparam_sample,
    GaussianVars,
};
use crate::error::{Error, Result, ResultExt};
use crate::nn::{Activation, BoundMlp, Mlp};
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::rng::{minibatches, normal_tensor, stream_rng};
use crate::tensor::Tensor;

/// Pixel likelihood `p(x|z_v)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObservationModel {
    /// Decoder outputs logits; `x ∈ [0, 1]` is scored as Bernoulli.
    #[default]
    Bernoulli,
    /// Decoder outputs the mean of `N(x | mean, variance·I)`.
    Gaussian { variance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub observation: ObservationModel,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            latent_dim: 20,
            hidden: vec![128],
            observation: ObservationModel::Bernoulli,
            epochs: 100,
            batch_size: 50,
            optimizer: OptimizerConfig::adam(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherModel {
    encoder: Mlp,
    decoder: Mlp,
    latent_dim: usize,
    observation: ObservationModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    /// Batch mean of `log p(x|z_v)` at one reparameterized sample.
    pub reconstruction: f64,
    /// Batch mean of `KL(q(z_v|x) || N(0, I))`.
    pub kl: f64,
    pub elbo: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedTeacher {
    pub model: TeacherModel,
    /// Dataset ELBO before training, on the fixed evaluation noise.
    pub initial_elbo: f64,
    /// Dataset ELBO after each epoch, on the same noise.
    pub curve: Vec<f64>,
}

/// Teacher parameters registered on a tape.
pub struct BoundTeacher {
    pub encoder: BoundMlp,
    pub decoder: BoundMlp,
}

impl TeacherModel {
    pub fn new(data_dim: usize, config: &TeacherConfig, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, "teacher-init", 0);
        let l = config.latent_dim;
        let mut enc = vec![data_dim];
        enc.extend(&config.hidden);
        enc.push(2 * l);
        let mut dec = vec![l];
        dec.extend(&config.hidden);
        dec.push(data_dim);
        Ok(TeacherModel {
            encoder: Mlp::new(&enc, Activation::Relu, &mut rng)?,
            decoder: Mlp::new(&dec, Activation::Relu, &mut rng)?,
            latent_dim: l,
            observation: config.observation,
        })
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, observation: ObservationModel) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        if encoder.output_dim() != 2 * latent_dim || encoder.input_dim() != decoder.output_dim() {
            return Err(Error::shape(
                "teacher",
                &[encoder.input_dim(), encoder.output_dim()],
                &[decoder.input_dim(), decoder.output_dim()],
            ));
        }
        Ok(TeacherModel {
            encoder,
            decoder,
            latent_dim,
            observation,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data_dim(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn observation(&self) -> ObservationModel {
        self.observation
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundTeacher {
        BoundTeacher {
            encoder: self.encoder.bind(tape, trainable),
            decoder: self.decoder.bind(tape, trainable),
        }
    }

    /// Binds encoder then decoder parameters from one flat vector.
    pub fn bind_flat(&self, tape: &mut Tape, flat: Var) -> Result<BoundTeacher> {
        let mut off = 0;
        let encoder = self.encoder.bind_flat(tape, flat, &mut off)?;
        let decoder = self.decoder.bind_flat(tape, flat, &mut off)?;
        Ok(BoundTeacher { encoder, decoder })
    }

    pub fn flatten(&self) -> Tensor {
        let mut v = self.encoder.flatten().into_data();
        v.extend(self.decoder.flatten().into_data());
        Tensor::vector(v)
    }

    /// Posterior `q(z_v|x)` parameters as `(mean, log_var)`, each `[n, L]`.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        let head = self.encoder.apply(x)?;
        let l = self.latent_dim;
        Ok((head.slice_cols(0, l), head.slice_cols(l, 2 * l)))
    }

    /// Mean of `p(x|z_v)`.
    pub fn decode_mean(&self, z: &Tensor) -> Result<Tensor> {
        if z.cols() != self.latent_dim {
            return Err(Error::shape(
                "teacher_decode",
                &[self.latent_dim],
                z.shape(),
            ));
        }
        let out = self.decoder.apply(z)?;
        Ok(match self.observation {
            ObservationModel::Bernoulli => out.map(sigmoid),
            ObservationModel::Gaussian { .. } => out,
        })
    }

    /// Decoder mean at the posterior mean, no sampling.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let (mean, _) = self.encode(x)?;
        self.decode_mean(&mean)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.data_dim() {
            return Err(Error::shape("teacher_input", &[self.data_dim()], x.shape()));
        }
        Ok(())
    }

    /// Per-row `log p(x|z_v)`. The teacher is not differentiated here.
    pub fn decode_log_prob(&self, z: &Tensor, x: &Tensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if z.rows() != x.rows() || z.cols() != self.latent_dim {
            return Err(Error::shape("teacher_decode_logprob", z.shape(), x.shape()));
        }
        let mut tape = Tape::new();
        let dec = self.decoder.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let xv = tape.constant(x.clone());
        let out = dec.forward(&mut tape, zv)?;
        let lp = self.observation_log_prob(&mut tape, out, xv)?;
        Ok(tape.value(lp).data().to_vec())
    }

    /// Per-row observation log-likelihood of `x` given decoder output `out`.
    pub fn observation_log_prob(&self, tape: &mut Tape, out: Var, x: Var) -> Result<Var> {
        match self.observation {
            ObservationModel::Bernoulli => bernoulli_logits_log_prob_rows(tape, out, x),
            ObservationModel::Gaussian { variance } => {
                gaussian_obs_log_prob_rows(tape, out, x, variance)
            }
        }
    }

    /// Builds the ELBO terms for `x` (`[n, d]`) with reparameterization noise
    /// `noise` (`[n, L]`). Returns `(reconstruction, kl)` as scalar nodes.
    pub fn elbo_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundTeacher,
        x: Var,
        noise: Var,
    ) -> Result<(Var, Var)> {
        let head = bound.encoder.forward(tape, x)?;
        let q = GaussianVars::from_head(tape, head, self.latent_dim)?;
        let z = reparam_sample(tape, q, noise)?;
        let out = bound.decoder.forward(tape, z)?;
        let ll = self.observation_log_prob(tape, out, x)?;
        let recon = tape.mean(ll)?;
        let kl_rows = kl_standard_rows(tape, q)?;
        let kl = tape.mean(kl_rows)?;
        Ok((recon, kl))
    }

    pub fn elbo(&self, x: &Tensor, noise: &Tensor) -> Result<ElboTerms> {
        self.check_input(x)?;
        if noise.shape() != [x.rows(), self.latent_dim] {
            return Err(Error::shape(
                "elbo_noise",
                &[x.rows(), self.latent_dim],
                noise.shape(),
            ));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let nv = tape.constant(noise.clone());
        let (r, k) = self.elbo_graph(&mut tape, &bound, xv, nv)?;
        let reconstruction = tape.scalar_value(r)?;
        let kl = tape.scalar_value(k)?;
        Ok(ElboTerms {
            reconstruction,
            kl,
            elbo: reconstruction - kl,
        })
    }

    /// Draws `z_v ~ N(0, I)` and `x ~ p(x|z_v)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Tensor, Tensor)> {
        let z = normal_tensor(
            &mut stream_rng(seed, "teacher-sample-z", 0),
            &[n, self.latent_dim],
        );
        let mean = self.decode_mean(&z)?;
        let mut rng = stream_rng(seed, "teacher-sample-x", 0);
        let x = match self.observation {
            ObservationModel::Bernoulli => {
                let u = crate::rng::uniform_tensor(&mut rng, mean.shape(), 0.0, 1.0);
                mean.zip_map(&u, |p, u| if u < p { 1.0 } else { 0.0 })?
            }
            ObservationModel::Gaussian { variance } => {
                let eps = normal_tensor(&mut rng, mean.shape());
                mean.zip_map(&eps, |m, e| m + variance.sqrt() * e)?
            }
        };
        Ok((z, x))
    }

    fn tensor_list(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, m) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, p) in m.params().iter().enumerate() {
                let kind = if i % 2 == 0 { "w" } else { "b" };
                out.push((format!("{prefix}.{kind}{}", i / 2), p));
            }
        }
        out
    }

    pub fn save(
        &self,
        dir: &Path,
        name: &str,
        seed: u64,
        training: serde_json::Value,
    ) -> Result<()> {
        let config = serde_json::json!({
            "model": "teacher-vae",
            "latent_dim": self.latent_dim,
            "encoder_sizes": self.encoder.sizes(),
            "decoder_sizes": self.decoder.sizes(),
            "activation": self.encoder.activation(),
            "observation": self.observation,
            "training": training,
        });
        checkpoint::save(dir, name, &self.tensor_list(), seed, config)
    }

    pub fn load(dir: &Path, name: &str) -> Result<(Self, checkpoint::Manifest)> {
        let (manifest, mut tensors) = checkpoint::load(dir, name)?;
        let cfg = &manifest.config;
        let sizes = |key: &str| -> Result<Vec<usize>> {
            serde_json::from_value(cfg[key].clone()).map_err(Error::from)
        };
        let enc_sizes = sizes("encoder_sizes")?;
        let dec_sizes = sizes("decoder_sizes")?;
        let activation: Activation = serde_json::from_value(cfg["activation"].clone())?;
        let observation: ObservationModel = serde_json::from_value(cfg["observation"].clone())?;
        let n_enc = 2 * (enc_sizes.len() - 1);
        if tensors.len() < n_enc {
            return Err(Error::Format("checkpoint has too few tensors".into()));
        }
        let dec_params = tensors.split_off(n_enc);
        let encoder = Mlp::from_params(&enc_sizes, activation, tensors)?;
        let decoder = Mlp::from_params(&dec_sizes, activation, dec_params)?;
        Ok((
            TeacherModel::from_parts(encoder, decoder, observation)?,
            manifest,
        ))
    }
}

fn eval_noise(n: usize, latent: usize, seed: u64) -> Tensor {
    normal_tensor(&mut stream_rng(seed, "teacher-eval-noise", 0), &[n, latent])
}

/// Fits the teacher by maximizing the ELBO with one posterior sample per
/// datum per step.
pub fn train_teacher(config: &TeacherConfig, images: &Tensor, seed: u64) -> Result<TrainedTeacher> {
    let n = images.rows();
    if n == 0 {
        return Err(Error::Invalid("teacher training set is empty".into()));
    }
    let mut model = TeacherModel::new(images.cols(), config, seed)?;
    let noise_eval = eval_noise(n, config.latent_dim, seed);
    let initial_elbo = model
        .elbo(images, &noise_eval)
        .context(|| "teacher initial ELBO")?
        .elbo;

    let mut opt_enc = OptimizerState::new(config.optimizer.clone(), model.encoder.params());
    let mut opt_dec = OptimizerState::new(config.optimizer.clone(), model.decoder.params());
    let mut curve = Vec::with_capacity(config.epochs);
    let mut step: u64 = 0;
    for epoch in 0..config.epochs {
        for batch in minibatches(seed, "teacher-shuffle", epoch as u64, n, config.batch_size) {
            let ctx = || format!("teacher epoch {} step {}", epoch + 1, step);
            let xb = images.select_rows(&batch);
            let noise = normal_tensor(
                &mut stream_rng(seed, "teacher-noise", step),
                &[batch.len(), config.latent_dim],
            );
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let xv = tape.constant(xb);
            let nv = tape.constant(noise);
            let (recon, kl) = model.elbo_graph(&mut tape, &bound, xv, nv).context(ctx)?;
            let loss = tape.sub(kl, recon).context(ctx)?;
            let grads = tape.backward(loss).context(ctx)?;
            let g_enc: Vec<Tensor> = bound
                .encoder
                .vars
                .iter()
                .zip(model.encoder.params())
                .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                .collect();
            let g_dec: Vec<Tensor> = bound
                .decoder
                .vars
                .iter()
                .zip(model.decoder.params())
                .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                .collect();
            opt_enc
                .step(model.encoder.params_mut(), &g_enc)
                .context(ctx)?;
            opt_dec
                .step(model.decoder.params_mut(), &g_dec)
                .context(ctx)?;
            step += 1;
        }
        let elbo = model
            .elbo(images, &noise_eval)
            .context(|| format!("teacher epoch {} evaluation", epoch + 1))?;
        curve.push(elbo.elbo);
    }
    Ok(TrainedTeacher {
        model,
        initial_elbo,
        curve,
    })
}
