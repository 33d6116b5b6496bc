//! The VIB classifier: stochastic encoder `p(z|x)`, decoder `q(y|z)` and a
//! fixed marginal `r(z)`, trained on `ce + β·KL(p(z|x) || r(z))`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::checkpoint;
use crate::data::LabeledDataset;
use crate::distributions::{
    categorical_log_prob_rows, kl_rows, reparam_sample, Categorical, DiagGaussian, GaussianVars,
};
use crate::error::{Error, Result, ResultExt};
use crate::nn::{Activation, BoundMlp, Mlp};
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::rng::{minibatches, normal_tensor, stream_rng};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    pub bottleneck_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            bottleneck_dim: 40,
            encoder_hidden: vec![256],
            decoder_hidden: vec![64],
            beta: 1e-3,
            epochs: 40,
            batch_size: 50,
            optimizer: OptimizerConfig::adam(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudentModel {
    encoder: Mlp,
    decoder: Mlp,
    bottleneck_dim: usize,
    beta: f64,
    marginal: DiagGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VibTerms {
    /// Batch mean of `-log q(y|z)` at one reparameterized `z`.
    pub ce: f64,
    /// Batch mean of `KL(p(z|x) || r(z))`.
    pub kl: f64,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    /// Mean over examples of `Σ_i logvar_i(x)`.
    pub mean_logdet_cov: f64,
    /// L2 norm of the encoder gradient, averaged over the epoch's steps.
    pub encoder_grad_norm: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    /// Epoch means of the training loss terms.
    pub train_ce: f64,
    pub train_kl: f64,
}

/// Frozen copy of the model after an epoch.
#[derive(Clone, Debug)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub model: Arc<StudentModel>,
    pub diagnostics: EpochDiagnostics,
}

#[derive(Clone, Debug)]
pub struct TrainedStudent {
    pub model: StudentModel,
    /// Epoch 0 (initialization) followed by one entry per epoch.
    pub history: Vec<EpochSnapshot>,
}

pub struct BoundStudent {
    pub encoder: BoundMlp,
    pub decoder: BoundMlp,
}

impl StudentModel {
    pub fn new(
        data_dim: usize,
        num_classes: usize,
        config: &StudentConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream_rng(seed, "student-init", 0);
        let k = config.bottleneck_dim;
        let mut enc = vec![data_dim];
        enc.extend(&config.encoder_hidden);
        enc.push(2 * k);
        let mut dec = vec![k];
        dec.extend(&config.decoder_hidden);
        dec.push(num_classes);
        if config.beta < 0.0 || !config.beta.is_finite() {
            return Err(Error::Invalid(format!(
                "beta must be finite and >= 0, got {}",
                config.beta
            )));
        }
        Ok(StudentModel {
            encoder: Mlp::new(&enc, Activation::Relu, &mut rng)?,
            decoder: Mlp::new(&dec, Activation::Relu, &mut rng)?,
            bottleneck_dim: k,
            beta: config.beta,
            marginal: DiagGaussian::standard(k),
        })
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, beta: f64) -> Result<Self> {
        let k = decoder.input_dim();
        if encoder.output_dim() != 2 * k {
            return Err(Error::shape("student", &[2 * k], &[encoder.output_dim()]));
        }
        Ok(StudentModel {
            encoder,
            decoder,
            bottleneck_dim: k,
            beta,
            marginal: DiagGaussian::standard(k),
        })
    }

    /// Replaces the variational marginal `r(z)`.
    pub fn with_marginal(mut self, marginal: DiagGaussian) -> Result<Self> {
        if marginal.dim() != self.bottleneck_dim {
            return Err(Error::shape(
                "marginal",
                &[self.bottleneck_dim],
                &[marginal.dim()],
            ));
        }
        self.marginal = marginal;
        Ok(self)
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.bottleneck_dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn marginal(&self) -> &DiagGaussian {
        &self.marginal
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

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundStudent {
        BoundStudent {
            encoder: self.encoder.bind(tape, trainable),
            decoder: self.decoder.bind(tape, trainable),
        }
    }

    pub fn bind_flat(&self, tape: &mut Tape, flat: Var) -> Result<BoundStudent> {
        let mut off = 0;
        let encoder = self.encoder.bind_flat(tape, flat, &mut off)?;
        let decoder = self.decoder.bind_flat(tape, flat, &mut off)?;
        Ok(BoundStudent { encoder, decoder })
    }

    pub fn flatten(&self) -> Tensor {
        let mut v = self.encoder.flatten().into_data();
        v.extend(self.decoder.flatten().into_data());
        Tensor::vector(v)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.data_dim() {
            return Err(Error::shape("student_input", &[self.data_dim()], x.shape()));
        }
        Ok(())
    }

    /// Encoder output on a tape as a batched Gaussian.
    pub fn encode_graph(
        &self,
        tape: &mut Tape,
        encoder: &BoundMlp,
        x: Var,
    ) -> Result<GaussianVars> {
        let head = encoder.forward(tape, x)?;
        GaussianVars::from_head(tape, head, self.bottleneck_dim)
    }

    /// `p(z|x)` parameters as `(mean, log_var)`, each `[n, K]`.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        let head = self.encoder.apply(x)?;
        let k = self.bottleneck_dim;
        Ok((head.slice_cols(0, k), head.slice_cols(k, 2 * k)))
    }

    /// Decoder log-probabilities `log q(y|z)` for a batch of codes.
    pub fn decode_log_probs(&self, z: &Tensor) -> Result<Tensor> {
        if z.cols() != self.bottleneck_dim {
            return Err(Error::shape(
                "student_decode",
                &[self.bottleneck_dim],
                z.shape(),
            ));
        }
        let mut tape = Tape::new();
        let dec = self.decoder.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let logits = dec.forward(&mut tape, zv)?;
        let ls = tape.log_softmax(logits)?;
        Ok(tape.value(ls).clone())
    }

    /// Builds `(ce, kl)` scalar nodes for a labeled batch.
    pub fn vib_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundStudent,
        x: Var,
        labels: &[usize],
        noise: Var,
    ) -> Result<(Var, Var)> {
        let p = self.encode_graph(tape, &bound.encoder, x)?;
        let z = reparam_sample(tape, p, noise)?;
        let logits = bound.decoder.forward(tape, z)?;
        let lq = categorical_log_prob_rows(tape, logits, labels)?;
        let mean_lq = tape.mean(lq)?;
        let ce = tape.neg(mean_lq)?;
        let kl_r = kl_rows(tape, p, &self.marginal)?;
        let kl = tape.mean(kl_r)?;
        Ok((ce, kl))
    }

    pub fn vib_loss(&self, x: &Tensor, labels: &[usize], noise: &Tensor) -> Result<VibTerms> {
        self.check_input(x)?;
        if x.rows() == 0 || labels.len() != x.rows() {
            return Err(Error::shape("vib_loss", &[x.rows()], &[labels.len()]));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let nv = tape.constant(noise.clone());
        let (ce, kl) = self.vib_graph(&mut tape, &bound, xv, labels, nv)?;
        let ce = tape.scalar_value(ce)?;
        let kl = tape.scalar_value(kl)?;
        Ok(VibTerms {
            ce,
            kl,
            loss: ce + self.beta * kl,
        })
    }

    /// Decoder applied at the encoder mean.
    pub fn classify(&self, x: &Tensor) -> Result<Vec<Categorical>> {
        let (mean, _) = self.encode(x)?;
        let lp = self.decode_log_probs(&mean)?;
        (0..lp.rows())
            .map(|i| Categorical::from_log_probs(lp.row(i).to_vec()))
            .collect()
    }

    pub fn accuracy(&self, ds: &LabeledDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::Invalid("accuracy on an empty dataset".into()));
        }
        let preds = self.classify(&ds.images)?;
        let hits = preds
            .iter()
            .zip(&ds.labels)
            .filter(|(p, &y)| p.argmax() == y)
            .count();
        Ok(hits as f64 / ds.len() as f64)
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
            "model": "student-vib",
            "bottleneck_dim": self.bottleneck_dim,
            "beta": self.beta,
            "encoder_sizes": self.encoder.sizes(),
            "decoder_sizes": self.decoder.sizes(),
            "activation": self.encoder.activation(),
            "marginal_mean": self.marginal.mean(),
            "marginal_log_var": self.marginal.log_var(),
            "training": training,
        });
        checkpoint::save(dir, name, &self.tensor_list(), seed, config)
    }

    pub fn load(dir: &Path, name: &str) -> Result<(Self, checkpoint::Manifest)> {
        let (manifest, mut tensors) = checkpoint::load(dir, name)?;
        let cfg = &manifest.config;
        let get = |key: &str| cfg[key].clone();
        let enc_sizes: Vec<usize> = serde_json::from_value(get("encoder_sizes"))?;
        let dec_sizes: Vec<usize> = serde_json::from_value(get("decoder_sizes"))?;
        let activation: Activation = serde_json::from_value(get("activation"))?;
        let beta: f64 = serde_json::from_value(get("beta"))?;
        let r_mean: Vec<f64> = serde_json::from_value(get("marginal_mean"))?;
        let r_lv: Vec<f64> = serde_json::from_value(get("marginal_log_var"))?;
        let n_enc = 2 * (enc_sizes.len() - 1);
        if tensors.len() < n_enc {
            return Err(Error::Format("checkpoint has too few tensors".into()));
        }
        let dec_params = tensors.split_off(n_enc);
        let model = StudentModel::from_parts(
            Mlp::from_params(&enc_sizes, activation, tensors)?,
            Mlp::from_params(&dec_sizes, activation, dec_params)?,
            beta,
        )?
        .with_marginal(DiagGaussian::new(r_mean, r_lv)?)?;
        Ok((model, manifest))
    }
}

/// `(mean log-det covariance over the batch, L2 norm of the gradients)`.
pub fn encoder_diagnostics(
    student: &StudentModel,
    batch: &Tensor,
    encoder_grads: &[Tensor],
) -> Result<(f64, f64)> {
    if batch.rows() == 0 {
        return Err(Error::Invalid("diagnostics need a non-empty batch".into()));
    }
    let (_, lv) = student.encode(batch)?;
    let logdet = (0..lv.rows())
        .map(|i| lv.row(i).iter().sum::<f64>())
        .sum::<f64>()
        / lv.rows() as f64;
    let norm = encoder_grads
        .iter()
        .map(Tensor::norm_sq)
        .sum::<f64>()
        .sqrt();
    Ok((logdet, norm))
}

/// Trains the student, calling `hook` with a frozen snapshot after every epoch.
///
/// Diagnostics use `eval` when given, the training set otherwise.
pub fn train_student<H>(
    config: &StudentConfig,
    train: &LabeledDataset,
    eval: Option<&LabeledDataset>,
    seed: u64,
    mut hook: H,
) -> Result<TrainedStudent>
where
    H: FnMut(&EpochSnapshot) -> Result<()>,
{
    if train.is_empty() {
        return Err(Error::Invalid("student training set is empty".into()));
    }
    let eval = eval.unwrap_or(train);
    let mut model = StudentModel::new(train.dim(), train.num_classes, config, seed)?;
    let k = config.bottleneck_dim;

    let diagnose = |model: &StudentModel,
                    epoch: usize,
                    grad_norm: f64,
                    ce: f64,
                    kl: f64|
     -> Result<EpochSnapshot> {
        let (logdet, _) = encoder_diagnostics(model, &eval.images, &[])?;
        Ok(EpochSnapshot {
            epoch,
            model: Arc::new(model.clone()),
            diagnostics: EpochDiagnostics {
                epoch,
                mean_logdet_cov: logdet,
                encoder_grad_norm: grad_norm,
                train_accuracy: model.accuracy(train)?,
                eval_accuracy: model.accuracy(eval)?,
                train_ce: ce,
                train_kl: kl,
            },
        })
    };

    let mut history = vec![diagnose(&model, 0, 0.0, f64::NAN, f64::NAN)?];
    let mut opt_enc = OptimizerState::new(config.optimizer.clone(), model.encoder.params());
    let mut opt_dec = OptimizerState::new(config.optimizer.clone(), model.decoder.params());
    let mut step: u64 = 0;
    for epoch in 1..=config.epochs {
        let (mut norm_sum, mut ce_sum, mut kl_sum, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for batch in minibatches(
            seed,
            "student-shuffle",
            epoch as u64,
            train.len(),
            config.batch_size,
        ) {
            let ctx = || format!("student epoch {epoch} step {step}");
            let xb = train.images.select_rows(&batch);
            let yb: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let noise = normal_tensor(
                &mut stream_rng(seed, "student-noise", step),
                &[batch.len(), k],
            );
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let xv = tape.constant(xb);
            let nv = tape.constant(noise);
            let (ce, kl) = model
                .vib_graph(&mut tape, &bound, xv, &yb, nv)
                .context(ctx)?;
            let scaled = tape.scale(kl, config.beta).context(ctx)?;
            let loss = tape.add(ce, scaled).context(ctx)?;
            let grads = tape.backward(loss).context(ctx)?;
            let collect = |vars: &[Var], params: &[Tensor]| -> Vec<Tensor> {
                vars.iter()
                    .zip(params)
                    .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                    .collect()
            };
            let g_enc = collect(&bound.encoder.vars, model.encoder.params());
            let g_dec = collect(&bound.decoder.vars, model.decoder.params());
            norm_sum += g_enc.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
            ce_sum += tape.scalar_value(ce)?;
            kl_sum += tape.scalar_value(kl)?;
            steps += 1;
            opt_enc
                .step(model.encoder.params_mut(), &g_enc)
                .context(ctx)?;
            opt_dec
                .step(model.decoder.params_mut(), &g_dec)
                .context(ctx)?;
            step += 1;
        }
        let s = steps as f64;
        let snap = diagnose(&model, epoch, norm_sum / s, ce_sum / s, kl_sum / s)
            .context(|| format!("student epoch {epoch} diagnostics"))?;
        hook(&snap).context(|| format!("epoch {epoch} hook"))?;
        history.push(snap);
    }
    Ok(TrainedStudent { model, history })
}
