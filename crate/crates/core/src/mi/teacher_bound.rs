//! Upper bound on `I(X;Z)` that exploits the known teacher `p(x|z_v)`.
//!
//! For a code `z` the inference network proposes `q(z_v|z)`; with
//! `x' ~ p(x|z_v')` for `z_v' ~ q`,
//!
//! ```text
//! log p(z) >= E_q log p(z|x') - KL(q(z_v|z) || N(0, I))
//! ```
//!
//! and `I(X;Z) <= -E_x H[p(z|x)] - E_z [that lower bound]`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::distributions::{
    bernoulli_logits_log_prob_rows, gauss_log_prob_rows, kl_standard_rows, reparam_sample,
    GaussianVars, HALF_LN_2PI,
};
use crate::error::{Error, Result, ResultExt};
use crate::nn::{Activation, BoundMlp, Mlp};
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::rng::{normal_tensor, stream_rng, uniform_tensor};
use crate::student::StudentModel;
use crate::teacher::{ObservationModel, TeacherModel};
use crate::tensor::Tensor;

use super::{mean_and_se, EstimateKind, MIEstimate};

/// How `x'` is drawn from `p(x|z_v')`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// Draw from the observation model. Bernoulli draws are discrete, so their
    /// gradient uses the score function with a leave-one-out baseline.
    #[default]
    Sample,
    /// Use the decoder mean.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherBoundConfig {
    pub n_outer: usize,
    pub mc_samples: usize,
    pub opt_steps: usize,
    pub optimizer: OptimizerConfig,
    pub sample_mode: SampleMode,
    pub hidden: Vec<usize>,
}

impl Default for TeacherBoundConfig {
    fn default() -> Self {
        TeacherBoundConfig {
            n_outer: 512,
            mc_samples: 8,
            opt_steps: 500,
            optimizer: OptimizerConfig::adam(1e-3),
            sample_mode: SampleMode::Sample,
            hidden: vec![128],
        }
    }
}

/// `q(z_v|z)`: an MLP from student codes to a diagonal Gaussian over teacher latents.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceNet {
    mlp: Mlp,
    latent_dim: usize,
}

impl InferenceNet {
    /// Xavier hidden layers and a zero output layer, so the net starts at the prior.
    pub fn new(
        bottleneck_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = vec![bottleneck_dim];
        sizes.extend(hidden);
        sizes.push(2 * latent_dim);
        let mut mlp = Mlp::new(
            &sizes,
            Activation::Relu,
            &mut stream_rng(seed, "inference-net-init", 0),
        )?;
        let (w, b) = mlp.last_layer_mut();
        w.data_mut().fill(0.0);
        b.data_mut().fill(0.0);
        Ok(InferenceNet { mlp, latent_dim })
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if !mlp.output_dim().is_multiple_of(2) {
            return Err(Error::Invalid(
                "inference net output must be mean and log-variance".into(),
            ));
        }
        let latent_dim = mlp.output_dim() / 2;
        Ok(InferenceNet { mlp, latent_dim })
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    /// `q(z_v|z)` parameters as `(mean, log_var)`.
    pub fn posterior(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let head = self.mlp.apply(z)?;
        let l = self.latent_dim;
        Ok((head.slice_cols(0, l), head.slice_cols(l, 2 * l)))
    }
}

/// Noise for one evaluation of the bound on `n` codes with `mc` draws each.
#[derive(Clone, Debug)]
pub struct BoundNoise {
    /// `[n·mc, latent]` standard normals for `z_v'`.
    pub zv: Tensor,
    /// `[n·mc, d]`: uniforms (Bernoulli) or standard normals (Gaussian);
    /// absent in mean mode.
    pub x: Option<Tensor>,
}

pub fn draw_bound_noise(
    teacher: &TeacherModel,
    n: usize,
    mc: usize,
    mode: SampleMode,
    seed: u64,
    stream: &str,
    index: u64,
) -> BoundNoise {
    let rows = n * mc;
    let zv = normal_tensor(
        &mut stream_rng(seed, &format!("{stream}-zv"), index),
        &[rows, teacher.latent_dim()],
    );
    let shape = [rows, teacher.data_dim()];
    let mut rng = stream_rng(seed, &format!("{stream}-x"), index);
    let x = match (mode, teacher.observation()) {
        (SampleMode::Mean, _) => None,
        (SampleMode::Sample, ObservationModel::Bernoulli) => {
            Some(uniform_tensor(&mut rng, &shape, 0.0, 1.0))
        }
        (SampleMode::Sample, ObservationModel::Gaussian { .. }) => {
            Some(normal_tensor(&mut rng, &shape))
        }
    };
    BoundNoise { zv, x }
}

/// Nodes produced by [`teacher_bound_graph`].
pub struct BoundGraph {
    /// `[n]` per-code lower bound on `log p(z)`.
    pub per_row: Var,
    /// Scalar whose gradient is an unbiased estimate of the gradient of the
    /// mean objective with respect to the inference net.
    pub surrogate: Var,
}

fn check_dims(
    student: &StudentModel,
    teacher: &TeacherModel,
    bottleneck: usize,
    latent: usize,
) -> Result<()> {
    if student.data_dim() != teacher.data_dim() {
        return Err(Error::shape(
            "teacher_bound",
            &[student.data_dim()],
            &[teacher.data_dim()],
        ));
    }
    if bottleneck != student.bottleneck_dim() || latent != teacher.latent_dim() {
        return Err(Error::shape(
            "teacher_bound",
            &[student.bottleneck_dim(), teacher.latent_dim()],
            &[bottleneck, latent],
        ));
    }
    Ok(())
}

/// Builds the bound for codes `z` (`[n, K]`) with the inference net bound as `net`.
#[allow(clippy::too_many_arguments)]
pub fn teacher_bound_graph(
    tape: &mut Tape,
    student: &StudentModel,
    teacher: &TeacherModel,
    net: &BoundMlp,
    z: Var,
    mc: usize,
    mode: SampleMode,
    noise: &BoundNoise,
) -> Result<BoundGraph> {
    let n = tape.value(z).rows();
    let latent = teacher.latent_dim();
    if mc == 0 || noise.zv.shape() != [n * mc, latent] {
        return Err(Error::shape(
            "teacher_bound_noise",
            &[n * mc, latent],
            noise.zv.shape(),
        ));
    }
    let head = net.forward(tape, z)?;
    let q = GaussianVars::from_head(tape, head, latent)?;
    let q_rep = GaussianVars {
        mean: tape.repeat_rows(q.mean, mc)?,
        log_var: tape.repeat_rows(q.log_var, mc)?,
    };
    let eps = tape.constant(noise.zv.clone());
    let zv = reparam_sample(tape, q_rep, eps)?;
    let out = teacher.decoder().bind(tape, false).forward(tape, zv)?;

    let mut score = None;
    let x_prime = match (mode, teacher.observation(), &noise.x) {
        (SampleMode::Mean, ObservationModel::Bernoulli, _) => tape.sigmoid(out)?,
        (SampleMode::Mean, ObservationModel::Gaussian { .. }, _) => out,
        (SampleMode::Sample, ObservationModel::Bernoulli, Some(u)) => {
            let probs = tape.value(out).map(crate::autodiff::sigmoid);
            let draws = tape.constant(probs.zip_map(u, |p, u| if u < p { 1.0 } else { 0.0 })?);
            score = Some(bernoulli_logits_log_prob_rows(tape, out, draws)?);
            draws
        }
        (SampleMode::Sample, ObservationModel::Gaussian { variance }, Some(e)) => {
            let e = tape.constant(e.clone());
            let scaled = tape.scale(e, variance.sqrt())?;
            tape.add(out, scaled)?
        }
        (SampleMode::Sample, _, None) => {
            return Err(Error::Contract(
                "sample mode needs observation noise".into(),
            ));
        }
    };

    let p_head = student.encoder().bind(tape, false).forward(tape, x_prime)?;
    let p = GaussianVars::from_head(tape, p_head, student.bottleneck_dim())?;
    let z_rep = tape.repeat_rows(z, mc)?;
    let lp = gauss_log_prob_rows(tape, p, z_rep)?;
    let lp_grid = tape.reshape(lp, &[n, mc])?;
    let lp_sum = tape.sum_cols(lp_grid)?;
    let lp_mean = tape.scale(lp_sum, 1.0 / mc as f64)?;
    let kl = kl_standard_rows(tape, q)?;
    let per_row = tape.sub(lp_mean, kl)?;
    let mut surrogate = tape.mean(per_row)?;

    if let Some(score) = score {
        let f = tape.value(lp).data().to_vec();
        let mut adv = vec![0.0; f.len()];
        for i in 0..n {
            let block = &f[i * mc..(i + 1) * mc];
            let total: f64 = block.iter().sum();
            for k in 0..mc {
                let baseline = if mc > 1 {
                    (total - block[k]) / (mc - 1) as f64
                } else {
                    0.0
                };
                adv[i * mc + k] = block[k] - baseline;
            }
        }
        let adv = tape.constant(Tensor::vector(adv));
        let weighted = tape.mul(score, adv)?;
        let reinforce = tape.mean(weighted)?;
        surrogate = tape.add(surrogate, reinforce)?;
    }
    Ok(BoundGraph { per_row, surrogate })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub mean: f64,
    pub std_error: f64,
    pub per_row: Vec<f64>,
}

fn evaluate(
    student: &StudentModel,
    teacher: &TeacherModel,
    net: &InferenceNet,
    z: &Tensor,
    mc: usize,
    mode: SampleMode,
    noise: &BoundNoise,
) -> Result<ObjectiveValue> {
    let mut tape = Tape::new();
    let bound = net.mlp.bind(&mut tape, false);
    let zv = tape.constant(z.clone());
    let g = teacher_bound_graph(&mut tape, student, teacher, &bound, zv, mc, mode, noise)?;
    let per_row = tape.value(g.per_row).data().to_vec();
    let (mean, std_error) = mean_and_se(&per_row);
    Ok(ObjectiveValue {
        mean,
        std_error,
        per_row,
    })
}

/// Lower bound on `log p(z)` for each row of `z`, averaged.
#[allow(clippy::too_many_arguments)]
pub fn teacher_bound_objective(
    student: &StudentModel,
    teacher: &TeacherModel,
    net: &InferenceNet,
    z: &Tensor,
    mc: usize,
    mode: SampleMode,
    seed: u64,
) -> Result<ObjectiveValue> {
    check_dims(student, teacher, net.bottleneck_dim(), net.latent_dim())?;
    if z.shape().len() != 2 || z.cols() != student.bottleneck_dim() || z.rows() == 0 {
        return Err(Error::shape(
            "teacher_bound_objective",
            &[student.bottleneck_dim()],
            z.shape(),
        ));
    }
    let noise = draw_bound_noise(
        teacher,
        z.rows(),
        mc,
        mode,
        seed,
        "teacher-bound-objective",
        0,
    );
    evaluate(student, teacher, net, z, mc, mode, &noise)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InnerStep {
    pub step: usize,
    /// Mean objective before this step's update.
    pub objective: f64,
    pub estimate: f64,
}

#[derive(Clone, Debug)]
pub struct TeacherBoundOutcome {
    pub estimate: MIEstimate,
    pub net: InferenceNet,
    pub history: Vec<InnerStep>,
    /// Mean `log p(z)` lower bound at the final evaluation.
    pub objective: ObjectiveValue,
    /// Mean `H[p(z|x)]` over the outer samples.
    pub mean_entropy: f64,
    /// The outer codes `z` the bound was computed on.
    pub codes: Tensor,
}

/// Samples `n_outer` pairs from the teacher, trains `net` for `opt_steps`
/// to tighten the `log p(z)` bound, and returns the `I(X;Z)` upper bound
/// evaluated with fresh noise.
///
/// `net` may be fresh or carried over from an earlier call; optimizer
/// moments always start from zero.
pub fn mi_xz_teacher_upper(
    student: &StudentModel,
    teacher: &TeacherModel,
    net: InferenceNet,
    config: &TeacherBoundConfig,
    seed: u64,
) -> Result<TeacherBoundOutcome> {
    check_dims(student, teacher, net.bottleneck_dim(), net.latent_dim())?;
    if config.n_outer == 0 || config.mc_samples == 0 {
        return Err(Error::Invalid(
            "teacher bound needs n_outer > 0 and mc_samples > 0".into(),
        ));
    }
    let (n, mc, mode) = (config.n_outer, config.mc_samples, config.sample_mode);

    let (_, x) = teacher.sample(n, seed)?;
    let (mean, lv) = student.encode(&x)?;
    let k = student.bottleneck_dim() as f64;
    let entropies: Vec<f64> = (0..n)
        .map(|i| k * (HALF_LN_2PI + 0.5) + 0.5 * lv.row(i).iter().sum::<f64>())
        .collect();
    let mean_entropy = entropies.iter().sum::<f64>() / n as f64;
    let eps = normal_tensor(&mut stream_rng(seed, "teacher-bound-z", 0), mean.shape());
    let z = lv.map(|l| (0.5 * l).exp()).zip_map(&eps, |s, e| s * e)?;
    let z = mean.zip_map(&z, |m, e| m + e)?;

    let mut net = net;
    let mut opt = OptimizerState::new(config.optimizer.clone(), net.mlp.params());
    let mut history = Vec::with_capacity(config.opt_steps);
    for step in 0..config.opt_steps {
        let ctx = || format!("teacher bound inner step {step}");
        let noise = draw_bound_noise(
            teacher,
            n,
            mc,
            mode,
            seed,
            "teacher-bound-train",
            step as u64,
        );
        let mut tape = Tape::new();
        let bound = net.mlp.bind(&mut tape, true);
        let zv = tape.constant(z.clone());
        let g = teacher_bound_graph(&mut tape, student, teacher, &bound, zv, mc, mode, &noise)
            .context(ctx)?;
        let objective = tape.value(g.per_row).mean();
        let loss = tape.neg(g.surrogate).context(ctx)?;
        let grads = tape.backward(loss).context(ctx)?;
        let g_net: Vec<Tensor> = bound
            .vars
            .iter()
            .zip(net.mlp.params())
            .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
            .collect();
        opt.step(net.mlp.params_mut(), &g_net).context(ctx)?;
        history.push(InnerStep {
            step,
            objective,
            estimate: -mean_entropy - objective,
        });
    }

    let noise = draw_bound_noise(teacher, n, mc, mode, seed, "teacher-bound-eval", 0);
    let objective = evaluate(student, teacher, &net, &z, mc, mode, &noise)
        .context(|| "teacher bound evaluation")?;
    let per_row: Vec<f64> = entropies
        .iter()
        .zip(&objective.per_row)
        .map(|(h, o)| -h - o)
        .collect();
    let (value, se) = mean_and_se(&per_row);
    let estimate = MIEstimate::new(value, EstimateKind::XzTeacherUpper, n * mc, Some(se))?;
    Ok(TeacherBoundOutcome {
        estimate,
        net,
        history,
        objective,
        mean_entropy,
        codes: z,
    })
}
