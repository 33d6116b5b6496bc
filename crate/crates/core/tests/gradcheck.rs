//! Finite-difference checks of the three trained objectives over random parameter draws.

use infoplane_core::gradcheck::grad_check;
use infoplane_core::mi::{draw_bound_noise, teacher_bound_graph, InferenceNet, SampleMode};
use infoplane_core::nn::{Activation, Mlp};
use infoplane_core::rng::{normal_tensor, stream_rng, uniform_tensor};
use infoplane_core::student::{StudentConfig, StudentModel};
use infoplane_core::teacher::{ObservationModel, TeacherConfig, TeacherModel};

const DRAWS: u64 = 20;
const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn student(seed: u64) -> StudentModel {
    let cfg = StudentConfig {
        bottleneck_dim: 3,
        encoder_hidden: vec![7],
        decoder_hidden: vec![5],
        beta: 0.3,
        ..StudentConfig::default()
    };
    StudentModel::new(6, 4, &cfg, seed).unwrap()
}

fn teacher(seed: u64, observation: ObservationModel) -> TeacherModel {
    let cfg = TeacherConfig {
        latent_dim: 2,
        hidden: vec![5],
        observation,
        ..TeacherConfig::default()
    };
    TeacherModel::new(6, &cfg, seed).unwrap()
}

#[test]
fn vib_loss_gradient() {
    for draw in 0..DRAWS {
        let s = student(draw);
        let x = uniform_tensor(&mut stream_rng(draw, "gc-x", 0), &[5, 6], 0.0, 1.0);
        let noise = normal_tensor(&mut stream_rng(draw, "gc-noise", 0), &[5, 3]);
        let labels = [0, 3, 1, 2, 3];
        let err = grad_check(
            |tape, flat| {
                let bound = s.bind_flat(tape, flat)?;
                let xv = tape.constant(x.clone());
                let nv = tape.constant(noise.clone());
                let (ce, kl) = s.vib_graph(tape, &bound, xv, &labels, nv)?;
                let scaled = tape.scale(kl, s.beta())?;
                tape.add(ce, scaled)
            },
            &s.flatten(),
            STEP,
        )
        .unwrap();
        assert!(err < TOL, "draw {draw}: {err}");
    }
}

#[test]
fn elbo_gradient() {
    for draw in 0..DRAWS {
        let obs = if draw % 2 == 0 {
            ObservationModel::Bernoulli
        } else {
            ObservationModel::Gaussian { variance: 0.3 }
        };
        let t = teacher(draw, obs);
        let x = uniform_tensor(&mut stream_rng(draw, "gc-x", 0), &[5, 6], 0.0, 1.0);
        let noise = normal_tensor(&mut stream_rng(draw, "gc-noise", 0), &[5, 2]);
        let err = grad_check(
            |tape, flat| {
                let bound = t.bind_flat(tape, flat)?;
                let xv = tape.constant(x.clone());
                let nv = tape.constant(noise.clone());
                let (recon, kl) = t.elbo_graph(tape, &bound, xv, nv)?;
                tape.sub(recon, kl)
            },
            &t.flatten(),
            STEP,
        )
        .unwrap();
        assert!(err < TOL, "draw {draw}: {err}");
    }
}

/// Reparameterized paths only: Gaussian draws, or decoder means for Bernoulli.
#[test]
fn teacher_bound_objective_gradient() {
    for draw in 0..DRAWS {
        let (obs, mode) = if draw % 2 == 0 {
            (
                ObservationModel::Gaussian { variance: 0.2 },
                SampleMode::Sample,
            )
        } else {
            (ObservationModel::Bernoulli, SampleMode::Mean)
        };
        let s = student(draw);
        let t = teacher(draw + 100, obs);
        let mlp = Mlp::new(
            &[3, 6, 4],
            Activation::Relu,
            &mut stream_rng(draw, "gc-net", 0),
        )
        .unwrap();
        let net = InferenceNet::from_mlp(mlp).unwrap();
        let z = normal_tensor(&mut stream_rng(draw, "gc-z", 0), &[4, 3]);
        let noise = draw_bound_noise(&t, 4, 3, mode, draw, "gc-bound", 0);
        let err = grad_check(
            |tape, flat| {
                let mut off = 0;
                let bound = net.mlp().bind_flat(tape, flat, &mut off)?;
                let zv = tape.constant(z.clone());
                let g = teacher_bound_graph(tape, &s, &t, &bound, zv, 3, mode, &noise)?;
                Ok(g.surrogate)
            },
            &net.mlp().flatten(),
            STEP,
        )
        .unwrap();
        assert!(err < TOL, "draw {draw}: {err}");
    }
}
