//! Bounds and ELBOs checked against closed-form linear-Gaussian quantities.

use nalgebra::{DMatrix, DVector};

use infoplane_core::fixtures::LinearGaussian;
use infoplane_core::mi::{
    mi_xz_direct_upper, mi_xz_teacher_upper, InferenceNet, TeacherBoundConfig,
};
use infoplane_core::optim::OptimizerConfig;
use infoplane_core::rng::{normal_tensor, stream_rng, uniform_tensor};
use infoplane_core::teacher::{train_teacher, ObservationModel, TeacherConfig, TeacherModel};
use infoplane_core::Tensor;

#[test]
fn direct_bound_upper_bounds_the_gaussian_channel() {
    let x = LinearGaussian::inputs(2000, 3);
    let draws = uniform_tensor(&mut stream_rng(8, "pairs", 0), &[10, 2], 0.2, 2.5);
    for i in 0..10 {
        let (a, sigma) = (draws.row(i)[0], draws.row(i)[1]);
        let f = LinearGaussian::new(a, sigma, 0.9);
        let est = mi_xz_direct_upper(&f.student().unwrap(), &x).unwrap();
        assert!(
            est.value >= f.truth(),
            "a={a} sigma={sigma}: {} < {}",
            est.value,
            f.truth()
        );
    }
}

fn bound_config(steps: usize, n: usize) -> TeacherBoundConfig {
    TeacherBoundConfig {
        n_outer: n,
        mc_samples: 8,
        opt_steps: steps,
        optimizer: OptimizerConfig::adam(1e-2),
        ..TeacherBoundConfig::default()
    }
}

#[test]
fn objective_lower_bounds_log_marginal_and_gets_close() {
    // Small observation noise keeps the unavoidable gap E_q Jensen term near 0.025 nat.
    let f = LinearGaussian::new(1.0, 1.0, 0.95f64.sqrt());
    let (s, t) = (f.student().unwrap(), f.teacher().unwrap());
    let net = InferenceNet::new(1, 1, &[128], 1).unwrap();
    let out = mi_xz_teacher_upper(&s, &t, net, &bound_config(300, 2048), 21).unwrap();
    let log_pz = out
        .codes
        .data()
        .iter()
        .map(|&z| f.log_marginal(z))
        .sum::<f64>()
        / 2048.0;
    for h in &out.history {
        assert!(
            h.objective <= log_pz,
            "step {}: {} > {}",
            h.step,
            h.objective,
            log_pz
        );
    }
    assert!(out.objective.mean <= log_pz);
    assert!(
        log_pz - out.objective.mean < 0.05,
        "gap {}",
        log_pz - out.objective.mean
    );
}

#[test]
fn teacher_bound_brackets_truth_and_improves_with_training() {
    let f = LinearGaussian::new(1.0, 1.0, 0.85f64.sqrt());
    let (s, t) = (f.student().unwrap(), f.teacher().unwrap());
    let net = InferenceNet::new(1, 1, &[128], 2).unwrap();
    let out = mi_xz_teacher_upper(&s, &t, net, &bound_config(200, 4096), 22).unwrap();
    let truth = f.truth();
    assert!((truth - 0.3466).abs() < 1e-4);
    let v = out.estimate.value;
    assert!(v >= truth && v - truth < 0.2, "estimate {v}, truth {truth}");

    let windows: Vec<f64> = out
        .history
        .chunks(10)
        .map(|w| w.iter().map(|h| h.estimate).sum::<f64>() / w.len() as f64)
        .collect();
    assert!(windows.last().unwrap() < &windows[0]);
    for pair in windows.windows(2) {
        // Past convergence successive windows differ only by Monte Carlo noise.
        assert!(pair[1] <= pair[0] + 0.01, "{windows:?}");
    }
}

/// Exact ELBO and evidence of a linear-Gaussian VAE with `hidden = []`.
fn analytic_elbo_and_evidence(model: &TeacherModel, x: &Tensor, psi: f64) -> (f64, f64) {
    let (d, l) = (x.cols(), model.latent_dim());
    let dec = model.decoder().params();
    let w = DMatrix::from_row_slice(l, d, dec[0].data());
    let b = DVector::from_column_slice(dec[1].data());
    let (qm, qlv) = model.encode(x).unwrap();

    let cov = w.transpose() * &w + DMatrix::identity(d, d) * psi;
    let chol = cov.clone().cholesky().unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    let (mut elbo, mut evidence) = (0.0, 0.0);
    for i in 0..x.rows() {
        let xi = DVector::from_column_slice(x.row(i));
        let centered = &xi - &b;
        evidence += -0.5 * (d as f64 * ln2pi + logdet + centered.dot(&chol.solve(&centered)));

        let m = DVector::from_column_slice(qm.row(i));
        let v: Vec<f64> = qlv.row(i).iter().map(|lv| lv.exp()).collect();
        let resid = &xi - w.transpose() * &m - &b;
        let spread: f64 = (0..l).map(|j| v[j] * w.row(j).norm_squared()).sum();
        let recon =
            -0.5 * d as f64 * (ln2pi + psi.ln()) - (resid.norm_squared() + spread) / (2.0 * psi);
        let kl: f64 = (0..l)
            .map(|j| 0.5 * (v[j] + m[j] * m[j] - 1.0 - qlv.row(i)[j]))
            .sum();
        elbo += recon - kl;
    }
    let n = x.rows() as f64;
    (elbo / n, evidence / n)
}

#[test]
fn linear_vae_elbo_approaches_its_evidence() {
    let (n, d, psi) = (500, 4, 0.1f64);
    let w_true = Tensor::matrix(1, d, vec![1.0, -0.6, 0.4, 0.8]).unwrap();
    let z = normal_tensor(&mut stream_rng(1, "factor-z", 0), &[n, 1]);
    let eps = normal_tensor(&mut stream_rng(1, "factor-eps", 0), &[n, d]);
    let x = z
        .matmul(&w_true)
        .unwrap()
        .zip_map(&eps, |m, e| m + psi.sqrt() * e)
        .unwrap();

    let base = TeacherConfig {
        latent_dim: 1,
        hidden: vec![],
        observation: ObservationModel::Gaussian { variance: psi },
        batch_size: 50,
        optimizer: OptimizerConfig::adam(1e-2),
        ..TeacherConfig::default()
    };
    let mut gap = f64::NAN;
    // Runs with fewer epochs are prefixes of the longer run.
    for epochs in [0, 1, 5, 20, 60, 150] {
        let trained = train_teacher(
            &TeacherConfig {
                epochs,
                ..base.clone()
            },
            &x,
            4,
        )
        .unwrap();
        let (elbo, evidence) = analytic_elbo_and_evidence(&trained.model, &x, psi);
        assert!(
            elbo <= evidence + 1e-12,
            "epoch {epochs}: {elbo} > {evidence}"
        );
        gap = evidence - elbo;
    }
    assert!(gap < 0.1, "final gap {gap}");
}
