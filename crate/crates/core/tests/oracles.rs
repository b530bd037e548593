//! Closed-form values for the model zoo.

use qnuis_core::bounds::{self, BoundKind, BoundOptions, FunctionSpec, QubitBranch};
use qnuis_core::classical::ClassicalModel;
use qnuis_core::linalg::{self, c, CMat, RMat};
use qnuis_core::model::random::{random_density, random_traceless_hermitian};
use qnuis_core::model::{gell_mann_basis, zoo_build, ZooConfig};
use qnuis_core::nuisance::{self, OdeOptions};
use qnuis_core::qfisher::LocalGeometry;
use qnuis_core::{Partition, StateModel, WeightMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zoo(name: &str) -> StateModel {
    zoo_build(name, &ZooConfig::default()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn clock_fisher_matrix_and_interest_variance() {
    let (t, g) = (1.0f64, 0.1f64);
    let geom = LocalGeometry::at(&zoo("qubit-clock"), &[t, g]).unwrap();
    let e = (2.0 * g * t).exp() - 1.0;
    let want = [
        [(-2.0 * g * t).exp() + g * g / e, t * g / e],
        [t * g / e, t * t / e],
    ];
    for (i, row) in want.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            assert!(close(geom.j_sld[(i, j)], w, 1e-9), "J[{i}{j}]");
        }
    }
    assert!(close(geom.j_sld_inv[(0, 0)], 0.2f64.exp(), 1e-9));
}

#[test]
fn orthogonal_clock_coordinates() {
    let p = 0.5 * (1.0 + (-0.1f64).exp());
    let geom = LocalGeometry::at(&zoo("qubit-clock-orthogonal"), &[1.0, p]).unwrap();
    assert!(close(geom.j_sld[(0, 0)], (2.0 * p - 1.0).powi(2), 1e-10));
    assert!(close(geom.j_sld[(1, 1)], 1.0 / (p * (1.0 - p)), 1e-9));
    assert!(geom.j_sld[(0, 1)].abs() < 1e-10);
    let original = LocalGeometry::at(&zoo("qubit-clock"), &[1.0, 0.1]).unwrap();
    assert!(close(
        geom.j_sld_inv[(0, 0)],
        original.j_sld_inv[(0, 0)],
        1e-8
    ));
}

#[test]
fn dice_bounds_classical_and_quantum() {
    let w = WeightMatrix::identity(1);
    let part = Partition::new(1, 2).unwrap();
    let report = ClassicalModel::dice()
        .cr_bounds(&[0.2, 0.3], &part, &w)
        .unwrap();
    assert!(close(report.values["unknown-nuisance"], 0.16, 1e-9));
    assert!(close(report.values["known-nuisance"], 0.1 / 0.7, 1e-9));
    assert!(close(report.values["info-loss"], 0.16 - 0.1 / 0.7, 1e-9));

    let q = zoo("dice");
    assert!(close(
        bounds::sld_cr(&q, &[0.2, 0.3], &part, &w).unwrap(),
        0.16,
        1e-9
    ));
    let loss = nuisance::information_loss(
        &q,
        &[0.2, 0.3],
        &part,
        &w,
        BoundKind::Sld,
        &BoundOptions::default(),
    )
    .unwrap();
    assert!(close(loss, 0.017142857142857, 1e-9));
}

#[test]
fn bloch_qubit_holevo_and_nagaoka() {
    let m = zoo("bloch-qubit");
    let theta = [0.3, 0.4, 0.5];
    let part = Partition::new(2, 3).unwrap();
    let w = WeightMatrix::identity(2);
    let geom = LocalGeometry::at(&m, &theta).unwrap();
    // Interest block of the inverse SLD Fisher matrix: 0.91 + 0.84.
    assert!(close(
        bounds::sld_cr_in(&geom, &part, &w).unwrap(),
        1.75,
        1e-12
    ));
    // The full qubit model is D-invariant, so Holevo = RLD in closed form.
    let rld = bounds::rld_cr_in(&geom, &part, &w).unwrap();
    assert!(close(rld, 2.75, 1e-9));
    let h = bounds::holevo_in(&geom, &part, &w, &BoundOptions::default()).unwrap();
    assert!(close(h.value, 2.75, 1e-4), "holevo {}", h.value);
    let nag = bounds::nagaoka_gm_in(&geom, &part, &w).unwrap();
    assert!(close(nag, 3.482050807568877, 1e-9));
    assert!(close(nag - h.value, 0.732050807568877, 1e-4));
}

/// Information loss of the Holevo bound for the Bloch qubit with `θ₃` as nuisance, with
/// `r = (1 − s²)/(1 − θ₃²)`, `P = θ_Iᵀ[Tr W·I − W]θ_I` and `q = 1 − θ₃²`:
/// `B = −P/q + r|θ₃|√det W`;
/// `B ≥ 0`: `θ_Iᵀ[Tr W/q·I − W]θ_I + 2√det W |θ₃|(1 − r)`;
/// `B < 0`: `θ₃²/q·θ_IᵀWθ_I + 2|θ₃|√det W (1 − ½ r (1 − s²)|θ₃|√det W / P)`.
fn bloch_holevo_loss(theta: [f64; 3], w: &RMat) -> f64 {
    let ti = nalgebra::DVector::from_column_slice(&theta[..2]);
    let t3 = theta[2];
    let s2: f64 = theta.iter().map(|v| v * v).sum();
    let q = 1.0 - t3 * t3;
    let r = (1.0 - s2) / q;
    let tr = w.trace();
    let sdet = w.determinant().sqrt();
    let p = (ti.transpose() * (RMat::identity(2, 2) * tr - w) * &ti)[(0, 0)];
    let b = -p / q + r * t3.abs() * sdet;
    if b >= 0.0 {
        let m2 = RMat::identity(2, 2) * (tr / q) - w;
        (ti.transpose() * m2 * &ti)[(0, 0)] + 2.0 * sdet * t3.abs() * (1.0 - r)
    } else {
        t3 * t3 / q * (ti.transpose() * w * &ti)[(0, 0)]
            + 2.0 * t3.abs() * sdet * (1.0 - 0.5 * r * (1.0 - s2) * t3.abs() * sdet / p)
    }
}

#[test]
fn bloch_holevo_information_loss_matches_two_case_formula() {
    let m = zoo("bloch-qubit");
    let part = Partition::new(2, 3).unwrap();
    let opts = BoundOptions::default();
    let cases: [([f64; 3], [[f64; 2]; 2]); 4] = [
        ([0.3, 0.4, 0.5], [[1.0, 0.0], [0.0, 1.0]]),
        ([0.6, 0.1, 0.2], [[2.0, 0.3], [0.3, 0.5]]),
        ([0.1, 0.05, 0.7], [[1.0, 0.0], [0.0, 1.0]]),
        ([0.5, -0.4, -0.3], [[1.5, -0.2], [-0.2, 1.0]]),
    ];
    for (theta, wm) in cases {
        let w_mat = RMat::from_fn(2, 2, |i, j| wm[i][j]);
        let w = WeightMatrix::new(w_mat.clone()).unwrap();
        let loss =
            nuisance::information_loss(&m, &theta, &part, &w, BoundKind::Holevo, &opts).unwrap();
        let want = bloch_holevo_loss(theta, &w_mat);
        assert!(close(loss, want, 2e-5), "{theta:?}: {loss} vs {want}");
    }
}

#[test]
fn two_parameter_qubit_closed_form_matches_optimizer() {
    let bloch = zoo("bloch-qubit");
    let opts = BoundOptions::default();
    for (theta, t3) in [([0.3, 0.4], 0.5), ([0.1, 0.05], 0.7), ([0.6, 0.1], 0.2)] {
        let sub = bloch.submodel(&[0, 1], &[theta[0], theta[1], t3]).unwrap();
        let w = WeightMatrix::identity(2);
        let closed = bounds::holevo_qubit_closed(&sub, &theta, &w).unwrap();
        let numeric = bounds::holevo_numeric(&sub, &theta, &Partition::full(2), &w, &opts).unwrap();
        assert!(
            close(closed.value, numeric.value, 1e-5),
            "{theta:?}: {} vs {}",
            closed.value,
            numeric.value
        );
        if closed.branch == QubitBranch::Rld {
            let rld = bounds::rld_cr(&sub, &theta, &Partition::full(2), &w).unwrap();
            assert!(close(closed.value, rld, 1e-9));
        }
    }
}

#[test]
fn qudit_observable_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = zoo("qudit-observable");
    let basis = gell_mann_basis(3);
    for _ in 0..10 {
        let rho = random_density(3, 0.3, &mut rng);
        let a = random_traceless_hermitian(3, &mut rng);
        let theta: Vec<f64> = basis
            .iter()
            .map(|h| linalg::trace_product(&rho, h).re)
            .collect();
        let v = nalgebra::DVector::from_iterator(
            basis.len(),
            basis.iter().map(|h| linalg::trace_product(&a, h).re),
        );
        let geom = LocalGeometry::at(&m, &theta).unwrap();
        let bound = (v.transpose() * &geom.j_sld_inv * &v)[(0, 0)];
        let mean = linalg::trace_product(&rho, &a).re;
        let var = linalg::trace_product(&rho, &(&a * &a)).re - mean * mean;
        assert!(close(bound, var, 1e-9), "{bound} vs {var}");
    }
}

#[test]
fn clock_global_orthogonalization_follows_hyperbola() {
    let m = zoo("qubit-clock");
    let grid: Vec<f64> = (0..=30).map(|k| 0.5 + 0.05 * k as f64).collect();
    let traj =
        nuisance::global_orthogonalize_ode(&m, &[0.5, 0.1], &grid, &OdeOptions::default()).unwrap();
    assert_eq!(traj.points.len(), grid.len());
    for p in &traj.points {
        assert!(p.offdiag_residual < 1e-6, "residual {}", p.offdiag_residual);
        assert!(close(p.theta[1], 0.05 / p.xi1, 1e-6));
        assert!(close(p.inverse_info_xi, p.inverse_info_theta, 1e-6));
    }
}

#[test]
fn local_orthogonalization_block_diagonalizes() {
    let m = zoo("qubit-clock");
    let theta = [1.0, 0.1];
    let part = Partition::new(1, 2).unwrap();
    let geom = LocalGeometry::at(&m, &theta).unwrap();
    let t = nuisance::local_orthogonalize(&geom.sld_qfim(), &part, &theta, &theta).unwrap();
    let jx = t.transform_fisher(&geom.j_sld);
    assert!(jx[(0, 1)].abs() < 1e-12);
    assert!(close(1.0 / jx[(0, 0)], geom.j_sld_inv[(0, 0)], 1e-12));
    let moved = t.apply(&m);
    let g2 = LocalGeometry::at(&moved, &t.new_point).unwrap();
    assert!(g2.j_sld[(0, 1)].abs() < 1e-9);
}

#[test]
fn function_of_parameters_and_generalized_bound() {
    let m = zoo("bloch-qubit");
    let theta = [0.3, 0.4, 0.5];
    let geom = LocalGeometry::at(&m, &theta).unwrap();
    // g(θ) = θ₁ + θ₂: variance bound vᵀ J^{-1} v.
    let f = FunctionSpec::linear(RMat::from_row_slice(1, 3, &[1.0, 1.0, 0.0]));
    let w = WeightMatrix::identity(1);
    let opts = BoundOptions::default();
    let sld = bounds::function_bounds_in(&geom, &f, &w, BoundKind::Sld, &opts).unwrap();
    let inv = &geom.j_sld_inv;
    assert!(close(
        sld,
        inv[(0, 0)] + inv[(1, 1)] + 2.0 * inv[(0, 1)],
        1e-12
    ));
    let hol = bounds::function_bounds_in(&geom, &f, &w, BoundKind::Holevo, &opts).unwrap();
    assert!(close(hol, sld, 1e-6));
    // An unbiased estimator of all parameters: B = I, b = 0.
    let gen = bounds::generalized_cr_in(
        &geom,
        &RMat::identity(3, 3),
        &[0.0; 3],
        &WeightMatrix::identity(3),
    )
    .unwrap();
    assert!(close(gen, inv.trace(), 1e-12));
}

#[test]
fn quantum_exponential_is_classical() {
    let f1 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        c(1.0, 0.0),
        c(-1.0, 0.0),
        c(0.0, 0.0),
    ]));
    let f2 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        c(0.0, 0.0),
        c(1.0, 0.0),
        c(-1.0, 0.0),
    ]));
    let cfg = ZooConfig {
        generators: Some(vec![f1, f2]),
        ..ZooConfig::default()
    };
    let m = zoo_build("quantum-exponential", &cfg).unwrap();
    let theta = [0.2, -0.3];
    let part = Partition::new(1, 2).unwrap();
    let w = WeightMatrix::identity(1);
    let sld = bounds::sld_cr(&m, &theta, &part, &w).unwrap();
    let rld = bounds::rld_cr(&m, &theta, &part, &w).unwrap();
    assert!(close(sld, rld, 1e-10));
    let report = qnuis_core::classify::classify_point(&m, &theta, &part).unwrap();
    assert!(report.flags.values().all(|f| f.value));
}
