//! Acceptance suite: one `criterion=N status=PASS|FAIL ...` line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The process fails if
//! any criterion fails, except for statements recorded as known to be false (they are still
//! evaluated and reported as FAIL, together with the statement that does hold).

mod common;

use std::time::Instant;

use common::{
    instance, nuisance_reparam, probe_weights, random_diagonal_model, random_povm, random_weight,
    rng, xi_point,
};
use qnuis_core::bounds::{self, BoundOptions};
use qnuis_core::classical::ClassicalModel;
use qnuis_core::classify;
use qnuis_core::linalg;
use qnuis_core::measurement::{
    self, EstimatorKind, FinalEstimate, Povm, SimConfig, Strategy, DEFAULT_FIRST_STAGE_EXPONENT,
};
use qnuis_core::model::random::{
    random_density, random_gibbs_model, random_linear_model, random_traceless_hermitian,
    RandomInstance,
};
use qnuis_core::model::{gell_mann_basis, zoo_build, ZooConfig};
use qnuis_core::nuisance::{self, OdeOptions};
use qnuis_core::qfisher::LocalGeometry;
use qnuis_core::{Partition, StateModel, WeightMatrix};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
    /// Set when the criterion as stated is false; the reason is printed with the line.
    known_false: Option<&'static str>,
}

/// Name and check of one criterion.
type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        detail,
        known_false: None,
    }
}

fn zoo(name: &str) -> StateModel {
    zoo_build(name, &ZooConfig::default()).unwrap()
}

fn clock_fisher() -> Outcome {
    let start = Instant::now();
    let (t, g) = (1.0f64, 0.1f64);
    let geom = LocalGeometry::at(&zoo("qubit-clock"), &[t, g]).unwrap();
    let e = (2.0 * g * t).exp() - 1.0;
    let want = [
        [(-2.0 * g * t).exp() + g * g / e, t * g / e],
        [t * g / e, t * t / e],
    ];
    let mut entry_err = 0.0f64;
    for (i, row) in want.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            entry_err = entry_err.max((geom.j_sld[(i, j)] - w).abs());
        }
    }
    let inv_err = (geom.j_sld_inv[(0, 0)] - 0.2f64.exp()).abs();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        entry_err < 1e-9 && inv_err < 1e-9 && secs < 1.0,
        format!("max_entry_err={entry_err:.2e} inv11_err={inv_err:.2e} seconds={secs:.3}"),
    )
}

fn orthogonal_clock() -> Outcome {
    let p = 0.5 * (1.0 + (-0.1f64).exp());
    let geom = LocalGeometry::at(&zoo("qubit-clock-orthogonal"), &[1.0, p]).unwrap();
    let original = LocalGeometry::at(&zoo("qubit-clock"), &[1.0, 0.1]).unwrap();
    let diag_err = (geom.j_sld[(0, 0)] - (2.0 * p - 1.0).powi(2))
        .abs()
        .max((geom.j_sld[(1, 1)] - 1.0 / (p * (1.0 - p))).abs());
    let off = geom.j_sld[(0, 1)].abs();
    let inv_err = (geom.j_sld_inv[(0, 0)] - original.j_sld_inv[(0, 0)]).abs();
    outcome(
        diag_err < 1e-9 && off < 1e-10 && inv_err < 1e-8,
        format!("diag_err={diag_err:.2e} offdiag={off:.2e} inv11_err={inv_err:.2e}"),
    )
}

fn dice() -> Outcome {
    let report = ClassicalModel::dice()
        .cr_bounds(
            &[0.2, 0.3],
            &Partition::new(1, 2).unwrap(),
            &WeightMatrix::identity(1),
        )
        .unwrap();
    let unknown = report.values["unknown-nuisance"];
    let known = report.values["known-nuisance"];
    let loss = report.values["info-loss"];
    let err = (unknown - 0.16)
        .abs()
        .max((known - 0.142857142857143).abs())
        .max((loss - 0.017142857142857).abs());
    outcome(
        err < 1e-9,
        format!("partial={unknown:.9} known={known:.9} loss={loss:.9} max_err={err:.2e}"),
    )
}

fn bloch_qubit() -> Outcome {
    let start = Instant::now();
    let m = zoo("bloch-qubit");
    let part = Partition::new(2, 3).unwrap();
    let w = WeightMatrix::identity(2);
    let geom = LocalGeometry::at(&m, &[0.3, 0.4, 0.5]).unwrap();
    // D-invariant model: the Holevo bound equals the RLD bound in closed form.
    let closed = bounds::rld_cr_in(&geom, &part, &w).unwrap();
    let numeric = bounds::holevo_in(&geom, &part, &w, &BoundOptions::default())
        .unwrap()
        .value;
    let nagaoka = bounds::nagaoka_gm_in(&geom, &part, &w).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let gap = nagaoka - numeric;
    let pass = (closed - 2.75).abs() < 1e-9
        && (numeric - 2.75).abs() < 1e-4
        && (nagaoka - 3.482050807568877).abs() < 1e-9
        && (gap - 0.732050807568877).abs() < 1e-4
        && secs < 30.0;
    outcome(
        pass,
        format!(
            "holevo_closed={closed:.9} holevo_numeric={numeric:.9} nagaoka={nagaoka:.9} \
             gap={gap:.9} seconds={secs:.3}"
        ),
    )
}

fn qudit_observable() -> Outcome {
    let mut r = rng(0xA5);
    let m = zoo("qudit-observable");
    let basis = gell_mann_basis(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rho = random_density(3, 0.05, &mut r);
        let a = random_traceless_hermitian(3, &mut r);
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
        worst = worst.max((bound - var).abs());
    }
    outcome(worst < 1e-9, format!("states=20 max_err={worst:.2e}"))
}

fn scalar_interest() -> Outcome {
    let opts = BoundOptions::default();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(7000 + seed);
        let inst = instance(seed, &mut r);
        let d = inst.model.dim_param();
        let part = Partition::new(1, d).unwrap();
        let w = WeightMatrix::identity(1);
        let h = bounds::holevo_numeric(&inst.model, &inst.point, &part, &w, &opts).unwrap();
        let geom = LocalGeometry::at(&inst.model, &inst.point).unwrap();
        worst = worst.max((h.value - geom.j_sld_inv[(0, 0)]).abs());
    }
    outcome(worst < 1e-6, format!("models=20 max_err={worst:.2e}"))
}

fn bound_ordering() -> Outcome {
    let opts = BoundOptions::default();
    let (mut literal_violations, mut corrected_violations) = (0, 0);
    let mut worst_literal = 0.0f64;
    for seed in 0..50u64 {
        let mut r = rng(8000 + seed);
        let inst = instance(seed, &mut r);
        let d = inst.model.dim_param();
        let part = Partition::new(2, d).unwrap();
        let w = random_weight(2, &mut r);
        let geom = LocalGeometry::at(&inst.model, &inst.point).unwrap();
        let s = bounds::sld_cr_in(&geom, &part, &w).unwrap();
        let rl = bounds::rld_cr_in(&geom, &part, &w).unwrap();
        let h = bounds::holevo_in(&geom, &part, &w, &opts).unwrap().value;
        let tol = 1e-6;
        if !(s <= h + tol && h <= rl.min(2.0 * s) + tol) {
            literal_violations += 1;
            worst_literal = worst_literal.max(h - rl);
        }
        if !(s.max(rl) <= h + tol && h <= 2.0 * s + tol) {
            corrected_violations += 1;
        }
    }
    let mut povm_violations = 0;
    let mut max_gm_excess = f64::NEG_INFINITY;
    for seed in 0..50u64 {
        let mut r = rng(9000 + seed);
        let d_h = 2 + (seed % 2) as usize;
        let inst = random_linear_model(d_h, d_h * d_h - 1, &mut r);
        let povm = random_povm(d_h, 2 + (seed % 9) as usize, &mut r);
        let geom = LocalGeometry::at(&inst.model, &inst.point).unwrap();
        let jp = measurement::classical_fisher_in(&geom, &povm).unwrap();
        let min_eig = linalg::sym_eigen(&(&geom.j_sld - &jp))
            .values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let gm = (&geom.j_sld_inv * &jp).trace() - (d_h - 1) as f64;
        max_gm_excess = max_gm_excess.max(gm);
        if min_eig < -1e-8 || gm > 1e-8 {
            povm_violations += 1;
        }
    }
    let attainable = corrected_violations == 0 && povm_violations == 0;
    Outcome {
        pass: literal_violations == 0 && attainable,
        detail: format!(
            "instances=50 literal_violations={literal_violations} max_holevo_minus_rld={worst_literal:.3e} \
             corrected_order_violations={corrected_violations} povms=50 povm_violations={povm_violations} \
             max_gill_massar_excess={max_gm_excess:.2e}"
        ),
        known_false: (literal_violations > 0 && attainable).then_some(
            "the RLD bound is a lower bound on the Holevo bound (C^R <= C^H), so C^H <= C^R fails \
             for models that are not D-invariant; max(C^S, C^R) <= C^H <= 2 C^S holds on all instances",
        ),
    }
}

fn optimal_pvm() -> Outcome {
    let mut models: Vec<RandomInstance> = vec![
        RandomInstance {
            model: zoo("qubit-clock"),
            point: vec![1.0, 0.1],
        },
        RandomInstance {
            model: zoo("bloch-qubit"),
            point: vec![0.3, 0.4, 0.5],
        },
        RandomInstance {
            model: zoo("qudit-observable"),
            point: vec![0.1, -0.05, 0.08, 0.02, -0.1, 0.05, 0.03, -0.04],
        },
    ];
    let mut r = rng(0xB6);
    models.push(random_linear_model(3, 3, &mut r));
    models.push(random_gibbs_model(3, 2, &mut r));
    let mut worst = 0.0f64;
    for inst in &models {
        let geom = LocalGeometry::at(&inst.model, &inst.point).unwrap();
        let d = geom.dim_param();
        for _ in 0..20 {
            let v: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let (povm, _) = Povm::spectral(&linalg::combine_real(&v, &geom.slds), 1e-10);
            let jp = measurement::classical_fisher_in(&geom, &povm).unwrap();
            let vv = nalgebra::DVector::from_column_slice(&v);
            let quantum = (vv.transpose() * &geom.j_sld * &vv)[(0, 0)];
            let classical = (vv.transpose() * &jp * &vv)[(0, 0)];
            worst = worst.max((quantum - classical).abs());
        }
    }
    outcome(
        worst < 1e-8,
        format!("models=5 directions=20 max_err={worst:.2e}"),
    )
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let part = Partition::new(1, 2).unwrap();
    let clock = measurement::simulate(
        &zoo("qubit-clock"),
        &[1.0, 0.1],
        &SimConfig {
            strategy: Strategy::TwoStep {
                first_stage: None,
                first_stage_exponent: DEFAULT_FIRST_STAGE_EXPONENT,
                final_estimate: FinalEstimate::Pooled,
            },
            partition: part,
            n_copies: 10_000,
            n_trials: 2000,
            seed: 7,
        },
    )
    .unwrap();
    let dice = measurement::simulate(
        &zoo("dice"),
        &[0.2, 0.3],
        &SimConfig {
            strategy: Strategy::Repetitive {
                povm: Povm::computational(3),
                estimator: EstimatorKind::Mle,
            },
            partition: part,
            n_copies: 10_000,
            n_trials: 2000,
            seed: 7,
        },
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let clock_ratio = clock.scaled_mse / 0.2f64.exp();
    let dice_ratio = dice.scaled_mse / 0.16;
    outcome(
        (clock_ratio - 1.0).abs() < 0.10 && (dice_ratio - 1.0).abs() < 0.05 && secs < 120.0,
        format!(
            "clock_scaled_mse={:.6} clock_ratio={clock_ratio:.4} dice_scaled_mse={:.6} \
             dice_ratio={dice_ratio:.4} seconds={secs:.2}",
            clock.scaled_mse, dice.scaled_mse
        ),
    )
}

fn classification_routes() -> Outcome {
    let opts = BoundOptions::default();
    let mut disagreements = 0;
    let mut verdicts = [[0usize; 2]; 2];
    for seed in 0..20u64 {
        let mut r = rng(10_000 + seed);
        let (inst, di) = match seed % 5 {
            0 => (random_linear_model(2, 3, &mut r), 2),
            1 => (random_linear_model(2, 2, &mut r), 2),
            2 => (random_linear_model(3, 3, &mut r), 1),
            3 => (random_diagonal_model(3, 2, &mut r), 2),
            _ => (random_linear_model(3, 3, &mut r), 2),
        };
        let part = Partition::new(di, inst.model.dim_param()).unwrap();
        let geom = LocalGeometry::at(&inst.model, &inst.point).unwrap();
        let d_inv = classify::is_d_invariant_in(&geom, &part).unwrap();
        let asym = classify::is_asymptotically_classical_in(&geom, &part).unwrap();
        let classical = classify::is_classical_in(&geom).unwrap();
        let (mut all_rld, mut all_sld) = (true, true);
        for w in probe_weights(di, &mut r) {
            let s = bounds::sld_cr_in(&geom, &part, &w).unwrap();
            let rl = bounds::rld_cr_in(&geom, &part, &w).unwrap();
            let h = bounds::holevo_in(&geom, &part, &w, &opts).unwrap().value;
            let tol = 1e-7 * h.max(1.0);
            all_rld &= (h - rl).abs() < tol;
            all_sld &= (h - s).abs() < tol;
        }
        let agree = d_inv.routes_agree()
            && classical.routes_agree()
            && d_inv.value == all_rld
            && asym.value == all_sld;
        if !agree {
            disagreements += 1;
        }
        verdicts[d_inv.value as usize][asym.value as usize] += 1;
    }
    outcome(
        disagreements == 0,
        format!(
            "instances=20 disagreements={disagreements} d_invariant={} asymptotically_classical={}",
            verdicts[1][0] + verdicts[1][1],
            verdicts[0][1] + verdicts[1][1]
        ),
    )
}

fn invariance() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(11_000 + seed);
        let inst = match seed % 2 {
            0 => random_linear_model(3, 3, &mut r),
            _ => random_linear_model(2, 3, &mut r),
        };
        let part = Partition::new(1 + (seed % 2) as usize, 3).unwrap();
        let t = nuisance_reparam(&part, &mut r);
        let xi = xi_point(&t, &inst.point);
        let re = inst.model.linear_reparametrize(t);
        let a = LocalGeometry::at(&inst.model, &inst.point).unwrap();
        let b = LocalGeometry::at(&re, &xi).unwrap();
        let sa = nuisance::schur_complement_real(&a.j_sld, &part).unwrap();
        let sb = nuisance::schur_complement_real(&b.j_sld, &part).unwrap();
        worst = worst.max(linalg::max_abs_real(&(&sa - &sb)));
    }
    let grid: Vec<f64> = (0..=30).map(|k| 0.5 + 0.05 * k as f64).collect();
    let traj = nuisance::global_orthogonalize_ode(
        &zoo("qubit-clock"),
        &[0.5, 0.1],
        &grid,
        &OdeOptions::default(),
    )
    .unwrap();
    let drift = traj
        .points
        .iter()
        .map(|p| (p.inverse_info_xi - p.inverse_info_theta).abs())
        .fold(0.0, f64::max);
    outcome(
        worst < 1e-8 && drift < 1e-6,
        format!(
            "reparametrizations=20 max_partial_fisher_err={worst:.2e} trajectory_points={} \
             max_inverse_info_drift={drift:.2e}",
            traj.points.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("clock_fisher_matrix", clock_fisher),
        ("orthogonal_clock_coordinates", orthogonal_clock),
        ("dice_bounds", dice),
        ("bloch_qubit_holevo_nagaoka", bloch_qubit),
        ("qudit_observable_variance", qudit_observable),
        ("scalar_interest_collapse", scalar_interest),
        ("bound_ordering", bound_ordering),
        ("optimal_pvm_direction", optimal_pvm),
        ("monte_carlo_achievability", monte_carlo),
        ("classification_routes", classification_routes),
        ("reparametrization_invariance", invariance),
    ];
    let (mut passed, mut unexpected) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let mut line = format!(
            "criterion={} name={name} status={status} {}",
            i + 1,
            o.detail
        );
        if o.pass {
            passed += 1;
        } else if let Some(reason) = o.known_false {
            line.push_str(&format!(" note=\"known false as stated: {reason}\""));
        } else {
            unexpected += 1;
        }
        println!("{line}");
    }
    println!(
        "summary passed={passed} failed={} unexpected_failures={unexpected}",
        criteria.len() - passed
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
