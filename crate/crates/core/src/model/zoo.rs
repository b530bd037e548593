//! Built-in example models.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::StateModel;
use crate::linalg::{self, c, CMat, Modulus};
use crate::math;
use crate::{Error, Result};

/// Names accepted by [`zoo_build`].
pub const ZOO_NAMES: [&str; 6] = [
    "qubit-clock",
    "qubit-clock-orthogonal",
    "bloch-qubit",
    "qudit-observable",
    "quantum-exponential",
    "dice",
];

/// Options for [`zoo_build`]; every field is optional and ignored by models that do not use it.
#[derive(Debug, Clone, Default)]
pub struct ZooConfig {
    /// Hilbert-space dimension for `qudit-observable` (default 3) and `quantum-exponential`.
    pub d_h: Option<usize>,
    /// Orthonormal traceless Hermitian basis for `qudit-observable` (default: normalized
    /// generalized Gell-Mann matrices).
    pub basis: Option<Vec<CMat>>,
    /// Commuting Hermitian generators `F_i` for `quantum-exponential` (required).
    pub generators: Option<Vec<CMat>>,
    /// Reference state for `quantum-exponential` (default `I/d`).
    pub reference_state: Option<CMat>,
}

/// Build a named model from the zoo.
pub fn zoo_build(name: &str, config: &ZooConfig) -> Result<StateModel> {
    match name {
        "qubit-clock" => Ok(qubit_clock()),
        "qubit-clock-orthogonal" => Ok(qubit_clock_orthogonal()),
        "bloch-qubit" => Ok(bloch_qubit()),
        "qudit-observable" => qudit_observable(config),
        "quantum-exponential" => quantum_exponential(config),
        "dice" => Ok(dice()),
        other => Err(Error::Config(format!(
            "unknown zoo model '{other}' (known: {})",
            ZOO_NAMES.join(", ")
        ))),
    }
}

/// `½ [[1, r e^{it}], [r e^{-it}, 1]]`.
fn dephased_qubit(t: f64, r: f64) -> CMat {
    let off = c(r * math::cos(t), r * math::sin(t)) * 0.5;
    CMat::from_row_slice(2, 2, &[c(0.5, 0.0), off, off.conj(), c(0.5, 0.0)])
}

/// Traceless Hermitian matrix with upper off-diagonal entry `z`.
fn off_diagonal(z: crate::C64) -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), z, z.conj(), c(0.0, 0.0)])
}

/// A qubit precessing at unit frequency while dephasing at rate γ: parameters (t, γ).
fn qubit_clock() -> StateModel {
    StateModel::new("qubit-clock", 2, 2, |x: &[f64]| {
        dephased_qubit(x[0], math::exp(-x[1] * x[0]))
    })
    .with_derivatives(|x: &[f64], i| {
        let (t, g) = (x[0], x[1]);
        let r = math::exp(-g * t);
        let phase = c(math::cos(t), math::sin(t));
        let z = match i {
            0 => c(-g * r, r) * phase,
            _ => c(-t * r, 0.0) * phase,
        };
        off_diagonal(z * 0.5)
    })
    .with_intervals(vec![(0.0, f64::INFINITY), (0.0, f64::INFINITY)])
    .with_labels(&["t", "gamma"])
}

/// The clock with the coherence replaced by `2p − 1`: parameters (t, p), orthogonal.
fn qubit_clock_orthogonal() -> StateModel {
    StateModel::new("qubit-clock-orthogonal", 2, 2, |x: &[f64]| {
        dephased_qubit(x[0], 2.0 * x[1] - 1.0)
    })
    .with_derivatives(|x: &[f64], i| {
        let (t, p) = (x[0], x[1]);
        let phase = c(math::cos(t), math::sin(t));
        let z = match i {
            0 => c(0.0, 2.0 * p - 1.0) * phase,
            _ => c(2.0, 0.0) * phase,
        };
        off_diagonal(z * 0.5)
    })
    .with_intervals(vec![(f64::NEG_INFINITY, f64::INFINITY), (0.5, 1.0)])
    .with_labels(&["t", "p"])
}

/// `(I + θ·σ)/2` on the open unit ball.
fn bloch_qubit() -> StateModel {
    let [sx, sy, sz] = linalg::pauli();
    let sigma = [sx, sy, sz];
    let s2 = sigma.clone();
    StateModel::new("bloch-qubit", 2, 3, move |x: &[f64]| {
        let mut rho = linalg::identity(2) * c(0.5, 0.0);
        for (k, s) in sigma.iter().enumerate() {
            rho += s * c(0.5 * x[k], 0.0);
        }
        rho
    })
    .with_derivatives(move |_, i| &s2[i] * c(0.5, 0.0))
    .with_intervals(vec![(-1.0, 1.0); 3])
    .with_constraint(|x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() < 1.0)
    .with_labels(&["theta1", "theta2", "theta3"])
}

/// Generalized Gell-Mann matrices scaled so that `tr[H_i H_j] = δ_ij`: symmetric and
/// antisymmetric off-diagonal pairs in row-major order, then the diagonal ones.
/// For `d = 2` this is `σ_x/√2, σ_y/√2, σ_z/√2`.
pub fn gell_mann_basis(d: usize) -> Vec<CMat> {
    let s = 1.0 / math::sqrt(2.0);
    let mut out = Vec::with_capacity(d * d - 1);
    for j in 0..d {
        for k in (j + 1)..d {
            let mut sym = CMat::zeros(d, d);
            sym[(j, k)] = c(s, 0.0);
            sym[(k, j)] = c(s, 0.0);
            out.push(sym);
            let mut anti = CMat::zeros(d, d);
            anti[(j, k)] = c(0.0, -s);
            anti[(k, j)] = c(0.0, s);
            out.push(anti);
        }
    }
    for l in 1..d {
        let norm = 1.0 / math::sqrt((l * (l + 1)) as f64);
        let mut diag = CMat::zeros(d, d);
        for m in 0..l {
            diag[(m, m)] = c(norm, 0.0);
        }
        diag[(l, l)] = c(-(l as f64) * norm, 0.0);
        out.push(diag);
    }
    out
}

/// `I/d + Σ θ_i H_i` for an orthonormal traceless Hermitian basis `H`.
fn qudit_observable(config: &ZooConfig) -> Result<StateModel> {
    let basis = match (&config.basis, config.d_h) {
        (Some(b), _) => b.clone(),
        (None, Some(d)) if d >= 2 => gell_mann_basis(d),
        (None, Some(d)) => {
            return Err(Error::Config(format!(
                "qudit-observable needs d_H >= 2, got {d}"
            )))
        }
        (None, None) => gell_mann_basis(3),
    };
    let d = basis
        .first()
        .map(|h| h.nrows())
        .ok_or_else(|| Error::Config("empty observable basis".to_string()))?;
    if let Some(dh) = config.d_h {
        if dh != d {
            return Err(Error::Config(format!(
                "basis is {d}-dimensional but d_H = {dh}"
            )));
        }
    }
    if basis.len() > d * d - 1 {
        return Err(Error::Config(format!(
            "at most {} basis elements fit in dimension {d}",
            d * d - 1
        )));
    }
    for (i, h) in basis.iter().enumerate() {
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::Config(format!("basis element {i} is not {d}x{d}")));
        }
        if linalg::hermiticity_deviation(h) > 1e-12 {
            return Err(Error::Config(format!("basis element {i} is not Hermitian")));
        }
        if linalg::trace(h).modulus() > 1e-10 {
            return Err(Error::Config(format!("basis element {i} is not traceless")));
        }
        for (j, g) in basis.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            if (linalg::trace_product(h, g) - c(want, 0.0)).modulus() > 1e-10 {
                return Err(Error::Config(format!(
                    "basis elements {i}, {j} are not orthonormal"
                )));
            }
        }
    }
    let k = basis.len();
    let b1 = basis.clone();
    let labels: Vec<_> = (1..=k).map(|i| format!("theta{i}")).collect();
    let model = StateModel::new(format!("qudit-observable-{d}"), d, k, move |x: &[f64]| {
        let mut rho = linalg::identity(d) * c(1.0 / d as f64, 0.0);
        for (h, &t) in b1.iter().zip(x) {
            rho += h * c(t, 0.0);
        }
        rho
    })
    .with_derivatives(move |_, i| basis[i].clone())
    .with_intervals(vec![(-1.0, 1.0); k])
    .with_labels(&labels);
    Ok(positivity_constrained(model))
}

/// Replace a model's constraint with "ρ_θ is positive definite".
pub(super) fn positivity_constrained(model: StateModel) -> StateModel {
    let probe = model.clone();
    model.with_constraint(move |x: &[f64]| {
        let rho = probe.state_unchecked(x);
        linalg::herm_eigen(&linalg::hermitian_part(&rho)).min() > super::POSITIVITY_TOL
    })
}

/// `ρ_θ = e^{A/2} ρ₀ e^{A/2} / tr[ρ₀ e^{A}]` with `A = Σ θ_i F_i` for commuting `F_i`.
fn quantum_exponential(config: &ZooConfig) -> Result<StateModel> {
    let gens = config
        .generators
        .clone()
        .ok_or_else(|| Error::Config("quantum-exponential needs generators F".to_string()))?;
    let d = gens
        .first()
        .map(|f| f.nrows())
        .ok_or_else(|| Error::Config("empty generator list".to_string()))?;
    if let Some(dh) = config.d_h {
        if dh != d {
            return Err(Error::Config(format!(
                "generators are {d}-dimensional but d_H = {dh}"
            )));
        }
    }
    for (i, f) in gens.iter().enumerate() {
        if f.nrows() != d || f.ncols() != d {
            return Err(Error::Config(format!("generator {i} is not {d}x{d}")));
        }
        if linalg::hermiticity_deviation(f) > 1e-12 {
            return Err(Error::Config(format!("generator {i} is not Hermitian")));
        }
    }
    for i in 0..gens.len() {
        for j in (i + 1)..gens.len() {
            let scale = 1.0f64.max(linalg::frobenius(&gens[i]) * linalg::frobenius(&gens[j]));
            if linalg::frobenius(&linalg::commutator(&gens[i], &gens[j])) > 1e-10 * scale {
                return Err(Error::Config(format!(
                    "generators {i} and {j} do not commute"
                )));
            }
        }
    }
    let rho0 = match &config.reference_state {
        Some(r) => {
            if r.nrows() != d || r.ncols() != d || linalg::hermiticity_deviation(r) > 1e-12 {
                return Err(Error::Config(
                    "reference state must be a Hermitian d_H x d_H matrix".to_string(),
                ));
            }
            if (linalg::trace(r).re - 1.0).abs() > 1e-12
                || linalg::herm_eigen(r).min() <= super::POSITIVITY_TOL
            {
                return Err(Error::Config(
                    "reference state must be a full-rank density matrix".to_string(),
                ));
            }
            linalg::hermitian_part(r)
        }
        None => linalg::identity(d) * c(1.0 / d as f64, 0.0),
    };
    let k = gens.len();
    let g1 = gens.clone();
    let r1 = rho0.clone();
    let state = move |x: &[f64]| -> CMat {
        let mut a = CMat::zeros(d, d);
        for (f, &t) in g1.iter().zip(x) {
            a += f * c(t, 0.0);
        }
        let half = linalg::herm_eigen(&linalg::hermitian_part(&a)).map(|v| math::exp(0.5 * v));
        let un = &half * &r1 * &half;
        let z = linalg::trace(&un).re;
        linalg::hermitian_part(&(un * c(1.0 / z, 0.0)))
    };
    let s2 = state.clone();
    let labels: Vec<_> = (1..=k).map(|i| format!("theta{i}")).collect();
    Ok(
        StateModel::new(format!("quantum-exponential-{d}"), d, k, state)
            .with_derivatives(move |x: &[f64], i| {
                let rho = s2(x);
                let f = &gens[i];
                let mean = linalg::trace_product(f, &rho).re;
                linalg::anticommutator(f, &rho) * c(0.5, 0.0) - rho * c(mean, 0.0)
            })
            .with_labels(&labels),
    )
}

/// The three-outcome die `(θ₁, θ₂, 1 − θ₁ − θ₂)` embedded as diagonal states.
fn dice() -> StateModel {
    StateModel::new("dice", 3, 2, |x: &[f64]| {
        let mut rho = CMat::zeros(3, 3);
        rho[(0, 0)] = c(x[0], 0.0);
        rho[(1, 1)] = c(x[1], 0.0);
        rho[(2, 2)] = c(1.0 - x[0] - x[1], 0.0);
        rho
    })
    .with_derivatives(|_, i| {
        let mut d = CMat::zeros(3, 3);
        d[(i, i)] = c(1.0, 0.0);
        d[(2, 2)] = c(-1.0, 0.0);
        d
    })
    .with_intervals(vec![(0.0, 1.0), (0.0, 1.0)])
    .with_constraint(|x: &[f64]| x[0] + x[1] < 1.0)
    .with_labels(&["theta1", "theta2"])
}
