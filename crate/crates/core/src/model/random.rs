//! Seeded random states, measurements and models for property tests and benchmarks.
//!
//! All generators draw from a caller-supplied RNG, so a fixed seed reproduces the instance.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{zoo::positivity_constrained, StateModel};
use crate::linalg::{self, c, CMat};
use crate::math;

/// Complex matrix with independent entries uniform on `[-1, 1] + i[-1, 1]`.
pub fn random_complex(d: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Traceless Hermitian matrix with unit Frobenius norm.
pub fn random_traceless_hermitian(d: usize, rng: &mut impl Rng) -> CMat {
    let mut h = linalg::hermitian_part(&random_complex(d, rng));
    let shift = linalg::trace(&h) / c(d as f64, 0.0);
    for i in 0..d {
        h[(i, i)] -= shift;
    }
    let n = linalg::frobenius(&h);
    h / c(n, 0.0)
}

/// Unitary from the QR decomposition of a random complex matrix.
pub fn random_unitary(d: usize, rng: &mut impl Rng) -> CMat {
    random_complex(d, rng).qr().q()
}

/// Full-rank density matrix `(G G† + floor·I) / tr`, so every eigenvalue is at least of
/// order `floor / d`.
pub fn random_density(d: usize, floor: f64, rng: &mut impl Rng) -> CMat {
    let g = random_complex(d, rng);
    let m = &g * g.adjoint() + linalg::identity(d) * c(floor, 0.0);
    let tr = linalg::trace(&m).re;
    linalg::hermitian_part(&(m / c(tr, 0.0)))
}

/// A model together with a point in its domain.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub model: StateModel,
    pub point: Vec<f64>,
}

/// `ρ_θ = ρ₀ + Σ θ_k H_k` with random full-rank `ρ₀` and random traceless directions,
/// orthonormalized (Frobenius) and scaled so that the state stays positive on `[-1, 1]^d`.
/// Analytic derivatives. Needs `d ≤ d_h² − 1`.
pub fn random_linear_model(d_h: usize, d: usize, rng: &mut impl Rng) -> RandomInstance {
    assert!(d < d_h * d_h, "at most d_h² − 1 independent directions");
    let rho0 = random_density(d_h, 0.5, rng);
    let margin = linalg::herm_eigen(&rho0).min();
    // ‖Σ θ_k H_k‖ ≤ |θ|·scale ≤ √d·scale for orthonormal H_k and θ in the unit cube.
    let scale = 0.5 * margin / math::sqrt(d as f64);
    let mut dirs: Vec<CMat> = Vec::with_capacity(d);
    while dirs.len() < d {
        let mut h = random_traceless_hermitian(d_h, rng);
        for q in &dirs {
            let overlap = linalg::trace_product(q, &h).re;
            h -= q * c(overlap, 0.0);
        }
        let n = linalg::frobenius(&h);
        if n > 1e-3 {
            dirs.push(h / c(n, 0.0));
        }
    }
    let dirs: Vec<CMat> = dirs.into_iter().map(|h| h * c(scale, 0.0)).collect();
    let point: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.9..0.9)).collect();
    let d1 = dirs.clone();
    let model = StateModel::new(
        format!("random-linear-{d_h}x{d}"),
        d_h,
        d,
        move |x: &[f64]| {
            let mut rho = rho0.clone();
            for (h, &t) in d1.iter().zip(x) {
                rho += h * c(t, 0.0);
            }
            rho
        },
    )
    .with_derivatives(move |_, i| dirs[i].clone())
    .with_intervals(alloc::vec![(-1.0, 1.0); d]);
    RandomInstance {
        model: positivity_constrained(model),
        point,
    }
}

/// Gibbs family `ρ_θ = e^{−H(θ)} / Z` with `H(θ) = H₀ + Σ θ_k G_k` for random, generally
/// non-commuting `G_k`. Nonlinear; derivatives by central differences.
pub fn random_gibbs_model(d_h: usize, d: usize, rng: &mut impl Rng) -> RandomInstance {
    let h0 = random_traceless_hermitian(d_h, rng);
    let gens: Vec<CMat> = (0..d)
        .map(|_| random_traceless_hermitian(d_h, rng))
        .collect();
    let point: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let model = StateModel::new(
        format!("random-gibbs-{d_h}x{d}"),
        d_h,
        d,
        move |x: &[f64]| {
            let mut h = h0.clone();
            for (g, &t) in gens.iter().zip(x) {
                h += g * c(t, 0.0);
            }
            let e = linalg::herm_eigen(&h).map(|v| math::exp(-v));
            let z = linalg::trace(&e).re;
            linalg::hermitian_part(&(e / c(z, 0.0)))
        },
    )
    .with_intervals(alloc::vec![(-2.0, 2.0); d]);
    RandomInstance { model, point }
}
