//! Random instances shared by the integration tests.

#![allow(dead_code)]

use qnuis_core::linalg::{self, c, CMat, RMat};
use qnuis_core::measurement::Povm;
use qnuis_core::model::random::RandomInstance;
use qnuis_core::model::random::{random_complex, random_gibbs_model, random_linear_model};
use qnuis_core::{Partition, StateModel, WeightMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// POVM `S^{-1/2} A_x S^{-1/2}` from random positive `A_x`.
pub fn random_povm(d: usize, outcomes: usize, rng: &mut impl Rng) -> Povm {
    let raw: Vec<CMat> = (0..outcomes)
        .map(|_| {
            let g = random_complex(d, rng);
            &g * g.adjoint() + linalg::identity(d) * c(1e-3, 0.0)
        })
        .collect();
    let total = raw.iter().fold(CMat::zeros(d, d), |acc, a| acc + a);
    let s = linalg::herm_eigen(&total).map(|v| 1.0 / v.sqrt());
    let effects = raw
        .iter()
        .map(|a| linalg::hermitian_part(&(&s * a * &s)))
        .collect();
    Povm::new(effects, None).unwrap()
}

pub fn random_weight(k: usize, rng: &mut impl Rng) -> WeightMatrix {
    let a = RMat::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    WeightMatrix::new(&a * a.transpose() + RMat::identity(k, k) * 0.2).unwrap()
}

/// Weight with a random eigenbasis and eigenvalues log-uniform in `[1e-6, 1]`, so that
/// nearly rank-one weights are sampled too.
pub fn spread_weight(k: usize, rng: &mut impl Rng) -> WeightMatrix {
    let q = RMat::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0))
        .qr()
        .q();
    let l = RMat::from_diagonal(&nalgebra::DVector::from_fn(k, |_, _| {
        10f64.powf(rng.gen_range(-6.0..0.0))
    }));
    WeightMatrix::new(&q * l * q.transpose()).unwrap()
}

/// Nearly rank-one weight `vvᵀ + 10⁻⁶·I` with a random unit vector `v`. In this limit the
/// Holevo bound tends to the SLD bound along `v` while the RLD bound does not, which
/// separates the two for models that are not D-invariant.
pub fn near_rank_one_weight(k: usize, rng: &mut impl Rng) -> WeightMatrix {
    let v = nalgebra::DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)).normalize();
    WeightMatrix::new(&v * v.transpose() + RMat::identity(k, k) * 1e-6).unwrap()
}

/// Weights probing bound coincidence: spread spectra plus nearly rank-one directions.
pub fn probe_weights(k: usize, rng: &mut impl Rng) -> Vec<WeightMatrix> {
    let mut ws: Vec<WeightMatrix> = (0..8).map(|_| spread_weight(k, rng)).collect();
    if k > 1 {
        ws.extend((0..4).map(|_| near_rank_one_weight(k, rng)));
    }
    ws
}

/// A random instance of one of a few shapes, cycling with the index.
pub fn instance(index: u64, rng: &mut impl Rng) -> RandomInstance {
    match index % 4 {
        0 => random_linear_model(2, 2, rng),
        1 => random_linear_model(2, 3, rng),
        2 => random_linear_model(3, 3, rng),
        _ => random_gibbs_model(3, 2, rng),
    }
}

/// Diagonal model with random coefficients: commuting, hence classical.
pub fn random_diagonal_model(d_h: usize, d: usize, rng: &mut impl Rng) -> RandomInstance {
    let base: Vec<f64> = (0..d_h).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = base.iter().sum();
    let base: Vec<f64> = base.iter().map(|b| b / total).collect();
    let min = base.iter().cloned().fold(f64::INFINITY, f64::min);
    let dirs: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let mut v: Vec<f64> = (0..d_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = v.iter().sum::<f64>() / d_h as f64;
            let norm = v.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
            for x in &mut v {
                *x = (*x - mean) / norm * 0.4 * min / d as f64;
            }
            v
        })
        .collect();
    let model = StateModel::new("random-diagonal", d_h, d, move |x: &[f64]| {
        CMat::from_fn(d_h, d_h, |a, b| {
            if a != b {
                return c(0.0, 0.0);
            }
            let v = base[a] + dirs.iter().zip(x).map(|(h, t)| h[a] * t).sum::<f64>();
            c(v, 0.0)
        })
    })
    .with_intervals(vec![(-1.0, 1.0); d]);
    let point = (0..d).map(|_| rng.gen_range(-0.8..0.8)).collect();
    RandomInstance { model, point }
}

/// Random nuisance reparametrization `θ = Tᵀξ` that keeps the interest coordinates.
pub fn nuisance_reparam(partition: &Partition, rng: &mut impl Rng) -> RMat {
    let d = partition.d_total();
    let di = partition.d_interest();
    let mut t = RMat::identity(d, d);
    for a in 0..d {
        for j in di..d {
            t[(a, j)] = rng.gen_range(-1.0..1.0);
        }
        if a >= di {
            t[(a, a)] += 2.0;
        }
    }
    t
}

pub fn xi_point(t: &RMat, theta: &[f64]) -> Vec<f64> {
    let x = nalgebra::DVector::from_column_slice(theta);
    let xi = t.transpose().lu().solve(&x).unwrap();
    xi.iter().copied().collect()
}
