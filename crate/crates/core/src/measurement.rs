//! POVMs, induced classical models, optimal projection measurements, locally unbiased
//! estimators and Monte-Carlo simulation of the repetitive and two-step strategies.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds;
use crate::classical::{self, ClassicalModel};
use crate::linalg::{self, c, CMat, RMat};
use crate::model::{Partition, StateModel, WeightMatrix};
use crate::qfisher::{FisherKind, LocalGeometry, Qfim};
use crate::{math, Error, Result};

/// Effects may have eigenvalues down to `−POVM_TOL` and must sum to the identity within it.
pub const POVM_TOL: f64 = 1e-10;
/// Outcomes less likely than this are dropped from Fisher sums (if they carry no derivative
/// weight).
pub const PROB_FLOOR: f64 = 1e-12;
/// Eigenvalues of the optimal observable closer than this share one projector.
pub const EIGEN_MERGE_GAP: f64 = 1e-10;

/// A finite POVM with outcome labels.
#[derive(Debug, Clone)]
pub struct Povm {
    effects: Vec<CMat>,
    labels: Vec<String>,
}

impl Povm {
    /// Validate and wrap a list of effects; labels default to `0, 1, …`.
    pub fn new(effects: Vec<CMat>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = effects
            .first()
            .map(|e| e.nrows())
            .ok_or_else(|| Error::InvalidPovm("no effects".into()))?;
        let mut sum = CMat::zeros(n, n);
        for (x, e) in effects.iter().enumerate() {
            if e.nrows() != n || e.ncols() != n {
                return Err(Error::InvalidPovm(format!("effect {x} is not {n}x{n}")));
            }
            if linalg::hermiticity_deviation(e) > POVM_TOL {
                return Err(Error::InvalidPovm(format!("effect {x} is not Hermitian")));
            }
            let lo = linalg::herm_eigen(e).min();
            if lo < -POVM_TOL {
                return Err(Error::InvalidPovm(format!(
                    "effect {x} has eigenvalue {lo:e}"
                )));
            }
            sum += e;
        }
        let dev = linalg::max_abs(&(sum - linalg::identity(n)));
        if dev > POVM_TOL {
            return Err(Error::InvalidPovm(format!(
                "effects sum to the identity only within {dev:e}"
            )));
        }
        let labels = match labels {
            Some(l) if l.len() == effects.len() => l,
            Some(l) => {
                return Err(Error::InvalidPovm(format!(
                    "{} labels for {} effects",
                    l.len(),
                    effects.len()
                )))
            }
            None => (0..effects.len()).map(|x| x.to_string()).collect(),
        };
        Ok(Self {
            effects: effects.iter().map(linalg::hermitian_part).collect(),
            labels,
        })
    }

    /// Rank-one projectors onto the columns of a unitary.
    pub fn from_basis(u: &CMat) -> Result<Self> {
        let effects = (0..u.ncols())
            .map(|k| {
                let v = u.column(k);
                v * v.adjoint()
            })
            .collect();
        Self::new(effects, None)
    }

    /// The computational-basis measurement.
    pub fn computational(d: usize) -> Self {
        Self::from_basis(&linalg::identity(d)).expect("identity is unitary")
    }

    /// Each Pauli observable measured with probability 1/3: six outcomes `±x, ±y, ±z`.
    pub fn pauli_six() -> Self {
        let id = linalg::identity(2);
        let mut effects = Vec::with_capacity(6);
        let mut labels = Vec::with_capacity(6);
        for (s, name) in linalg::pauli().iter().zip(["x", "y", "z"]) {
            for (sign, tag) in [(1.0, "+"), (-1.0, "-")] {
                effects.push((&id + s * c(sign, 0.0)) * c(1.0 / 6.0, 0.0));
                labels.push(format!("{tag}{name}"));
            }
        }
        Self::new(effects, Some(labels)).expect("Pauli POVM is valid")
    }

    /// `d + 1` seeded random orthonormal bases, each used with probability `1/(d+1)`:
    /// `d(d+1)` outcomes, informationally complete for generic draws.
    pub fn random_bases(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = 1.0 / (d + 1) as f64;
        let mut effects = Vec::with_capacity(d * (d + 1));
        let mut labels = Vec::with_capacity(d * (d + 1));
        for b in 0..=d {
            let g = CMat::from_fn(d, d, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let q = if b == 0 {
                linalg::identity(d)
            } else {
                g.qr().q()
            };
            for k in 0..d {
                let v = q.column(k);
                effects.push(v * v.adjoint() * c(w, 0.0));
                labels.push(format!("b{b}k{k}"));
            }
        }
        Self::new(effects, Some(labels)).expect("random bases form a POVM")
    }

    /// The default informationally complete first-stage measurement.
    pub fn default_ic(d: usize, seed: u64) -> Self {
        if d == 2 {
            Self::pauli_six()
        } else {
            Self::random_bases(d, seed)
        }
    }

    /// Spectral measurement of a Hermitian observable; eigenvalues within `gap` are merged.
    /// Returns the projectors and the corresponding eigenvalues (ascending).
    pub fn spectral(h: &CMat, gap: f64) -> (Self, Vec<f64>) {
        let eig = linalg::herm_eigen(h);
        let n = eig.values.len();
        let mut effects = Vec::new();
        let mut values = Vec::new();
        let mut k = 0;
        while k < n {
            let mut end = k + 1;
            while end < n && eig.values[end] - eig.values[end - 1] < gap {
                end += 1;
            }
            let mut p = CMat::zeros(n, n);
            for j in k..end {
                let v = eig.vectors.column(j);
                p += v * v.adjoint();
            }
            effects.push(p);
            values.push(eig.values[k..end].iter().sum::<f64>() / (end - k) as f64);
            k = end;
        }
        let labels = (0..effects.len()).map(|x| x.to_string()).collect();
        (Self { effects, labels }, values)
    }

    pub fn effects(&self) -> &[CMat] {
        &self.effects
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].nrows()
    }
}

/// `p_x = tr[ρ Π_x]`.
pub fn born_distribution(rho: &CMat, povm: &Povm) -> Result<Vec<f64>> {
    if rho.nrows() != povm.dim() {
        return Err(Error::InvalidPovm(format!(
            "POVM acts on dimension {}, state on {}",
            povm.dim(),
            rho.nrows()
        )));
    }
    let mut p: Vec<f64> = povm
        .effects()
        .iter()
        .map(|e| linalg::trace_product(rho, e).re)
        .collect();
    for (x, v) in p.iter_mut().enumerate() {
        if *v < -1e-12 {
            return Err(Error::InvalidPovm(format!(
                "outcome {x} has probability {v:e}"
            )));
        }
        *v = v.max(0.0);
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidPovm(format!("probabilities sum to {sum}")));
    }
    Ok(p)
}

/// Probabilities, derivatives `tr[∂_iρ Π_x]` and the kept-outcome mask.
fn induced(geom: &LocalGeometry, povm: &Povm) -> Result<(Vec<f64>, RMat, Vec<bool>)> {
    let p = born_distribution(&geom.rho, povm)?;
    let d = geom.dim_param();
    let dp = RMat::from_fn(povm.len(), d, |x, i| {
        linalg::trace_product(&geom.derivs[i], &povm.effects()[x]).re
    });
    let mut keep = vec![true; povm.len()];
    for x in 0..povm.len() {
        if p[x] < PROB_FLOOR {
            if dp.row(x).amax() > 1e-12 {
                return Err(Error::SingularOutcome(x));
            }
            keep[x] = false;
        }
    }
    Ok((p, dp, keep))
}

/// `J[Π]_ij = Σ_x tr[∂_iρ Π_x] tr[∂_jρ Π_x] / p_x`, checked against `J[Π] ⪯ J^S`.
pub fn classical_fisher_in(geom: &LocalGeometry, povm: &Povm) -> Result<RMat> {
    let (p, dp, keep) = induced(geom, povm)?;
    let d = geom.dim_param();
    let mut j = RMat::zeros(d, d);
    for x in 0..povm.len() {
        if keep[x] {
            let row = dp.row(x).transpose();
            j += &row * row.transpose() / p[x];
        }
    }
    let j = linalg::symmetric_part(&j);
    let gap = linalg::sym_eigen(&(&geom.j_sld - &j)).values[0];
    if gap < -1e-8 * linalg::max_abs_real(&geom.j_sld).max(1.0) {
        return Err(Error::Consistency(format!(
            "classical Fisher exceeds the SLD Fisher matrix (min eigenvalue {gap:e})"
        )));
    }
    Ok(j)
}

pub fn classical_fisher_of_povm(model: &StateModel, theta: &[f64], povm: &Povm) -> Result<Qfim> {
    let geom = LocalGeometry::at(model, theta)?;
    Ok(Qfim::from_real(
        FisherKind::Classical,
        &classical_fisher_in(&geom, povm)?,
        theta,
    ))
}

/// The spectral measurement of the interest dual SLD `L^{S;1}` and the estimator
/// `θ̂(x) = θ₁ + λ_x`, which is locally unbiased at the construction point with variance
/// `J^{S;11}`.
#[derive(Debug, Clone)]
pub struct OptimalPvm {
    pub povm: Povm,
    /// Eigenvalue `λ_x` of `L^{S;1}` for each projector.
    pub eigenvalues: Vec<f64>,
    pub point: Vec<f64>,
    /// Single-copy variance of the estimator at the construction point.
    pub variance: f64,
}

impl OptimalPvm {
    pub fn estimate(&self, outcome: usize) -> f64 {
        self.point[0] + self.eigenvalues[outcome]
    }
}

/// Local-unbiasedness residual `max_k |Σ_x θ̂(x) tr[∂_kρ Π_x] − δ_{1k}|` and mean offset.
fn unbiasedness_residual(
    geom: &LocalGeometry,
    povm: &Povm,
    shift: &[f64],
    interest: usize,
) -> Result<(f64, f64)> {
    let p = born_distribution(&geom.rho, povm)?;
    let mean: f64 = p.iter().zip(shift).map(|(a, b)| a * b).sum();
    let mut worst: f64 = 0.0;
    for (k, d) in geom.derivs.iter().enumerate() {
        let slope: f64 = povm
            .effects()
            .iter()
            .zip(shift)
            .map(|(e, s)| s * linalg::trace_product(d, e).re)
            .sum();
        let want = if k == interest { 1.0 } else { 0.0 };
        worst = worst.max((slope - want).abs());
    }
    Ok((mean.abs(), worst))
}

pub fn optimal_pvm_in(geom: &LocalGeometry, partition: &Partition) -> Result<OptimalPvm> {
    partition.check(geom.dim_param())?;
    if partition.d_interest() != 1 {
        return Err(Error::Config(
            "the optimal projection measurement needs exactly one parameter of interest".into(),
        ));
    }
    let dual = geom.dual_slds().swap_remove(0);
    let (povm, eigenvalues) = Povm::spectral(&dual, EIGEN_MERGE_GAP);
    let p = born_distribution(&geom.rho, &povm)?;
    let variance: f64 = p.iter().zip(&eigenvalues).map(|(a, l)| a * l * l).sum();
    let target = geom.j_sld_inv[(0, 0)];
    if (variance - target).abs() > 1e-8 * target.max(1.0) {
        return Err(Error::Consistency(format!(
            "optimal PVM variance {variance} differs from {target}"
        )));
    }
    let (offset, slope) = unbiasedness_residual(geom, &povm, &eigenvalues, 0)?;
    if offset > 1e-8 * target.max(1.0) || slope > 1e-8 {
        return Err(Error::Consistency(format!(
            "optimal PVM estimator not locally unbiased ({offset:e}, {slope:e})"
        )));
    }
    Ok(OptimalPvm {
        povm,
        eigenvalues,
        point: geom.point.clone(),
        variance,
    })
}

pub fn optimal_pvm_scalar(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
) -> Result<OptimalPvm> {
    let pvm = optimal_pvm_in(&LocalGeometry::at(model, theta)?, partition)?;
    // Finite-difference confirmation of local unbiasedness in every direction.
    let h = model.fd_step();
    let mut probe = theta.to_vec();
    let scale = pvm.variance.max(1.0);
    for k in 0..theta.len() {
        let mut means = [0.0; 2];
        for (slot, sign) in [(0, 1.0), (1, -1.0)] {
            probe[k] = theta[k] + sign * h;
            if !model.in_domain(&probe) {
                probe[k] = theta[k];
                means = [f64::NAN; 2];
                break;
            }
            let rho = model.state_unchecked(&probe);
            let p = born_distribution(&linalg::hermitian_part(&rho), &pvm.povm)?;
            means[slot] = p
                .iter()
                .enumerate()
                .map(|(x, px)| px * pvm.estimate(x))
                .sum();
        }
        probe[k] = theta[k];
        if means[0].is_nan() {
            continue;
        }
        let slope = (means[0] - means[1]) / (2.0 * h);
        let want = if k == 0 { 1.0 } else { 0.0 };
        if (slope - want).abs() > 1e-6 * scale {
            return Err(Error::Consistency(format!(
                "finite-difference slope {slope} in direction {k}, expected {want}"
            )));
        }
    }
    Ok(pvm)
}

/// Locally unbiased estimator for the interest block from an arbitrary POVM:
/// `θ̂_i(x) = θ_i + Σ_j ((J(I|N)[Π])^{-1})_{ji} u_j(x | M*)` with `M* = J_IN J_NN^+`.
#[derive(Debug, Clone)]
pub struct LuEstimator {
    /// `values[(x, i)] = θ̂_i(x)`.
    pub values: RMat,
    pub point: Vec<f64>,
    pub partition: Partition,
    /// `(J(I|N)[Π])^{-1}`, the single-copy covariance at the construction point.
    pub covariance: RMat,
    /// Rank of the nuisance block kept by the generalized inverse.
    pub nuisance_rank: usize,
}

impl LuEstimator {
    pub fn estimate(&self, outcome: usize) -> Vec<f64> {
        self.values.row(outcome).iter().copied().collect()
    }
}

pub fn locally_unbiased_in(
    geom: &LocalGeometry,
    povm: &Povm,
    partition: &Partition,
) -> Result<LuEstimator> {
    partition.check(geom.dim_param())?;
    let (p, dp, keep) = induced(geom, povm)?;
    let m = povm.len();
    let d = geom.dim_param();
    let u = RMat::from_fn(m, d, |x, i| if keep[x] { dp[(x, i)] / p[x] } else { 0.0 });
    let j = classical::fisher_from_scores(&p, &u);
    let (m_star, rank) = classical::optimal_m_from(&j, partition);
    let eff = classical::effective_scores(&u, partition, &m_star);
    let j_eff = classical::fisher_from_scores(&p, &eff);
    let cov = linalg::inv_sym_pd(&j_eff, "partial classical Fisher matrix").map_err(|e| {
        Error::Rank(format!(
            "measurement is not informative about the interest block: {e}"
        ))
    })?;
    let di = partition.d_interest();
    let mut values = eff * &cov;
    for x in 0..m {
        for i in 0..di {
            values[(x, i)] += geom.point[i];
        }
    }
    for i in 0..di {
        let shift: Vec<f64> = (0..m).map(|x| values[(x, i)] - geom.point[i]).collect();
        let (offset, slope) = unbiasedness_residual(geom, povm, &shift, i)?;
        let scale = cov[(i, i)].max(1.0);
        if offset > 1e-8 * scale || slope > 1e-8 * scale {
            return Err(Error::Consistency(format!(
                "estimator {i} not locally unbiased ({offset:e}, {slope:e})"
            )));
        }
    }
    Ok(LuEstimator {
        values,
        point: geom.point.clone(),
        partition: *partition,
        covariance: cov,
        nuisance_rank: rank,
    })
}

pub fn locally_unbiased_estimator(
    model: &StateModel,
    theta: &[f64],
    povm: &Povm,
    partition: &Partition,
) -> Result<LuEstimator> {
    locally_unbiased_in(&LocalGeometry::at(model, theta)?, povm, partition)
}

/// Result of [`pvm_theta_independence_check`].
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PvmIndependence {
    /// True when the optimal projectors are the same at every grid point.
    pub independent: bool,
    /// Largest Frobenius distance between matched projectors.
    pub max_projector_distance: f64,
    /// Whether the parameter of interest is orthogonal to the nuisance parameters at every
    /// grid point (diagnostic).
    pub orthogonal_everywhere: bool,
    pub max_orthogonality_residual: f64,
    pub points_tested: usize,
}

/// Is the optimal projection measurement the same across the grid (so that the repetitive
/// strategy is already optimal)? Projectors are matched up to permutation.
pub fn pvm_theta_independence_check(
    model: &StateModel,
    grid: &[Vec<f64>],
    partition: &Partition,
) -> Result<PvmIndependence> {
    if grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    let mut reference: Option<Vec<CMat>> = None;
    let mut max_dist: f64 = 0.0;
    let mut max_orth: f64 = 0.0;
    let mut same_count = true;
    for theta in grid {
        let geom = LocalGeometry::at(model, theta)?;
        let pvm = optimal_pvm_in(&geom, partition)?;
        let j = &geom.j_sld;
        let scale = linalg::max_abs_real(j).max(1e-300);
        for l in partition.nuisance() {
            max_orth = max_orth.max(j[(0, l)].abs() / scale);
        }
        let projs = pvm.povm.effects().to_vec();
        match &reference {
            None => reference = Some(projs),
            Some(r) => {
                if r.len() != projs.len() {
                    same_count = false;
                    continue;
                }
                for p in &projs {
                    let best = r
                        .iter()
                        .map(|q| linalg::frobenius(&(p - q)))
                        .fold(f64::INFINITY, f64::min);
                    max_dist = max_dist.max(best);
                }
            }
        }
    }
    Ok(PvmIndependence {
        independent: same_count && max_dist < 1e-8,
        max_projector_distance: if same_count { max_dist } else { f64::INFINITY },
        orthogonal_everywhere: max_orth < 1e-9,
        max_orthogonality_residual: max_orth,
        points_tested: grid.len(),
    })
}

/// How each trial turns outcomes into an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EstimatorKind {
    Mle,
    LocallyUnbiased,
}

#[derive(Debug, Clone)]
pub enum Strategy {
    /// The same POVM on every copy.
    Repetitive {
        povm: Povm,
        estimator: EstimatorKind,
    },
    /// A first batch of `⌈n^exponent⌉` copies measured with an informationally complete POVM
    /// (default when `None`) gives a tentative MLE `θ̃`; the remaining copies are measured with
    /// the optimal projection measurement at `θ̃`.
    TwoStep {
        first_stage: Option<Povm>,
        first_stage_exponent: f64,
        final_estimate: FinalEstimate,
    },
}

/// How the two-step strategy turns both batches into the final estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FinalEstimate {
    /// `θ̃₁ + mean(λ_x)`: the locally unbiased estimator of the optimal projection measurement
    /// at `θ̃`; first-batch outcomes only fix the expansion point.
    Local,
    /// Maximum likelihood on the pooled outcomes of both batches, started from the local
    /// estimate (falls back to it when the likelihood peaks on the domain boundary).
    #[default]
    Pooled,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Repetitive { .. } => "repetitive",
            Strategy::TwoStep { .. } => "two-step",
        }
    }
}

/// Default exponent of the first-stage size `⌈n^a⌉` of the two-step strategy.
pub const DEFAULT_FIRST_STAGE_EXPONENT: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub strategy: Strategy,
    pub partition: Partition,
    pub n_copies: usize,
    pub n_trials: usize,
    pub seed: u64,
}

/// One trial's estimate of the interest block.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TrialOutcome {
    pub index: usize,
    pub estimate: Vec<f64>,
    pub error: Vec<f64>,
    /// The tentative estimate was moved off the state-space boundary (two-step only).
    pub retreated: bool,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimulationResult {
    pub strategy: String,
    pub n_copies: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// `d_I × d_I` empirical MSE matrix (row-major).
    pub empirical_mse: Vec<Vec<f64>>,
    /// `n` times the empirical MSE matrix.
    pub scaled_mse_matrix: Vec<Vec<f64>>,
    /// `n · Tr[MSE]`.
    pub scaled_mse: f64,
    /// Standard error of `scaled_mse` across trials.
    pub stderr: f64,
    /// Mean error of the interest estimates.
    pub bias: Vec<f64>,
    /// SLD bound `Tr[(J^S(I|N))^{-1}]` at the true point.
    pub bound_value: f64,
    /// Bound attainable by the fixed POVM, `Tr[(J(I|N)[Π])^{-1}]` (repetitive only).
    pub povm_bound: Option<f64>,
    pub first_stage_copies: Option<usize>,
    /// Trials whose tentative estimate had to be moved off the state-space boundary.
    pub boundary_retreats: usize,
}

/// A prepared simulation whose trials can run in any order (or concurrently).
#[derive(Debug, Clone)]
pub struct Simulation {
    model: StateModel,
    theta: Vec<f64>,
    config: SimConfig,
    povm: Povm,
    /// Cumulative outcome distribution of `povm` at the true point.
    cdf: Vec<f64>,
    classical: ClassicalModel,
    lu: Option<LuEstimator>,
    second_stage_dim: usize,
    first_stage: usize,
    bound_value: f64,
    povm_bound: Option<f64>,
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = p
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

fn sample_counts(rng: &mut ChaCha8Rng, cdf: &[f64], n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; cdf.len()];
    for _ in 0..n {
        let u: f64 = rng.gen();
        let x = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
        counts[x] += 1;
    }
    counts
}

impl Simulation {
    pub fn new(model: &StateModel, theta: &[f64], config: &SimConfig) -> Result<Self> {
        if config.n_copies < 10 {
            return Err(Error::Config(format!(
                "need at least 10 copies, got {}",
                config.n_copies
            )));
        }
        if config.n_trials < 2 {
            return Err(Error::Config(format!(
                "need at least 2 trials, got {}",
                config.n_trials
            )));
        }
        let partition = config.partition;
        partition.check(model.dim_param())?;
        let geom = LocalGeometry::at(model, theta)?;
        let bound_value = bounds::sld_cr_in(
            &geom,
            &partition,
            &WeightMatrix::identity(partition.d_interest()),
        )?;
        let (povm, first_stage, lu, povm_bound) = match &config.strategy {
            Strategy::Repetitive { povm, estimator } => {
                let lu = locally_unbiased_in(&geom, povm, &partition)?;
                let povm_bound = lu.covariance.trace();
                let lu = (*estimator == EstimatorKind::LocallyUnbiased).then_some(lu);
                (povm.clone(), 0, lu, Some(povm_bound))
            }
            Strategy::TwoStep {
                first_stage,
                first_stage_exponent,
                ..
            } => {
                if partition.d_interest() != 1 {
                    return Err(Error::Config(
                        "the two-step strategy needs exactly one parameter of interest".into(),
                    ));
                }
                if !(*first_stage_exponent > 0.0 && *first_stage_exponent < 1.0) {
                    return Err(Error::Config(format!(
                        "first-stage exponent {first_stage_exponent} not in (0, 1)"
                    )));
                }
                let povm = match first_stage {
                    Some(p) => p.clone(),
                    None => Povm::default_ic(model.dim_hilbert(), config.seed),
                };
                let n1 =
                    math::ceil(math::powf(config.n_copies as f64, *first_stage_exponent)) as usize;
                if n1 >= config.n_copies {
                    return Err(Error::Config("first stage would use every copy".into()));
                }
                // The first stage must identify every parameter.
                let j = classical_fisher_in(&geom, &povm)?;
                linalg::inv_sym_pd(&j, "first-stage Fisher matrix").map_err(|_| {
                    Error::Config(
                        "first-stage POVM is not informationally complete for this model".into(),
                    )
                })?;
                (povm, n1, None, None)
            }
        };
        if povm.dim() != model.dim_hilbert() {
            return Err(Error::InvalidPovm(format!(
                "POVM acts on dimension {}, model on {}",
                povm.dim(),
                model.dim_hilbert()
            )));
        }
        let p = born_distribution(&geom.rho, &povm)?;
        Ok(Self {
            model: model.clone(),
            theta: theta.to_vec(),
            classical: ClassicalModel::from_povm(model, &povm),
            cdf: cumulative(&p),
            povm,
            lu,
            second_stage_dim: model.dim_hilbert(),
            first_stage,
            bound_value,
            povm_bound,
            config: config.clone(),
        })
    }

    /// The measurement applied on every copy (first stage for the two-step strategy).
    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn n_trials(&self) -> usize {
        self.config.n_trials
    }

    fn rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(trial as u64);
        rng
    }

    /// Run trial `index` on its own random stream.
    pub fn run_trial(&self, index: usize) -> Result<TrialOutcome> {
        let mut rng = self.rng(index);
        let di = self.config.partition.d_interest();
        let n = self.config.n_copies;
        let (estimate, retreated): (Vec<f64>, bool) = match &self.config.strategy {
            Strategy::Repetitive { estimator, .. } => {
                let counts = sample_counts(&mut rng, &self.cdf, n);
                match estimator {
                    EstimatorKind::LocallyUnbiased => {
                        let lu = self.lu.as_ref().expect("prepared");
                        let mut est = vec![0.0; di];
                        for (x, &k) in counts.iter().enumerate() {
                            for (i, e) in est.iter_mut().enumerate() {
                                *e += k as f64 * lu.values[(x, i)];
                            }
                        }
                        (est.iter().map(|v| v / n as f64).collect(), false)
                    }
                    EstimatorKind::Mle => {
                        let r = self
                            .classical
                            .mle(&counts, &self.theta)
                            .map_err(|e| trial_error(index, e))?;
                        (r.theta[..di].to_vec(), false)
                    }
                }
            }
            Strategy::TwoStep { final_estimate, .. } => {
                let n1 = self.first_stage;
                let counts = sample_counts(&mut rng, &self.cdf, n1);
                let tentative = self
                    .classical
                    .mle_or_boundary(&counts, &self.theta)
                    .map_err(|e| trial_error(index, e))?;
                let (pvm, retreated) = self
                    .second_stage_pvm(&tentative.theta)
                    .map_err(|e| trial_error(index, e))?;
                debug_assert_eq!(pvm.povm.dim(), self.second_stage_dim);
                let rho_true = self.model.state_unchecked(&self.theta);
                let p = born_distribution(&linalg::hermitian_part(&rho_true), &pvm.povm)?;
                let cdf = cumulative(&p);
                let counts2 = sample_counts(&mut rng, &cdf, n - n1);
                let mean: f64 = counts2
                    .iter()
                    .zip(&pvm.eigenvalues)
                    .map(|(&k, l)| k as f64 * l)
                    .sum::<f64>()
                    / (n - n1) as f64;
                let local = tentative.theta[0] + mean;
                let estimate = match final_estimate {
                    FinalEstimate::Local => local,
                    FinalEstimate::Pooled => self
                        .pooled_mle(&tentative.theta, local, &counts, &pvm, &counts2)
                        .unwrap_or(local),
                };
                (vec![estimate], retreated)
            }
        };
        let error = estimate
            .iter()
            .zip(&self.theta)
            .map(|(a, b)| a - b)
            .collect();
        Ok(TrialOutcome {
            index,
            estimate,
            error,
            retreated,
        })
    }

    /// Joint likelihood of both batches: with the batch sizes fixed, the outcomes are a
    /// multinomial sample of the mixture POVM `{(n₁/n) E_x} ∪ {(n₂/n) Π_y}`.
    fn pooled_mle(
        &self,
        tentative: &[f64],
        local: f64,
        counts1: &[u64],
        pvm: &OptimalPvm,
        counts2: &[u64],
    ) -> Option<f64> {
        let n = self.config.n_copies as f64;
        let w1 = c(self.first_stage as f64 / n, 0.0);
        let w2 = c(1.0 - self.first_stage as f64 / n, 0.0);
        let effects = self
            .povm
            .effects()
            .iter()
            .map(|e| e * w1)
            .chain(pvm.povm.effects().iter().map(|e| e * w2))
            .collect();
        let joint = Povm::new(effects, None).ok()?;
        let counts: Vec<u64> = counts1.iter().chain(counts2).copied().collect();
        let model = ClassicalModel::from_povm(&self.model, &joint);
        let mut start = tentative.to_vec();
        start[0] = local;
        if !self.model.in_domain(&start) {
            start[0] = tentative[0];
        }
        let r = model.mle(&counts, &start).ok()?;
        Some(r.theta[0])
    }

    /// Optimal projection measurement at the tentative estimate. A first-stage estimate on the
    /// boundary of the state space (a rank-deficient state) has no SLD geometry; it is then
    /// moved towards the optimizer's start point by the smallest fraction `10^-k` that makes
    /// the geometry regular, and the trial is flagged.
    fn second_stage_pvm(&self, tentative: &[f64]) -> Result<(OptimalPvm, bool)> {
        let first = LocalGeometry::at(&self.model, tentative)
            .and_then(|g| optimal_pvm_in(&g, &self.config.partition));
        let err = match first {
            Ok(p) => return Ok((p, false)),
            Err(e) => e,
        };
        let mut frac = 1e-6;
        while frac <= 1.0 {
            let probe: Vec<f64> = tentative
                .iter()
                .zip(&self.theta)
                .map(|(a, b)| a + frac * (b - a))
                .collect();
            if let Ok(p) = LocalGeometry::at(&self.model, &probe)
                .and_then(|g| optimal_pvm_in(&g, &self.config.partition))
            {
                return Ok((p, true));
            }
            frac *= 10.0;
        }
        Err(err)
    }

    /// Aggregate trial outcomes (in any order) into a result; the reduction runs in trial-index
    /// order so the output does not depend on how trials were scheduled.
    pub fn aggregate(&self, mut outcomes: Vec<TrialOutcome>) -> Result<SimulationResult> {
        outcomes.sort_by_key(|o| o.index);
        let t = outcomes.len();
        if t < 2 {
            return Err(Error::Config("need at least 2 trials".into()));
        }
        let di = self.config.partition.d_interest();
        let n = self.config.n_copies as f64;
        let mut mse = RMat::zeros(di, di);
        let mut bias = vec![0.0; di];
        let mut per_trial = Vec::with_capacity(t);
        for o in &outcomes {
            let e = nalgebra::DVector::from_column_slice(&o.error);
            mse += &e * e.transpose();
            for (b, v) in bias.iter_mut().zip(&o.error) {
                *b += v;
            }
            per_trial.push(n * e.norm_squared());
        }
        mse /= t as f64;
        for b in &mut bias {
            *b /= t as f64;
        }
        let scaled = &mse * n;
        let mean = per_trial.iter().sum::<f64>() / t as f64;
        let var = per_trial
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (t - 1) as f64;
        let rows = |m: &RMat| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        Ok(SimulationResult {
            strategy: self.config.strategy.name().to_string(),
            n_copies: self.config.n_copies,
            n_trials: t,
            seed: self.config.seed,
            empirical_mse: rows(&mse),
            scaled_mse_matrix: rows(&scaled),
            scaled_mse: scaled.trace(),
            stderr: math::sqrt(var / t as f64),
            bias,
            bound_value: self.bound_value,
            povm_bound: self.povm_bound,
            first_stage_copies: (self.first_stage > 0).then_some(self.first_stage),
            boundary_retreats: outcomes.iter().filter(|o| o.retreated).count(),
        })
    }
}

fn trial_error(index: usize, e: Error) -> Error {
    match e {
        Error::Convergence(m) => Error::Convergence(format!("trial {index}: {m}")),
        other => other,
    }
}

/// Run every trial sequentially and aggregate.
pub fn simulate(model: &StateModel, theta: &[f64], config: &SimConfig) -> Result<SimulationResult> {
    let sim = Simulation::new(model, theta, config)?;
    let outcomes = (0..sim.n_trials())
        .map(|k| sim.run_trial(k))
        .collect::<Result<Vec<_>>>()?;
    sim.aggregate(outcomes)
}
