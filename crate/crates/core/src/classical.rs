//! Finite-outcome classical models: scores, Fisher information, effective scores, maximum
//! likelihood and the classical Cramér–Rao bounds with nuisance parameters.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::bounds::BoundReport;
use crate::linalg::{self, RMat, RVec};
use crate::measurement::Povm;
use crate::model::{Partition, StateModel, WeightMatrix, DEFAULT_FD_STEP, REGULARITY_TOL};
use crate::nuisance;
use crate::{math, Error, Result};

/// Probabilities must sum to one within this.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Cutoff (relative to the largest eigenvalue) of the generalized inverse of the nuisance
/// block.
pub const PINV_CUTOFF: f64 = 1e-10;
/// Default iteration cap of [`ClassicalModel::mle`].
pub const MLE_MAX_ITER: usize = 200;
/// The MLE stops once the max-norm of the average score is below this.
pub const MLE_GRAD_TOL: f64 = 1e-9;

pub type ProbFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ProbDerivFn = Arc<dyn Fn(&[f64]) -> RMat + Send + Sync>;
type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A parametric family `θ ↦ p_θ` on a finite outcome set.
#[derive(Clone)]
pub struct ClassicalModel {
    name: String,
    n_outcomes: usize,
    dim_param: usize,
    prob_fn: ProbFn,
    deriv_fn: Option<ProbDerivFn>,
    fd_step: f64,
    intervals: Vec<(f64, f64)>,
    constraint: Option<DomainFn>,
}

impl core::fmt::Debug for ClassicalModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ClassicalModel")
            .field("name", &self.name)
            .field("n_outcomes", &self.n_outcomes)
            .field("dim_param", &self.dim_param)
            .field("analytic_derivatives", &self.deriv_fn.is_some())
            .finish()
    }
}

/// Result of [`ClassicalModel::mle`].
#[derive(Debug, Clone)]
pub struct MleResult {
    pub theta: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the average score at the returned point.
    pub grad_norm: f64,
    pub log_likelihood: f64,
    /// False when the ascent stalled before the score vanished (the supremum lies on the
    /// boundary of the domain); only returned by [`ClassicalModel::mle_or_boundary`].
    pub converged: bool,
}

impl ClassicalModel {
    pub fn new(
        name: impl Into<String>,
        n_outcomes: usize,
        dim_param: usize,
        prob_fn: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n_outcomes,
            dim_param,
            prob_fn: Arc::new(prob_fn),
            deriv_fn: None,
            fd_step: DEFAULT_FD_STEP,
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY); dim_param],
            constraint: None,
        }
    }

    /// Analytic derivatives as an `m × d` matrix `∂_i p(x)`.
    pub fn with_derivatives(mut self, f: impl Fn(&[f64]) -> RMat + Send + Sync + 'static) -> Self {
        self.deriv_fn = Some(Arc::new(f));
        self
    }

    pub fn with_intervals(mut self, intervals: Vec<(f64, f64)>) -> Self {
        assert_eq!(intervals.len(), self.dim_param);
        self.intervals = intervals;
        self
    }

    pub fn with_constraint(mut self, f: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.constraint = Some(Arc::new(f));
        self
    }

    /// The three-outcome die `(θ₁, θ₂, 1 − θ₁ − θ₂)`.
    pub fn dice() -> Self {
        Self::new("dice", 3, 2, |x: &[f64]| {
            vec![x[0], x[1], 1.0 - x[0] - x[1]]
        })
        .with_derivatives(|_| RMat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]))
        .with_intervals(vec![(0.0, 1.0), (0.0, 1.0)])
        .with_constraint(|x: &[f64]| x[0] + x[1] < 1.0)
    }

    /// The outcome distribution of `povm` on `model`: `p(x) = tr[ρ_θ Π_x]`.
    pub fn from_povm(model: &StateModel, povm: &Povm) -> Self {
        let (m1, m2, m3) = (model.clone(), model.clone(), model.clone());
        let (p1, p2) = (povm.clone(), povm.clone());
        let d = model.dim_param();
        Self {
            name: format!("{}-measured", model.name()),
            n_outcomes: povm.len(),
            dim_param: d,
            prob_fn: Arc::new(move |x: &[f64]| {
                let rho = m1.state_unchecked(x);
                p1.effects()
                    .iter()
                    .map(|e| linalg::trace_product(&rho, e).re)
                    .collect()
            }),
            deriv_fn: Some(Arc::new(move |x: &[f64]| {
                let derivs: Vec<_> = (0..d).map(|i| m2.derivative_unchecked(x, i)).collect();
                RMat::from_fn(p2.len(), d, |o, i| {
                    linalg::trace_product(&derivs[i], &p2.effects()[o]).re
                })
            })),
            fd_step: model.fd_step(),
            intervals: model.intervals().to_vec(),
            constraint: Some(Arc::new(move |x: &[f64]| m3.in_domain(x))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn dim_param(&self) -> usize {
        self.dim_param
    }

    pub fn in_domain(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim_param
            && theta.iter().all(|x| x.is_finite())
            && theta
                .iter()
                .zip(&self.intervals)
                .all(|(x, (lo, hi))| x > lo && x < hi)
            && match &self.constraint {
                Some(f) => f(theta),
                None => true,
            }
    }

    fn check_point(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim_param {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, model has {}",
                theta.len(),
                self.dim_param
            )));
        }
        if !self.in_domain(theta) {
            return Err(Error::Domain(format!(
                "{theta:?} is outside the domain of {}",
                self.name
            )));
        }
        Ok(())
    }

    /// Validated probability vector (positive, summing to one).
    pub fn probabilities(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_point(theta)?;
        let p = (self.prob_fn)(theta);
        if p.len() != self.n_outcomes {
            return Err(Error::Dimension(format!(
                "{} probabilities, expected {}",
                p.len(),
                self.n_outcomes
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL * 10.0 {
            return Err(Error::Model(format!("probabilities sum to {sum}")));
        }
        if let Some((x, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Domain(format!("outcome {x} has probability {v}")));
        }
        Ok(p)
    }

    /// `∂_i p(x)` as an `m × d` matrix.
    pub fn derivatives(&self, theta: &[f64]) -> Result<RMat> {
        self.check_point(theta)?;
        match &self.deriv_fn {
            Some(f) => Ok(f(theta)),
            None => {
                let h = self.fd_step;
                let mut out = RMat::zeros(self.n_outcomes, self.dim_param);
                let mut probe = theta.to_vec();
                for i in 0..self.dim_param {
                    probe[i] = theta[i] + h;
                    if !self.in_domain(&probe) {
                        return Err(Error::Domain(format!(
                            "finite-difference probe {probe:?} leaves the domain"
                        )));
                    }
                    let plus = (self.prob_fn)(&probe);
                    probe[i] = theta[i] - h;
                    if !self.in_domain(&probe) {
                        return Err(Error::Domain(format!(
                            "finite-difference probe {probe:?} leaves the domain"
                        )));
                    }
                    let minus = (self.prob_fn)(&probe);
                    probe[i] = theta[i];
                    for x in 0..self.n_outcomes {
                        out[(x, i)] = (plus[x] - minus[x]) / (2.0 * h);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Score functions `u_i(x) = ∂_i log p(x)` as an `m × d` matrix.
    pub fn score(&self, theta: &[f64]) -> Result<RMat> {
        let p = self.probabilities(theta)?;
        let dp = self.derivatives(theta)?;
        let u = RMat::from_fn(self.n_outcomes, self.dim_param, |x, i| dp[(x, i)] / p[x]);
        for i in 0..self.dim_param {
            let mean: f64 = (0..self.n_outcomes).map(|x| p[x] * u[(x, i)]).sum();
            if mean.abs() > 1e-10 * u.column(i).amax().max(1.0) {
                return Err(Error::Consistency(format!("score {i} has mean {mean:e}")));
            }
        }
        Ok(u)
    }

    /// `J_ij = E[u_i u_j]`, refusing linearly dependent scores.
    pub fn fisher_matrix(&self, theta: &[f64]) -> Result<RMat> {
        let p = self.probabilities(theta)?;
        let u = self.score(theta)?;
        let j = fisher_from_scores(&p, &u);
        let eig = linalg::sym_eigen(&j);
        let hi = eig.values.last().copied().unwrap_or(0.0);
        if !(eig.values[0] > REGULARITY_TOL * hi.max(1.0)) {
            return Err(Error::Regularity(format!(
                "scores are linearly dependent (min eigenvalue {:e})",
                eig.values[0]
            )));
        }
        Ok(j)
    }

    /// `M* = J_IN J_NN^+`, with the rank of the nuisance block kept by the generalized inverse.
    pub fn optimal_m(&self, theta: &[f64], partition: &Partition) -> Result<(RMat, usize)> {
        partition.check(self.dim_param)?;
        let p = self.probabilities(theta)?;
        let j = fisher_from_scores(&p, &self.score(theta)?);
        Ok(optimal_m_from(&j, partition))
    }

    /// `u_i(x|M) = u_i(x) − Σ_j M_ij u_{N,j}(x)` for interest `i` (an `m × d_I` matrix).
    pub fn effective_score(&self, theta: &[f64], partition: &Partition, m: &RMat) -> Result<RMat> {
        partition.check(self.dim_param)?;
        if m.nrows() != partition.d_interest() || m.ncols() != partition.d_nuisance() {
            return Err(Error::Dimension(format!(
                "M must be {}x{}",
                partition.d_interest(),
                partition.d_nuisance()
            )));
        }
        Ok(effective_scores(&self.score(theta)?, partition, m))
    }

    /// Maximum likelihood by damped Fisher scoring from `start`.
    ///
    /// The step is `J^+ ū` (with `ū` the average score) and is halved until it stays in the
    /// domain and the log-likelihood does not decrease.
    pub fn mle(&self, counts: &[u64], start: &[f64]) -> Result<MleResult> {
        self.mle_with(counts, start, MLE_MAX_ITER)
    }

    pub fn mle_with(&self, counts: &[u64], start: &[f64], max_iter: usize) -> Result<MleResult> {
        let (result, stall) = self.ascend(counts, start, max_iter)?;
        match stall {
            Some(e) => Err(e),
            None => Ok(result),
        }
    }

    /// Like [`mle`](Self::mle), but when the likelihood keeps increasing towards the boundary
    /// of the domain the last iterate is returned with `converged == false` instead of an
    /// error.
    pub fn mle_or_boundary(&self, counts: &[u64], start: &[f64]) -> Result<MleResult> {
        Ok(self.ascend(counts, start, MLE_MAX_ITER)?.0)
    }

    fn ascend(
        &self,
        counts: &[u64],
        start: &[f64],
        max_iter: usize,
    ) -> Result<(MleResult, Option<Error>)> {
        if counts.len() != self.n_outcomes {
            return Err(Error::Dimension(format!(
                "{} counts for {} outcomes",
                counts.len(),
                self.n_outcomes
            )));
        }
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::Config("no samples".into()));
        }
        self.check_point(start)?;
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let loglik = |theta: &[f64]| -> Option<f64> {
            if !self.in_domain(theta) {
                return None;
            }
            let p = (self.prob_fn)(theta);
            let mut s = 0.0;
            for (f, q) in freq.iter().zip(&p) {
                if *f > 0.0 {
                    if !(*q > 0.0) {
                        return None;
                    }
                    s += f * math::ln(*q);
                }
            }
            Some(s)
        };
        let mut theta = start.to_vec();
        let mut ll = loglik(&theta)
            .ok_or_else(|| Error::Domain("start point has zero likelihood".into()))?;
        for it in 0..=max_iter {
            let p = (self.prob_fn)(&theta);
            let dp = self.derivatives(&theta)?;
            let mut grad = RVec::zeros(self.dim_param);
            let mut fisher = RMat::zeros(self.dim_param, self.dim_param);
            for x in 0..self.n_outcomes {
                if p[x] <= 0.0 {
                    continue;
                }
                let row = dp.row(x).transpose();
                grad += &row * (freq[x] / p[x]);
                fisher += &row * row.transpose() / p[x];
            }
            let gnorm = grad.amax();
            let log_likelihood = ll * n as f64;
            let result = |theta: Vec<f64>, converged| MleResult {
                theta,
                iterations: it,
                grad_norm: gnorm,
                log_likelihood,
                converged,
            };
            if gnorm < MLE_GRAD_TOL {
                return Ok((result(theta, true), None));
            }
            if it == max_iter {
                let e =
                    Error::Convergence(format!("MLE did not converge in {max_iter} iterations"));
                return Ok((result(theta, false), Some(e)));
            }
            let (pinv, _) = linalg::pinv_sym(&fisher, PINV_CUTOFF);
            let step = pinv * &grad;
            let mut scale = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = theta
                    .iter()
                    .zip(step.iter())
                    .map(|(a, b)| a + scale * b)
                    .collect();
                if let Some(v) = loglik(&cand) {
                    if v >= ll {
                        moved = cand != theta;
                        theta = cand;
                        ll = v;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !moved {
                let e = Error::Convergence(format!(
                    "no ascent step from {theta:?} (score norm {gnorm:e}); the maximum may lie on the boundary"
                ));
                return Ok((result(theta, false), Some(e)));
            }
        }
        unreachable!("the loop returns at it == max_iter")
    }

    /// Known-nuisance bound `Tr[W_I (J_II)^{-1}]`, unknown-nuisance bound `Tr[W_I J^{II}]`
    /// and their difference.
    pub fn cr_bounds(
        &self,
        theta: &[f64],
        partition: &Partition,
        w: &WeightMatrix,
    ) -> Result<BoundReport> {
        partition.check(self.dim_param)?;
        if w.dim() != partition.d_interest() {
            return Err(Error::Dimension(
                "weight size must equal the number of parameters of interest".into(),
            ));
        }
        let j = self.fisher_matrix(theta)?;
        let ii = partition.interest();
        let known = (w.matrix()
            * linalg::inv_sym_pd(&linalg::block(&j, &ii, &ii), "interest block")?)
        .trace();
        let partial = nuisance::schur_complement_real(&j, partition)?;
        let unknown = (w.matrix() * linalg::inv_sym_pd(&partial, "partial Fisher matrix")?).trace();
        let loss = nuisance::clamp_loss(unknown - known, nuisance::LOSS_FLOOR)?;
        let mut values = BTreeMap::new();
        values.insert("known-nuisance".to_string(), known);
        values.insert("unknown-nuisance".to_string(), unknown);
        values.insert("info-loss".to_string(), loss);
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert(
            "fisher_condition_number".to_string(),
            linalg::condition_number(&j),
        );
        let mut checks = BTreeMap::new();
        checks.insert(
            "known_le_unknown".to_string(),
            known <= unknown + nuisance::LOSS_FLOOR,
        );
        Ok(BoundReport {
            values,
            weight: w.clone(),
            partition: *partition,
            point: theta.to_vec(),
            diagnostics,
            checks,
        })
    }
}

/// `Σ_x p(x) u(x) u(x)ᵀ`.
pub fn fisher_from_scores(p: &[f64], u: &RMat) -> RMat {
    let d = u.ncols();
    let mut j = RMat::zeros(d, d);
    for (x, px) in p.iter().enumerate() {
        let row = u.row(x).transpose();
        j += &row * row.transpose() * *px;
    }
    linalg::symmetric_part(&j)
}

/// `M* = J_IN J_NN^+` and the rank of `J_NN`.
pub fn optimal_m_from(j: &RMat, partition: &Partition) -> (RMat, usize) {
    let (ii, nn) = (partition.interest(), partition.nuisance());
    if nn.is_empty() {
        return (RMat::zeros(ii.len(), 0), 0);
    }
    let (pinv, rank) = linalg::pinv_sym(&linalg::block(j, &nn, &nn), PINV_CUTOFF);
    (linalg::block(j, &ii, &nn) * pinv, rank)
}

/// Effective scores `u_I − u_N Mᵀ` (an `m × d_I` matrix).
pub fn effective_scores(u: &RMat, partition: &Partition, m: &RMat) -> RMat {
    let rows: Vec<usize> = (0..u.nrows()).collect();
    let u_i = linalg::block(u, &rows, &partition.interest());
    if !partition.has_nuisance() {
        return u_i;
    }
    let u_n = linalg::block(u, &rows, &partition.nuisance());
    u_i - u_n * m.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dice_scores_and_fisher() {
        let m = ClassicalModel::dice();
        let u = m.score(&[0.2, 0.3]).unwrap();
        assert!(
            (u[(0, 0)] - 5.0).abs() < 1e-12
                && u[(1, 0)].abs() < 1e-12
                && (u[(2, 0)] + 2.0).abs() < 1e-12
        );
        let j = m.fisher_matrix(&[0.2, 0.3]).unwrap();
        let (t1, t2, t3) = (0.2, 0.3, 0.5);
        let f = 1.0 / (t1 * t2 * t3);
        assert!((j[(0, 0)] - f * t2 * (1.0 - t2)).abs() < 1e-9);
        assert!((j[(0, 1)] - f * t1 * t2).abs() < 1e-9);
        assert!((j[(1, 1)] - f * t1 * (1.0 - t1)).abs() < 1e-9);
    }

    #[test]
    fn dice_bounds() {
        let m = ClassicalModel::dice();
        let r = m
            .cr_bounds(
                &[0.2, 0.3],
                &Partition::new(1, 2).unwrap(),
                &WeightMatrix::identity(1),
            )
            .unwrap();
        assert!((r.values["known-nuisance"] - 1.0 / 7.0).abs() < 1e-9);
        assert!((r.values["unknown-nuisance"] - 0.16).abs() < 1e-9);
        assert!((r.values["info-loss"] - 0.2 * 0.2 * 0.3 / 0.7).abs() < 1e-9);
    }

    #[test]
    fn dice_mle_is_empirical_frequency() {
        let m = ClassicalModel::dice();
        let r = m.mle(&[20, 30, 50], &[0.3, 0.3]).unwrap();
        assert!((r.theta[0] - 0.2).abs() < 1e-12 && (r.theta[1] - 0.3).abs() < 1e-12);
        assert!(r.grad_norm < 1e-9);
    }

    #[test]
    fn all_mass_on_one_outcome_fails() {
        let m = ClassicalModel::dice();
        assert!(matches!(
            m.mle(&[100, 0, 0], &[0.3, 0.3]),
            Err(Error::Convergence(_))
        ));
    }

    #[test]
    fn degenerate_model_is_irregular() {
        let m = ClassicalModel::new("flat", 2, 2, |x: &[f64]| {
            vec![x[0] + x[1], 1.0 - x[0] - x[1]]
        })
        .with_intervals(vec![(0.0, 0.5), (0.0, 0.5)]);
        assert!(matches!(
            m.fisher_matrix(&[0.2, 0.2]),
            Err(Error::Regularity(_))
        ));
    }

    #[test]
    fn optimal_m_gives_partial_fisher() {
        let m = ClassicalModel::dice();
        let p = Partition::new(1, 2).unwrap();
        let (ms, rank) = m.optimal_m(&[0.2, 0.3], &p).unwrap();
        assert_eq!(rank, 1);
        let eff = m.effective_score(&[0.2, 0.3], &p, &ms).unwrap();
        let g = fisher_from_scores(&m.probabilities(&[0.2, 0.3]).unwrap(), &eff);
        assert!((g[(0, 0)] - 6.25).abs() < 1e-9);
    }
}
