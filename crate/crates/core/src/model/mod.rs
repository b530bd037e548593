//! Parametric families of density matrices.
//!
//! A [`StateModel`] maps a real parameter vector to a full-rank density matrix and supplies
//! the partial derivatives, either from an analytic callback or by central differences.
//! Models are immutable once built and cheap to clone.

pub mod random;
mod zoo;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::linalg::{self, c, CMat, Modulus, RMat};
use crate::{Error, Result};

pub use zoo::{gell_mann_basis, zoo_build, ZooConfig, ZOO_NAMES};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Smallest singular value of the derivative Gram matrix accepted as regular.
pub const REGULARITY_TOL: f64 = 1e-8;
/// States with a smaller eigenvalue are rejected (full-rank models only).
pub const POSITIVITY_TOL: f64 = 1e-10;
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const DERIV_TRACE_TOL: f64 = 1e-10;

pub type StateFn = Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;
pub type DerivFn = Arc<dyn Fn(&[f64], usize) -> CMat + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
/// Vector-valued map of the parameters.
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Real-matrix-valued map of the parameters (e.g. a Jacobian).
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> RMat + Send + Sync>;

/// Split of the parameters into `d_interest` leading parameters of interest and the
/// remaining nuisance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Partition {
    d_interest: usize,
    d_total: usize,
}

impl Partition {
    pub fn new(d_interest: usize, d_total: usize) -> Result<Self> {
        if d_interest == 0 || d_interest > d_total {
            return Err(Error::Config(format!(
                "partition needs 1 <= d_interest <= d, got d_interest={d_interest}, d={d_total}"
            )));
        }
        Ok(Self {
            d_interest,
            d_total,
        })
    }

    /// Every parameter is of interest.
    pub fn full(d: usize) -> Self {
        Self {
            d_interest: d,
            d_total: d,
        }
    }

    pub fn d_interest(&self) -> usize {
        self.d_interest
    }

    pub fn d_nuisance(&self) -> usize {
        self.d_total - self.d_interest
    }

    pub fn d_total(&self) -> usize {
        self.d_total
    }

    pub fn has_nuisance(&self) -> bool {
        self.d_interest < self.d_total
    }

    pub fn interest(&self) -> Vec<usize> {
        (0..self.d_interest).collect()
    }

    pub fn nuisance(&self) -> Vec<usize> {
        (self.d_interest..self.d_total).collect()
    }

    pub(crate) fn check(&self, d: usize) -> Result<()> {
        if self.d_total != d {
            return Err(Error::Dimension(format!(
                "partition is for d={}, model has d={d}",
                self.d_total
            )));
        }
        Ok(())
    }
}

/// Real symmetric weight matrix for weighted-trace bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: RMat,
    semidefinite: bool,
}

impl WeightMatrix {
    /// A positive definite weight.
    pub fn new(entries: RMat) -> Result<Self> {
        Self::build(entries, false)
    }

    /// A weight that is only required to be positive semidefinite.
    pub fn semidefinite(entries: RMat) -> Result<Self> {
        Self::build(entries, true)
    }

    pub fn identity(k: usize) -> Self {
        Self {
            entries: RMat::identity(k, k),
            semidefinite: false,
        }
    }

    fn build(entries: RMat, semidefinite: bool) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "weight matrix is {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let asym = linalg::symmetry_deviation(&entries);
        if asym > 1e-12 {
            return Err(Error::Config(format!(
                "weight matrix not symmetric (deviation {asym:e})"
            )));
        }
        let lo = linalg::sym_eigen(&entries).values[0];
        if (semidefinite && lo < -1e-12) || (!semidefinite && lo <= 0.0) {
            return Err(Error::Config(format!(
                "weight matrix not positive (min eigenvalue {lo:e})"
            )));
        }
        Ok(Self {
            entries: linalg::symmetric_part(&entries),
            semidefinite,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &RMat {
        &self.entries
    }

    pub fn is_semidefinite(&self) -> bool {
        self.semidefinite
    }

    pub fn sqrt(&self) -> RMat {
        linalg::sqrt_psd(&self.entries)
    }

    pub fn det(&self) -> f64 {
        self.entries.determinant()
    }
}

/// A differentiable family `θ ↦ ρ_θ` of full-rank density matrices.
#[derive(Clone)]
pub struct StateModel {
    name: String,
    dim_hilbert: usize,
    dim_param: usize,
    state_fn: StateFn,
    deriv_fn: Option<DerivFn>,
    fd_step: f64,
    intervals: Vec<(f64, f64)>,
    constraint: Option<DomainFn>,
    labels: Vec<String>,
}

impl core::fmt::Debug for StateModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("StateModel")
            .field("name", &self.name)
            .field("dim_hilbert", &self.dim_hilbert)
            .field("dim_param", &self.dim_param)
            .field("analytic_derivatives", &self.deriv_fn.is_some())
            .field("fd_step", &self.fd_step)
            .field("intervals", &self.intervals)
            .field("labels", &self.labels)
            .finish()
    }
}

impl StateModel {
    /// A model on an unbounded domain with finite-difference derivatives; refine with the
    /// `with_*` builders.
    pub fn new(
        name: impl Into<String>,
        dim_hilbert: usize,
        dim_param: usize,
        state_fn: impl Fn(&[f64]) -> CMat + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim_hilbert,
            dim_param,
            state_fn: Arc::new(state_fn),
            deriv_fn: None,
            fd_step: DEFAULT_FD_STEP,
            intervals: alloc::vec![(f64::NEG_INFINITY, f64::INFINITY); dim_param],
            constraint: None,
            labels: (1..=dim_param).map(|i| format!("theta{i}")).collect(),
        }
    }

    pub fn with_derivatives(
        mut self,
        deriv_fn: impl Fn(&[f64], usize) -> CMat + Send + Sync + 'static,
    ) -> Self {
        self.deriv_fn = Some(Arc::new(deriv_fn));
        self
    }

    pub fn without_derivatives(mut self) -> Self {
        self.deriv_fn = None;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    /// Open interval per coordinate.
    pub fn with_intervals(mut self, intervals: Vec<(f64, f64)>) -> Self {
        assert_eq!(
            intervals.len(),
            self.dim_param,
            "one interval per parameter"
        );
        self.intervals = intervals;
        self
    }

    /// Extra (non-box) domain constraint, e.g. a simplex or a ball.
    pub fn with_constraint(mut self, f: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.constraint = Some(Arc::new(f));
        self
    }

    pub fn with_labels<S: ToString>(mut self, labels: &[S]) -> Self {
        assert_eq!(labels.len(), self.dim_param, "one label per parameter");
        self.labels = labels.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_hilbert(&self) -> usize {
        self.dim_hilbert
    }

    pub fn dim_param(&self) -> usize {
        self.dim_param
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.deriv_fn.is_some()
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
                "point has {} coordinates, model {} has {}",
                theta.len(),
                self.name,
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

    /// The raw state without invariant checks.
    pub fn state_unchecked(&self, theta: &[f64]) -> CMat {
        (self.state_fn)(theta)
    }

    /// `ρ_θ`, validated: Hermitian, unit trace, positive definite.
    pub fn evaluate(&self, theta: &[f64]) -> Result<CMat> {
        self.check_point(theta)?;
        let rho = (self.state_fn)(theta);
        if rho.nrows() != self.dim_hilbert || rho.ncols() != self.dim_hilbert {
            return Err(Error::Dimension(format!(
                "state is {}x{}, expected {}x{}",
                rho.nrows(),
                rho.ncols(),
                self.dim_hilbert,
                self.dim_hilbert
            )));
        }
        let herm = linalg::hermiticity_deviation(&rho);
        if herm > HERMITICITY_TOL {
            return Err(Error::Model(format!(
                "state not Hermitian (deviation {herm:e})"
            )));
        }
        let rho = linalg::hermitian_part(&rho);
        let tr = linalg::trace(&rho).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Model(format!("trace is {tr}")));
        }
        let lo = linalg::herm_eigen(&rho).min();
        if lo < POSITIVITY_TOL {
            return Err(Error::Model(format!(
                "state not full rank (min eigenvalue {lo:e})"
            )));
        }
        Ok(rho)
    }

    /// `∂ρ/∂θ_i` for every `i`, analytic when available, else central differences.
    ///
    /// Fails with [`Error::Regularity`] when the derivatives are linearly dependent.
    pub fn derivatives(&self, theta: &[f64]) -> Result<Vec<CMat>> {
        self.check_point(theta)?;
        let derivs = match &self.deriv_fn {
            Some(f) => {
                let mut out = Vec::with_capacity(self.dim_param);
                for i in 0..self.dim_param {
                    let d = f(theta, i);
                    let herm = linalg::hermiticity_deviation(&d);
                    if herm > HERMITICITY_TOL {
                        return Err(Error::Model(format!(
                            "derivative {i} not Hermitian (deviation {herm:e})"
                        )));
                    }
                    out.push(linalg::hermitian_part(&d));
                }
                out
            }
            None => self.central_differences(theta, self.fd_step)?,
        };
        for (i, d) in derivs.iter().enumerate() {
            let tr = linalg::trace(d).modulus();
            if tr > DERIV_TRACE_TOL {
                return Err(Error::Model(format!("derivative {i} has trace {tr:e}")));
            }
        }
        check_independent(&derivs)?;
        Ok(derivs)
    }

    /// Central differences `(ρ(θ+h e_i) − ρ(θ−h e_i)) / 2h`, Hermitian-symmetrized, ignoring
    /// any analytic callback.
    pub fn central_differences(&self, theta: &[f64], h: f64) -> Result<Vec<CMat>> {
        self.check_point(theta)?;
        let mut out = Vec::with_capacity(self.dim_param);
        let mut probe = theta.to_vec();
        for i in 0..self.dim_param {
            probe[i] = theta[i] + h;
            if !self.in_domain(&probe) {
                return Err(Error::Domain(format!(
                    "finite-difference probe {probe:?} leaves the domain"
                )));
            }
            let plus = (self.state_fn)(&probe);
            probe[i] = theta[i] - h;
            if !self.in_domain(&probe) {
                return Err(Error::Domain(format!(
                    "finite-difference probe {probe:?} leaves the domain"
                )));
            }
            let minus = (self.state_fn)(&probe);
            probe[i] = theta[i];
            out.push(linalg::hermitian_part(&((plus - minus) * c(0.5 / h, 0.0))));
        }
        Ok(out)
    }

    /// Reparametrize by `θ = to_original(ξ)`.
    ///
    /// `jacobian(ξ)` returns `T` with `T[(α, j)] = ∂θ_j/∂ξ_α`, so that Fisher matrices
    /// transform as `J_ξ = T J_θ Tᵀ`. The new domain is given by `intervals` plus the
    /// requirement that `to_original(ξ)` lies in the old domain.
    pub fn reparametrize(
        &self,
        name: impl Into<String>,
        to_original: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> RMat + Send + Sync + 'static,
        intervals: Vec<(f64, f64)>,
    ) -> StateModel {
        let d = self.dim_param;
        let map: VectorFn = Arc::new(to_original);
        let jac: MatrixFn = Arc::new(jacobian);
        let base = self.clone();
        let base_state = self.clone();
        let base_domain = self.clone();
        let map_state = map.clone();
        let map_domain = map.clone();
        let deriv_cache: DerivFn = Arc::new(move |xi: &[f64], alpha: usize| {
            let theta = map(xi);
            let t = jac(xi);
            let mut out = CMat::zeros(base.dim_hilbert, base.dim_hilbert);
            for j in 0..d {
                let w = t[(alpha, j)];
                if w != 0.0 {
                    out += base.derivative_unchecked(&theta, j) * c(w, 0.0);
                }
            }
            out
        });
        StateModel {
            name: name.into(),
            dim_hilbert: self.dim_hilbert,
            dim_param: d,
            state_fn: Arc::new(move |xi: &[f64]| base_state.state_unchecked(&map_state(xi))),
            deriv_fn: Some(deriv_cache),
            fd_step: self.fd_step,
            intervals,
            constraint: Some(Arc::new(move |xi: &[f64]| {
                base_domain.in_domain(&map_domain(xi))
            })),
            labels: (1..=d).map(|i| format!("xi{i}")).collect(),
        }
    }

    /// Linear reparametrization `θ = Tᵀ ξ` (so `T[(α, j)] = ∂θ_j/∂ξ_α`).
    pub fn linear_reparametrize(&self, t: RMat) -> StateModel {
        assert_eq!(t.nrows(), self.dim_param);
        let tt = t.clone();
        self.reparametrize(
            format!("{}-linear", self.name),
            move |xi: &[f64]| {
                let x = nalgebra::DVector::from_column_slice(xi);
                (tt.transpose() * x).iter().copied().collect()
            },
            move |_| t.clone(),
            alloc::vec![(f64::NEG_INFINITY, f64::INFINITY); self.dim_param],
        )
    }

    /// Sub-model in which only the parameters listed in `free` vary; the others are frozen at
    /// their values in `base_point`.
    pub fn submodel(&self, free: &[usize], base_point: &[f64]) -> Result<StateModel> {
        self.check_point(base_point)?;
        if free.is_empty() || free.iter().any(|&i| i >= self.dim_param) {
            return Err(Error::Config(format!(
                "invalid free-parameter list {free:?}"
            )));
        }
        let base_point = base_point.to_vec();
        let free_v = free.to_vec();
        let embed = {
            let free_v = free_v.clone();
            let base_point = base_point.clone();
            Arc::new(move |x: &[f64]| {
                let mut theta = base_point.clone();
                for (k, &i) in free_v.iter().enumerate() {
                    theta[i] = x[k];
                }
                theta
            })
        };
        let (e1, e2, e3) = (embed.clone(), embed.clone(), embed);
        let (b1, b2, b3) = (self.clone(), self.clone(), self.clone());
        let free_d = free_v.clone();
        Ok(StateModel {
            name: format!("{}-sub", self.name),
            dim_hilbert: self.dim_hilbert,
            dim_param: free.len(),
            state_fn: Arc::new(move |x: &[f64]| b1.state_unchecked(&e1(x))),
            deriv_fn: Some(Arc::new(move |x: &[f64], k: usize| {
                b2.derivative_unchecked(&e2(x), free_d[k])
            })),
            fd_step: self.fd_step,
            intervals: free.iter().map(|&i| self.intervals[i]).collect(),
            constraint: Some(Arc::new(move |x: &[f64]| b3.in_domain(&e3(x)))),
            labels: free.iter().map(|&i| self.labels[i].clone()).collect(),
        })
    }

    /// One derivative without domain or regularity checks.
    pub(crate) fn derivative_unchecked(&self, theta: &[f64], i: usize) -> CMat {
        match &self.deriv_fn {
            Some(f) => linalg::hermitian_part(&f(theta, i)),
            None => {
                let h = self.fd_step;
                let mut p = theta.to_vec();
                p[i] += h;
                let plus = (self.state_fn)(&p);
                p[i] = theta[i] - h;
                let minus = (self.state_fn)(&p);
                linalg::hermitian_part(&((plus - minus) * c(0.5 / h, 0.0)))
            }
        }
    }
}

/// Linear independence of the derivatives via the smallest singular value of the Gram
/// matrix `Re tr[∂_i ρ ∂_j ρ]`.
fn check_independent(derivs: &[CMat]) -> Result<()> {
    let d = derivs.len();
    let gram = RMat::from_fn(d, d, |i, j| {
        linalg::trace_product(&derivs[i], &derivs[j]).re
    });
    let sv = linalg::singular_values(&gram);
    let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > REGULARITY_TOL) {
        return Err(Error::Regularity(format!(
            "derivative Gram matrix has smallest singular value {smallest:e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn constant_model_is_irregular() {
        let m = StateModel::new("const", 2, 1, |_| CMat::identity(2, 2) * c(0.5, 0.0));
        assert!(matches!(m.derivatives(&[0.1]), Err(Error::Regularity(_))));
    }

    #[test]
    fn domain_and_dimension_errors() {
        let m = zoo_build("bloch-qubit", &ZooConfig::default()).unwrap();
        assert!(matches!(
            m.evaluate(&[0.9, 0.9, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(m.evaluate(&[0.1, 0.1]), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_positive_state_is_rejected() {
        let m = StateModel::new("bad", 2, 1, |x: &[f64]| {
            CMat::from_row_slice(
                2,
                2,
                &[c(1.0 + x[0], 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-x[0], 0.0)],
            )
        });
        assert!(matches!(m.evaluate(&[0.1]), Err(Error::Model(_))));
    }

    #[test]
    fn fd_probe_leaving_domain() {
        let m = zoo_build("dice", &ZooConfig::default())
            .unwrap()
            .without_derivatives()
            .with_fd_step(0.1);
        assert!(matches!(m.derivatives(&[0.05, 0.3]), Err(Error::Domain(_))));
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(0, 2).is_err());
        assert!(Partition::new(3, 2).is_err());
        let p = Partition::new(1, 3).unwrap();
        assert_eq!(p.nuisance(), alloc::vec![1, 2]);
    }

    #[test]
    fn weight_validation() {
        assert!(WeightMatrix::new(RMat::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(WeightMatrix::new(RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
        assert!(
            WeightMatrix::semidefinite(RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_ok()
        );
    }

    #[test]
    fn submodel_freezes_coordinates() {
        let m = zoo_build("bloch-qubit", &ZooConfig::default()).unwrap();
        let sub = m.submodel(&[0, 1], &[0.3, 0.4, 0.5]).unwrap();
        let a = sub.evaluate(&[0.3, 0.4]).unwrap();
        let b = m.evaluate(&[0.3, 0.4, 0.5]).unwrap();
        assert!(max_abs(&(a - b)) < 1e-15);
        assert_eq!(sub.derivatives(&[0.3, 0.4]).unwrap().len(), 2);
    }
}
