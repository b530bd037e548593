//! Model classes at a point (D-invariant, asymptotically classical, classical) and on a
//! sampled grid (quasi-classical), each in the plain and the "for the parameters of interest"
//! variant.
//!
//! Residuals are relative to the norms of the operators involved and compared against
//! [`CLASS_TOL`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::linalg::{self, c, CMat, Modulus, RMat};
use crate::math;
use crate::model::{Partition, StateModel};
use crate::nuisance;
use crate::qfisher::{self, LocalGeometry};
use crate::{Error, Result};

pub const CLASS_TOL: f64 = 1e-7;

/// A class predicate with the residual it was decided on and an independent cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ClassFlag {
    pub value: bool,
    pub residual: f64,
    pub cross_check: f64,
}

impl ClassFlag {
    fn new(residual: f64, cross_check: f64) -> Self {
        Self {
            value: residual < CLASS_TOL,
            residual,
            cross_check,
        }
    }

    /// True when the cross-check residual leads to the same verdict.
    pub fn routes_agree(&self) -> bool {
        self.value == (self.cross_check < CLASS_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Scope {
    AtPoint,
    SampledGrid,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ClassificationReport {
    pub flags: BTreeMap<String, ClassFlag>,
    pub scope: Scope,
    pub points_tested: usize,
}

fn sym_norm(geom: &LocalGeometry, x: &CMat) -> f64 {
    math::sqrt(geom.sym_inner(x, x).max(0.0))
}

/// Norm (symmetric inner product) of the component of `x` orthogonal to `span`.
fn projection_residual(geom: &LocalGeometry, x: &CMat, span: &[CMat]) -> f64 {
    let k = span.len();
    let gram = RMat::from_fn(k, k, |i, j| geom.sym_inner(&span[i], &span[j]));
    let rhs = nalgebra::DVector::from_fn(k, |i, _| geom.sym_inner(&span[i], x));
    let (pinv, _) = linalg::pinv_sym(&gram, 1e-12);
    let coeffs = pinv * rhs;
    let mut r = linalg::hermitian_part(x);
    for (w, s) in coeffs.iter().zip(span) {
        r -= s * c(*w, 0.0);
    }
    sym_norm(geom, &r)
}

/// D-invariance for the parameters of interest: `D(L̃_i)` lies in the span of all SLDs for
/// every interest index (for the full partition this is plain D-invariance of the SLD span).
///
/// The cross-check is the Hermiticity of the interest RLD duals `Σ_j ((J^R)^{-1})_{ji} L^R_j`,
/// which holds exactly in the same situation.
pub fn is_d_invariant_in(geom: &LocalGeometry, partition: &Partition) -> Result<ClassFlag> {
    let eff = nuisance::effective_slds_in(geom, partition)?;
    let mut residual: f64 = 0.0;
    for l in &eff {
        let dl = geom.commutation(l);
        residual = residual
            .max(projection_residual(geom, &dl, &geom.slds) / sym_norm(geom, l).max(1e-300));
    }
    let rlds = geom.rlds()?;
    let jr_inv = linalg::inv_hermitian_pd(&geom.j_rld()?, "RLD Fisher matrix")?;
    let d = geom.dim_param();
    let mut cross: f64 = 0.0;
    for i in partition.interest() {
        let coeffs: Vec<_> = (0..d).map(|j| jr_inv[(j, i)]).collect();
        let dual = linalg::combine(&coeffs, &rlds);
        let scale = linalg::frobenius(&dual).max(1e-300);
        cross = cross.max(linalg::frobenius(&(&dual - dual.adjoint())) / scale);
    }
    Ok(ClassFlag::new(residual, cross))
}

pub fn is_d_invariant(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
) -> Result<ClassFlag> {
    is_d_invariant_in(&LocalGeometry::at(model, theta)?, partition)
}

/// Residual of the literal "span of the effective SLDs is D-closed" test, reported as a
/// diagnostic only (it is stricter than what equality of the Holevo and RLD bounds needs).
pub fn effective_span_d_residual(geom: &LocalGeometry, partition: &Partition) -> Result<f64> {
    let eff = nuisance::effective_slds_in(geom, partition)?;
    let mut residual: f64 = 0.0;
    for l in &eff {
        let dl = geom.commutation(l);
        residual =
            residual.max(projection_residual(geom, &dl, &eff) / sym_norm(geom, l).max(1e-300));
    }
    Ok(residual)
}

/// Asymptotic classicality for the parameters of interest: `tr ρ[L̃_i, L̃_j] = 0`.
/// Cross-check: `Im Z` of the interest dual SLDs vanishes.
pub fn is_asymptotically_classical_in(
    geom: &LocalGeometry,
    partition: &Partition,
) -> Result<ClassFlag> {
    let eff = nuisance::effective_slds_in(geom, partition)?;
    let mut residual: f64 = 0.0;
    for a in &eff {
        for b in &eff {
            let comm = linalg::trace_product(&geom.rho, &linalg::commutator(a, b)).modulus();
            let scale = (sym_norm(geom, a) * sym_norm(geom, b)).max(1e-300);
            residual = residual.max(comm / scale);
        }
    }
    let duals: Vec<CMat> = geom
        .dual_slds()
        .into_iter()
        .take(partition.d_interest())
        .collect();
    let z = qfisher::z_matrix(&duals, &geom.rho)?;
    let mut cross: f64 = 0.0;
    for i in 0..duals.len() {
        for j in 0..duals.len() {
            let scale = math::sqrt(z[(i, i)].re * z[(j, j)].re).max(1e-300);
            cross = cross.max(z[(i, j)].im.abs() / scale);
        }
    }
    Ok(ClassFlag::new(residual, cross))
}

pub fn is_asymptotically_classical(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
) -> Result<ClassFlag> {
    is_asymptotically_classical_in(&LocalGeometry::at(model, theta)?, partition)
}

/// Classical at the point: `J^S = J^R`. Cross-check: `ρ` commutes with every `∂_iρ`.
pub fn is_classical_in(geom: &LocalGeometry) -> Result<ClassFlag> {
    let jr = geom.j_rld()?;
    let js = linalg::complexify(&geom.j_sld);
    let residual = linalg::frobenius(&(&jr - &js)) / linalg::frobenius(&js).max(1e-300);
    let mut cross: f64 = 0.0;
    for d in &geom.derivs {
        let scale = (linalg::frobenius(&geom.rho) * linalg::frobenius(d)).max(1e-300);
        cross = cross.max(linalg::frobenius(&linalg::commutator(&geom.rho, d)) / scale);
    }
    Ok(ClassFlag::new(residual, cross))
}

pub fn is_classical(model: &StateModel, theta: &[f64]) -> Result<ClassFlag> {
    is_classical_in(&LocalGeometry::at(model, theta)?)
}

/// Largest relative commutator norm among `{ρ, ∂_1ρ, …, ∂_dρ}`: zero exactly when they are
/// simultaneously diagonalizable at this point. Diagnostic only.
pub fn simultaneous_diagonalizability_residual(geom: &LocalGeometry) -> f64 {
    let mut ops = Vec::with_capacity(geom.derivs.len() + 1);
    ops.push(geom.rho.clone());
    ops.extend(geom.derivs.iter().cloned());
    let mut worst: f64 = 0.0;
    for a in &ops {
        for b in &ops {
            let scale = (linalg::frobenius(a) * linalg::frobenius(b)).max(1e-300);
            worst = worst.max(linalg::frobenius(&linalg::commutator(a, b)) / scale);
        }
    }
    worst
}

/// Quasi-classicality on a sampled grid: every pair of effective SLDs, at the same or at
/// different grid points, commutes. This is a necessary-condition check over the samples only.
/// The cross-check is the same test on the full SLD sets.
pub fn is_quasi_classical(
    model: &StateModel,
    grid: &[Vec<f64>],
    partition: &Partition,
) -> Result<ClassFlag> {
    if grid.len() < 2 {
        return Err(Error::Domain(
            "quasi-classicality needs at least two grid points".into(),
        ));
    }
    let mut eff = Vec::with_capacity(grid.len());
    let mut full = Vec::with_capacity(grid.len());
    for theta in grid {
        let geom = LocalGeometry::at(model, theta)?;
        eff.push(nuisance::effective_slds_in(&geom, partition)?);
        full.push(geom.slds);
    }
    Ok(ClassFlag::new(
        worst_commutator(&eff),
        worst_commutator(&full),
    ))
}

fn worst_commutator(sets: &[Vec<CMat>]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in sets {
        for t in sets {
            for a in s {
                for b in t {
                    let scale = (linalg::frobenius(a) * linalg::frobenius(b)).max(1e-300);
                    worst = worst.max(linalg::frobenius(&linalg::commutator(a, b)) / scale);
                }
            }
        }
    }
    worst
}

/// All point-wise classes, with the consistency requirement that a classical model is
/// D-invariant and asymptotically classical.
pub fn classify_point(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
) -> Result<ClassificationReport> {
    let geom = LocalGeometry::at(model, theta)?;
    let d_inv = is_d_invariant_in(&geom, partition)?;
    let asym = is_asymptotically_classical_in(&geom, partition)?;
    let classical = is_classical_in(&geom)?;
    if classical.value && !(d_inv.value && asym.value) {
        return Err(Error::Consistency(format!(
            "classical at {theta:?} but D-invariant = {}, asymptotically classical = {}",
            d_inv.value, asym.value
        )));
    }
    let mut flags = BTreeMap::new();
    flags.insert("d_invariant".to_string(), d_inv);
    flags.insert("asymptotically_classical".to_string(), asym);
    flags.insert("classical".to_string(), classical);
    Ok(ClassificationReport {
        flags,
        scope: Scope::AtPoint,
        points_tested: 1,
    })
}

/// Point-wise classes at `grid[0]` plus quasi-classicality over the whole grid.
pub fn classify_grid(
    model: &StateModel,
    grid: &[Vec<f64>],
    partition: &Partition,
) -> Result<ClassificationReport> {
    let first = grid
        .first()
        .ok_or_else(|| Error::Domain("empty grid".into()))?;
    let mut report = classify_point(model, first, partition)?;
    report.flags.insert(
        "quasi_classical".to_string(),
        is_quasi_classical(model, grid, partition)?,
    );
    report.scope = Scope::SampledGrid;
    report.points_tested = grid.len();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{zoo_build, ZooConfig};

    fn zoo(name: &str) -> StateModel {
        zoo_build(name, &ZooConfig::default()).unwrap()
    }

    #[test]
    fn full_bloch_model_is_d_invariant() {
        let f = is_d_invariant(&zoo("bloch-qubit"), &[0.3, 0.4, 0.5], &Partition::full(3)).unwrap();
        assert!(f.value && f.routes_agree(), "{f:?}");
        let p = Partition::new(2, 3).unwrap();
        let f = is_d_invariant(&zoo("bloch-qubit"), &[0.3, 0.4, 0.5], &p).unwrap();
        assert!(f.value && f.routes_agree(), "{f:?}");
    }

    #[test]
    fn bloch_interest_pair_not_asymptotically_classical() {
        let p = Partition::new(2, 3).unwrap();
        let f = is_asymptotically_classical(&zoo("bloch-qubit"), &[0.3, 0.4, 0.5], &p).unwrap();
        assert!(!f.value && f.routes_agree());
        let p1 = Partition::new(1, 3).unwrap();
        assert!(
            is_asymptotically_classical(&zoo("bloch-qubit"), &[0.3, 0.4, 0.5], &p1)
                .unwrap()
                .value
        );
    }

    #[test]
    fn dice_is_classical_everywhere() {
        let m = zoo("dice");
        let r = classify_grid(
            &m,
            &[vec![0.2, 0.3], vec![0.5, 0.1], vec![0.3, 0.3]],
            &Partition::new(1, 2).unwrap(),
        )
        .unwrap();
        assert!(r.flags.values().all(|f| f.value), "{r:?}");
    }

    #[test]
    fn bloch_and_clock_are_not_classical() {
        assert!(
            !is_classical(&zoo("bloch-qubit"), &[0.3, 0.4, 0.5])
                .unwrap()
                .value
        );
        assert!(
            !is_classical(&zoo("qubit-clock-orthogonal"), &[1.0, 0.8])
                .unwrap()
                .value
        );
        let q = is_quasi_classical(
            &zoo("bloch-qubit"),
            &[vec![0.1, 0.2, 0.3], vec![0.0, 0.1, 0.2]],
            &Partition::full(3),
        )
        .unwrap();
        assert!(!q.value);
    }

    use alloc::vec;
}
