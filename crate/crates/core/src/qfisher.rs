//! Logarithmic derivatives, quantum Fisher matrices, dual operators, the commutation
//! operator and Z-matrices.
//!
//! Every solve happens in the eigenbasis of `ρ`: with `ρ = Σ p_a |a⟩⟨a|` the SLD is
//! `(L_i)_{ab} = 2 (∂_iρ)_{ab} / (p_a + p_b)` and the commutation operator is
//! `D(X)_{ab} = −i (p_a − p_b)/(p_a + p_b) X_{ab}`.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg::{self, c, CMat, HermEigen, Modulus, RMat};
use crate::model::{StateModel, POSITIVITY_TOL};
use crate::{Error, Result, C64};

/// Residual accepted for the defining equations of the SLD/RLD and the commutation operator,
/// relative to `max(1, ‖∂ρ‖)`.
pub const DEFINING_RESIDUAL_TOL: f64 = 1e-10;
/// Tolerance of the duality check `⟨L^i, L_j⟩ = δ_ij`.
pub const DUALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LdKind {
    Sld,
    Rld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FisherKind {
    Sld,
    Rld,
    Classical,
}

/// SLDs or RLDs at one parameter point.
#[derive(Debug, Clone)]
pub struct LogDerivativeSet {
    pub kind: LdKind,
    pub operators: Vec<CMat>,
    pub point: Vec<f64>,
}

/// A Fisher information matrix. SLD and classical matrices have zero imaginary part.
#[derive(Debug, Clone)]
pub struct Qfim {
    pub kind: FisherKind,
    pub entries: CMat,
    pub point: Vec<f64>,
}

impl Qfim {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Real part of the entries (the whole matrix for SLD and classical kinds).
    pub fn real(&self) -> RMat {
        linalg::real_part(&self.entries)
    }

    /// Wrap a real symmetric matrix.
    pub fn from_real(kind: FisherKind, entries: &RMat, point: &[f64]) -> Self {
        Self {
            kind,
            entries: linalg::complexify(&linalg::symmetric_part(entries)),
            point: point.to_vec(),
        }
    }

    /// Guarded inverse (real symmetric for SLD/classical, Hermitian for RLD).
    pub fn inverse(&self) -> Result<CMat> {
        match self.kind {
            FisherKind::Rld => linalg::inv_hermitian_pd(&self.entries, "RLD Fisher matrix"),
            _ => Ok(linalg::complexify(&linalg::inv_sym_pd(
                &self.real(),
                "Fisher matrix",
            )?)),
        }
    }

    /// Guarded inverse of the real part; for SLD/classical kinds this is the inverse.
    pub fn inverse_real(&self) -> Result<RMat> {
        linalg::inv_sym_pd(&self.real(), "Fisher matrix")
    }
}

/// Symmetric inner product `⟨X, Y⟩_S = ½ tr[ρ (Y X† + X† Y)]`.
pub fn sym_inner(rho: &CMat, x: &CMat, y: &CMat) -> f64 {
    let xd = x.adjoint();
    let a = linalg::trace_product(rho, &(y * &xd));
    let b = linalg::trace_product(rho, &(&xd * y));
    0.5 * (a + b).re
}

/// Right inner product `⟨X, Y⟩_R = tr[ρ Y X†]`.
pub fn rld_inner(rho: &CMat, x: &CMat, y: &CMat) -> C64 {
    linalg::trace_product(rho, &(y * x.adjoint()))
}

/// Eigendecomposition of a state, refusing eigenvalues below the full-rank floor.
pub fn state_eigen(rho: &CMat) -> Result<HermEigen> {
    let eig = linalg::herm_eigen(rho);
    if eig.min() < POSITIVITY_TOL {
        return Err(Error::SingularState(eig.min()));
    }
    Ok(eig)
}

/// SLDs of the given derivatives at `ρ`.
pub fn sld_operators(rho: &CMat, derivs: &[CMat]) -> Result<Vec<CMat>> {
    let eig = state_eigen(rho)?;
    let p = &eig.values;
    let mut out = Vec::with_capacity(derivs.len());
    for (i, d) in derivs.iter().enumerate() {
        let mut m = eig.to_eigenbasis(d);
        for a in 0..p.len() {
            for b in 0..p.len() {
                m[(a, b)] *= 2.0 / (p[a] + p[b]);
            }
        }
        let l = linalg::hermitian_part(&eig.from_eigenbasis(&m));
        let resid = linalg::frobenius(&((&l * rho + rho * &l) * c(0.5, 0.0) - d));
        check_residual(resid, d, format!("SLD {i}"))?;
        out.push(l);
    }
    Ok(out)
}

/// RLDs `ρ^{-1} ∂_iρ` of the given derivatives.
pub fn rld_operators(rho: &CMat, derivs: &[CMat]) -> Result<Vec<CMat>> {
    let eig = state_eigen(rho)?;
    let inv = eig.map(|x| 1.0 / x);
    let mut out = Vec::with_capacity(derivs.len());
    for (i, d) in derivs.iter().enumerate() {
        let l = &inv * d;
        let resid = linalg::frobenius(&(rho * &l - d));
        check_residual(resid, d, format!("RLD {i}"))?;
        out.push(l);
    }
    Ok(out)
}

fn check_residual(resid: f64, d: &CMat, what: alloc::string::String) -> Result<()> {
    let scale = linalg::frobenius(d).max(1.0);
    if resid > DEFINING_RESIDUAL_TOL * scale {
        return Err(Error::Consistency(format!(
            "{what}: defining-equation residual {resid:e}"
        )));
    }
    Ok(())
}

pub fn sld(model: &StateModel, theta: &[f64]) -> Result<LogDerivativeSet> {
    let rho = model.evaluate(theta)?;
    let derivs = model.derivatives(theta)?;
    Ok(LogDerivativeSet {
        kind: LdKind::Sld,
        operators: sld_operators(&rho, &derivs)?,
        point: theta.to_vec(),
    })
}

pub fn rld(model: &StateModel, theta: &[f64]) -> Result<LogDerivativeSet> {
    let rho = model.evaluate(theta)?;
    let derivs = model.derivatives(theta)?;
    Ok(LogDerivativeSet {
        kind: LdKind::Rld,
        operators: rld_operators(&rho, &derivs)?,
        point: theta.to_vec(),
    })
}

/// SLD: `J_ij = Re tr[ρ L_i L_j]` (symmetrized); RLD: `J_ij = tr[L_i† ρ L_j]` (Hermitized).
pub fn fisher_matrix(lds: &LogDerivativeSet, rho: &CMat) -> Result<Qfim> {
    let n = rho.nrows();
    if lds
        .operators
        .iter()
        .any(|l| l.nrows() != n || l.ncols() != n)
    {
        return Err(Error::Dimension(format!(
            "operators do not match the {n}x{n} state"
        )));
    }
    let d = lds.operators.len();
    let ops = &lds.operators;
    match lds.kind {
        LdKind::Sld => {
            let j = RMat::from_fn(d, d, |i, k| sym_inner(rho, &ops[i], &ops[k]));
            Ok(Qfim::from_real(FisherKind::Sld, &j, &lds.point))
        }
        LdKind::Rld => {
            let j = CMat::from_fn(d, d, |i, k| {
                linalg::trace_product(&(ops[i].adjoint() * rho), &ops[k])
            });
            Ok(Qfim {
                kind: FisherKind::Rld,
                entries: linalg::hermitian_part(&j),
                point: lds.point.clone(),
            })
        }
    }
}

/// `L^i = Σ_j (J^{-1})_{ji} L_j`, checked against `⟨L^i, L_j⟩ = δ_ij` in the matching inner
/// product.
pub fn dual_operators(lds: &LogDerivativeSet, qfim: &Qfim, rho: &CMat) -> Result<Vec<CMat>> {
    let d = lds.operators.len();
    if qfim.dim() != d {
        return Err(Error::Dimension(format!(
            "{d} operators but a {}x{} Fisher matrix",
            qfim.dim(),
            qfim.dim()
        )));
    }
    let inv = qfim.inverse()?;
    let duals: Vec<CMat> = (0..d)
        .map(|i| {
            let coeffs: Vec<C64> = (0..d).map(|j| inv[(j, i)]).collect();
            linalg::combine(&coeffs, &lds.operators)
        })
        .collect();
    for (i, dual) in duals.iter().enumerate() {
        for (j, op) in lds.operators.iter().enumerate() {
            let ip = match lds.kind {
                LdKind::Sld => c(sym_inner(rho, dual, op), 0.0),
                LdKind::Rld => rld_inner(rho, dual, op),
            };
            let want = if i == j { 1.0 } else { 0.0 };
            if (ip - c(want, 0.0)).modulus() > DUALITY_TOL {
                return Err(Error::Consistency(format!(
                    "dual basis check failed at ({i},{j}): {ip}"
                )));
            }
        }
    }
    Ok(duals)
}

/// The commutation operator `D_ρ(X)`, solving `ρX − Xρ = i(ρD + Dρ)`.
pub fn commutation_operator(rho: &CMat, x: &CMat) -> Result<CMat> {
    let eig = state_eigen(rho)?;
    let dx = commutation_operator_in(&eig, x);
    let lhs = rho * x - x * rho;
    let rhs = (rho * &dx + &dx * rho) * c(0.0, 1.0);
    let resid = linalg::frobenius(&(lhs - rhs));
    check_residual(resid, x, "commutation operator".into())?;
    Ok(dx)
}

/// `D_ρ(X)` given the eigendecomposition of `ρ` (no residual check).
pub fn commutation_operator_in(eig: &HermEigen, x: &CMat) -> CMat {
    let p = &eig.values;
    let mut m = eig.to_eigenbasis(x);
    for a in 0..p.len() {
        for b in 0..p.len() {
            m[(a, b)] *= c(0.0, -(p[a] - p[b]) / (p[a] + p[b]));
        }
    }
    eig.from_eigenbasis(&m)
}

/// `Z_ij = tr[X_i ρ X_j]`, Hermitized.
pub fn z_matrix(ops: &[CMat], rho: &CMat) -> Result<CMat> {
    let n = rho.nrows();
    if ops.iter().any(|x| x.nrows() != n || x.ncols() != n) {
        return Err(Error::Dimension(format!(
            "operators do not match the {n}x{n} state"
        )));
    }
    let k = ops.len();
    let z = CMat::from_fn(k, k, |i, j| {
        linalg::trace_product(&(&ops[i] * rho), &ops[j])
    });
    Ok(linalg::hermitian_part(&z))
}

/// Everything local about a model at one point: state, eigendecomposition, derivatives,
/// SLDs and the SLD Fisher matrix with its inverse.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub point: Vec<f64>,
    pub rho: CMat,
    pub eig: HermEigen,
    pub derivs: Vec<CMat>,
    pub slds: Vec<CMat>,
    pub j_sld: RMat,
    pub j_sld_inv: RMat,
}

impl LocalGeometry {
    pub fn at(model: &StateModel, theta: &[f64]) -> Result<Self> {
        let rho = model.evaluate(theta)?;
        let derivs = model.derivatives(theta)?;
        Self::from_parts(theta, rho, derivs)
    }

    pub fn from_parts(theta: &[f64], rho: CMat, derivs: Vec<CMat>) -> Result<Self> {
        let eig = state_eigen(&rho)?;
        let slds = sld_operators(&rho, &derivs)?;
        let d = slds.len();
        let j_sld = linalg::symmetric_part(&RMat::from_fn(d, d, |i, k| {
            sym_inner(&rho, &slds[i], &slds[k])
        }));
        let j_sld_inv = linalg::inv_sym_pd(&j_sld, "SLD Fisher matrix")?;
        Ok(Self {
            point: theta.to_vec(),
            rho,
            eig,
            derivs,
            slds,
            j_sld,
            j_sld_inv,
        })
    }

    pub fn dim_param(&self) -> usize {
        self.slds.len()
    }

    pub fn sld_set(&self) -> LogDerivativeSet {
        LogDerivativeSet {
            kind: LdKind::Sld,
            operators: self.slds.clone(),
            point: self.point.clone(),
        }
    }

    pub fn sld_qfim(&self) -> Qfim {
        Qfim::from_real(FisherKind::Sld, &self.j_sld, &self.point)
    }

    pub fn rlds(&self) -> Result<Vec<CMat>> {
        rld_operators(&self.rho, &self.derivs)
    }

    /// RLD Fisher matrix `tr[L_i† ρ L_j] = tr[∂_iρ ρ^{-1} ∂_jρ]`.
    pub fn j_rld(&self) -> Result<CMat> {
        let lds = LogDerivativeSet {
            kind: LdKind::Rld,
            operators: self.rlds()?,
            point: self.point.clone(),
        };
        Ok(fisher_matrix(&lds, &self.rho)?.entries)
    }

    /// Dual SLDs `L^{S;i} = Σ_j J^{S;ji} L_j`.
    pub fn dual_slds(&self) -> Vec<CMat> {
        let d = self.dim_param();
        (0..d)
            .map(|i| {
                let coeffs: Vec<f64> = (0..d).map(|j| self.j_sld_inv[(j, i)]).collect();
                linalg::combine_real(&coeffs, &self.slds)
            })
            .collect()
    }

    pub fn commutation(&self, x: &CMat) -> CMat {
        commutation_operator_in(&self.eig, x)
    }

    pub fn sym_inner(&self, x: &CMat, y: &CMat) -> f64 {
        sym_inner(&self.rho, x, y)
    }
}
