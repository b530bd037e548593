//! Partition-dependent quantities: partial Fisher information, effective SLDs/RLDs, local
//! and global parameter orthogonalization, and information loss.

use alloc::format;
use alloc::vec::Vec;

use crate::bounds::{self, BoundKind, BoundOptions};
use crate::linalg::{self, CMat, Modulus, RMat};
use crate::model::{Partition, StateModel, WeightMatrix};
use crate::qfisher::{self, FisherKind, LocalGeometry, Qfim};
use crate::{Error, Result, C64};

/// Relative tolerance of the Schur-complement cross-check against the inverse's block.
pub const SCHUR_CHECK_TOL: f64 = 1e-9;
/// Default orthogonality tolerance along a global-orthogonalization trajectory.
pub const ODE_TOL: f64 = 1e-6;
/// Information loss below `-LOSS_FLOOR` is a consistency failure; above it, clamped to zero.
pub const LOSS_FLOOR: f64 = 1e-9;

/// `J(I|N) = J_II − J_IN J_NN^{-1} J_NI`.
#[derive(Debug, Clone)]
pub struct PartialFisher {
    pub entries: CMat,
    pub kind: FisherKind,
    pub point: Vec<f64>,
    pub partition: Partition,
}

impl PartialFisher {
    pub fn real(&self) -> RMat {
        linalg::real_part(&self.entries)
    }

    pub fn inverse(&self) -> Result<CMat> {
        match self.kind {
            FisherKind::Rld => linalg::inv_hermitian_pd(&self.entries, "partial RLD Fisher matrix"),
            _ => Ok(linalg::complexify(&linalg::inv_sym_pd(
                &self.real(),
                "partial Fisher matrix",
            )?)),
        }
    }
}

/// Schur complement of the nuisance block of a complex Hermitian matrix.
pub fn schur_complement(j: &CMat, partition: &Partition) -> Result<CMat> {
    partition.check(j.nrows())?;
    if !partition.has_nuisance() {
        return Ok(j.clone());
    }
    let (ii, nn) = (partition.interest(), partition.nuisance());
    let j_nn_inv = linalg::inv_hermitian_pd(&linalg::block(j, &nn, &nn), "nuisance block")?;
    let s = linalg::block(j, &ii, &ii)
        - linalg::block(j, &ii, &nn) * j_nn_inv * linalg::block(j, &nn, &ii);
    Ok(linalg::hermitian_part(&s))
}

/// Real-symmetric Schur complement.
pub fn schur_complement_real(j: &RMat, partition: &Partition) -> Result<RMat> {
    partition.check(j.nrows())?;
    if !partition.has_nuisance() {
        return Ok(j.clone());
    }
    let (ii, nn) = (partition.interest(), partition.nuisance());
    let j_nn_inv = linalg::inv_sym_pd(&linalg::block(j, &nn, &nn), "nuisance block")?;
    let s = linalg::block(j, &ii, &ii)
        - linalg::block(j, &ii, &nn) * j_nn_inv * linalg::block(j, &nn, &ii);
    Ok(linalg::symmetric_part(&s))
}

/// Partial Fisher information, cross-checked against the interest block of `J^{-1}`.
pub fn partial_fisher(qfim: &Qfim, partition: &Partition) -> Result<PartialFisher> {
    let entries = schur_complement(&qfim.entries, partition)?;
    let out = PartialFisher {
        entries,
        kind: qfim.kind,
        point: qfim.point.clone(),
        partition: *partition,
    };
    if partition.has_nuisance() {
        let ii = partition.interest();
        let block = linalg::block(&qfim.inverse()?, &ii, &ii);
        let inv = out.inverse()?;
        let scale = linalg::max_abs(&block).max(1.0);
        let gap = linalg::max_abs(&(block - inv));
        if gap > SCHUR_CHECK_TOL * scale {
            return Err(Error::Consistency(format!(
                "Schur complement and inverse block disagree by {gap:e}"
            )));
        }
    }
    Ok(out)
}

/// `K = J_NN^{-1} J_NI` (d_N × d_I), the projection coefficients of the interest scores onto
/// the nuisance scores.
fn projection_coefficients(j: &CMat, partition: &Partition) -> Result<CMat> {
    let (ii, nn) = (partition.interest(), partition.nuisance());
    let j_nn_inv = linalg::inv_hermitian_pd(&linalg::block(j, &nn, &nn), "nuisance block")?;
    Ok(j_nn_inv * linalg::block(j, &nn, &ii))
}

/// `L̃_i = L_i − Σ_l K_{li} L_l` over nuisance `l`.
fn project_out(ops: &[CMat], k: &CMat, partition: &Partition) -> Vec<CMat> {
    let nn = partition.nuisance();
    partition
        .interest()
        .into_iter()
        .map(|i| {
            let mut out = ops[i].clone();
            for (row, &l) in nn.iter().enumerate() {
                out -= &ops[l] * k[(row, i)];
            }
            out
        })
        .collect()
}

/// Effective SLDs from precomputed local geometry; verified to have Gram matrix equal to the
/// partial SLD Fisher matrix and to be orthogonal to every nuisance SLD.
pub fn effective_slds_in(geom: &LocalGeometry, partition: &Partition) -> Result<Vec<CMat>> {
    partition.check(geom.dim_param())?;
    if !partition.has_nuisance() {
        return Ok(geom.slds.clone());
    }
    let j = linalg::complexify(&geom.j_sld);
    let k = projection_coefficients(&j, partition)?;
    let eff = project_out(&geom.slds, &k, partition);
    let partial = schur_complement_real(&geom.j_sld, partition)?;
    let scale = linalg::max_abs_real(&geom.j_sld).max(1.0);
    for (a, x) in eff.iter().enumerate() {
        for (b, y) in eff.iter().enumerate() {
            let g = geom.sym_inner(x, y);
            if (g - partial[(a, b)]).abs() > SCHUR_CHECK_TOL * scale {
                return Err(Error::Consistency(format!(
                    "effective SLD Gram entry ({a},{b}) is off by {:e}",
                    g - partial[(a, b)]
                )));
            }
        }
        for l in partition.nuisance() {
            let ip = geom.sym_inner(x, &geom.slds[l]);
            if ip.abs() > 1e-8 * scale {
                return Err(Error::Consistency(format!(
                    "effective SLD {a} not orthogonal to nuisance SLD {l}: {ip:e}"
                )));
            }
        }
    }
    Ok(eff)
}

pub fn effective_slds(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
) -> Result<Vec<CMat>> {
    effective_slds_in(&LocalGeometry::at(model, theta)?, partition)
}

/// Effective RLDs: the same projection with the RLD Fisher matrix and the right inner
/// product `⟨X, Y⟩_R = tr[ρ Y X†]`; their Gram matrix is the partial RLD Fisher matrix.
pub fn effective_rlds_in(geom: &LocalGeometry, partition: &Partition) -> Result<Vec<CMat>> {
    partition.check(geom.dim_param())?;
    let rlds = geom.rlds()?;
    if !partition.has_nuisance() {
        return Ok(rlds);
    }
    let j = geom.j_rld()?;
    let k = projection_coefficients(&j, partition)?;
    let eff = project_out(&rlds, &k, partition);
    let partial = schur_complement(&j, partition)?;
    let scale = linalg::max_abs(&j).max(1.0);
    for (a, x) in eff.iter().enumerate() {
        for (b, y) in eff.iter().enumerate() {
            let g: C64 = qfisher::rld_inner(&geom.rho, y, x);
            if (g - partial[(a, b)]).modulus() > SCHUR_CHECK_TOL * scale {
                return Err(Error::Consistency(format!(
                    "effective RLD Gram entry ({a},{b}) is off"
                )));
            }
        }
        for l in partition.nuisance() {
            let ip = qfisher::rld_inner(&geom.rho, &rlds[l], x);
            if ip.modulus() > 1e-8 * scale {
                return Err(Error::Consistency(format!(
                    "effective RLD {a} not orthogonal to nuisance RLD {l}"
                )));
            }
        }
    }
    Ok(eff)
}

pub fn effective_rlds(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
) -> Result<Vec<CMat>> {
    effective_rlds_in(&LocalGeometry::at(model, theta)?, partition)
}

/// A linear change of coordinates `θ → ξ` about a reference point.
///
/// `jacobian[(α, j)] = ∂θ_j/∂ξ_α`, so that Fisher matrices transform as `T J Tᵀ`.
#[derive(Debug, Clone)]
pub struct OrthoTransform {
    pub jacobian: RMat,
    pub new_point: Vec<f64>,
    pub reference_point: Vec<f64>,
    /// `K = J_NN^{-1} J_NI` at the reference point.
    pub coefficients: RMat,
    pub partition: Partition,
}

impl OrthoTransform {
    /// `T J Tᵀ`.
    pub fn transform_fisher(&self, j: &RMat) -> RMat {
        linalg::symmetric_part(&(&self.jacobian * j * self.jacobian.transpose()))
    }

    /// The model in the new coordinates: `θ_I = ξ_I`, `θ_N = ξ_N − K (ξ_I − θ_{I,0})`.
    pub fn apply(&self, model: &StateModel) -> StateModel {
        let k = self.coefficients.clone();
        let p = self.partition;
        let base: Vec<f64> = self.reference_point[..p.d_interest()].to_vec();
        let t = self.jacobian.clone();
        model.reparametrize(
            format!("{}-orthogonalized", model.name()),
            move |xi: &[f64]| {
                let mut theta = xi.to_vec();
                for (row, l) in (p.d_interest()..p.d_total()).enumerate() {
                    for i in 0..p.d_interest() {
                        theta[l] -= k[(row, i)] * (xi[i] - base[i]);
                    }
                }
                theta
            },
            move |_| t.clone(),
            model
                .intervals()
                .iter()
                .map(|_| (f64::NEG_INFINITY, f64::INFINITY))
                .collect(),
        )
    }
}

/// Local orthogonalization `ξ_I = θ_I`, `ξ_N = θ_N + J_NN(θ₀)^{-1} J_NI(θ₀)(θ_I − θ_{I,0})`.
pub fn local_orthogonalize(
    qfim: &Qfim,
    partition: &Partition,
    theta: &[f64],
    theta0: &[f64],
) -> Result<OrthoTransform> {
    let d = qfim.dim();
    partition.check(d)?;
    if theta.len() != d || theta0.len() != d {
        return Err(Error::Dimension(format!(
            "points must have {d} coordinates"
        )));
    }
    let j = qfim.real();
    let (ii, nn) = (partition.interest(), partition.nuisance());
    let k = if partition.has_nuisance() {
        linalg::inv_sym_pd(&linalg::block(&j, &nn, &nn), "nuisance block")?
            * linalg::block(&j, &nn, &ii)
    } else {
        RMat::zeros(0, ii.len())
    };
    let mut t = RMat::identity(d, d);
    let mut xi = theta.to_vec();
    for (row, &l) in nn.iter().enumerate() {
        for &i in &ii {
            t[(i, l)] = -k[(row, i)];
            xi[l] += k[(row, i)] * (theta[i] - theta0[i]);
        }
    }
    let out = OrthoTransform {
        jacobian: t,
        new_point: xi,
        reference_point: theta0.to_vec(),
        coefficients: k,
        partition: *partition,
    };
    let jt = out.transform_fisher(&j);
    let scale = linalg::max_abs_real(&j).max(1.0);
    for &i in &ii {
        for &l in &nn {
            if jt[(i, l)].abs() > 1e-9 * scale {
                return Err(Error::Consistency(format!(
                    "orthogonalized Fisher block ({i},{l}) = {:e}",
                    jt[(i, l)]
                )));
            }
        }
    }
    Ok(out)
}

/// Options for [`global_orthogonalize_ode`].
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    /// RK4 steps per grid interval.
    pub substeps: usize,
    /// Allowed relative `|J_ξ;1j|` for nuisance `j`.
    pub ode_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            substeps: 1,
            ode_tol: ODE_TOL,
        }
    }
}

/// One slice of a global-orthogonalization trajectory.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TrajectoryPoint {
    pub xi1: f64,
    /// `θ(ξ₁, ξ_N)` with the nuisance coordinates `ξ_N` held at their start values.
    pub theta: Vec<f64>,
    /// `T[(α, j)] = ∂θ_j/∂ξ_α`.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub jacobian: RMat,
    /// SLD Fisher matrix in the new coordinates, `T J Tᵀ`.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub fisher_xi: RMat,
    /// `max_j |J_ξ;1j| / max(1, ‖J‖)` over nuisance `j`.
    pub offdiag_residual: f64,
    /// `J^{S;11}` in the original coordinates.
    pub inverse_info_theta: f64,
    /// `1 / J_ξ;11`, which must equal `J^{S;11}`.
    pub inverse_info_xi: f64,
}

/// Result of [`global_orthogonalize_ode`].
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OrthoTrajectory {
    pub points: Vec<TrajectoryPoint>,
    pub substeps: usize,
    pub ode_tol: f64,
}

impl OrthoTrajectory {
    pub fn max_residual(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.offdiag_residual)
            .fold(0.0, f64::max)
    }
}

/// Right-hand side `dθ_N/dξ₁ = −J_NN^{-1} J_N1` (with `dθ₁/dξ₁ = 1`).
fn ode_rhs(model: &StateModel, theta: &[f64]) -> Result<Vec<f64>> {
    let geom = LocalGeometry::at(model, theta).map_err(step_error)?;
    let d = theta.len();
    let nn: Vec<usize> = (1..d).collect();
    let j = &geom.j_sld;
    let j_nn = linalg::block(j, &nn, &nn);
    let inv = linalg::inv_sym_pd(&j_nn, "nuisance block").map_err(step_error)?;
    let rhs = inv * linalg::block(j, &nn, &[0]);
    let mut out = alloc::vec![1.0; d];
    for (row, v) in rhs.iter().enumerate() {
        out[row + 1] = -v;
    }
    Ok(out)
}

fn step_error(e: Error) -> Error {
    match e {
        Error::Step(_) => e,
        other => Error::Step(format!("{other}")),
    }
}

/// `∂f_N/∂θ_N` by central differences.
fn rhs_jacobian(model: &StateModel, theta: &[f64]) -> Result<RMat> {
    let d = theta.len();
    let dn = d - 1;
    let mut a = RMat::zeros(dn, dn);
    for col in 0..dn {
        let h = 1e-6 * theta[col + 1].abs().max(1.0);
        let mut p = theta.to_vec();
        p[col + 1] += h;
        let fp = ode_rhs(model, &p)?;
        p[col + 1] = theta[col + 1] - h;
        let fm = ode_rhs(model, &p)?;
        for row in 0..dn {
            a[(row, col)] = (fp[row + 1] - fm[row + 1]) / (2.0 * h);
        }
    }
    Ok(a)
}

/// State of the ODE: the point and `M = ∂θ_N/∂ξ_N` (column α holds `∂θ_N/∂ξ_α`).
#[derive(Clone)]
struct OdeState {
    theta: Vec<f64>,
    m: RMat,
}

fn ode_derivative(model: &StateModel, s: &OdeState) -> Result<OdeState> {
    if !model.in_domain(&s.theta) {
        return Err(Error::Step(format!(
            "trajectory left the domain at {:?}",
            s.theta
        )));
    }
    let f = ode_rhs(model, &s.theta)?;
    let a = rhs_jacobian(model, &s.theta)?;
    Ok(OdeState {
        theta: f,
        m: a * &s.m,
    })
}

fn axpy(s: &OdeState, h: f64, k: &OdeState) -> OdeState {
    OdeState {
        theta: s
            .theta
            .iter()
            .zip(&k.theta)
            .map(|(a, b)| a + h * b)
            .collect(),
        m: &s.m + &k.m * h,
    }
}

fn rk4_step(model: &StateModel, s: &OdeState, h: f64) -> Result<OdeState> {
    let k1 = ode_derivative(model, s)?;
    let k2 = ode_derivative(model, &axpy(s, 0.5 * h, &k1))?;
    let k3 = ode_derivative(model, &axpy(s, 0.5 * h, &k2))?;
    let k4 = ode_derivative(model, &axpy(s, h, &k3))?;
    let mut out = s.clone();
    for i in 0..out.theta.len() {
        out.theta[i] +=
            h / 6.0 * (k1.theta[i] + 2.0 * k2.theta[i] + 2.0 * k3.theta[i] + k4.theta[i]);
    }
    out.m += (&k1.m + &k2.m * 2.0 + &k3.m * 2.0 + &k4.m) * (h / 6.0);
    Ok(out)
}

fn trajectory_point(model: &StateModel, xi1: f64, s: &OdeState) -> Result<TrajectoryPoint> {
    let d = s.theta.len();
    let geom = LocalGeometry::at(model, &s.theta).map_err(step_error)?;
    let f = ode_rhs(model, &s.theta)?;
    let mut t = RMat::zeros(d, d);
    for j in 0..d {
        t[(0, j)] = f[j];
    }
    for alpha in 1..d {
        for j in 1..d {
            t[(alpha, j)] = s.m[(j - 1, alpha - 1)];
        }
    }
    let jx = linalg::symmetric_part(&(&t * &geom.j_sld * t.transpose()));
    let scale = linalg::max_abs_real(&geom.j_sld).max(1.0);
    let offdiag = (1..d).map(|l| jx[(0, l)].abs()).fold(0.0, f64::max) / scale;
    Ok(TrajectoryPoint {
        xi1,
        theta: s.theta.clone(),
        jacobian: t,
        inverse_info_xi: 1.0 / jx[(0, 0)],
        fisher_xi: jx,
        offdiag_residual: offdiag,
        inverse_info_theta: geom.j_sld_inv[(0, 0)],
    })
}

/// Global orthogonalization for a single parameter of interest.
///
/// Integrates `∂θ_N/∂ξ₁ = −J_NN^{-1} J_N1` with RK4 along `xi1_grid`, which must start at
/// `theta_start[0]` and be strictly monotone. The nuisance coordinates are fixed by the gauge
/// `θ_N = ξ_N` on the starting slice; the variational equation supplies `∂θ_N/∂ξ_N`, so each
/// point carries the full Jacobian and the transformed Fisher matrix.
pub fn global_orthogonalize_ode(
    model: &StateModel,
    theta_start: &[f64],
    xi1_grid: &[f64],
    opts: &OdeOptions,
) -> Result<OrthoTrajectory> {
    let d = model.dim_param();
    if d < 2 {
        return Err(Error::Config(
            "global orthogonalization needs at least one nuisance parameter".into(),
        ));
    }
    if theta_start.len() != d {
        return Err(Error::Dimension(format!(
            "start point has {} coordinates, model has {d}",
            theta_start.len()
        )));
    }
    if xi1_grid.is_empty() || (xi1_grid[0] - theta_start[0]).abs() > 1e-12 {
        return Err(Error::Config(
            "the grid must start at the interest coordinate of the start point".into(),
        ));
    }
    let dir = xi1_grid.get(1).map(|x| x - xi1_grid[0]).unwrap_or(1.0);
    if xi1_grid.windows(2).any(|w| (w[1] - w[0]) * dir <= 0.0) {
        return Err(Error::Config("the grid must be strictly monotone".into()));
    }
    if opts.substeps == 0 {
        return Err(Error::Config("substeps must be positive".into()));
    }
    if !model.in_domain(theta_start) {
        return Err(Error::Domain(format!(
            "{theta_start:?} is outside the domain of {}",
            model.name()
        )));
    }
    let mut state = OdeState {
        theta: theta_start.to_vec(),
        m: RMat::identity(d - 1, d - 1),
    };
    let mut points = Vec::with_capacity(xi1_grid.len());
    points.push(trajectory_point(model, xi1_grid[0], &state)?);
    for w in xi1_grid.windows(2) {
        let h = (w[1] - w[0]) / opts.substeps as f64;
        for _ in 0..opts.substeps {
            state = rk4_step(model, &state, h)?;
        }
        state.theta[0] = w[1];
        if !model.in_domain(&state.theta) {
            return Err(Error::Step(format!(
                "trajectory left the domain at {:?}",
                state.theta
            )));
        }
        let p = trajectory_point(model, w[1], &state)?;
        if p.offdiag_residual > opts.ode_tol {
            return Err(Error::Step(format!(
                "orthogonality residual {:e} at xi1 = {}",
                p.offdiag_residual, w[1]
            )));
        }
        points.push(p);
    }
    Ok(OrthoTrajectory {
        points,
        substeps: opts.substeps,
        ode_tol: opts.ode_tol,
    })
}

/// Bound with unknown nuisance minus the bound with the nuisance parameters known (the
/// nuisance-fixed sub-model), for the interest block weighted by `w_i`.
pub fn information_loss(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
    w_i: &WeightMatrix,
    kind: BoundKind,
    opts: &BoundOptions,
) -> Result<f64> {
    partition.check(model.dim_param())?;
    let full = bounds::bound_value(model, theta, partition, w_i, kind, opts)?;
    let interest = partition.interest();
    let sub = model.submodel(&interest, theta)?;
    let sub_point: Vec<f64> = interest.iter().map(|&i| theta[i]).collect();
    let known = bounds::bound_value(
        &sub,
        &sub_point,
        &Partition::full(interest.len()),
        w_i,
        kind,
        opts,
    )?;
    let floor = match kind {
        BoundKind::Holevo => opts.opt_tol.max(LOSS_FLOOR),
        _ => LOSS_FLOOR,
    };
    clamp_loss(full - known, floor)
}

pub(crate) fn clamp_loss(delta: f64, floor: f64) -> Result<f64> {
    if delta < -floor {
        return Err(Error::Consistency(format!(
            "negative information loss {delta:e}"
        )));
    }
    Ok(delta.max(0.0))
}

/// `T` for a pure nuisance reparametrization given `∂θ_N/∂ξ_N` (interest coordinates fixed).
pub fn nuisance_jacobian(partition: &Partition, dtheta_n_dxi_n: &RMat) -> RMat {
    let d = partition.d_total();
    let mut t = RMat::identity(d, d);
    for (a, alpha) in partition.nuisance().into_iter().enumerate() {
        for (b, j) in partition.nuisance().into_iter().enumerate() {
            t[(alpha, j)] = dtheta_n_dxi_n[(b, a)];
        }
    }
    t
}
