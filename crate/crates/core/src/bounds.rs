//! Scalar Cramér–Rao-type bounds: SLD, RLD, Holevo, Nagaoka/Gill–Massar, bounds for
//! functions of the parameters and the generalized (biased) SLD bound.
//!
//! All weighted bounds refer to the interest block of a [`Partition`] and take a weight
//! matrix of size `d_I`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::holevo::{self, HolevoOptions, HolevoResult, HolevoTarget};
use crate::linalg::{self, RMat};
use crate::model::{MatrixFn, Partition, StateModel, VectorFn, WeightMatrix};
use crate::nuisance;
use crate::qfisher::{self, LocalGeometry};
use crate::{math, Error, Result};

/// Tolerance for the ordering checks between bounds.
pub const OPT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BoundKind {
    Sld,
    Rld,
    Holevo,
    Nagaoka,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Sld => "sld",
            BoundKind::Rld => "rld",
            BoundKind::Holevo => "holevo",
            BoundKind::Nagaoka => "nagaoka",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundOptions {
    pub opt_tol: f64,
    pub holevo: HolevoOptions,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            opt_tol: OPT_TOL,
            holevo: HolevoOptions::default(),
        }
    }
}

fn check_weight(w: &WeightMatrix, partition: &Partition) -> Result<()> {
    if w.dim() != partition.d_interest() {
        return Err(Error::Dimension(format!(
            "weight is {}x{} but there are {} parameters of interest",
            w.dim(),
            w.dim(),
            partition.d_interest()
        )));
    }
    Ok(())
}

/// `(J^S(I|N))^{-1}`, the interest block of `(J^S)^{-1}`.
fn interest_covariance(geom: &LocalGeometry, partition: &Partition) -> RMat {
    let ii = partition.interest();
    linalg::block(&geom.j_sld_inv, &ii, &ii)
}

/// `Tr[W_I (J^S(I|N))^{-1}]`.
pub fn sld_cr_in(geom: &LocalGeometry, partition: &Partition, w: &WeightMatrix) -> Result<f64> {
    partition.check(geom.dim_param())?;
    check_weight(w, partition)?;
    let partial = nuisance::schur_complement_real(&geom.j_sld, partition)?;
    let inv = linalg::inv_sym_pd(&partial, "partial SLD Fisher matrix")?;
    let direct = interest_covariance(geom, partition);
    let dev = linalg::max_abs_real(&(&inv - &direct));
    if dev > 1e-8 * linalg::max_abs_real(&direct).max(1.0) {
        return Err(Error::Consistency(format!(
            "inverse partial SLD Fisher matrix differs from the inverse block by {dev:e}"
        )));
    }
    Ok((w.matrix() * inv).trace())
}

pub fn sld_cr(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
    w: &WeightMatrix,
) -> Result<f64> {
    sld_cr_in(&LocalGeometry::at(model, theta)?, partition, w)
}

/// `Tr[W_I Re B] + Tr|W_I^{1/2} Im B W_I^{1/2}|` with `B = (J^R(I|N))^{-1}`.
pub fn rld_cr_in(geom: &LocalGeometry, partition: &Partition, w: &WeightMatrix) -> Result<f64> {
    partition.check(geom.dim_param())?;
    check_weight(w, partition)?;
    let partial = nuisance::schur_complement(&geom.j_rld()?, partition)?;
    let inv = linalg::inv_hermitian_pd(&partial, "partial RLD Fisher matrix")?;
    Ok(holevo::rld_form(&inv, w))
}

pub fn rld_cr(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
    w: &WeightMatrix,
) -> Result<f64> {
    rld_cr_in(&LocalGeometry::at(model, theta)?, partition, w)
}

/// Holevo bound for the interest block.
pub fn holevo_in(
    geom: &LocalGeometry,
    partition: &Partition,
    w: &WeightMatrix,
    opts: &BoundOptions,
) -> Result<HolevoResult> {
    partition.check(geom.dim_param())?;
    check_weight(w, partition)?;
    holevo::holevo_numeric(
        geom,
        &HolevoTarget::Interest(partition.d_interest()),
        w,
        &opts.holevo,
        opts.opt_tol,
    )
}

pub fn holevo_numeric(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
    w: &WeightMatrix,
    opts: &BoundOptions,
) -> Result<HolevoResult> {
    holevo_in(&LocalGeometry::at(model, theta)?, partition, w, opts)
}

/// Which case of the two-parameter qubit formula applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum QubitBranch {
    /// `B ≥ 0`: the Holevo bound equals the RLD bound.
    Rld,
    /// `B < 0`: SLD bound plus a correction.
    Corrected,
}

#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct QubitClosedForm {
    pub value: f64,
    pub branch: QubitBranch,
    /// The branch predicate `B_θ[W]`.
    pub predicate: f64,
}

/// Closed-form Holevo bound of a two-parameter qubit model.
///
/// With `C^Z = C^S + Tr|W^{1/2} Im Z W^{1/2}|` (`Z` the Z-matrix of the dual SLDs) and the
/// predicate `B = C^R − (C^Z + C^S)/2`:
/// `C^H = C^R` when `B ≥ 0`, otherwise `C^H = C^S + (C^Z − C^S)² / (4 (C^Z − C^R))`.
pub fn holevo_qubit_closed_in(geom: &LocalGeometry, w: &WeightMatrix) -> Result<QubitClosedForm> {
    if geom.rho.nrows() != 2 || geom.dim_param() != 2 {
        return Err(Error::ModelShape(format!(
            "closed form needs a two-parameter qubit model, got d_H = {}, d = {}",
            geom.rho.nrows(),
            geom.dim_param()
        )));
    }
    if w.dim() != 2 {
        return Err(Error::Dimension("weight must be 2x2".into()));
    }
    let full = Partition::full(2);
    let c_sld = sld_cr_in(geom, &full, w)?;
    let c_rld = rld_cr_in(geom, &full, w)?;
    let z = qfisher::z_matrix(&geom.dual_slds(), &geom.rho)?;
    let wh = w.sqrt();
    let c_z = c_sld + linalg::trace_norm(&(&wh * linalg::imag_part(&z) * &wh));
    let predicate = c_rld - 0.5 * (c_z + c_sld);
    if predicate >= 0.0 {
        Ok(QubitClosedForm {
            value: c_rld,
            branch: QubitBranch::Rld,
            predicate,
        })
    } else {
        Ok(QubitClosedForm {
            value: c_sld + 0.25 * (c_z - c_sld) * (c_z - c_sld) / (c_z - c_rld),
            branch: QubitBranch::Corrected,
            predicate,
        })
    }
}

pub fn holevo_qubit_closed(
    model: &StateModel,
    theta: &[f64],
    w: &WeightMatrix,
) -> Result<QubitClosedForm> {
    holevo_qubit_closed_in(&LocalGeometry::at(model, theta)?, w)
}

/// `(Tr[(W_I^{1/2} J^{-1} W_I^{1/2})^{1/2}])² / (d_H − 1)` with `J` the partial SLD Fisher
/// matrix.
pub fn nagaoka_gm_in(geom: &LocalGeometry, partition: &Partition, w: &WeightMatrix) -> Result<f64> {
    partition.check(geom.dim_param())?;
    check_weight(w, partition)?;
    if w.is_semidefinite() && w.det() <= 0.0 {
        return Err(Error::Config(
            "the Nagaoka bound needs a positive definite weight".into(),
        ));
    }
    let partial = nuisance::schur_complement_real(&geom.j_sld, partition)?;
    let inv = linalg::inv_sym_pd(&partial, "partial SLD Fisher matrix")?;
    let wh = w.sqrt();
    let root_trace: f64 = linalg::sym_eigen(&(&wh * inv * &wh))
        .values
        .iter()
        .map(|&x| math::sqrt(x.max(0.0)))
        .sum();
    Ok(root_trace * root_trace / (geom.rho.nrows() as f64 - 1.0))
}

pub fn nagaoka_gm(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
    w: &WeightMatrix,
) -> Result<f64> {
    nagaoka_gm_in(&LocalGeometry::at(model, theta)?, partition, w)
}

/// A vector-valued function `g(θ)` of the parameters with its Jacobian `G`.
#[derive(Clone)]
pub struct FunctionSpec {
    pub k: usize,
    pub g_fn: VectorFn,
    pub jacobian_fn: MatrixFn,
}

impl core::fmt::Debug for FunctionSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FunctionSpec")
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

impl FunctionSpec {
    pub fn new(
        k: usize,
        g_fn: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian_fn: impl Fn(&[f64]) -> RMat + Send + Sync + 'static,
    ) -> Self {
        Self {
            k,
            g_fn: Arc::new(g_fn),
            jacobian_fn: Arc::new(jacobian_fn),
        }
    }

    /// `g(θ) = M θ` for a fixed `K × d` matrix.
    pub fn linear(m: RMat) -> Self {
        let k = m.nrows();
        let m2 = m.clone();
        Self::new(
            k,
            move |x: &[f64]| {
                (&m2 * nalgebra::DVector::from_column_slice(x))
                    .iter()
                    .copied()
                    .collect()
            },
            move |_| m.clone(),
        )
    }

    /// Jacobian at `θ`, validated for shape and full row rank.
    pub fn jacobian(&self, theta: &[f64]) -> Result<RMat> {
        let g = (self.jacobian_fn)(theta);
        if g.nrows() != self.k || g.ncols() != theta.len() {
            return Err(Error::Dimension(format!(
                "Jacobian is {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                self.k,
                theta.len()
            )));
        }
        holevo::check_full_row_rank(&g)?;
        Ok(g)
    }
}

/// Bound on `Tr[W_g V(ĝ)]` for estimating `g(θ)`; `kind` is SLD, RLD or Holevo.
pub fn function_bounds_in(
    geom: &LocalGeometry,
    f: &FunctionSpec,
    w: &WeightMatrix,
    kind: BoundKind,
    opts: &BoundOptions,
) -> Result<f64> {
    let g = f.jacobian(&geom.point)?;
    if w.dim() != f.k {
        return Err(Error::Dimension(format!(
            "weight is {}x{}, function has {} components",
            w.dim(),
            w.dim(),
            f.k
        )));
    }
    match kind {
        BoundKind::Sld => Ok((w.matrix() * &g * &geom.j_sld_inv * g.transpose()).trace()),
        BoundKind::Rld => holevo::rld_value(geom, &g, w),
        BoundKind::Holevo => Ok(holevo::holevo_numeric(
            geom,
            &HolevoTarget::Jacobian(g),
            w,
            &opts.holevo,
            opts.opt_tol,
        )?
        .value),
        BoundKind::Nagaoka => Err(Error::Config(
            "the Nagaoka bound is only defined for a partition".into(),
        )),
    }
}

pub fn function_bounds(
    model: &StateModel,
    theta: &[f64],
    f: &FunctionSpec,
    w: &WeightMatrix,
    kind: BoundKind,
    opts: &BoundOptions,
) -> Result<f64> {
    function_bounds_in(&LocalGeometry::at(model, theta)?, f, w, kind, opts)
}

/// `Tr[W (B (J^S)^{-1} Bᵀ + b bᵀ)]` for an estimator with expectation-derivative matrix `B`
/// and bias `b`.
pub fn generalized_cr_in(
    geom: &LocalGeometry,
    b_mat: &RMat,
    bias: &[f64],
    w: &WeightMatrix,
) -> Result<f64> {
    let d = geom.dim_param();
    if b_mat.ncols() != d || b_mat.nrows() != w.dim() || bias.len() != w.dim() {
        return Err(Error::Dimension(format!(
            "B is {}x{}, bias has {} entries, weight is {}x{}, model has {d} parameters",
            b_mat.nrows(),
            b_mat.ncols(),
            bias.len(),
            w.dim(),
            w.dim()
        )));
    }
    let bv = nalgebra::DVector::from_column_slice(bias);
    let m = b_mat * &geom.j_sld_inv * b_mat.transpose() + &bv * bv.transpose();
    Ok((w.matrix() * m).trace())
}

pub fn generalized_cr(
    model: &StateModel,
    theta: &[f64],
    b_mat: &RMat,
    bias: &[f64],
    w: &WeightMatrix,
) -> Result<f64> {
    generalized_cr_in(&LocalGeometry::at(model, theta)?, b_mat, bias, w)
}

/// One bound by kind.
pub fn bound_value_in(
    geom: &LocalGeometry,
    partition: &Partition,
    w: &WeightMatrix,
    kind: BoundKind,
    opts: &BoundOptions,
) -> Result<f64> {
    match kind {
        BoundKind::Sld => sld_cr_in(geom, partition, w),
        BoundKind::Rld => rld_cr_in(geom, partition, w),
        BoundKind::Holevo => Ok(holevo_in(geom, partition, w, opts)?.value),
        BoundKind::Nagaoka => nagaoka_gm_in(geom, partition, w),
    }
}

pub fn bound_value(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
    w: &WeightMatrix,
    kind: BoundKind,
    opts: &BoundOptions,
) -> Result<f64> {
    bound_value_in(&LocalGeometry::at(model, theta)?, partition, w, kind, opts)
}

/// Named bound values with diagnostics and ordering flags.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BoundReport {
    pub values: BTreeMap<String, f64>,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub weight: WeightMatrix,
    pub partition: Partition,
    pub point: Vec<f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
}

/// What to include in a [`BoundReport`].
#[derive(Debug, Clone, Default)]
pub struct ReportRequest {
    pub kinds: Vec<BoundKind>,
    /// Also report the SLD information loss (and the Holevo one when Holevo is requested).
    pub info_loss: bool,
}

/// Evaluate the requested bounds. The Holevo bound may be supplied precomputed (e.g. from
/// a parallel run of its starts).
pub fn bound_report_with(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
    w: &WeightMatrix,
    request: &ReportRequest,
    opts: &BoundOptions,
    holevo_result: Option<HolevoResult>,
) -> Result<BoundReport> {
    partition.check(model.dim_param())?;
    check_weight(w, partition)?;
    let geom = LocalGeometry::at(model, theta)?;
    let mut values = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    let mut checks = BTreeMap::new();
    let c_sld = sld_cr_in(&geom, partition, w)?;
    diagnostics.insert(
        "sld_condition_number".to_string(),
        linalg::condition_number(&geom.j_sld),
    );
    diagnostics.insert("regularity_tol".to_string(), crate::model::REGULARITY_TOL);
    diagnostics.insert("positivity_tol".to_string(), crate::model::POSITIVITY_TOL);
    let mut c_rld = None;
    let mut c_holevo = None;
    for kind in &request.kinds {
        let v = match kind {
            BoundKind::Sld => c_sld,
            BoundKind::Rld => {
                let v = rld_cr_in(&geom, partition, w)?;
                c_rld = Some(v);
                v
            }
            BoundKind::Holevo => {
                let r = match &holevo_result {
                    Some(r) => r.clone(),
                    None => holevo_in(&geom, partition, w, opts)?,
                };
                diagnostics.insert("holevo_dual_sld_value".to_string(), r.dual_sld_value);
                diagnostics.insert("holevo_extension_dim".to_string(), r.extension_dim as f64);
                diagnostics.insert("holevo_free_dim".to_string(), r.free_dim as f64);
                diagnostics.insert("holevo_starts".to_string(), r.starts.len() as f64);
                diagnostics.insert("holevo_start_spread".to_string(), r.spread);
                diagnostics.insert("holevo_polish_gain".to_string(), r.polish_gain);
                diagnostics.insert(
                    "holevo_iterations".to_string(),
                    r.starts.iter().map(|s| s.iterations).sum::<usize>() as f64,
                );
                if c_rld.is_none() {
                    c_rld = Some(r.rld_value);
                }
                c_holevo = Some(r.value);
                r.value
            }
            BoundKind::Nagaoka => nagaoka_gm_in(&geom, partition, w)?,
        };
        values.insert(kind.name().to_string(), v);
    }
    if geom.rho.nrows() == 2 && geom.dim_param() == 2 && partition.d_interest() == 2 {
        let closed = holevo_qubit_closed_in(&geom, w)?;
        diagnostics.insert("holevo_qubit_closed".to_string(), closed.value);
        diagnostics.insert(
            "holevo_qubit_branch_predicate".to_string(),
            closed.predicate,
        );
        if let Some(h) = c_holevo {
            diagnostics.insert(
                "holevo_closed_vs_numeric_gap".to_string(),
                (h - closed.value).abs(),
            );
        }
    }
    if request.info_loss {
        let loss = nuisance::information_loss(model, theta, partition, w, BoundKind::Sld, opts)?;
        values.insert("info-loss".to_string(), loss);
        if request.kinds.contains(&BoundKind::Holevo) {
            let loss_h =
                nuisance::information_loss(model, theta, partition, w, BoundKind::Holevo, opts)?;
            values.insert("info-loss-holevo".to_string(), loss_h);
        }
    }
    let tol = opts.opt_tol;
    if let Some(h) = c_holevo {
        checks.insert("sld_le_holevo".to_string(), c_sld <= h + tol);
        checks.insert("holevo_le_2sld".to_string(), h <= 2.0 * c_sld + tol);
        if let Some(z) = diagnostics.get("holevo_dual_sld_value") {
            checks.insert("holevo_le_dual_sld".to_string(), h <= z + tol);
        }
        if let Some(r) = c_rld {
            checks.insert("rld_le_holevo".to_string(), r <= h + tol);
        }
        if let Some(n) = values.get("nagaoka") {
            if geom.rho.nrows() == 2 {
                checks.insert("holevo_le_nagaoka".to_string(), h <= n + tol);
            }
        }
    }
    if values.values().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Consistency(format!(
            "non-finite or negative bound in {values:?}"
        )));
    }
    Ok(BoundReport {
        values,
        weight: w.clone(),
        partition: *partition,
        point: theta.to_vec(),
        diagnostics,
        checks,
    })
}

pub fn bound_report(
    model: &StateModel,
    theta: &[f64],
    partition: &Partition,
    w: &WeightMatrix,
    request: &ReportRequest,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    bound_report_with(model, theta, partition, w, request, opts, None)
}
