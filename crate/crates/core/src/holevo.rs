//! Numerical Holevo bound.
//!
//! Feasible tuples are `X_i = Σ_j G_ij L^j + Σ_l Y_il F_l`, where `L^j` are the dual SLDs and
//! `F_l` span the part of the minimal D-invariant extension of the SLD span that is
//! orthogonal to the SLDs. In an orthonormal basis `e_a` of that extension (first the SLD
//! span, then the `F_l`) write `X = C e` with `C = [C₀ | Y]`. Then
//!
//! ```text
//! Re Z = C Cᵀ,   Im Z = C A Cᵀ,   A_ab = Im tr[e_a ρ e_b],
//! ```
//!
//! and the objective `Tr[W Re Z] + Tr|W^{1/2} Im Z W^{1/2}|` is a convex function of `Y`.
//! The nuclear norm is smoothed as `Σ √(σ² + ε²)` with `ε` annealed towards zero, each stage
//! minimized by BFGS; the best start is then polished on the exact objective.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, CMat, RMat};
use crate::math;
use crate::model::WeightMatrix;
use crate::qfisher::LocalGeometry;
use crate::{Error, Result};

/// Residual (relative to the norm of the candidate) below which a new direction is considered
/// to lie in the span built so far.
pub const EXTENSION_TOL: f64 = 1e-9;

/// Tuning knobs for the optimizer.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HolevoOptions {
    /// Random starts in addition to the dual-SLD start.
    pub random_starts: usize,
    pub seed: u64,
    /// Smoothing parameters, applied in order.
    pub eps_schedule: Vec<f64>,
    /// BFGS iterations per smoothing stage.
    pub max_iter: usize,
    /// Stop a stage once the gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Objective evaluations allowed for the final exact-objective polish.
    pub polish_evals: usize,
    pub extension_tol: f64,
}

impl Default for HolevoOptions {
    fn default() -> Self {
        Self {
            random_starts: 8,
            seed: 0x5eed,
            eps_schedule: vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            max_iter: 400,
            grad_tol: 1e-11,
            polish_evals: 4000,
            extension_tol: EXTENSION_TOL,
        }
    }
}

/// What is being estimated: the interest block of a partition (`G = [I | 0]`) or a general
/// linear target `G` (the Jacobian of a vector-valued function).
#[derive(Debug, Clone)]
pub enum HolevoTarget {
    Interest(usize),
    Jacobian(RMat),
}

impl HolevoTarget {
    fn matrix(&self, d: usize) -> Result<RMat> {
        match self {
            HolevoTarget::Interest(k) => {
                if *k == 0 || *k > d {
                    return Err(Error::Config(format!(
                        "cannot estimate {k} of {d} parameters"
                    )));
                }
                Ok(RMat::from_fn(*k, d, |i, j| if i == j { 1.0 } else { 0.0 }))
            }
            HolevoTarget::Jacobian(g) => {
                if g.ncols() != d {
                    return Err(Error::Infeasible(format!(
                        "target has {} columns, model has {d} parameters",
                        g.ncols()
                    )));
                }
                check_full_row_rank(g)?;
                Ok(g.clone())
            }
        }
    }
}

pub(crate) fn check_full_row_rank(g: &RMat) -> Result<()> {
    if g.nrows() == 0 || g.nrows() > g.ncols() {
        return Err(Error::Rank(format!(
            "a {}x{} Jacobian cannot have full row rank",
            g.nrows(),
            g.ncols()
        )));
    }
    let sv = linalg::singular_values(g);
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 1e-10 * hi.max(1e-300)) {
        return Err(Error::Rank(format!(
            "Jacobian singular values range {lo:e}..{hi:e}"
        )));
    }
    Ok(())
}

/// Orthonormal (symmetric inner product) basis of the smallest D-invariant subspace
/// containing the SLDs. The first `d` elements span the SLDs.
pub fn d_invariant_extension(geom: &LocalGeometry, tol: f64) -> Vec<CMat> {
    let n = geom.rho.nrows();
    let cap = n * n - 1;
    let mut basis: Vec<CMat> = Vec::new();
    for l in &geom.slds {
        push_orthonormal(geom, &mut basis, l.clone(), tol);
    }
    let mut next = 0;
    while next < basis.len() && basis.len() < cap {
        let image = geom.commutation(&basis[next]);
        push_orthonormal(geom, &mut basis, image, tol);
        next += 1;
    }
    basis
}

/// Gram–Schmidt (two passes) of `v` against `basis`; appended if the residual is large enough.
fn push_orthonormal(geom: &LocalGeometry, basis: &mut Vec<CMat>, v: CMat, tol: f64) -> bool {
    let norm0 = math::sqrt(geom.sym_inner(&v, &v).max(0.0));
    if norm0 == 0.0 {
        return false;
    }
    let mut w = linalg::hermitian_part(&v);
    for _ in 0..2 {
        for e in basis.iter() {
            let p = geom.sym_inner(e, &w);
            w -= e * linalg::c(p, 0.0);
        }
    }
    let norm = math::sqrt(geom.sym_inner(&w, &w).max(0.0));
    if norm > tol * norm0.max(1.0) {
        basis.push(w * linalg::c(1.0 / norm, 0.0));
        true
    } else {
        false
    }
}

/// `A_ab = Im tr[e_a ρ e_b]`.
fn antisymmetric_form(geom: &LocalGeometry, basis: &[CMat]) -> RMat {
    let m = basis.len();
    let a = RMat::from_fn(m, m, |i, j| {
        linalg::trace_product(&(&basis[i] * &geom.rho), &basis[j]).im
    });
    (&a - a.transpose()) * 0.5
}

/// Outcome of one start.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StartOutcome {
    pub index: usize,
    /// Exact objective at the end of the smoothed stages.
    pub value: f64,
    pub iterations: usize,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub y: Vec<f64>,
}

/// Result of [`holevo_numeric`].
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HolevoResult {
    pub value: f64,
    /// Exact objective at `Y = 0` (the dual SLDs).
    pub dual_sld_value: f64,
    /// `Tr[W G (J^S)^{-1} Gᵀ]`.
    pub sld_value: f64,
    /// RLD bound for the same target and weight.
    pub rld_value: f64,
    pub extension_dim: usize,
    pub free_dim: usize,
    pub starts: Vec<StartOutcome>,
    /// Max minus min of the start values.
    pub spread: f64,
    pub best_start: usize,
    pub polish_gain: f64,
}

/// A prepared Holevo minimization; starts can be run independently (and concurrently) and
/// merged with [`HolevoProblem::finish`].
#[derive(Debug, Clone)]
pub struct HolevoProblem {
    w: RMat,
    w_half: RMat,
    c0: RMat,
    a: RMat,
    k: usize,
    d: usize,
    m: usize,
    sld_value: f64,
    rld_value: f64,
    opts: HolevoOptions,
}

impl HolevoProblem {
    pub fn new(
        geom: &LocalGeometry,
        target: &HolevoTarget,
        w: &WeightMatrix,
        opts: &HolevoOptions,
    ) -> Result<Self> {
        let d = geom.dim_param();
        let g = target.matrix(d)?;
        let k = g.nrows();
        if w.dim() != k {
            return Err(Error::Dimension(format!(
                "weight is {}x{}, target has {k} components",
                w.dim(),
                w.dim()
            )));
        }
        let basis = d_invariant_extension(geom, opts.extension_tol);
        let m = basis.len();
        if m < d {
            return Err(Error::Consistency(format!(
                "SLD span has dimension {m} < {d}"
            )));
        }
        let duals = geom.dual_slds();
        // Q_{ja} = ⟨e_a, L^j⟩ over the SLD part of the basis.
        let q = RMat::from_fn(d, d, |j, a| geom.sym_inner(&basis[a], &duals[j]));
        let c0 = &g * q;
        let a = antisymmetric_form(geom, &basis);
        let cov = &g * &geom.j_sld_inv * g.transpose();
        let sld_value = (w.matrix() * &cov).trace();
        let rld_value = rld_value(geom, &g, w)?;
        Ok(Self {
            w: w.matrix().clone(),
            w_half: w.sqrt(),
            c0,
            a,
            k,
            d,
            m,
            sld_value,
            rld_value,
            opts: opts.clone(),
        })
    }

    pub fn free_dim(&self) -> usize {
        self.k * (self.m - self.d)
    }

    pub fn extension_dim(&self) -> usize {
        self.m
    }

    /// Number of starts: the dual-SLD start plus the random ones (just one when there is
    /// nothing to optimize).
    pub fn n_starts(&self) -> usize {
        if self.free_dim() == 0 || self.k == 1 {
            1
        } else {
            1 + self.opts.random_starts
        }
    }

    fn coefficients(&self, y: &[f64]) -> RMat {
        let nf = self.m - self.d;
        RMat::from_fn(self.k, self.m, |i, a| {
            if a < self.d {
                self.c0[(i, a)]
            } else {
                y[i * nf + a - self.d]
            }
        })
    }

    /// Objective and gradient; `eps = 0` gives the exact objective (gradient then taken with
    /// the sign matrix, valid wherever the singular values are nonzero).
    pub fn objective(&self, y: &[f64], eps: f64) -> (f64, Vec<f64>) {
        let c = self.coefficients(y);
        let re = &c * c.transpose();
        let ca = &c * &self.a;
        let im = &ca * c.transpose();
        let s = &self.w_half * &im * &self.w_half;
        let mut value = (&self.w * &re).trace();
        let svd = s.clone().svd(true, true);
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return (f64::NAN, vec![0.0; y.len()]),
        };
        let sv = &svd.singular_values;
        let mut diag = RMat::zeros(sv.len(), sv.len());
        for (i, &sig) in sv.iter().enumerate() {
            let r = math::sqrt(sig * sig + eps * eps);
            value += if eps == 0.0 { sig } else { r };
            diag[(i, i)] = if r > 0.0 { sig / r } else { 0.0 };
        }
        let gq = &u * diag * &vt;
        // d/dC: 2 W C + W^{1/2} (G_Qᵀ − G_Q) W^{1/2} C A.
        let grad_c =
            &self.w * &c * 2.0 + &self.w_half * (gq.transpose() - &gq) * &self.w_half * &ca;
        let nf = self.m - self.d;
        let mut grad = vec![0.0; self.k * nf];
        for i in 0..self.k {
            for l in 0..nf {
                grad[i * nf + l] = grad_c[(i, self.d + l)];
            }
        }
        (value, grad)
    }

    pub fn exact(&self, y: &[f64]) -> f64 {
        self.objective(y, 0.0).0
    }

    fn initial_point(&self, index: usize) -> Vec<f64> {
        let n = self.free_dim();
        if index == 0 {
            return vec![0.0; n];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        rng.set_stream(index as u64);
        let scale = math::sqrt((&self.c0 * self.c0.transpose()).trace() / self.k as f64).max(1e-3);
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    /// Run one start through the smoothing schedule.
    pub fn run_start(&self, index: usize) -> StartOutcome {
        let mut y = self.initial_point(index);
        let mut iterations = 0;
        if self.free_dim() > 0 && self.k > 1 {
            for &eps in &self.opts.eps_schedule {
                let (next, it) = bfgs(
                    |x| self.objective(x, eps),
                    y,
                    self.opts.max_iter,
                    self.opts.grad_tol,
                );
                y = next;
                iterations += it;
            }
        }
        StartOutcome {
            index,
            value: self.exact(&y),
            iterations,
            y,
        }
    }

    /// Merge start outcomes (any order), polish the best one and validate the ordering
    /// `max(C^S, C^R) ≤ C^H ≤ 2 C^S`.
    pub fn finish(&self, mut starts: Vec<StartOutcome>, opt_tol: f64) -> Result<HolevoResult> {
        if starts.is_empty() {
            return Err(Error::Optimizer("no starts were run".into()));
        }
        starts.sort_by_key(|s| s.index);
        let finite: Vec<&StartOutcome> = starts.iter().filter(|s| s.value.is_finite()).collect();
        let best = finite
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .ok_or_else(|| {
                Error::Optimizer("every start produced a non-finite objective".into())
            })?;
        let hi = finite
            .iter()
            .map(|s| s.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let spread = hi - best.value;
        let (y, value) = if self.free_dim() > 0 && self.k > 1 {
            compass_polish(|x| self.exact(x), best.y.clone(), self.opts.polish_evals)
        } else {
            (best.y.clone(), best.value)
        };
        let _ = y;
        let dual_sld_value = self.exact(&vec![0.0; self.free_dim()]);
        let value = value.min(dual_sld_value);
        let slack = opt_tol * value.abs().max(1.0);
        let lower = self.sld_value.max(self.rld_value);
        if value < lower - slack {
            return Err(Error::Consistency(format!(
                "Holevo value {value} below max(SLD, RLD) = {lower}"
            )));
        }
        if value > 2.0 * self.sld_value + slack {
            return Err(Error::Optimizer(format!(
                "Holevo value {value} above twice the SLD bound {} (spread across starts {spread:e})",
                self.sld_value
            )));
        }
        Ok(HolevoResult {
            value,
            dual_sld_value,
            sld_value: self.sld_value,
            rld_value: self.rld_value,
            extension_dim: self.m,
            free_dim: self.free_dim(),
            best_start: best.index,
            polish_gain: best.value - value,
            spread,
            starts,
        })
    }
}

/// `Tr[W Re B] + Tr|W^{1/2} Im B W^{1/2}|` with `B = G (J^R)^{-1} Gᵀ`.
pub(crate) fn rld_value(geom: &LocalGeometry, g: &RMat, w: &WeightMatrix) -> Result<f64> {
    let jr_inv = linalg::inv_hermitian_pd(&geom.j_rld()?, "RLD Fisher matrix")?;
    let gc = linalg::complexify(g);
    let b = &gc * jr_inv * gc.transpose();
    Ok(rld_form(&b, w))
}

pub(crate) fn rld_form(b: &CMat, w: &WeightMatrix) -> f64 {
    let wh = w.sqrt();
    let re = linalg::real_part(b);
    let im = linalg::imag_part(b);
    (w.matrix() * re).trace() + linalg::trace_norm(&(&wh * im * &wh))
}

/// Holevo bound for a partition's interest block or a linear target, running the starts
/// sequentially.
pub fn holevo_numeric(
    geom: &LocalGeometry,
    target: &HolevoTarget,
    w: &WeightMatrix,
    opts: &HolevoOptions,
    opt_tol: f64,
) -> Result<HolevoResult> {
    let problem = HolevoProblem::new(geom, target, w, opts)?;
    let starts = (0..problem.n_starts())
        .map(|i| problem.run_start(i))
        .collect();
    problem.finish(starts, opt_tol)
}

/// BFGS with Armijo backtracking. Returns the final point and the iteration count.
fn bfgs(
    f: impl Fn(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    max_iter: usize,
    grad_tol: f64,
) -> (Vec<f64>, usize) {
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut h = RMat::identity(n, n);
    let mut it = 0;
    while it < max_iter {
        if !fx.is_finite() || g.iter().fold(0.0f64, |a, v| a.max(v.abs())) < grad_tol {
            break;
        }
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut p = -(&h * &gv);
        let mut slope = p.dot(&gv);
        if !(slope < 0.0) {
            h = RMat::identity(n, n);
            p = -gv.clone();
            slope = -gv.dot(&gv);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + step * b).collect();
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        it += 1;
        let Some((xn, fn_, gn)) = accepted else { break };
        let s = nalgebra::DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let yv = nalgebra::DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        if improvement <= 1e-16 * fx.abs().max(1.0) && s.amax() < 1e-14 {
            break;
        }
    }
    (x, it)
}

/// Compass search on the exact (nonsmooth) objective.
fn compass_polish(f: impl Fn(&[f64]) -> f64, mut x: Vec<f64>, max_evals: usize) -> (Vec<f64>, f64) {
    let mut fx = f(&x);
    let mut step = 1e-4;
    let mut evals = 0;
    while step > 1e-12 && evals < max_evals {
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let old = x[i];
                x[i] = old + sign * step;
                let v = f(&x);
                evals += 1;
                if v < fx {
                    fx = v;
                    improved = true;
                    break;
                }
                x[i] = old;
            }
        }
        if !improved {
            step *= 0.25;
        }
    }
    (x, fx)
}
