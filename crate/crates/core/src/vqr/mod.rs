//! Correlation maximization under `Law(U) = μ` and `E(X | U) = 0`, solved
//! either exactly (simplex) or with entropic regularization.
//!
//! The dual triple `(φ, b, ψ)` satisfies
//! `ψ_j + φ_i + b_i·x_j >= u_i·y_j` for every grid atom `i` and sample atom
//! `j`, with equality wherever the coupling puts mass.

mod entropic;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VqrError};
use crate::lp::{solve_lp_with, LinearProgram, SolveOptions};
use crate::matrix::{dot, Matrix};
use crate::measures::{Coupling, DiscreteSample, UGrid};
use crate::transport::{assemble_transport_lp, coupling_from_lp, require_optimal, split_potentials};

pub use entropic::{objective_scale, solve_vqr_entropic};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Entropic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub grid: f64,
    pub sample: f64,
    /// Worst per-row `|Σ_j π(i,j) x_j|∞ / μ_i`.
    pub mean_indep: f64,
}

impl Residuals {
    pub fn of(coupling: &Coupling, grid: &UGrid, sample: &DiscreteSample) -> Self {
        Self {
            grid: coupling.grid_residual(grid),
            sample: coupling.sample_residual(sample),
            mean_indep: coupling.mean_indep_residual(grid, sample),
        }
    }

    pub fn max(&self) -> f64 {
        self.grid.max(self.sample).max(self.mean_indep)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqrSolution {
    pub coupling: Coupling,
    pub phi: Vec<f64>,
    /// `m × N`; columns of covariates dropped as degenerate are zero.
    pub b: Matrix,
    pub psi: Vec<f64>,
    pub value: f64,
    pub backend: Backend,
    pub epsilon: f64,
    pub residuals: Residuals,
}

impl VqrSolution {
    /// `Φ_x(u_i) = φ_i + b_i·x` at every grid atom.
    pub fn potential_at(&self, x: &[f64]) -> Vec<f64> {
        (0..self.phi.len())
            .map(|i| self.phi[i] + dot(self.b.row(i), x))
            .collect()
    }

    /// `Σ μ_i φ_i + Σ w_j ψ_j`.
    pub fn dual_value(&self, grid: &UGrid, sample: &DiscreteSample) -> f64 {
        dot(grid.mu(), &self.phi) + dot(sample.w(), &self.psi)
    }
}

/// Pre-flight checks shared by both backends; returns the covariate columns
/// kept after dropping degenerate ones.
pub(crate) fn prepare(sample: &DiscreteSample, grid: &UGrid) -> Result<Vec<usize>> {
    sample.require_centered()?;
    if sample.dim() != grid.dim() {
        return Err(VqrError::Dimension(format!(
            "sample outcomes have dimension {} but the grid has {}",
            sample.dim(),
            grid.dim()
        )));
    }
    let degenerate = sample.degenerate_covariates();
    if !degenerate.is_empty() {
        warn!("dropping covariates {degenerate:?}: constant after centering");
    }
    Ok((0..sample.n_covariates())
        .filter(|k| !degenerate.contains(k))
        .collect())
}

/// Transport LP plus one mean-independence row per (grid atom, covariate):
/// row `m + n - 1 + i * N + k` reads `Σ_j π(i,j) x_jk = 0`.
pub fn assemble_vqr_lp(sample: &DiscreteSample, grid: &UGrid) -> Result<LinearProgram> {
    sample.require_centered()?;
    let base = assemble_transport_lp(sample, grid)?;
    let (m, n, n_cov) = (grid.m(), sample.n(), sample.n_covariates());
    if n_cov == 0 {
        return Ok(base);
    }
    let rows0 = base.num_rows();
    let mut a = Matrix::zeros(rows0 + m * n_cov, m * n);
    for r in 0..rows0 {
        a.row_mut(r).copy_from_slice(base.a().row(r));
    }
    for i in 0..m {
        for k in 0..n_cov {
            let row = a.row_mut(rows0 + i * n_cov + k);
            for j in 0..n {
                row[i * n + j] = sample.x()[(j, k)];
            }
        }
    }
    let mut b = base.b().to_vec();
    b.resize(rows0 + m * n_cov, 0.0);
    LinearProgram::new(base.c().to_vec(), a, b, base.lower().to_vec(), base.upper().to_vec())
}

pub fn solve_vqr_exact(sample: &DiscreteSample, grid: &UGrid, tol: f64) -> Result<VqrSolution> {
    solve_vqr_exact_with(
        sample,
        grid,
        &SolveOptions {
            tol,
            ..SolveOptions::default()
        },
    )
}

pub fn solve_vqr_exact_with(sample: &DiscreteSample, grid: &UGrid, opts: &SolveOptions) -> Result<VqrSolution> {
    let keep = prepare(sample, grid)?;
    let reduced = sample.with_covariates(&keep);
    let lp = assemble_vqr_lp(&reduced, grid)?;
    let sol = solve_lp_with(&lp, opts)?;
    require_optimal(&sol, "mean-independence LP")?;

    let (m, n, kept) = (grid.m(), sample.n(), keep.len());
    let (phi, psi) = split_potentials(&sol.y_dual, m, n);
    let offset = m + n - 1;
    let mut b = Matrix::zeros(m, sample.n_covariates());
    for i in 0..m {
        for (k, &col) in keep.iter().enumerate() {
            b[(i, col)] = sol.y_dual[offset + i * kept + k];
        }
    }
    let coupling = coupling_from_lp(&sol.z, grid, sample)?;
    let residuals = Residuals::of(&coupling, grid, sample);
    Ok(VqrSolution {
        coupling,
        phi,
        b,
        psi,
        value: sol.value,
        backend: Backend::Exact,
        epsilon: 0.0,
        residuals,
    })
}

/// Recomputes `ψ̂_j = max_i {u_i·y_j - φ_i - b_i·x_j}` and compares it with
/// the stored `ψ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualCheck {
    pub psi_hat: Vec<f64>,
    /// `max_j (ψ̂_j - ψ_j)`; positive means the dual constraint is violated.
    pub max_violation: f64,
    /// `max |ψ_j + φ_i + b_i·x_j - u_i·y_j|` over entries with mass above the floor.
    pub max_support_slack: f64,
}

impl DualCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol && self.max_support_slack <= tol
    }
}

pub fn verify_duals(sol: &VqrSolution, sample: &DiscreteSample, grid: &UGrid, mass_floor: f64) -> DualCheck {
    let (m, n) = (grid.m(), sample.n());
    let mut psi_hat = vec![f64::NEG_INFINITY; n];
    let mut support = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            let surplus = dot(grid.level(i), sample.y_row(j)) - sol.phi[i] - dot(sol.b.row(i), sample.x_row(j));
            psi_hat[j] = psi_hat[j].max(surplus);
            if sol.coupling.mass(i, j) > mass_floor {
                support = support.max((sol.psi[j] - surplus).abs());
            }
        }
    }
    let max_violation = psi_hat
        .iter()
        .zip(&sol.psi)
        .map(|(h, p)| h - p)
        .fold(f64::NEG_INFINITY, f64::max);
    DualCheck {
        psi_hat,
        max_violation,
        max_support_slack: support,
    }
}

/// Finite-difference gradients of `φ` and `b` along the grid axes.
///
/// At grid atom `i` the estimated conditional quantile is
/// `Q̂(x, u_i) = ∇φ(u_i) + Db(u_i)ᵀ x`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionalModel {
    pub levels: Matrix,
    /// `m × d`.
    pub grad_phi: Matrix,
    /// One `d × N` Jacobian per grid atom: entry `(a, k)` is `∂b_k/∂u_a`.
    pub grad_b: Vec<Matrix>,
}

impl ConditionalModel {
    pub fn quantile(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let jac = &self.grad_b[i];
        (0..self.grad_phi.cols())
            .map(|a| self.grad_phi[(i, a)] + dot(jac.row(a), x))
            .collect()
    }

    /// Intercept and slope curves of a univariate model: `(α̂(u_i), β̂(u_i))`.
    pub fn coefficients_1d(&self) -> Result<(Vec<f64>, Matrix)> {
        if self.grad_phi.cols() != 1 {
            return Err(VqrError::Dimension("coefficient curves need d = 1".into()));
        }
        let alpha = self.grad_phi.col_to_vec(0);
        let n_cov = self.grad_b.first().map_or(0, Matrix::cols);
        let mut beta = Matrix::zeros(alpha.len(), n_cov);
        for (i, jac) in self.grad_b.iter().enumerate() {
            beta.row_mut(i).copy_from_slice(jac.row(0));
        }
        Ok((alpha, beta))
    }
}

pub fn conditional_model(sol: &VqrSolution, grid: &UGrid) -> Result<ConditionalModel> {
    let m = grid.m();
    if sol.phi.len() != m || sol.b.rows() != m {
        return Err(VqrError::Dimension(format!(
            "solution has {} potentials for a grid of {m} atoms",
            sol.phi.len()
        )));
    }
    let per = grid.per_axis()[0];
    if per < 2 {
        return Err(VqrError::Validation(
            "finite differences need at least two grid points per axis".into(),
        ));
    }
    let (d, n_cov) = (grid.dim(), sol.b.cols());
    let h = grid.spacing();
    let mut grad_phi = Matrix::zeros(m, d);
    let mut grad_b = vec![Matrix::zeros(d, n_cov); m];
    for i in 0..m {
        let idx = grid.multi_index(i);
        for a in 0..d {
            let (lo, hi) = match idx[a] {
                0 => (0, 1),
                k if k + 1 == per => (k - 1, k),
                k => (k - 1, k + 1),
            };
            let mut at = idx.clone();
            at[a] = lo;
            let i_lo = grid.flat_index(&at);
            at[a] = hi;
            let i_hi = grid.flat_index(&at);
            let span = (hi - lo) as f64 * h;
            grad_phi[(i, a)] = (sol.phi[i_hi] - sol.phi[i_lo]) / span;
            for k in 0..n_cov {
                grad_b[i][(a, k)] = (sol.b[(i_hi, k)] - sol.b[(i_lo, k)]) / span;
            }
        }
    }
    Ok(ConditionalModel {
        levels: grid.u().clone(),
        grad_phi,
        grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{center, make_grid};
    use crate::transport::max_correlation;

    fn sample(x: &[f64], y: &[f64]) -> DiscreteSample {
        center(
            &DiscreteSample::new(Matrix::column(x.to_vec()), Matrix::column(y.to_vec()), None).unwrap(),
        )
    }

    #[test]
    fn lp_shape() {
        let s = sample(&[-1.0, 1.0], &[0.0, 1.0]);
        let lp = assemble_vqr_lp(&s, &make_grid(1, 2).unwrap()).unwrap();
        assert_eq!(lp.num_vars(), 4);
        assert_eq!(lp.num_rows(), 2 + 1 + 2);
    }

    #[test]
    fn no_covariates_gives_transport_lp() {
        let s = DiscreteSample::new(Matrix::zeros(3, 0), Matrix::column(vec![3.0, 1.0, 2.0]), None).unwrap();
        let g = make_grid(1, 3).unwrap();
        assert_eq!(assemble_vqr_lp(&s, &g).unwrap(), assemble_transport_lp(&s, &g).unwrap());
        let exact = solve_vqr_exact(&s, &g, 1e-9).unwrap();
        let ot = max_correlation(&s, &g, 1e-9).unwrap();
        assert_eq!(exact.value, ot.value);
    }

    #[test]
    fn opposite_covariates_force_independence() {
        // Each grid row must hold equal mass on both atoms.
        let s = sample(&[-1.0, 1.0], &[0.0, 1.0]);
        let g = make_grid(1, 2).unwrap();
        let sol = solve_vqr_exact(&s, &g, 1e-9).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((sol.coupling.mass(i, j) - 0.25).abs() < 1e-12);
            }
        }
        // E(U)E(Y) on the grid
        assert!((sol.value - 0.5 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn uncentered_rejected() {
        let s = DiscreteSample::new(Matrix::column(vec![1.0, 2.0]), Matrix::column(vec![0.0, 1.0]), None).unwrap();
        assert!(matches!(assemble_vqr_lp(&s, &make_grid(1, 2).unwrap()), Err(VqrError::Validation(_))));
        assert!(solve_vqr_exact(&s, &make_grid(1, 2).unwrap(), 1e-9).is_err());
    }

    #[test]
    fn degenerate_covariate_dropped() {
        let x = Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]], 2).unwrap();
        let s = center(&DiscreteSample::new(x, Matrix::column(vec![0.0, 2.0, 1.0]), None).unwrap());
        let g = make_grid(1, 3).unwrap();
        let sol = solve_vqr_exact(&s, &g, 1e-9).unwrap();
        assert_eq!(sol.b.cols(), 2);
        assert!(sol.b.col_to_vec(1).iter().all(|v| *v == 0.0));
        let single = solve_vqr_exact(&s.with_covariates(&[0]), &g, 1e-9).unwrap();
        assert!((sol.value - single.value).abs() < 1e-12);
    }

    #[test]
    fn dual_invariants_hold() {
        let s = sample(&[-1.0, 0.5, 0.2, 0.3, -0.7], &[0.3, 1.5, -0.2, 0.9, 0.1]);
        let g = make_grid(1, 4).unwrap();
        let sol = solve_vqr_exact(&s, &g, 1e-9).unwrap();
        let check = verify_duals(&sol, &s, &g, 1e-12);
        assert!(check.passes(1e-9), "{check:?}");
        assert!((sol.value - sol.dual_value(&g, &s)).abs() < 1e-9);
        assert!(sol.residuals.max() < 1e-9);
        assert_eq!(sol.phi[0], 0.0);
    }

    #[test]
    fn constant_outcome_has_flat_model() {
        let s = DiscreteSample::new(Matrix::zeros(4, 0), Matrix::column(vec![1.7; 4]), None).unwrap();
        let g = make_grid(1, 5).unwrap();
        let sol = solve_vqr_exact(&s, &g, 1e-9).unwrap();
        let model = conditional_model(&sol, &g).unwrap();
        for i in 0..5 {
            assert!((model.grad_phi[(i, 0)] - 1.7).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_b_model_ignores_x() {
        let s = sample(&[-1.0, 1.0, 0.0], &[0.0, 1.0, 2.0]);
        let g = make_grid(1, 3).unwrap();
        let mut sol = solve_vqr_exact(&s, &g, 1e-9).unwrap();
        sol.b = Matrix::zeros(3, 1);
        let model = conditional_model(&sol, &g).unwrap();
        for i in 0..3 {
            assert_eq!(model.quantile(i, &[5.0]), model.quantile(i, &[-3.0]));
        }
    }

    #[test]
    fn finite_differences_need_two_points() {
        let s = sample(&[-1.0, 1.0], &[0.0, 1.0]);
        let g = make_grid(1, 1).unwrap();
        let sol = solve_vqr_exact(&s, &g, 1e-9).unwrap();
        assert!(conditional_model(&sol, &g).is_err());
    }
}
