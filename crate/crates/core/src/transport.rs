//! Correlation maximization between the uniform grid and the sample
//! (vector quantiles), plus the closed-form univariate path.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VqrError};
use crate::lp::{solve_lp_with, LinearProgram, LpSolution, LpStatus, SolveOptions};
use crate::matrix::{dot, Matrix};
use crate::measures::{Coupling, DiscreteSample, UGrid};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportResult {
    pub coupling: Coupling,
    /// Potential on the grid, normalized so that `phi[0] = 0`.
    pub phi: Vec<f64>,
    /// Potential on the sample.
    pub psi: Vec<f64>,
    pub value: f64,
}

/// Worst violations of the optimality conditions of a transport result.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct TransportDiagnostics {
    /// `max (u_i·y_j - phi_i - psi_j)`, positive when the dual is infeasible.
    pub dual_violation: f64,
    /// `max |phi_i + psi_j - u_i·y_j|` over entries with positive mass.
    pub slackness: f64,
    /// `|primal value - dual value|`.
    pub value_gap: f64,
    pub grid_residual: f64,
    pub sample_residual: f64,
}

impl TransportResult {
    pub fn diagnostics(&self, grid: &UGrid, sample: &DiscreteSample, mass_floor: f64) -> TransportDiagnostics {
        let mut diag = TransportDiagnostics::default();
        for i in 0..grid.m() {
            for j in 0..sample.n() {
                let slack = dot(grid.level(i), sample.y_row(j)) - self.phi[i] - self.psi[j];
                diag.dual_violation = diag.dual_violation.max(slack);
                if self.coupling.mass(i, j) > mass_floor {
                    diag.slackness = diag.slackness.max(slack.abs());
                }
            }
        }
        let dual = dot(grid.mu(), &self.phi) + dot(sample.w(), &self.psi);
        diag.value_gap = (self.value - dual).abs();
        diag.grid_residual = self.coupling.grid_residual(grid);
        diag.sample_residual = self.coupling.sample_residual(sample);
        diag
    }
}

pub(crate) fn check_dims(sample: &DiscreteSample, grid: &UGrid) -> Result<()> {
    if sample.dim() != grid.dim() {
        return Err(VqrError::Dimension(format!(
            "sample outcomes have dimension {} but the grid has {}",
            sample.dim(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Objective coefficients `u_i·y_j`, flattened with index `i * n + j`.
pub(crate) fn correlation_costs(sample: &DiscreteSample, grid: &UGrid) -> Vec<f64> {
    let mut c = Vec::with_capacity(grid.m() * sample.n());
    for i in 0..grid.m() {
        for j in 0..sample.n() {
            c.push(dot(grid.level(i), sample.y_row(j)));
        }
    }
    c
}

/// Transport LP in the variables `π(i,j)` (index `i * n + j`): `m` grid rows
/// followed by `n - 1` sample rows (the last atom's row is implied).
pub fn assemble_transport_lp(sample: &DiscreteSample, grid: &UGrid) -> Result<LinearProgram> {
    check_dims(sample, grid)?;
    let (m, n) = (grid.m(), sample.n());
    let mut a = Matrix::zeros(m + n - 1, m * n);
    let mut b = Vec::with_capacity(m + n - 1);
    for i in 0..m {
        for j in 0..n {
            a[(i, i * n + j)] = 1.0;
        }
        b.push(grid.mu()[i]);
    }
    for j in 0..n - 1 {
        for i in 0..m {
            a[(m + j, i * n + j)] = 1.0;
        }
        b.push(sample.w()[j]);
    }
    LinearProgram::new(
        correlation_costs(sample, grid),
        a,
        b,
        vec![0.0; m * n],
        vec![f64::INFINITY; m * n],
    )
}

/// Converts an LP status into the crate's error for non-optimal outcomes.
pub(crate) fn require_optimal(sol: &LpSolution, what: &str) -> Result<()> {
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::IterationLimit => Err(VqrError::IterationLimit(format!(
            "{what}: simplex stopped after {} iterations",
            sol.iterations
        ))),
        s => Err(VqrError::Internal(format!("{what}: LP reported {s:?}"))),
    }
}

/// Reads `(phi, psi)` off the grid and sample rows of the dual vector and
/// applies the `phi[0] = 0` normalization.
pub(crate) fn split_potentials(y_dual: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut phi = y_dual[..m].to_vec();
    let mut psi: Vec<f64> = y_dual[m..m + n - 1].to_vec();
    psi.push(0.0);
    let shift = phi[0];
    phi.iter_mut().for_each(|v| *v -= shift);
    psi.iter_mut().for_each(|v| *v += shift);
    (phi, psi)
}

pub(crate) fn coupling_from_lp(z: &[f64], grid: &UGrid, sample: &DiscreteSample) -> Result<Coupling> {
    let pi = Matrix::from_row_major(grid.m(), sample.n(), z.to_vec())?;
    Coupling::new(pi, grid, sample)
}

/// Maximizes `Σ π(i,j) u_i·y_j` over couplings of `μ` and the sample.
/// Covariates are ignored.
pub fn max_correlation(sample: &DiscreteSample, grid: &UGrid, tol: f64) -> Result<TransportResult> {
    max_correlation_with(
        sample,
        grid,
        &SolveOptions {
            tol,
            ..SolveOptions::default()
        },
    )
}

pub fn max_correlation_with(
    sample: &DiscreteSample,
    grid: &UGrid,
    opts: &SolveOptions,
) -> Result<TransportResult> {
    let lp = assemble_transport_lp(sample, grid)?;
    let sol = solve_lp_with(&lp, opts)?;
    require_optimal(&sol, "transport")?;
    let (phi, psi) = split_potentials(&sol.y_dual, grid.m(), sample.n());
    Ok(TransportResult {
        coupling: coupling_from_lp(&sol.z, grid, sample)?,
        phi,
        psi,
        value: sol.value,
    })
}

/// Generalized inverse `Q(t) = inf { a : F(a) > t }` of the sample cdf at each
/// grid level.
pub fn vector_quantile_1d(sample: &DiscreteSample, grid: &UGrid) -> Result<Vec<f64>> {
    let y = sample.y_scalar()?;
    let levels = grid.levels_1d()?;
    Ok(quantiles_at(&y, sample.w(), &levels))
}

pub(crate) fn quantiles_at(y: &[f64], w: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut cdf = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &j in &order {
        acc += w[j];
        cdf.push(acc);
    }
    levels
        .iter()
        .map(|&t| {
            let k = cdf.partition_point(|&f| f <= t).min(order.len() - 1);
            y[order[k]]
        })
        .collect()
}

/// Row `i` is `Σ_j π(i,j) y_j / μ_i`.
pub fn barycentric_map(coupling: &Coupling, grid: &UGrid, sample: &DiscreteSample) -> Matrix {
    let d = sample.dim();
    let mut out = Matrix::zeros(grid.m(), d);
    for i in 0..grid.m() {
        let row = out.row_mut(i);
        for j in 0..sample.n() {
            let p = coupling.mass(i, j);
            if p != 0.0 {
                for (o, y) in row.iter_mut().zip(sample.y_row(j)) {
                    *o += p * y;
                }
            }
        }
        for o in row.iter_mut() {
            *o /= grid.mu()[i];
        }
    }
    out
}
