//! Dense linear programs in equality form with box bounds:
//!
//! ```text
//! maximize c·z  subject to  A z = b,  lower <= z <= upper
//! ```
//!
//! solved exactly (to vertex accuracy) by a bounded-variable revised simplex.
//! Duals follow the convention `d = c - Aᵀy`; at an optimum `d_j <= 0` for
//! variables at their lower bound and `d_j >= 0` at their upper bound.

mod simplex;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VqrError};
use crate::matrix::{dot, Matrix};

pub use simplex::solve_lp_with;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    c: Vec<f64>,
    a: Matrix,
    b: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(c: Vec<f64>, a: Matrix, b: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if a.cols() != n || lower.len() != n || upper.len() != n {
            return Err(VqrError::Dimension(format!(
                "{n} objective coefficients, {} matrix columns, {} lower and {} upper bounds",
                a.cols(),
                lower.len(),
                upper.len()
            )));
        }
        if a.rows() != b.len() {
            return Err(VqrError::Dimension(format!(
                "{} constraint rows but {} right-hand sides",
                a.rows(),
                b.len()
            )));
        }
        let any_nan = c
            .iter()
            .chain(a.as_slice())
            .chain(&b)
            .chain(&lower)
            .chain(&upper)
            .any(|v| v.is_nan());
        if any_nan {
            return Err(VqrError::Validation("NaN in linear program".into()));
        }
        if c.iter().chain(a.as_slice()).chain(&b).any(|v| v.is_infinite()) {
            return Err(VqrError::Validation("infinite coefficient in linear program".into()));
        }
        if let Some(j) = (0..n).find(|&j| lower[j] > upper[j] || lower[j] == f64::INFINITY || upper[j] == f64::NEG_INFINITY) {
            return Err(VqrError::Validation(format!(
                "variable {j} has empty range [{}, {}]",
                lower[j], upper[j]
            )));
        }
        Ok(Self { c, a, b, lower, upper })
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        dot(&self.c, z)
    }

    /// `max(|Az - b|∞, worst bound violation)`.
    pub fn primal_residual(&self, z: &[f64]) -> f64 {
        let rows = (0..self.num_rows())
            .map(|i| (dot(self.a.row(i), z) - self.b[i]).abs())
            .fold(0.0, f64::max);
        let bounds = (0..self.num_vars())
            .map(|j| (self.lower[j] - z[j]).max(z[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Lagrangian dual function `y·b + Σ_j sup_{z_j in box} (c_j - A_jᵀy) z_j`.
    /// Infinite when `y` leaves some reduced cost unbounded.
    pub fn dual_objective(&self, y: &[f64]) -> f64 {
        let d = self.reduced_costs(y);
        let mut value = dot(y, &self.b);
        for (j, dj) in d.into_iter().enumerate() {
            if dj > 0.0 {
                value += dj * self.upper[j];
            } else if dj < 0.0 {
                value += dj * self.lower[j];
            }
        }
        value
    }

    /// Largest reduced cost pointing towards an infinite bound, i.e. how far
    /// `y` is from making the dual function finite.
    pub fn dual_infeasibility(&self, y: &[f64]) -> f64 {
        self.reduced_costs(y)
            .into_iter()
            .enumerate()
            .map(|(j, dj)| {
                let up = if self.upper[j].is_infinite() { dj.max(0.0) } else { 0.0 };
                let down = if self.lower[j].is_infinite() { (-dj).max(0.0) } else { 0.0 };
                up.max(down)
            })
            .fold(0.0, f64::max)
    }

    pub fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        let mut d = self.c.clone();
        for (i, yi) in y.iter().enumerate() {
            if *yi != 0.0 {
                for (dj, aij) in d.iter_mut().zip(self.a.row(i)) {
                    *dj -= yi * aij;
                }
            }
        }
        d
    }

    /// Plain-text dump: `rows cols`, then the rows of `A`, then one line each
    /// for `b`, `c`, `lower` and `upper`. Infinite bounds print as `inf`/`-inf`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.num_rows(), self.num_vars())?;
        for row in self.a.iter_rows() {
            writeln!(w, "{}", join(row))?;
        }
        for v in [&self.b, &self.c, &self.lower, &self.upper] {
            writeln!(w, "{}", join(v))?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<Vec<f64>> {
            let line = lines
                .next()
                .ok_or_else(|| VqrError::Validation(format!("LP dump ends before {what}")))??;
            line.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| VqrError::Validation(format!("bad number '{t}' in {what}")))
                })
                .collect()
        };
        let dims = next("dimensions")?;
        if dims.len() != 2 {
            return Err(VqrError::Validation("LP dump header must be 'rows cols'".into()));
        }
        let (rows, cols) = (dims[0] as usize, dims[1] as usize);
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(next(&format!("row {i}"))?);
        }
        let a = Matrix::from_row_major(rows, cols, data)?;
        let b = next("b")?;
        let c = next("c")?;
        let lower = next("lower")?;
        let upper = next("upper")?;
        Self::new(c, a, b, lower, upper)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub z: Vec<f64>,
    pub y_dual: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub value: f64,
    pub status: LpStatus,
    pub iterations: usize,
    /// For infeasible problems: `f` with `f·b > sup { fᵀA z : lower <= z <= upper }`.
    pub farkas: Option<Vec<f64>>,
}

/// Entering-variable rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Largest reduced cost, lowest index on ties; switches to Bland's rule
    /// while the objective is stalled.
    #[default]
    Dantzig,
    /// Lowest eligible index throughout.
    Bland,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rule: PivotRule,
    /// Degenerate pivots tolerated before falling back to Bland's rule.
    pub stall_limit: usize,
    /// Pivots between refactorizations of the basis inverse.
    pub refactor_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 1_000_000,
            rule: PivotRule::Dantzig,
            stall_limit: 50,
            refactor_every: 64,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram, tol: f64, max_iter: usize) -> Result<LpSolution> {
    solve_lp_with(
        lp,
        &SolveOptions {
            tol,
            max_iter,
            ..SolveOptions::default()
        },
    )
}

/// Absolute strong-duality residual `|c·z - g(y)|`, with `g` the dual
/// function (see [`LinearProgram::dual_objective`]) after dropping the
/// round-off terms that point towards infinite bounds; their size is
/// [`LinearProgram::dual_infeasibility`].
pub fn lp_duality_gap(lp: &LinearProgram, sol: &LpSolution) -> Result<f64> {
    if sol.status != LpStatus::Optimal {
        return Err(VqrError::Contract(format!(
            "duality gap needs an optimal solution, status is {:?}",
            sol.status
        )));
    }
    let d = lp.reduced_costs(&sol.y_dual);
    let mut dual = dot(&sol.y_dual, lp.b());
    for (j, dj) in d.into_iter().enumerate() {
        let bound = if dj > 0.0 { lp.upper()[j] } else { lp.lower()[j] };
        if dj != 0.0 && bound.is_finite() {
            dual += dj * bound;
        }
    }
    Ok((lp.objective(&sol.z) - dual).abs())
}
