use nalgebra::{DMatrix, DVector};

use super::{prepare, Backend, Residuals, VqrSolution};
use crate::error::{Result, VqrError};
use crate::matrix::{dot, Matrix};
use crate::measures::{Coupling, DiscreteSample, UGrid};
use crate::transport::correlation_costs;

const NEWTON_MAX: usize = 60;
const HALVINGS: usize = 40;
const SCALING_FACTOR: f64 = 0.25;

/// `max |u_i·y_j|`, the natural unit for `epsilon`.
pub fn objective_scale(sample: &DiscreteSample, grid: &UGrid) -> f64 {
    correlation_costs(sample, grid)
        .iter()
        .fold(0.0, |acc: f64, c| acc.max(c.abs()))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + v.iter().map(|a| (a - top).exp()).sum::<f64>().ln()
}

/// Softmax of `s_j - λ·x_j` and the resulting mean of `x`.
fn tilted_mean(s: &[f64], x: &Matrix, lambda: &[f64], g: &mut [f64], q: &mut [f64]) -> Vec<f64> {
    for (j, gj) in g.iter_mut().enumerate() {
        *gj = s[j] - dot(lambda, x.row(j));
    }
    let lse = log_sum_exp(g);
    let mut mean = vec![0.0; lambda.len()];
    for j in 0..g.len() {
        q[j] = (g[j] - lse).exp();
        for (k, mk) in mean.iter_mut().enumerate() {
            *mk += q[j] * x[(j, k)];
        }
    }
    mean
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a: f64, x| a.max(x.abs()))
}

struct State<'a> {
    costs: Vec<f64>,
    log_mu: Vec<f64>,
    log_w: Vec<f64>,
    x: &'a Matrix,
    m: usize,
    n: usize,
    phi: Vec<f64>,
    psi: Vec<f64>,
    b: Matrix,
}

impl State<'_> {
    fn log_pi(&self, eps: f64, i: usize, j: usize) -> f64 {
        self.log_mu[i]
            + self.log_w[j]
            + (self.costs[i * self.n + j] - self.phi[i] - self.psi[j] - dot(self.b.row(i), self.x.row(j))) / eps
    }

    /// Projects row `i` onto both its mass and its mean-independence
    /// constraints by a damped Newton solve in the scaled multiplier `b_i / ε`.
    fn row_step(&mut self, eps: f64, i: usize, row_tol: f64) -> Result<()> {
        let (n, n_cov) = (self.n, self.x.cols());
        let s: Vec<f64> = (0..n)
            .map(|j| self.log_w[j] + (self.costs[i * n + j] - self.psi[j]) / eps)
            .collect();
        let mut lambda: Vec<f64> = self.b.row(i).iter().map(|v| v / eps).collect();
        let mut g = vec![0.0; n];
        let mut q = vec![0.0; n];
        if n_cov > 0 {
            let mut mean = tilted_mean(&s, self.x, &lambda, &mut g, &mut q);
            let mut res = inf_norm(&mean);
            let mut iter = 0;
            while res > row_tol {
                iter += 1;
                if iter > NEWTON_MAX {
                    return Err(VqrError::IterationLimit(format!(
                        "mean-independence Newton solve on grid row {i} stalled at residual {res:e}"
                    )));
                }
                let mut cov = DMatrix::<f64>::zeros(n_cov, n_cov);
                for j in 0..n {
                    if q[j] == 0.0 {
                        continue;
                    }
                    for a in 0..n_cov {
                        let da = self.x[(j, a)] - mean[a];
                        for c in 0..=a {
                            cov[(a, c)] += q[j] * da * (self.x[(j, c)] - mean[c]);
                        }
                    }
                }
                for a in 0..n_cov {
                    for c in 0..a {
                        cov[(c, a)] = cov[(a, c)];
                    }
                }
                let rhs = DVector::from_column_slice(&mean);
                let step = match cov.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => {
                        let ridge = 1e-12 * cov.trace().max(f64::MIN_POSITIVE);
                        let reg = cov + DMatrix::identity(n_cov, n_cov) * ridge;
                        match reg.cholesky() {
                            Some(ch) => ch.solve(&rhs),
                            None => rhs.clone(),
                        }
                    }
                };
                let mut t = 1.0;
                let mut accepted = false;
                for _ in 0..HALVINGS {
                    let trial: Vec<f64> = lambda.iter().zip(step.iter()).map(|(l, d)| l + t * d).collect();
                    let trial_mean = tilted_mean(&s, self.x, &trial, &mut g, &mut q);
                    let trial_res = inf_norm(&trial_mean);
                    if trial_res < res {
                        lambda = trial;
                        mean = trial_mean;
                        res = trial_res;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    return Err(VqrError::IterationLimit(format!(
                        "mean-independence Newton solve on grid row {i} cannot reduce residual {res:e}"
                    )));
                }
            }
            tilted_mean(&s, self.x, &lambda, &mut g, &mut q);
        } else {
            g.copy_from_slice(&s);
        }
        self.phi[i] = eps * log_sum_exp(&g);
        for (k, l) in lambda.iter().enumerate() {
            self.b[(i, k)] = eps * l;
        }
        Ok(())
    }

    fn column_step(&mut self, eps: f64) {
        let mut col = vec![0.0; self.m];
        for j in 0..self.n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = self.log_mu[i]
                    + (self.costs[i * self.n + j] - self.phi[i] - dot(self.b.row(i), self.x.row(j))) / eps;
            }
            self.psi[j] = eps * log_sum_exp(&col);
        }
    }

    fn coupling(&self, eps: f64) -> Matrix {
        let mut pi = Matrix::zeros(self.m, self.n);
        for i in 0..self.m {
            for j in 0..self.n {
                pi[(i, j)] = self.log_pi(eps, i, j).exp();
            }
        }
        pi
    }

    /// Worst grid-marginal and mean-independence residuals; the sample
    /// marginal is exact right after a column step.
    fn row_residual(&self, eps: f64) -> f64 {
        let pi = self.coupling(eps);
        let mut worst = 0.0f64;
        for i in 0..self.m {
            let row = pi.row(i);
            let mass: f64 = row.iter().sum();
            let mu = self.log_mu[i].exp();
            worst = worst.max((mass - mu).abs());
            for k in 0..self.x.cols() {
                let mk: f64 = row.iter().enumerate().map(|(j, p)| p * self.x[(j, k)]).sum();
                worst = worst.max(mk.abs() / mu);
            }
        }
        worst
    }
}

/// Entropic surrogate: maximizes `Σ π u·y - ε KL(π | μ⊗w)` under the grid,
/// sample and mean-independence constraints by alternating exact row
/// projections (mass and moments jointly) with column scalings. `epsilon` is
/// approached from the objective scale by geometric decrease, warm-starting
/// the potentials; `max_iter` bounds the total number of sweeps.
pub fn solve_vqr_entropic(
    sample: &DiscreteSample,
    grid: &UGrid,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<VqrSolution> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(VqrError::Validation(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(tol > 0.0) {
        return Err(VqrError::Validation(format!("tol must be positive, got {tol}")));
    }
    let keep = prepare(sample, grid)?;
    let reduced = sample.with_covariates(&keep);
    let (m, n) = (grid.m(), sample.n());
    let mut st = State {
        costs: correlation_costs(sample, grid),
        log_mu: grid.mu().iter().map(|v| v.ln()).collect(),
        log_w: sample.w().iter().map(|v| v.ln()).collect(),
        x: reduced.x(),
        m,
        n,
        phi: vec![0.0; m],
        psi: vec![0.0; n],
        b: Matrix::zeros(m, keep.len()),
    };

    let mut schedule = Vec::new();
    let mut e = objective_scale(sample, grid).max(epsilon);
    while e > epsilon {
        schedule.push(e);
        e *= SCALING_FACTOR;
    }
    schedule.push(epsilon);

    let mut sweeps = 0;
    for (stage, &eps) in schedule.iter().enumerate() {
        let last = stage + 1 == schedule.len();
        let stage_tol = if last { tol } else { tol.max(1e-3) };
        st.column_step(eps);
        loop {
            if sweeps >= max_iter {
                return Err(VqrError::IterationLimit(format!(
                    "entropic iterations stopped after {sweeps} sweeps at epsilon {eps:e} (residual {:e})",
                    st.row_residual(eps)
                )));
            }
            sweeps += 1;
            for i in 0..m {
                st.row_step(eps, i, 0.1 * stage_tol)?;
            }
            st.column_step(eps);
            if st.row_residual(eps) <= stage_tol {
                break;
            }
        }
    }
    log::debug!("entropic solve: {sweeps} sweeps over {} epsilon stages", schedule.len());

    let pi = st.coupling(epsilon);
    let coupling = Coupling::new(pi, grid, sample)?;
    let value = dot(coupling.pi().as_slice(), &st.costs);
    let mut b = Matrix::zeros(m, sample.n_covariates());
    for i in 0..m {
        for (k, &col) in keep.iter().enumerate() {
            b[(i, col)] = st.b[(i, k)];
        }
    }
    let (mut phi, mut psi) = (st.phi, st.psi);
    let shift = phi[0];
    phi.iter_mut().for_each(|v| *v -= shift);
    psi.iter_mut().for_each(|v| *v += shift);
    let residuals = Residuals::of(&coupling, grid, sample);
    Ok(VqrSolution {
        coupling,
        phi,
        b,
        psi,
        value,
        backend: Backend::Entropic,
        epsilon,
        residuals,
    })
}
