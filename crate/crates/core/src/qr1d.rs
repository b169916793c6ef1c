//! Univariate quantile regression: level-by-level Koenker–Bassett fits, the
//! quasi-specification scan, `U^QR`, the monotone-constrained global LP and
//! its equivalence with the mean-independence transport problem.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VqrError};
use crate::lp::{solve_lp_with, LinearProgram, SolveOptions};
use crate::matrix::{dot, max_abs, Matrix};
use crate::measures::{make_grid, Coupling, DiscreteSample, UGrid};
use crate::transport::{max_correlation_with, require_optimal};
use crate::vqr::{conditional_model, solve_vqr_exact_with, VqrSolution};

/// Slack used wherever a strict increase must be witnessed numerically.
pub const STRICT_SLACK: f64 = 1e-9;

fn options(tol: f64) -> SolveOptions {
    SolveOptions {
        tol,
        ..SolveOptions::default()
    }
}

fn check_univariate(sample: &DiscreteSample) -> Result<Vec<f64>> {
    sample.require_centered()?;
    sample.y_scalar()
}

/// Covariate columns that are not identically zero.
fn informative(sample: &DiscreteSample) -> Vec<usize> {
    let degenerate = sample.degenerate_covariates();
    if !degenerate.is_empty() {
        warn!("dropping covariates {degenerate:?}: constant after centering");
    }
    (0..sample.n_covariates())
        .filter(|k| !degenerate.contains(k))
        .collect()
}

/// Quantile levels with their quadrature weights. The Riemann sum of
/// `f` is `Σ_k delta_k f(t_k) + offset · f̄`, where the offset term carries
/// the contribution of cells whose level value is fixed by the constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub offset: f64,
}

impl LevelGrid {
    /// `t_k = (k + 1/2)/K` with weights `1/K`.
    pub fn midpoint(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(VqrError::Validation("at least one level is required".into()));
        }
        let h = 1.0 / k as f64;
        Ok(Self {
            t: (0..k).map(|i| (i as f64 + 0.5) * h).collect(),
            delta: vec![h; k],
            offset: 0.0,
        })
    }

    /// Arbitrary increasing levels with midpoint-rule weights: cell
    /// boundaries halfway between consecutive levels, closed by 0 and 1.
    pub fn from_levels(t: Vec<f64>) -> Result<Self> {
        check_levels(&t)?;
        let k = t.len();
        let edge = |i: usize| match i {
            0 => 0.0,
            i if i == k => 1.0,
            i => 0.5 * (t[i - 1] + t[i]),
        };
        let delta = (0..k).map(|i| edge(i + 1) - edge(i)).collect();
        Ok(Self { t, delta, offset: 0.0 })
    }

    /// Levels at the interior cell boundaries `k/m` of an `m`-point midpoint
    /// grid. With `offset = 1/(2m)` the weighted sum reproduces the grid
    /// expectation `Σ_i u_i π(i,·)` exactly.
    pub fn matched(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(VqrError::Validation("grid size must be positive".into()));
        }
        let h = 1.0 / m as f64;
        Ok(Self {
            t: (1..m).map(|k| k as f64 * h).collect(),
            delta: vec![h; m - 1],
            offset: 0.5 * h,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn check_levels(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(VqrError::Validation("at least one level is required".into()));
    }
    if let Some(v) = t.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(VqrError::Validation(format!("level {v} is outside (0, 1)")));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(VqrError::Validation("levels must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KbFit {
    pub t: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    /// Dual weights `U_t` per sample atom, in `[0, 1]`.
    pub ut: Vec<f64>,
    /// Optimal `E(U_t Y)`.
    pub dual_value: f64,
}

/// Solves `min E((Y - a - b·X)₊) + (1 - t) a` as an LP in
/// `(a, b, r⁺, r⁻)` with rows `a + b·x_j + r⁺_j - r⁻_j = y_j`.
pub fn kb_fit_t(sample: &DiscreteSample, t: f64, tol: f64) -> Result<KbFit> {
    kb_fit_t_with(sample, t, &options(tol))
}

/// LP of [`kb_fit_t`]: variables `(a, b, r⁺, r⁻)`, one row per atom.
/// Covariates that are identically zero are omitted.
pub fn assemble_kb_lp(sample: &DiscreteSample, t: f64) -> Result<LinearProgram> {
    if !(t > 0.0 && t < 1.0) {
        return Err(VqrError::Validation(format!("level {t} is outside (0, 1)")));
    }
    let y = check_univariate(sample)?;
    let keep = informative(sample);
    let (n, p) = (sample.n(), keep.len());
    let vars = 1 + p + 2 * n;
    let mut a = Matrix::zeros(n, vars);
    for j in 0..n {
        a[(j, 0)] = 1.0;
        for (k, &col) in keep.iter().enumerate() {
            a[(j, 1 + k)] = sample.x()[(j, col)];
        }
        a[(j, 1 + p + j)] = 1.0;
        a[(j, 1 + p + n + j)] = -1.0;
    }
    let mut c = vec![0.0; vars];
    c[0] = -(1.0 - t);
    for j in 0..n {
        c[1 + p + j] = -sample.w()[j];
    }
    let mut lower = vec![0.0; vars];
    lower[..=p].fill(f64::NEG_INFINITY);
    LinearProgram::new(c, a, y, lower, vec![f64::INFINITY; vars])
}

pub fn kb_fit_t_with(sample: &DiscreteSample, t: f64, opts: &SolveOptions) -> Result<KbFit> {
    let lp = assemble_kb_lp(sample, t)?;
    let keep = informative(sample);
    let y = lp.b().to_vec();
    let n = sample.n();
    let sol = solve_lp_with(&lp, opts)?;
    require_optimal(&sol, &format!("quantile regression at level {t}"))?;

    let mut beta = vec![0.0; sample.n_covariates()];
    for (k, &col) in keep.iter().enumerate() {
        beta[col] = sol.z[1 + k];
    }
    let ut: Vec<f64> = (0..n)
        .map(|j| (-sol.y_dual[j] / sample.w()[j]).clamp(0.0, 1.0))
        .collect();
    let dual_value = (0..n).map(|j| sample.w()[j] * ut[j] * y[j]).sum();
    Ok(KbFit {
        t,
        alpha: sol.z[0],
        beta,
        ut,
        dual_value,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantileModel1D {
    pub t: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `K × N`.
    pub beta: Matrix,
    /// `K × n`.
    pub ut: Matrix,
    /// Per level, the worst of `|Σ w U_t - (1 - t)|` and `|Σ w U_t x|∞`.
    pub moment_residuals: Vec<f64>,
}

impl QuantileModel1D {
    pub fn quantile(&self, k: usize, x: &[f64]) -> f64 {
        self.alpha[k] + dot(self.beta.row(k), x)
    }
}

pub fn kb_scan(sample: &DiscreteSample, t_grid: &[f64], tol: f64) -> Result<QuantileModel1D> {
    kb_scan_with(sample, t_grid, &options(tol))
}

pub fn kb_scan_with(sample: &DiscreteSample, t_grid: &[f64], opts: &SolveOptions) -> Result<QuantileModel1D> {
    check_levels(t_grid)?;
    let (k_levels, n, n_cov) = (t_grid.len(), sample.n(), sample.n_covariates());
    let mut alpha = Vec::with_capacity(k_levels);
    let mut beta = Matrix::zeros(k_levels, n_cov);
    let mut ut = Matrix::zeros(k_levels, n);
    let mut moment_residuals = Vec::with_capacity(k_levels);
    for (k, &t) in t_grid.iter().enumerate() {
        let fit = kb_fit_t_with(sample, t, opts)?;
        alpha.push(fit.alpha);
        beta.row_mut(k).copy_from_slice(&fit.beta);
        ut.row_mut(k).copy_from_slice(&fit.ut);
        let mass: f64 = dot(sample.w(), &fit.ut);
        let mut worst = (mass - (1.0 - t)).abs();
        for c in 0..n_cov {
            let m: f64 = (0..n).map(|j| sample.w()[j] * fit.ut[j] * sample.x()[(j, c)]).sum();
            worst = worst.max(m.abs());
        }
        moment_residuals.push(worst);
    }
    Ok(QuantileModel1D {
        t: t_grid.to_vec(),
        alpha,
        beta,
        ut,
        moment_residuals,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasiSpecReport {
    pub pass: bool,
    /// `(k, j)`: the fitted quantile at atom `j` fails to increase from
    /// level `k` to `k + 1`.
    pub violations: Vec<(usize, usize)>,
    pub slack: f64,
}

pub fn quasi_spec_check(model: &QuantileModel1D, sample: &DiscreteSample) -> QuasiSpecReport {
    let mut violations = Vec::new();
    for k in 0..model.t.len().saturating_sub(1) {
        for j in 0..sample.n() {
            let x = sample.x_row(j);
            if model.quantile(k + 1, x) - model.quantile(k, x) <= STRICT_SLACK {
                violations.push((k, j));
            }
        }
    }
    QuasiSpecReport {
        pass: violations.is_empty(),
        violations,
        slack: STRICT_SLACK,
    }
}

/// `U^QR_j = Σ_k Δ_k U_{t_k}(j)` with midpoint-rule weights.
pub fn build_uqr(model: &QuantileModel1D) -> Result<Vec<f64>> {
    let levels = LevelGrid::from_levels(model.t.clone())?;
    let n = model.ut.cols();
    Ok((0..n)
        .map(|j| (0..levels.len()).map(|k| levels.delta[k] * model.ut[(k, j)]).sum())
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UqrReport {
    pub uqr: Vec<f64>,
    /// `sup_s |F(s) - s|` for the weighted empirical cdf of `U^QR`.
    pub ks_distance: f64,
    /// `1/K + 1/n`.
    pub ks_bound: f64,
    /// `ks_distance <= ks_bound`, and false whenever the bound reaches 1
    /// since no distribution on `[0, 1]` can fail it.
    pub uniform: bool,
    /// Per bin `b` of an equal partition of `[0, 1]`:
    /// `|Σ_j w_j x_j 1{U^QR_j ∈ bin b}|∞`.
    pub bin_residuals: Vec<f64>,
    pub max_bin_residual: f64,
}

/// Weighted Kolmogorov distance to the uniform law on `[0, 1]`.
pub fn ks_uniform(values: &[f64], w: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut below = 0.0;
    let mut worst = 0.0f64;
    let mut k = 0;
    while k < order.len() {
        let v = values[order[k]];
        let mut at = below;
        while k < order.len() && values[order[k]] == v {
            at += w[order[k]];
            k += 1;
        }
        let s = v.clamp(0.0, 1.0);
        worst = worst.max((below - s).abs()).max((at - s).abs());
        below = at;
    }
    worst
}

pub fn uqr_report(model: &QuantileModel1D, sample: &DiscreteSample, bins: usize) -> Result<UqrReport> {
    if bins == 0 {
        return Err(VqrError::Validation("at least one bin is required".into()));
    }
    if model.ut.cols() != sample.n() {
        return Err(VqrError::Dimension("model and sample sizes differ".into()));
    }
    let uqr = build_uqr(model)?;
    let ks_distance = ks_uniform(&uqr, sample.w());
    let ks_bound = 1.0 / model.t.len() as f64 + 1.0 / sample.n() as f64;
    let n_cov = sample.n_covariates();
    let mut sums = vec![vec![0.0; n_cov]; bins];
    for (j, u) in uqr.iter().enumerate() {
        let b = ((u * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        for (s, x) in sums[b].iter_mut().zip(sample.x_row(j)) {
            *s += sample.w()[j] * x;
        }
    }
    let bin_residuals: Vec<f64> = sums.iter().map(|s| max_abs(s)).collect();
    let max_bin_residual = bin_residuals.iter().copied().fold(0.0, f64::max);
    Ok(UqrReport {
        uqr,
        ks_distance,
        ks_bound,
        uniform: ks_distance <= ks_bound && ks_bound < 1.0,
        bin_residuals,
        max_bin_residual,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotoneQrSolution {
    pub levels: LevelGrid,
    /// `K × n`, nonincreasing down each column.
    pub v: Matrix,
    /// Includes `offset · ȳ`.
    pub value: f64,
    /// Multipliers of the monotonicity rows (`(K - 1) · n`, level-major)
    /// followed by the moment rows (`1 + N` per level).
    pub duals: Vec<f64>,
}

impl MonotoneQrSolution {
    /// Worst violation of monotonicity, bounds and the moment rows.
    pub fn feasibility_residual(&self, sample: &DiscreteSample) -> f64 {
        monotone_residual(&self.v, &self.levels, sample)
    }
}

fn monotone_residual(v: &Matrix, levels: &LevelGrid, sample: &DiscreteSample) -> f64 {
    let (k_levels, n) = (v.rows(), v.cols());
    let mut worst = 0.0f64;
    for k in 0..k_levels {
        for j in 0..n {
            worst = worst.max(-v[(k, j)]).max(v[(k, j)] - 1.0);
            if k + 1 < k_levels {
                worst = worst.max(v[(k + 1, j)] - v[(k, j)]);
            }
        }
        worst = worst.max((dot(sample.w(), v.row(k)) - (1.0 - levels.t[k])).abs());
        for c in 0..sample.n_covariates() {
            let m: f64 = (0..n).map(|j| sample.w()[j] * v[(k, j)] * sample.x()[(j, c)]).sum();
            worst = worst.max(m.abs());
        }
    }
    worst
}

/// LP of [`monotone_kb_lp`] without the constant `offset · ȳ`. Variables
/// are `v` (level-major) followed by one slack per monotonicity row; rows
/// are the `(K - 1) · n` monotonicity rows, then `1 + N` moment rows per
/// level. Identically zero covariates are omitted. Needs at least one level.
pub fn assemble_monotone_lp(sample: &DiscreteSample, levels: &LevelGrid) -> Result<LinearProgram> {
    let y = check_univariate(sample)?;
    let (k_levels, n) = (levels.len(), sample.n());
    check_levels(&levels.t)?;
    if levels.delta.len() != k_levels {
        return Err(VqrError::Dimension("one quadrature weight per level is required".into()));
    }
    let keep = informative(sample);
    let p = keep.len();
    let n_v = k_levels * n;
    let n_s = (k_levels - 1) * n;
    let vars = n_v + n_s;
    let rows = n_s + k_levels * (1 + p);
    let mut a = Matrix::zeros(rows, vars);
    let mut b = vec![0.0; rows];
    for k in 0..k_levels - 1 {
        for j in 0..n {
            let r = k * n + j;
            a[(r, k * n + j)] = 1.0;
            a[(r, (k + 1) * n + j)] = -1.0;
            a[(r, n_v + r)] = -1.0;
        }
    }
    for k in 0..k_levels {
        let r = n_s + k * (1 + p);
        for j in 0..n {
            a[(r, k * n + j)] = sample.w()[j];
            for (c, &col) in keep.iter().enumerate() {
                a[(r + 1 + c, k * n + j)] = sample.w()[j] * sample.x()[(j, col)];
            }
        }
        b[r] = 1.0 - levels.t[k];
    }
    let mut c = vec![0.0; vars];
    for k in 0..k_levels {
        for j in 0..n {
            c[k * n + j] = levels.delta[k] * sample.w()[j] * y[j];
        }
    }
    let mut upper = vec![1.0; n_v];
    upper.resize(vars, f64::INFINITY);
    LinearProgram::new(c, a, b, vec![0.0; vars], upper)
}

/// Maximizes `Σ_k Δ_k Σ_j w_j v[k][j] y_j + offset · ȳ` over `v ∈ [0,1]`
/// nonincreasing in `k`, with `Σ_j w_j v[k][j] = 1 - t_k` and
/// `Σ_j w_j v[k][j] x_j = 0` at every level.
pub fn monotone_kb_lp(sample: &DiscreteSample, levels: &LevelGrid, tol: f64) -> Result<MonotoneQrSolution> {
    monotone_kb_lp_with(sample, levels, &options(tol))
}

pub fn monotone_kb_lp_with(
    sample: &DiscreteSample,
    levels: &LevelGrid,
    opts: &SolveOptions,
) -> Result<MonotoneQrSolution> {
    let y = check_univariate(sample)?;
    if levels.delta.len() != levels.len() {
        return Err(VqrError::Dimension("one quadrature weight per level is required".into()));
    }
    let y_bar = dot(sample.w(), &y);
    let (k_levels, n) = (levels.len(), sample.n());
    if k_levels == 0 {
        return Ok(MonotoneQrSolution {
            levels: levels.clone(),
            v: Matrix::zeros(0, n),
            value: levels.offset * y_bar,
            duals: Vec::new(),
        });
    }
    let lp = assemble_monotone_lp(sample, levels)?;
    let sol = solve_lp_with(&lp, opts)?;
    require_optimal(&sol, "monotone quantile LP")?;
    let n_v = k_levels * n;
    let v = Matrix::from_row_major(k_levels, n, sol.z[..n_v].iter().map(|v| v.clamp(0.0, 1.0)).collect())?;
    Ok(MonotoneQrSolution {
        levels: levels.clone(),
        v,
        value: sol.value + levels.offset * y_bar,
        duals: sol.y_dual,
    })
}

/// `max(0, max_k Σ_{l ≤ k} delta_l q_l)`: the supremum of `Σ delta v q`
/// over nonincreasing `v` with values in `[0, 1]`. Weights must be positive.
pub fn sup_over_nonincreasing(q: &[f64], delta: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut best = 0.0f64;
    for (qk, dk) in q.iter().zip(delta) {
        acc += dk * qk;
        best = best.max(acc);
    }
    best
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub grid_size: usize,
    /// Mean-independence transport value.
    pub value_transport: f64,
    pub value_monotone_kb: f64,
    pub gap: f64,
    pub pass: bool,
    pub tol: f64,
    /// Transport value without the mean-independence constraint.
    pub value_unconstrained: f64,
    /// Thresholding the transport coupling into `v_k = Σ_{i ≥ k} π(i,·) / w`:
    /// worst monotone-LP feasibility violation, and the monotone objective
    /// of the result.
    pub threshold_residual: f64,
    pub threshold_value: f64,
    /// Differencing the monotone solution into `π(i,·) = w (v_{i-1} - v_i)`:
    /// worst transport feasibility violation, and its correlation.
    pub coupling_residual: f64,
    pub coupling_value: f64,
}

/// `v_k(j) = Σ_{i ≥ k} π(i,j) / w_j` for `k = 1..m-1`.
pub fn threshold_coupling(coupling: &Coupling, sample: &DiscreteSample) -> Matrix {
    let (m, n) = (coupling.pi().rows(), sample.n());
    let mut v = Matrix::zeros(m.saturating_sub(1), n);
    for j in 0..n {
        let mut tail = 0.0;
        for i in (1..m).rev() {
            tail += coupling.mass(i, j);
            v[(i - 1, j)] = tail / sample.w()[j];
        }
    }
    v
}

/// Inverse of [`threshold_coupling`], with `v_0 = 1` and `v_m = 0`.
pub fn difference_levels(v: &Matrix, sample: &DiscreteSample) -> Matrix {
    let (m, n) = (v.rows() + 1, sample.n());
    let at = |k: usize, j: usize| match k {
        0 => 1.0,
        k if k == m => 0.0,
        k => v[(k - 1, j)],
    };
    let mut pi = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            pi[(i, j)] = sample.w()[j] * (at(i, j) - at(i + 1, j));
        }
    }
    pi
}

fn monotone_objective(v: &Matrix, levels: &LevelGrid, sample: &DiscreteSample, y: &[f64]) -> f64 {
    let mut total = levels.offset * dot(sample.w(), y);
    for k in 0..v.rows() {
        for j in 0..sample.n() {
            total += levels.delta[k] * sample.w()[j] * v[(k, j)] * y[j];
        }
    }
    total
}

/// Solves both sides of the equivalence on an `m`-point midpoint grid and
/// the matching boundary-level grid, and cross-checks the maps between the
/// two feasible sets.
pub fn equivalence_report(sample: &DiscreteSample, grid_size: usize, tol: f64) -> Result<EquivalenceReport> {
    equivalence_report_with(sample, grid_size, tol, &SolveOptions::default())
}

pub fn equivalence_report_with(
    sample: &DiscreteSample,
    grid_size: usize,
    tol: f64,
    opts: &SolveOptions,
) -> Result<EquivalenceReport> {
    let y = check_univariate(sample)?;
    let grid = make_grid(1, grid_size)?;
    let levels = LevelGrid::matched(grid_size)?;
    let vqr = solve_vqr_exact_with(sample, &grid, opts)?;
    let mono = monotone_kb_lp_with(sample, &levels, opts)?;
    let ot = max_correlation_with(sample, &grid, opts)?;

    let v = threshold_coupling(&vqr.coupling, sample);
    let threshold_residual = monotone_residual(&v, &levels, sample);
    let threshold_value = monotone_objective(&v, &levels, sample, &y);

    let pi = difference_levels(&mono.v, sample);
    let mut coupling_residual = 0.0f64;
    for i in 0..pi.rows() {
        for j in 0..pi.cols() {
            coupling_residual = coupling_residual.max(-pi[(i, j)]);
        }
    }
    let coupling = Coupling::new(pi.clone(), &grid, sample).or_else(|_| {
        let clipped = Matrix::from_row_major(pi.rows(), pi.cols(), pi.as_slice().iter().map(|p| p.max(0.0)).collect())?;
        Coupling::new(clipped, &grid, sample)
    })?;
    coupling_residual = coupling_residual
        .max(coupling.grid_residual(&grid))
        .max(coupling.sample_residual(sample))
        .max(coupling.mean_indep_residual(&grid, sample));
    let coupling_value = coupling.correlation(&grid, sample);

    let gap = (vqr.value - mono.value).abs();
    Ok(EquivalenceReport {
        grid_size,
        value_transport: vqr.value,
        value_monotone_kb: mono.value,
        gap,
        pass: gap <= tol,
        tol,
        value_unconstrained: ot.value,
        threshold_residual,
        threshold_value,
        coupling_residual,
        coupling_value,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    /// Indices `k` with `q[k + 1] < q[k] - STRICT_SLACK`.
    pub decreasing_at: Vec<usize>,
    pub outside_support: bool,
}

/// `t ↦ ∂_u (φ(u) + b(u)·x)` at every grid level, for each query point.
pub fn conditional_quantile_curves(
    sol: &VqrSolution,
    sample: &DiscreteSample,
    grid: &UGrid,
    x_query: &[Vec<f64>],
) -> Result<Vec<QuantileCurve>> {
    let t = grid.levels_1d()?;
    let model = conditional_model(sol, grid)?;
    let n_cov = sample.n_covariates();
    let mut lo = vec![f64::INFINITY; n_cov];
    let mut hi = vec![f64::NEG_INFINITY; n_cov];
    for j in 0..sample.n() {
        for (k, x) in sample.x_row(j).iter().enumerate() {
            lo[k] = lo[k].min(*x);
            hi[k] = hi[k].max(*x);
        }
    }
    x_query
        .iter()
        .map(|x| {
            if x.len() != n_cov {
                return Err(VqrError::Dimension(format!(
                    "query has {} covariates but the sample has {n_cov}",
                    x.len()
                )));
            }
            let outside_support = x.iter().enumerate().any(|(k, v)| *v < lo[k] || *v > hi[k]);
            if outside_support {
                warn!("query point {x:?} lies outside the covariate bounding box");
            }
            let q: Vec<f64> = (0..t.len()).map(|i| model.quantile(i, x)[0]).collect();
            let decreasing_at = q
                .windows(2)
                .enumerate()
                .filter(|(_, w)| w[1] < w[0] - STRICT_SLACK)
                .map(|(k, _)| k)
                .collect();
            Ok(QuantileCurve {
                x: x.clone(),
                t: t.clone(),
                q,
                decreasing_at,
                outside_support,
            })
        })
        .collect()
}
