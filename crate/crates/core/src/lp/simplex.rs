//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Phase 1 minimizes the sum of one artificial variable per row that the
//! crash basis could not cover; phase 2 pins artificials to zero. Redundant
//! rows leave an artificial basic at level zero, which is harmless.

use nalgebra::DMatrix;

use super::{LinearProgram, LpSolution, LpStatus, PivotRule, SolveOptions};
use crate::error::{Result, VqrError};

const PIVOT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
    FreeZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    opts: &'a SolveOptions,
    rows: usize,
    n_struct: usize,
    /// Nonzeros of every column, artificials included.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    stall: usize,
    bland: bool,
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SolveOptions) -> Result<LpSolution> {
    let mut s = Simplex::new(lp, opts);
    let needs_phase_one = s.basis.iter().any(|&v| v >= s.n_struct && s.x[v] > 0.0);

    if needs_phase_one {
        s.set_phase(Phase::One);
        match s.run()? {
            Outcome::IterationLimit => return Ok(s.finish(LpStatus::IterationLimit, None)),
            Outcome::Unbounded => {
                return Err(VqrError::Internal("phase 1 reported unbounded".into()))
            }
            Outcome::Optimal => {}
        }
        let infeasibility: f64 = (s.n_struct..s.cols.len()).map(|v| s.x[v].max(0.0)).sum();
        let scale = 1.0f64.max(lp.b().iter().fold(0.0, |m, v| m.max(v.abs())));
        if infeasibility > opts.tol * scale {
            let farkas = s.duals().into_iter().map(|v| -v).collect();
            return Ok(s.finish(LpStatus::Infeasible, Some(farkas)));
        }
    }

    s.set_phase(Phase::Two);
    let status = match s.run()? {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::IterationLimit => LpStatus::IterationLimit,
    };
    Ok(s.finish(status, None))
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, opts: &'a SolveOptions) -> Self {
        let rows = lp.num_rows();
        let n_struct = lp.num_vars();
        let a = lp.a();

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        for i in 0..rows {
            for (j, &v) in a.row(i).iter().enumerate() {
                if v != 0.0 {
                    cols[j].push((i, v));
                }
            }
        }

        let mut lower = lp.lower().to_vec();
        let mut upper = lp.upper().to_vec();
        let mut x = vec![0.0; n_struct];
        let mut state = vec![State::AtLower; n_struct];
        for j in 0..n_struct {
            (x[j], state[j]) = if lower[j].is_finite() {
                (lower[j], State::AtLower)
            } else if upper[j].is_finite() {
                (upper[j], State::AtUpper)
            } else {
                (0.0, State::FreeZero)
            };
        }

        let mut residual = lp.b().to_vec();
        for (j, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                residual[i] -= v * x[j];
            }
        }

        // Crash: a column whose only nonzero sits in row i can take over the
        // row if the value it needs fits its bounds.
        let mut basis = vec![usize::MAX; rows];
        let mut diag = vec![0.0; rows];
        for (j, col) in cols.iter().enumerate() {
            if let [(i, v)] = col[..] {
                if basis[i] != usize::MAX {
                    continue;
                }
                let target = x[j] + residual[i] / v;
                let slack = opts.tol * (1.0 + target.abs());
                if target >= lower[j] - slack && target <= upper[j] + slack {
                    basis[i] = j;
                    diag[i] = v;
                    x[j] = target;
                    state[j] = State::Basic;
                    residual[i] = 0.0;
                }
            }
        }

        for i in 0..rows {
            let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            cols.push(vec![(i, sign)]);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(residual[i].abs());
            if basis[i] == usize::MAX {
                basis[i] = n_struct + i;
                diag[i] = sign;
                state.push(State::Basic);
            } else {
                state.push(State::AtLower);
            }
        }

        let mut binv = vec![0.0; rows * rows];
        for i in 0..rows {
            binv[i * rows + i] = 1.0 / diag[i];
        }

        let total = cols.len();
        Self {
            lp,
            opts,
            rows,
            n_struct,
            cols,
            lower,
            upper,
            cost: vec![0.0; total],
            x,
            state,
            basis,
            binv,
            since_refactor: 0,
            iterations: 0,
            stall: 0,
            bland: opts.rule == PivotRule::Bland,
        }
    }

    fn set_phase(&mut self, phase: Phase) {
        let n = self.n_struct;
        match phase {
            Phase::One => {
                self.cost[..n].fill(0.0);
                self.cost[n..].fill(-1.0);
            }
            Phase::Two => {
                self.cost[..n].copy_from_slice(self.lp.c());
                self.cost[n..].fill(0.0);
                self.upper[n..].fill(0.0);
            }
        }
        self.stall = 0;
        self.bland = self.opts.rule == PivotRule::Bland;
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn duals(&self) -> Vec<f64> {
        let r = self.rows;
        let mut y = vec![0.0; r];
        for (i, &v) in self.basis.iter().enumerate() {
            let cb = self.cost[v];
            if cb != 0.0 {
                for (yk, b) in y.iter_mut().zip(&self.binv[i * r..(i + 1) * r]) {
                    *yk += cb * b;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cols[j]
            .iter()
            .fold(self.cost[j], |d, &(i, v)| d - y[i] * v)
    }

    /// Entering variable and its reduced cost. Artificials never re-enter.
    fn price(&self, y: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.tol;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n_struct {
            let eligible_dir = match self.state[j] {
                State::Basic => continue,
                _ if self.lower[j] == self.upper[j] => continue,
                s => {
                    let d = self.reduced_cost(j, y);
                    let ok = match s {
                        State::AtLower => d > tol,
                        State::AtUpper => d < -tol,
                        State::FreeZero => d.abs() > tol,
                        State::Basic => unreachable!(),
                    };
                    if ok {
                        Some(d)
                    } else {
                        None
                    }
                }
            };
            if let Some(d) = eligible_dir {
                if self.bland {
                    return Some((j, d));
                }
                if best.map_or(true, |(_, bd)| d.abs() > bd.abs()) {
                    best = Some((j, d));
                }
            }
        }
        best
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let r = self.rows;
        let mut alpha = vec![0.0; r];
        for &(k, v) in &self.cols[j] {
            for (i, a) in alpha.iter_mut().enumerate() {
                *a += self.binv[i * r + k] * v;
            }
        }
        alpha
    }

    fn run(&mut self) -> Result<Outcome> {
        loop {
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            let y = self.duals();
            let Some((q, d)) = self.price(&y) else {
                if self.since_refactor > 0 {
                    // Confirm optimality on a fresh factorization.
                    self.refactor()?;
                    continue;
                }
                return Ok(Outcome::Optimal);
            };
            if self.iterations >= self.opts.max_iter {
                return Ok(Outcome::IterationLimit);
            }
            self.iterations += 1;
            self.since_refactor += 1;

            let dir = if d > 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);
            let Some((theta, leave)) = self.ratio_test(q, dir, &alpha) else {
                return Ok(Outcome::Unbounded);
            };

            let before = self.objective();
            self.x[q] += dir * theta;
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    self.x[self.basis[i]] -= dir * theta * a;
                }
            }
            match leave {
                Leave::Flip => {
                    (self.x[q], self.state[q]) = if dir > 0.0 {
                        (self.upper[q], State::AtUpper)
                    } else {
                        (self.lower[q], State::AtLower)
                    };
                }
                Leave::Row(p, at_upper) => {
                    let out = self.basis[p];
                    (self.x[out], self.state[out]) = if at_upper {
                        (self.upper[out], State::AtUpper)
                    } else {
                        (self.lower[out], State::AtLower)
                    };
                    self.basis[p] = q;
                    self.state[q] = State::Basic;
                    self.pivot_inverse(p, &alpha);
                }
            }

            let gain = self.objective() - before;
            if gain > 1e-12 * (1.0 + before.abs()) {
                self.stall = 0;
                self.bland = self.opts.rule == PivotRule::Bland;
            } else {
                self.stall += 1;
                if self.stall >= self.opts.stall_limit {
                    self.bland = true;
                }
            }
        }
    }

    /// Step length and the blocking event for moving `q` in direction `dir`.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64]) -> Option<(f64, Leave)> {
        let mut best: Option<(f64, Leave)> = None;
        if self.lower[q].is_finite() && self.upper[q].is_finite() {
            best = Some((self.upper[q] - self.lower[q], Leave::Flip));
        }
        let mut best_pivot = 0.0f64;
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let v = self.basis[i];
            let rate = -dir * a;
            let (limit, at_upper) = if rate < 0.0 {
                if !self.lower[v].is_finite() {
                    continue;
                }
                ((self.x[v] - self.lower[v]) / -rate, false)
            } else {
                if !self.upper[v].is_finite() {
                    continue;
                }
                ((self.upper[v] - self.x[v]) / rate, true)
            };
            let limit = limit.max(0.0);
            let take = match &best {
                None => true,
                Some((t, prev)) => {
                    let eps = 1e-12 * t.max(1.0);
                    if limit < t - eps {
                        true
                    } else if limit <= t + eps {
                        match prev {
                            Leave::Flip => false,
                            Leave::Row(p, _) => {
                                if self.bland {
                                    v < self.basis[*p]
                                } else {
                                    a.abs() > best_pivot
                                        || (a.abs() == best_pivot && v < self.basis[*p])
                                }
                            }
                        }
                    } else {
                        false
                    }
                }
            };
            if take {
                best = Some((limit, Leave::Row(i, at_upper)));
                best_pivot = a.abs();
            }
        }
        best
    }

    fn pivot_inverse(&mut self, p: usize, alpha: &[f64]) {
        let r = self.rows;
        let piv = alpha[p];
        let (head, rest) = self.binv.split_at_mut(p * r);
        let (prow, tail) = rest.split_at_mut(r);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for (i, &f) in alpha.iter().enumerate() {
            if i == p || f == 0.0 {
                continue;
            }
            let row = if i < p {
                &mut head[i * r..(i + 1) * r]
            } else {
                let k = i - p - 1;
                &mut tail[k * r..(k + 1) * r]
            };
            for (v, pv) in row.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
            }
        }
    }

    /// Recomputes the basis inverse and basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let r = self.rows;
        self.since_refactor = 0;
        if r == 0 {
            return Ok(());
        }
        let mut b = DMatrix::<f64>::zeros(r, r);
        for (p, &v) in self.basis.iter().enumerate() {
            for &(k, a) in &self.cols[v] {
                b[(k, p)] = a;
            }
        }
        let inv = b
            .lu()
            .try_inverse()
            .ok_or_else(|| VqrError::Internal("singular simplex basis".into()))?;
        for i in 0..r {
            for k in 0..r {
                self.binv[i * r + k] = inv[(i, k)];
            }
        }

        let mut rhs = self.lp.b().to_vec();
        for (j, col) in self.cols.iter().enumerate() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                for &(i, a) in col {
                    rhs[i] -= a * self.x[j];
                }
            }
        }
        for i in 0..r {
            let row = &self.binv[i * r..(i + 1) * r];
            self.x[self.basis[i]] = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    fn finish(mut self, status: LpStatus, farkas: Option<Vec<f64>>) -> LpSolution {
        if status == LpStatus::Optimal && self.since_refactor > 0 {
            // run() only returns Optimal on a fresh factorization
            let _ = self.refactor();
        }
        let z = self.x[..self.n_struct].to_vec();
        let y_dual = if status == LpStatus::Infeasible {
            vec![0.0; self.rows]
        } else {
            self.duals()
        };
        let reduced_costs = self.lp.reduced_costs(&y_dual);
        LpSolution {
            value: self.lp.objective(&z),
            z,
            y_dual,
            reduced_costs,
            status,
            iterations: self.iterations,
            farkas,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Leave {
    Flip,
    /// Basis position and whether the leaving variable stops at its upper bound.
    Row(usize, bool),
}
