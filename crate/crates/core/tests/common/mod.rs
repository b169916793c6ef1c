//! Brute-force oracles shared by the integration tests. Nothing here calls
//! the simplex solver.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqr_core::lp::LinearProgram;
use vqr_core::measures::{center, DiscreteSample};
use vqr_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Solves a square system by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for i in col + 1..n {
            let f = a[i][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[i][k] -= f * a[col][k];
                }
                b[i] -= f * b[col];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * z[k]).sum();
        z[i] = (b[i] - s) / a[i][i];
    }
    Some(z)
}

/// Row-reduces `[A | b]` and returns an equivalent system with independent
/// rows, or `None` if the equalities are inconsistent.
fn independent_rows(a: &Matrix, b: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let cols = a.cols();
    let mut rows: Vec<Vec<f64>> = a.to_rows();
    let mut rhs = b.to_vec();
    let mut out_rows = Vec::new();
    let mut out_rhs = Vec::new();
    let mut used = vec![false; rows.len()];
    for col in 0..cols {
        let piv = (0..rows.len())
            .filter(|&i| !used[i])
            .max_by(|&i, &k| rows[i][col].abs().total_cmp(&rows[k][col].abs()));
        let Some(p) = piv else { break };
        if rows[p][col].abs() < 1e-10 {
            continue;
        }
        used[p] = true;
        for i in 0..rows.len() {
            if i != p && !used[i] {
                let f = rows[i][col] / rows[p][col];
                if f != 0.0 {
                    for k in 0..cols {
                        rows[i][k] -= f * rows[p][k];
                    }
                    rhs[i] -= f * rhs[p];
                }
            }
        }
        out_rows.push(rows[p].clone());
        out_rhs.push(rhs[p]);
    }
    let consistent = (0..rows.len())
        .filter(|&i| !used[i])
        .all(|i| rhs[i].abs() < 1e-8);
    consistent.then_some((out_rows, out_rhs))
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    go(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Best objective over all basic solutions of a bounded LP: every choice of
/// `rank` basic columns and every placement of the others at a finite bound.
/// `None` when nothing is feasible.
pub fn best_vertex_value(lp: &LinearProgram) -> Option<f64> {
    let (rows, rhs) = independent_rows(lp.a(), lp.b())?;
    let r = rows.len();
    let n = lp.num_vars();
    let mut best: Option<f64> = None;
    combinations(n, r, &mut |basic| {
        let nonbasic: Vec<usize> = (0..n).filter(|j| !basic.contains(j)).collect();
        let options: Vec<Vec<f64>> = nonbasic
            .iter()
            .map(|&j| {
                let mut o = Vec::new();
                if lp.lower()[j].is_finite() {
                    o.push(lp.lower()[j]);
                }
                if lp.upper()[j].is_finite() && lp.upper()[j] != lp.lower()[j] {
                    o.push(lp.upper()[j]);
                }
                if o.is_empty() {
                    o.push(0.0);
                }
                o
            })
            .collect();
        let mut choice = vec![0usize; nonbasic.len()];
        loop {
            let mut z = vec![0.0; n];
            for (k, &j) in nonbasic.iter().enumerate() {
                z[j] = options[k][choice[k]];
            }
            let sq: Vec<Vec<f64>> = rows.iter().map(|row| basic.iter().map(|&j| row[j]).collect()).collect();
            let b: Vec<f64> = rows
                .iter()
                .zip(&rhs)
                .map(|(row, bi)| bi - nonbasic.iter().map(|&j| row[j] * z[j]).sum::<f64>())
                .collect();
            if let Some(zb) = gauss_solve(sq, b) {
                for (k, &j) in basic.iter().enumerate() {
                    z[j] = zb[k];
                }
                let feasible = (0..n).all(|j| z[j] >= lp.lower()[j] - 1e-9 && z[j] <= lp.upper()[j] + 1e-9);
                if feasible {
                    let v: f64 = lp.c().iter().zip(&z).map(|(c, x)| c * x).sum();
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
            // next bound assignment
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < options[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    });
    best
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                go(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Centered random sample with `n` atoms, `n_cov` covariates and `d = 1`.
pub fn random_sample(rng: &mut impl Rng, n: usize, n_cov: usize, uniform: bool) -> DiscreteSample {
    let x: Vec<f64> = (0..n * n_cov).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let w = (!uniform).then(|| (0..n).map(|_| rng.gen_range(0.2..1.0)).collect());
    let s = DiscreteSample::new(
        Matrix::from_row_major(n, n_cov, x).unwrap(),
        Matrix::column(y),
        w,
    )
    .unwrap();
    center(&s)
}

/// Sorted copy.
pub fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}
