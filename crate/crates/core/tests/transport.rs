mod common;

use common::{best_vertex_value, permutations, rng, sorted};
use rand::seq::SliceRandom;
use rand::Rng;
use vqr_core::measures::{make_grid, DiscreteSample};
use vqr_core::transport::{assemble_transport_lp, barycentric_map, max_correlation, vector_quantile_1d};
use vqr_core::Matrix;

fn y_only(y: Matrix) -> DiscreteSample {
    DiscreteSample::new(Matrix::zeros(y.rows(), 0), y, None).unwrap()
}

#[test]
fn three_point_value() {
    let s = y_only(Matrix::column(vec![3.0, 1.0, 2.0]));
    let g = make_grid(1, 3).unwrap();
    let res = max_correlation(&s, &g, 1e-10).unwrap();
    let expected = (1.0 / 6.0 * 1.0 + 0.5 * 2.0 + 5.0 / 6.0 * 3.0) / 3.0;
    assert!((res.value - expected).abs() < 1e-12);
    let map = barycentric_map(&res.coupling, &g, &s);
    assert_eq!(map.col_to_vec(0), vec![1.0, 2.0, 3.0]);
}

#[test]
fn two_dimensional_assignment_matches_permutation_oracle() {
    let mut r = rng(17);
    let g = make_grid(2, 2).unwrap();
    for _ in 0..10 {
        let y: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
        let s = y_only(Matrix::from_row_major(4, 2, y).unwrap());
        let oracle = permutations(4)
            .into_iter()
            .map(|p| {
                (0..4)
                    .map(|i| g.level(i).iter().zip(s.y_row(p[i])).map(|(u, y)| u * y).sum::<f64>())
                    .sum::<f64>()
                    / 4.0
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let res = max_correlation(&s, &g, 1e-10).unwrap();
        assert!((res.value - oracle).abs() < 1e-10, "{} vs {oracle}", res.value);
    }
}

#[test]
fn small_instances_match_vertex_enumeration() {
    let mut r = rng(5);
    for _ in 0..5 {
        let n = r.gen_range(2..=3);
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.2..1.0)).collect();
        let s = DiscreteSample::new(Matrix::zeros(n, 0), Matrix::column(y), Some(w)).unwrap();
        let g = make_grid(1, 3).unwrap();
        let oracle = best_vertex_value(&assemble_transport_lp(&s, &g).unwrap()).unwrap();
        let res = max_correlation(&s, &g, 1e-10).unwrap();
        assert!((res.value - oracle).abs() < 1e-10);
    }
}

#[test]
fn value_invariant_under_atom_permutation() {
    let mut r = rng(9);
    for _ in 0..10 {
        let n = r.gen_range(3..=9);
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.2..1.0)).collect();
        let s = DiscreteSample::new(Matrix::zeros(n, 0), Matrix::column(y), Some(w)).unwrap();
        let g = make_grid(1, 5).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let sp = s.permuted(&perm).unwrap();
        let a = max_correlation(&s, &g, 1e-10).unwrap();
        let b = max_correlation(&sp, &g, 1e-10).unwrap();
        assert!((a.value - b.value).abs() < 1e-10);
        // The original potentials, permuted, stay dual feasible.
        let t = g.levels_1d().unwrap();
        for i in 0..g.m() {
            for (k, &j) in perm.iter().enumerate() {
                assert!(a.phi[i] + a.psi[j] >= t[i] * sp.y()[(k, 0)] - 1e-9);
            }
        }
    }
}

#[test]
fn generalized_inverse_matches_sorted_oracle() {
    let mut r = rng(23);
    for _ in 0..20 {
        let n = r.gen_range(1..=12);
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(-5..=5) as f64).collect();
        let s = y_only(Matrix::column(y.clone()));
        let g = make_grid(1, n).unwrap();
        assert_eq!(vector_quantile_1d(&s, &g).unwrap(), sorted(&y));
    }
}
