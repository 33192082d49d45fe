//! Exact-Jaccard reference path and MinHash approximation error metrics.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{AssignmentCost, CostMatrix, MatchedPair, Matching};
use crate::scalar::Real;
use crate::signatures::{jaccard_distance_words, SignatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub mae: f64,
    pub rmse: f64,
    pub exact_layer_distance: f64,
    pub agreement: f64,
    pub exact_pairs: Vec<MatchedPair<f64>>,
}

/// Exact Jaccard distances between rows `reps_a` of `m_a` and rows `reps_b` of `m_b`.
pub fn exact_cost_matrix(
    m_a: &SignatureMatrix,
    m_b: &SignatureMatrix,
    reps_a: &[usize],
    reps_b: &[usize],
) -> Result<CostMatrix<f64>> {
    if m_a.n_samples() != m_b.n_samples() {
        return Err(Error::Shape(format!(
            "signatures over {} and {} samples",
            m_a.n_samples(),
            m_b.n_samples()
        )));
    }
    let rows_a = reps_a.iter().map(|&j| m_a.checked_row(j)).collect::<Result<Vec<_>>>()?;
    let rows_b = reps_b.iter().map(|&j| m_b.checked_row(j)).collect::<Result<Vec<_>>>()?;
    let costs = rows_a
        .iter()
        .flat_map(|ra| rows_b.iter().map(move |rb| jaccard_distance_words(ra, rb)))
        .collect();
    CostMatrix::new(reps_a.len(), reps_b.len(), costs, reps_a.to_vec(), reps_b.to_vec())
}

/// `(MAE, RMSE)` over every cell of two equally shaped matrices.
pub fn approximation_errors<T: Real>(exact: &CostMatrix<T>, approx: &CostMatrix<T>) -> Result<(T, T)> {
    if exact.rows() != approx.rows() || exact.cols() != approx.cols() {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            exact.rows(),
            exact.cols(),
            approx.rows(),
            approx.cols()
        )));
    }
    let n = exact.costs().len();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let (abs, sq) = exact
        .costs()
        .iter()
        .zip(approx.costs())
        .fold((T::zero(), T::zero()), |(a, s), (&x, &y)| {
            let d = x - y;
            (a + d.abs(), s + d * d)
        });
    let nt = T::from_usize(n).expect("cell count representable");
    Ok((abs / nt, (sq / nt).sqrt()))
}

/// Fraction of `(a, b)` pairs common to both matchings, relative to the larger one.
pub fn matching_agreement<T: AssignmentCost>(m1: &Matching<T>, m2: &Matching<T>) -> f64 {
    let denom = m1.pairs.len().max(m2.pairs.len());
    if denom == 0 {
        return 1.0;
    }
    let set: HashSet<(usize, usize)> = m2.pairs.iter().map(|p| (p.a, p.b)).collect();
    let common = m1.pairs.iter().filter(|p| set.contains(&(p.a, p.b))).count();
    common as f64 / denom as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matching(pairs: &[(usize, usize)]) -> Matching<f64> {
        Matching {
            pairs: pairs.iter().map(|&(a, b)| MatchedPair { a, b, cost: 0.0 }).collect(),
            total_cost: 0.0,
        }
    }

    #[test]
    fn self_matrix_zero_diagonal() {
        let m = SignatureMatrix::from_bools(&[vec![true, false, true], vec![false, true, true]]).unwrap();
        let c = exact_cost_matrix(&m, &m, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(1, 1), 0.0);
        assert!((c.get(0, 1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_support_all_ones() {
        let a = SignatureMatrix::from_bools(&[vec![true, true, false, false], vec![true, false, false, false]]).unwrap();
        let b = SignatureMatrix::from_bools(&[vec![false, false, true, true], vec![false, false, false, true]]).unwrap();
        let c = exact_cost_matrix(&a, &b, &[0, 1], &[0, 1]).unwrap();
        assert!(c.costs().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn sample_count_mismatch() {
        let a = SignatureMatrix::zeros(1, 3);
        let b = SignatureMatrix::zeros(1, 4);
        assert!(matches!(exact_cost_matrix(&a, &b, &[0], &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn error_metrics() {
        let x = CostMatrix::from_rows(vec![vec![0.1f64, 0.5], vec![0.3, 0.9]]).unwrap();
        assert_eq!(approximation_errors(&x, &x).unwrap(), (0.0, 0.0));
        let y = CostMatrix::from_rows(vec![vec![0.2, 0.6], vec![0.4, 1.0]]).unwrap();
        let (mae, rmse) = approximation_errors(&x, &y).unwrap();
        assert!((mae - 0.1).abs() < 1e-12 && (rmse - 0.1).abs() < 1e-12);
        let z = CostMatrix::from_rows(vec![vec![0.2, 0.6]]).unwrap();
        assert!(matches!(approximation_errors(&x, &z), Err(Error::Shape(_))));
    }

    #[test]
    fn agreement_extremes() {
        let a = matching(&[(0, 0), (1, 1)]);
        assert_eq!(matching_agreement(&a, &a), 1.0);
        assert_eq!(matching_agreement(&a, &matching(&[(0, 1), (1, 0)])), 0.0);
    }

    /// Optimal pairs published for the two-network ellipse experiment: the
    /// MinHash (K = 512) matching and the exact-Jaccard matching.
    const MINHASH_TABLE: [(usize, usize); 32] = [
        (0, 16), (1, 26), (2, 10), (3, 24), (4, 3), (5, 21), (6, 29), (7, 12),
        (8, 18), (9, 2), (10, 22), (11, 27), (12, 1), (13, 6), (14, 11), (15, 30),
        (16, 9), (17, 28), (18, 23), (19, 4), (20, 15), (21, 31), (22, 0), (23, 14),
        (24, 17), (25, 19), (26, 13), (27, 25), (28, 5), (29, 20), (30, 7), (31, 8),
    ];
    const EXACT_TABLE: [(usize, usize); 32] = [
        (0, 16), (1, 26), (2, 10), (3, 24), (4, 29), (5, 21), (6, 3), (7, 12),
        (8, 18), (9, 2), (10, 22), (11, 27), (12, 1), (13, 6), (14, 11), (15, 30),
        (16, 9), (17, 28), (18, 23), (19, 5), (20, 15), (21, 31), (22, 0), (23, 14),
        (24, 17), (25, 19), (26, 13), (27, 25), (28, 4), (29, 20), (30, 7), (31, 8),
    ];

    #[test]
    fn published_tables_agree_on_28_of_32() {
        let a = matching(&MINHASH_TABLE);
        let b = matching(&EXACT_TABLE);
        assert_eq!(matching_agreement(&a, &b), 28.0 / 32.0);
        assert_eq!(matching_agreement(&b, &a), 28.0 / 32.0);
    }
}
