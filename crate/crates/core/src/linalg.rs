//! Small dense linear-algebra helpers shared by the evaluators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Systems larger than this are solved iteratively unless a caller overrides it.
pub const DEFAULT_DENSE_LIMIT: usize = 4000;

/// Solves `V = c + D P V`, where row `j` of the discounted kernel is
/// `weights[j] * P[j, ·]` and every weight is below one.
///
/// `rows[j]` holds the (sparse) landing distribution of root `j`.
pub fn solve_discounted_system(
    costs: &[f64],
    weights: &[f64],
    rows: &[Vec<(usize, f64)>],
    dense_limit: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = costs.len();
    let values = if n <= dense_limit {
        let mut m = DMatrix::<f64>::identity(n, n);
        for (j, row) in rows.iter().enumerate() {
            for &(i, p) in row {
                m[(j, i)] -= weights[j] * p;
            }
        }
        let rhs = DVector::from_column_slice(costs);
        let lu = m.lu();
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("{n}x{n} evaluation system")))?;
        sol.as_slice().to_vec()
    } else {
        jacobi(costs, weights, rows, 1e-12)
    };
    let residual = residual(&values, costs, weights, rows);
    Ok((values, residual))
}

/// Fixed-point iteration for the same system; converges because every
/// discounted row sums to at most `max(weights) < 1`.
pub fn jacobi(costs: &[f64], weights: &[f64], rows: &[Vec<(usize, f64)>], tol: f64) -> Vec<f64> {
    let n = costs.len();
    let mut v = costs.to_vec();
    let mut next = vec![0.0; n];
    let rate = weights.iter().cloned().fold(0.0_f64, f64::max);
    let stop = if rate > 0.0 { tol * (1.0 - rate) / rate } else { f64::INFINITY };
    loop {
        let mut diff = 0.0_f64;
        for j in 0..n {
            let acc: f64 = rows[j].iter().map(|&(i, p)| p * v[i]).sum();
            next[j] = costs[j] + weights[j] * acc;
            diff = diff.max((next[j] - v[j]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if diff <= stop {
            return v;
        }
    }
}

pub fn residual(values: &[f64], costs: &[f64], weights: &[f64], rows: &[Vec<(usize, f64)>]) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..values.len() {
        let acc: f64 = rows[j].iter().map(|&(i, p)| p * values[i]).sum();
        worst = worst.max((values[j] - costs[j] - weights[j] * acc).abs());
    }
    worst
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the smallest entry; ties go to the lowest index.
pub fn argmin(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_jacobi_agree() {
        let costs = vec![1.0, 2.0, 0.5];
        let weights = vec![0.9, 0.5, 0.25];
        let rows = vec![
            vec![(0, 0.2), (1, 0.8)],
            vec![(2, 1.0)],
            vec![(0, 0.5), (1, 0.25), (2, 0.25)],
        ];
        let (dense, res) = solve_discounted_system(&costs, &weights, &rows, 10).unwrap();
        assert!(res < 1e-12);
        let (iter, _) = solve_discounted_system(&costs, &weights, &rows, 0).unwrap();
        for (a, b) in dense.iter().zip(&iter) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn argmin_prefers_lowest_index() {
        assert_eq!(argmin([3.0, 1.0, 1.0, 2.0]), (1, 1.0));
    }
}
