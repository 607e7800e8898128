//! Exact Gaussian elimination over the rationals.

use num_rational::BigRational;
use num_traits::{One, Zero};

/// Solves `a x = b`; `None` when `a` is singular.
pub fn solve(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = BigRational::one() / a[col][col].clone();
        for k in col..n {
            a[col][k] = &a[col][k] * &inv;
        }
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for k in col..n {
                let t = &f * &a[col][k];
                a[r][k] -= t;
            }
            let t = &f * &b[col];
            b[r] -= t;
        }
    }
    Some(b)
}

/// Stationary distribution of an irreducible stochastic matrix.
pub fn stationary(p: &[Vec<BigRational>]) -> Option<Vec<BigRational>> {
    let n = p.len();
    // Rows of (P^T - I), with the last equation replaced by sum = 1.
    let mut a = vec![vec![BigRational::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = p[j][i].clone();
        }
        a[i][i] -= BigRational::one();
    }
    let mut b = vec![BigRational::zero(); n];
    if n > 0 {
        a[n - 1] = vec![BigRational::one(); n];
        b[n - 1] = BigRational::one();
    }
    solve(a, b)
}
