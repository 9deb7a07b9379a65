//! Dense primal simplex for small linear programs with a feasible origin.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Maximizes `c . v` subject to `A v <= b`, `v >= 0`, with `b >= 0` so the
/// origin is a basic feasible solution. Bland's rule prevents cycling.
/// Returns the optimal value and point.
pub fn maximize(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (m, n) = a.shape();
    if b.iter().any(|&v| v < 0.0) {
        return Err(Error::Numerical("simplex needs a nonnegative right-hand side".into()));
    }
    let width = n + m + 1;
    // rows 0..m: constraints; row m: reduced costs (negated objective)
    let mut t = DMatrix::zeros(m + 1, width);
    for i in 0..m {
        for j in 0..n {
            t[(i, j)] = a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, width - 1)] = b[i];
    }
    for j in 0..n {
        t[(m, j)] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let eps = 1e-12;
    for _ in 0..10_000 {
        let entering = (0..n + m).find(|&j| t[(m, j)] < -eps);
        let Some(e) = entering else {
            let mut v = vec![0.0; n];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    v[bv] = t[(i, width - 1)];
                }
            }
            return Ok((t[(m, width - 1)], v));
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let coef = t[(i, e)];
            if coef > eps {
                let ratio = t[(i, width - 1)] / coef;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - eps || ((ratio - lr).abs() <= eps && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else {
            return Err(Error::Numerical("linear program is unbounded".into()));
        };
        let pivot = t[(r, e)];
        for j in 0..width {
            t[(r, j)] /= pivot;
        }
        for i in 0..=m {
            if i != r {
                let f = t[(i, e)];
                if f != 0.0 {
                    for j in 0..width {
                        t[(i, j)] -= f * t[(r, j)];
                    }
                }
            }
        }
        basis[r] = e;
    }
    Err(Error::Numerical("simplex iteration limit reached".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 3.0, 2.0]);
        let (val, v) = maximize(&[3.0, 5.0], &a, &[4.0, 12.0, 18.0]).unwrap();
        assert!((val - 36.0).abs() < 1e-12);
        assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!(maximize(&[0.0, 1.0], &a, &[1.0]).is_err());
    }
}
