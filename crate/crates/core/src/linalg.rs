//! Small dense solvers: Cholesky, ordinary and non-negative least squares.
//!
//! Matrices are row-major slices. Sizes here are tiny (factor counts, number of
//! ensemble members), so nothing is blocked or vectorised.

use crate::scalar::Scalar;

/// Solves `A x = b` in place for symmetric positive-definite `A` (n × n, row-major).
/// `a` is overwritten with its Cholesky factor. Returns `None` if `A` is not
/// numerically positive definite.
pub fn cholesky_solve<T: Scalar>(a: &mut [T], b: &mut [T], n: usize) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let tiny = T::epsilon() * T::of(16.0);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        let scale = a[j * n + j].abs().max(T::one());
        if !(d > tiny * scale) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // forward: L y = b
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    // back: Lᵀ x = y
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(())
}

/// Least squares `min ‖X w − y‖²` through the normal equations. `x` has `rows`
/// rows of `cols` features. `None` when `XᵀX` is singular.
pub fn least_squares<T: Scalar>(x: &[T], y: &[T], cols: usize) -> Option<Vec<T>> {
    let (mut g, mut h) = gram(x, y, cols);
    cholesky_solve(&mut g, &mut h, cols)?;
    Some(h)
}

fn gram<T: Scalar>(x: &[T], y: &[T], cols: usize) -> (Vec<T>, Vec<T>) {
    let mut g = vec![T::zero(); cols * cols];
    let mut h = vec![T::zero(); cols];
    for (row, &t) in x.chunks_exact(cols).zip(y) {
        for a in 0..cols {
            h[a] += row[a] * t;
            for b in 0..=a {
                g[a * cols + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            g[b * cols + a] = g[a * cols + b];
        }
    }
    (g, h)
}

/// Non-negative least squares `min ‖X w − y‖², w ≥ 0` (Lawson–Hanson active set),
/// working on the normal equations.
pub fn nnls<T: Scalar>(x: &[T], y: &[T], cols: usize) -> Vec<T> {
    let (g, h) = gram(x, y, cols);
    let tol = T::of(1e-10) * h.iter().fold(T::one(), |m, v| m.max(v.abs()));
    let mut w = vec![T::zero(); cols];
    let mut passive = vec![false; cols];

    // Solve the unconstrained problem restricted to the passive set.
    let sub_solve = |passive: &[bool]| -> Option<Vec<T>> {
        let idx: Vec<usize> = (0..cols).filter(|&i| passive[i]).collect();
        let m = idx.len();
        let mut a = vec![T::zero(); m * m];
        let mut b = vec![T::zero(); m];
        for (r, &i) in idx.iter().enumerate() {
            b[r] = h[i];
            for (c, &j) in idx.iter().enumerate() {
                a[r * m + c] = g[i * cols + j];
            }
        }
        cholesky_solve(&mut a, &mut b, m)?;
        let mut z = vec![T::zero(); cols];
        for (r, &i) in idx.iter().enumerate() {
            z[i] = b[r];
        }
        Some(z)
    };

    for _ in 0..(3 * cols + 10) {
        // gradient of the negative objective: h − G w
        let grad: Vec<T> = (0..cols)
            .map(|i| h[i] - (0..cols).map(|j| g[i * cols + j] * w[j]).sum::<T>())
            .collect();
        let best = (0..cols)
            .filter(|&i| !passive[i])
            .max_by(|&a, &b| grad[a].partial_cmp(&grad[b]).unwrap_or(std::cmp::Ordering::Equal));
        let Some(t) = best.filter(|&t| grad[t] > tol) else {
            break;
        };
        passive[t] = true;
        loop {
            let Some(z) = sub_solve(&passive) else {
                // Degenerate column; leave it out.
                passive[t] = false;
                return w;
            };
            if (0..cols).filter(|&i| passive[i]).all(|i| z[i] > T::zero()) {
                w = z;
                break;
            }
            let mut alpha = T::one();
            for i in 0..cols {
                if passive[i] && z[i] <= T::zero() {
                    let step = w[i] / (w[i] - z[i]);
                    if step < alpha {
                        alpha = step;
                    }
                }
            }
            for i in 0..cols {
                w[i] = w[i] + alpha * (z[i] - w[i]);
                if passive[i] && w[i] <= tol {
                    passive[i] = false;
                    w[i] = T::zero();
                }
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_matches_hand_solution() {
        // [[4,2],[2,3]] x = [2, 1]  →  x = [0.5, 0]
        let mut a = [4.0f64, 2.0, 2.0, 3.0];
        let mut b = [2.0, 1.0];
        cholesky_solve(&mut a, &mut b, 2).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-12 && b[1].abs() < 1e-12);
        let mut sing = [1.0f64, 1.0, 1.0, 1.0];
        assert!(cholesky_solve(&mut sing, &mut [1.0, 1.0], 2).is_none());
    }

    #[test]
    fn least_squares_recovers_line() {
        let xs: Vec<f64> = (0..10).flat_map(|i| [1.0, i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| 2.0 + 0.5 * i as f64).collect();
        let w = least_squares(&xs, &ys, 2).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn nnls_clips_negative_coefficient() {
        // y = 1·a − 1·b; with w ≥ 0 the best fit drops b.
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] - r[1]).collect();
        let x: Vec<f64> = rows.iter().flatten().copied().collect();
        let w = nnls(&x, &y, 2);
        assert!(w.iter().all(|v| *v >= 0.0));
        assert_eq!(w[1], 0.0);
        // With positive truth it matches ordinary least squares.
        let y2: Vec<f64> = rows.iter().map(|r| 0.3 * r[0] + 0.7 * r[1]).collect();
        let w2 = nnls(&x, &y2, 2);
        assert!((w2[0] - 0.3).abs() < 1e-9 && (w2[1] - 0.7).abs() < 1e-9);
    }
}
