//! Nonnegative least squares (Lawson-Hanson) for the small dense systems of
//! the weight refit. Matrices are given as columns.

use alloc::vec;
use alloc::vec::Vec;

/// Least squares `min ‖A x - b‖` by Householder QR. Columns whose pivot is
/// negligible relative to the largest get coefficient zero.
fn least_squares(cols: &[&[f64]], b: &[f64]) -> Vec<f64> {
    let p = cols.len();
    let m = b.len();
    let mut a: Vec<Vec<f64>> = cols.iter().map(|c| c.to_vec()).collect();
    let mut r = b.to_vec();
    let mut diag = vec![0.0; p];
    let mut v = vec![0.0; m];
    for j in 0..p.min(m) {
        let norm = libm::sqrt(a[j][j..].iter().map(|x| x * x).sum());
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        v[j..].copy_from_slice(&a[j][j..]);
        v[j] -= alpha;
        let vn2: f64 = v[j..].iter().map(|x| x * x).sum();
        if vn2 == 0.0 {
            diag[j] = a[j][j];
            continue;
        }
        for col in a.iter_mut().skip(j + 1) {
            let s: f64 = v[j..].iter().zip(&col[j..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * s / vn2;
            for (ci, vi) in col[j..].iter_mut().zip(&v[j..]) {
                *ci -= f * vi;
            }
        }
        let s: f64 = v[j..].iter().zip(&r[j..]).map(|(x, y)| x * y).sum();
        let f = 2.0 * s / vn2;
        for (ri, vi) in r[j..].iter_mut().zip(&v[j..]) {
            *ri -= f * vi;
        }
        diag[j] = alpha;
    }
    let rmax = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let mut x = vec![0.0; p];
    for j in (0..p.min(m)).rev() {
        if diag[j].abs() <= 1e-13 * rmax {
            continue;
        }
        let mut s = r[j];
        for c in j + 1..p {
            s -= a[c][j] * x[c];
        }
        x[j] = s / diag[j];
    }
    x
}

/// `Aᵀ (b - A x)`.
fn neg_gradient(cols: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut resid = b.to_vec();
    for (c, xj) in cols.iter().zip(x) {
        if *xj != 0.0 {
            for (ri, ci) in resid.iter_mut().zip(c) {
                *ri -= xj * ci;
            }
        }
    }
    cols.iter()
        .map(|c| c.iter().zip(&resid).map(|(a, r)| a * r).sum())
        .collect()
}

/// `argmin_{x ≥ 0} ‖A x - b‖`. A zero coefficient is freed only when its
/// descent gradient exceeds `tol`.
pub(crate) fn nnls(cols: &[Vec<f64>], b: &[f64], tol: f64) -> Vec<f64> {
    let p = cols.len();
    let mut x = vec![0.0; p];
    let mut passive = vec![false; p];
    // Columns that failed to enter from the current point.
    let mut blocked = vec![false; p];

    for _ in 0..3 * p + 10 {
        let grad = neg_gradient(cols, b, &x);
        let mut enter = None;
        for j in 0..p {
            if !passive[j] && !blocked[j] && grad[j] > tol && enter.map_or(true, |e: usize| grad[j] > grad[e]) {
                enter = Some(j);
            }
        }
        let Some(t) = enter else { break };
        passive[t] = true;

        for inner in 0..3 * p + 10 {
            let idx: Vec<usize> = (0..p).filter(|&j| passive[j]).collect();
            let sub: Vec<&[f64]> = idx.iter().map(|&j| cols[j].as_slice()).collect();
            let z = least_squares(&sub, b);
            if z.iter().all(|v| *v > 0.0) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (&j, &zj) in idx.iter().zip(&z) {
                    x[j] = zj;
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            if inner == 0 && idx.iter().zip(&z).all(|(&j, &zj)| zj > 0.0 || j == t) {
                passive[t] = false;
                blocked[t] = true;
                break;
            }
            let mut alpha = 1.0f64;
            let mut leave = None;
            for (&j, &zj) in idx.iter().zip(&z) {
                if zj <= 0.0 {
                    let step = x[j] / (x[j] - zj);
                    if leave.is_none() || step < alpha {
                        alpha = alpha.min(step);
                        leave = Some(j);
                    }
                }
            }
            for (&j, &zj) in idx.iter().zip(&z) {
                x[j] += alpha * (zj - x[j]);
            }
            if let Some(j) = leave {
                x[j] = 0.0;
            }
            for &j in &idx {
                if x[j] <= 0.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }
    x
}
