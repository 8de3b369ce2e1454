//! Dense least squares by Householder QR with column pivoting
//! (Businger–Golub), with leverages from the thin `Q` factor.

use crate::error::{Error, Result};

/// `|R_jj| / |R_00|` below which the design is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Result of a full-rank least-squares solve.
#[derive(Debug, Clone)]
pub struct LstsqFit {
    pub coeffs: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Diagonal of the hat matrix `Q Q^T`.
    pub leverages: Vec<f64>,
}

/// Solves `min ||A x - y||` for an `m × n` matrix given column-major
/// (`a[j * m + i]` is row `i`, column `j`), `m >= n`.
pub fn solve(a: &[f64], m: usize, n: usize, y: &[f64]) -> Result<LstsqFit> {
    if a.len() != m * n || y.len() != m {
        return Err(Error::Config(format!(
            "least-squares shapes disagree: {} entries for {m}x{n}, {} responses",
            a.len(),
            y.len()
        )));
    }
    if m < n || n == 0 {
        return Err(Error::IllConditioned(format!(
            "{m} rows cannot determine {n} coefficients"
        )));
    }
    let mut qr = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut tau = vec![0.0; n];
    let mut norms: Vec<f64> = (0..n).map(|j| col_norm2(&qr[j * m..(j + 1) * m])).collect();
    let mut r00 = 0.0;

    for j in 0..n {
        // Pivot on the largest remaining column norm (recomputed, not downdated).
        for (c, nrm) in norms.iter_mut().enumerate().skip(j) {
            *nrm = col_norm2(&qr[c * m + j..(c + 1) * m]);
        }
        let p = (j..n)
            .max_by(|&x, &y| norms[x].total_cmp(&norms[y]))
            .unwrap_or(j);
        if p != j {
            for i in 0..m {
                qr.swap(j * m + i, p * m + i);
            }
            perm.swap(j, p);
            norms.swap(j, p);
        }
        let col = &mut qr[j * m + j..(j + 1) * m];
        let alpha = col_norm2(col).sqrt();
        if j == 0 {
            r00 = alpha;
        }
        if !(alpha > RANK_TOL * r00) || r00 == 0.0 {
            return Err(Error::IllConditioned(format!(
                "design matrix has numerical rank {j} < {n} (|R_jj| = {alpha:e}, |R_00| = {r00:e})"
            )));
        }
        let beta = if col[0] > 0.0 { -alpha } else { alpha };
        let v0 = col[0] - beta;
        for x in col[1..].iter_mut() {
            *x /= v0;
        }
        tau[j] = -v0 / beta;
        col[0] = beta;
        // Apply H_j = I - tau v v^T to the trailing columns.
        for c in j + 1..n {
            let (head, tail) = qr.split_at_mut(c * m);
            let v = &head[j * m + j..(j + 1) * m];
            let target = &mut tail[j..m];
            let mut dot = target[0];
            for i in 1..m - j {
                dot += v[i] * target[i];
            }
            dot *= tau[j];
            target[0] -= dot;
            for i in 1..m - j {
                target[i] -= dot * v[i];
            }
        }
    }

    // Q^T y.
    let mut qty = y.to_vec();
    for (j, &t) in tau.iter().enumerate() {
        apply_reflector(&qr, m, j, t, &mut qty);
    }
    // Back substitution on R.
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qty[i];
        for c in i + 1..n {
            s -= qr[c * m + i] * z[c];
        }
        z[i] = s / qr[i * m + i];
    }
    let mut coeffs = vec![0.0; n];
    for (j, &pj) in perm.iter().enumerate() {
        coeffs[pj] = z[j];
    }

    // Leverages: squared row norms of the thin Q = H_0 ... H_{n-1} [I; 0].
    let mut leverages = vec![0.0; m];
    let mut e = vec![0.0; m];
    for c in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[c] = 1.0;
        for j in (0..n).rev() {
            apply_reflector(&qr, m, j, tau[j], &mut e);
        }
        for (h, q) in leverages.iter_mut().zip(&e) {
            *h += q * q;
        }
    }

    let residuals = (0..m)
        .map(|i| {
            let fitted: f64 = (0..n).map(|c| a[c * m + i] * coeffs[c]).sum();
            y[i] - fitted
        })
        .collect();
    Ok(LstsqFit {
        coeffs,
        residuals,
        leverages,
    })
}

fn col_norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn apply_reflector(qr: &[f64], m: usize, j: usize, tau: f64, x: &mut [f64]) {
    let v = &qr[j * m + j..(j + 1) * m];
    let mut dot = x[j];
    for i in 1..m - j {
        dot += v[i] * x[j + i];
    }
    dot *= tau;
    x[j] -= dot;
    for i in 1..m - j {
        x[j + i] -= dot * v[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_major(rows: &[&[f64]]) -> (Vec<f64>, usize, usize) {
        let m = rows.len();
        let n = rows[0].len();
        let mut a = vec![0.0; m * n];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a[j * m + i] = *v;
            }
        }
        (a, m, n)
    }

    #[test]
    fn line_fit() {
        // y = 2 + 3 t on 5 points, exact.
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let rows: Vec<Vec<f64>> = t.iter().map(|&t| vec![1.0, t]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let (a, m, n) = col_major(&refs);
        let y: Vec<f64> = t.iter().map(|t| 2.0 + 3.0 * t).collect();
        let fit = solve(&a, m, n, &y).unwrap();
        assert!((fit.coeffs[0] - 2.0).abs() < 1e-12 && (fit.coeffs[1] - 3.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
        // Simple-regression leverage 1/n + (t - tbar)^2 / Sxx.
        for (h, t) in fit.leverages.iter().zip(t) {
            let expected = 0.2 + (t - 2.0) * (t - 2.0) / 10.0;
            assert!((h - expected).abs() < 1e-12);
        }
        assert!((fit.leverages.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_normal_equations() {
        let rows: [&[f64]; 4] = [
            &[1.0, 0.5, -1.0],
            &[1.0, -0.3, 0.2],
            &[1.0, 1.2, 0.7],
            &[1.0, 0.1, 2.0],
        ];
        let (a, m, n) = col_major(&rows);
        let y = [0.3, -1.0, 2.5, 0.4];
        let fit = solve(&a, m, n, &y).unwrap();
        // A^T r = 0 at the optimum.
        for c in 0..n {
            let g: f64 = (0..m).map(|i| a[c * m + i] * fit.residuals[i]).sum();
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let rows: [&[f64]; 3] = [&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]];
        let (a, m, n) = col_major(&rows);
        assert!(matches!(
            solve(&a, m, n, &[1.0, 2.0, 3.0]),
            Err(Error::IllConditioned(_))
        ));
        assert!(solve(&[1.0, 2.0], 1, 2, &[1.0]).is_err());
    }
}
