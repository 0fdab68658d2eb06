//! Matrix-free Krylov solvers on flat `f64` vectors.

use rayon::prelude::*;

/// Convergence record of one Krylov solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// Final residual 2-norm.
    pub residual: f64,
    pub converged: bool,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b.par_iter()).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(a, b)| *a += s * b);
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite operator. Stops when `|b - A x| <= tol`.
pub fn pcg<A, M>(
    mut apply: A,
    mut precond: M,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, KrylovOutcome)
where
    A: FnMut(&[f64]) -> Vec<f64>,
    M: FnMut(&[f64]) -> Vec<f64>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut rn = norm(&r);
    if rn <= tol {
        return (x, KrylovOutcome { iterations: 0, residual: rn, converged: true });
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return (x, KrylovOutcome { iterations: it, residual: rn, converged: false });
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        rn = norm(&r);
        if rn <= tol {
            return (x, KrylovOutcome { iterations: it, residual: rn, converged: true });
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    (x, KrylovOutcome { iterations: max_iter, residual: rn, converged: false })
}

/// Right-preconditioned restarted GMRES. `max_apply` caps the total number
/// of operator applications.
pub fn gmres<A, M>(
    mut apply: A,
    mut precond: M,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_apply: usize,
) -> (Vec<f64>, KrylovOutcome)
where
    A: FnMut(&[f64]) -> Vec<f64>,
    M: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut beta = norm(&r);
    let mut applications = 0;
    if beta <= tol {
        return (x, KrylovOutcome { iterations: 0, residual: beta, converged: true });
    }
    while applications < max_apply {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|e| e / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            applications += 1;
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                h[i][k] = dot(&w, vi);
                axpy(&mut w, -h[i][k], vi);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            let res = g[k + 1].abs();
            k_used = k + 1;
            if res <= tol || applications >= max_apply || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|e| e / hn).collect());
        }
        // back substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut x, *yj, &z[j]);
        }
        let ax = apply(&x);
        applications += 1;
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        beta = norm(&r);
        log::trace!("gmres restart: {applications} applications, residual {beta:e}");
        if beta <= tol {
            return (x, KrylovOutcome { iterations: applications, residual: beta, converged: true });
        }
        if k_used == 0 {
            break;
        }
    }
    (x, KrylovOutcome { iterations: applications, residual: beta, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], diag: f64, off: f64) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut v = diag * x[i];
                if i > 0 {
                    v += off * x[i - 1];
                }
                if i + 1 < n {
                    v += off * x[i + 1];
                }
                v
            })
            .collect()
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, out) = pcg(|v| tridiag(v, 4.0, -1.0), |r| r.to_vec(), &b, 1e-12, 200);
        assert!(out.converged);
        let ax = tridiag(&x, 4.0, -1.0);
        assert!(ax.iter().zip(&b).all(|(a, c)| (a - c).abs() < 1e-11));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 60;
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let op = |v: &[f64]| -> Vec<f64> {
            let n = v.len();
            (0..n)
                .map(|i| {
                    let mut s = 3.0 * v[i];
                    if i > 0 {
                        s -= 1.5 * v[i - 1];
                    }
                    if i + 1 < n {
                        s -= 0.5 * v[i + 1];
                    }
                    s
                })
                .collect()
        };
        let (x, out) = gmres(op, |r| r.iter().map(|v| v / 3.0).collect(), &b, 1e-11, 10, 1000);
        assert!(out.converged, "{out:?}");
        let ax = op(&x);
        assert!(ax.iter().zip(&b).all(|(a, c)| (a - c).abs() < 1e-10));
    }
}
