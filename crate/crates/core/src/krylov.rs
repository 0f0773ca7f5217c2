//! Restarted GMRES for complex systems with right preconditioning.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub rel_tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { rel_tol: 1e-12, restart: 60, max_iter: 400 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solve A x = b. `apply` writes A·v into its second argument; `precond`
/// returns M⁻¹·v. Convergence is judged on the true residual ‖b − Ax‖/‖b‖.
pub fn gmres(
    apply: impl Fn(&[Complex64], &mut [Complex64]),
    precond: impl Fn(&[Complex64]) -> Vec<Complex64>,
    b: &[Complex64],
    opts: GmresOptions,
) -> GmresOutcome {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut x = vec![zero; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return GmresOutcome { x, iterations: 0, relative_residual: 0.0, converged: true };
    }
    let m = opts.restart.max(1);
    let mut total = 0;
    let mut r = b.to_vec();
    let mut ax = vec![zero; n];
    let mut previous = f64::INFINITY;
    loop {
        let beta = norm(&r);
        let rel = beta / bnorm;
        // A restart cycle that fails to halve the true residual has hit the
        // rounding floor of the operator.
        let stalled = rel > 0.5 * previous;
        if rel <= opts.rel_tol || total >= opts.max_iter || !rel.is_finite() || stalled {
            return GmresOutcome { x, iterations: total, relative_residual: rel, converged: rel <= opts.rel_tol };
        }
        previous = rel;
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k = 0;
        while k < m && total < opts.max_iter {
            let z = precond(&basis[k]);
            let mut w = vec![zero; n];
            apply(&z, &mut w);
            // Modified Gram-Schmidt with one reorthogonalization pass.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[i][k] += c;
                    for (wj, vj) in w.iter_mut().zip(v) {
                        *wj -= c * vj;
                    }
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = Complex64::new(hn, 0.0);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i].conj() * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let rr = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = Complex64::new(1.0, 0.0);
                h[k][k] = bb;
            } else {
                let phase = a / a.norm();
                cs[k] = a.norm() / rr;
                sn[k] = phase * bb.conj() / rr;
                h[k][k] = phase * rr;
            }
            h[k + 1][k] = zero;
            g[k + 1] = -sn[k].conj() * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            let done = g[k].norm() <= opts.rel_tol * bnorm || hn == 0.0;
            if done {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![zero; k];
        for i in (0..k).rev() {
            let s: Complex64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![zero; n];
        for (yi, v) in y.iter().zip(&basis) {
            for (u, vj) in update.iter_mut().zip(v) {
                *u += yi * vj;
            }
        }
        for (xi, d) in x.iter_mut().zip(precond(&update)) {
            *xi += d;
        }
        apply(&x, &mut ax);
        for ((ri, bi), ai) in r.iter_mut().zip(b).zip(&ax) {
            *ri = bi - ai;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_complex_system() {
        let n = 40;
        let a: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            Complex64::new(4.0 + i as f64 * 0.1, 1.0)
                        } else {
                            Complex64::new(((i * 7 + j * 3) % 5) as f64 * 0.05, ((i + 2 * j) % 3) as f64 * 0.04)
                        }
                    })
                    .collect()
            })
            .collect();
        let x_true: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, -(i as f64).sqrt())).collect();
        let b: Vec<Complex64> = a.iter().map(|row| row.iter().zip(&x_true).map(|(p, q)| p * q).sum()).collect();
        let apply = |v: &[Complex64], out: &mut [Complex64]| {
            for (o, row) in out.iter_mut().zip(&a) {
                *o = row.iter().zip(v).map(|(p, q)| p * q).sum();
            }
        };
        let out = gmres(apply, |v| v.to_vec(), &b, GmresOptions { rel_tol: 1e-13, restart: 10, max_iter: 500 });
        assert!(out.converged);
        for (x, y) in out.x.iter().zip(&x_true) {
            assert!((x - y).norm() < 1e-9 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let b: Vec<Complex64> = (0..20).map(|i| Complex64::new(1.0, i as f64)).collect();
        let out = gmres(
            |v, o| o.iter_mut().zip(v).zip(&d).for_each(|((o, v), d)| *o = v * d),
            |v| v.iter().zip(&d).map(|(v, d)| v / d).collect(),
            &b,
            GmresOptions::default(),
        );
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }
}
