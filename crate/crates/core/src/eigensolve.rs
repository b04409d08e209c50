//! Dense generalized symmetric-definite eigensolver for `H v = λ S v`.
//!
//! Cholesky reduction to `C = L⁻¹ H L⁻ᵀ`, Householder tridiagonalization, implicit
//! QL for the eigenvalues, inverse iteration for the wanted vectors, then a
//! Rayleigh-Ritz pass with the original `(H, S)` to remove the reduction error.

use crate::error::{Error, Result};
use crate::linalg::{back_substitute_transposed, cholesky, dot, norm2, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct EigResult {
    pub values: Vec<f64>,
    /// `S`-orthonormal columns.
    pub vectors: Matrix,
    /// `‖H v - λ S v‖ / ‖v‖`.
    pub residuals: Vec<f64>,
}

const QL_MAX_ITERS: usize = 50;

/// `L⁻¹ A` for lower-triangular `L`, row by row.
fn forward_rows(l: &Matrix, a: &Matrix) -> Matrix {
    let n = a.rows();
    let m = a.cols();
    let mut y = a.clone();
    for i in 0..n {
        let (done, rest) = y.as_mut_slice().split_at_mut(i * m);
        let row = &mut rest[..m];
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != 0.0 {
                let yk = &done[k * m..(k + 1) * m];
                for (r, v) in row.iter_mut().zip(yk) {
                    *r -= lik * v;
                }
            }
        }
        let inv = 1.0 / l[(i, i)];
        row.iter_mut().for_each(|r| *r *= inv);
    }
    y
}

/// Householder reduction of symmetric `a` (overwritten by the reflectors).
/// Returns `(diag, offdiag)` with `offdiag[i]` coupling `i` and `i + 1`.
fn tridiagonalize(a: &mut Matrix) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let n = a.rows();
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        // x = a[k+1.., k]
        let alpha_norm: f64 = (k + 1..n).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            e[k] = 0.0;
            reflectors.push(Vec::new());
            continue;
        }
        let x0 = a[(k + 1, k)];
        let alpha = if x0 > 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = norm2(&v);
        if vnorm == 0.0 {
            e[k] = x0;
            reflectors.push(Vec::new());
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        e[k] = alpha;
        // A22 <- (I - 2vvᵀ) A22 (I - 2vvᵀ) = A22 - v wᵀ - w vᵀ with w = 2p - 2(vᵀp) v, p = A22 v
        let off = k + 1;
        let len = n - off;
        for i in 0..len {
            let row = &a.row(off + i)[off..];
            p[i] = dot(row, &v);
        }
        let vp = dot(&v, &p[..len]);
        let w: Vec<f64> = (0..len).map(|i| 2.0 * p[i] - 2.0 * vp * v[i]).collect();
        for i in 0..len {
            let (vi, wi) = (v[i], w[i]);
            let row = &mut a.row_mut(off + i)[off..];
            for j in 0..len {
                row[j] -= vi * w[j] + wi * v[j];
            }
        }
        reflectors.push(v);
    }
    if n >= 2 {
        e[n - 2] = a[(n - 1, n - 2)];
    }
    let d = (0..n).map(|i| a[(i, i)]).collect();
    (d, e, reflectors)
}

/// Eigenvalues of the symmetric tridiagonal `(d, e)` by implicit QL.
fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= 1e-15 * dd || e[m] == 0.0 {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_ITERS {
                return Err(Error::NoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
    Ok(d)
}

/// Solves `(T - λ I) x = b` for tridiagonal `T` by LU with partial pivoting,
/// replacing vanishing pivots by `tiny`.
fn tridiagonal_solve(d: &[f64], e: &[f64], lambda: f64, b: &mut [f64], tiny: f64) {
    let n = d.len();
    let mut dd: Vec<f64> = d.iter().map(|x| x - lambda).collect();
    if n == 1 {
        b[0] /= if dd[0].abs() < tiny { tiny } else { dd[0] };
        return;
    }
    let mut dl = e.to_vec();
    let mut du = e.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut swapped = vec![false; n - 1];
    for i in 0..n - 1 {
        if dd[i].abs() >= dl[i].abs() {
            if dd[i].abs() < tiny {
                dd[i] = tiny.copysign(if dd[i] == 0.0 { 1.0 } else { dd[i] });
            }
            let fact = dl[i] / dd[i];
            dl[i] = fact;
            dd[i + 1] -= fact * du[i];
        } else {
            let fact = dd[i] / dl[i];
            dd[i] = dl[i];
            dl[i] = fact;
            let temp = du[i];
            du[i] = dd[i + 1];
            dd[i + 1] = temp - fact * dd[i + 1];
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du[i + 1];
            }
            swapped[i] = true;
        }
    }
    if dd[n - 1].abs() < tiny {
        dd[n - 1] = tiny;
    }
    for i in 0..n - 1 {
        if swapped[i] {
            let temp = b[i];
            b[i] = b[i + 1];
            b[i + 1] = temp - dl[i] * b[i];
        } else {
            b[i + 1] -= dl[i] * b[i];
        }
    }
    b[n - 1] /= dd[n - 1];
    b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / dd[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / dd[i];
    }
}

/// Inverse iteration for tridiagonal eigenvectors, orthogonalized within clusters.
fn tridiagonal_vectors(d: &[f64], e: &[f64], values: &[f64]) -> Vec<Vec<f64>> {
    let n = d.len();
    let norm = d.iter().map(|x| x.abs()).fold(0.0, f64::max) + 2.0 * e.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let tiny = f64::EPSILON * norm.max(f64::MIN_POSITIVE);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    for (idx, &lambda) in values.iter().enumerate() {
        // deterministic start vector
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919 + idx * 104729) % 1000) as f64 * 1e-3).collect();
        let cluster: Vec<usize> = (0..idx)
            .filter(|&j| (values[j] - lambda).abs() <= 1e-9 * norm.max(1.0))
            .collect();
        for _ in 0..4 {
            tridiagonal_solve(d, e, lambda, &mut x, tiny);
            for &j in &cluster {
                let c = dot(&x, &out[j]);
                x.iter_mut().zip(&out[j]).for_each(|(a, b)| *a -= c * b);
            }
            let nx = norm2(&x);
            x.iter_mut().for_each(|a| *a /= nx);
        }
        out.push(x);
    }
    out
}

/// Applies `Q = H_0 H_1 ⋯` (from [`tridiagonalize`]) to `z`.
fn apply_reflectors(reflectors: &[Vec<f64>], z: &mut [f64]) {
    for (k, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        let tail = &mut z[k + 1..];
        let c = 2.0 * dot(v, tail);
        tail.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
    }
}

/// The `n` lowest eigenpairs of `H v = λ S v`.
pub fn solve_lowest(h: &Matrix, s: &Matrix, n: usize) -> Result<EigResult> {
    let m = h.rows();
    if n == 0 || n > m || !h.is_square() || s.rows() != m {
        return Err(Error::InvalidParams(format!("cannot extract {n} eigenpairs from a {m}×{m} pencil")));
    }
    let l = cholesky(s)?;
    let y = forward_rows(&l, h);
    let mut c = forward_rows(&l, &y.transpose());
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let (d, e, reflectors) = tridiagonalize(&mut c);
    let all = tridiagonal_eigenvalues(&d, &e)?;
    let wanted = &all[..n];
    let z = tridiagonal_vectors(&d, &e, wanted);
    let mut vectors = Matrix::zeros(m, n);
    for (j, mut zj) in z.into_iter().enumerate() {
        apply_reflectors(&reflectors, &mut zj);
        back_substitute_transposed(&l, &mut zj);
        vectors.set_column(j, &zj);
    }
    rayleigh_ritz(h, s, vectors)
}

/// Rayleigh-Ritz on the span of `basis` with the original pencil.
pub fn rayleigh_ritz(h: &Matrix, s: &Matrix, basis: Matrix) -> Result<EigResult> {
    let hv = h.matmul(&basis);
    let sv = s.matmul(&basis);
    let bt = basis.transpose();
    let hs = symmetrize(&bt.matmul(&hv));
    let ss = symmetrize(&bt.matmul(&sv));
    let small = jacobi_generalized(&hs, &ss)?;
    let vectors = basis.matmul(&small.vectors);
    finish(h, s, small.values, vectors)
}

fn symmetrize(a: &Matrix) -> Matrix {
    let n = a.rows();
    Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

fn finish(h: &Matrix, s: &Matrix, values: Vec<f64>, mut vectors: Matrix) -> Result<EigResult> {
    let (m, n) = (vectors.rows(), vectors.cols());
    let mut residuals = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = vectors.column(j);
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * norm2(&v)) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        let hv = h.mat_vec(&v);
        let sv = s.mat_vec(&v);
        let r: Vec<f64> = (0..m).map(|i| hv[i] - values[j] * sv[i]).collect();
        residuals.push(norm2(&r) / norm2(&v));
        vectors.set_column(j, &v);
    }
    Ok(EigResult {
        values,
        vectors,
        residuals,
    })
}

/// Full generalized eigendecomposition by Cholesky reduction and cyclic Jacobi
/// rotations. Cubic per sweep; meant for small pencils and cross-checks.
pub fn jacobi_generalized(h: &Matrix, s: &Matrix) -> Result<EigResult> {
    let n = h.rows();
    let l = cholesky(s)?;
    let y = forward_rows(&l, h);
    let mut a = symmetrize(&forward_rows(&l, &y.transpose()));
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)].powi(2)).sum();
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut x = v.column(i);
        back_substitute_transposed(&l, &mut x);
        vectors.set_column(col, &x);
    }
    finish(h, s, values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, rng: &mut impl Rng) -> Matrix {
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        a.matmul(&a.transpose()).add(&Matrix::identity(n).scale(n as f64 * 0.1))
    }

    #[test]
    fn diagonal_pencil() {
        let h = Matrix::diag(&[3.0, 1.0, 2.0]);
        let r = solve_lowest(&h, &Matrix::identity(3), 2).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-15 && (r.values[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_closed_form() {
        let h = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let s = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]]);
        // det(H - λS) = 4λ² - 10λ + 3
        let disc = (100.0_f64 - 48.0).sqrt();
        let exact = [(10.0 - disc) / 8.0, (10.0 + disc) / 8.0];
        let r = solve_lowest(&h, &s, 2).unwrap();
        for (a, b) in r.values.iter().zip(exact) {
            assert!((a - b).abs() < 1e-14, "{a} {b}");
        }
    }

    #[test]
    fn not_spd_is_reported() {
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let h = Matrix::identity(2);
        assert!(matches!(solve_lowest(&h, &s, 1), Err(Error::NotSpd { .. })));
    }

    #[test]
    fn agrees_with_jacobi_on_random_pencils() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let s = random_spd(20, &mut rng);
            let a = Matrix::from_fn(20, 20, |_, _| rng.gen_range(-1.0..1.0));
            let h = a.add(&a.transpose());
            let fast = solve_lowest(&h, &s, 20).unwrap();
            let slow = jacobi_generalized(&h, &s).unwrap();
            for (x, y) in fast.values.iter().zip(&slow.values) {
                assert!((x - y).abs() < 1e-12 * y.abs().max(1.0), "{x} {y}");
            }
            let vts = fast.vectors.transpose().matmul(&s).matmul(&fast.vectors);
            assert!(vts.sub(&Matrix::identity(20)).max_abs() < 1e-10);
            assert!(fast.residuals.iter().all(|&r| r < 1e-9 * h.max_abs()));
        }
    }

    #[test]
    fn degenerate_eigenvalues() {
        let h = Matrix::diag(&[0.0, 5.0, 5.0, 9.0, 9.0, 20.0]);
        let r = solve_lowest(&h, &Matrix::identity(6), 5).unwrap();
        assert!((r.values[1] - 5.0).abs() < 1e-14 && (r.values[4] - 9.0).abs() < 1e-14);
        let g = r.vectors.transpose().matmul(&r.vectors);
        assert!(g.sub(&Matrix::identity(5)).max_abs() < 1e-12);
    }
}
