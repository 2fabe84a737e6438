//! Small dense kernels: symmetric tridiagonal eigenproblems and one-sided
//! Jacobi SVD.

use num_complex::Complex64;

/// Eigenvalues (ascending) of the symmetric tridiagonal matrix with diagonal
/// `d` and off-diagonal `e` (`e.len() == d.len() - 1`), by implicit QL.
pub fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Vec<f64> {
    let (vals, _) = tql(d, e, false);
    vals
}

/// Eigenvalues (ascending) and column-major eigenvectors.
pub fn tridiagonal_eigen(d: &[f64], e: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (vals, vecs) = tql(d, e, true);
    (vals, vecs.expect("vectors requested"))
}

fn tql(d_in: &[f64], e_in: &[f64], vectors: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = d_in.len();
    assert!(n == 0 || e_in.len() + 1 == n, "off-diagonal length");
    let mut d = d_in.to_vec();
    let mut e = e_in.to_vec();
    e.push(0.0);
    let mut z = if vectors {
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        Some(z)
    } else {
        None
    };
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 60 * n.max(1), "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_mut() {
                    for k in 0..n {
                        let zk1 = z[(i + 1) * n + k];
                        let zk = z[i * n + k];
                        z[(i + 1) * n + k] = s * zk + c * zk1;
                        z[i * n + k] = c * zk - s * zk1;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&i| d[i]).collect();
    let vecs = z.map(|z| {
        let mut out = vec![0.0; n * n];
        for (dst, &src) in order.iter().enumerate() {
            out[dst * n..(dst + 1) * n].copy_from_slice(&z[src * n..(src + 1) * n]);
        }
        out
    });
    (vals, vecs)
}

/// Unit eigenvector of the tridiagonal matrix for eigenvalue estimate
/// `lambda`, by two steps of inverse iteration with a pivoted solve.
pub fn tridiagonal_inverse_iteration(d: &[f64], e: &[f64], lambda: f64) -> Vec<f64> {
    let n = d.len();
    if n == 1 {
        return vec![1.0];
    }
    let scale = d.iter().chain(e).fold(0.0f64, |a, &x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let mut x = vec![1.0; n];
    for _ in 0..3 {
        x = solve_shifted(d, e, lambda, tiny, &x);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
    x
}

/// Solves `(T − λ)x = b` by Gaussian elimination with partial pivoting;
/// zero pivots are replaced by `tiny`.
fn solve_shifted(d_in: &[f64], e: &[f64], lambda: f64, tiny: f64, b: &[f64]) -> Vec<f64> {
    let n = d_in.len();
    let mut d: Vec<f64> = d_in.iter().map(|x| x - lambda).collect();
    let mut du = e.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut x = b.to_vec();
    for i in 0..n - 1 {
        if d[i].abs() >= e[i].abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let f = e[i] / d[i];
            d[i + 1] -= f * du[i];
            x[i + 1] -= f * x[i];
        } else {
            let f = d[i] / e[i];
            d[i] = e[i];
            let t = du[i];
            du[i] = d[i + 1];
            d[i + 1] = t - f * d[i + 1];
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -f;
            }
            x.swap(i, i + 1);
            x[i + 1] -= f * x[i];
        }
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = tiny;
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        if i + 1 < n {
            s -= du[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= du2[i] * x[i + 2];
        }
        x[i] = s / d[i];
    }
    x
}

/// Thin SVD `A = U Σ Vᵀ` of a column-major `rows × cols` matrix.
/// `u` is `rows × k` and `v` is `cols × k`, both column-major, with
/// `k = min(rows, cols)`; singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub rows: usize,
    pub cols: usize,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_SWEEPS: usize = 80;

/// One-sided Jacobi on the columns of a tall matrix (`rows ≥ cols`).
fn hestenes(mut a: Vec<f64>, rows: usize, cols: usize) -> Svd {
    let mut v = vec![0.0; cols * cols];
    for i in 0..cols {
        v[i * cols + i] = 1.0;
    }
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (x, y) = (a[p * rows + i], a[q * rows + i]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (a[p * rows + i], a[q * rows + i]);
                    a[p * rows + i] = c * x - s * y;
                    a[q * rows + i] = s * x + c * y;
                }
                for i in 0..cols {
                    let (x, y) = (v[p * cols + i], v[q * cols + i]);
                    v[p * cols + i] = c * x - s * y;
                    v[q * cols + i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> =
        (0..cols).map(|j| a[j * rows..(j + 1) * rows].iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let mut s = Vec::with_capacity(cols);
    let mut u = vec![0.0; rows * cols];
    let mut vv = vec![0.0; cols * cols];
    for (dst, &src) in order.iter().enumerate() {
        let n = norms[src];
        s.push(n);
        if n > 0.0 {
            for i in 0..rows {
                u[dst * rows + i] = a[src * rows + i] / n;
            }
        }
        vv[dst * cols..(dst + 1) * cols].copy_from_slice(&v[src * cols..(src + 1) * cols]);
    }
    Svd { rows, cols, s, u, v: vv }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for j in 0..cols {
        for i in 0..rows {
            t[i * cols + j] = a[j * rows + i];
        }
    }
    t
}

pub fn svd(a: &[f64], rows: usize, cols: usize) -> Svd {
    assert_eq!(a.len(), rows * cols);
    if rows >= cols {
        hestenes(a.to_vec(), rows, cols)
    } else {
        let t = hestenes(transpose(a, rows, cols), cols, rows);
        Svd { rows, cols, s: t.s, u: t.v, v: t.u }
    }
}

/// Singular values (descending) of a column-major complex matrix, via the
/// real embedding `[[A, −B], [B, A]]` whose spectrum repeats each value twice.
pub fn complex_singular_values(a: &[Complex64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(a.len(), rows * cols);
    let (r2, c2) = (2 * rows, 2 * cols);
    let mut e = vec![0.0; r2 * c2];
    for j in 0..cols {
        for i in 0..rows {
            let z = a[j * rows + i];
            e[j * r2 + i] = z.re;
            e[j * r2 + rows + i] = z.im;
            e[(cols + j) * r2 + i] = -z.im;
            e[(cols + j) * r2 + rows + i] = z.re;
        }
    }
    let s = svd(&e, r2, c2).s;
    s.into_iter().step_by(2).collect()
}
