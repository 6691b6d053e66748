//! Small dense linear algebra: Cholesky, exact-capable Gaussian elimination
//! and symmetric eigensolvers.
//!
//! Two eigensolvers are provided. [`symmetric_eigen`] (Householder
//! tridiagonalisation followed by implicit QL) is the default;
//! [`jacobi_eigen`] (cyclic Jacobi) is slower but simple enough to serve as an
//! independent check.

use num_traits::{Num, Signed};

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Matrix::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.n;
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) {
            return Err(Error::Consistency(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// Solve `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.n;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l.get(i, k) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l.get(k, i) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    y
}

/// Solve `A X = B` by Gaussian elimination with largest-magnitude pivoting.
///
/// Works over `f64` and over exact rationals; `a` is `n × n`, `b` is `n × k`.
pub fn gauss_solve<T>(mut a: Vec<Vec<T>>, mut b: Vec<Vec<T>>) -> Result<Vec<Vec<T>>>
where
    T: Num + Signed + Clone + PartialOrd,
{
    let n = a.len();
    if b.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::domain("gauss_solve: dimension mismatch"));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty range");
        if a[pivot][col].is_zero() {
            return Err(Error::Consistency(format!(
                "singular system at column {col}"
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone() / a[col][col].clone();
            for k in col..n {
                let t = factor.clone() * a[col][k].clone();
                a[row][k] = a[row][k].clone() - t;
            }
            for k in 0..b[row].len() {
                let t = factor.clone() * b[col][k].clone();
                b[row][k] = b[row][k].clone() - t;
            }
        }
    }
    for col in (0..n).rev() {
        for k in 0..b[col].len() {
            let mut s = b[col][k].clone();
            for j in col + 1..n {
                s = s - a[col][j].clone() * b[j][k].clone();
            }
            b[col][k] = s / a[col][col].clone();
        }
    }
    Ok(b)
}

/// Eigenvalues in ascending order, with unit eigenvectors if requested.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` belongs to `values[k]`.
    pub vectors: Option<Vec<Vec<f64>>>,
}

fn sort_pairs(values: Vec<f64>, vectors: Option<Vec<Vec<f64>>>) -> SymEigen {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    SymEigen {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: vectors.map(|v| order.iter().map(|&i| v[i].clone()).collect()),
    }
}

/// Householder reduction to tridiagonal form followed by implicit QL.
pub fn symmetric_eigen(a: &Matrix, want_vectors: bool) -> Result<SymEigen> {
    let n = a.n;
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: want_vectors.then(Vec::new),
        });
    }
    // the routines below work on the transpose so that their inner loops,
    // which run down columns, read contiguous memory
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e, want_vectors)?;
    let vectors = want_vectors.then(|| {
        (0..n)
            .map(|k| (0..n).map(|i| v.get(k, i)).collect())
            .collect()
    });
    Ok(sort_pairs(d, vectors))
}

fn tred2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = v.n;
    for j in 0..n {
        d[j] = v.get(j, n - 1);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.get(j, i - 1);
                v.set(j, i, 0.0);
                v.set(i, j, 0.0);
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for x in e.iter_mut().take(i) {
                *x = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v.set(i, j, f);
                g = e[j] + v.get(j, j) * f;
                for k in j + 1..i {
                    g += v.get(j, k) * d[k];
                    e[k] += v.get(j, k) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v.add(j, k, -(f * e[k] + g * d[k]));
                }
                d[j] = v.get(j, i - 1);
                v.set(j, i, 0.0);
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v.set(i, n - 1, v.get(i, i));
        v.set(i, i, 1.0);
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v.get(i + 1, k) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v.get(i + 1, k) * v.get(j, k);
                }
                for k in 0..=i {
                    v.add(j, k, -g * d[k]);
                }
            }
        }
        for k in 0..=i {
            v.set(i + 1, k, 0.0);
        }
    }
    for j in 0..n {
        d[j] = v.get(j, n - 1);
        v.set(j, n - 1, 0.0);
    }
    v.set(n - 1, n - 1, 1.0);
    e[0] = 0.0;
}

fn tql2(v: &mut Matrix, d: &mut [f64], e: &mut [f64], want_vectors: bool) -> Result<()> {
    let n = v.n;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Consistency(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d.iter_mut().skip(l + 2) {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if want_vectors {
                        for k in 0..n {
                            let h = v.get(i + 1, k);
                            v.set(i + 1, k, s * v.get(i, k) + c * h);
                            v.set(i, k, c * v.get(i, k) - s * h);
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Cyclic Jacobi rotations until the off-diagonal mass falls below
/// `tol * ‖A‖_F`.
pub fn jacobi_eigen(a: &Matrix, tol: f64, max_sweeps: usize) -> Result<SymEigen> {
    let n = a.n;
    let mut m = a.clone();
    let mut v = Matrix::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let frob = m.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() <= tol * frob.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::Consistency(format!(
            "Jacobi did not converge in {max_sweeps} sweeps"
        )));
    }
    let values = (0..n).map(|i| m.get(i, i)).collect();
    let vectors = (0..n)
        .map(|k| (0..n).map(|i| v.get(i, k)).collect())
        .collect();
    Ok(sort_pairs(values, Some(vectors)))
}
