//! Small dense linear algebra on `Vec<T>` for the low dimensions used here.

use crate::scalar::Real;

pub type Mat<T> = Vec<Vec<T>>;

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn scale<T: Real>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

pub fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub fn identity<T: Real>(n: usize) -> Mat<T> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect()
}

pub fn mat_vec<T: Real>(m: &Mat<T>, v: &[T]) -> Vec<T> {
    m.iter().map(|row| dot(row, v)).collect()
}

pub fn mat_t_vec<T: Real>(m: &Mat<T>, v: &[T]) -> Vec<T> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| m.iter().zip(v).map(|(row, &vi)| row[j] * vi).sum())
        .collect()
}

pub fn quad_form<T: Real>(m: &Mat<T>, v: &[T]) -> T {
    dot(v, &mat_vec(m, v))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `tol` times the largest entry.
pub fn solve<T: Real>(a: &Mat<T>, b: &[T], tol: T) -> Option<Vec<T>> {
    let n = b.len();
    let mut m: Mat<T> = a.clone();
    let mut x = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |s, &v| s.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| {
            m[i][k]
                .abs()
                .partial_cmp(&m[j][k].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[piv][k].abs() <= tol * scale {
            return None;
        }
        m.swap(k, piv);
        x.swap(k, piv);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                let v = m[k][j];
                m[i][j] -= f * v;
            }
            let v = x[k];
            x[i] -= f * v;
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[k][j] * x[j];
        }
        x[k] = s / m[k][k];
    }
    Some(x)
}

/// Eigenvalues (ascending) and column eigenvectors of a symmetric matrix by
/// cyclic Jacobi rotations.
pub fn sym_eigen<T: Real>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    let n = a.len();
    let mut m = a.clone();
    let mut v = identity::<T>(n);
    let eps = T::epsilon();
    for _ in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let diag: T = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= eps * eps * (diag + off) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == T::zero() {
                    continue;
                }
                let two = T::one() + T::one();
                let theta = (m[q][q] - m[p][p]) / (two * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = idx.iter().map(|&i| m[i][i]).collect();
    let vecs = (0..n).map(|r| idx.iter().map(|&i| v[r][i]).collect()).collect();
    (vals, vecs)
}

/// Orthonormalizes `vs` in order, dropping vectors whose residual norm is
/// below `tol`.
pub fn gram_schmidt<T: Real>(vs: &[Vec<T>], tol: T) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for e in &out {
                let c = dot(&w, e);
                axpy(-c, e, &mut w);
            }
        }
        let nw = norm(&w);
        if nw > tol {
            out.push(scale(&w, nw.recip()));
        }
    }
    out
}

/// Orthonormal basis of the null space of the row space spanned by `rows`
/// inside `R^dim`.
pub fn null_space<T: Real>(rows: &[Vec<T>], dim: usize, tol: T) -> Vec<Vec<T>> {
    let row_basis = gram_schmidt(rows, tol);
    let mut cands = row_basis.clone();
    cands.extend((0..dim).map(|i| {
        let mut e = vec![T::zero(); dim];
        e[i] = T::one();
        e
    }));
    let all = gram_schmidt(&cands, tol);
    all[row_basis.len()..].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_known_solution() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]];
        let x = vec![1.0, -2.0, 0.5];
        let b = mat_vec(&a, &x);
        let y = solve(&a, &b, 1e-14).unwrap();
        assert!(max_abs(&sub(&x, &y)) < 1e-14);
    }

    #[test]
    fn eigen_of_symmetric_matrix() {
        let a: Mat<f64> = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (vals, vecs) = sym_eigen(&a);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let col: Vec<f64> = vecs.iter().map(|r| r[1]).collect();
        assert!((col[0] - col[1]).abs() < 1e-12);
    }

    #[test]
    fn null_space_is_orthogonal_to_rows() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 1.0, 0.0, 0.0]];
        let ns = null_space(&rows, 4, 1e-12);
        assert_eq!(ns.len(), 3);
        for v in &ns {
            assert!(dot(v, &rows[0]).abs() < 1e-14);
        }
    }
}
