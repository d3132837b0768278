use super::{DenseMatrix, Scalar};
use crate::error::{Error, Result};

/// Absolute tolerance on `max |A − Aᵀ|` for routines that require symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

const PIVOT_REL_TOL: f64 = 1e-12;
const PSD_REL_TOL: f64 = 1e-10;

fn check_symmetric<T: Scalar>(a: &DenseMatrix<T>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows(), found: a.cols() });
    }
    let asymmetry = a.values().max_asymmetry();
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NonSymmetric { asymmetry });
    }
    Ok(())
}

/// Lower Cholesky factor `L` with `L·Lᵀ = A`.
///
/// Only the lower triangle of `A` is read. A pivot at or below `1e-12` times
/// the largest diagonal entry is treated as loss of definiteness.
pub fn cholesky<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_symmetric(a)?;
    let n = a.rows();
    let max_diag = a.diag().iter().fold(0.0_f64, |m, d| m.max(d.value()));
    let threshold = PIVOT_REL_TOL * max_diag;
    let mut l = DenseMatrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            let ljk = l[(j, k)];
            pivot -= ljk * ljk;
        }
        if !(pivot.value() > threshold) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: pivot.value() });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// `log det A` for symmetric positive definite `A`, as `2·Σ log L_ii`.
pub fn logdet_pd<T: Scalar>(a: &DenseMatrix<T>) -> Result<T> {
    let l = cholesky(a)?;
    let mut acc = T::zero();
    for i in 0..l.rows() {
        acc += l[(i, i)].ln();
    }
    Ok(acc.scale(2.0))
}

/// Solves `L·x = b` for lower-triangular `L`.
pub fn solve_lower<T: Scalar>(l: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    assert_eq!(b.len(), n, "solve_lower dimension");
    let mut x = b.to_vec();
    for i in 0..n {
        let row = l.row(i);
        let mut s = x[i];
        for k in 0..i {
            s -= row[k] * x[k];
        }
        x[i] = s / row[i];
    }
    x
}

/// Solves `Lᵀ·x = y` given the lower-triangular `L`.
pub fn solve_upper_from_lower<T: Scalar>(l: &DenseMatrix<T>, y: &[T]) -> Vec<T> {
    let n = l.rows();
    assert_eq!(y.len(), n, "solve_upper dimension");
    let mut x = y.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `A·x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &DenseMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    Ok(solve_upper_from_lower(&l, &solve_lower(&l, b)))
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DenseMatrix<f64>,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `Q·diag(f(λ))·Qᵀ`, symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix<f64> {
        let n = self.values.len();
        let q = &self.vectors;
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += q[(i, k)] * fl[k] * q[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Symmetric eigensolver by cyclic Jacobi rotations.
pub fn sym_eigen(a: &DenseMatrix<f64>) -> Result<SymEigen> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut m = a.clone();
    // Work on the exactly symmetrized input.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    let mut q = DenseMatrix::<f64>::identity(n);
    let scale = a.frobenius();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = m[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let theta = (m[(r, r)] - m[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkr = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkr;
                    m[(k, r)] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mrk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mrk;
                    m[(r, k)] = s * mpk + c * mrk;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = q[(k, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues that are
/// negative only within tolerance are clamped to zero.
pub fn sqrt_psd(a: &DenseMatrix<f64>) -> Result<DenseMatrix<f64>> {
    let eig = sym_eigen(a)?;
    let min = eig.min();
    if min < -PSD_REL_TOL * a.frobenius().max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}
