//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Frobenius norm of the anti-Hermitian part relative to the matrix norm.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let s = a.norm().max(f64::MIN_POSITIVE);
    (a - a.adjoint()).norm() / s
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn herm_eig(a: &CMat) -> HermEig {
    let n = a.nrows();
    if n == 0 {
        return HermEig { values: vec![], vectors: zeros(0, 0) };
    }
    let e = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let values = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &e.eigenvectors.column(i));
    }
    HermEig { values, vectors }
}

impl HermEig {
    /// V f(Λ) V*.
    pub fn apply<F: Fn(f64) -> C64>(&self, f: F) -> CMat {
        let mut scaled = self.vectors.clone();
        for (k, &l) in self.values.iter().enumerate() {
            let c = f(l);
            scaled.column_mut(k).scale_mut_c(c);
        }
        scaled * self.vectors.adjoint()
    }

    /// e^{-i s A}.
    pub fn propagator(&self, s: f64) -> CMat {
        self.apply(|l| C64::from_polar(1.0, -s * l))
    }

    pub fn columns(&self, range: std::ops::Range<usize>) -> CMat {
        self.vectors.columns(range.start, range.len()).into_owned()
    }
}

trait ScaleC {
    fn scale_mut_c(&mut self, c: C64);
}

impl<S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>> ScaleC
    for nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>
{
    fn scale_mut_c(&mut self, c: C64) {
        for x in self.iter_mut() {
            *x *= c;
        }
    }
}

pub fn spectral_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn min_eig(a: &CMat) -> f64 {
    herm_eig(a).values.first().copied().unwrap_or(0.0)
}

pub fn max_eig(a: &CMat) -> f64 {
    herm_eig(a).values.last().copied().unwrap_or(0.0)
}

/// Orthogonal projector V V* onto the span of orthonormal columns.
pub fn projector(v: &CMat) -> CMat {
    v * v.adjoint()
}

/// Split a Hermitian positive semidefinite matrix into kernel and range.
#[derive(Clone, Debug)]
pub struct KernelSplit {
    pub kernel: CMat,
    pub range: CMat,
    pub range_values: Vec<f64>,
    pub kernel_values: Vec<f64>,
}

impl KernelSplit {
    pub fn new(a: &CMat, rel_tol: f64) -> Self {
        let e = herm_eig(a);
        let scale = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let k = e.values.iter().take_while(|&&v| v <= rel_tol * scale).count();
        let n = e.values.len();
        KernelSplit {
            kernel: e.columns(0..k),
            range: e.columns(k..n),
            range_values: e.values[k..].to_vec(),
            kernel_values: e.values[..k].to_vec(),
        }
    }

    /// Moore-Penrose inverse of the split matrix.
    pub fn pinv(&self) -> CMat {
        let mut w = self.range.clone();
        for (k, &l) in self.range_values.iter().enumerate() {
            w.column_mut(k).scale_mut_c(re(1.0 / l));
        }
        w * self.range.adjoint()
    }

    pub fn gap(&self) -> f64 {
        self.range_values.first().copied().unwrap_or(f64::INFINITY)
    }
}

/// A^{-1/2} for Hermitian positive definite A.
pub fn inv_sqrt(a: &CMat) -> CMat {
    herm_eig(a).apply(|l| re(1.0 / l.sqrt()))
}

pub fn sqrt_psd(a: &CMat) -> CMat {
    herm_eig(a).apply(|l| re(l.max(0.0).sqrt()))
}

pub fn inverse(a: &CMat, what: &str) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::SolveFailure { what: what.into(), residual: f64::INFINITY })
}

/// Solve A X = B for Hermitian positive definite A, checking the residual.
pub fn solve_hpd(a: &CMat, b: &CMat, what: &str) -> Result<CMat> {
    let chol = nalgebra::Cholesky::new(hermitian_part(a))
        .ok_or_else(|| Error::SolveFailure { what: what.into(), residual: f64::INFINITY })?;
    let x = chol.solve(b);
    let residual = (a * &x - b).norm() / b.norm().max(f64::MIN_POSITIVE);
    if !(residual < 1e-9) {
        return Err(Error::SolveFailure { what: what.into(), residual });
    }
    Ok(x)
}

/// Solve a general square system via LU.
pub fn solve(a: &CMat, b: &CMat, what: &str) -> Result<CMat> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SolveFailure { what: what.into(), residual: f64::INFINITY })?;
    Ok(x)
}

/// Largest |<u, v>| over columns v of `basis`, with the index.
pub fn best_overlap(u: &CVec, basis: &CMat) -> (usize, f64) {
    let mut best = (0, -1.0);
    for j in 0..basis.ncols() {
        let o = basis.column(j).dotc(u).norm();
        if o > best.1 {
            best = (j, o);
        }
    }
    best
}

pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data.iter().map(|&x| re(x)))
}

/// Least-squares solve for an overdetermined real system via SVD.
pub fn lstsq_real(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("svd with both factors")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_is_sorted_and_reconstructs() {
        let a = from_real(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, -1.0]);
        let e = herm_eig(&a);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let back = e.apply(re);
        assert!((back - a).norm() < 1e-12);
    }

    #[test]
    fn propagator_is_unitary() {
        let mut a = from_real(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        a[(0, 1)] = C64::new(0.3, 0.7);
        a[(1, 0)] = C64::new(0.3, -0.7);
        let u = herm_eig(&a).propagator(5.0);
        assert!((u.adjoint() * &u - eye(2)).norm() < 1e-12);
    }

    #[test]
    fn kernel_split_pinv() {
        let a = from_real(3, 3, &[0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 4.0]);
        let s = KernelSplit::new(&a, 1e-12);
        assert_eq!(s.kernel.ncols(), 1);
        assert!((s.gap() - 2.0).abs() < 1e-14);
        assert!((s.pinv()[(2, 2)].re - 0.25).abs() < 1e-14);
    }
}
