//! Lattice geometry, direction grids and the first-order symbol b(ξ).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

/// Integer coordinates of a dual lattice vector; unused trailing slots are zero.
pub type Idx = [i32; 3];

pub const MAX_DIM: usize = 3;

#[derive(Clone, Debug, Serialize)]
pub struct Lattice {
    pub d: usize,
    /// Columns are the primal basis vectors a_j.
    pub basis: DMatrix<f64>,
    /// Columns are the dual basis vectors b_j with ⟨b_l, a_j⟩ = 2π δ_lj.
    pub dual: DMatrix<f64>,
    pub cell_volume: f64,
    pub dual_cell_volume: f64,
    /// Radius of the ball inscribed in the Brillouin zone.
    pub r0: f64,
}

impl Lattice {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let d = basis.nrows();
        if d == 0 || d > MAX_DIM || basis.ncols() != d {
            return Err(Error::Shape(format!("lattice basis must be square with 1 <= d <= {MAX_DIM}")));
        }
        let det = basis.determinant();
        let scale = basis.norm().powi(d as i32);
        if det.abs() <= 1e-12 * scale {
            return Err(Error::SingularBasis);
        }
        let inv = basis.clone().try_inverse().ok_or(Error::SingularBasis)?;
        let dual = inv.transpose() * (2.0 * std::f64::consts::PI);
        let cell_volume = det.abs();
        let dual_cell_volume = (2.0 * std::f64::consts::PI).powi(d as i32) / cell_volume;
        let mut lat = Lattice { d, basis, dual, cell_volume, dual_cell_volume, r0: 0.0 };
        lat.r0 = 0.5 * lat.shortest_dual();
        Ok(lat)
    }

    /// Γ = (2π Z)^d.
    pub fn cubic(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * (2.0 * std::f64::consts::PI))
    }

    pub fn dual_vector(&self, k: &Idx) -> DVector<f64> {
        let mut v = DVector::zeros(self.d);
        for j in 0..self.d {
            v += self.dual.column(j) * k[j] as f64;
        }
        v
    }

    /// Smallest singular value of the dual basis; |Bk| ≥ σ|k|.
    fn dual_sigma_min(&self) -> f64 {
        let sv = self.dual.clone().svd(false, false).singular_values;
        sv.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// All index vectors with |b| ≤ radius, sorted by norm then lexicographically.
    pub fn dual_ball(&self, radius: f64) -> Vec<Idx> {
        let box_r = (radius / self.dual_sigma_min()).floor() as i32 + 1;
        let mut out: Vec<(f64, Idx)> = Vec::new();
        let r = |j: usize| if j < self.d { box_r } else { 0 };
        for a in -r(0)..=r(0) {
            for b in -r(1)..=r(1) {
                for c in -r(2)..=r(2) {
                    let k = [a, b, c];
                    let nrm = self.dual_vector(&k).norm();
                    if nrm <= radius * (1.0 + 1e-12) {
                        out.push((nrm, k));
                    }
                }
            }
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        out.into_iter().map(|(_, k)| k).collect()
    }

    fn shortest_dual(&self) -> f64 {
        let guess = (0..self.d).map(|j| self.dual.column(j).norm()).fold(f64::INFINITY, f64::min);
        self.dual_ball(guess)
            .iter()
            .filter(|k| **k != [0; 3])
            .map(|k| self.dual_vector(k).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// ⟨b, x⟩ for x = Σ s_j a_j given in cell coordinates s.
    pub fn phase(&self, k: &Idx, s: &[f64]) -> f64 {
        2.0 * std::f64::consts::PI * (0..self.d).map(|j| k[j] as f64 * s[j]).sum::<f64>()
    }
}

/// Unit directions: ±1 for d = 1, equally spaced angles for d = 2, a Fibonacci sphere for d = 3.
pub fn theta_grid(d: usize, count: usize) -> Vec<DVector<f64>> {
    match d {
        1 => vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])],
        2 => (0..count)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                DVector::from_vec(vec![phi.cos(), phi.sin()])
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * j as f64;
                    DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Symbol {
    /// The matrices b_l (m × n), one per coordinate direction.
    pub b: Vec<CMat>,
    pub alpha0: f64,
    pub alpha1: f64,
}

impl Symbol {
    /// Validates shapes and estimates the ellipticity bounds on a default direction sample.
    pub fn new(b: Vec<CMat>) -> Result<Self> {
        let d = b.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Shape("symbol needs 1 to 3 matrices".into()));
        }
        let (m, n) = b[0].shape();
        if b.iter().any(|x| x.shape() != (m, n)) {
            return Err(Error::Shape("symbol matrices differ in shape".into()));
        }
        if m < n {
            return Err(Error::Shape(format!("symbol is {m}×{n}; need m >= n")));
        }
        let mut s = Symbol { b, alpha0: 0.0, alpha1: 0.0 };
        let samples = match d {
            1 => 2,
            2 => 360,
            _ => 2000,
        };
        let (a0, a1) = s.estimate_bounds(samples)?;
        s.alpha0 = a0;
        s.alpha1 = a1;
        Ok(s)
    }

    /// b(D) = D: n = 1, m = d.
    pub fn gradient(d: usize) -> Result<Self> {
        let b = (0..d)
            .map(|l| {
                let mut e = linalg::zeros(d, 1);
                e[(l, 0)] = C64::new(1.0, 0.0);
                e
            })
            .collect();
        Self::new(b)
    }

    pub fn d(&self) -> usize {
        self.b.len()
    }
    pub fn m(&self) -> usize {
        self.b[0].nrows()
    }
    pub fn n(&self) -> usize {
        self.b[0].ncols()
    }

    /// b(ξ) = Σ ξ_l b_l.
    pub fn at(&self, xi: &[f64]) -> CMat {
        let mut out = linalg::zeros(self.m(), self.n());
        for (l, bl) in self.b.iter().enumerate() {
            if xi[l] != 0.0 {
                out += bl.scale(xi[l]);
            }
        }
        out
    }

    /// (α0, α1) as extreme eigenvalues of b(θ)*b(θ) over the direction sample.
    pub fn estimate_bounds(&self, samples: usize) -> Result<(f64, f64)> {
        let d = self.d();
        let count = samples.max(2 * d);
        let (mut a0, mut a1) = (f64::INFINITY, 0.0f64);
        for th in theta_grid(d, count) {
            let bt = self.at(th.as_slice());
            let e = linalg::herm_eig(&(bt.adjoint() * &bt)).values;
            a0 = a0.min(e[0]);
            a1 = a1.max(e[e.len() - 1]);
        }
        if a0 <= 1e-12 * a1.max(1.0) {
            return Err(Error::RankDeficientSymbol { alpha0: a0 });
        }
        Ok((a0, a1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_lattice() {
        let l = Lattice::cubic(1).unwrap();
        assert!((l.dual[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((l.r0 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn square_lattice_and_biorthogonality() {
        let l = Lattice::cubic(2).unwrap();
        assert!((l.r0 - 0.5).abs() < 1e-14);
        let prod = l.dual.transpose() * &l.basis;
        assert!((prod - DMatrix::identity(2, 2) * (2.0 * PI)).norm() < 1e-12);
        assert!((l.cell_volume * l.dual_cell_volume - (2.0 * PI).powi(2)).abs() < 1e-10);
    }

    #[test]
    fn hexagonal_r0_matches_enumeration() {
        let basis = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.5, 3f64.sqrt() / 2.0]);
        let l = Lattice::new(basis).unwrap();
        let mut best = f64::INFINITY;
        for a in -5..=5 {
            for b in -5..=5 {
                if (a, b) != (0, 0) {
                    best = best.min(l.dual_vector(&[a, b, 0]).norm());
                }
            }
        }
        assert!((l.r0 - best / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dual_ball_symmetric() {
        let l = Lattice::new(DMatrix::from_column_slice(2, 2, &[1.0, 0.2, -0.3, 1.4])).unwrap();
        let ball = l.dual_ball(20.0);
        for k in &ball {
            assert!(ball.contains(&[-k[0], -k[1], -k[2]]));
        }
    }

    #[test]
    fn singular_basis_rejected() {
        let b = DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Lattice::new(b), Err(Error::SingularBasis)));
    }

    #[test]
    fn gradient_symbol_bounds() {
        let s = Symbol::gradient(2).unwrap();
        assert!((s.alpha0 - 1.0).abs() < 1e-12 && (s.alpha1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_direction_rejected() {
        let b1 = linalg::from_real(2, 1, &[1.0, 0.0]);
        let b2 = linalg::zeros(2, 1);
        assert!(matches!(Symbol::new(vec![b1, b2]), Err(Error::RankDeficientSymbol { .. })));
    }
}
