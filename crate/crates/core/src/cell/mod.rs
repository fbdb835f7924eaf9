//! Plane-wave Galerkin discretization of the fiber operators and the cell problems.

mod correctors;
mod fiber;

use std::collections::{BTreeSet, HashMap, VecDeque};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::lattice::{Idx, Lattice, Symbol};
use crate::linalg::{self, CMat};

pub use correctors::{CorrectorSet, ModeArrays, VoigtReuss};
pub use fiber::{Discretization, FiberMatrix, Variant};

/// Default cutoff radius as a multiple of the coefficient bandwidth.
pub const DEFAULT_CUTOFF_FACTOR: f64 = 8.0;

/// b(D)* g b(D), optionally bordered by a weight f: f* b(D)* g b(D) f.
#[derive(Clone, Debug)]
pub struct PeriodicOperator {
    pub lattice: Lattice,
    pub symbol: Symbol,
    /// m × m, Hermitian positive definite.
    pub g: PeriodicField,
    /// n × n weight; `None` means f = 1.
    pub f: Option<PeriodicField>,
    /// Pointwise inverse of f, grid-inverted and re-truncated.
    pub f_inv: Option<PeriodicField>,
    /// Q = (f f*)⁻¹, grid-inverted and re-truncated.
    pub q: Option<PeriodicField>,
}

impl PeriodicOperator {
    pub fn new(lattice: Lattice, symbol: Symbol, g: PeriodicField, f: Option<PeriodicField>) -> Result<Self> {
        let (d, m, n) = (lattice.d, symbol.m(), symbol.n());
        if symbol.d() != d || g.d != d {
            return Err(Error::Shape(format!("dimension mismatch: lattice {d}, symbol {}, g {}", symbol.d(), g.d)));
        }
        if g.rows_cols() != (m, m) {
            return Err(Error::Shape(format!("g is {:?}, expected {m}×{m}", g.rows_cols())));
        }
        if g.hermitian_defect() > 1e-12 * (1.0 + g.mean().norm()) {
            return Err(Error::Shape("g is not Hermitian-valued".into()));
        }
        if !(g.min_pointwise(g.inverse_grid()) > 0.0) {
            return Err(Error::SingularPointValue);
        }
        let (f_inv, q) = match &f {
            Some(f) => {
                if f.rows_cols() != (n, n) || f.d != d {
                    return Err(Error::Shape(format!("f is {:?}, expected {n}×{n}", f.rows_cols())));
                }
                let f_inv = f.inverse_field()?;
                let grid = f.inverse_grid();
                let trunc = crate::field::INVERSE_TRUNCATION.min((grid / 2) as i32 - 1);
                let q = f.map_pointwise(grid, trunc, |v| (v * v.adjoint()).try_inverse())?;
                (Some(f_inv), Some(q))
            }
            None => (None, None),
        };
        Ok(PeriodicOperator { lattice, symbol, g, f, f_inv, q })
    }

    pub fn d(&self) -> usize {
        self.lattice.d
    }
    pub fn m(&self) -> usize {
        self.symbol.m()
    }
    pub fn n(&self) -> usize {
        self.symbol.n()
    }
    pub fn weighted(&self) -> bool {
        self.f.is_some()
    }

    fn fields(&self) -> Vec<&PeriodicField> {
        let mut v = vec![&self.g];
        v.extend(self.f.iter());
        v.extend(self.f_inv.iter());
        v.extend(self.q.iter());
        v
    }

    /// Largest |b| over the Fourier supports of g and f.
    pub fn bandwidth_radius(&self) -> f64 {
        std::iter::once(&self.g)
            .chain(self.f.iter())
            .flat_map(|f| f.coeffs.keys())
            .map(|k| self.lattice.dual_vector(k).norm())
            .fold(0.0, f64::max)
    }

    /// 8 × bandwidth, or 8 × the shortest dual vector for constant coefficients.
    pub fn default_cutoff(&self) -> f64 {
        let bw = self.bandwidth_radius();
        DEFAULT_CUTOFF_FACTOR * if bw > 0.0 { bw } else { 2.0 * self.lattice.r0 }
    }

    /// Q̄, the identity when f = 1.
    pub fn q_bar(&self) -> CMat {
        self.q.as_ref().map(|q| linalg::hermitian_part(&q.mean())).unwrap_or_else(|| linalg::eye(self.n()))
    }

    /// c_* = α0 ‖f⁻¹‖⁻²_∞ ‖g⁻¹‖⁻¹_∞ on the sampling grid.
    pub fn c_star(&self) -> f64 {
        let g_inv_sup = 1.0 / self.g.min_pointwise(self.g.inverse_grid());
        let f_inv_sup = self.f_inv.as_ref().map(|fi| fi.sup_norm(fi.inverse_grid())).unwrap_or(1.0);
        self.symbol.alpha0 / (f_inv_sup * f_inv_sup * g_inv_sup)
    }
}

fn add(a: &Idx, b: &Idx) -> Idx {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: &Idx, b: &Idx) -> Idx {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Dual lattice vectors with |b| ≤ cutoff, split into blocks that the
/// coefficients never couple.
#[derive(Clone, Debug)]
pub struct ModeSet {
    pub cutoff: f64,
    pub idx: Vec<Idx>,
    pub vecs: Vec<DVector<f64>>,
    pub zero: usize,
    /// Index lists into `idx`; the block containing the zero mode comes first.
    pub components: Vec<Vec<usize>>,
    lookup: HashMap<Idx, usize>,
}

impl ModeSet {
    pub fn new(op: &PeriodicOperator, cutoff: f64) -> Self {
        let idx = op.lattice.dual_ball(cutoff);
        let vecs = idx.iter().map(|k| op.lattice.dual_vector(k)).collect();
        let lookup: HashMap<Idx, usize> = idx.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let zero = lookup[&[0; 3]];
        let offsets: BTreeSet<Idx> =
            op.fields().iter().flat_map(|f| f.coeffs.keys().copied()).filter(|k| *k != [0; 3]).collect();
        let mut label = vec![usize::MAX; idx.len()];
        let mut components = Vec::new();
        let order = std::iter::once(zero).chain(0..idx.len());
        for start in order {
            if label[start] != usize::MAX {
                continue;
            }
            let c = components.len();
            let mut members = vec![start];
            label[start] = c;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                for o in &offsets {
                    if let Some(&j) = lookup.get(&add(&idx[i], o)) {
                        if label[j] == usize::MAX {
                            label[j] = c;
                            members.push(j);
                            queue.push_back(j);
                        }
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        ModeSet { cutoff, idx, vecs, zero, components, lookup }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn position(&self, k: &Idx) -> Option<usize> {
        self.lookup.get(k).copied()
    }

    /// Is every mode's negative present.
    pub fn is_symmetric(&self) -> bool {
        self.idx.iter().all(|k| self.lookup.contains_key(&[-k[0], -k[1], -k[2]]))
    }

    /// Block (i, j) = φ̂ at b_i − b_j over the listed modes.
    pub fn conv(&self, field: &PeriodicField, modes: &[usize]) -> CMat {
        let (r, c) = field.rows_cols();
        let mut out = linalg::zeros(r * modes.len(), c * modes.len());
        for (i, &mi) in modes.iter().enumerate() {
            for (j, &mj) in modes.iter().enumerate() {
                if let Some(v) = field.coeff(&sub(&self.idx[mi], &self.idx[mj])) {
                    out.view_mut((i * r, j * c), (r, c)).copy_from(v);
                }
            }
        }
        out
    }

    /// Block diagonal of b(b + k) over the listed modes.
    pub fn symbol_blocks(&self, symbol: &Symbol, k: &[f64], modes: &[usize]) -> CMat {
        let (m, n) = (symbol.m(), symbol.n());
        let mut out = linalg::zeros(m * modes.len(), n * modes.len());
        for (i, &mi) in modes.iter().enumerate() {
            let xi: Vec<f64> = self.vecs[mi].iter().zip(k).map(|(b, k)| b + k).collect();
            out.view_mut((i * m, i * n), (m, n)).copy_from(&symbol.at(&xi));
        }
        out
    }

    /// Block diagonal with the constant block `a` repeated over `count` modes.
    pub fn repeat(a: &CMat, count: usize) -> CMat {
        let (r, c) = a.shape();
        let mut out = linalg::zeros(r * count, c * count);
        for i in 0..count {
            out.view_mut((i * r, i * c), (r, c)).copy_from(a);
        }
        out
    }

    /// Position of the zero mode inside the first component.
    pub fn zero_local(&self) -> usize {
        self.components[0].iter().position(|&i| i == self.zero).expect("zero mode in first component")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::re;

    fn scalar_1d() -> PeriodicOperator {
        let g = PeriodicField::from_fn(1, 1, 1, 16, |s| {
            CMat::from_element(1, 1, re(2.0 + (2.0 * std::f64::consts::PI * s[0]).cos()))
        });
        PeriodicOperator::new(Lattice::cubic(1).unwrap(), Symbol::gradient(1).unwrap(), g, None).unwrap()
    }

    #[test]
    fn mode_set_symmetric_with_zero() {
        let op = scalar_1d();
        let ms = ModeSet::new(&op, 5.0);
        assert_eq!(ms.len(), 11);
        assert!(ms.is_symmetric());
        assert_eq!(ms.idx[ms.zero], [0; 3]);
        assert_eq!(ms.components.len(), 1);
    }

    #[test]
    fn one_dimensional_coupling_splits_square_lattice() {
        let g = PeriodicField::from_fn(2, 2, 2, 8, |s| {
            linalg::eye(2) * re(2.0 + (2.0 * std::f64::consts::PI * s[0]).cos())
        });
        let op = PeriodicOperator::new(Lattice::cubic(2).unwrap(), Symbol::gradient(2).unwrap(), g, None).unwrap();
        let ms = ModeSet::new(&op, 3.0);
        assert_eq!(ms.components.len(), 7);
        assert!(ms.components[0].iter().all(|&i| ms.idx[i][1] == 0));
        let total: usize = ms.components.iter().map(|c| c.len()).sum();
        assert_eq!(total, ms.len());
    }

    #[test]
    fn c_star_of_scalar_example() {
        assert!((scalar_1d().c_star() - 1.0).abs() < 1e-12);
    }
}
