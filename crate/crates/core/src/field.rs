//! Band-limited periodic matrix fields stored by their Fourier coefficients.
//!
//! A field is φ(x) = Σ_k φ̂_k e^{i⟨b_k, x⟩} with b_k = Σ k_j b_j. Grid samples
//! are taken at x = Σ (i_j / N) a_j, so the phase is 2π k·i / N and sampling
//! reduces to a d-dimensional discrete Fourier transform.

use std::collections::BTreeMap;

use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Idx;
use crate::linalg::{self, CMat, C64};

/// Grid points per axis used for pointwise inversion.
pub const INVERSE_GRID: usize = 64;
/// Index box |k_j| ≤ this for re-truncated inverse fields.
pub const INVERSE_TRUNCATION: i32 = 24;
/// Coefficients below this fraction of the largest one are dropped.
const DROP_REL: f64 = 1e-15;

#[derive(Clone, Debug, Default, Serialize)]
pub struct FieldFlags {
    pub hermitian_valued: bool,
    pub positive_definite: bool,
    pub invertible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicField {
    pub d: usize,
    pub rows: usize,
    pub cols: usize,
    pub coeffs: BTreeMap<Idx, CMat>,
    /// Largest dropped coefficient norm when the field was re-truncated from a grid.
    pub truncation_residual: f64,
}

fn neg(k: &Idx) -> Idx {
    [-k[0], -k[1], -k[2]]
}

fn grid_len(n: usize, d: usize) -> usize {
    n.pow(d as u32)
}

/// Multi-index of a flat grid position (axis 0 slowest).
fn unflatten(mut p: usize, n: usize, d: usize) -> [usize; 3] {
    let mut out = [0; 3];
    for a in (0..d).rev() {
        out[a] = p % n;
        p /= n;
    }
    out
}

fn flatten(i: &[usize; 3], n: usize, d: usize) -> usize {
    (0..d).fold(0, |acc, a| acc * n + i[a])
}

fn fft_nd(data: &mut [C64], n: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![C64::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        for base in 0..data.len() {
            if (base / stride) % n != 0 {
                continue;
            }
            for (j, x) in line.iter_mut().enumerate() {
                *x = data[base + j * stride];
            }
            fft.process(&mut line);
            for (j, x) in line.iter().enumerate() {
                data[base + j * stride] = *x;
            }
        }
    }
}

impl PeriodicField {
    pub fn constant(d: usize, value: CMat) -> Self {
        let (rows, cols) = value.shape();
        let mut coeffs = BTreeMap::new();
        coeffs.insert([0; 3], value);
        PeriodicField { d, rows, cols, coeffs, truncation_residual: 0.0 }
    }

    pub fn from_coeffs(d: usize, rows: usize, cols: usize, coeffs: BTreeMap<Idx, CMat>) -> Result<Self> {
        for (k, c) in &coeffs {
            if c.shape() != (rows, cols) {
                return Err(Error::Shape(format!("coefficient {k:?} is {:?}, expected {rows}×{cols}", c.shape())));
            }
            if k[d..].iter().any(|&x| x != 0) {
                return Err(Error::Shape(format!("index {k:?} exceeds dimension {d}")));
            }
        }
        Ok(PeriodicField { d, rows, cols, coeffs, truncation_residual: 0.0 })
    }

    /// Fourier data of a function given on cell coordinates s ∈ [0,1)^d; exact for
    /// trigonometric polynomials of index bandwidth below n/2.
    pub fn from_fn<F: Fn(&[f64]) -> CMat>(d: usize, rows: usize, cols: usize, n: usize, f: F) -> Self {
        let samples: Vec<CMat> = (0..grid_len(n, d))
            .map(|p| {
                let i = unflatten(p, n, d);
                let s: Vec<f64> = (0..d).map(|a| i[a] as f64 / n as f64).collect();
                f(&s)
            })
            .collect();
        Self::from_samples(d, rows, cols, n, &samples, (n / 2) as i32 - 1)
    }

    pub fn rows_cols(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn coeff(&self, k: &Idx) -> Option<&CMat> {
        self.coeffs.get(k)
    }

    pub fn mean(&self) -> CMat {
        self.coeffs.get(&[0; 3]).cloned().unwrap_or_else(|| linalg::zeros(self.rows, self.cols))
    }

    /// Largest |k_j| among stored coefficients.
    pub fn bandwidth(&self) -> i32 {
        self.coeffs.keys().flat_map(|k| k.iter().map(|x| x.abs())).max().unwrap_or(0)
    }

    pub fn support(&self) -> Vec<Idx> {
        self.coeffs.keys().copied().collect()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.keys().all(|k| *k == [0; 3])
    }

    /// Grid samples in flat order (axis 0 slowest).
    pub fn sample(&self, n: usize) -> Vec<CMat> {
        let len = grid_len(n, self.d);
        let mut out = vec![linalg::zeros(self.rows, self.cols); len];
        let mut buf = vec![C64::new(0.0, 0.0); len];
        for r in 0..self.rows {
            for c in 0..self.cols {
                buf.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
                for (k, v) in &self.coeffs {
                    let mut i = [0usize; 3];
                    for a in 0..self.d {
                        i[a] = k[a].rem_euclid(n as i32) as usize;
                    }
                    buf[flatten(&i, n, self.d)] += v[(r, c)];
                }
                fft_nd(&mut buf, n, self.d, true);
                for (p, x) in buf.iter().enumerate() {
                    out[p][(r, c)] = *x;
                }
            }
        }
        out
    }

    /// Value at cell coordinates s.
    pub fn eval(&self, s: &[f64]) -> CMat {
        let mut out = linalg::zeros(self.rows, self.cols);
        for (k, v) in &self.coeffs {
            let ph = 2.0 * std::f64::consts::PI * (0..self.d).map(|j| k[j] as f64 * s[j]).sum::<f64>();
            out += v * C64::from_polar(1.0, ph);
        }
        out
    }

    /// Coefficients with |k_j| ≤ trunc from grid samples; the largest dropped coefficient is recorded.
    pub fn from_samples(d: usize, rows: usize, cols: usize, n: usize, samples: &[CMat], trunc: i32) -> Self {
        let len = grid_len(n, d);
        let half = (n / 2) as i32;
        let mut coeffs: BTreeMap<Idx, CMat> = BTreeMap::new();
        let mut residual = 0.0f64;
        let mut buf = vec![C64::new(0.0, 0.0); len];
        let scale = 1.0 / len as f64;
        let mut kept: Vec<(Idx, usize, usize, C64)> = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                for (p, x) in buf.iter_mut().enumerate() {
                    *x = samples[p][(r, c)];
                }
                fft_nd(&mut buf, n, d, false);
                for (p, x) in buf.iter().enumerate() {
                    let i = unflatten(p, n, d);
                    let mut k = [0i32; 3];
                    for a in 0..d {
                        let v = i[a] as i32;
                        k[a] = if v < half { v } else { v - n as i32 };
                    }
                    let v = *x * scale;
                    if k[..d].iter().all(|&x| x.abs() <= trunc) {
                        kept.push((k, r, c, v));
                    } else {
                        residual = residual.max(v.norm());
                    }
                }
            }
        }
        for (k, r, c, v) in kept {
            coeffs.entry(k).or_insert_with(|| linalg::zeros(rows, cols))[(r, c)] = v;
        }
        let big = coeffs.values().map(|m| m.norm()).fold(0.0f64, f64::max);
        let mut dropped = 0.0f64;
        coeffs.retain(|k, m| {
            let keep = *k == [0; 3] || m.norm() > DROP_REL * big;
            if !keep {
                dropped = dropped.max(m.norm());
            }
            keep
        });
        PeriodicField { d, rows, cols, coeffs, truncation_residual: residual.max(dropped) }
    }

    /// Pointwise map on an n-point grid, re-truncated to |k_j| ≤ trunc.
    pub fn map_pointwise<F: Fn(&CMat) -> Option<CMat>>(&self, n: usize, trunc: i32, f: F) -> Result<Self> {
        let samples = self.sample(n);
        let mut mapped = Vec::with_capacity(samples.len());
        for s in &samples {
            mapped.push(f(s).ok_or(Error::SingularPointValue)?);
        }
        let (rows, cols) = mapped[0].shape();
        Ok(Self::from_samples(self.d, rows, cols, n, &mapped, trunc))
    }

    /// Grid size large enough for exact sampling and a well resolved inverse.
    pub fn inverse_grid(&self) -> usize {
        let need = 4 * self.bandwidth() as usize + 2;
        need.next_power_of_two().max(INVERSE_GRID)
    }

    pub fn inverse_field(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Shape("inverse of a non-square field".into()));
        }
        let n = self.inverse_grid();
        let trunc = INVERSE_TRUNCATION.min((n / 2) as i32 - 1);
        let scale = self.sup_norm(n);
        self.map_pointwise(n, trunc, |m| invert_checked(m, scale))
    }

    /// (mean of φ⁻¹)⁻¹ by pointwise inversion on the grid.
    pub fn inverse_mean(&self) -> Result<CMat> {
        let n = self.inverse_grid();
        let samples = self.sample(n);
        let scale = samples.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
        let mut acc = linalg::zeros(self.rows, self.cols);
        for s in &samples {
            acc += invert_checked(s, scale).ok_or(Error::SingularPointValue)?;
        }
        acc /= C64::new(samples.len() as f64, 0.0);
        let inv_scale = linalg::spectral_norm(&acc);
        invert_checked(&acc, inv_scale).ok_or(Error::SingularPointValue)
    }

    /// φ* pointwise.
    pub fn adjoint(&self) -> Self {
        let coeffs = self.coeffs.iter().map(|(k, v)| (neg(k), v.adjoint())).collect();
        PeriodicField { d: self.d, rows: self.cols, cols: self.rows, coeffs, truncation_residual: self.truncation_residual }
    }

    /// Exact pointwise product (coefficient convolution).
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape("field product shapes".into()));
        }
        let mut coeffs: BTreeMap<Idx, CMat> = BTreeMap::new();
        for (k1, a) in &self.coeffs {
            for (k2, b) in &other.coeffs {
                let k = [k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2]];
                *coeffs.entry(k).or_insert_with(|| linalg::zeros(self.rows, other.cols)) += a * b;
            }
        }
        Ok(PeriodicField {
            d: self.d,
            rows: self.rows,
            cols: other.cols,
            coeffs,
            truncation_residual: self.truncation_residual.max(other.truncation_residual),
        })
    }

    pub fn hermitian_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        self.coeffs
            .iter()
            .map(|(k, v)| {
                let partner = self.coeffs.get(&neg(k)).cloned().unwrap_or_else(|| linalg::zeros(self.rows, self.cols));
                (v - partner.adjoint()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue (Hermitian case) or smallest singular value on a sampling grid.
    pub fn min_pointwise(&self, n: usize) -> f64 {
        let herm = self.hermitian_defect() < 1e-12;
        self.sample(n)
            .iter()
            .map(|s| {
                if herm {
                    linalg::min_eig(&linalg::hermitian_part(s))
                } else {
                    s.clone().svd(false, false).singular_values.min()
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn flags(&self) -> FieldFlags {
        let n = self.inverse_grid();
        let hermitian_valued = self.hermitian_defect() < 1e-12;
        let m = self.min_pointwise(n);
        FieldFlags { hermitian_valued, positive_definite: hermitian_valued && m > 0.0, invertible: m > 1e-12 }
    }

    /// max over the grid of ‖φ(x)‖.
    pub fn sup_norm(&self, n: usize) -> f64 {
        self.sample(n).iter().map(linalg::spectral_norm).fold(0.0, f64::max)
    }
}

/// Inverse unless the smallest singular value is below 1e-12 of `scale`.
fn invert_checked(m: &CMat, scale: f64) -> Option<CMat> {
    let sv = m.clone().svd(false, false).singular_values;
    if !(sv.min() > 1e-12 * scale) {
        return None;
    }
    m.clone().try_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::re;

    fn scalar(f: impl Fn(f64) -> f64) -> PeriodicField {
        PeriodicField::from_fn(1, 1, 1, 16, |s| CMat::from_element(1, 1, re(f(2.0 * std::f64::consts::PI * s[0]))))
    }

    #[test]
    fn constant_field_means() {
        let g = PeriodicField::constant(2, linalg::from_real(2, 2, &[2.0, 0.5, 0.5, 1.0]));
        assert!((g.mean() - g.inverse_mean().unwrap()).norm() < 1e-12);
    }

    #[test]
    fn harmonic_mean_of_two_plus_cos() {
        let g = scalar(|x| 2.0 + x.cos());
        assert_eq!(g.coeffs.len(), 3);
        assert!((g.coeff(&[1, 0, 0]).unwrap()[(0, 0)] - re(0.5)).norm() < 1e-15);
        let h = g.inverse_mean().unwrap()[(0, 0)].re;
        assert!((h - 3f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn sampling_round_trip() {
        let g = PeriodicField::from_fn(2, 2, 2, 8, |s| {
            let (x, y) = (2.0 * std::f64::consts::PI * s[0], 2.0 * std::f64::consts::PI * s[1]);
            linalg::from_real(2, 2, &[2.0 + x.cos(), 0.3 * y.sin(), 0.1 * (x + y).cos(), 1.5])
        });
        let back = PeriodicField::from_samples(2, 2, 2, 8, &g.sample(8), 3);
        for (k, v) in &g.coeffs {
            assert!((v - back.coeff(k).unwrap()).norm() < 1e-12);
        }
        let s = [0.3, 0.7];
        let direct = g.eval(&s);
        let (x, y) = (2.0 * std::f64::consts::PI * s[0], 2.0 * std::f64::consts::PI * s[1]);
        assert!((direct[(0, 0)].re - 2.0 - x.cos()).abs() < 1e-12);
        assert!((direct[(1, 0)].re - 0.1 * (x + y).cos()).abs() < 1e-12);
    }

    #[test]
    fn inverse_field_multiplies_to_identity() {
        let g = scalar(|x| 2.0 + x.cos());
        let inv = g.inverse_field().unwrap();
        assert!(inv.truncation_residual < 1e-12);
        let one = g.product(&inv).unwrap();
        for (k, v) in &one.coeffs {
            let target = if *k == [0; 3] { 1.0 } else { 0.0 };
            assert!((v[(0, 0)] - re(target)).norm() < 1e-12, "{k:?}");
        }
    }

    #[test]
    fn singular_point_value_reported() {
        let g = scalar(|x| x.cos());
        assert!(matches!(g.inverse_mean(), Err(Error::SingularPointValue)));
    }

    #[test]
    fn jensen_ordering() {
        let g = PeriodicField::from_fn(1, 2, 2, 16, |s| {
            let x = 2.0 * std::f64::consts::PI * s[0];
            linalg::from_real(2, 2, &[2.0 + 1.5 * x.cos(), 0.4 * x.sin(), 0.4 * x.sin(), 1.0 + 0.5 * (2.0 * x).cos()])
        });
        let diff = g.mean() - g.inverse_mean().unwrap();
        assert!(linalg::min_eig(&linalg::hermitian_part(&diff)) > -1e-12);
        assert!(g.flags().positive_definite);
    }
}
