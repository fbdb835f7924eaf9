//! Cell problems on the block of modes containing the constants.
//!
//! Unknown fields are kept as stacked coefficient columns: block i of a
//! (rows · N) × cols matrix is the Fourier coefficient at mode i of the block.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::linalg::{self, CMat};

use super::{Discretization, ModeSet};

#[derive(Clone, Debug, Serialize)]
pub struct VoigtReuss {
    /// min eig(ḡ − g⁰).
    pub upper_margin: f64,
    /// min eig(g⁰ − g̲).
    pub lower_margin: f64,
    /// ‖g⁰ − g̲‖ when m = n.
    pub m_eq_n_gap: Option<f64>,
}

/// Stacked mode-space coefficients on the first component.
#[derive(Clone, Debug)]
pub struct ModeArrays {
    /// Λ, n·N × m.
    pub lambda: CMat,
    /// g̃ restricted to the block, m·N × m.
    pub g_tilde: CMat,
    /// Λ_Q (equal to Λ when f = 1).
    pub lambda_q: CMat,
    /// Second correctors per axis: plain when f = 1, Q-normalized otherwise.
    pub lambda2: Vec<CMat>,
    /// [Q] on the block, identity when f = 1.
    pub q_conv: CMat,
}

#[derive(Clone, Debug)]
pub struct CorrectorSet {
    pub lambda: PeriodicField,
    pub g_tilde: PeriodicField,
    pub g0: CMat,
    pub g_bar: CMat,
    pub g_lower: CMat,
    pub lambda_q: Option<PeriodicField>,
    /// Λ⁽²⁾_l for l = 1..d, zero mean.
    pub lambda2: Vec<PeriodicField>,
    /// Λ⁽²⁾_{Q,l}, Q-zero mean, when f is present.
    pub lambda2_q: Option<Vec<PeriodicField>>,
    pub f0: CMat,
    pub q_bar: CMat,
    pub voigt_reuss: VoigtReuss,
    pub lambda_residual: f64,
    pub lambda2_residuals: Vec<f64>,
    /// Relative zero-mode size of each second-corrector right side.
    pub solvability: Vec<f64>,
    /// ‖mean(Q Λ_Q)‖.
    pub q_mean_residual: f64,
    /// ‖g⁰ − g⁰*‖ before symmetrization.
    pub g0_hermiticity: f64,
    pub arrays: ModeArrays,
}

const SOLVABILITY_TOL: f64 = 1e-10;
const VOIGT_REUSS_TOL: f64 = 1e-10;

/// Rows of the listed mode blocks.
fn take_rows(a: &CMat, block: usize, keep: &[usize]) -> CMat {
    let mut out = linalg::zeros(block * keep.len(), a.ncols());
    for (i, &k) in keep.iter().enumerate() {
        out.view_mut((i * block, 0), (block, a.ncols())).copy_from(&a.rows(k * block, block));
    }
    out
}

fn take_block(a: &CMat, block: usize, keep: &[usize]) -> CMat {
    let rows = take_rows(a, block, keep);
    let t = take_rows(&rows.transpose(), block, keep);
    t.transpose()
}

/// Inverse of `take_rows` with zeros elsewhere.
fn put_rows(x: &CMat, block: usize, keep: &[usize], total: usize) -> CMat {
    let mut out = linalg::zeros(block * total, x.ncols());
    for (i, &k) in keep.iter().enumerate() {
        out.view_mut((k * block, 0), (block, x.ncols())).copy_from(&x.rows(i * block, block));
    }
    out
}

fn block_at(a: &CMat, block: usize, i: usize) -> CMat {
    a.rows(i * block, block).into_owned()
}

impl Discretization {
    /// Field with the stacked coefficients of the first component.
    pub fn stacked_to_field(&self, a: &CMat, rows: usize) -> PeriodicField {
        let modes = &self.blocks[0].modes;
        let mut coeffs = BTreeMap::new();
        for (i, &mi) in modes.iter().enumerate() {
            let c = block_at(a, rows, i);
            if c.iter().any(|x| x.norm() > 0.0) {
                coeffs.insert(self.modes.idx[mi], c);
            }
        }
        PeriodicField::from_coeffs(self.op.d(), rows, a.ncols(), coeffs).expect("consistent shapes")
    }

    /// Λ, g̃, g⁰ and the second correctors.
    pub fn solve_correctors(&self) -> Result<CorrectorSet> {
        let op = &self.op;
        let (d, m, n) = (op.d(), op.m(), op.n());
        let blk = &self.blocks[0];
        let count = blk.modes.len();
        let z = self.modes.zero_local();
        let nz: Vec<usize> = (0..count).filter(|&i| i != z).collect();
        let zero_k = vec![0.0; d];
        let b0 = self.modes.symbol_blocks(&op.symbol, &zero_k, &blk.modes);
        let bg = b0.adjoint() * &blk.g;
        let stiff = take_block(&(&bg * &b0), n, &nz);

        let mut e_m = linalg::zeros(m * count, m);
        e_m.view_mut((z * m, 0), (m, m)).copy_from(&linalg::eye(m));

        // b(D)* g (b(D)Λ + 1) = 0 on the nonzero modes
        let rhs = -take_rows(&(&bg * &e_m), n, &nz);
        let x = if nz.is_empty() { linalg::zeros(0, m) } else { linalg::solve_hpd(&stiff, &rhs, "cell problem for Λ")? };
        let lambda_residual = if rhs.norm() > 0.0 { (&stiff * &x - &rhs).norm() / rhs.norm() } else { 0.0 };
        let lam = put_rows(&x, n, &nz, count);

        let w = &b0 * &lam + &e_m;
        let gt_local = &blk.g * &w;
        let g0_raw = block_at(&gt_local, m, z);
        let g0_hermiticity = (&g0_raw - g0_raw.adjoint()).norm();
        let g0 = linalg::hermitian_part(&g0_raw);
        let lambda = self.stacked_to_field(&lam, n);
        let w_field = self.stacked_to_field(&w, m);
        let g_tilde = op.g.product(&w_field)?;
        let g_bar = linalg::hermitian_part(&op.g.mean());
        let g_lower = linalg::hermitian_part(&op.g.inverse_mean()?);

        let scale = linalg::spectral_norm(&g_bar);
        let upper_margin = linalg::min_eig(&(&g_bar - &g0));
        let lower_margin = linalg::min_eig(&(&g0 - &g_lower));
        for r in [upper_margin, lower_margin] {
            if r < -VOIGT_REUSS_TOL * scale {
                return Err(Error::VoigtReussViolation { min_eig: r });
            }
        }
        let voigt_reuss = VoigtReuss {
            upper_margin,
            lower_margin,
            m_eq_n_gap: (m == n).then(|| (&g0 - &g_lower).norm()),
        };

        let q_bar = op.q_bar();
        let q_bar_inv = linalg::inverse(&q_bar, "Q̄")?;
        let f0 = linalg::inv_sqrt(&q_bar);
        let q_conv = match &op.q {
            Some(q) => self.modes.conv(q, &blk.modes),
            None => linalg::eye(n * count),
        };
        // Λ_Q = Λ − Q̄⁻¹ mean(QΛ)
        let shift_to_q_mean = |a: &CMat| -> CMat {
            let mean = block_at(&(&q_conv * a), n, z);
            let mut out = a.clone();
            let c = out.rows(z * n, n) - &q_bar_inv * mean;
            out.view_mut((z * n, 0), (n, a.ncols())).copy_from(&c);
            out
        };
        let lam_q = if op.weighted() { shift_to_q_mean(&lam) } else { lam.clone() };
        let q_mean_residual = block_at(&(&q_conv * &lam_q), n, z).norm();

        let mut lambda2 = Vec::with_capacity(d);
        let mut lambda2_q = Vec::with_capacity(d);
        let mut arrays2 = Vec::with_capacity(d);
        let mut lambda2_residuals = Vec::with_capacity(d);
        let mut solvability = Vec::with_capacity(d);
        for l in 0..d {
            let bl = &op.symbol.b[l];
            let blr = ModeSet::repeat(bl, count);
            let blr_adj = ModeSet::repeat(&bl.adjoint(), count);
            let target = (bl.adjoint() * &g0).norm().max(f64::MIN_POSITIVE);
            let mut solve = |base: &CMat, weighted: bool| -> Result<CMat> {
                // b(D)* g (b(D)X + b_l base) = −b_l* g̃ + [weighted] Q Q̄⁻¹ b_l* g⁰
                let mut full = -(&blr_adj * &gt_local) - &bg * &blr * base;
                if weighted {
                    let mut e_n = linalg::zeros(n * count, n);
                    e_n.view_mut((z * n, 0), (n, n)).copy_from(&linalg::eye(n));
                    full += &q_conv * e_n * &q_bar_inv * bl.adjoint() * &g0;
                } else {
                    let c = full.rows(z * n, n) + bl.adjoint() * &g0;
                    full.view_mut((z * n, 0), (n, m)).copy_from(&c);
                }
                let solv = block_at(&full, n, z).norm() / target;
                solvability.push(solv);
                if solv > SOLVABILITY_TOL {
                    return Err(Error::SolvabilityViolation { residual: solv });
                }
                let rhs = take_rows(&full, n, &nz);
                if nz.is_empty() {
                    lambda2_residuals.push(0.0);
                    return Ok(linalg::zeros(n * count, m));
                }
                let x = linalg::solve_hpd(&stiff, &rhs, "second cell problem")?;
                lambda2_residuals.push(if rhs.norm() > 0.0 { (&stiff * &x - &rhs).norm() / rhs.norm() } else { 0.0 });
                Ok(put_rows(&x, n, &nz, count))
            };
            let plain = solve(&lam, false)?;
            lambda2.push(self.stacked_to_field(&plain, n));
            if op.weighted() {
                let xq = shift_to_q_mean(&solve(&lam_q, true)?);
                lambda2_q.push(self.stacked_to_field(&xq, n));
                arrays2.push(xq);
            } else {
                arrays2.push(plain);
            }
        }

        Ok(CorrectorSet {
            lambda,
            g_tilde,
            g0,
            g_bar,
            g_lower,
            lambda_q: op.weighted().then(|| self.stacked_to_field(&lam_q, n)),
            lambda2,
            lambda2_q: op.weighted().then_some(lambda2_q),
            f0,
            q_bar,
            voigt_reuss,
            lambda_residual,
            lambda2_residuals,
            solvability,
            q_mean_residual,
            g0_hermiticity,
            arrays: ModeArrays { lambda: lam, g_tilde: gt_local, lambda_q: lam_q, lambda2: arrays2, q_conv },
        })
    }
}
