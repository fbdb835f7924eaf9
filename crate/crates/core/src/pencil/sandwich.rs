//! Sandwiched families A(t) = M* Â(t) M checked against the unsandwiched Â(t).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

use super::{build_family, compute_threshold_set, germ_structure, GermInputs, PencilFamily};

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    /// ‖SP − P M* Ŝ M P‖ relative to ‖S‖.
    pub germ: f64,
    /// ‖Ẑ_Q − M Z M⁻¹ P̂‖ relative to ‖Z‖ + 1.
    pub corrector: f64,
    /// ‖N̂_Q − P̂ (M*)⁻¹ N M⁻¹ P̂‖ relative to ‖N‖ + ‖S‖.
    pub threshold: f64,
    /// ‖N̂₁,Q⁰ − P̂ (M*)⁻¹ N₁⁰ M⁻¹ P̂‖ relative to ‖N₁⁰‖ + ‖S‖.
    pub fourth_order: f64,
    /// max |γ̂ − γ| with γ̂ from Ŝζ = γ Q_N̂ ζ, relative to ‖S‖.
    pub generalized_germ: f64,
    /// max |ν_Q − ν| with ν_Q from the weighted fourth-order problem in its
    /// change-of-variables form.
    pub weighted_nu: f64,
    /// Same with the weight M M* inserted literally.
    pub weighted_nu_literal: f64,
    pub gammas: Vec<f64>,
    pub gammas_hat: Vec<f64>,
}

impl SandwichReport {
    pub fn check(&self, tol: f64) -> Result<()> {
        for (name, r) in [
            ("S = P M* Ŝ M", self.germ),
            ("Ẑ_Q = M Z M⁻¹ P̂", self.corrector),
            ("N̂_Q = P̂ (M*)⁻¹ N M⁻¹ P̂", self.threshold),
            ("N̂₁,Q⁰ = P̂ (M*)⁻¹ N₁⁰ M⁻¹ P̂", self.fourth_order),
            ("Ŝζ = γ Q_N̂ ζ", self.generalized_germ),
        ] {
            if !(r <= tol) {
                return Err(Error::IdentityViolation { identity: name.into(), residual: r });
            }
        }
        Ok(())
    }
}

pub fn sandwich_check(fam: &PencilFamily) -> Result<SandwichReport> {
    let h = fam.dim_h();
    let m = fam.m.clone().unwrap_or_else(|| linalg::eye(h));
    let m_inv = linalg::inverse(&m, "M")?;
    let m_adj_inv = m_inv.adjoint();
    let thr = compute_threshold_set(fam)?;
    let hat = build_family(&fam.x0 * &m_inv, &fam.x1 * &m_inv, None)?;
    let thr_hat = compute_threshold_set(&hat)?;
    let (p, p_hat, v_hat) = (&fam.p, &hat.p, &hat.kernel);
    let c = &thr.correctors;
    let ch = &thr_hat.correctors;

    let q = linalg::inverse(&(&m * m.adjoint()), "M M*")?;
    let q_n = v_hat.adjoint() * &q * v_hat;
    let q_n_inv = linalg::inverse(&q_n, "Q_N")?;
    // Adds the kernel component that makes Q ψ orthogonal to Ker X̂0.
    let shift = linalg::eye(h) - v_hat * &q_n_inv * v_hat.adjoint() * &q;

    let s_norm = linalg::spectral_norm(&thr.s);
    let n_norm = linalg::spectral_norm(&thr.n_op);
    let germ = (&thr.sp - p * m.adjoint() * &thr_hat.sp * &m * p).norm() / s_norm;

    let z_q = &shift * &ch.z;
    let corrector = (&z_q - &m * &c.z * &m_inv * p_hat).norm() / (c.z.norm() + 1.0);

    let x1h = &hat.x1;
    let n_q = z_q.adjoint() * x1h.adjoint() * &ch.r + ch.r.adjoint() * x1h * &z_q;
    let n_pulled = p_hat * &m_adj_inv * &thr.n_op * &m_inv * p_hat;
    let threshold = (&n_q - &n_pulled).norm() / (n_norm + s_norm);

    let pinv = hat.a0_split.pinv();
    let x0h_adj = hat.x0.adjoint();
    let xr = x1h.adjoint() * &ch.r;
    let rhs = -(&xr) + &q * v_hat * &q_n_inv * v_hat.adjoint() * &xr - &x0h_adj * x1h * &z_q;
    let z2_q = &shift * (&pinv * &rhs);
    let r2_q = &hat.x0 * &z2_q + x1h * &z_q;
    let n1_q = z2_q.adjoint() * x1h.adjoint() * &ch.r + ch.r.adjoint() * x1h * &z2_q + r2_q.adjoint() * &r2_q;
    let n1_op = &fam.kernel * &thr.n1_0 * fam.kernel.adjoint();
    let n1_pulled = p_hat * &m_adj_inv * &n1_op * &m_inv * p_hat;
    let fourth_order = (&n1_q - &n1_pulled).norm() / (linalg::spectral_norm(&n1_op) + s_norm);

    let s_hat_n = v_hat.adjoint() * &thr_hat.sp * v_hat;
    let q_isqrt = linalg::inv_sqrt(&q_n);
    let gammas_hat = linalg::herm_eig(&(&q_isqrt * &s_hat_n * &q_isqrt)).values;
    let gammas = linalg::herm_eig(&thr.s).values;
    let generalized_germ =
        gammas.iter().zip(&gammas_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / s_norm;

    let compress = |a: &CMat| linalg::hermitian_part(&(v_hat.adjoint() * a * v_hat));
    let mut inputs = GermInputs {
        s: linalg::hermitian_part(&s_hat_n),
        q: linalg::hermitian_part(&q_n),
        n: compress(&n_q),
        n1: compress(&n1_q),
        zz: compress(&(z_q.adjoint() * &q * &z_q)),
        w: None,
    };
    let mut nu_p: Vec<f64> = thr.germ.branches.iter().map(|b| b.nu).collect();
    nu_p.sort_by(f64::total_cmp);
    let nu_gap = |inp: &GermInputs| -> Result<f64> {
        let mut nu: Vec<f64> = germ_structure(inp)?.branches.iter().map(|b| b.nu).collect();
        nu.sort_by(f64::total_cmp);
        Ok(nu.iter().zip(&nu_p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    };
    let weighted_nu = nu_gap(&inputs)?;
    inputs.w = Some(compress(&(&m * m.adjoint())));
    let weighted_nu_literal = nu_gap(&inputs)?;

    Ok(SandwichReport {
        germ,
        corrector,
        threshold,
        fourth_order,
        generalized_germ,
        weighted_nu,
        weighted_nu_literal,
        gammas,
        gammas_hat,
    })
}
