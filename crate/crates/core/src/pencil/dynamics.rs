use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

use super::{small_eigenpairs, Branch, PencilFamily, ThresholdSet};

#[derive(Clone, Debug, Serialize)]
pub struct ExpErrorProfile {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    pub sup: f64,
    pub argmax_t: f64,
}

/// Smoothing weight ε^s (t² + ε²)^{-s/2}.
pub fn smoothing_weight(t: f64, eps: f64, s: f64) -> f64 {
    (eps * eps / (t * t + eps * eps)).powf(s / 2.0)
}

/// ‖(e^{-iτε⁻²A(t)} − e^{-iτε⁻²t²SP}) P‖ at one t, without smoothing.
pub(crate) fn raw_exp_error(fam: &PencilFamily, sp: &CMat, eps: f64, tau: f64, t: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let phase = tau / (eps * eps);
    let u = linalg::herm_eig(&fam.a(t)).propagator(phase);
    let u0 = linalg::herm_eig(&sp.scale(t * t)).propagator(phase);
    linalg::spectral_norm(&((u - u0) * &fam.kernel))
}

/// `sp` is the germ SP as an operator on H; it may vanish.
pub fn exp_error_abstract(
    fam: &PencilFamily,
    sp: &CMat,
    eps: f64,
    tau: f64,
    s: f64,
    t_grid: &[f64],
) -> ExpErrorProfile {
    let values: Vec<f64> = t_grid
        .iter()
        .map(|&t| raw_exp_error(fam, sp, eps, tau, t) * smoothing_weight(t, eps, s))
        .collect();
    let (mut sup, mut argmax_t) = (0.0, t_grid.first().copied().unwrap_or(0.0));
    for (&t, &v) in t_grid.iter().zip(&values) {
        if v > sup {
            sup = v;
            argmax_t = t;
        }
    }
    ExpErrorProfile { ts: t_grid.to_vec(), values, sup, argmax_t }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ProbeKind {
    /// t⋄ = (2π/3)^{1/3}|μτ|^{-1/3}ε^{2/3}, smoothing exponent 3.
    Time,
    /// t(ε) = π^{1/4}|ντ|^{-1/4}ε^{1/2} with the given smoothing exponent.
    Smoothing { s: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRecord {
    pub kind: ProbeKind,
    pub eps: f64,
    pub tau: f64,
    pub s: f64,
    pub t_probe: f64,
    pub branch: usize,
    pub coefficient: f64,
    /// 2|sin(½τε⁻²(λ(t) − γt²))| on the probed branch.
    pub phase_modulus: f64,
    /// Smoothed error norm at the probe point.
    pub value: f64,
    pub ratio: f64,
    /// Lower bound the construction guarantees for `value`.
    pub lower_bound: f64,
    /// Probe point inside the regime where the higher-order terms are dominated.
    pub in_regime: bool,
    pub modulus_ok: bool,
}

/// Branch, coefficient, probe point and smoothing exponent of a probe: the
/// branch with the largest |μ| (time) or |ν| among μ = 0 branches (smoothing).
pub(crate) fn probe_point(
    branches: &[Branch],
    scale: f64,
    eps: f64,
    tau: f64,
    kind: ProbeKind,
) -> Result<(usize, f64, f64, f64)> {
    match kind {
        ProbeKind::Time => {
            let (j, b) = branches
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.mu.abs().total_cmp(&b.1.mu.abs()))
                .expect("n >= 1");
            if b.mu.abs() <= 1e-9 * scale {
                return Err(Error::CoefficientZero("mu".into()));
            }
            let t = (2.0 * PI / 3.0).cbrt() * (b.mu * tau).abs().powf(-1.0 / 3.0) * eps.powf(2.0 / 3.0);
            Ok((j, b.mu, t, 3.0))
        }
        ProbeKind::Smoothing { s } => {
            let (j, b) = branches
                .iter()
                .enumerate()
                .filter(|(_, b)| b.mu.abs() <= 1e-9 * scale)
                .max_by(|a, b| a.1.nu.abs().total_cmp(&b.1.nu.abs()))
                .ok_or_else(|| Error::CoefficientZero("mu = 0 branch".into()))?;
            if b.nu.abs() <= 1e-9 * scale {
                return Err(Error::CoefficientZero("nu".into()));
            }
            let t = PI.powf(0.25) * (b.nu * tau).abs().powf(-0.25) * eps.sqrt();
            Ok((j, b.nu, t, s))
        }
    }
}

/// Probe record from the measured band deviation `dev = λ(t) − γt²` and the smoothed error `value`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn probe_record(
    kind: ProbeKind,
    branch: usize,
    coefficient: f64,
    t_probe: f64,
    t0: f64,
    eps: f64,
    tau: f64,
    dev: f64,
    value: f64,
) -> ProbeRecord {
    let phase_modulus = 2.0 * (0.5 * tau / (eps * eps) * dev).sin().abs();
    let (s, lead, lower_bound) = match kind {
        ProbeKind::Time => {
            let lb = 2f64.sqrt() / 3.0 * eps * tau.abs() / (2.0 * PI / (3.0 * coefficient.abs()) + eps * tau.abs());
            (3.0, coefficient * t_probe.powi(3), lb)
        }
        ProbeKind::Smoothing { s } => {
            let c2 = t_probe * t_probe / eps;
            let lb = 2f64.sqrt() * eps.powf(s) * (c2 * eps + eps * eps).powf(-s / 2.0);
            (s, coefficient * t_probe.powi(4), lb)
        }
    };
    ProbeRecord {
        kind,
        eps,
        tau,
        s,
        t_probe,
        branch,
        coefficient,
        phase_modulus,
        value,
        ratio: value / eps,
        lower_bound,
        in_regime: t_probe <= t0 && (dev - lead).abs() <= 0.5 * lead.abs(),
        modulus_ok: phase_modulus >= 2f64.sqrt() - 1e-12,
    }
}

/// Phase-mismatch probe on the branch with the largest |μ| (time) or |ν| among μ = 0 branches (smoothing).
pub fn sharpness_probe_abstract(
    fam: &PencilFamily,
    thr: &ThresholdSet,
    eps: f64,
    tau: f64,
    kind: ProbeKind,
) -> Result<ProbeRecord> {
    let branches = &thr.germ.branches;
    let (j, coefficient, t_probe, s) = probe_point(branches, thr.scale(), eps, tau, kind)?;
    let b = &branches[j];
    let se = small_eigenpairs(fam, t_probe)?;
    let (l, _) = linalg::best_overlap(&b.vector, &normalized(&se.kernel_part));
    let dev = se.values[l] - b.gamma * t_probe * t_probe;
    let value = raw_exp_error(fam, &thr.sp, eps, tau, t_probe) * smoothing_weight(t_probe, eps, s);
    Ok(probe_record(kind, j, coefficient, t_probe, fam.t0, eps, tau, dev, value))
}

pub(crate) fn normalized(m: &CMat) -> CMat {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= linalg::re(n);
        }
    }
    out
}
