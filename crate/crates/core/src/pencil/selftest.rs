//! Seeded random families checked against their own closed forms.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::linalg;

use super::{
    compute_threshold_set, fit_branch_expansion, random_family, sandwich_check, small_eigenpairs, FamilySpec, FitWindow,
};

/// Relative tolerances for fitted (γ, μ, ν) against the operator formulas.
pub const FIT_TOLERANCES: (f64, f64, f64) = (1e-6, 1e-4, 1e-3);
/// Tolerance of the sandwich identities.
pub const SANDWICH_TOL: f64 = 1e-10;
/// Allowed max/min ratio of the scaled remainders over the t window.
pub const REMAINDER_VARIATION: f64 = 2.0;

#[derive(Clone, Debug, Serialize)]
pub struct FamilyOutcome {
    pub seed: u64,
    pub dim_h: usize,
    pub dim_h_star: usize,
    pub n: usize,
    pub sandwich: bool,
    pub gamma_dev: f64,
    pub mu_dev: f64,
    pub nu_dev: f64,
    /// Largest relative residual of the sandwich identities (0 when unsandwiched).
    pub sandwich_residual: f64,
    /// max/min of ‖F(t) − P‖/t over the window.
    pub projector_variation: f64,
    /// max/min of ‖A(t)F(t) − t²SP − t³K‖/t⁴ over the window.
    pub remainder_variation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub families: Vec<FamilyOutcome>,
    pub max_gamma_dev: f64,
    pub max_mu_dev: f64,
    pub max_nu_dev: f64,
    pub max_sandwich_residual: f64,
    pub max_projector_variation: f64,
    pub max_remainder_variation: f64,
}

impl SelftestReport {
    pub fn fits_pass(&self) -> bool {
        let (g, m, n) = FIT_TOLERANCES;
        self.max_gamma_dev <= g && self.max_mu_dev <= m && self.max_nu_dev <= n
    }
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn variation(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

pub fn check_family(seed: u64) -> Result<FamilyOutcome> {
    let spec = FamilySpec::from_seed(seed);
    let fam = random_family(seed, spec)?;
    let thr = compute_threshold_set(&fam)?;
    let scale = thr.scale();
    // μ and ν of order 1e-3·scale and below are compared on the absolute scale
    let floor = 1e-3 * scale;
    let fits = fit_branch_expansion(&fam, &thr.germ.branches, &linalg::eye(fam.n), &FitWindow::default())?;
    let (mut gamma_dev, mut mu_dev, mut nu_dev) = (0.0f64, 0.0f64, 0.0f64);
    for f in &fits {
        let b = &thr.germ.branches[f.formula_index];
        gamma_dev = gamma_dev.max(rel(f.gamma, b.gamma, 1e-12));
        mu_dev = mu_dev.max(rel(f.mu, b.mu, floor));
        nu_dev = nu_dev.max(rel(f.nu_decoupled, b.nu, floor));
    }
    let sandwich_residual = if spec.sandwich {
        let r = sandwich_check(&fam)?;
        [r.germ, r.corrector, r.threshold, r.fourth_order, r.generalized_germ].into_iter().fold(0.0, f64::max)
    } else {
        0.0
    };
    let ts: Vec<f64> = [1e-3, 1e-2, 1e-1].iter().map(|x| x * fam.t0).collect();
    let mut proj = Vec::new();
    let mut rem = Vec::new();
    for &t in &ts {
        let se = small_eigenpairs(&fam, t)?;
        proj.push(linalg::spectral_norm(&(se.projector() - &fam.p)) / t);
        let r = se.a_f() - thr.sp.scale(t * t) - thr.k.scale(t * t * t);
        rem.push(linalg::spectral_norm(&r) / t.powi(4));
    }
    Ok(FamilyOutcome {
        seed,
        dim_h: spec.dim_h,
        dim_h_star: spec.dim_h_star,
        n: spec.n,
        sandwich: spec.sandwich,
        gamma_dev,
        mu_dev,
        nu_dev,
        sandwich_residual,
        projector_variation: variation(&proj),
        remainder_variation: variation(&rem),
    })
}

/// Families with seeds `first_seed .. first_seed + count`.
pub fn run_selftest(first_seed: u64, count: usize) -> Result<SelftestReport> {
    let families: Vec<FamilyOutcome> =
        (first_seed..first_seed + count as u64).into_par_iter().map(check_family).collect::<Result<Vec<_>>>()?;
    let max = |f: fn(&FamilyOutcome) -> f64| families.iter().map(f).fold(0.0, f64::max);
    Ok(SelftestReport {
        max_gamma_dev: max(|f| f.gamma_dev),
        max_mu_dev: max(|f| f.mu_dev),
        max_nu_dev: max(|f| f.nu_dev),
        max_sandwich_residual: max(|f| f.sandwich_residual),
        max_projector_variation: max(|f| f.projector_variation),
        max_remainder_variation: max(|f| f.remainder_variation),
        families,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let r = run_selftest(0, 6).unwrap();
        assert!(r.fits_pass(), "{r:?}");
        assert!(r.max_sandwich_residual <= SANDWICH_TOL);
        assert!(r.max_remainder_variation < REMAINDER_VARIATION);
    }
}
