//! Finite-dimensional factorized families A(t) = X(t)* X(t), X(t) = X0 + t X1.
//!
//! Everything the lattice code needs is checked here first on small dense
//! matrices: kernel projectors, correctors, the germ, threshold operators,
//! branch coefficients, exponential errors and the sandwiched variant.

mod branches;
mod dynamics;
mod random;
mod sandwich;
mod selftest;
mod threshold;

pub use branches::{
    fit_branch_expansion, small_eigenpairs, track_branches, BranchFit, FitWindow, SmallEigen,
    TrackedBranch,
};
pub(crate) use dynamics::{normalized, probe_point, probe_record};
pub use dynamics::{
    exp_error_abstract, sharpness_probe_abstract, smoothing_weight, ExpErrorProfile, ProbeKind,
    ProbeRecord,
};
pub use random::{random_family, zero_corrector_family, FamilySpec};
pub use sandwich::{sandwich_check, SandwichReport};
pub use selftest::{
    check_family, run_selftest, FamilyOutcome, SelftestReport, FIT_TOLERANCES, REMAINDER_VARIATION, SANDWICH_TOL,
};
pub use threshold::{
    compute_correctors, compute_threshold_set, germ_structure, Branch, Cluster, Correctors,
    GermInputs, GermStructure, SubCluster, ThresholdSet, CLUSTER_REL_TOL, SUBCLUSTER_REL_TOL,
};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, KernelSplit};

/// Relative eigenvalue level below which X0*X0 is treated as singular.
pub const KERNEL_REL_TOL: f64 = 1e-10;
/// The gap d0 must exceed this fraction of ‖X0*X0‖.
pub const GAP_REL_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct PencilFamily {
    pub x0: CMat,
    pub x1: CMat,
    pub m: Option<CMat>,
    /// Orthonormal basis of Ker X0 (dim_h × n).
    pub kernel: CMat,
    /// Orthonormal basis of (Ker X0)^⊥.
    pub complement: CMat,
    /// Orthonormal basis of Ker X0*.
    pub kernel_star: CMat,
    pub p: CMat,
    pub p_star: CMat,
    pub n: usize,
    pub n_star: usize,
    pub d0: f64,
    pub delta: f64,
    pub t0: f64,
    pub(crate) a0_split: KernelSplit,
}

pub fn build_family(x0: CMat, x1: CMat, m: Option<CMat>) -> Result<PencilFamily> {
    if x0.shape() != x1.shape() {
        return Err(Error::Shape(format!("X0 {:?} vs X1 {:?}", x0.shape(), x1.shape())));
    }
    let h = x0.ncols();
    if let Some(m) = &m {
        if m.shape() != (h, h) {
            return Err(Error::Shape(format!("M {:?} for dim_H = {h}", m.shape())));
        }
        let cond = condition_number(m);
        if !(cond < 1e12) {
            return Err(Error::SolveFailure { what: "M is not invertible".into(), residual: cond });
        }
    }
    let a0 = x0.adjoint() * &x0;
    let split = KernelSplit::new(&a0, KERNEL_REL_TOL);
    let n = split.kernel.ncols();
    if n == 0 {
        return Err(Error::DegenerateKernel);
    }
    if n == h {
        return Err(Error::FullKernel);
    }
    let scale = split.range_values.last().copied().unwrap_or(1.0);
    let d0 = split.gap();
    if d0 < GAP_REL_TOL * scale {
        return Err(Error::NoSpectralGap { d0 });
    }
    let star = KernelSplit::new(&(&x0 * x0.adjoint()), KERNEL_REL_TOL);
    let delta = d0 / 16.0;
    let x1_norm = linalg::spectral_norm(&x1);
    let t0 = if x1_norm > 0.0 { delta.sqrt() / x1_norm } else { f64::INFINITY };
    Ok(PencilFamily {
        p: linalg::projector(&split.kernel),
        p_star: linalg::projector(&star.kernel),
        n_star: star.kernel.ncols(),
        kernel: split.kernel.clone(),
        complement: split.range.clone(),
        kernel_star: star.kernel,
        n,
        d0,
        delta,
        t0,
        x0,
        x1,
        m,
        a0_split: split,
    })
}

fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &s in sv.iter() {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    hi / lo
}

impl PencilFamily {
    pub fn dim_h(&self) -> usize {
        self.x0.ncols()
    }

    pub fn dim_h_star(&self) -> usize {
        self.x0.nrows()
    }

    pub fn x(&self, t: f64) -> CMat {
        &self.x0 + self.x1.scale(t)
    }

    pub fn a(&self, t: f64) -> CMat {
        let x = self.x(t);
        x.adjoint() * x
    }

    /// Spectral projector of A(t) for [0, δ] computed by dense diagonalization.
    pub fn spectral_projector(&self, t: f64) -> CMat {
        let e = linalg::herm_eig(&self.a(t));
        let k = e.values.iter().take_while(|&&l| l <= self.delta).count();
        linalg::projector(&e.columns(0..k))
    }
}
