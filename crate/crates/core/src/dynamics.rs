//! Band functions, band-expansion fits and the smoothed exponential error on the fibers.
//!
//! The error at quasimomentum k is the largest singular value of
//! (U(k) − U⁰(k)) R(k, ε)^{s/2}, where U, U⁰ are the exact and effective
//! propagators at time τε⁻² and R^{s/2} is the diagonal smoothing weight
//! ε^s(|b+k|²+ε²)^{-s/2}. Every block of modes is invariant under both
//! propagators, so the norm is a maximum over blocks.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{Discretization, ModeSet, Variant};
use crate::error::Result;
use crate::germ::{CellSolution, GermPack};
use crate::lattice::theta_grid;
use crate::linalg::{self, CMat, HermEig};
use crate::pencil::{
    fit_branch_expansion, normalized, probe_point, probe_record, small_eigenpairs, smoothing_weight, FitWindow,
    PencilFamily, ProbeKind, ProbeRecord,
};
use crate::scenario::ScanSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorVariant {
    /// e^{-iτε⁻²Â(k)} − e^{-iτε⁻²Â⁰(k)}.
    Hat,
    /// f e^{-iτε⁻²A(k)} f⁻¹ − f0 e^{-iτε⁻²A⁰(k)} f0⁻¹.
    Sandwich,
}

impl ErrorVariant {
    pub fn native(disc: &Discretization) -> Self {
        if disc.op.weighted() {
            ErrorVariant::Sandwich
        } else {
            ErrorVariant::Hat
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorVariant::Hat => "hat",
            ErrorVariant::Sandwich => "sandwich",
        }
    }
}

/// Smoothing weights ε^s(|b+k|²+ε²)^{-s/2}, one per mode of the mode set.
#[derive(Clone, Debug)]
pub struct SmoothingWeights {
    pub k: Vec<f64>,
    pub eps: f64,
    pub s: f64,
    pub weights: Vec<f64>,
}

impl SmoothingWeights {
    pub fn new(modes: &ModeSet, k: &[f64], eps: f64, s: f64) -> Self {
        let weights = modes.vecs.iter().map(|b| smoothing_weight(shifted_norm(b.as_slice(), k), eps, s)).collect();
        SmoothingWeights { k: k.to_vec(), eps, s, weights }
    }
}

fn shifted_norm(b: &[f64], k: &[f64]) -> f64 {
    b.iter().zip(k).map(|(b, k)| (b + k) * (b + k)).sum::<f64>().sqrt()
}

fn fiber_variant(disc: &Discretization, variant: ErrorVariant) -> Variant {
    match variant {
        ErrorVariant::Sandwich if disc.op.weighted() => Variant::Sandwiched,
        _ => Variant::Hat,
    }
}

/// The lowest `count` eigenvalues of the fiber at k over all blocks, ascending.
pub fn bands(disc: &Discretization, k: &[f64], count: usize) -> Vec<f64> {
    let variant = disc.native_variant();
    let order = block_order(disc, k);
    // the unweighted fiber on a block is ≥ α0 min(g) |b+k|², which lets far blocks be skipped
    let floor = if disc.op.weighted() { None } else { Some(disc.op.symbol.alpha0 * disc.op.g.min_pointwise(disc.op.g.inverse_grid())) };
    let mut all: Vec<f64> = Vec::new();
    for &(c, dist) in &order {
        if let Some(fl) = floor {
            if all.len() >= count && fl * dist * dist > all[count - 1] {
                break;
            }
        }
        all.extend(linalg::herm_eig(&disc.fiber(c, k, variant, None).matrix).values);
        all.sort_by(f64::total_cmp);
    }
    all.truncate(count);
    all
}

/// Blocks with the smallest |b + k| over their modes, nearest first.
fn block_order(disc: &Discretization, k: &[f64]) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = disc
        .blocks
        .iter()
        .enumerate()
        .map(|(c, blk)| {
            let d = blk.modes.iter().map(|&i| shifted_norm(disc.modes.vecs[i].as_slice(), k)).fold(f64::INFINITY, f64::min);
            (c, d)
        })
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    order
}

struct BlockEig {
    exact: HermEig,
    /// Effective fiber per mode (n × n).
    effective: Vec<HermEig>,
}

/// Exact and effective fibers at one k, diagonalized lazily per block and
/// shared across (ε, τ, s).
pub struct KFiber<'a> {
    sol: &'a CellSolution,
    pub k: Vec<f64>,
    pub variant: ErrorVariant,
    order: Vec<(usize, f64)>,
    cache: Vec<OnceLock<BlockEig>>,
    /// Bound on ‖J‖ before smoothing: 2, or ‖f‖‖f⁻¹‖ + ‖f0‖‖f0⁻¹‖.
    bound: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ErrorValue {
    pub value: f64,
    /// Block attaining the maximum.
    pub component: usize,
}

impl<'a> KFiber<'a> {
    pub fn new(sol: &'a CellSolution, k: &[f64], variant: ErrorVariant) -> Self {
        let disc = &sol.disc;
        let bound = match (variant, &disc.op.f, &disc.op.f_inv) {
            (ErrorVariant::Sandwich, Some(f), Some(fi)) => {
                let f0 = &sol.correctors.f0;
                let cond0 = linalg::spectral_norm(f0) * linalg::spectral_norm(&linalg::inverse(f0, "f0").unwrap_or_else(|_| f0.clone()));
                f.sup_norm(f.inverse_grid()) * fi.sup_norm(fi.inverse_grid()) + cond0
            }
            _ => 2.0,
        };
        KFiber {
            sol,
            k: k.to_vec(),
            variant,
            order: block_order(disc, k),
            cache: (0..disc.blocks.len()).map(|_| OnceLock::new()).collect(),
            bound,
        }
    }

    fn sandwiched(&self) -> bool {
        self.variant == ErrorVariant::Sandwich && self.sol.disc.op.weighted()
    }

    fn eig(&self, c: usize) -> &BlockEig {
        self.cache[c].get_or_init(|| {
            let disc = &self.sol.disc;
            let exact = linalg::herm_eig(&disc.fiber(c, &self.k, fiber_variant(disc, self.variant), None).matrix);
            let g0 = &self.sol.correctors.g0;
            let f0 = &self.sol.correctors.f0;
            let effective = disc.blocks[c]
                .modes
                .iter()
                .map(|&i| {
                    let xi: Vec<f64> = disc.modes.vecs[i].iter().zip(&self.k).map(|(b, k)| b + k).collect();
                    let b = disc.op.symbol.at(&xi);
                    let a = b.adjoint() * g0 * &b;
                    let a = if self.sandwiched() { f0 * a * f0 } else { a };
                    linalg::herm_eig(&a)
                })
                .collect();
            BlockEig { exact, effective }
        })
    }

    /// e^{-i·phase·A(k)} on block c.
    pub fn propagator(&self, c: usize, phase: f64) -> CMat {
        self.eig(c).exact.propagator(phase)
    }

    /// e^{-i·phase·A⁰(k)} on block c.
    pub fn effective_propagator(&self, c: usize, phase: f64) -> CMat {
        let eff = &self.eig(c).effective;
        let n = self.sol.disc.op.n();
        let mut out = linalg::zeros(n * eff.len(), n * eff.len());
        for (i, e) in eff.iter().enumerate() {
            out.view_mut((i * n, i * n), (n, n)).copy_from(&e.propagator(phase));
        }
        out
    }

    /// Unsmoothed difference of the propagators on block c.
    pub fn difference(&self, c: usize, phase: f64) -> CMat {
        let u = self.propagator(c, phase);
        let u0 = self.effective_propagator(c, phase);
        if !self.sandwiched() {
            return u - u0;
        }
        let blk = &self.sol.disc.blocks[c];
        let (f, fi) = (blk.f.as_ref().expect("weighted block"), blk.f_inv.as_ref().expect("weighted block"));
        let count = blk.modes.len();
        let f0 = &self.sol.correctors.f0;
        let f0_inv = linalg::inverse(f0, "f0").expect("f0 is positive definite");
        f * u * fi - ModeSet::repeat(f0, count) * u0 * ModeSet::repeat(&f0_inv, count)
    }

    fn block_error(&self, c: usize, eps: f64, tau: f64, s: f64) -> f64 {
        let disc = &self.sol.disc;
        let n = disc.op.n();
        let mut j = self.difference(c, tau / (eps * eps));
        for (i, &mi) in disc.blocks[c].modes.iter().enumerate() {
            let w = smoothing_weight(shifted_norm(disc.modes.vecs[mi].as_slice(), &self.k), eps, s);
            j.columns_mut(i * n, n).scale_mut(w);
        }
        linalg::spectral_norm(&j)
    }

    /// ‖J(k, ε; τ) R(k, ε)^{s/2}‖.
    pub fn error(&self, eps: f64, tau: f64, s: f64) -> ErrorValue {
        let mut best = ErrorValue { value: 0.0, component: self.order[0].0 };
        if tau == 0.0 {
            return best;
        }
        for &(c, dist) in &self.order {
            // blocks are sorted by distance, so the bound only decreases from here
            if self.bound * smoothing_weight(dist, eps, s) <= best.value {
                break;
            }
            let v = self.block_error(c, eps, tau, s);
            if v > best.value {
                best = ErrorValue { value: v, component: c };
            }
        }
        best
    }
}

/// Convenience wrapper around a single `KFiber` evaluation.
pub fn exp_error(sol: &CellSolution, k: &[f64], eps: f64, tau: f64, s: f64, variant: ErrorVariant) -> f64 {
    KFiber::new(sol, k, variant).error(eps, tau, s).value
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRecord {
    pub variant: ErrorVariant,
    pub s: f64,
    pub eps: f64,
    pub tau: f64,
    /// |k|, or the maximizing |k| for a sup record.
    pub t: f64,
    pub theta_index: usize,
    pub k: Vec<f64>,
    /// Maximum over the k-grid rather than a single cell.
    pub sup: bool,
    pub value: f64,
    /// value / ((1 + |τ|) ε).
    pub ratio_linear: f64,
    /// value / ((1 + |τ|^{1/2}) ε).
    pub ratio_sqrt: f64,
    pub component: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorScan {
    pub variant: ErrorVariant,
    pub cells: Vec<ScanRecord>,
    pub sup: Vec<ScanRecord>,
}

impl ErrorScan {
    pub fn sup_for(&self, s: f64, eps: f64, tau: f64) -> Option<&ScanRecord> {
        self.sup.iter().find(|r| r.s == s && r.eps == eps && r.tau == tau)
    }

    /// max/min of a ratio over the sup records with smoothing exponent s.
    pub fn ratio_spread(&self, s: f64, ratio: impl Fn(&ScanRecord) -> f64) -> f64 {
        let vals: Vec<f64> = self.sup.iter().filter(|r| r.s == s).map(ratio).collect();
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

/// Polar k-grid: log-spaced |k| in [t_min_factor·r0, r0] times the direction grid.
pub fn k_grid(disc: &Discretization, spec: &ScanSpec) -> Vec<(f64, usize, Vec<f64>)> {
    let r0 = disc.op.lattice.r0;
    let ts = log_spaced(spec.t_min_factor * r0, r0, spec.t_count);
    let dirs = theta_grid(disc.op.d(), spec.theta_count);
    let mut out = Vec::with_capacity(ts.len() * dirs.len());
    for (ti, th) in dirs.iter().enumerate() {
        for &t in &ts {
            out.push((t, ti, th.iter().map(|x| x * t).collect()));
        }
    }
    out
}

fn log_spaced(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![b];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..count).map(|i| (la + (lb - la) * i as f64 / (count - 1) as f64).exp()).collect()
}

fn record(variant: ErrorVariant, s: f64, eps: f64, tau: f64, t: f64, theta_index: usize, k: &[f64], ev: ErrorValue) -> ScanRecord {
    ScanRecord {
        variant,
        s,
        eps,
        tau,
        t,
        theta_index,
        k: k.to_vec(),
        sup: false,
        value: ev.value,
        ratio_linear: ev.value / ((1.0 + tau.abs()) * eps),
        ratio_sqrt: ev.value / ((1.0 + tau.abs().sqrt()) * eps),
        component: ev.component,
    }
}

/// Errors over the k-grid for every (s, ε, τ) in `spec`, plus the sup over k.
pub fn scan_errors(sol: &CellSolution, spec: &ScanSpec, variant: ErrorVariant) -> ErrorScan {
    let grid = k_grid(&sol.disc, spec);
    let per_k: Vec<Vec<ScanRecord>> = grid
        .par_iter()
        .map(|(t, ti, k)| {
            let fiber = KFiber::new(sol, k, variant);
            let mut out = Vec::with_capacity(spec.s.len() * spec.eps.len() * spec.tau.len());
            for &s in &spec.s {
                for &eps in &spec.eps {
                    for &tau in &spec.tau {
                        out.push(record(variant, s, eps, tau, *t, *ti, k, fiber.error(eps, tau, s)));
                    }
                }
            }
            out
        })
        .collect();
    let cells: Vec<ScanRecord> = per_k.into_iter().flatten().collect();
    let combos = spec.s.len() * spec.eps.len() * spec.tau.len();
    let sup = (0..combos)
        .filter_map(|j| {
            let best = cells.iter().skip(j).step_by(combos).fold(None::<&ScanRecord>, |acc, r| match acc {
                Some(a) if a.value >= r.value => Some(a),
                _ => Some(r),
            })?;
            Some(ScanRecord { sup: true, ..best.clone() })
        })
        .collect();
    ErrorScan { variant, cells, sup }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitRecord {
    pub branch: usize,
    pub gamma_fit: f64,
    pub gamma_formula: f64,
    pub mu_fit: f64,
    pub mu_formula: f64,
    pub nu_fit: f64,
    /// ν refit with γ, μ fixed at the formula values.
    pub nu_decoupled: f64,
    pub nu_formula: f64,
    pub residual: f64,
    pub min_overlap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BandFit {
    pub theta: Vec<f64>,
    pub t0: f64,
    pub branches: Vec<FitRecord>,
    /// max |γ_fit − γ| / |γ|.
    pub gamma_rel_dev: f64,
    /// max |μ_fit − μ| / max(|μ|, 1e-3 γ).
    pub mu_rel_dev: f64,
    /// max |ν_decoupled − ν| / max(|ν|, 1e-3 γ).
    pub nu_rel_dev: f64,
}

/// Coordinates of Ker X0 in the zero-mode space C^n, bordered by f when present.
fn kernel_to_formula(disc: &Discretization, kernel: &CMat) -> CMat {
    let e = disc.zero_embedding();
    match &disc.blocks[0].f {
        Some(f) => e.adjoint() * f * kernel,
        None => e.adjoint() * kernel,
    }
}

/// Fit λ_l(tθ) = γt² + μt³ + νt⁴ + … on the block containing the constants and
/// compare with the germ formulas.
pub fn fit_band_expansion(sol: &CellSolution, theta: &[f64], window: &FitWindow) -> Result<BandFit> {
    let pack = sol.germ_at(theta)?;
    let fam = sol.disc.pencil(theta)?;
    let to_formula = kernel_to_formula(&sol.disc, &fam.kernel);
    let branches = &pack.structure.branches;
    let fits = fit_branch_expansion(&fam, branches, &to_formula, window)?;
    let scale = pack.gammas().iter().fold(0.0f64, |a, g| a.max(g.abs()));
    // coefficients below 1e-3 of the germ scale are compared on the absolute scale
    let floor = 1e-3 * scale;
    let (mut dg, mut dm, mut dn) = (0.0f64, 0.0f64, 0.0f64);
    let records = fits
        .iter()
        .map(|f| {
            let b = &branches[f.formula_index];
            dg = dg.max((f.gamma - b.gamma).abs() / b.gamma.abs());
            dm = dm.max((f.mu - b.mu).abs() / b.mu.abs().max(floor));
            dn = dn.max((f.nu_decoupled - b.nu).abs() / b.nu.abs().max(floor));
            FitRecord {
                branch: f.formula_index,
                gamma_fit: f.gamma,
                gamma_formula: b.gamma,
                mu_fit: f.mu,
                mu_formula: b.mu,
                nu_fit: f.nu,
                nu_decoupled: f.nu_decoupled,
                nu_formula: b.nu,
                residual: f.residual,
                min_overlap: f.min_overlap,
            }
        })
        .collect();
    Ok(BandFit { theta: theta.to_vec(), t0: fam.t0, branches: records, gamma_rel_dev: dg, mu_rel_dev: dm, nu_rel_dev: dn })
}

/// Sharpness probe at k = t·θ with the probe point from the germ coefficients.
/// Germ and pencil along one direction, shared by a series of probes.
pub struct ProbeSetup<'a> {
    sol: &'a CellSolution,
    theta: Vec<f64>,
    pack: GermPack,
    fam: PencilFamily,
    to_formula: CMat,
}

impl<'a> ProbeSetup<'a> {
    pub fn new(sol: &'a CellSolution, theta: &[f64]) -> Result<Self> {
        let pack = sol.germ_at(theta)?;
        let fam = sol.disc.pencil(theta)?;
        let to_formula = kernel_to_formula(&sol.disc, &fam.kernel);
        Ok(ProbeSetup { sol, theta: theta.to_vec(), pack, fam, to_formula })
    }

    pub fn probe(&self, eps: f64, tau: f64, kind: ProbeKind) -> Result<ProbeRecord> {
        let branches = &self.pack.structure.branches;
        let scale = self.pack.gammas().iter().fold(0.0f64, |a, g| a.max(g.abs()));
        let (j, coefficient, t, s) = probe_point(branches, scale, eps, tau, kind)?;
        let se = small_eigenpairs(&self.fam, t)?;
        let coords = normalized(&(&self.to_formula * &se.kernel_part));
        let b = &branches[j];
        let (l, _) = linalg::best_overlap(&(&b.vector / linalg::re(b.vector.norm())), &coords);
        let dev = se.values[l] - b.gamma * t * t;
        let k: Vec<f64> = self.theta.iter().map(|x| x * t).collect();
        let value = exp_error(self.sol, &k, eps, tau, s, ErrorVariant::native(&self.sol.disc));
        Ok(probe_record(kind, j, coefficient, t, self.fam.t0, eps, tau, dev, value))
    }
}

pub fn sharpness_probe(sol: &CellSolution, theta: &[f64], eps: f64, tau: f64, kind: ProbeKind) -> Result<ProbeRecord> {
    ProbeSetup::new(sol, theta)?.probe(eps, tau, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn one_d() -> CellSolution {
        let sc = Scenario::load("1d_scalar").unwrap();
        CellSolution::new(Discretization::new(sc.op, sc.cutoff).unwrap()).unwrap()
    }

    #[test]
    fn zero_time_gives_zero() {
        let sol = one_d();
        assert_eq!(exp_error(&sol, &[0.1], 0.05, 0.0, 3.0, ErrorVariant::Hat), 0.0);
    }

    #[test]
    fn propagator_is_unitary_and_obeys_group_law() {
        let sol = one_d();
        let f = KFiber::new(&sol, &[0.2], ErrorVariant::Hat);
        let u = f.propagator(0, 3.0);
        let id = linalg::eye(u.nrows());
        assert!((u.adjoint() * &u - &id).norm() < 1e-12);
        assert!((linalg::spectral_norm(&u) - 1.0).abs() < 1e-12);
        let w = f.propagator(0, 1.0) * f.propagator(0, 2.0);
        assert!((w - u).norm() < 1e-10);
    }

    #[test]
    fn weights_at_zero_mode() {
        let sol = one_d();
        let w = SmoothingWeights::new(&sol.disc.modes, &[0.3], 0.1, 3.0);
        let z = sol.disc.modes.zero;
        assert!((w.weights[z] - (0.01f64 / 0.1).powf(1.5)).abs() < 1e-15);
        assert!(w.weights.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn error_decreases_with_smoothing() {
        let sol = one_d();
        let f = KFiber::new(&sol, &[0.1], ErrorVariant::Hat);
        let v: Vec<f64> = [0.0, 1.0, 2.0, 3.0].iter().map(|&s| f.error(0.05, 1.0, s).value).collect();
        assert!(v.windows(2).all(|p| p[1] <= p[0] + 1e-15));
        assert!(v[0] <= 2.0 + 1e-12);
    }
}
