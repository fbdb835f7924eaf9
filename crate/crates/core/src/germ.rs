//! Direction-dependent threshold characteristics of the periodic operator.

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{CorrectorSet, Discretization, ModeSet};
use crate::error::Result;
use crate::lattice::theta_grid;
use crate::linalg::{self, CMat};
use crate::pencil::{compute_threshold_set, germ_structure, GermInputs, GermStructure, CLUSTER_REL_TOL};

/// "Identically zero" threshold relative to the germ scale.
pub const ZERO_REL_TOL: f64 = 1e-9;

/// Discretized operator together with its cell-problem solutions.
#[derive(Clone, Debug)]
pub struct CellSolution {
    pub disc: Discretization,
    pub correctors: CorrectorSet,
}

#[derive(Clone, Debug)]
pub struct GermPack {
    pub theta: Vec<f64>,
    /// b(θ)* g⁰ b(θ).
    pub s_hat: CMat,
    pub q_bar: CMat,
    pub f0: CMat,
    /// b(θ)* L(θ) b(θ), or its Q-normalized version when f is present.
    pub n: CMat,
    /// b(θ)* L₂(θ) b(θ).
    pub n1: CMat,
    /// b(θ)* mean(Λ* Q Λ) b(θ).
    pub zz: CMat,
    pub structure: GermStructure,
}

impl GermPack {
    pub fn gammas(&self) -> &[f64] {
        &self.structure.gammas
    }

    pub fn n0(&self) -> &CMat {
        &self.structure.n0
    }

    pub fn nstar(&self) -> &CMat {
        &self.structure.nstar
    }

    pub fn mus(&self) -> Vec<f64> {
        self.structure.branches.iter().map(|b| b.mu).collect()
    }

    pub fn nus(&self) -> Vec<f64> {
        self.structure.branches.iter().map(|b| b.nu).collect()
    }

    pub fn scale(&self) -> f64 {
        linalg::spectral_norm(&self.s_hat)
    }
}

impl CellSolution {
    pub fn new(disc: Discretization) -> Result<Self> {
        let correctors = disc.solve_correctors()?;
        Ok(CellSolution { disc, correctors })
    }

    fn count(&self) -> usize {
        self.disc.blocks[0].modes.len()
    }

    fn b_theta(&self, theta: &[f64]) -> CMat {
        self.disc.op.symbol.at(theta)
    }

    /// L(θ) = mean(Λ* b(θ)* g̃ + g̃* b(θ) Λ), with Λ_Q in the weighted case.
    pub fn l_operator(&self, theta: &[f64]) -> CMat {
        let a = &self.correctors.arrays;
        let bt = ModeSet::repeat(&self.b_theta(theta).adjoint(), self.count());
        let half = a.lambda_q.adjoint() * bt * &a.g_tilde;
        &half + half.adjoint()
    }

    /// Λ⁽²⁾(θ) = Σ θ_l Λ⁽²⁾_l as stacked coefficients.
    fn lambda2_at(&self, theta: &[f64]) -> CMat {
        let a = &self.correctors.arrays;
        let mut out = linalg::zeros(a.lambda.nrows(), a.lambda.ncols());
        for (l, x) in a.lambda2.iter().enumerate() {
            out += x.scale(theta[l]);
        }
        out
    }

    /// L₂(θ): the g̃ cross term plus the g-energy of b(D)Λ⁽²⁾(θ) + b(θ)Λ.
    pub fn l2_operator(&self, theta: &[f64]) -> CMat {
        let a = &self.correctors.arrays;
        let blk = &self.disc.blocks[0];
        let count = self.count();
        let bt = self.b_theta(theta);
        let l2 = self.lambda2_at(theta);
        let half = l2.adjoint() * ModeSet::repeat(&bt.adjoint(), count) * &a.g_tilde;
        let zero_k = vec![0.0; self.disc.op.d()];
        let b0 = self.disc.modes.symbol_blocks(&self.disc.op.symbol, &zero_k, &blk.modes);
        let w = b0 * &l2 + ModeSet::repeat(&bt, count) * &a.lambda_q;
        &half + half.adjoint() + w.adjoint() * &blk.g * &w
    }

    /// mean(Λ* Q Λ) with Λ_Q and Q = 1 in the unweighted case.
    pub fn lambda_gram(&self) -> CMat {
        let a = &self.correctors.arrays;
        linalg::hermitian_part(&(a.lambda_q.adjoint() * &a.q_conv * &a.lambda_q))
    }

    pub fn n_operator_at(&self, theta: &[f64]) -> CMat {
        let bt = self.b_theta(theta);
        linalg::hermitian_part(&(bt.adjoint() * self.l_operator(theta) * &bt))
    }

    pub fn germ_at(&self, theta: &[f64]) -> Result<GermPack> {
        let c = &self.correctors;
        let bt = self.b_theta(theta);
        let s_hat = linalg::hermitian_part(&(bt.adjoint() * &c.g0 * &bt));
        let n = self.n_operator_at(theta);
        let n1 = linalg::hermitian_part(&(bt.adjoint() * self.l2_operator(theta) * &bt));
        let zz = linalg::hermitian_part(&(bt.adjoint() * self.lambda_gram() * &bt));
        let inputs = GermInputs { s: s_hat.clone(), q: c.q_bar.clone(), n: n.clone(), n1: n1.clone(), zz: zz.clone(), w: None };
        let structure = germ_structure(&inputs)?;
        Ok(GermPack { theta: theta.to_vec(), s_hat, q_bar: c.q_bar.clone(), f0: c.f0.clone(), n, n1, zz, structure })
    }

    /// The germ lower bound c_* of the operator (ĉ_* when f = 1).
    pub fn c_star(&self) -> f64 {
        self.disc.op.c_star()
    }

    /// N_Q(θ) two ways: the corrector formula and E*(F*)⁻¹ N F⁻¹ E with N the
    /// threshold operator of the discretized pencil. Returns the relative
    /// difference, or `None` when f = 1.
    pub fn n_q_two_way(&self, theta: &[f64]) -> Result<Option<NqComparison>> {
        let Some(f) = self.disc.blocks[0].f.as_ref() else { return Ok(None) };
        let fam = self.disc.pencil(theta)?;
        let thr = compute_threshold_set(&fam)?;
        let f_inv = linalg::inverse(f, "[f]")?;
        let e = self.disc.zero_embedding();
        let pulled = linalg::hermitian_part(&(e.adjoint() * f_inv.adjoint() * &thr.n_op * &f_inv * &e));
        let formula = self.n_operator_at(theta);
        let bt = self.b_theta(theta);
        let scale = linalg::spectral_norm(&(bt.adjoint() * &self.correctors.g0 * &bt)) + linalg::spectral_norm(&formula);
        let rel = (&pulled - &formula).norm() / scale;
        Ok(Some(NqComparison { theta: theta.to_vec(), formula, pulled, rel }))
    }

    pub fn scan_conditions(&self, count: usize) -> Result<ThetaScan> {
        let grid = theta_grid(self.disc.op.d(), count);
        let packs: Vec<GermPack> =
            grid.par_iter().map(|th| self.germ_at(th.as_slice())).collect::<Result<Vec<_>>>()?;
        Ok(ThetaScan::from_packs(&packs, self.c_star()))
    }
}

#[derive(Clone, Debug)]
pub struct NqComparison {
    pub theta: Vec<f64>,
    pub formula: CMat,
    pub pulled: CMat,
    /// ‖pulled − formula‖ / (‖Ŝ‖ + ‖N_Q‖).
    pub rel: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaRecord {
    pub theta: Vec<f64>,
    pub gammas: Vec<f64>,
    pub mus: Vec<f64>,
    pub nus: Vec<f64>,
    pub n_norm: f64,
    pub n0_norm: f64,
    pub nstar_norm: f64,
    pub clusters: usize,
    /// The signed value of N when n = 1.
    pub n_scalar: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoupledPair {
    pub k: usize,
    pub r: usize,
    pub max_block: f64,
    pub min_gap: f64,
    pub crosses: bool,
    pub c_circ: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaScan {
    pub records: Vec<ThetaRecord>,
    pub scale: f64,
    pub n_identically_zero: bool,
    pub n0_identically_zero: bool,
    pub max_n: f64,
    pub max_n0: f64,
    pub max_hermiticity_defect: f64,
    /// max ‖N(−θ) + N(θ)‖ over antipodal pairs present in the grid.
    pub odd_symmetry_defect: f64,
    /// θ where the number of distinct germ eigenvalues differs from the grid majority.
    pub multiplicity_changes: Vec<usize>,
    pub coupled: Vec<CoupledPair>,
    /// min over coupled pairs; `None` when no pair couples.
    pub c_circ: Option<f64>,
    /// A coupled pair of branches crosses somewhere on the grid.
    pub coupled_crossing: bool,
}

impl ThetaScan {
    pub fn from_packs(packs: &[GermPack], c_star: f64) -> Self {
        let scale = packs.iter().map(GermPack::scale).fold(0.0, f64::max);
        let n = packs.first().map(|p| p.s_hat.nrows()).unwrap_or(0);
        let tol = ZERO_REL_TOL * scale.max(f64::MIN_POSITIVE);
        let mut records = Vec::with_capacity(packs.len());
        let mut herm = 0.0f64;
        let mut block_max = vec![vec![0.0f64; n]; n];
        let mut gap_min = vec![vec![f64::INFINITY; n]; n];
        let mut c_min = vec![vec![f64::INFINITY; n]; n];
        for p in packs {
            herm = herm.max(linalg::hermiticity_defect(&p.n)).max(linalg::hermiticity_defect(&p.n1));
            let g = p.gammas();
            // eigenvalue index → cluster basis
            let mut cluster_of = vec![0; n];
            for (ci, c) in p.structure.clusters.iter().enumerate() {
                for i in c.start..c.start + c.multiplicity() {
                    cluster_of[i] = ci;
                }
            }
            for k in 0..n {
                for r in 0..n {
                    if k == r {
                        continue;
                    }
                    let (ck, cr) = (&p.structure.clusters[cluster_of[k]], &p.structure.clusters[cluster_of[r]]);
                    let blk = if cluster_of[k] == cluster_of[r] {
                        0.0
                    } else {
                        (ck.basis.adjoint() * &p.n * &cr.basis).norm()
                    };
                    block_max[k][r] = block_max[k][r].max(blk);
                    let gap = (g[k] - g[r]).abs();
                    gap_min[k][r] = gap_min[k][r].min(gap);
                    c_min[k][r] = c_min[k][r].min(c_star.min(gap / n as f64));
                }
            }
            records.push(ThetaRecord {
                theta: p.theta.clone(),
                gammas: g.to_vec(),
                mus: p.mus(),
                nus: p.nus(),
                n_norm: linalg::spectral_norm(&p.n),
                n0_norm: linalg::spectral_norm(p.n0()),
                nstar_norm: linalg::spectral_norm(p.nstar()),
                clusters: p.structure.clusters.len(),
                n_scalar: (n == 1).then(|| p.n[(0, 0)].re),
            });
        }
        let max_n = records.iter().map(|r| r.n_norm).fold(0.0, f64::max);
        let max_n0 = records.iter().map(|r| r.n0_norm).fold(0.0, f64::max);

        let mut odd = 0.0f64;
        for (i, p) in packs.iter().enumerate() {
            for q in &packs[i + 1..] {
                let anti = p.theta.iter().zip(&q.theta).all(|(a, b)| (a + b).abs() < 1e-12);
                if anti {
                    odd = odd.max((&p.n + &q.n).norm());
                }
            }
        }

        let mut counts = std::collections::BTreeMap::new();
        for r in &records {
            *counts.entry(r.clusters).or_insert(0usize) += 1;
        }
        let majority = counts.iter().max_by_key(|(_, &c)| c).map(|(&k, _)| k).unwrap_or(0);
        let multiplicity_changes =
            records.iter().enumerate().filter(|(_, r)| r.clusters != majority).map(|(i, _)| i).collect();

        let mut coupled = Vec::new();
        let cross_tol = CLUSTER_REL_TOL * scale.max(f64::MIN_POSITIVE);
        for k in 0..n {
            for r in k + 1..n {
                let mb = block_max[k][r].max(block_max[r][k]);
                if mb > tol {
                    let crosses = gap_min[k][r] <= cross_tol;
                    coupled.push(CoupledPair { k, r, max_block: mb, min_gap: gap_min[k][r], crosses, c_circ: c_min[k][r] });
                }
            }
        }
        let c_circ = coupled.iter().map(|c| c.c_circ).reduce(f64::min);
        let coupled_crossing = coupled.iter().any(|c| c.crosses);
        ThetaScan {
            records,
            scale,
            n_identically_zero: max_n <= tol,
            n0_identically_zero: max_n0 <= tol,
            max_n,
            max_n0,
            max_hermiticity_defect: herm,
            odd_symmetry_defect: odd,
            multiplicity_changes,
            coupled,
            c_circ,
            coupled_crossing,
        }
    }
}
