use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

use super::PencilFamily;

/// Germ eigenvalues closer than this (relative to the largest) form one cluster.
pub const CLUSTER_REL_TOL: f64 = 1e-8;
/// Eigenvalues of the cluster-compressed N closer than this (relative to ‖S‖ + ‖N‖) share a subcluster.
pub const SUBCLUSTER_REL_TOL: f64 = 1e-7;

/// Solutions of the two auxiliary problems on Ker X0, as operators on H.
#[derive(Clone, Debug)]
pub struct Correctors {
    pub z: CMat,
    pub r: CMat,
    pub z2: CMat,
    pub r2: CMat,
    /// ‖X0*(X0 Z + X1 P)‖ relative to ‖X0‖‖X1‖.
    pub z_residual: f64,
    /// Component of the Z2 right side inside Ker X0, relative to its size.
    pub z2_solvability: f64,
}

pub fn compute_correctors(fam: &PencilFamily) -> Result<Correctors> {
    let h = fam.dim_h();
    let pinv = fam.a0_split.pinv();
    let x0a = fam.x0.adjoint();
    let x1 = &fam.x1;
    let z = -(&pinv * &x0a * x1 * &fam.p);
    let r = &fam.x0 * &z + x1 * &fam.p;

    let scale = linalg::spectral_norm(&fam.x0) * linalg::spectral_norm(x1);
    let z_residual = if scale > 0.0 { (&x0a * &r).norm() / scale } else { 0.0 };
    if z_residual > 1e-10 {
        return Err(Error::SolveFailure { what: "first corrector".into(), residual: z_residual });
    }

    let p_perp = linalg::eye(h) - &fam.p;
    let term_a = &x0a * x1 * &z;
    let term_b = &p_perp * x1.adjoint() * &r;
    let rhs = -(&term_a) - &term_b;
    let rhs_scale = term_a.norm() + term_b.norm();
    let z2_solvability = if rhs_scale > 0.0 { (&fam.p * &rhs).norm() / rhs_scale } else { 0.0 };
    if z2_solvability > 1e-10 {
        return Err(Error::SolveFailure { what: "second corrector".into(), residual: z2_solvability });
    }
    let z2 = &pinv * &rhs;
    let r2 = &fam.x0 * &z2 + x1 * &z;
    Ok(Correctors { z, r, z2, r2, z_residual, z2_solvability })
}

/// Matrices on the n-dimensional kernel that determine the branch coefficients.
///
/// `q` is the weight of the generalized germ problem. `w` is an explicit
/// weight inserted between the germ and the corrector Gram matrix and inside
/// the cross-cluster sum; `None` uses Q⁻¹ and the Q-orthonormal cluster
/// Gram matrices, which is what a change of variables ζ = Mω produces.
/// Both choices agree when q is the identity.
#[derive(Clone, Debug)]
pub struct GermInputs {
    pub s: CMat,
    pub q: CMat,
    pub n: CMat,
    pub n1: CMat,
    pub zz: CMat,
    pub w: Option<CMat>,
}

impl GermInputs {
    pub fn plain(s: CMat, n: CMat, n1: CMat, zz: CMat) -> Self {
        let k = s.nrows();
        GermInputs { s, q: linalg::eye(k), n, n1, zz, w: None }
    }
}

#[derive(Clone, Debug)]
pub struct SubCluster {
    pub mu: f64,
    /// Q-orthonormal basis of the subcluster.
    pub basis: CMat,
    /// Fourth-order block in that basis.
    pub nu_block: CMat,
    pub nu: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Cluster {
    pub gamma: f64,
    pub start: usize,
    pub basis: CMat,
    pub subclusters: Vec<SubCluster>,
}

impl Cluster {
    pub fn multiplicity(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub gamma: f64,
    pub mu: f64,
    pub nu: f64,
    pub vector: CVec,
    pub cluster: usize,
    pub subcluster: usize,
}

#[derive(Clone, Debug)]
pub struct GermStructure {
    pub gammas: Vec<f64>,
    /// Q-orthonormal germ eigenvectors, one per column.
    pub zeta: CMat,
    pub clusters: Vec<Cluster>,
    pub n0: CMat,
    pub nstar: CMat,
    pub branches: Vec<Branch>,
}

fn group(values: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > tol {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn orth_projector(cols: &CMat) -> CMat {
    let gram = cols.adjoint() * cols;
    let inv = gram.try_inverse().expect("cluster basis is linearly independent");
    cols * inv * cols.adjoint()
}

/// Clusters, subclusters and the second- to fourth-order coefficients of every branch.
pub fn germ_structure(inp: &GermInputs) -> Result<GermStructure> {
    let k = inp.s.nrows();
    let q_isqrt = linalg::inv_sqrt(&inp.q);
    let e = linalg::herm_eig(&(&q_isqrt * &inp.s * &q_isqrt));
    let zeta = &q_isqrt * &e.vectors;
    let gammas = e.values.clone();
    let gmax = gammas.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let ranges = group(&gammas, CLUSTER_REL_TOL * gmax.max(f64::MIN_POSITIVE));

    let n_norm = linalg::spectral_norm(&inp.n);
    let mu_tol = SUBCLUSTER_REL_TOL * (gmax + n_norm).max(f64::MIN_POSITIVE);
    let cluster_bases: Vec<CMat> =
        ranges.iter().map(|r| zeta.columns(r.start, r.len()).into_owned()).collect();
    let cluster_gammas: Vec<f64> =
        ranges.iter().map(|r| gammas[r.clone()].iter().sum::<f64>() / r.len() as f64).collect();
    let (w, cross): (CMat, Vec<CMat>) = match &inp.w {
        Some(w) => (
            w.clone(),
            cluster_bases.iter().map(|b| {
                let p = orth_projector(b);
                &p * w * &p
            }).collect(),
        ),
        None => (
            linalg::inverse(&inp.q, "germ weight")?,
            cluster_bases.iter().map(|b| b * b.adjoint()).collect(),
        ),
    };

    let t_op = &inp.n1 - (&inp.zz * &w * &inp.s + &inp.s * &w * &inp.zz).scale(0.5);
    let mut clusters = Vec::new();
    let mut branches = Vec::new();
    let mut n0 = linalg::zeros(k, k);
    for (qi, r) in ranges.iter().enumerate() {
        let zq = &cluster_bases[qi];
        let skew = zq * zq.adjoint() * &inp.q;
        n0 += skew.adjoint() * &inp.n * &skew;

        let nq = zq.adjoint() * &inp.n * zq;
        let ne = linalg::herm_eig(&nq);
        let mut subs = Vec::new();
        for (si, sr) in group(&ne.values, mu_tol).into_iter().enumerate() {
            let mu = ne.values[sr.clone()].iter().sum::<f64>() / sr.len() as f64;
            let wb = zq * ne.vectors.columns(sr.start, sr.len());
            let mut block = wb.adjoint() * &t_op * &wb;
            for (j, gj) in cross.iter().enumerate() {
                if j == qi {
                    continue;
                }
                let denom = cluster_gammas[qi] - cluster_gammas[j];
                block += (wb.adjoint() * &inp.n * gj * &inp.n * &wb).scale(1.0 / denom);
            }
            let block = linalg::hermitian_part(&block);
            let be = linalg::herm_eig(&block);
            for (b, &nu) in be.values.iter().enumerate() {
                let v = &wb * be.vectors.column(b);
                branches.push(Branch {
                    gamma: cluster_gammas[qi],
                    mu: ne.values[sr.start + b],
                    nu,
                    vector: v,
                    cluster: qi,
                    subcluster: si,
                });
            }
            subs.push(SubCluster { mu, basis: wb, nu_block: block, nu: be.values.clone() });
        }
        clusters.push(Cluster { gamma: cluster_gammas[qi], start: r.start, basis: zq.clone(), subclusters: subs });
    }
    let n0 = linalg::hermitian_part(&n0);
    let nstar = &inp.n - &n0;
    Ok(GermStructure { gammas, zeta, clusters, n0, nstar, branches })
}

/// Threshold objects of a factorized family, with kernel quantities in the
/// orthonormal basis `fam.kernel`.
#[derive(Clone, Debug)]
pub struct ThresholdSet {
    pub correctors: Correctors,
    /// Germ on Ker X0 (n × n).
    pub s: CMat,
    /// S P as an operator on H.
    pub sp: CMat,
    /// N as an operator on H.
    pub n_op: CMat,
    pub k0: CMat,
    /// K = K0 + N on H.
    pub k: CMat,
    pub n: CMat,
    pub n0: CMat,
    pub nstar: CMat,
    pub n1_0: CMat,
    pub zz: CMat,
    pub germ: GermStructure,
    pub c_star: f64,
}

pub fn compute_threshold_set(fam: &PencilFamily) -> Result<ThresholdSet> {
    let c = compute_correctors(fam)?;
    let v = &fam.kernel;
    let x1a = fam.x1.adjoint();
    let sp = c.r.adjoint() * &c.r;
    let s = linalg::hermitian_part(&(v.adjoint() * &sp * v));
    let se = linalg::herm_eig(&s);
    let c_star = se.values[0];
    let s_norm = se.values.last().copied().unwrap_or(0.0);
    if !(c_star > 1e-12 * s_norm.max(f64::MIN_POSITIVE)) || s_norm == 0.0 {
        return Err(Error::DegenerateGerm { min_eig: c_star });
    }
    let n_op = c.z.adjoint() * &x1a * &c.r + c.r.adjoint() * &fam.x1 * &c.z;
    let k0 = &c.z * &sp + &sp * c.z.adjoint();
    let k = &k0 + &n_op;
    let n1_op = c.z2.adjoint() * &x1a * &c.r + c.r.adjoint() * &fam.x1 * &c.z2 + c.r2.adjoint() * &c.r2;
    let compress = |a: &CMat| linalg::hermitian_part(&(v.adjoint() * a * v));
    let n = compress(&n_op);
    let n1_0 = compress(&n1_op);
    let zz = compress(&(c.z.adjoint() * &c.z));
    let germ = germ_structure(&GermInputs::plain(s.clone(), n.clone(), n1_0.clone(), zz.clone()))?;
    Ok(ThresholdSet {
        correctors: c,
        n0: germ.n0.clone(),
        nstar: germ.nstar.clone(),
        s,
        sp,
        n_op,
        k0,
        k,
        n,
        n1_0,
        zz,
        germ,
        c_star,
    })
}

impl ThresholdSet {
    /// Lift a kernel-coordinate matrix to an operator on H.
    pub fn lift(fam: &PencilFamily, a: &CMat) -> CMat {
        &fam.kernel * a * fam.kernel.adjoint()
    }

    pub fn scale(&self) -> f64 {
        linalg::spectral_norm(&self.s) + linalg::spectral_norm(&self.n)
    }

    /// Entry (N* ω_j, ω_k) over germ eigenvector pairs sharing a cluster.
    pub fn nstar_within_cluster(&self) -> f64 {
        let mut worst = 0.0f64;
        for cl in &self.germ.clusters {
            let b = &cl.basis;
            worst = worst.max((b.adjoint() * &self.nstar * b).norm());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real, C64};
    use crate::pencil::build_family;

    #[test]
    fn zero_perturbation_gives_zero_correctors() {
        let x0 = from_real(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let fam = build_family(x0, linalg::zeros(3, 3), None).unwrap();
        let c = compute_correctors(&fam).unwrap();
        for m in [&c.z, &c.r, &c.z2, &c.r2] {
            assert!(m.norm() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_elimination() {
        // X0 = diag(0,1), X1 = [[a,b],[c,d]]: ψ = -c e2, R e1 = a e1.
        let (a, b, cc, d) = (C64::new(0.7, 0.2), C64::new(-0.3, 0.1), C64::new(0.4, -0.5), C64::new(1.1, 0.0));
        let x0 = from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let x1 = CMat::from_row_slice(2, 2, &[a, b, cc, d]);
        let fam = build_family(x0, x1, None).unwrap();
        let c = compute_correctors(&fam).unwrap();
        assert!((c.z[(1, 0)] + cc).norm() < 1e-14);
        assert!(c.z[(0, 0)].norm() < 1e-14);
        assert!((c.r[(0, 0)] - a).norm() < 1e-14);
        assert!(c.r[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn grouping_respects_tolerance() {
        let g = group(&[1.0, 1.0 + 1e-12, 2.0, 3.0, 3.0], 1e-8);
        assert_eq!(g, vec![0..2, 2..3, 3..5]);
    }
}
