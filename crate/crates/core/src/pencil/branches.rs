//! Small eigenvalues of A(t) through an exact Schur reduction onto Ker X0.
//!
//! With X(t)V = tX1V the kernel block carries the factor t² exactly, so the
//! reduced problem returns λ_l(t)/t² to full relative precision even when
//! λ_l(t) is far below the rounding level of ‖A(t)‖.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, re, CMat, CVec};

use super::{Branch, PencilFamily};

/// Minimal overlap accepted between consecutive eigenvectors of one branch.
pub const TRACKING_MIN_OVERLAP: f64 = 0.7;

#[derive(Clone, Debug)]
pub struct SmallEigen {
    pub t: f64,
    /// λ_l(t)/t², ascending.
    pub scaled: Vec<f64>,
    pub values: Vec<f64>,
    /// Components along `fam.kernel` of the normalized eigenvectors (n × n).
    pub kernel_part: CMat,
    /// Normalized eigenvectors in H (dim_h × n).
    pub vectors: CMat,
    pub iterations: usize,
}

impl SmallEigen {
    /// Spectral projector F(t) for [0, δ].
    pub fn projector(&self) -> CMat {
        linalg::projector(&self.vectors)
    }

    /// A(t)F(t).
    pub fn a_f(&self) -> CMat {
        let mut w = self.vectors.clone();
        for (k, &l) in self.values.iter().enumerate() {
            for x in w.column_mut(k).iter_mut() {
                *x *= l;
            }
        }
        w * self.vectors.adjoint()
    }
}

struct Reduced {
    base: CMat,
    c: CMat,
    d: CMat,
    /// Upper-triangular R with X(t)U = QR, so the Gram matrix is R R*.
    rq: CMat,
    t: f64,
}

impl Reduced {
    fn new(fam: &PencilFamily, t: f64) -> Self {
        let xu = fam.x(t) * &fam.complement;
        let qr = xu.qr();
        let q = qr.q();
        let rq = qr.r();
        let y = &fam.x1 * &fam.kernel;
        let c = q.adjoint() * &y;
        let yperp = &y - &q * &c;
        let base = linalg::hermitian_part(&(yperp.adjoint() * &yperp));
        let d = rq.adjoint() * &rq;
        Reduced { base, c, d, rq, t }
    }

    /// (R R*)⁻¹ v by two triangular solves.
    fn gram_solve(&self, v: &CMat) -> Option<CMat> {
        let y = self.rq.solve_upper_triangular(v)?;
        self.rq.ad_solve_upper_triangular(&y)
    }

    /// (R R* − μ)⁻¹ c. Below the gap μ is a small fraction of the least
    /// eigenvalue of R R*, so the Neumann series converges fast; dense LU otherwise.
    fn shifted_solve(&self, mu: f64) -> CMat {
        let mut term = self.gram_solve(&self.c);
        if let Some(first) = term.take() {
            let mut acc = first.clone();
            let mut cur = first;
            for _ in 0..200 {
                let Some(next) = self.gram_solve(&cur) else { break };
                let prev_norm = cur.norm();
                cur = next.scale(mu);
                acc += &cur;
                if cur.norm() <= f64::EPSILON * 0.25 * acc.norm() {
                    return acc;
                }
                // slow contraction: the direct solve is cheaper
                if cur.norm() > 0.5 * prev_norm {
                    break;
                }
            }
        }
        let k = self.rq.nrows();
        let shifted = &self.rq * self.rq.adjoint() - linalg::eye(k).scale(mu);
        shifted.lu().solve(&self.c).expect("shifted Gram matrix is regular below the gap")
    }

    /// T(x) whose l-th eigenvalue equals x exactly when t²x is an eigenvalue of A(t).
    fn matrix(&self, x: f64) -> CMat {
        if self.t == 0.0 || self.c.nrows() == 0 {
            return self.base.clone();
        }
        let mu = self.t * self.t * x;
        let sol = self.shifted_solve(mu);
        linalg::hermitian_part(&(&self.base - (self.c.adjoint() * sol).scale(mu)))
    }
}

pub fn small_eigenpairs(fam: &PencilFamily, t: f64) -> Result<SmallEigen> {
    let n = fam.n;
    let red = Reduced::new(fam, t);
    let mut xs = linalg::herm_eig(&red.base).values;
    let mut iterations = 0;
    // secant on x -> λ_l(T(x)) - x, started from one fixed-point step
    for l in 0..n {
        let g = |x: f64| linalg::herm_eig(&red.matrix(x)).values[l] - x;
        let (mut a, mut ga) = (xs[l], g(xs[l]));
        let mut b = a + ga;
        for it in 0..100 {
            iterations = iterations.max(it + 1);
            let gb = g(b);
            if gb.abs() <= 4.0 * f64::EPSILON * b.abs().max(f64::MIN_POSITIVE) || gb == ga {
                break;
            }
            let next = b - gb * (b - a) / (gb - ga);
            (a, ga, b) = (b, gb, next);
        }
        xs[l] = b;
    }
    let mut kernel_part = linalg::zeros(n, n);
    let mut vectors = linalg::zeros(fam.dim_h(), n);
    for l in 0..n {
        let e = linalg::herm_eig(&red.matrix(xs[l]));
        let v: CVec = e.vectors.column(l).into_owned();
        let mut phi = &fam.kernel * &v;
        if t != 0.0 && red.c.nrows() > 0 {
            let k = red.d.nrows();
            let shifted = &red.d - linalg::eye(k).scale(t * t * xs[l]);
            let rhs = red.rq.adjoint() * &red.c * &v * re(-t);
            let w = shifted.lu().solve(&rhs).ok_or_else(|| Error::SolveFailure {
                what: "eigenvector completion".into(),
                residual: f64::INFINITY,
            })?;
            phi += &fam.complement * w;
        }
        let norm = phi.norm();
        vectors.set_column(l, &(phi / re(norm)));
        kernel_part.set_column(l, &(v / re(norm)));
    }
    let values = xs.iter().map(|x| x * t * t).collect();
    Ok(SmallEigen { t, scaled: xs, values, kernel_part, vectors, iterations })
}

#[derive(Clone, Debug)]
pub struct TrackedBranch {
    pub ts: Vec<f64>,
    /// λ(t)/t² along the branch.
    pub scaled: Vec<f64>,
    /// Kernel-coordinate part of the eigenvector at the first grid point.
    pub start_vector: CVec,
    pub min_overlap: f64,
}

/// Follow the n small branches over an increasing grid by eigenvector overlap.
pub fn track_branches(fam: &PencilFamily, ts: &[f64]) -> Result<Vec<TrackedBranch>> {
    let n = fam.n;
    let first = small_eigenpairs(fam, ts[0])?;
    let mut out: Vec<TrackedBranch> = (0..n)
        .map(|l| TrackedBranch {
            ts: vec![ts[0]],
            scaled: vec![first.scaled[l]],
            start_vector: first.kernel_part.column(l).into_owned(),
            min_overlap: 1.0,
        })
        .collect();
    let mut prev = first.vectors;
    for &t in &ts[1..] {
        let cur = small_eigenpairs(fam, t)?;
        let overlaps = prev.adjoint() * &cur.vectors;
        let assignment = greedy_assignment(&overlaps);
        let mut next = linalg::zeros(prev.nrows(), n);
        for (b, &(j, ov)) in assignment.iter().enumerate() {
            if ov < TRACKING_MIN_OVERLAP {
                return Err(Error::BranchTrackingFailure { t, overlap: ov });
            }
            out[b].ts.push(t);
            out[b].scaled.push(cur.scaled[j]);
            out[b].min_overlap = out[b].min_overlap.min(ov);
            next.set_column(b, &cur.vectors.column(j));
        }
        prev = next;
    }
    Ok(out)
}

/// For each row, the column it is matched to and the modulus of the overlap.
fn greedy_assignment(overlaps: &CMat) -> Vec<(usize, f64)> {
    let (r, c) = overlaps.shape();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            pairs.push((overlaps[(i, j)].norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut row_done = vec![false; r];
    let mut col_done = vec![false; c];
    let mut out = vec![(0, 0.0); r];
    for (ov, i, j) in pairs {
        if !row_done[i] && !col_done[j] {
            row_done[i] = true;
            col_done[j] = true;
            out[i] = (j, ov);
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct FitWindow {
    /// Window bounds as multiples of t0.
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub degree: usize,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow { lo: 1e-3, hi: 1e-2, points: 12, degree: 4 }
    }
}

impl FitWindow {
    pub fn grid(&self, t0: f64) -> Vec<f64> {
        log_grid(self.lo * t0, self.hi * t0, self.points)
    }
}

pub(crate) fn log_grid(a: f64, b: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..k).map(|i| (la + (lb - la) * i as f64 / (k - 1) as f64).exp()).collect()
}

#[derive(Clone, Debug)]
pub struct BranchFit {
    pub gamma: f64,
    pub mu: f64,
    pub nu: f64,
    /// ν from (λ − γt² − μt³)/t⁴ with γ, μ taken from the operator formulas.
    pub nu_decoupled: f64,
    pub residual: f64,
    /// Index into the formula branch list this branch was matched to.
    pub formula_index: usize,
    pub match_overlap: f64,
    pub min_overlap: f64,
}

/// Fit γ + μt + νt² + … to λ/t² on every branch and match branches to
/// formula eigenvectors. `to_formula` maps kernel coordinates to the
/// coordinates of `formula[..].vector`.
pub fn fit_branch_expansion(
    fam: &PencilFamily,
    formula: &[Branch],
    to_formula: &CMat,
    window: &FitWindow,
) -> Result<Vec<BranchFit>> {
    let ts = window.grid(fam.t0);
    let tracked = track_branches(fam, &ts)?;
    let t_hi = *ts.last().unwrap();

    let mut overlaps = linalg::zeros(tracked.len(), formula.len());
    for (i, b) in tracked.iter().enumerate() {
        let u = to_formula * &b.start_vector;
        let un = u.norm();
        for (j, f) in formula.iter().enumerate() {
            overlaps[(i, j)] = re(f.vector.dotc(&u).norm() / (un * f.vector.norm()));
        }
    }
    let assignment = greedy_assignment(&overlaps);

    let deg = window.degree;
    let vand = DMatrix::from_fn(ts.len(), deg + 1, |i, j| (ts[i] / t_hi).powi(j as i32));
    let lin = DMatrix::from_fn(ts.len(), 2, |i, j| (ts[i] / t_hi).powi(j as i32));
    let mut out = Vec::new();
    for (b, &(fi, ov)) in tracked.iter().zip(assignment.iter()) {
        let y = DVector::from_column_slice(&b.scaled);
        let coef = linalg::lstsq_real(&vand, &y);
        let resid = (&vand * &coef - &y).norm() / (ts.len() as f64).sqrt();
        let f = &formula[fi];
        let r = DVector::from_iterator(
            ts.len(),
            ts.iter().zip(&b.scaled).map(|(&t, &x)| (x - f.gamma - f.mu * t) / (t * t)),
        );
        let dc = linalg::lstsq_real(&lin, &r);
        out.push(BranchFit {
            gamma: coef[0],
            mu: coef[1] / t_hi,
            nu: coef[2] / (t_hi * t_hi),
            nu_decoupled: dc[0],
            residual: resid,
            formula_index: fi,
            match_overlap: ov,
            min_overlap: b.min_overlap,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_real;
    use crate::pencil::build_family;

    #[test]
    fn reduced_eigenvalues_match_dense() {
        let x0 = from_real(3, 3, &[0.0, 1.0, 0.2, 0.0, 0.3, 2.0, 0.0, 0.0, 0.0]);
        let x1 = from_real(3, 3, &[0.5, 0.1, 0.0, 0.2, 0.4, 0.3, 1.0, 0.0, 0.7]);
        let fam = build_family(x0, x1, None).unwrap();
        let t = 0.05;
        let se = small_eigenpairs(&fam, t).unwrap();
        let dense = linalg::herm_eig(&fam.a(t)).values;
        assert!((se.values[0] - dense[0]).abs() < 1e-14);
        let resid = fam.a(t) * se.vectors.column(0) - se.vectors.column(0) * re(se.values[0]);
        assert!(resid.norm() < 1e-13);
    }

    #[test]
    fn greedy_prefers_large_overlaps() {
        let m = from_real(2, 2, &[0.1, 0.9, 0.95, 0.2]);
        assert_eq!(greedy_assignment(&m), vec![(1, 0.9), (0, 0.95)]);
    }
}
