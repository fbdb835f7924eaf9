use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{self, CMat, C64};

use super::{build_family, compute_threshold_set, PencilFamily};

/// Shape of a generated family.
#[derive(Clone, Copy, Debug)]
pub struct FamilySpec {
    pub dim_h: usize,
    pub dim_h_star: usize,
    pub n: usize,
    pub sandwich: bool,
    /// Real entries only.
    pub real: bool,
}

impl FamilySpec {
    /// Dimensions at most 8, n in {1, 2, 3}, dim_H* ≥ dim_H so that the germ can be nondegenerate.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let n = 1 + (seed % 3) as usize;
        let dim_h = rng.gen_range(n + 1..=8);
        let dim_h_star = rng.gen_range(dim_h..=8);
        FamilySpec { dim_h, dim_h_star, n, sandwich: seed % 2 == 1, real: false }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize, real: bool) -> CMat {
    CMat::from_fn(r, c, |_, _| {
        let a: f64 = rng.sample(StandardNormal);
        if real {
            C64::new(a, 0.0)
        } else {
            let b: f64 = rng.sample(StandardNormal);
            C64::new(a, b) / 2f64.sqrt()
        }
    })
}

fn orthonormal(rng: &mut ChaCha8Rng, r: usize, c: usize, real: bool) -> CMat {
    let g = gaussian(rng, r, c, real);
    g.qr().q()
}

/// Random family with Ker X0 imposed by a projector; regenerated until
/// min eig S > 0.05 ‖S‖.
pub fn random_family(seed: u64, spec: FamilySpec) -> Result<PencilFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = orthonormal(&mut rng, spec.dim_h, spec.n, spec.real);
        let proj = linalg::eye(spec.dim_h) - &v * v.adjoint();
        let x0 = gaussian(&mut rng, spec.dim_h_star, spec.dim_h, spec.real) * proj;
        let x1 = gaussian(&mut rng, spec.dim_h_star, spec.dim_h, spec.real);
        let (x0, x1, m) = if spec.sandwich {
            let g = gaussian(&mut rng, spec.dim_h, spec.dim_h, spec.real);
            let m = linalg::eye(spec.dim_h) + g.scale(0.3 / (spec.dim_h as f64).sqrt());
            (&x0 * &m, &x1 * &m, Some(m))
        } else {
            (x0, x1, None)
        };
        let fam = match build_family(x0, x1, m) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let thr = match compute_threshold_set(&fam) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let e = linalg::herm_eig(&thr.s).values;
        if e[0] > 0.05 * e[e.len() - 1] {
            return Ok(fam);
        }
    }
}

/// Family whose perturbation maps Ker X0 into Ker X0*, so that Z = 0.
pub fn zero_corrector_family(seed: u64, dim_h: usize, dim_h_star: usize, n: usize) -> Result<PencilFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = orthonormal(&mut rng, dim_h, n, false);
        let p = &v * v.adjoint();
        let p_perp = linalg::eye(dim_h) - &p;
        let x0 = gaussian(&mut rng, dim_h_star, dim_h, false) * &p_perp;
        let star = linalg::KernelSplit::new(&(&x0 * x0.adjoint()), super::KERNEL_REL_TOL).kernel;
        let p_star = &star * star.adjoint();
        let x1 = &p_star * gaussian(&mut rng, dim_h_star, dim_h, false) * &p
            + gaussian(&mut rng, dim_h_star, dim_h, false) * &p_perp;
        let fam = build_family(x0, x1, None)?;
        let thr = match compute_threshold_set(&fam) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let e = linalg::herm_eig(&thr.s).values;
        if e[0] > 0.05 * e[e.len() - 1] {
            return Ok(fam);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_ranges() {
        for seed in 0..200 {
            let s = FamilySpec::from_seed(seed);
            assert!((1..=3).contains(&s.n));
            assert!(s.dim_h > s.n && s.dim_h <= 8);
            assert!(s.dim_h_star >= s.dim_h && s.dim_h_star <= 8);
        }
    }

    #[test]
    fn kernel_matches_construction() {
        let spec = FamilySpec { dim_h: 6, dim_h_star: 7, n: 2, sandwich: false, real: false };
        let fam = random_family(3, spec).unwrap();
        assert_eq!(fam.n, 2);
        assert!((&fam.x0 * &fam.kernel).norm() < 1e-12);
        assert!(fam.n <= fam.n_star);
    }
}
