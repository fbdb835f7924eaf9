use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::pencil::{build_family, PencilFamily};

use super::{ModeSet, PeriodicOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// b(D+k)* g b(D+k).
    Hat,
    /// f* b(D+k)* g b(D+k) f.
    Sandwiched,
    /// f0 b(D+k)* g⁰ b(D+k) f0 with f0 = 1 in the unweighted case.
    Effective,
}

#[derive(Clone, Debug)]
pub struct FiberMatrix {
    pub k: Vec<f64>,
    pub variant: Variant,
    /// Component index into `ModeSet::components`.
    pub component: usize,
    pub matrix: CMat,
}

/// Convolution matrices of one coupled block of modes.
#[derive(Clone, Debug)]
pub struct ComponentBlock {
    pub modes: Vec<usize>,
    pub g: CMat,
    /// Lower Cholesky factor of `g`.
    pub g_chol: CMat,
    pub f: Option<CMat>,
    pub f_inv: Option<CMat>,
}

/// Operator plus mode set with the per-block convolution matrices.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub op: PeriodicOperator,
    pub modes: ModeSet,
    pub blocks: Vec<ComponentBlock>,
}

impl Discretization {
    pub fn new(op: PeriodicOperator, cutoff: f64) -> Result<Self> {
        let modes = ModeSet::new(&op, cutoff);
        let blocks = modes
            .components
            .iter()
            .map(|c| {
                let g = linalg::hermitian_part(&modes.conv(&op.g, c));
                let g_chol = nalgebra::Cholesky::new(g.clone())
                    .ok_or_else(|| Error::SolveFailure { what: "Cholesky of [g]".into(), residual: f64::INFINITY })?
                    .l();
                Ok(ComponentBlock {
                    modes: c.clone(),
                    g,
                    g_chol,
                    f: op.f.as_ref().map(|f| modes.conv(f, c)),
                    f_inv: op.f_inv.as_ref().map(|f| modes.conv(f, c)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Discretization { op, modes, blocks })
    }

    /// Cutoff from the operator's bandwidth when `cutoff` is `None`.
    pub fn with_default_cutoff(op: PeriodicOperator, cutoff: Option<f64>) -> Result<Self> {
        let c = cutoff.unwrap_or_else(|| op.default_cutoff());
        Self::new(op, c)
    }

    /// Variant matching the operator: sandwiched when f is present.
    pub fn native_variant(&self) -> Variant {
        if self.op.weighted() {
            Variant::Sandwiched
        } else {
            Variant::Hat
        }
    }

    /// Quadratic form ∫⟨g b(D+k) f u, b(D+k) f u⟩ on one block. For `Effective`,
    /// `g0` and the optional bordering `f0` are used instead of the fields.
    pub fn fiber(&self, component: usize, k: &[f64], variant: Variant, effective: Option<(&CMat, Option<&CMat>)>) -> FiberMatrix {
        let blk = &self.blocks[component];
        let b = self.modes.symbol_blocks(&self.op.symbol, k, &blk.modes);
        let matrix = match variant {
            Variant::Hat => b.adjoint() * &blk.g * &b,
            Variant::Sandwiched => {
                let f = blk.f.as_ref().expect("sandwiched fiber needs f");
                let bf = &b * f;
                bf.adjoint() * &blk.g * &bf
            }
            Variant::Effective => {
                let (g0, f0) = effective.expect("effective fiber needs g0");
                let g0b = ModeSet::repeat(g0, blk.modes.len());
                let a = b.adjoint() * g0b * &b;
                match f0 {
                    Some(f0) => {
                        let f0b = ModeSet::repeat(f0, blk.modes.len());
                        &f0b * a * &f0b
                    }
                    None => a,
                }
            }
        };
        FiberMatrix { k: k.to_vec(), variant, component, matrix: linalg::hermitian_part(&matrix) }
    }

    /// X(t) = L*(B(0) + t B(θ)) [F] on the block containing the zero mode, with
    /// M = [F] when the operator is weighted.
    pub fn pencil(&self, theta: &[f64]) -> Result<PencilFamily> {
        let blk = &self.blocks[0];
        let zero_k = vec![0.0; self.op.d()];
        let b0 = self.modes.symbol_blocks(&self.op.symbol, &zero_k, &blk.modes);
        let bt = ModeSet::repeat(&self.op.symbol.at(theta), blk.modes.len());
        let lt = blk.g_chol.adjoint();
        let (x0, x1) = (&lt * b0, &lt * bt);
        match &blk.f {
            Some(f) => build_family(&x0 * f, &x1 * f, Some(f.clone())),
            None => build_family(x0, x1, None),
        }
    }

    /// Embedding of C^n as the zero-mode block of the first component.
    pub fn zero_embedding(&self) -> CMat {
        let n = self.op.n();
        let len = self.blocks[0].modes.len();
        let z = self.modes.zero_local();
        let mut e = linalg::zeros(n * len, n);
        e.view_mut((z * n, 0), (n, n)).copy_from(&linalg::eye(n));
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PeriodicField;
    use crate::lattice::{Lattice, Symbol};
    use crate::linalg::re;

    fn laplacian(d: usize) -> Discretization {
        let g = PeriodicField::constant(d, linalg::eye(d));
        let op = PeriodicOperator::new(Lattice::cubic(d).unwrap(), Symbol::gradient(d).unwrap(), g, None).unwrap();
        Discretization::new(op, 4.0).unwrap()
    }

    #[test]
    fn laplacian_fiber_is_diagonal() {
        let disc = laplacian(2);
        assert_eq!(disc.blocks.len(), disc.modes.len());
        for c in 0..disc.blocks.len() {
            let a = disc.fiber(c, &[0.0, 0.0], Variant::Hat, None).matrix;
            let b = &disc.modes.vecs[disc.blocks[c].modes[0]];
            assert!((a[(0, 0)] - re(b.norm_squared())).norm() < 1e-12);
        }
    }

    #[test]
    fn laplacian_lowest_band_is_k_squared() {
        let disc = laplacian(2);
        let k = [0.2, -0.3];
        let mut all: Vec<f64> = (0..disc.blocks.len())
            .map(|c| disc.fiber(c, &k, Variant::Hat, None).matrix[(0, 0)].re)
            .collect();
        all.sort_by(f64::total_cmp);
        assert!((all[0] - 0.13).abs() < 1e-12);
    }
}
