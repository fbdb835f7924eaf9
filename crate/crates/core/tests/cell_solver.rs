use std::collections::BTreeMap;
use std::f64::consts::PI;

use homog::cell::{Discretization, PeriodicOperator, Variant};
use homog::field::PeriodicField;
use homog::germ::CellSolution;
use homog::lattice::{Lattice, Symbol};
use homog::linalg::{self, from_real, CMat, C64};
use homog::scenario::Scenario;

fn one_d(g: PeriodicField, cutoff: f64) -> CellSolution {
    let op = PeriodicOperator::new(Lattice::cubic(1).unwrap(), Symbol::gradient(1).unwrap(), g, None).unwrap();
    CellSolution::new(Discretization::new(op, cutoff).unwrap()).unwrap()
}

fn two_plus_cos() -> PeriodicField {
    let mut c = BTreeMap::new();
    c.insert([0, 0, 0], from_real(1, 1, &[2.0]));
    c.insert([1, 0, 0], from_real(1, 1, &[0.5]));
    c.insert([-1, 0, 0], from_real(1, 1, &[0.5]));
    PeriodicField::from_coeffs(1, 1, 1, c).unwrap()
}

/// Fourier coefficient k of a function on [0, 2π) by the trapezoid rule.
fn quadrature_coeff(f: impl Fn(f64) -> f64, k: i32, points: usize) -> C64 {
    let h = 2.0 * PI / points as f64;
    (0..points).map(|j| {
        let x = j as f64 * h;
        C64::from_polar(f(x), -(k as f64) * x)
    }).sum::<C64>() / points as f64
}

#[test]
fn constant_coefficient_has_no_oscillation() {
    let g = from_real(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let op = PeriodicOperator::new(
        Lattice::cubic(2).unwrap(),
        Symbol::gradient(2).unwrap(),
        PeriodicField::constant(2, g.clone()),
        None,
    )
    .unwrap();
    let sol = CellSolution::new(Discretization::new(op, 3.0).unwrap()).unwrap();
    let c = &sol.correctors;
    assert!(c.lambda.coeffs.values().all(|v| v.norm() < 1e-14));
    assert!((&c.g0 - &g).norm() < 1e-14);
    assert!((&c.g_bar - &g).norm() < 1e-14);
    assert!((&c.g_lower - &g).norm() < 1e-12);
    assert!((c.g_tilde.mean() - &g).norm() < 1e-14);
    assert!(c.lambda2.iter().all(|f| f.coeffs.values().all(|v| v.norm() < 1e-14)));
}

#[test]
fn one_d_effective_coefficient_is_harmonic_mean() {
    let sol = one_d(two_plus_cos(), 16.0);
    let harmonic = 1.0 / quadrature_coeff(|x| 1.0 / (2.0 + x.cos()), 0, 256).re;
    assert!((harmonic - 3f64.sqrt()).abs() < 1e-14);
    assert!((sol.correctors.g0[(0, 0)].re - harmonic).abs() <= 1e-8);
    assert!((sol.correctors.g_lower[(0, 0)].re - harmonic).abs() <= 1e-8);
    assert!(sol.correctors.voigt_reuss.m_eq_n_gap.unwrap() <= 1e-8);
}

#[test]
fn one_d_corrector_derivative() {
    // b(D)Λ = -iΛ' equals g̲/g - 1, i.e. Λ = iψ with ψ' = g̲/g - 1
    let sol = one_d(two_plus_cos(), 16.0);
    let lower = 3f64.sqrt();
    for k in -6i32..=6 {
        let lam = sol.correctors.lambda.coeff(&[k, 0, 0]).map(|m| m[(0, 0)]).unwrap_or_default();
        let d_lam = lam * k as f64;
        let mut expected = quadrature_coeff(|x| lower / (2.0 + x.cos()), k, 512);
        if k == 0 {
            expected -= 1.0;
        }
        assert!((d_lam - expected).norm() < 1e-10, "k = {k}: {d_lam} vs {expected}");
    }
    assert!(sol.correctors.lambda.coeff(&[0, 0, 0]).map(|m| m.norm()).unwrap_or(0.0) < 1e-15);
}

#[test]
fn one_d_second_corrector_derivative() {
    // b(D)Λ⁽²⁾ = -Λ, i.e. the derivative of Λ⁽²⁾ is ψ when Λ = iψ
    let sol = one_d(two_plus_cos(), 16.0);
    let c = &sol.correctors;
    for k in -6i32..=6 {
        let lam = c.lambda.coeff(&[k, 0, 0]).map(|m| m[(0, 0)]).unwrap_or_default();
        let lam2 = c.lambda2[0].coeff(&[k, 0, 0]).map(|m| m[(0, 0)]).unwrap_or_default();
        assert!((lam2 * k as f64 + lam).norm() < 1e-10, "k = {k}");
    }
}

#[test]
fn corrector_residuals_are_small() {
    for name in ["1d_scalar", "2d_complex_beta", "2d_real_scalar"] {
        let sc = Scenario::load(name).unwrap().with_cutoff(8.0);
        let sol = CellSolution::new(Discretization::new(sc.op, sc.cutoff).unwrap()).unwrap();
        let c = &sol.correctors;
        assert!(c.lambda_residual <= 1e-10, "{name}: {}", c.lambda_residual);
        assert!(c.lambda2_residuals.iter().all(|&r| r <= 1e-10), "{name}: {:?}", c.lambda2_residuals);
        assert!(c.solvability.iter().all(|&r| r <= 1e-10), "{name}: {:?}", c.solvability);
        let mean = c.lambda.coeff(&[0, 0, 0]).map(|m| m.norm()).unwrap_or(0.0);
        assert!(mean < 1e-14);
    }
}

#[test]
fn weighted_corrector_has_q_zero_mean() {
    let sc = Scenario::load("sandwich_f").unwrap();
    let sol = CellSolution::new(Discretization::new(sc.op, sc.cutoff).unwrap()).unwrap();
    assert!(sol.correctors.lambda_q.is_some());
    assert!(sol.correctors.q_mean_residual <= 1e-10);
}

#[test]
fn divergence_free_columns_give_arithmetic_mean() {
    // g = diag(a(x2), c(x1)): each column is divergence free
    let g = PeriodicField::from_fn(2, 2, 2, 16, |s| {
        let (x1, x2) = (2.0 * PI * s[0], 2.0 * PI * s[1]);
        from_real(2, 2, &[2.0 + x2.cos(), 0.0, 0.0, 1.5 + 0.5 * x1.sin()])
    });
    let op = PeriodicOperator::new(Lattice::cubic(2).unwrap(), Symbol::gradient(2).unwrap(), g, None).unwrap();
    let sol = CellSolution::new(Discretization::new(op, 6.0).unwrap()).unwrap();
    let c = &sol.correctors;
    assert!((&c.g0 - &c.g_bar).norm() < 1e-12, "{} vs {}", c.g0, c.g_bar);
    assert!(c.voigt_reuss.upper_margin.abs() < 1e-12);
}

#[test]
fn square_symbol_gives_lower_mean() {
    let sc = Scenario::load("matrix_m_eq_n").unwrap();
    assert_eq!(sc.op.m(), sc.op.n());
    let sol = CellSolution::new(Discretization::new(sc.op, sc.cutoff).unwrap()).unwrap();
    let c = &sol.correctors;
    assert!((&c.g0 - &c.g_lower).norm() < 1e-8);
    assert!(c.voigt_reuss.lower_margin >= -1e-10);
}

#[test]
fn laplacian_fiber_spectrum() {
    let op = PeriodicOperator::new(
        Lattice::cubic(1).unwrap(),
        Symbol::gradient(1).unwrap(),
        PeriodicField::constant(1, linalg::eye(1)),
        None,
    )
    .unwrap();
    let disc = Discretization::new(op, 5.0).unwrap();
    let k = 0.37;
    let mut got: Vec<f64> = Vec::new();
    for c in 0..disc.blocks.len() {
        got.extend(linalg::herm_eig(&disc.fiber(c, &[k], Variant::Hat, None).matrix).values.iter());
    }
    got.sort_by(f64::total_cmp);
    let mut expected: Vec<f64> = (-5i32..=5).map(|b| (b as f64 + k).powi(2)).collect();
    expected.sort_by(f64::total_cmp);
    assert_eq!(got.len(), expected.len());
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((got[0] - k * k).abs() < 1e-14);
}

#[test]
fn lowest_band_respects_c_star() {
    let sol = one_d(two_plus_cos(), 16.0);
    let c_star = sol.disc.op.c_star();
    // α0 = 1 and min g = 1
    assert!((c_star - 1.0).abs() < 1e-12);
    let k = 0.3;
    let a = sol.disc.fiber(0, &[k], Variant::Hat, None).matrix;
    let lowest = linalg::min_eig(&a);
    assert!(lowest >= c_star * k * k);
    assert!(lowest >= k * k / 3.0);
}

#[test]
fn fiber_is_hermitian_and_psd() {
    let sc = Scenario::load("2d_complex_beta").unwrap().with_cutoff(6.0);
    let disc = Discretization::new(sc.op, sc.cutoff).unwrap();
    for k in [[0.0, 0.0], [0.2, -0.1], [0.5, 0.5]] {
        for c in 0..disc.blocks.len() {
            let a = disc.fiber(c, &k, Variant::Hat, None).matrix;
            let scale = linalg::spectral_norm(&a);
            assert!(linalg::hermiticity_defect(&a) <= 1e-12 * scale.max(1.0));
            assert!(linalg::min_eig(&a) >= -1e-10 * scale);
        }
    }
}

#[test]
fn fiber_is_lipschitz_in_k() {
    let sc = Scenario::load("2d_real_scalar").unwrap().with_cutoff(4.0);
    let disc = Discretization::new(sc.op, sc.cutoff).unwrap();
    let base = disc.fiber(0, &[0.1, 0.1], Variant::Hat, None).matrix;
    let mut ratios = Vec::new();
    for h in [1e-2, 1e-3, 1e-4] {
        let moved = disc.fiber(0, &[0.1 + h, 0.1], Variant::Hat, None).matrix;
        ratios.push(linalg::spectral_norm(&(moved - &base)) / h);
    }
    assert!(ratios.windows(2).all(|w| (w[1] / w[0] - 1.0).abs() < 0.1), "{ratios:?}");
}

#[test]
fn eigenvalues_do_not_increase_with_cutoff() {
    let sc = Scenario::load("1d_scalar").unwrap();
    let lowest = |cutoff: f64| {
        let disc = Discretization::new(sc.op.clone(), cutoff).unwrap();
        linalg::herm_eig(&disc.fiber(0, &[0.25], Variant::Hat, None).matrix).values[0]
    };
    let values: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|&c| lowest(c)).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-13), "{values:?}");
}

#[test]
fn effective_matrix_converges_under_cutoff_doubling() {
    let sc = Scenario::load("2d_real_scalar").unwrap();
    let g0 = |cutoff: f64| -> CMat {
        let disc = Discretization::new(sc.op.clone(), cutoff).unwrap();
        CellSolution::new(disc).unwrap().correctors.g0
    };
    let (a, b) = (g0(6.0), g0(12.0));
    assert!((a - b).norm() < 1e-6);
}
