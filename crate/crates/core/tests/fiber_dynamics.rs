use homog::cell::{Discretization, PeriodicOperator};
use homog::dynamics::{
    bands, exp_error, fit_band_expansion, scan_errors, sharpness_probe, ErrorVariant, KFiber, ProbeSetup,
    SmoothingWeights,
};
use homog::field::PeriodicField;
use homog::germ::CellSolution;
use homog::lattice::{Lattice, Symbol};
use homog::linalg::from_real;
use homog::pencil::{FitWindow, ProbeKind};
use homog::pipeline::{min_growth, smoothing_probe_series};
use homog::scenario::{ScanSpec, Scenario};
use homog::Error;

fn solve(name: &str, cutoff: Option<f64>) -> CellSolution {
    let mut sc = Scenario::load(name).unwrap();
    if let Some(c) = cutoff {
        sc = sc.with_cutoff(c);
    }
    CellSolution::new(Discretization::new(sc.op, sc.cutoff).unwrap()).unwrap()
}

fn constant_1d(value: f64) -> CellSolution {
    let op = PeriodicOperator::new(
        Lattice::cubic(1).unwrap(),
        Symbol::gradient(1).unwrap(),
        PeriodicField::constant(1, from_real(1, 1, &[value])),
        None,
    )
    .unwrap();
    CellSolution::new(Discretization::new(op, 6.0).unwrap()).unwrap()
}

#[test]
fn free_bands_are_shifted_parabolas() {
    let sol = constant_1d(1.0);
    let k = 0.21;
    let e = bands(&sol.disc, &[k], 5);
    let mut expected: Vec<f64> = (-6i32..=6).map(|b| (b as f64 + k).powi(2)).collect();
    expected.sort_by(f64::total_cmp);
    for (a, b) in e.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{e:?}");
    }
}

#[test]
fn real_coefficients_give_even_bands() {
    let sol = solve("2d_real_scalar", Some(6.0));
    for k in [[0.1, 0.3], [0.4, -0.2]] {
        let plus = bands(&sol.disc, &k, 4);
        let minus = bands(&sol.disc, &[-k[0], -k[1]], 4);
        for (a, b) in plus.iter().zip(&minus) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn lowest_band_curvature_is_effective_coefficient() {
    let sol = solve("1d_scalar", None);
    let k = 1e-2;
    let e = bands(&sol.disc, &[k], 2)[0];
    assert!((e / (k * k) - 3f64.sqrt()).abs() <= 1e-3 * 3f64.sqrt());
}

#[test]
fn upper_bands_stay_above_gap_floor() {
    let sol = solve("1d_scalar", None);
    let floor = sol.disc.op.c_star() * sol.disc.op.lattice.r0.powi(2);
    for i in 0..=10 {
        let t = 0.05 * i as f64;
        assert!(bands(&sol.disc, &[t], 2)[1] >= floor);
    }
}

#[test]
fn complex_example_cubic_coefficient() {
    let sol = solve("2d_complex_beta", Some(12.0));
    let fit = fit_band_expansion(&sol, &[0.0, 1.0], &FitWindow::default()).unwrap();
    let b = &fit.branches[0];
    assert!((b.mu_fit - 0.012).abs() <= 1e-4 * 0.012, "{}", b.mu_fit);
    assert!((b.gamma_fit - b.gamma_formula).abs() <= 1e-4 * b.gamma_formula);
}

#[test]
fn real_symmetric_scalar_has_zero_cubic_coefficient() {
    let sol = solve("2d_real_scalar", Some(6.0));
    let fit = fit_band_expansion(&sol, &[0.6, 0.8], &FitWindow::default()).unwrap();
    let scale = fit.branches[0].gamma_fit;
    assert!(fit.branches[0].mu_fit.abs() <= 1e-4 * scale, "{}", fit.branches[0].mu_fit);
}

#[test]
fn one_d_quartic_coefficient_matches_formula() {
    let sol = solve("1d_scalar", None);
    let fit = fit_band_expansion(&sol, &[1.0], &FitWindow::default()).unwrap();
    let b = &fit.branches[0];
    assert!(b.nu_formula.abs() > 1e-6);
    assert!((b.nu_decoupled - b.nu_formula).abs() <= 1e-3 * b.nu_formula.abs());
    assert!(fit.nu_rel_dev <= 1e-3);
}

#[test]
fn zero_time_and_constant_coefficient_give_zero_error() {
    let sol = solve("1d_scalar", None);
    assert_eq!(exp_error(&sol, &[0.1], 0.05, 0.0, 3.0, ErrorVariant::Hat), 0.0);
    let flat = constant_1d(2.5);
    for tau in [1.0, 10.0, 100.0] {
        assert!(exp_error(&flat, &[0.1], 0.05, tau, 0.0, ErrorVariant::Hat) < 1e-12);
    }
}

#[test]
fn one_d_error_follows_linear_law() {
    // Ĉ(ε) is the sup over the k-grid of value/((1+τ)ε); the k = 0.1 value sits below it
    let sol = solve("1d_scalar", None);
    let spec = ScanSpec { tau: vec![1.0], ..ScanSpec::default() };
    let scan = scan_errors(&sol, &spec, ErrorVariant::Hat);
    let constants: Vec<f64> = spec.eps.iter().map(|&eps| scan.sup_for(3.0, eps, 1.0).unwrap().ratio_linear).collect();
    let mean = constants.iter().sum::<f64>() / constants.len() as f64;
    assert!(constants.iter().all(|c| (c / mean - 1.0).abs() <= 0.2), "{constants:?}");
    for (&eps, &c) in spec.eps.iter().zip(&constants) {
        let v = exp_error(&sol, &[0.1], eps, 1.0, 3.0, ErrorVariant::Hat);
        assert!(v <= c * 2.0 * eps * (1.0 + 1e-12), "eps = {eps}: {v}");
    }
}

#[test]
fn error_is_bounded_by_two() {
    let sol = solve("2d_complex_beta", Some(8.0));
    for (k, tau) in [([0.3, 0.1], 100.0), ([0.5, 0.0], 10.0), ([0.01, 0.02], 1.0)] {
        assert!(exp_error(&sol, &k, 0.05, tau, 0.0, ErrorVariant::Hat) <= 2.0 + 1e-12);
    }
}

#[test]
fn sandwiched_error_is_bounded_by_condition_number() {
    let sol = solve("sandwich_f", None);
    let f = sol.disc.op.f.as_ref().unwrap();
    let f_inv = sol.disc.op.f_inv.as_ref().unwrap();
    let cond = f.sup_norm(64) * f_inv.sup_norm(64);
    for k in [0.05, 0.2, 0.5] {
        let v = exp_error(&sol, &[k], 0.1, 50.0, 0.0, ErrorVariant::Sandwich);
        assert!(v <= 2.0 * cond, "{v} vs {cond}");
    }
}

#[test]
fn error_is_nonincreasing_in_smoothing() {
    let sol = solve("2d_complex_beta", Some(8.0));
    let fiber = KFiber::new(&sol, &[0.2, 0.1], ErrorVariant::Hat);
    let values: Vec<f64> = [0.0, 1.0, 2.0, 3.0].iter().map(|&s| fiber.error(0.05, 10.0, s).value).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{values:?}");
}

#[test]
fn smoothing_weights_lie_in_unit_interval() {
    let sol = solve("2d_real_scalar", Some(4.0));
    let w = SmoothingWeights::new(&sol.disc.modes, &[0.1, -0.2], 0.05, 3.0);
    assert!(w.weights.iter().all(|&x| x > 0.0 && x <= 1.0));
}

#[test]
fn sup_records_dominate_cells() {
    let sol = solve("1d_scalar", Some(8.0));
    let spec = ScanSpec { t_count: 6, s: vec![3.0, 2.0], ..ScanSpec::default() };
    let scan = scan_errors(&sol, &spec, ErrorVariant::Hat);
    assert_eq!(scan.sup.len(), 2 * 3 * 3);
    assert_eq!(scan.cells.len(), 2 * 3 * 3 * 6 * 2);
    for sup in &scan.sup {
        assert!(sup.sup);
        for c in scan.cells.iter().filter(|c| c.s == sup.s && c.eps == sup.eps && c.tau == sup.tau) {
            assert!(c.value <= sup.value);
            assert!(c.value >= 0.0);
        }
        assert!((sup.ratio_linear - sup.value / ((1.0 + sup.tau) * sup.eps)).abs() < 1e-15);
        assert!((sup.ratio_sqrt - sup.value / ((1.0 + sup.tau.sqrt()) * sup.eps)).abs() < 1e-15);
    }
}

#[test]
fn scan_is_monotone_in_smoothing() {
    let sol = solve("1d_scalar", Some(8.0));
    let spec = ScanSpec { t_count: 6, s: vec![2.0, 3.0], ..ScanSpec::default() };
    let scan = scan_errors(&sol, &spec, ErrorVariant::Hat);
    for lo in scan.cells.iter().filter(|c| c.s == 2.0) {
        let hi = scan
            .cells
            .iter()
            .find(|c| c.s == 3.0 && c.eps == lo.eps && c.tau == lo.tau && c.k == lo.k)
            .unwrap();
        assert!(hi.value <= lo.value + 1e-15);
    }
}

#[test]
fn enhanced_law_holds_without_threshold_term() {
    let sol = solve("1d_scalar", None);
    let spec = ScanSpec { s: vec![2.0], ..ScanSpec::default() };
    let scan = scan_errors(&sol, &spec, ErrorVariant::Hat);
    assert!(scan.ratio_spread(2.0, |r| r.ratio_sqrt) < 2.0);
}

#[test]
fn time_probe_needs_a_threshold_term() {
    let sol = solve("2d_real_scalar", Some(6.0));
    let r = sharpness_probe(&sol, &[1.0, 0.0], 0.05, 20.0, ProbeKind::Time);
    assert!(matches!(r, Err(Error::CoefficientZero(_))), "{r:?}");
}

#[test]
fn time_probe_stays_above_lower_bound() {
    // τ ∈ {1, 2, 4, 8} with ε = 0.1/τ
    let sol = solve("2d_complex_beta", Some(12.0));
    let setup = ProbeSetup::new(&sol, &[0.0, 1.0]).unwrap();
    let records: Vec<_> =
        [1.0, 2.0, 4.0, 8.0].iter().map(|&tau| setup.probe(0.1 / tau, tau, ProbeKind::Time).unwrap()).collect();
    for r in &records {
        assert!(r.value >= r.lower_bound, "{r:?}");
    }
    let ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    assert!(ratios.last().unwrap() > ratios.first().unwrap(), "{ratios:?}");
}

#[test]
fn smoothing_probe_growth_follows_smoothing_order() {
    // in regime the ratio scales like ε^{s/2 - 1}: flat at s = 2, 2^{1/3} per halving at s = 4/3
    let sol = solve("1d_scalar", None);
    let setup = ProbeSetup::new(&sol, &[1.0]).unwrap();
    let flat = min_growth(&smoothing_probe_series(&setup, 2.0).unwrap());
    assert!((flat - 1.0).abs() < 0.01, "{flat}");
    let recs = smoothing_probe_series(&setup, 4.0 / 3.0).unwrap();
    for w in recs.windows(2) {
        let g = w[1].ratio / w[0].ratio;
        assert!((g - 2f64.powf(1.0 / 3.0)).abs() < 0.01, "{g}");
    }
}
