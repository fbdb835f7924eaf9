//! Fits the lowest band near the threshold by a quartic in t and compares the
//! coefficients with gamma, mu and nu from the germ.

use homog::cell::Discretization;
use homog::dynamics::fit_band_expansion;
use homog::germ::CellSolution;
use homog::pencil::FitWindow;
use homog::scenario::Scenario;

fn main() -> homog::Result<()> {
    for name in ["1d_scalar", "2d_complex_beta"] {
        let sc = Scenario::load(name)?.with_cutoff(12.0);
        let sol = CellSolution::new(Discretization::new(sc.op, sc.cutoff)?)?;
        let fit = fit_band_expansion(&sol, &sc.probe_theta, &FitWindow::default())?;
        println!("{name}, theta = {:?}", sc.probe_theta);
        for b in &fit.branches {
            println!("  gamma {:.10} (formula {:.10})", b.gamma_fit, b.gamma_formula);
            println!("  mu    {:+.3e} (formula {:+.3e})", b.mu_fit, b.mu_formula);
            println!("  nu    {:+.6} (formula {:+.6})", b.nu_decoupled, b.nu_formula);
        }
    }
    Ok(())
}
