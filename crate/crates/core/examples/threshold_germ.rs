//! Scan of the threshold operator N(theta) over directions for the complex
//! 2D example, where N(theta) = kappa theta_2^3 in closed form.

use homog::cell::Discretization;
use homog::germ::CellSolution;
use homog::scenario::{complex_beta_kappa, Scenario};

fn main() -> homog::Result<()> {
    let c = 0.2;
    let sc = Scenario::complex_beta(c)?.with_cutoff(12.0);
    let sol = CellSolution::new(Discretization::new(sc.op, sc.cutoff)?)?;
    let scan = sol.scan_conditions(16)?;
    let kappa = complex_beta_kappa(c);
    println!("{:>8} {:>8} {:>14} {:>14}", "theta1", "theta2", "N(theta)", "kappa th2^3");
    for r in &scan.records {
        println!(
            "{:>8.4} {:>8.4} {:>14.6e} {:>14.6e}",
            r.theta[0],
            r.theta[1],
            r.n_scalar.unwrap_or(f64::NAN),
            kappa * r.theta[1].powi(3)
        );
    }
    println!("N identically zero: {}, odd symmetry defect {:.1e}", scan.n_identically_zero, scan.odd_symmetry_defect);
    Ok(())
}
