//! Smoothed exponential error over a small (eps, tau, k) grid and the ratio to
//! the (1 + |tau|) eps law.

use homog::cell::Discretization;
use homog::dynamics::{scan_errors, ErrorVariant};
use homog::germ::CellSolution;
use homog::scenario::{ScanSpec, Scenario};

fn main() -> homog::Result<()> {
    let sc = Scenario::load("1d_scalar")?;
    let sol = CellSolution::new(Discretization::new(sc.op, sc.cutoff)?)?;
    let spec = ScanSpec { s: vec![3.0, 2.0], t_count: 16, ..ScanSpec::default() };
    let scan = scan_errors(&sol, &spec, ErrorVariant::native(&sol.disc));
    println!("{:>4} {:>8} {:>6} {:>12} {:>10} {:>10}", "s", "eps", "tau", "sup", "linear", "sqrt");
    for r in &scan.sup {
        println!(
            "{:>4} {:>8} {:>6} {:>12.4e} {:>10.4} {:>10.4}",
            r.s, r.eps, r.tau, r.value, r.ratio_linear, r.ratio_sqrt
        );
    }
    for s in &spec.s {
        println!("s = {s}: linear spread {:.3}", scan.ratio_spread(*s, |r| r.ratio_linear));
    }
    Ok(())
}
