//! Time probe for the complex 2D example: at tau = 1/eps the error divided by
//! eps keeps growing, so the (1 + |tau|) eps law cannot be improved there.

use homog::cell::Discretization;
use homog::dynamics::ProbeSetup;
use homog::germ::CellSolution;
use homog::pipeline::time_probe_series;
use homog::scenario::Scenario;

fn main() -> homog::Result<()> {
    let sc = Scenario::load("2d_complex_beta")?.with_cutoff(12.0);
    let sol = CellSolution::new(Discretization::new(sc.op, sc.cutoff)?)?;
    let setup = ProbeSetup::new(&sol, &sc.probe_theta)?;
    println!("{:>6} {:>8} {:>10} {:>12} {:>10} {:>12}", "tau", "eps", "t", "error", "ratio", "lower bound");
    for r in time_probe_series(&setup)? {
        println!(
            "{:>6} {:>8.4} {:>10.4e} {:>12.4e} {:>10.4} {:>12.4e}",
            r.tau, r.eps, r.t_probe, r.value, r.ratio, r.lower_bound
        );
    }
    Ok(())
}
