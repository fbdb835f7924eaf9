//! Effective matrix of a 1D scalar coefficient g(x) = 2 + cos x.
//! In one dimension g0 is the harmonic mean, here sqrt(3).

use homog::cell::Discretization;
use homog::germ::CellSolution;
use homog::scenario::Scenario;

fn main() -> homog::Result<()> {
    let sc = Scenario::load("1d_scalar")?;
    let sol = CellSolution::new(Discretization::new(sc.op, sc.cutoff)?)?;
    let c = &sol.correctors;
    println!("g0        = {:.15}", c.g0[(0, 0)].re);
    println!("sqrt(3)   = {:.15}", 3f64.sqrt());
    println!("mean g    = {:.15}", c.g_bar[(0, 0)].re);
    println!("harmonic  = {:.15}", c.g_lower[(0, 0)].re);
    println!("corrector residual {:.2e}", c.lambda_residual);
    Ok(())
}
