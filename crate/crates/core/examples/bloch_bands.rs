//! Lowest Bloch bands of a 2D real scalar medium along one direction,
//! next to the quadratic approximation from the effective matrix.

use homog::cell::Discretization;
use homog::dynamics::bands;
use homog::germ::CellSolution;
use homog::scenario::Scenario;

fn main() -> homog::Result<()> {
    let sc = Scenario::load("2d_real_scalar")?;
    let disc = Discretization::new(sc.op.clone(), sc.cutoff)?;
    let sol = CellSolution::new(disc.clone())?;
    let theta = [1.0, 0.0];
    let gamma = sol.germ_at(&theta)?.gammas()[0];
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "t", "E1", "gamma t^2", "E2", "E3");
    for i in 0..=10 {
        let t = 0.05 * i as f64;
        let e = bands(&disc, &[t * theta[0], t * theta[1]], 3);
        println!("{t:>6.2} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", e[0], gamma * t * t, e[1], e[2]);
    }
    Ok(())
}
