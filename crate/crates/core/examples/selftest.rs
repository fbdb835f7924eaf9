//! Fifty seeded random families checked against their own closed forms.

use homog::pencil::{run_selftest, FIT_TOLERANCES};

fn main() -> homog::Result<()> {
    let r = run_selftest(0, 50)?;
    let (g, m, n) = FIT_TOLERANCES;
    println!("max gamma deviation {:.2e} (tol {g:.0e})", r.max_gamma_dev);
    println!("max mu deviation    {:.2e} (tol {m:.0e})", r.max_mu_dev);
    println!("max nu deviation    {:.2e} (tol {n:.0e})", r.max_nu_dev);
    println!("sandwich residual   {:.2e}", r.max_sandwich_residual);
    println!("fits pass: {}", r.fits_pass());
    Ok(())
}
