//! Threshold operators of a random factorized family A(t) = X(t)*X(t),
//! compared with eigenvalues computed directly at small t.

use homog::pencil::{compute_threshold_set, random_family, small_eigenpairs, FamilySpec};

fn main() -> homog::Result<()> {
    let seed = 7;
    let fam = random_family(seed, FamilySpec::from_seed(seed))?;
    println!("dim H = {}, dim H* = {}, kernel dimension n = {}", fam.dim_h(), fam.dim_h_star(), fam.n);
    println!("gap d0 = {:.6}, t0 = {:.6}", fam.d0, fam.t0);

    let thr = compute_threshold_set(&fam)?;
    for (i, b) in thr.germ.branches.iter().enumerate() {
        println!("branch {i}: gamma {:+.8} mu {:+.8} nu {:+.8}", b.gamma, b.mu, b.nu);
    }

    println!("\n{:>10} {:>14} {:>14}", "t", "lambda_0(t)", "expansion");
    for k in 1..=4 {
        let t = fam.t0 * 10f64.powi(-k);
        let se = small_eigenpairs(&fam, t)?;
        let b = &thr.germ.branches[0];
        let approx = b.gamma * t * t + b.mu * t.powi(3) + b.nu * t.powi(4);
        // branches are sorted the same way for small t
        println!("{t:>10.3e} {:>14.6e} {approx:>14.6e}", se.values[0]);
    }
    Ok(())
}
