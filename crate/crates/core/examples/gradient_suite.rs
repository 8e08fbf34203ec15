//! Finite-difference checks of every layer, loss term and the tiny end-to-end
//! composite. Pass a seed count as the first argument (default 3).

use ssavd::checks::gradient_suite;

fn main() -> ssavd::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    for row in gradient_suite(seeds)? {
        println!(
            "{:<26} {:.2e} (tol {:.0e}) {}",
            row.name,
            row.max_rel_err,
            row.tol,
            if row.passes() { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
