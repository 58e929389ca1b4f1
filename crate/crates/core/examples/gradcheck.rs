//! Finite-difference check of every tape operation and both full models.
//!
//! ```text
//! cargo run --release --example gradcheck [seed]
//! ```

use voicelike::diagnostics::{gradient_suite, GRADCHECK_TOLERANCE};

fn main() -> voicelike::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let t0 = std::time::Instant::now();
    let rows = gradient_suite(seed)?;
    for r in &rows {
        println!("{:<12} {:>6} coords  {:.2e}", r.name, r.check.checked, r.check.max_rel_error);
    }
    let worst = rows.iter().map(|r| r.check.max_rel_error).fold(0.0, f64::max);
    println!("worst {worst:.2e} (tolerance {GRADCHECK_TOLERANCE:e}) in {:.1?}", t0.elapsed());
    Ok(())
}
