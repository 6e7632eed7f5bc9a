//! Build the interaction matrices of both schemes, print the small
//! reference instances, and verify the four structural assumptions.
//!
//! ```bash
//! cargo run --release --example check_assumptions
//! ```

use lepf::interaction::{build_alpha, verify_assumptions, InteractionScheme};

fn print_matrix(label: &str, alpha: &lepf::interaction::AlphaMatrix) {
    println!("{label} (N = {}):", alpha.n);
    for row in alpha.to_dense() {
        let cells: Vec<String> = row
            .iter()
            .map(|&w| if w == 0.0 { "  0 ".into() } else { format!("{w:.2}") })
            .collect();
        println!("  [{}]", cells.join(" "));
    }
}

fn main() -> lepf::Result<()> {
    let lepf = build_alpha(InteractionScheme::lepf(3, 1)?, 3)?;
    let ibpf = build_alpha(InteractionScheme::ibpf(3)?, 3)?;
    print_matrix("local exchange, M = 3, theta = 1, m = 3", &lepf);
    print_matrix("independent groups, M = 3, m = 3", &ibpf);

    for (label, alpha) in [("local exchange", &lepf), ("independent groups", &ibpf)] {
        println!("{label}:");
        for (item, status) in verify_assumptions(alpha).items() {
            println!("  {item:34} {:?}", status);
        }
    }

    // Donor windows of the limiting doubly infinite matrix.
    let scheme = InteractionScheme::lepf(3, 1)?;
    println!("limit-matrix donor windows (local exchange, M = 3, theta = 1):");
    for i in -2..=4i64 {
        let w = scheme.alpha_infinity_row(i);
        println!("  row {i:3}: columns {}..={}", w.start, w.start + w.len as i64 - 1);
    }
    Ok(())
}
