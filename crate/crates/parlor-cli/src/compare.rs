use std::path::Path;

use anyhow::{bail, Result};

use crate::report::parse_csv;

/// Error-history ratios outside this window flag a divergence.
const DIVERGENCE_FACTOR: f64 = 3.0;

/// Side-by-side comparison of two completed runs on the same problem, grid,
/// sample set and seed (typically known vs blind mode). Returns the
/// iterations whose error ratio fell outside the divergence window.
pub fn compare(path_a: &Path, path_b: &Path) -> Result<Vec<usize>> {
    let a = parse_csv(path_a)?;
    let b = parse_csv(path_b)?;
    for key in ["problem", "n", "Q", "seed"] {
        let (va, vb) = (a.config_value(key), b.config_value(key));
        if va != vb {
            bail!(
                "runs disagree on {key}: {:?} vs {:?}",
                va.unwrap_or("<missing>"),
                vb.unwrap_or("<missing>")
            );
        }
    }

    println!(
        "comparing {} ({}) vs {} ({})",
        path_a.display(),
        a.config_value("mode").unwrap_or("?"),
        path_b.display(),
        b.config_value("mode").unwrap_or("?"),
    );
    println!(
        "{:>5}  {:>12}  {:>12}  {:>9}  {:>9}  {:>9}",
        "iter", "epsilon_a", "epsilon_b", "eps a/b", "Rcost a/b", "Pcost a/b"
    );

    let mut divergent = Vec::new();
    let rows = a.rows.len().min(b.rows.len());
    for k in 0..rows {
        let (ra, rb) = (&a.rows[k], &b.rows[k]);
        let eps_ratio = ra.epsilon / rb.epsilon;
        let r_ratio = ra.normalized_cost_r / rb.normalized_cost_r;
        let p_ratio = ra.normalized_cost_p / rb.normalized_cost_p;
        let flag = !(1.0 / DIVERGENCE_FACTOR..=DIVERGENCE_FACTOR).contains(&eps_ratio);
        println!(
            "{:>5}  {:>12.4e}  {:>12.4e}  {:>9.3}  {:>9.3}  {:>9.3}{}",
            ra.iteration,
            ra.epsilon,
            rb.epsilon,
            eps_ratio,
            r_ratio,
            p_ratio,
            if flag { "  <-- divergent" } else { "" },
        );
        if flag {
            divergent.push(ra.iteration);
        }
    }
    if a.rows.len() != b.rows.len() {
        println!(
            "note: different iteration counts ({} vs {})",
            a.rows.len(),
            b.rows.len()
        );
    }
    if divergent.is_empty() {
        println!("histories agree within a factor of {DIVERGENCE_FACTOR}");
    } else {
        println!("divergent at iterations {divergent:?}");
    }
    Ok(divergent)
}
