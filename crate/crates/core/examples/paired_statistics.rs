//! Summary statistics and the paired t-test used to compare methods
//! subject by subject.
//!
//!     cargo run --example paired_statistics

use footformer::eval::{paired_t_test, summarize, t_two_sided_p};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Per-subject KLD of two methods over ten held-out subjects.
    let ours = [1.21, 1.05, 1.62, 1.33, 0.98, 1.71, 1.40, 1.12, 1.55, 1.66];
    let baseline = [1.48, 1.22, 1.70, 1.51, 1.30, 1.89, 1.52, 1.35, 1.60, 1.93];

    for (name, v) in [("ours", &ours[..]), ("baseline", &baseline[..])] {
        let s = summarize(v)?;
        println!(
            "{name:<9} mean {:.3} +- {:.3}  median {:.3} +- {:.3} (rSTD)",
            s.mean, s.std, s.median, s.rstd
        );
    }
    let t = paired_t_test(&ours, &baseline)?;
    println!("paired t = {:.3}, dof = {}, p = {:.2e}", t.t, t.dof, t.p);
    println!("significant at 0.05: {}", t.p < 0.05);

    println!("\ntwo-sided p-values:");
    println!("dof      t=1      t=2      t=3");
    for dof in [2, 5, 10, 30] {
        let p: Vec<String> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&t| format!("{:.5}", t_two_sided_p(t, dof)))
            .collect();
        println!("{dof:>3} {}", p.join(" "));
    }
    Ok(())
}
