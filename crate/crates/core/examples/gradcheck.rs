//! Checks every parameter group's tape gradient against central
//! differences, then shows that a corrupted adjoint is caught.
//!
//!     cargo run --release --example gradcheck

use gated_isp::gradcheck::{gradcheck, GradcheckConfig};
use gated_isp::tape::Primitive;

pub fn run() -> gated_isp::Result<()> {
    let cfg = GradcheckConfig {
        width: 2,
        samples_per_group: 4,
        ..GradcheckConfig::default()
    };
    let r = gradcheck(&cfg)?;
    let mut groups = r.groups.clone();
    groups.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    println!("worst groups (c={}, {}×{}, h={:e}):", cfg.width, cfg.size, cfg.size, cfg.step);
    for g in groups.iter().take(5) {
        println!(
            "  {:32} rel err {:.2e}  ({} smooth, {} kink crossings)",
            g.name, g.rel_error, g.checked, g.kink_crossings
        );
    }
    println!(
        "max {:.2e} in {} -> {}",
        r.max_rel_error,
        r.worst_group,
        if r.passed { "pass" } else { "FAIL" }
    );

    let broken = gradcheck(&GradcheckConfig {
        fault: Some(Primitive::InstanceNorm),
        ..cfg
    })?;
    println!(
        "with a corrupted instance-norm adjoint: max {:.2e} -> {}",
        broken.max_rel_error,
        if broken.passed { "pass" } else { "FAIL" }
    );
    assert!(r.passed && !broken.passed);
    Ok(())
}

#[allow(dead_code)]
fn main() -> gated_isp::Result<()> {
    run()
}
