//! Full viscosity sweep on the ramped wall-vorticity family, printing the
//! inviscid-limit diagnostics from the comparison report.

use annulus_flow::diagnostics;
use annulus_flow::harness::{self, ExperimentConfig};
use std::path::Path;

fn main() {
    let config = ExperimentConfig::load(Path::new("configs/ramped-b.toml"))
        .expect("run from the repository root");
    let system = config.build_system().unwrap();
    let runs = harness::run_sweep_members(&system, &config, 4).unwrap();
    let report = diagnostics::sweep_compare(
        &system,
        &runs,
        &config.diagnostics.test_functions,
        &config.diagnostics.sigmas,
    )
    .unwrap();

    println!("family: {}", config.name);
    println!("{:>10} {:>12} {:>14} {:>14}", "nu", "||w||_2 max", "dissipation", "sup |v-v_0|");
    for (k, nu) in report.nu_list.iter().enumerate() {
        let sup = if k + 1 < report.nu_list.len() {
            format!("{:.4e}", report.sup_diff[k].iter().fold(0.0_f64, |m, v| m.max(*v)))
        } else {
            "-".into()
        };
        println!(
            "{:>10.1e} {:>12.5} {:>14.4e} {:>14}",
            nu, report.lp_ceilings[k][0], report.dissipation_totals[k], sup
        );
    }
    println!("Lp ceiling ratio    : {:.4} (<= 2: {})", report.lp_ratio, report.lp_ratio_ok);
    println!("interior decreasing : {}", report.interior_decreasing);
}
