//! Inviscid vorticity front driven by a uniform radial through-flow.
//!
//! With `v = (1/r) e_r` and unit vorticity prescribed on the inflow circle,
//! the front entering at `r = 1` reaches `r(t) = sqrt(1 + 2 t)`.

use annulus_flow::evolution::{self, TimeIntegratorConfig};
use annulus_flow::geometry::TraceProfile;
use annulus_flow::velocity::FlowSystem;
use annulus_flow::{BoundaryData, Grid, ScalarField};
use std::sync::Arc;

fn main() {
    let grid = Arc::new(Grid::build(1.0, 2.0, 256, 8, 0.0).unwrap());
    let boundary = BoundaryData {
        b_inner: TraceProfile::constant(1.0),
        ..BoundaryData::radial_source(2.0 * std::f64::consts::PI, 1.0, 2.0)
    };
    let system = Arc::new(FlowSystem::new(grid.clone(), boundary).unwrap());
    let cfg = TimeIntegratorConfig {
        dt_max: 1e-2,
        t_end: 0.5,
        ..TimeIntegratorConfig::default()
    };
    let times = [0.1, 0.2, 0.3, 0.4, 0.5];
    let traj = evolution::run(
        &system,
        ScalarField::zeros(grid.clone()),
        vec![0.0],
        0.0,
        cfg,
        &times,
        &[2.0],
    )
    .unwrap();

    println!("{:>6} {:>10} {:>10} {:>8}", "t", "front", "sqrt(1+2t)", "cells");
    let cell = (grid.r_outer() - grid.r_inner()) / grid.n_r() as f64;
    for state in &traj.snapshots {
        let mut front = grid.radius(0);
        for i in 0..=grid.n_r() {
            if state.omega.at(i, 0) > 0.5 {
                front = grid.radius(i);
            }
        }
        let exact = (1.0 + 2.0 * state.t).sqrt();
        println!(
            "{:>6.2} {:>10.4} {:>10.4} {:>8.1}",
            state.t,
            front,
            exact,
            (front - exact).abs() / cell
        );
    }
}
