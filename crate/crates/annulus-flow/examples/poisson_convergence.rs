//! Grid-convergence table of the Dirichlet Poisson solver against the
//! manufactured solution `h = r sin(theta)` (harmonic, so `f = 0`).

use annulus_flow::elliptic::{BoundaryKind, PoissonSolverPlan};
use annulus_flow::{Grid, ScalarField};
use std::sync::Arc;

fn main() {
    println!("{:>6} {:>6} {:>12} {:>8}", "n_r", "n_th", "max error", "order");
    let mut prev: Option<f64> = None;
    for level in 0..5 {
        let n = 16 << level;
        let grid = Arc::new(Grid::build(1.0, 2.0, n, 2 * n, 0.0).unwrap());
        let plan = PoissonSolverPlan::new(grid.clone(), BoundaryKind::Dirichlet);
        let exact = ScalarField::from_fn(grid.clone(), |r, th| r * th.sin());
        let f = ScalarField::zeros(grid.clone());
        let gi: Vec<f64> = (0..grid.n_theta()).map(|j| exact.at(0, j)).collect();
        let go: Vec<f64> = (0..grid.n_theta())
            .map(|j| exact.at(grid.n_r(), j))
            .collect();
        let h = plan.solve_dirichlet(&f, &gi, &go).unwrap();
        let err = h.max_diff(&exact);
        let order = prev.map_or_else(String::new, |p| format!("{:.2}", (p / err).log2()));
        println!("{:>6} {:>6} {:>12.3e} {:>8}", n, 2 * n, err, order);
        prev = Some(err);
    }
}
