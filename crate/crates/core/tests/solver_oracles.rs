use std::f64::consts::PI;

use ar_surrogate::grid::{Field2D, GridSpec};
use ar_surrogate::pde::{simulate, simulate_with_substeps, substeps_per_snapshot, PdeParams, TemporalSpec};

fn default_grid() -> GridSpec {
    GridSpec::square(64, -1.0, 1.0).unwrap()
}

fn default_time() -> TemporalSpec {
    TemporalSpec::new(0.0, 2.0, 500).unwrap()
}

fn max_error_over_time(params: PdeParams, ic: &Field2D, exact: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let grid = default_grid();
    let temporal = default_time();
    let traj = simulate(&params, ic, &temporal).unwrap();
    (0..temporal.n_snapshots)
        .map(|s| {
            let t = temporal.time(s);
            traj.field(s).max_abs_diff(&Field2D::from_fn(grid, |x, y| exact(x, y, t)))
        })
        .fold(0.0, f64::max)
}

#[test]
fn advection_translates_single_mode() {
    let (cx, cy) = (0.7, -0.4);
    let k = 2.0 * PI / 2.0;
    let ic = Field2D::from_fn(default_grid(), |x, y| (k * x).sin() * (k * y).cos());
    let err = max_error_over_time(PdeParams::advection(cx, cy), &ic, |x, y, t| {
        (k * (x - cx * t)).sin() * (k * (y - cy * t)).cos()
    });
    assert!(err < 1e-3, "advection error {err}");
}

#[test]
fn heat_decays_single_mode() {
    let nu = 0.01;
    let k = 2.0 * PI / 2.0;
    let ic = Field2D::from_fn(default_grid(), |x, y| (k * x + k * y).sin());
    let err = max_error_over_time(PdeParams::heat(nu), &ic, |x, y, t| {
        (k * x + k * y).sin() * (-nu * 2.0 * k * k * t).exp()
    });
    assert!(err < 1e-3, "heat error {err}");
}

/// Successive differences under sub-step halving shrink by at least 2^3.
#[test]
fn burgers_self_convergence() {
    let grid = default_grid();
    let temporal = TemporalSpec::new(0.0, 0.5, 6).unwrap();
    let params = PdeParams::burgers(0.8, 0.5, 0.01);
    let ic = Field2D::from_fn(grid, |x, y| 0.5 * (PI * x).sin() + 0.3 * (2.0 * PI * y).cos());
    let base = substeps_per_snapshot(&params, &grid, &temporal).div_ceil(4).max(1);
    let finals: Vec<Field2D> = [base, 2 * base, 4 * base]
        .iter()
        .map(|&n| {
            let traj = simulate_with_substeps(&params, &ic, &temporal, n).unwrap();
            traj.field(temporal.n_snapshots - 1)
        })
        .collect();
    let e1 = finals[0].max_abs_diff(&finals[1]);
    let e2 = finals[1].max_abs_diff(&finals[2]);
    let order = (e1 / e2).log2();
    assert!(e2 > 1e-13, "differences at roundoff: {e2}");
    assert!(order >= 3.0, "observed order {order} (e1 {e1}, e2 {e2})");
}
