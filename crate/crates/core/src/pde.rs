//! Reference solvers for the advection, heat and Burgers equations.
//!
//! The method-of-lines system uses fourth-order periodic stencils and is
//! advanced with classical RK4 on a sub-step chosen from the CFL and
//! diffusion limits, then sampled at the snapshot spacing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_with, laplacian_with, Axis, Field2D, GridSpec, StencilOrder};

/// Stencil used by the trajectory generator.
pub const GENERATOR_STENCIL: StencilOrder = StencilOrder::Fourth;

/// Safety factor applied to the explicit stability limits.
pub const STABILITY_SAFETY: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    Advection,
    Heat,
    Burgers,
}

impl PdeKind {
    pub const ALL: [PdeKind; 3] = [PdeKind::Advection, PdeKind::Heat, PdeKind::Burgers];

    pub fn id(self) -> u32 {
        match self {
            PdeKind::Advection => 0,
            PdeKind::Heat => 1,
            PdeKind::Burgers => 2,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(PdeKind::Advection),
            1 => Some(PdeKind::Heat),
            2 => Some(PdeKind::Burgers),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PdeKind::Advection => "advection",
            PdeKind::Heat => "heat",
            PdeKind::Burgers => "burgers",
        }
    }
}

impl std::fmt::Display for PdeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PdeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PdeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown pde kind `{s}`")))
    }
}

/// Physical coefficients. Coefficients a kind does not use are stored as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeParams {
    pub kind: PdeKind,
    pub c_x: f64,
    pub c_y: f64,
    pub nu: f64,
}

impl PdeParams {
    pub fn advection(c_x: f64, c_y: f64) -> Self {
        Self {
            kind: PdeKind::Advection,
            c_x,
            c_y,
            nu: 0.0,
        }
    }

    pub fn heat(nu: f64) -> Self {
        Self {
            kind: PdeKind::Heat,
            c_x: 0.0,
            c_y: 0.0,
            nu,
        }
    }

    pub fn burgers(c_x: f64, c_y: f64, nu: f64) -> Self {
        Self {
            kind: PdeKind::Burgers,
            c_x,
            c_y,
            nu,
        }
    }

    /// Largest stable RK4 sub-step, `0.2 * min(dx / |c|_max, dx^2 / (4 nu))`.
    pub fn stable_dt(&self, grid: &GridSpec) -> f64 {
        let h = grid.dx().min(grid.dy());
        let c_max = self.c_x.abs().max(self.c_y.abs());
        let convective = if c_max > 0.0 { h / c_max } else { f64::INFINITY };
        let diffusive = if self.nu > 0.0 {
            h * h / (4.0 * self.nu)
        } else {
            f64::INFINITY
        };
        STABILITY_SAFETY * convective.min(diffusive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub n_snapshots: usize,
}

impl TemporalSpec {
    pub fn new(t_start: f64, t_end: f64, n_snapshots: usize) -> Result<Self> {
        let spec = Self {
            t_start,
            t_end,
            n_snapshots,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t_start) || self.n_snapshots < 2 {
            return Err(Error::InvalidConfig(format!(
                "temporal spec needs t_end > t_start and >= 2 snapshots (got [{}, {}], {})",
                self.t_start, self.t_end, self.n_snapshots
            )));
        }
        Ok(())
    }

    pub fn snapshot_dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_snapshots - 1) as f64
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t_start + index as f64 * self.snapshot_dt()
    }
}

/// A sequence of snapshots on one grid, stored flat as `[snapshot][y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: GridSpec,
    n_snapshots: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn from_snapshots(grid: GridSpec, snapshots: &[Field2D]) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len() * snapshots.len());
        for s in snapshots {
            if s.grid() != &grid {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}x{} grid", grid.nx, grid.ny),
                    actual: format!("{}x{} grid", s.grid().nx, s.grid().ny),
                });
            }
            data.extend_from_slice(s.values());
        }
        Ok(Self {
            grid,
            n_snapshots: snapshots.len(),
            data,
        })
    }

    pub fn from_flat(grid: GridSpec, n_snapshots: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() * n_snapshots {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", grid.len() * n_snapshots),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            grid,
            n_snapshots,
            data,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_snapshots
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn snapshot(&self, index: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn field(&self, index: usize) -> Field2D {
        Field2D::from_values(self.grid, self.snapshot(index).to_vec())
            .expect("snapshot length matches grid")
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Time series at one grid point.
    pub fn point_series(&self, point: usize) -> Vec<f64> {
        (0..self.n_snapshots)
            .map(|s| self.data[s * self.grid.len() + point])
            .collect()
    }
}

/// Time derivative of `u` under `params`, using the generator stencils.
pub fn rhs(params: &PdeParams, u: &Field2D) -> Field2D {
    rhs_with(params, u, GENERATOR_STENCIL)
}

pub fn rhs_with(params: &PdeParams, u: &Field2D, order: StencilOrder) -> Field2D {
    let convection = || {
        let gx = gradient_with(u, Axis::X, order);
        let gy = gradient_with(u, Axis::Y, order);
        gx.scale(params.c_x).add_scaled(params.c_y, &gy)
    };
    match params.kind {
        PdeKind::Advection => convection().scale(-1.0),
        PdeKind::Heat => laplacian_with(u, order).scale(params.nu),
        PdeKind::Burgers => {
            let conv = convection();
            let lap = laplacian_with(u, order);
            let values = u
                .values()
                .iter()
                .zip(conv.values())
                .zip(lap.values())
                .map(|((&u, &c), &l)| -u * c + params.nu * l)
                .collect();
            Field2D::from_values(*u.grid(), values).expect("same grid")
        }
    }
}

/// Number of RK4 sub-steps per snapshot interval implied by the stability limit.
pub fn substeps_per_snapshot(params: &PdeParams, grid: &GridSpec, temporal: &TemporalSpec) -> usize {
    let dt = temporal.snapshot_dt();
    let stable = params.stable_dt(grid);
    if stable.is_finite() {
        ((dt / stable).ceil() as usize).max(1)
    } else {
        1
    }
}

/// Integrate from `ic` and sample `temporal.n_snapshots` snapshots.
pub fn simulate(params: &PdeParams, ic: &Field2D, temporal: &TemporalSpec) -> Result<Trajectory> {
    let substeps = substeps_per_snapshot(params, ic.grid(), temporal);
    simulate_with_substeps(params, ic, temporal, substeps)
}

/// Same as [`simulate`] with an explicit sub-step count per snapshot interval.
pub fn simulate_with_substeps(
    params: &PdeParams,
    ic: &Field2D,
    temporal: &TemporalSpec,
    substeps: usize,
) -> Result<Trajectory> {
    temporal.validate()?;
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be positive".into()));
    }
    if !ic.is_finite() {
        return Err(Error::InstabilityDetected {
            substep: 0,
            max_abs: ic.max_abs(),
        });
    }
    let grid = *ic.grid();
    let h = temporal.snapshot_dt() / substeps as f64;
    let mut data = Vec::with_capacity(grid.len() * temporal.n_snapshots);
    data.extend_from_slice(ic.values());
    let mut u = ic.clone();
    let mut step = 0usize;
    for _ in 1..temporal.n_snapshots {
        for _ in 0..substeps {
            u = rk4_step(params, &u, h);
            step += 1;
            if !u.is_finite() {
                return Err(Error::InstabilityDetected {
                    substep: step,
                    max_abs: u.max_abs(),
                });
            }
        }
        data.extend_from_slice(u.values());
    }
    Trajectory::from_flat(grid, temporal.n_snapshots, data)
}

fn rk4_step(params: &PdeParams, u: &Field2D, h: f64) -> Field2D {
    let k1 = rhs(params, u);
    let k2 = rhs(params, &u.add_scaled(0.5 * h, &k1));
    let k3 = rhs(params, &u.add_scaled(0.5 * h, &k2));
    let k4 = rhs(params, &u.add_scaled(h, &k3));
    let values = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            v + h / 6.0 * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i])
        })
        .collect();
    Field2D::from_values(*u.grid(), values).expect("same grid")
}
