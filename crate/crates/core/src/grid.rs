//! Uniform periodic 2D grids, scalar fields and finite-difference stencils.
//!
//! Fields are stored row-major with `x` varying fastest, so the value at
//! column `i`, row `j` lives at `j * nx + i`. The grid is periodic: the
//! point at `x_max` is identified with `x_min` and is not stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let grid = Self {
            nx,
            ny,
            x_min,
            x_max,
            y_min,
            y_max,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Square periodic domain `[min, max]^2` with `n × n` points.
    pub fn square(n: usize, min: f64, max: f64) -> Result<Self> {
        Self::new(n, n, min, max, min, max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 points per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::InvalidGrid("empty coordinate range".into()));
        }
        if ![self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidGrid("non-finite bounds".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Domain length in `x`.
    pub fn length_x(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn length_y(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn dx(&self) -> f64 {
        self.length_x() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.length_y() / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Formal accuracy order of the central-difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StencilOrder {
    #[default]
    Second,
    Fourth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", grid.len()),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(Self { grid, values })
    }

    /// Evaluate `f(x, y)` at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Largest absolute pointwise difference; NaN if either field has NaNs.
    pub fn max_abs_diff(&self, other: &Field2D) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, |m: f64, d| if d.is_nan() { f64::NAN } else { m.max(d) })
    }

    pub fn scale(&self, a: f64) -> Field2D {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field2D {
        Field2D {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + a * other`
    pub fn add_scaled(&self, a: f64, other: &Field2D) -> Field2D {
        Field2D {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(u, v)| u + a * v)
                .collect(),
        }
    }

    /// Cyclic shift: the returned field satisfies `out(i + kx, j + ky) = self(i, j)`.
    pub fn shifted(&self, kx: isize, ky: isize) -> Field2D {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        let mut out = Field2D::zeros(self.grid);
        for j in 0..ny {
            let jd = (j + ky).rem_euclid(ny) as usize;
            for i in 0..nx {
                let id = (i + kx).rem_euclid(nx) as usize;
                out.values[self.grid.index(id, jd)] = self.values[self.grid.index(i as usize, j as usize)];
            }
        }
        out
    }
}

#[inline]
fn wrap(i: usize, offset: isize, n: usize) -> usize {
    (i as isize + offset).rem_euclid(n as isize) as usize
}

/// Second-order central difference `(f[i+1] - f[i-1]) / (2 h)` with periodic wraparound.
pub fn periodic_gradient(f: &Field2D, axis: Axis) -> Field2D {
    gradient_with(f, axis, StencilOrder::Second)
}

/// Five-point Laplacian with periodic wraparound.
pub fn periodic_laplacian(f: &Field2D) -> Field2D {
    laplacian_with(f, StencilOrder::Second)
}

pub fn gradient_with(f: &Field2D, axis: Axis, order: StencilOrder) -> Field2D {
    let g = f.grid;
    let h = match axis {
        Axis::X => g.dx(),
        Axis::Y => g.dy(),
    };
    let mut out = Field2D::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let at = |o: isize| match axis {
                Axis::X => f.at(wrap(i, o, g.nx), j),
                Axis::Y => f.at(i, wrap(j, o, g.ny)),
            };
            out.values[g.index(i, j)] = match order {
                StencilOrder::Second => (at(1) - at(-1)) / (2.0 * h),
                StencilOrder::Fourth => {
                    (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)
                }
            };
        }
    }
    out
}

pub fn laplacian_with(f: &Field2D, order: StencilOrder) -> Field2D {
    let g = f.grid;
    let (dx2, dy2) = (g.dx() * g.dx(), g.dy() * g.dy());
    let mut out = Field2D::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = f.at(i, j);
            let ax = |o: isize| f.at(wrap(i, o, g.nx), j);
            let ay = |o: isize| f.at(i, wrap(j, o, g.ny));
            out.values[g.index(i, j)] = match order {
                StencilOrder::Second => {
                    (ax(1) - 2.0 * c + ax(-1)) / dx2 + (ay(1) - 2.0 * c + ay(-1)) / dy2
                }
                StencilOrder::Fourth => {
                    let x = 16.0 * (ax(1) + ax(-1) - 2.0 * c) - (ax(2) + ax(-2) - 2.0 * c);
                    let y = 16.0 * (ay(1) + ay(-1) - 2.0 * c) - (ay(2) + ay(-2) - 2.0 * c);
                    x / (12.0 * dx2) + y / (12.0 * dy2)
                }
            };
        }
    }
    out
}
