//! Space-time grid and staggered fields.
//!
//! Space is a uniform 2D cell grid; densities and value functions live at
//! cell centers on `n_t + 1` time levels, fluxes live on cell faces over the
//! `n_t` time intervals (MAC staggering: `m1` on vertical faces, `m2` on
//! horizontal faces). Time is always rescaled so the horizon is 1 and
//! `dt = 1 / n_t`.
//!
//! The forward-difference gradient maps cell values onto faces and is the
//! exact negative adjoint of the face divergence, so summation by parts
//! holds without boundary remainders: under no-flux conditions boundary
//! faces carry zero flux (and zero gradient), under periodic conditions the
//! face indexing wraps.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::{Error, Result};

/// Boundary condition applied on all four sides of the spatial domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero normal flux; boundary faces are pinned to zero.
    NoFlux,
    /// Opposite sides identified; face indices wrap.
    Periodic,
}

/// Uniform staggered grid on `[x1_min, x1_max] x [x2_min, x2_max] x [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
    pub n_x1: usize,
    pub n_x2: usize,
    pub n_t: usize,
    pub dx1: f64,
    pub dx2: f64,
    pub dt: f64,
    pub boundary: Boundary,
}

impl Grid {
    /// Builds a grid, validating positive extents and cell counts of at
    /// least 2 in every direction.
    pub fn new(
        x1_range: (f64, f64),
        x2_range: (f64, f64),
        n_x1: usize,
        n_x2: usize,
        n_t: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        let (x1_min, x1_max) = x1_range;
        let (x2_min, x2_max) = x2_range;
        if !(x1_max - x1_min).is_finite() || x1_max <= x1_min {
            return Err(Error::Config(format!(
                "x1 extent must be positive and finite, got [{x1_min}, {x1_max}]"
            )));
        }
        if !(x2_max - x2_min).is_finite() || x2_max <= x2_min {
            return Err(Error::Config(format!(
                "x2 extent must be positive and finite, got [{x2_min}, {x2_max}]"
            )));
        }
        if n_x1 < 2 || n_x2 < 2 || n_t < 2 {
            return Err(Error::Config(format!(
                "cell counts must be at least 2 in every direction, got {n_x1} x {n_x2} x {n_t}"
            )));
        }
        Ok(Grid {
            x1_min,
            x1_max,
            x2_min,
            x2_max,
            n_x1,
            n_x2,
            n_t,
            dx1: (x1_max - x1_min) / n_x1 as f64,
            dx2: (x2_max - x2_min) / n_x2 as f64,
            dt: 1.0 / n_t as f64,
            boundary,
        })
    }

    /// Center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x1_min + (i as f64 + 0.5) * self.dx1,
            self.x2_min + (j as f64 + 0.5) * self.dx2,
        )
    }

    /// Time of level `l` (0 through `n_t`).
    pub fn time(&self, l: usize) -> f64 {
        l as f64 * self.dt
    }

    pub fn cell_area(&self) -> f64 {
        self.dx1 * self.dx2
    }

    pub fn domain_area(&self) -> f64 {
        (self.x1_max - self.x1_min) * (self.x2_max - self.x2_min)
    }

    /// Nearest time level to `t in [0, 1]`.
    pub fn level_of_time(&self, t: f64) -> usize {
        ((t * self.n_t as f64).round() as usize).min(self.n_t)
    }
}

/// Cell-centered density on levels `0..=n_t`; level 0 holds the initial
/// density and is never written by the solver.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub grid: Grid,
    /// Indexed `[level, i, j]`.
    pub values: Array3<f64>,
}

impl DensityField {
    /// Replicates `rho0` across all time levels.
    pub fn constant_in_time(grid: Grid, rho0: &Array2<f64>) -> Self {
        assert_eq!(rho0.dim(), (grid.n_x1, grid.n_x2));
        let mut values = Array3::zeros((grid.n_t + 1, grid.n_x1, grid.n_x2));
        for l in 0..=grid.n_t {
            values.index_axis_mut(Axis(0), l).assign(rho0);
        }
        DensityField { grid, values }
    }

    pub fn level(&self, l: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), l)
    }

    /// Total mass `dx1 dx2 * sum rho` at level `l`.
    pub fn mass(&self, l: usize) -> f64 {
        integrate(self.level(l), &self.grid)
    }
}

/// Cell-centered value function on levels `0..=n_t`; the terminal level is
/// pinned to the terminal cost.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub grid: Grid,
    /// Indexed `[level, i, j]`.
    pub values: Array3<f64>,
}

impl ValueField {
    pub fn constant_in_time(grid: Grid, slice: &Array2<f64>) -> Self {
        assert_eq!(slice.dim(), (grid.n_x1, grid.n_x2));
        let mut values = Array3::zeros((grid.n_t + 1, grid.n_x1, grid.n_x2));
        for l in 0..=grid.n_t {
            values.index_axis_mut(Axis(0), l).assign(slice);
        }
        ValueField { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        ValueField {
            grid,
            values: Array3::zeros((grid.n_t + 1, grid.n_x1, grid.n_x2)),
        }
    }

    pub fn level(&self, l: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), l)
    }
}

/// Face fluxes over the `n_t` time intervals.
///
/// No-flux layout: `m1` is `(n_t, n_x1 + 1, n_x2)` with face `i` on the left
/// edge of cell `i` (faces `0` and `n_x1` are boundary faces, pinned to 0);
/// `m2` analogously in the second axis. Periodic layout: `m1` is
/// `(n_t, n_x1, n_x2)` with face `i` on the right edge of cell `i`, wrapping.
#[derive(Debug, Clone)]
pub struct FluxField {
    pub grid: Grid,
    pub m1: Array3<f64>,
    pub m2: Array3<f64>,
}

impl FluxField {
    pub fn zeros(grid: Grid) -> Self {
        let (s1, s2) = flux_shapes(&grid);
        FluxField {
            grid,
            m1: Array3::zeros((grid.n_t, s1.0, s1.1)),
            m2: Array3::zeros((grid.n_t, s2.0, s2.1)),
        }
    }
}

/// One time slice of a face field, shaped like the flux slices.
#[derive(Debug, Clone)]
pub struct FaceSlices {
    pub f1: Array2<f64>,
    pub f2: Array2<f64>,
}

/// Per-interval face shapes `((m1 rows, m1 cols), (m2 rows, m2 cols))`.
pub fn flux_shapes(grid: &Grid) -> ((usize, usize), (usize, usize)) {
    match grid.boundary {
        Boundary::NoFlux => (
            (grid.n_x1 + 1, grid.n_x2),
            (grid.n_x1, grid.n_x2 + 1),
        ),
        Boundary::Periodic => ((grid.n_x1, grid.n_x2), (grid.n_x1, grid.n_x2)),
    }
}

/// Forward time difference `(rho^{l+1} - rho^l) / dt` at interval `l`.
///
/// Panics when `l >= n_t`.
pub fn time_diff_forward(rho: &DensityField, l: usize) -> Array2<f64> {
    assert!(l < rho.grid.n_t, "interval index {l} out of range (n_t = {})", rho.grid.n_t);
    let next = rho.level(l + 1);
    let cur = rho.level(l);
    let mut out = next.to_owned();
    out -= &cur;
    out.mapv_inplace(|v| v / rho.grid.dt);
    out
}

/// Face divergence of the flux at interval `l`, one value per cell.
///
/// Panics when `l >= n_t`.
pub fn divergence(m: &FluxField, l: usize) -> Array2<f64> {
    assert!(l < m.grid.n_t, "interval index {l} out of range (n_t = {})", m.grid.n_t);
    let g = &m.grid;
    let m1 = m.m1.index_axis(Axis(0), l);
    let m2 = m.m2.index_axis(Axis(0), l);
    let mut out = Array2::zeros((g.n_x1, g.n_x2));
    match g.boundary {
        Boundary::NoFlux => {
            for i in 0..g.n_x1 {
                for j in 0..g.n_x2 {
                    out[[i, j]] = (m1[[i + 1, j]] - m1[[i, j]]) / g.dx1
                        + (m2[[i, j + 1]] - m2[[i, j]]) / g.dx2;
                }
            }
        }
        Boundary::Periodic => {
            for i in 0..g.n_x1 {
                let i_prev = (i + g.n_x1 - 1) % g.n_x1;
                for j in 0..g.n_x2 {
                    let j_prev = (j + g.n_x2 - 1) % g.n_x2;
                    out[[i, j]] = (m1[[i, j]] - m1[[i_prev, j]]) / g.dx1
                        + (m2[[i, j]] - m2[[i, j_prev]]) / g.dx2;
                }
            }
        }
    }
    out
}

/// Forward-difference gradient of one value level, mapped onto faces.
///
/// Under no-flux conditions the boundary-face entries are set to zero, which
/// matches the zero-flux pinning and makes the gradient exactly the negative
/// adjoint of [`divergence`].
pub fn gradient_forward(phi: ArrayView2<'_, f64>, grid: &Grid) -> FaceSlices {
    let g = grid;
    assert_eq!(phi.dim(), (g.n_x1, g.n_x2));
    let ((r1, c1), (r2, c2)) = flux_shapes(g);
    let mut f1 = Array2::zeros((r1, c1));
    let mut f2 = Array2::zeros((r2, c2));
    match g.boundary {
        Boundary::NoFlux => {
            for i in 1..g.n_x1 {
                for j in 0..g.n_x2 {
                    f1[[i, j]] = (phi[[i, j]] - phi[[i - 1, j]]) / g.dx1;
                }
            }
            for i in 0..g.n_x1 {
                for j in 1..g.n_x2 {
                    f2[[i, j]] = (phi[[i, j]] - phi[[i, j - 1]]) / g.dx2;
                }
            }
        }
        Boundary::Periodic => {
            for i in 0..g.n_x1 {
                let i_next = (i + 1) % g.n_x1;
                for j in 0..g.n_x2 {
                    f1[[i, j]] = (phi[[i_next, j]] - phi[[i, j]]) / g.dx1;
                }
            }
            for i in 0..g.n_x1 {
                for j in 0..g.n_x2 {
                    let j_next = (j + 1) % g.n_x2;
                    f2[[i, j]] = (phi[[i, j_next]] - phi[[i, j]]) / g.dx2;
                }
            }
        }
    }
    FaceSlices { f1, f2 }
}

/// Averages the two faces adjacent to each cell, per component.
pub fn faces_to_cells(faces: &FaceSlices, grid: &Grid) -> (Array2<f64>, Array2<f64>) {
    let g = grid;
    let mut c1 = Array2::zeros((g.n_x1, g.n_x2));
    let mut c2 = Array2::zeros((g.n_x1, g.n_x2));
    match g.boundary {
        Boundary::NoFlux => {
            for i in 0..g.n_x1 {
                for j in 0..g.n_x2 {
                    c1[[i, j]] = 0.5 * (faces.f1[[i, j]] + faces.f1[[i + 1, j]]);
                    c2[[i, j]] = 0.5 * (faces.f2[[i, j]] + faces.f2[[i, j + 1]]);
                }
            }
        }
        Boundary::Periodic => {
            for i in 0..g.n_x1 {
                let i_prev = (i + g.n_x1 - 1) % g.n_x1;
                for j in 0..g.n_x2 {
                    let j_prev = (j + g.n_x2 - 1) % g.n_x2;
                    c1[[i, j]] = 0.5 * (faces.f1[[i_prev, j]] + faces.f1[[i, j]]);
                    c2[[i, j]] = 0.5 * (faces.f2[[i, j_prev]] + faces.f2[[i, j]]);
                }
            }
        }
    }
    (c1, c2)
}

/// Spreads a cell scalar onto faces by averaging the two adjacent cells;
/// no-flux boundary faces stay zero.
pub fn cells_to_faces(scale: &Array2<f64>, grid: &Grid) -> FaceSlices {
    let g = grid;
    assert_eq!(scale.dim(), (g.n_x1, g.n_x2));
    let ((r1, c1), (r2, c2)) = flux_shapes(g);
    let mut f1 = Array2::zeros((r1, c1));
    let mut f2 = Array2::zeros((r2, c2));
    match g.boundary {
        Boundary::NoFlux => {
            for i in 1..g.n_x1 {
                for j in 0..g.n_x2 {
                    f1[[i, j]] = 0.5 * (scale[[i - 1, j]] + scale[[i, j]]);
                }
            }
            for i in 0..g.n_x1 {
                for j in 1..g.n_x2 {
                    f2[[i, j]] = 0.5 * (scale[[i, j - 1]] + scale[[i, j]]);
                }
            }
        }
        Boundary::Periodic => {
            for i in 0..g.n_x1 {
                let i_next = (i + 1) % g.n_x1;
                for j in 0..g.n_x2 {
                    f1[[i, j]] = 0.5 * (scale[[i, j]] + scale[[i_next, j]]);
                }
            }
            for i in 0..g.n_x1 {
                for j in 0..g.n_x2 {
                    let j_next = (j + 1) % g.n_x2;
                    f2[[i, j]] = 0.5 * (scale[[i, j]] + scale[[i, j_next]]);
                }
            }
        }
    }
    FaceSlices { f1, f2 }
}

/// Cell-weighted integral `dx1 dx2 * sum(field)`.
pub fn integrate(field: ArrayView2<'_, f64>, grid: &Grid) -> f64 {
    field.sum() * grid.cell_area()
}

/// Space-time integral with weight `dx1 dx2 dt` over all stored slices.
pub fn integrate_space_time(values: &Array3<f64>, grid: &Grid) -> f64 {
    values.sum() * grid.cell_area() * grid.dt
}

/// Face-weighted inner product of two face slices (weight `dx1 dx2`).
pub fn inner_faces(a: &FaceSlices, b: &FaceSlices, grid: &Grid) -> f64 {
    let mut sum = 0.0;
    ndarray::Zip::from(&a.f1).and(&b.f1).for_each(|x, y| sum += x * y);
    ndarray::Zip::from(&a.f2).and(&b.f2).for_each(|x, y| sum += x * y);
    sum * grid.cell_area()
}
