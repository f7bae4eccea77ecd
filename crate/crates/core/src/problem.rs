//! Problem data: initial density, running and terminal costs, kernel basis.
//!
//! The running cost of the quadratic Lagrangian is
//! `L(x, v, t) = |v|^2 / (2 beta) + Q(x, t)` with `Q` stored per time
//! interval; the terminal cost `g` pins the last value level.

use ndarray::{Array2, Array3, Axis};

use crate::basis::FeatureBasis;
use crate::grid::{integrate, Grid};
use crate::{Error, Result};

/// Complete description of one mean-field game instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub grid: Grid,
    /// Kinetic coefficient: the Lagrangian is `|v|^2 / (2 beta) + Q`.
    pub beta: f64,
    /// Initial density, unit mass, one value per cell.
    pub rho0: Array2<f64>,
    /// Running spatial cost per time interval, indexed `[interval, i, j]`.
    pub q: Array3<f64>,
    /// Terminal cost, one value per cell.
    pub terminal: Array2<f64>,
    pub basis: FeatureBasis,
    /// Physical horizon folded into the coefficients; 1 unless rescaled.
    pub time_scale: f64,
}

impl ProblemSpec {
    pub fn new(
        grid: Grid,
        beta: f64,
        rho0: Array2<f64>,
        q: Array3<f64>,
        terminal: Array2<f64>,
        basis: FeatureBasis,
    ) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        let cells = (grid.n_x1, grid.n_x2);
        if rho0.dim() != cells {
            return Err(Error::Config(format!(
                "rho0 shape {:?} does not match grid {:?}",
                rho0.dim(),
                cells
            )));
        }
        if terminal.dim() != cells {
            return Err(Error::Config(format!(
                "terminal cost shape {:?} does not match grid {:?}",
                terminal.dim(),
                cells
            )));
        }
        if q.dim() != (grid.n_t, grid.n_x1, grid.n_x2) {
            return Err(Error::Config(format!(
                "running cost shape {:?} does not match {} intervals on grid {:?}",
                q.dim(),
                grid.n_t,
                cells
            )));
        }
        if basis.grid != grid {
            return Err(Error::Config("basis built on a different grid".into()));
        }
        if rho0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("rho0 must be finite and nonnegative".into()));
        }
        if q.iter().any(|v| !v.is_finite()) || terminal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("cost fields must be finite".into()));
        }
        let mass = integrate(rho0.view(), &grid);
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "rho0 must have unit mass within 1e-12, got {mass}"
            )));
        }
        Ok(ProblemSpec {
            grid,
            beta,
            rho0,
            q,
            terminal,
            basis,
            time_scale: 1.0,
        })
    }

    /// Running cost slice for one time interval.
    pub fn q_interval(&self, l: usize) -> ndarray::ArrayView2<'_, f64> {
        self.q.index_axis(Axis(0), l)
    }
}

/// Isotropic Gaussian bump centered at `(c1, c2)`, normalized to unit
/// discrete mass as the final step.
pub fn gaussian_density(grid: &Grid, c1: f64, c2: f64, sigma: f64) -> Result<Array2<f64>> {
    gaussian_mixture(grid, &[(1.0, c1, c2, sigma)])
}

/// Weighted sum of Gaussian bumps `(weight, c1, c2, sigma)`, normalized to
/// unit discrete mass as the final step.
pub fn gaussian_mixture(grid: &Grid, bumps: &[(f64, f64, f64, f64)]) -> Result<Array2<f64>> {
    if bumps.is_empty() {
        return Err(Error::Config("density mixture needs at least one bump".into()));
    }
    for &(w, _, _, sigma) in bumps {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Config(format!("mixture weight must be positive, got {w}")));
        }
    }
    let mut rho = Array2::zeros((grid.n_x1, grid.n_x2));
    for (idx, v) in rho.indexed_iter_mut() {
        let (x1, x2) = grid.cell_center(idx.0, idx.1);
        for &(w, c1, c2, sigma) in bumps {
            *v += w * (-((x1 - c1).powi(2) + (x2 - c2).powi(2)) / (2.0 * sigma * sigma)).exp();
        }
    }
    let mass = integrate(rho.view(), grid);
    if mass <= 0.0 {
        return Err(Error::Config("density mixture has zero discrete mass".into()));
    }
    rho.mapv_inplace(|v| v / mass);
    Ok(rho)
}

/// Polynomial confinement `coeff * max(|x1 - c1|, |x2 - c2|)^power`.
pub fn confinement_cost(
    grid: &Grid,
    center: (f64, f64),
    coeff: f64,
    power: i32,
) -> Result<Array2<f64>> {
    if !(coeff >= 0.0) || !coeff.is_finite() {
        return Err(Error::Config(format!(
            "confinement coefficient must be nonnegative, got {coeff}"
        )));
    }
    if power <= 0 || power % 2 != 0 {
        return Err(Error::Config(format!(
            "confinement power must be a positive even integer, got {power}"
        )));
    }
    Ok(Array2::from_shape_fn((grid.n_x1, grid.n_x2), |(i, j)| {
        let (x1, x2) = grid.cell_center(i, j);
        coeff * (x1 - center.0).abs().max((x2 - center.1).abs()).powi(power)
    }))
}

/// Axis-aligned rectangle with an optional vertical offset applied once per
/// time interval, so the obstacle at interval `l` is the base rectangle
/// shifted by `l * shift2_per_interval` in `x2` and clipped to the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingRect {
    pub x1_lo: f64,
    pub x1_hi: f64,
    pub x2_lo: f64,
    pub x2_hi: f64,
    pub shift2_per_interval: f64,
}

impl MovingRect {
    pub fn fixed(x1_lo: f64, x1_hi: f64, x2_lo: f64, x2_hi: f64) -> Self {
        MovingRect { x1_lo, x1_hi, x2_lo, x2_hi, shift2_per_interval: 0.0 }
    }
}

/// Obstacle cost: `height` on every cell whose center lies inside any
/// rectangle at that interval, zero elsewhere. Indexed `[interval, i, j]`.
pub fn obstacle_cost(grid: &Grid, rects: &[MovingRect], height: f64) -> Result<Array3<f64>> {
    if !(height >= 0.0) || !height.is_finite() {
        return Err(Error::Config(format!(
            "obstacle height must be nonnegative, got {height}"
        )));
    }
    for r in rects {
        if !(r.x1_lo < r.x1_hi) || !(r.x2_lo < r.x2_hi) {
            return Err(Error::Config(format!("degenerate obstacle rectangle {r:?}")));
        }
        let inside_domain = r.x1_hi > grid.x1_min
            && r.x1_lo < grid.x1_max
            && r.x2_hi > grid.x2_min
            && r.x2_lo < grid.x2_max;
        if !inside_domain {
            return Err(Error::Config(format!(
                "obstacle rectangle {r:?} lies outside the domain"
            )));
        }
    }
    let mut q = Array3::zeros((grid.n_t, grid.n_x1, grid.n_x2));
    for l in 0..grid.n_t {
        for r in rects {
            let shift = l as f64 * r.shift2_per_interval;
            let (lo2, hi2) = (r.x2_lo + shift, r.x2_hi + shift);
            for i in 0..grid.n_x1 {
                for j in 0..grid.n_x2 {
                    let (x1, x2) = grid.cell_center(i, j);
                    if x1 >= r.x1_lo && x1 <= r.x1_hi && x2 >= lo2 && x2 <= hi2 {
                        q[[l, i, j]] = height;
                    }
                }
            }
        }
    }
    Ok(q)
}

/// Named terminal cost surfaces used by the preset experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalPreset {
    Zero,
    /// Pit near `(0.5, 0.1)` drawing mass downward on the unit square.
    Spread,
    /// Pit near `x2 = 0.9` with an `x1^2` ridge, used with Gaussian kernels
    /// on `[-1, 1]^2`.
    GaussianRepulsion,
    /// Pit at `(0, 0.5)`, used by the split-domain family.
    Subregion,
}

pub fn terminal_cost_preset(grid: &Grid, preset: TerminalPreset) -> Array2<f64> {
    Array2::from_shape_fn((grid.n_x1, grid.n_x2), |(i, j)| {
        let (x1, x2) = grid.cell_center(i, j);
        match preset {
            TerminalPreset::Zero => 0.0,
            TerminalPreset::Spread => {
                let d2 = (x2 - 0.1).powi(2);
                2.0 * (-10.0 * (x1 - 0.5).powi(2) - d2).exp() * (d2 - 1.0)
            }
            TerminalPreset::GaussianRepulsion => {
                let d2 = (x2 - 0.9).powi(2);
                2.0 * (-5.0 * x1 * x1 - 0.25 * d2).exp() * (d2 - 1.0) + x1 * x1
            }
            TerminalPreset::Subregion => {
                -4.0 * (-5.0 * x1 * x1 - 2.5 * (x2 - 0.5).powi(2)).exp()
            }
        }
    })
}

/// Folds a physical horizon `T >= 1` into a unit-horizon problem: the
/// kinetic coefficient and the running cost are multiplied by `T` and every
/// kernel feature by `sqrt(T)` (so the kernel itself picks up `T`).
/// Composing two rescales multiplies the horizons.
pub fn turnpike_rescale(spec: &ProblemSpec, horizon: f64) -> Result<ProblemSpec> {
    if !(horizon >= 1.0) || !horizon.is_finite() {
        return Err(Error::Config(format!(
            "horizon must be at least 1, got {horizon}"
        )));
    }
    let mut out = spec.clone();
    out.beta *= horizon;
    out.q.mapv_inplace(|v| v * horizon);
    out.basis.scale_features(horizon.sqrt());
    out.time_scale *= horizon;
    Ok(out)
}
