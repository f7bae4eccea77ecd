//! Named experiment presets and their diagnostics.
//!
//! Five families, each building a complete [`ProblemSpec`] from a handful of
//! parameters with tested defaults:
//!
//! - `spread`: linear kernel on the unit square, mass pulled from the top
//!   toward the bottom while spreading anisotropically,
//! - `gauss_static`: Gaussian repulsion on `[-1, 1]^2` with four fixed
//!   rectangular obstacles forming channels,
//! - `gauss_dynamic`: same repulsion with vertically moving obstacle bars
//!   and a five-bump initial density,
//! - `subregion`: Gaussian repulsion acting separately on the two halves
//!   `x1 <= 0` and `x1 > 0` (block-diagonal kernel, no cross talk),
//! - `turnpike`: periodic long-horizon problem whose rescaled solution
//!   approximates a stationary system; diagnosed by the affine profile of
//!   the value function.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::basis::FeatureBasis;
use crate::grid::{integrate, Boundary, DensityField, Grid, ValueField};
use crate::problem::{
    confinement_cost, gaussian_density, gaussian_mixture, obstacle_cost, terminal_cost_preset,
    turnpike_rescale, MovingRect, ProblemSpec, TerminalPreset,
};
use crate::{Error, Result};

/// Grid used by the full-size runs.
pub const DEFAULT_NX: usize = 64;
pub const DEFAULT_NT: usize = 32;
/// Snapshot times reported by the experiment figures.
pub const DEFAULT_SNAPSHOT_TIMES: [f64; 3] = [0.1, 0.5, 0.9];

const OBSTACLE_HEIGHT: f64 = 1e5;
const CONFINEMENT_COEFF: f64 = 1e3;
const CONFINEMENT_POWER: i32 = 8;

/// One of the experiment families with its parameters. `Trivial` is a
/// cost-free zero-interaction smoke test whose exact solution keeps the
/// uniform density static; the other five are the full model problems.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentPreset {
    Trivial,
    Spread { lambda1: f64, lambda2: f64 },
    GaussStatic { sigma1: f64, sigma2: f64, mu: f64 },
    GaussDynamic { sigma1: f64, sigma2: f64, mu: f64 },
    Subregion { sigma: f64, mu: f64 },
    Turnpike { mu: f64, horizon: f64, order: usize },
}

impl ExperimentPreset {
    /// The preset with its family's default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "trivial" => Ok(ExperimentPreset::Trivial),
            "spread" => Ok(ExperimentPreset::Spread { lambda1: 4.0, lambda2: 4.0 }),
            "gauss_static" => {
                Ok(ExperimentPreset::GaussStatic { sigma1: 0.2, sigma2: 0.2, mu: 5.0 })
            }
            "gauss_dynamic" => {
                Ok(ExperimentPreset::GaussDynamic { sigma1: 0.2, sigma2: 0.2, mu: 5.0 })
            }
            "subregion" => Ok(ExperimentPreset::Subregion { sigma: 0.2, mu: 5.0 }),
            "turnpike" => Ok(ExperimentPreset::Turnpike { mu: 200.0, horizon: 10.0, order: 2 }),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected trivial, spread, gauss_static, gauss_dynamic, subregion, or turnpike)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentPreset::Trivial => "trivial",
            ExperimentPreset::Spread { .. } => "spread",
            ExperimentPreset::GaussStatic { .. } => "gauss_static",
            ExperimentPreset::GaussDynamic { .. } => "gauss_dynamic",
            ExperimentPreset::Subregion { .. } => "subregion",
            ExperimentPreset::Turnpike { .. } => "turnpike",
        }
    }

    /// All presets with default parameters, in listing order.
    pub fn all() -> Vec<ExperimentPreset> {
        ["trivial", "spread", "gauss_static", "gauss_dynamic", "subregion", "turnpike"]
            .iter()
            .map(|n| ExperimentPreset::from_name(n).expect("built-in name"))
            .collect()
    }

    /// Assembles the problem on an `n_x1 x n_x2 x n_t` grid.
    pub fn build(&self, n_x1: usize, n_x2: usize, n_t: usize) -> Result<ProblemSpec> {
        match *self {
            ExperimentPreset::Trivial => {
                let grid =
                    Grid::new((0.0, 1.0), (0.0, 1.0), n_x1, n_x2, n_t, Boundary::NoFlux)?;
                let rho0 = Array2::from_elem((n_x1, n_x2), 1.0);
                let q = Array3::zeros((n_t, n_x1, n_x2));
                let terminal = Array2::zeros((n_x1, n_x2));
                let basis = FeatureBasis::linear_spread(&grid, 0.0, 0.0)?;
                ProblemSpec::new(grid, 1.0, rho0, q, terminal, basis)
            }
            ExperimentPreset::Spread { lambda1, lambda2 } => {
                let grid =
                    Grid::new((0.0, 1.0), (0.0, 1.0), n_x1, n_x2, n_t, Boundary::NoFlux)?;
                let rho0 = gaussian_density(&grid, 0.5, 0.9, 0.2)?;
                let mut q_slice =
                    confinement_cost(&grid, (0.5, 0.5), CONFINEMENT_COEFF, CONFINEMENT_POWER)?;
                // The local reward -lambda_i x_i^2 is the other half of the
                // mean-distance penalty: combined with the bilinear kernel
                // +2 lambda_i x_i y_i it rewards each agent's squared
                // distance from the population mean, which is what drives
                // the spreading.
                for ((i, j), v) in q_slice.indexed_iter_mut() {
                    let (x1, x2) = grid.cell_center(i, j);
                    *v -= lambda1 * x1 * x1 + lambda2 * x2 * x2;
                }
                let q = replicate(&q_slice, n_t);
                let terminal = terminal_cost_preset(&grid, TerminalPreset::Spread);
                let basis = FeatureBasis::linear_spread(&grid, lambda1, lambda2)?;
                ProblemSpec::new(grid, 1.0, rho0, q, terminal, basis)
            }
            ExperimentPreset::GaussStatic { sigma1, sigma2, mu } => {
                let grid =
                    Grid::new((-1.0, 1.0), (-1.0, 1.0), n_x1, n_x2, n_t, Boundary::NoFlux)?;
                let rho0 = gaussian_density(&grid, 0.0, -0.9, 0.2)?;
                let mut q = replicate(
                    &confinement_cost(&grid, (0.5, 0.5), CONFINEMENT_COEFF, CONFINEMENT_POWER)?,
                    n_t,
                );
                q += &obstacle_cost(&grid, &static_obstacles(), OBSTACLE_HEIGHT)?;
                let terminal = terminal_cost_preset(&grid, TerminalPreset::GaussianRepulsion);
                let basis = FeatureBasis::gaussian(&grid, mu, sigma1, sigma2, 3)?;
                ProblemSpec::new(grid, 1.0, rho0, q, terminal, basis)
            }
            ExperimentPreset::GaussDynamic { sigma1, sigma2, mu } => {
                let grid =
                    Grid::new((-1.0, 1.0), (-1.0, 1.0), n_x1, n_x2, n_t, Boundary::NoFlux)?;
                let bumps: Vec<(f64, f64, f64, f64)> = (1..=5)
                    .map(|j| (1.0, -1.2 + 0.4 * j as f64, -0.9, 0.2))
                    .collect();
                let rho0 = gaussian_mixture(&grid, &bumps)?;
                let mut q = replicate(
                    &confinement_cost(&grid, (0.5, 0.5), CONFINEMENT_COEFF, CONFINEMENT_POWER)?,
                    n_t,
                );
                q += &obstacle_cost(&grid, &moving_obstacles(n_t), OBSTACLE_HEIGHT)?;
                let terminal = terminal_cost_preset(&grid, TerminalPreset::GaussianRepulsion);
                let basis = FeatureBasis::gaussian(&grid, mu, sigma1, sigma2, 3)?;
                ProblemSpec::new(grid, 1.0, rho0, q, terminal, basis)
            }
            ExperimentPreset::Subregion { sigma, mu } => {
                let grid =
                    Grid::new((-1.0, 1.0), (-1.0, 1.0), n_x1, n_x2, n_t, Boundary::NoFlux)?;
                let rho0 = gaussian_mixture(
                    &grid,
                    &[(1.0, 0.2, -0.9, 0.2), (1.0, -0.2, -0.9, 0.2)],
                )?;
                let q = replicate(
                    &confinement_cost(&grid, (0.5, 0.5), CONFINEMENT_COEFF, CONFINEMENT_POWER)?,
                    n_t,
                );
                let terminal = terminal_cost_preset(&grid, TerminalPreset::Subregion);
                let left = Array2::from_shape_fn((n_x1, n_x2), |(i, j)| {
                    grid.cell_center(i, j).0 <= 0.0
                });
                let right = left.mapv(|v| !v);
                let child = FeatureBasis::gaussian(&grid, mu, sigma, sigma, 3)?;
                let basis = FeatureBasis::subregion(
                    &grid,
                    vec![(left, child.clone()), (right, child)],
                )?;
                ProblemSpec::new(grid, 1.0, rho0, q, terminal, basis)
            }
            ExperimentPreset::Turnpike { mu, horizon, order } => {
                let grid =
                    Grid::new((0.0, 1.0), (0.0, 1.0), n_x1, n_x2, n_t, Boundary::Periodic)?;
                let rho0 = Array2::from_elem((n_x1, n_x2), 1.0);
                let two_pi = 2.0 * std::f64::consts::PI;
                let q_slice = Array2::from_shape_fn((n_x1, n_x2), |(i, j)| {
                    let (x1, x2) = grid.cell_center(i, j);
                    -(two_pi * x2).sin() - (two_pi * x1).sin() - (2.0 * two_pi * x1).cos()
                });
                let q = replicate(&q_slice, n_t);
                let terminal = Array2::zeros((n_x1, n_x2));
                let basis = FeatureBasis::fourier_green(&grid, mu, order)?;
                let base = ProblemSpec::new(grid, 1.0, rho0, q, terminal, basis)?;
                turnpike_rescale(&base, horizon)
            }
        }
    }
}

fn replicate(slice: &Array2<f64>, n_t: usize) -> Array3<f64> {
    let (n1, n2) = slice.dim();
    let mut out = Array3::zeros((n_t, n1, n2));
    for l in 0..n_t {
        out.index_axis_mut(Axis(0), l).assign(slice);
    }
    out
}

/// Two rows of obstacles on `[-1, 1]^2`: the lower pair leaves a central
/// channel, the upper pair leaves side channels plus a narrow central slit,
/// so mass has to weave.
fn static_obstacles() -> Vec<MovingRect> {
    vec![
        MovingRect::fixed(-1.0, -0.3, -0.5, -0.3),
        MovingRect::fixed(0.3, 1.0, -0.5, -0.3),
        MovingRect::fixed(-0.6, -0.05, 0.1, 0.3),
        MovingRect::fixed(0.05, 0.6, 0.1, 0.3),
    ]
}

/// Two bars sweeping vertically in opposite directions, crossing the
/// domain's middle band during the run.
fn moving_obstacles(n_t: usize) -> Vec<MovingRect> {
    let sweep = 0.5;
    let per_interval = sweep / n_t as f64;
    vec![
        MovingRect {
            x1_lo: -0.8,
            x1_hi: -0.2,
            x2_lo: -0.3,
            x2_hi: -0.1,
            shift2_per_interval: per_interval,
        },
        MovingRect {
            x1_lo: 0.2,
            x1_hi: 0.8,
            x2_lo: 0.3,
            x2_hi: 0.5,
            shift2_per_interval: -per_interval,
        },
    ]
}

/// Per-axis second central moments of the density slice nearest to time `t`,
/// normalized by the slice mass.
pub fn spread_metrics(rho: &DensityField, t: f64) -> (f64, f64) {
    let g = rho.grid;
    let slice = rho.level(g.level_of_time(t));
    let area = g.cell_area();
    let mut mass = 0.0;
    let mut mean1 = 0.0;
    let mut mean2 = 0.0;
    for ((i, j), &v) in slice.indexed_iter() {
        let (x1, x2) = g.cell_center(i, j);
        mass += v * area;
        mean1 += x1 * v * area;
        mean2 += x2 * v * area;
    }
    if mass <= 0.0 {
        return (0.0, 0.0);
    }
    mean1 /= mass;
    mean2 /= mass;
    let mut var1 = 0.0;
    let mut var2 = 0.0;
    for ((i, j), &v) in slice.indexed_iter() {
        let (x1, x2) = g.cell_center(i, j);
        var1 += (x1 - mean1) * (x1 - mean1) * v * area;
        var2 += (x2 - mean2) * (x2 - mean2) * v * area;
    }
    (var1 / mass, var2 / mass)
}

/// L1 distance between the density slices nearest to `t1` and `t2`.
pub fn density_stationarity(rho: &DensityField, t1: f64, t2: f64) -> f64 {
    let g = rho.grid;
    let a = rho.level(g.level_of_time(t1));
    let b = rho.level(g.level_of_time(t2));
    let mut sum = 0.0;
    ndarray::Zip::from(&a).and(&b).for_each(|&x, &y| sum += (x - y).abs());
    sum * g.cell_area()
}

/// Long-horizon diagnostics of a solved problem.
///
/// `lambda_hat[l]` estimates the ergodic constant from the spatial mean of
/// `phi / (horizon * (1 - t_l))` at level `l < n_t` (the terminal level is
/// excluded: the profile vanishes there). `lambda_mid` averages the estimate
/// over the mid window `t in [0.3, 0.7]`, and `affine_drift` is the sup-norm
/// distance of `phi / horizon` from the affine profile `lambda_mid (1 - t)`
/// over that window.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnpikeReport {
    pub lambda_hat: Vec<f64>,
    pub lambda_mid: f64,
    pub affine_drift: f64,
}

pub fn turnpike_diagnostics(phi: &ValueField, horizon: f64) -> TurnpikeReport {
    let g = phi.grid;
    let volume = g.domain_area();
    let mut lambda_hat = Vec::with_capacity(g.n_t);
    for l in 0..g.n_t {
        let t = g.time(l);
        let mean = integrate(phi.level(l), &g) / volume;
        lambda_hat.push(mean / (horizon * (1.0 - t)));
    }
    let mid: Vec<usize> = (0..g.n_t)
        .filter(|&l| {
            let t = g.time(l);
            (0.3..=0.7).contains(&t)
        })
        .collect();
    let lambda_mid = if mid.is_empty() {
        0.0
    } else {
        mid.iter().map(|&l| lambda_hat[l]).sum::<f64>() / mid.len() as f64
    };
    let mut affine_drift: f64 = 0.0;
    for &l in &mid {
        let t = g.time(l);
        let profile = lambda_mid * (1.0 - t);
        for &v in phi.level(l).iter() {
            affine_drift = affine_drift.max((v / horizon - profile).abs());
        }
    }
    TurnpikeReport { lambda_hat, lambda_mid, affine_drift }
}

/// Subtracts the spatial mean, leaving a field with zero discrete mean.
pub fn mean_shift_normalize(field: ArrayView2<'_, f64>, grid: &Grid) -> Array2<f64> {
    let mean = integrate(field, grid) / grid.domain_area();
    field.mapv(|v| v - mean)
}
