//! Run orchestration: build the configured problem, solve it, and write the
//! artifact set (snapshot CSVs, residual history, heatmaps, summary JSON).
//! Also hosts the kernel-approximation sweep behind the kernel-check command.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::basis::FeatureBasis;
use crate::config::RunConfig;
use crate::experiments::{self, ExperimentPreset};
use crate::grid::{Boundary, Grid};
use crate::io::{self, PgmNormalization};
use crate::pdhg::{self, SolveOutcome};
use crate::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalResiduals {
    pub continuity: f64,
    pub a_fixedpoint: f64,
    pub complementarity: f64,
    pub iterate_change: f64,
}

/// Long-horizon diagnostics recorded for the turnpike preset: the fitted
/// plateau rate, its relative variation over the middle of the horizon, the
/// worst deviation from the affine profile, and how static the density is
/// between the 0.4 and 0.6 marks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnpikeSummary {
    pub lambda_mid: f64,
    pub lambda_rel_variation: f64,
    pub affine_drift: f64,
    pub stationarity_04_06: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub iterations: u64,
    pub converged: bool,
    pub residuals: FinalResiduals,
    pub objective: f64,
    pub objective_infeasible: bool,
    /// Wall-clock solve time in seconds. This is the only summary field that
    /// varies between reruns; all other artifact bytes are reproducible.
    pub wall_seconds: f64,
    /// Files written next to the summary, in write order.
    pub artifacts: Vec<String>,
    /// Min and max used to scale each heatmap to 0..=255.
    pub heatmap_normalization: BTreeMap<String, PgmNormalization>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub turnpike: Option<TurnpikeSummary>,
}

/// Solves the configured problem and writes every artifact into the output
/// directory. Reaching the iteration cap is reported through
/// `converged: false`, not an error; solver divergence is an error and
/// leaves no summary behind.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let preset = config.preset()?;
    let spec = config.build_spec()?;
    let steps = config.step_sizes();
    let opts = config.solve_options();
    let out_dir = Path::new(&config.out_dir);
    fs::create_dir_all(out_dir)?;

    let started = Instant::now();
    let outcome = pdhg::solve(&spec, &steps, &opts)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let mut artifacts = Vec::new();
    let mut heatmap_normalization = BTreeMap::new();
    io::write_residuals_csv(&out_dir.join("residuals.csv"), &outcome.history)?;
    artifacts.push("residuals.csv".to_string());

    let grid = spec.grid;
    for &t in &config.snapshot_times {
        let level = grid.level_of_time(t);
        let label = format!("{t}");
        let rho_slice = outcome.state.rho.level(level);
        let phi_slice = outcome.state.phi.level(level);
        if config.write_fields {
            let name = format!("rho_t{label}.csv");
            io::write_field_csv(&out_dir.join(&name), rho_slice, &grid)?;
            artifacts.push(name);
            let name = format!("phi_t{label}.csv");
            io::write_field_csv(&out_dir.join(&name), phi_slice, &grid)?;
            artifacts.push(name);
        }
        if config.heatmaps {
            let name = format!("rho_t{label}.pgm");
            let norm = io::write_pgm(&out_dir.join(&name), rho_slice)?;
            heatmap_normalization.insert(name.clone(), norm);
            artifacts.push(name);
        }
        if matches!(preset, ExperimentPreset::Turnpike { .. }) {
            // The plateau structure lives in the value function up to an
            // additive constant, so the shifted slice is what gets plotted.
            let shifted = experiments::mean_shift_normalize(phi_slice, &grid);
            if config.write_fields {
                let name = format!("phi_shift_t{label}.csv");
                io::write_field_csv(&out_dir.join(&name), shifted.view(), &grid)?;
                artifacts.push(name);
            }
            if config.heatmaps {
                let name = format!("phi_shift_t{label}.pgm");
                let norm = io::write_pgm(&out_dir.join(&name), shifted.view())?;
                heatmap_normalization.insert(name.clone(), norm);
                artifacts.push(name);
            }
        }
    }

    let turnpike = match preset {
        ExperimentPreset::Turnpike { horizon, .. } => Some(turnpike_summary(&outcome, horizon)),
        _ => None,
    };
    let objective = pdhg::saddle_objective(&outcome.state, &spec);
    let summary = RunSummary {
        config: config.clone(),
        iterations: outcome.iterations,
        converged: outcome.converged,
        residuals: FinalResiduals {
            continuity: outcome.residuals.continuity,
            a_fixedpoint: outcome.residuals.a_fixedpoint,
            complementarity: outcome.residuals.complementarity,
            iterate_change: outcome.residuals.iterate_change,
        },
        objective: objective.value,
        objective_infeasible: objective.infeasible,
        wall_seconds,
        artifacts,
        heatmap_normalization,
        turnpike,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(out_dir.join("summary.json"), text)?;
    Ok(summary)
}

fn turnpike_summary(outcome: &SolveOutcome, horizon: f64) -> TurnpikeSummary {
    let report = experiments::turnpike_diagnostics(&outcome.state.phi, horizon);
    let grid = outcome.state.phi.grid;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (l, &value) in report.lambda_hat.iter().enumerate() {
        let t = grid.time(l);
        if (0.3..=0.7).contains(&t) {
            lo = lo.min(value);
            hi = hi.max(value);
        }
    }
    let lambda_rel_variation = if hi.is_finite() && report.lambda_mid != 0.0 {
        (hi - lo) / report.lambda_mid.abs()
    } else {
        f64::NAN
    };
    TurnpikeSummary {
        lambda_mid: report.lambda_mid,
        lambda_rel_variation,
        affine_drift: report.affine_drift,
        stationarity_04_06: experiments::density_stationarity(&outcome.state.rho, 0.4, 0.6),
    }
}

/// One line of the kernel-approximation error table.
#[derive(Debug, Clone, Serialize)]
pub struct KernelCheckRow {
    pub label: String,
    pub features: usize,
    pub sup_error: f64,
}

/// Sup-norm error of the reconstructed kernel over all grid cell pairs,
/// against the closed-form kernel where one exists and against a much
/// higher-order expansion for the trigonometric family. Uses the configured
/// spatial resolution; the sweep is on the unscaled (unit-horizon) kernel
/// since horizon rescaling multiplies both sides by the same factor.
pub fn kernel_check(config: &RunConfig) -> Result<Vec<KernelCheckRow>> {
    let preset = config.preset()?;
    let (n1, n2) = (config.grid.n_x1, config.grid.n_x2);
    match preset {
        ExperimentPreset::Trivial => {
            let grid = Grid::new((0.0, 1.0), (0.0, 1.0), n1, n2, 2, Boundary::NoFlux)?;
            let basis = FeatureBasis::linear_spread(&grid, 0.0, 0.0)?;
            Ok(vec![KernelCheckRow {
                label: "zero kernel (closed form)".into(),
                features: basis.r(),
                sup_error: sup_error_vs(&basis, |_, _| 0.0),
            }])
        }
        ExperimentPreset::Spread { lambda1, lambda2 } => {
            let grid = Grid::new((0.0, 1.0), (0.0, 1.0), n1, n2, 2, Boundary::NoFlux)?;
            let basis = FeatureBasis::linear_spread(&grid, lambda1, lambda2)?;
            let sup_error = sup_error_vs(&basis, |x, y| {
                2.0 * (lambda1 * x.0 * y.0 + lambda2 * x.1 * y.1)
            });
            Ok(vec![KernelCheckRow {
                label: "bilinear (closed form)".into(),
                features: basis.r(),
                sup_error,
            }])
        }
        ExperimentPreset::GaussStatic { sigma1, sigma2, mu }
        | ExperimentPreset::GaussDynamic { sigma1, sigma2, mu } => {
            let grid = Grid::new((-1.0, 1.0), (-1.0, 1.0), n1, n2, 2, Boundary::NoFlux)?;
            let mut rows = Vec::new();
            for order in 2..=5 {
                let basis = FeatureBasis::gaussian(&grid, mu, sigma1, sigma2, order)?;
                let sup_error = sup_error_vs(&basis, |x, y| {
                    separable_gaussian(mu, sigma1, sigma2, x, y)
                });
                rows.push(KernelCheckRow {
                    label: format!("order {order}"),
                    features: basis.r(),
                    sup_error,
                });
            }
            Ok(rows)
        }
        ExperimentPreset::Subregion { sigma, mu } => {
            let grid = Grid::new((-1.0, 1.0), (-1.0, 1.0), n1, n2, 2, Boundary::NoFlux)?;
            let mut rows = Vec::new();
            for order in 2..=5 {
                let left = Array2::from_shape_fn((n1, n2), |(i, j)| {
                    grid.cell_center(i, j).0 <= 0.0
                });
                let right = left.mapv(|v| !v);
                let child = FeatureBasis::gaussian(&grid, mu, sigma, sigma, order)?;
                let basis =
                    FeatureBasis::subregion(&grid, vec![(left, child.clone()), (right, child)])?;
                let sup_error = sup_error_vs(&basis, |x, y| {
                    if (x.0 <= 0.0) == (y.0 <= 0.0) {
                        separable_gaussian(mu, sigma, sigma, x, y)
                    } else {
                        0.0
                    }
                });
                rows.push(KernelCheckRow {
                    label: format!("order {order}, masked"),
                    features: basis.r(),
                    sup_error,
                });
            }
            Ok(rows)
        }
        ExperimentPreset::Turnpike { mu, .. } => {
            let grid = Grid::new((0.0, 1.0), (0.0, 1.0), n1, n2, 2, Boundary::Periodic)?;
            let reference = FeatureBasis::fourier_green(&grid, mu, 8)?;
            let mut rows = Vec::new();
            for order in 1..=3 {
                let basis = FeatureBasis::fourier_green(&grid, mu, order)?;
                rows.push(KernelCheckRow {
                    label: format!("order {order} vs order 8"),
                    features: basis.r(),
                    sup_error: sup_diff(&basis, &reference),
                });
            }
            Ok(rows)
        }
    }
}

fn separable_gaussian(mu: f64, sigma1: f64, sigma2: f64, x: (f64, f64), y: (f64, f64)) -> f64 {
    let d1 = x.0 - y.0;
    let d2 = x.1 - y.1;
    mu * (-d1 * d1 / (2.0 * sigma1 * sigma1) - d2 * d2 / (2.0 * sigma2 * sigma2)).exp()
}

/// Features flattened to one row per cell, row-major over (i, j).
fn feature_matrix(basis: &FeatureBasis) -> Array2<f64> {
    let g = basis.grid;
    let mut b = Array2::zeros((g.n_x1 * g.n_x2, basis.r()));
    for k in 0..basis.r() {
        let f = basis.feature(k);
        for i in 0..g.n_x1 {
            for j in 0..g.n_x2 {
                b[[i * g.n_x2 + j, k]] = f[[i, j]];
            }
        }
    }
    b
}

/// `sup over cell pairs |K_basis(x, y) - exact(x, y)|`, evaluated one kernel
/// row at a time so memory stays linear in the cell count.
pub fn sup_error_vs<F>(basis: &FeatureBasis, exact: F) -> f64
where
    F: Fn((f64, f64), (f64, f64)) -> f64,
{
    let g = basis.grid;
    let cells = g.n_x1 * g.n_x2;
    let b = feature_matrix(basis);
    let c = b.dot(&basis.gram());
    let centers: Vec<(f64, f64)> =
        (0..cells).map(|idx| g.cell_center(idx / g.n_x2, idx % g.n_x2)).collect();
    let mut sup = 0.0f64;
    for a_idx in 0..cells {
        let row = b.dot(&c.row(a_idx));
        for b_idx in 0..cells {
            sup = sup.max((row[b_idx] - exact(centers[a_idx], centers[b_idx])).abs());
        }
    }
    sup
}

/// `sup over cell pairs |K_basis(x, y) - K_reference(x, y)|` for two bases on
/// the same grid.
pub fn sup_diff(basis: &FeatureBasis, reference: &FeatureBasis) -> f64 {
    assert_eq!(basis.grid.n_x1, reference.grid.n_x1);
    assert_eq!(basis.grid.n_x2, reference.grid.n_x2);
    let cells = basis.grid.n_x1 * basis.grid.n_x2;
    let b1 = feature_matrix(basis);
    let c1 = b1.dot(&basis.gram());
    let b2 = feature_matrix(reference);
    let c2 = b2.dot(&reference.gram());
    let mut sup = 0.0f64;
    for a_idx in 0..cells {
        let r1 = b1.dot(&c1.row(a_idx));
        let r2 = b2.dot(&c2.row(a_idx));
        for b_idx in 0..cells {
            sup = sup.max((r1[b_idx] - r2[b_idx]).abs());
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn sup_error_matches_pairwise_kernel_eval() {
        let grid = Grid::new((-1.0, 1.0), (-1.0, 1.0), 5, 4, 2, Boundary::NoFlux).unwrap();
        let basis = FeatureBasis::gaussian(&grid, 3.0, 0.6, 0.8, 2).unwrap();
        let exact = |x: (f64, f64), y: (f64, f64)| separable_gaussian(3.0, 0.6, 0.8, x, y);
        let fast = sup_error_vs(&basis, exact);
        let mut brute = 0.0f64;
        for ai in 0..5 {
            for aj in 0..4 {
                for bi in 0..5 {
                    for bj in 0..4 {
                        let approx = basis.kernel_eval((ai, aj), (bi, bj));
                        let want = exact(grid.cell_center(ai, aj), grid.cell_center(bi, bj));
                        brute = brute.max((approx - want).abs());
                    }
                }
            }
        }
        assert!((fast - brute).abs() <= 1e-12, "fast {fast} vs brute {brute}");
    }

    #[test]
    fn bilinear_family_reconstructs_its_kernel_exactly() {
        let mut config = RunConfig::with_defaults("spread");
        config.grid.n_x1 = 9;
        config.grid.n_x2 = 7;
        let rows = kernel_check(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].sup_error <= 1e-12, "sup error {}", rows[0].sup_error);
    }

    #[test]
    fn gaussian_sweep_has_four_orders_with_finite_errors() {
        let mut config = RunConfig::with_defaults("gauss_static");
        config.grid.n_x1 = 10;
        config.grid.n_x2 = 10;
        let rows = kernel_check(&config).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!(row.sup_error.is_finite() && row.sup_error > 0.0);
        }
        assert_eq!(rows[0].label, "order 2");
        assert!(rows[0].features < rows[3].features);
    }

    #[test]
    fn trigonometric_sweep_errors_shrink_with_order() {
        let mut config = RunConfig::with_defaults("turnpike");
        config.grid.n_x1 = 18;
        config.grid.n_x2 = 18;
        let rows = kernel_check(&config).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(
            rows[2].sup_error < rows[0].sup_error,
            "order 3 error {} should beat order 1 error {}",
            rows[2].sup_error,
            rows[0].sup_error
        );
    }
}
