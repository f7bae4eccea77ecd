//! Acceptance checks for the whole solver, one test per criterion. Each
//! test prints a single `[PASS]`/`[FAIL]` line with the measured numbers;
//! run with
//!
//! ```text
//! cargo test -p nlmfg --test acceptance -- --test-threads=1 --nocapture
//! ```
//!
//! to see the lines in order. The wall-clock budgets assume the suite has
//! the machine to itself. Check a3 documents a known calibration gap: the
//! Gaussian feature expansion decays with the truncation order, but on the
//! stated grid it does not reach a tenth of the order-2 error by order 5,
//! so that test fails by design until the basis is recalibrated.

use std::time::Instant;

use ndarray::{Array1, Array2, Array3, Axis};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use nlmfg::basis::FeatureBasis;
use nlmfg::experiments::{self, ExperimentPreset};
use nlmfg::grid::{Boundary, Grid};
use nlmfg::linalg;
use nlmfg::pdhg::{
    apply_spacetime_operator, scalar_prox, solve_with_observer, spacetime_solve, SolveOptions,
    SolveOutcome, StepSizes, Workspace,
};
use nlmfg::problem::{gaussian_density, ProblemSpec};
use nlmfg::runner;

fn verdict(ok: bool, label: &str, detail: &str) -> bool {
    println!("[{}] {label}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

/// The one-feature problem whose coefficient path is known in closed form:
/// a constant feature of unit height with kernel weight `k` forces
/// `a(t) = k` once the density settles, independent of the density itself.
fn constant_feature_spec(n_x: usize, n_t: usize, k: f64) -> ProblemSpec {
    let g = Grid::new((0.0, 1.0), (0.0, 1.0), n_x, n_x, n_t, Boundary::NoFlux).unwrap();
    let rho0 = gaussian_density(&g, 0.5, 0.5, 0.25).unwrap();
    let basis = FeatureBasis::custom(
        &g,
        vec![Array2::from_elem((n_x, n_x), 1.0)],
        Array2::from_elem((1, 1), k),
    )
    .unwrap();
    ProblemSpec::new(g, 1.0, rho0, Array3::zeros((n_t, n_x, n_x)), Array2::zeros((n_x, n_x)), basis)
        .unwrap()
}

/// Solves while enforcing the feasibility invariants every full run must
/// satisfy: the density stays nonnegative at every iterate, the final mass
/// drift stays within `10 tol`, and the coefficient fixed-point residual is
/// within `tol` at termination. All full solves in this suite go through
/// here (a5 re-derives the same checks without the panics so its verdict
/// line always prints).
fn checked_solve(spec: &ProblemSpec, steps: &StepSizes, opts: &SolveOptions) -> SolveOutcome {
    let mut min_rho = f64::INFINITY;
    let out = solve_with_observer(spec, steps, opts, |_, state, _| {
        min_rho = state.rho.values.iter().cloned().fold(min_rho, f64::min);
    })
    .expect("solver diverged");
    assert!(min_rho >= 0.0, "density went negative during the run: {min_rho}");
    let drift = (0..=spec.grid.n_t)
        .map(|l| (out.state.rho.mass(l) - 1.0).abs())
        .fold(0.0f64, f64::max);
    assert!(
        drift <= 10.0 * opts.tol,
        "mass drift {drift:.3e} exceeds {:.1e}",
        10.0 * opts.tol
    );
    assert!(
        out.residuals.a_fixedpoint <= opts.tol,
        "coefficient residual {:.3e} above tol {:.1e} at termination",
        out.residuals.a_fixedpoint,
        opts.tol
    );
    out
}

fn gamma(rho: f64, b_sq: f64, rho_prev: f64, tau_rho: f64, tau_m: f64, beta: f64) -> f64 {
    0.5 * beta * b_sq / (tau_m + beta * rho).powi(2) - (rho - rho_prev) / tau_rho
}

fn bisect_root(b_sq: f64, rho_prev: f64, c: f64, tau_rho: f64, tau_m: f64, beta: f64) -> f64 {
    let g0 = gamma(0.0, b_sq, rho_prev, tau_rho, tau_m, beta);
    assert!(g0 >= c);
    let mut lo = 0.0;
    let mut hi = rho_prev + tau_rho * (g0 - c);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma(mid, b_sq, rho_prev, tau_rho, tau_m, beta) >= c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn a1_pointwise_prox_matches_bisection() {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut max_gap = 0.0f64;
    let mut sign_agreed = true;
    for _ in 0..100_000 {
        let b_sq = rng.gen_range(0.0..=10.0);
        let rho_prev = rng.gen_range(0.0..=5.0);
        let c = rng.gen_range(-5.0..=5.0);
        let tau_rho = rng.gen_range(0.05..=2.0);
        let tau_m = rng.gen_range(0.05..=2.0);
        let beta = if rng.gen_bool(0.5) { 1.0 } else { 10.0 };
        let (rho, scale) = scalar_prox(b_sq, rho_prev, c, tau_rho, tau_m, beta);
        if gamma(0.0, b_sq, rho_prev, tau_rho, tau_m, beta) < c {
            sign_agreed &= rho == 0.0 && scale == 0.0;
        } else {
            let want = bisect_root(b_sq, rho_prev, c, tau_rho, tau_m, beta);
            max_gap = max_gap.max((rho - want).abs());
            let want_scale = beta * rho / (tau_m + beta * rho);
            max_gap = max_gap.max((scale - want_scale).abs());
        }
    }
    let wall = t0.elapsed().as_secs_f64();
    let ok = max_gap <= 1e-10 && sign_agreed && wall < 5.0;
    let detail = format!(
        "max gap vs bisection {max_gap:.2e} over 1e5 draws (budget 1e-10), \
         truncation sign test agreed: {sign_agreed}, {wall:.1}s (budget 5s)"
    );
    assert!(verdict(ok, "a1 pointwise density prox vs bisection", &detail), "{detail}");
}

#[test]
fn a2_spacetime_solver_exactness() {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(7);

    // Manufactured increments on 16^2 x 8, both boundary kinds, with
    // deliberately unequal metric weights.
    let mut worst_rel = 0.0f64;
    for &boundary in &[Boundary::NoFlux, Boundary::Periodic] {
        let g = Grid::new((0.0, 1.0), (0.0, 1.0), 16, 16, 8, boundary).unwrap();
        let steps =
            StepSizes { tau_phi_t: 0.4, tau_grad_phi: 0.9, tau_phi_0: 0.6, ..Default::default() };
        let spec = {
            let rho0 = gaussian_density(&g, 0.5, 0.5, 0.2).unwrap();
            let basis = FeatureBasis::linear_spread(&g, 1.0, 1.0).unwrap();
            ProblemSpec::new(g, 1.0, rho0, Array3::zeros((8, 16, 16)), Array2::zeros((16, 16)), basis)
                .unwrap()
        };
        let ws = Workspace::new(&spec, &steps).unwrap();

        let phi_old = Array3::from_shape_fn((9, 16, 16), |_| rng.gen_range(-1.0..1.0));
        let mut delta = Array3::from_shape_fn((9, 16, 16), |_| rng.gen_range(-1.0..1.0));
        delta.index_axis_mut(Axis(0), 8).fill(0.0);
        let mut target = phi_old.clone();
        target += &delta;
        let lhs = apply_spacetime_operator(&target, &g, &steps);
        let base = apply_spacetime_operator(&phi_old, &g, &steps);
        let data = &lhs - &base;
        let solved = spacetime_solve(&phi_old, &data, &g, &steps, &ws);
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        ndarray::Zip::from(&solved).and(&target).for_each(|&a, &b| {
            err = err.max((a - b).abs());
            scale = scale.max(b.abs());
        });
        worst_rel = worst_rel.max(err / scale.max(1.0));
    }

    // Dense-assembly oracle on 4^2 x 3.
    let mut worst_dense = 0.0f64;
    for &boundary in &[Boundary::NoFlux, Boundary::Periodic] {
        let g = Grid::new((0.0, 1.0), (0.0, 1.0), 4, 4, 3, boundary).unwrap();
        let steps = StepSizes::default();
        let spec = {
            let rho0 = gaussian_density(&g, 0.5, 0.5, 0.3).unwrap();
            let basis = FeatureBasis::linear_spread(&g, 1.0, 1.0).unwrap();
            ProblemSpec::new(g, 1.0, rho0, Array3::zeros((3, 4, 4)), Array2::zeros((4, 4)), basis)
                .unwrap()
        };
        let ws = Workspace::new(&spec, &steps).unwrap();
        let unknowns = 3 * 4 * 4;
        let mut dense = Array2::zeros((unknowns, unknowns));
        for col in 0..unknowns {
            let mut basis_vec = Array3::zeros((4, 4, 4));
            basis_vec.as_slice_mut().unwrap()[col] = 1.0;
            let applied = apply_spacetime_operator(&basis_vec, &g, &steps);
            for (row, &v) in applied.as_slice().unwrap().iter().enumerate() {
                dense[[row, col]] = v;
            }
        }
        let dense_inv = linalg::invert(&dense).expect("operator must be invertible");

        let phi_old = Array3::from_shape_fn((4, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let data = Array3::from_shape_fn((3, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let solved = spacetime_solve(&phi_old, &data, &g, &steps, &ws);
        let rhs = Array1::from_iter(data.iter().cloned());
        let delta_flat = dense_inv.dot(&rhs);
        for l in 0..3 {
            for i in 0..4 {
                for j in 0..4 {
                    let want = phi_old[[l, i, j]] + delta_flat[l * 16 + i * 4 + j];
                    worst_dense = worst_dense.max((solved[[l, i, j]] - want).abs());
                }
            }
        }
    }

    let wall = t0.elapsed().as_secs_f64();
    let ok = worst_rel <= 1e-10 && worst_dense <= 1e-9 && wall < 10.0;
    let detail = format!(
        "manufactured recovery rel err {worst_rel:.2e} (budget 1e-10), \
         dense oracle gap {worst_dense:.2e} (budget 1e-9), {wall:.1}s (budget 10s)"
    );
    assert!(verdict(ok, "a2 value-function solver exactness", &detail), "{detail}");
}

#[test]
fn a3_gaussian_kernel_error_decay() {
    let g = Grid::new((-1.0, 1.0), (-1.0, 1.0), 33, 33, 2, Boundary::NoFlux).unwrap();
    let (mu, sigma) = (5.0, 0.5);
    let exact = |x: (f64, f64), y: (f64, f64)| {
        let d1 = x.0 - y.0;
        let d2 = x.1 - y.1;
        mu * (-d1 * d1 / (2.0 * sigma * sigma) - d2 * d2 / (2.0 * sigma * sigma)).exp()
    };
    let errs: Vec<f64> = (2..=5)
        .map(|order| {
            let basis = FeatureBasis::gaussian(&g, mu, sigma, sigma, order).unwrap();
            runner::sup_error_vs(&basis, exact)
        })
        .collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let target = 0.1 * errs[0];
    let ok = decreasing && errs[3] <= target;
    let detail = format!(
        "sup errors for orders 2..5: {:.5}, {:.5}, {:.5}, {:.5}; strictly decreasing: \
         {decreasing}; order-5 target {target:.5} (10% of order 2), got {:.5}",
        errs[0], errs[1], errs[2], errs[3], errs[3]
    );
    assert!(verdict(ok, "a3 gaussian kernel error decay", &detail), "{detail}");
}

#[test]
fn a4_constant_feature_fixed_point() {
    let t0 = Instant::now();
    let spec = constant_feature_spec(16, 8, 2.0);
    let opts = SolveOptions { max_iters: 2000, tol: 1e-4, log_stride: 0 };
    let out = checked_solve(&spec, &StepSizes::default(), &opts);
    let a_rel_err = (0..=spec.grid.n_t)
        .map(|l| (out.state.a.values[[l, 0]] - 2.0).abs() / 2.0)
        .fold(0.0f64, f64::max);
    let wall = t0.elapsed().as_secs_f64();
    let ok = out.converged
        && a_rel_err <= 1e-4
        && out.residuals.continuity <= 1e-4
        && out.iterations <= 2000
        && wall < 30.0;
    let detail = format!(
        "converged: {} in {} iterations (budget 2000), coefficient rel err {a_rel_err:.2e} \
         (budget 1e-4), continuity {:.2e} (budget 1e-4), {wall:.1}s (budget 30s)",
        out.converged, out.iterations, out.residuals.continuity
    );
    assert!(verdict(ok, "a4 constant-feature fixed point", &detail), "{detail}");
}

#[test]
fn a5_feasibility_invariants() {
    let spec = constant_feature_spec(16, 8, 2.0);
    let opts = SolveOptions { max_iters: 2000, tol: 1e-4, log_stride: 0 };
    let mut min_rho = f64::INFINITY;
    let out = solve_with_observer(&spec, &StepSizes::default(), &opts, |_, state, _| {
        min_rho = state.rho.values.iter().cloned().fold(min_rho, f64::min);
    })
    .expect("solver diverged");
    let drift = (0..=spec.grid.n_t)
        .map(|l| (out.state.rho.mass(l) - 1.0).abs())
        .fold(0.0f64, f64::max);
    let ok = out.converged
        && min_rho >= 0.0
        && drift <= 10.0 * opts.tol
        && out.residuals.a_fixedpoint <= opts.tol;
    let detail = format!(
        "min density over all iterates {min_rho:.2e} (must be >= 0), final mass drift \
         {drift:.2e} (budget {:.0e}), coefficient residual {:.2e} at termination (budget \
         {:.0e}); the same checks guard every full run in this suite",
        10.0 * opts.tol,
        out.residuals.a_fixedpoint,
        opts.tol
    );
    assert!(verdict(ok, "a5 feasibility invariants", &detail), "{detail}");
}

#[test]
fn a6_spread_variance_ordering() {
    let t0 = Instant::now();
    let lambdas = [(0.1, 0.1), (4.0, 0.1), (0.1, 4.0), (4.0, 4.0)];
    let mut var1 = [0.0f64; 4];
    let mut var2 = [0.0f64; 4];
    for (idx, &(l1, l2)) in lambdas.iter().enumerate() {
        let spec = ExperimentPreset::Spread { lambda1: l1, lambda2: l2 }.build(32, 32, 16).unwrap();
        let opts = SolveOptions { max_iters: 20_000, tol: 1e-3, log_stride: 0 };
        let out = checked_solve(&spec, &StepSizes::default(), &opts);
        assert!(out.converged, "spread run ({l1}, {l2}) hit the iteration cap");
        let (v1, v2) = experiments::spread_metrics(&out.state.rho, 0.9);
        var1[idx] = v1;
        var2[idx] = v2;
    }
    let wall = t0.elapsed().as_secs_f64();
    let x1_ordered = var1[1] > var1[0] && var1[3] > var1[2];
    let x2_ordered = var2[2] > var2[0] && var2[3] > var2[1];
    let ok = x1_ordered && x2_ordered && wall < 600.0;
    let detail = format!(
        "var at t=0.9 by (lambda1, lambda2): (0.1,0.1)->({:.4},{:.4}) (4,0.1)->({:.4},{:.4}) \
         (0.1,4)->({:.4},{:.4}) (4,4)->({:.4},{:.4}); x1 ordering {x1_ordered}, x2 ordering \
         {x2_ordered}, {wall:.0}s (budget 600s)",
        var1[0], var2[0], var1[1], var2[1], var1[2], var2[2], var1[3], var2[3]
    );
    assert!(verdict(ok, "a6 spread variance ordering", &detail), "{detail}");
}

#[test]
fn a7_grid_independent_iteration_counts() {
    let mut counts = Vec::new();
    for n_x in [16usize, 32, 64] {
        let spec = constant_feature_spec(n_x, 8, 2.0);
        let opts = SolveOptions { max_iters: 5000, tol: 1e-3, log_stride: 0 };
        let out = checked_solve(&spec, &StepSizes::default(), &opts);
        assert!(out.converged, "{n_x}^2 run hit the iteration cap");
        counts.push(out.iterations);
    }
    let lo = *counts.iter().min().unwrap() as f64;
    let hi = *counts.iter().max().unwrap() as f64;
    let ratio = hi / lo;
    let ok = ratio <= 2.0;
    let detail = format!(
        "iterations at 16/32/64 cells per side with one fixed step set: {}, {}, {}; \
         spread factor {ratio:.2} (budget 2.0)",
        counts[0], counts[1], counts[2]
    );
    assert!(verdict(ok, "a7 grid-independent iteration counts", &detail), "{detail}");
}

#[test]
fn a8_long_horizon_plateau() {
    let t0 = Instant::now();
    let spec =
        ExperimentPreset::Turnpike { mu: 200.0, horizon: 10.0, order: 2 }.build(32, 32, 32).unwrap();
    let steps = StepSizes {
        tau_rho: 0.02,
        tau_a: 0.02,
        tau_m: 0.5,
        tau_phi_t: 2.0,
        tau_grad_phi: 2.0,
        tau_phi_0: 2.0,
    };
    let opts = SolveOptions { max_iters: 30_000, tol: 1e-3, log_stride: 0 };
    let out = checked_solve(&spec, &steps, &opts);
    assert!(out.converged, "long-horizon run hit the iteration cap");
    let report = experiments::turnpike_diagnostics(&out.state.phi, 10.0);
    let g = out.state.phi.grid;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (l, &v) in report.lambda_hat.iter().enumerate() {
        let t = g.time(l);
        if (0.3..=0.7).contains(&t) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let rel_var = (hi - lo) / report.lambda_mid.abs();
    let s = experiments::density_stationarity(&out.state.rho, 0.4, 0.6);
    let wall = t0.elapsed().as_secs_f64();
    let ok = rel_var <= 0.10 && s <= 0.05 && wall < 900.0;
    let detail = format!(
        "growth rate {:.3} with relative variation {rel_var:.2e} over the mid window \
         (budget 0.10), density movement {s:.2e} between t=0.4 and 0.6 (budget 0.05), \
         {} iterations, {wall:.0}s (budget 900s)",
        report.lambda_mid, out.iterations
    );
    assert!(verdict(ok, "a8 long-horizon plateau", &detail), "{detail}");
}

#[test]
fn a9_subregion_interface_isolation() {
    let spec = ExperimentPreset::Subregion { sigma: 0.2, mu: 5.0 }.build(16, 16, 8).unwrap();
    let steps = StepSizes {
        tau_rho: 0.2,
        tau_a: 0.2,
        tau_m: 0.15,
        tau_phi_t: 5.0,
        tau_grad_phi: 5.0,
        tau_phi_0: 5.0,
    };
    let opts = SolveOptions { max_iters: 120_000, tol: 1e-3, log_stride: 0 };
    let out = checked_solve(&spec, &steps, &opts);

    let g = spec.grid;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for i in 0..g.n_x1 {
        for j in 0..g.n_x2 {
            if g.cell_center(i, j).0 < 0.0 {
                left.push((i, j));
            } else {
                right.push((i, j));
            }
        }
    }
    let mut cross_nonzero = 0u64;
    for &a in &left {
        for &b in &right {
            if spec.basis.kernel_eval(a, b) != 0.0 || spec.basis.kernel_eval(b, a) != 0.0 {
                cross_nonzero += 1;
            }
        }
    }
    // The check only means something if the kernel is alive within a side.
    let same_side = spec.basis.kernel_eval(left[0], left[1]);
    let pairs = 2 * left.len() * right.len();
    let ok = out.converged && cross_nonzero == 0 && same_side != 0.0;
    let detail = format!(
        "converged: {} in {} iterations, {cross_nonzero} of {pairs} cross-interface kernel \
         samples nonzero (must be 0), same-side sample {same_side:.3e} (must be nonzero)",
        out.converged, out.iterations
    );
    assert!(verdict(ok, "a9 subregion interface isolation", &detail), "{detail}");
}
