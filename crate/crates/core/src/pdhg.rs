//! Primal-dual hybrid gradient iteration for the discrete saddle point.
//!
//! The discrete objective, with cell weight `dx1 dx2`, interval weight `dt`,
//! and the feature moments `F_{l,k} = dx1 dx2 sum_cells f_k rho^l`, is
//!
//! ```text
//! L(phi, a, rho, m) =
//!     (dt/2) sum_{l=1..n_t} a_l' Ginv a_l
//!   - dxdy sum_cells phi^0 rho_0
//!   - dxdy sum_{s<n_t} sum_cells rho^{s+1} (phi^{s+1} - phi^s)
//!   - dxdy dt sum_{s<n_t} sum_faces m^s . grad phi^s
//!   - dxdy dt sum_{s<n_t} sum_cells [ |m_c^s|^2 / (2 beta rho^{s+1})
//!         + rho^{s+1} (Q^s + sum_k a_{k,s+1} f_k) ]
//! ```
//!
//! where `Ginv` is the inverse kernel Gram matrix and `m_c` the flux
//! collocated at cell centers. `(rho, m)` ascend, `(phi, a)` descend, and the
//! descent metric on `phi` is the weighted space-time H1 norm, which makes
//! the `phi` update a space-time elliptic solve. The iteration extrapolates
//! the dual pair after each step.
//!
//! Because the coupling term carries `-m . grad phi`, the ascent data for
//! the flux is `m^k - tau_m grad phi_bar`; the per-cell density update then
//! reduces to a monotone scalar root-find (`scalar_prox`).

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::basis::CoefficientPath;
use crate::grid::{
    cells_to_faces, divergence, faces_to_cells, gradient_forward, inner_faces, time_diff_forward,
    Boundary, DensityField, FaceSlices, FluxField, Grid, ValueField,
};
use crate::linalg;
use crate::problem::ProblemSpec;
use crate::{Error, Result};

/// Proximal step sizes. The time-derivative, gradient, and initial-level
/// weights define the H1 metric of the value-function update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub tau_rho: f64,
    pub tau_m: f64,
    pub tau_a: f64,
    pub tau_phi_t: f64,
    pub tau_grad_phi: f64,
    pub tau_phi_0: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            tau_rho: 0.5,
            tau_m: 0.5,
            tau_a: 0.5,
            tau_phi_t: 0.5,
            tau_grad_phi: 0.5,
            tau_phi_0: 0.5,
        }
    }
}

impl StepSizes {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("tau_rho", self.tau_rho),
            ("tau_m", self.tau_m),
            ("tau_a", self.tau_a),
            ("tau_phi_t", self.tau_phi_t),
            ("tau_grad_phi", self.tau_grad_phi),
            ("tau_phi_0", self.tau_phi_0),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "step size {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Full iterate of the solver.
///
/// `rho` level 0 stays pinned to the initial density, `phi` level `n_t` to
/// the terminal cost, and under no-flux conditions the boundary faces of `m`
/// stay zero. The bar fields hold the extrapolated duals `2 current - prev`.
#[derive(Debug, Clone)]
pub struct PdhgState {
    pub rho: DensityField,
    pub m: FluxField,
    pub phi: ValueField,
    pub a: CoefficientPath,
    pub phi_prev: ValueField,
    pub a_prev: CoefficientPath,
    pub phi_bar: ValueField,
    pub a_bar: CoefficientPath,
    pub iteration: u64,
    /// Relative L2 change of rho in the latest density update.
    last_rho_change: f64,
}

impl PdhgState {
    /// Feasible starting point: density replicated in time, flux zero,
    /// coefficients zero, value function equal to the terminal cost at every
    /// level. A problem with no interaction and no running cost is already a
    /// saddle point of this state when the terminal cost vanishes.
    pub fn init(spec: &ProblemSpec) -> Self {
        let grid = spec.grid;
        let rho = DensityField::constant_in_time(grid, &spec.rho0);
        let phi = ValueField::constant_in_time(grid, &spec.terminal);
        let a = CoefficientPath::zeros(&grid, spec.basis.r());
        PdhgState {
            rho,
            m: FluxField::zeros(grid),
            phi_prev: phi.clone(),
            phi_bar: phi.clone(),
            phi,
            a_prev: a.clone(),
            a_bar: a.clone(),
            a,
            iteration: 0,
            last_rho_change: 0.0,
        }
    }
}

/// Cached factorizations reused across iterations: the coefficient-update
/// matrix `(tau_a Ginv + I)^-1` and the orthonormal eigenbases of the 1D
/// spatial Laplacians used by the value-function solve.
#[derive(Debug, Clone)]
pub struct Workspace {
    prox_a_matrix: Array2<f64>,
    v1: Array2<f64>,
    eig1: Vec<f64>,
    v2: Array2<f64>,
    eig2: Vec<f64>,
}

impl Workspace {
    pub fn new(spec: &ProblemSpec, steps: &StepSizes) -> Result<Self> {
        steps.validate()?;
        let r = spec.basis.r();
        let mut system = spec.basis.gram_inv().to_owned();
        system.mapv_inplace(|v| v * steps.tau_a);
        for i in 0..r {
            system[[i, i]] += 1.0;
        }
        let prox_a_matrix = linalg::invert(&system).ok_or_else(|| {
            Error::Config("coefficient update matrix is singular".into())
        })?;
        let g = &spec.grid;
        let (v1, eig1) = spatial_modes(g.n_x1, g.dx1, g.boundary);
        let (v2, eig2) = spatial_modes(g.n_x2, g.dx2, g.boundary);
        Ok(Workspace { prox_a_matrix, v1, eig1, v2, eig2 })
    }
}

/// Orthonormal eigenbasis of the 1D cell-centered Laplacian: half-shifted
/// cosines under no-flux (reflecting) conditions, the half-shifted real
/// Fourier basis under periodic conditions. Columns are eigenvectors.
fn spatial_modes(n: usize, dx: f64, boundary: Boundary) -> (Array2<f64>, Vec<f64>) {
    let mut v = Array2::zeros((n, n));
    let mut eig = vec![0.0; n];
    let pi = std::f64::consts::PI;
    match boundary {
        Boundary::NoFlux => {
            for k in 0..n {
                let norm = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                for i in 0..n {
                    v[[i, k]] = norm * (pi * k as f64 * (i as f64 + 0.5) / n as f64).cos();
                }
                let s = (pi * k as f64 / (2.0 * n as f64)).sin();
                eig[k] = -4.0 / (dx * dx) * s * s;
            }
        }
        Boundary::Periodic => {
            let mut col = 0;
            let flat = (1.0 / n as f64).sqrt();
            for i in 0..n {
                v[[i, col]] = flat;
            }
            col += 1;
            let pair_norm = (2.0 / n as f64).sqrt();
            for k in 1..=(n / 2) {
                let s = (pi * k as f64 / n as f64).sin();
                let lam = -4.0 / (dx * dx) * s * s;
                if 2 * k == n {
                    // The half-shifted cosine vanishes identically at this
                    // frequency; the sine survives as the alternating mode.
                    for i in 0..n {
                        v[[i, col]] = if i % 2 == 0 { flat } else { -flat };
                    }
                    eig[col] = lam;
                    col += 1;
                } else {
                    for i in 0..n {
                        let phase = 2.0 * pi * k as f64 * (i as f64 + 0.5) / n as f64;
                        v[[i, col]] = pair_norm * phase.cos();
                        v[[i, col + 1]] = pair_norm * phase.sin();
                    }
                    eig[col] = lam;
                    eig[col + 1] = lam;
                    col += 2;
                }
            }
            debug_assert_eq!(col, n);
        }
    }
    (v, eig)
}

/// Five-point Laplacian matching the composition of [`divergence`] and
/// [`gradient_forward`]: reflecting under no-flux conditions, wrapping under
/// periodic ones.
pub fn laplacian(u: ArrayView2<'_, f64>, grid: &Grid) -> Array2<f64> {
    let g = grid;
    assert_eq!(u.dim(), (g.n_x1, g.n_x2));
    let mut out = Array2::zeros((g.n_x1, g.n_x2));
    let (inv1, inv2) = (1.0 / (g.dx1 * g.dx1), 1.0 / (g.dx2 * g.dx2));
    for i in 0..g.n_x1 {
        for j in 0..g.n_x2 {
            let c = u[[i, j]];
            let mut acc = 0.0;
            match g.boundary {
                Boundary::NoFlux => {
                    if i + 1 < g.n_x1 {
                        acc += (u[[i + 1, j]] - c) * inv1;
                    }
                    if i > 0 {
                        acc -= (c - u[[i - 1, j]]) * inv1;
                    }
                    if j + 1 < g.n_x2 {
                        acc += (u[[i, j + 1]] - c) * inv2;
                    }
                    if j > 0 {
                        acc -= (c - u[[i, j - 1]]) * inv2;
                    }
                }
                Boundary::Periodic => {
                    let ip = (i + 1) % g.n_x1;
                    let im = (i + g.n_x1 - 1) % g.n_x1;
                    let jp = (j + 1) % g.n_x2;
                    let jm = (j + g.n_x2 - 1) % g.n_x2;
                    acc += (u[[ip, j]] - 2.0 * c + u[[im, j]]) * inv1;
                    acc += (u[[i, jp]] - 2.0 * c + u[[i, jm]]) * inv2;
                }
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Scalar density update at one cell.
///
/// Let `gamma(rho) = beta b_sq / (2 (tau_m + beta rho)^2) - (rho - rho_prev)
/// / tau_rho`, a strictly decreasing function on `rho >= 0`. When
/// `gamma(0) >= c` the update is the unique nonnegative root of
/// `gamma(rho) = c`, found by a bracketed Newton iteration (monotone from
/// below because `gamma` is convex); otherwise the density truncates to 0.
/// The returned `scale = beta rho / (tau_m + beta rho)` multiplies the flux
/// data `w = m_prev - tau_m grad(phi_bar)` to give the new flux, so a zero
/// density forces a zero flux.
pub fn scalar_prox(
    b_sq: f64,
    rho_prev: f64,
    c: f64,
    tau_rho: f64,
    tau_m: f64,
    beta: f64,
) -> (f64, f64) {
    debug_assert!(b_sq >= 0.0 && rho_prev >= 0.0);
    let quad = 0.5 * beta * b_sq;
    let gamma0 = quad / (tau_m * tau_m) + rho_prev / tau_rho;
    if gamma0 < c {
        return (0.0, 0.0);
    }
    let rho = if quad == 0.0 {
        // gamma is affine; the root is explicit.
        rho_prev - tau_rho * c
    } else {
        let residual = |r: f64| {
            let denom = tau_m + beta * r;
            quad / (denom * denom) - (r - rho_prev) / tau_rho - c
        };
        let slope = |r: f64| {
            let denom = tau_m + beta * r;
            -2.0 * quad * beta / (denom * denom * denom) - 1.0 / tau_rho
        };
        let mut lo = 0.0;
        let mut hi = rho_prev + tau_rho * (gamma0 - c);
        let mut x = 0.0;
        let mut fx = gamma0 - c;
        for _ in 0..100 {
            let mut next = x - fx / slope(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let fnext = residual(next);
            if fnext >= 0.0 {
                lo = next;
            } else {
                hi = next;
            }
            let done = (next - x).abs() <= 1e-15 * (1.0 + next.abs()) || fnext == 0.0;
            x = next;
            fx = fnext;
            if done {
                break;
            }
        }
        x
    };
    let rho = rho.max(0.0);
    let scale = beta * rho / (tau_m + beta * rho);
    (rho, scale)
}

/// Density and flux update over all cells and intervals.
///
/// For interval `l` the cell data are `c = Q^l + (phi_bar^{l+1} -
/// phi_bar^l)/dt + sum_k a_bar_{k,l+1} f_k` and the squared magnitude of the
/// collocated flux data `w = m - tau_m grad(phi_bar^l)`. Each cell solves its
/// scalar problem independently; the flux is then redistributed to faces by
/// scaling `w` with the average of the two adjacent cell scales (zero on
/// no-flux boundary faces). Density level 0 is never touched.
pub fn prox_rho_m(state: &mut PdhgState, spec: &ProblemSpec, steps: &StepSizes) {
    let g = spec.grid;
    let interaction = spec.basis.interaction_field(&state.a_bar);
    let mut change_num = 0.0;
    let mut change_den = 0.0;
    for l in 0..g.n_t {
        let grad = gradient_forward(state.phi_bar.level(l), &g);
        let mut w = FaceSlices {
            f1: state.m.m1.index_axis(Axis(0), l).to_owned(),
            f2: state.m.m2.index_axis(Axis(0), l).to_owned(),
        };
        w.f1.zip_mut_with(&grad.f1, |m, &d| *m -= steps.tau_m * d);
        w.f2.zip_mut_with(&grad.f2, |m, &d| *m -= steps.tau_m * d);
        let (w1c, w2c) = faces_to_cells(&w, &g);

        let mut scale = Array2::zeros((g.n_x1, g.n_x2));
        for i in 0..g.n_x1 {
            for j in 0..g.n_x2 {
                let b_sq = w1c[[i, j]] * w1c[[i, j]] + w2c[[i, j]] * w2c[[i, j]];
                let phi_t = (state.phi_bar.values[[l + 1, i, j]]
                    - state.phi_bar.values[[l, i, j]])
                    / g.dt;
                let c = spec.q[[l, i, j]] + phi_t + interaction[[l + 1, i, j]];
                let old = state.rho.values[[l + 1, i, j]];
                let (rho_new, cell_scale) =
                    scalar_prox(b_sq, old, c, steps.tau_rho, steps.tau_m, spec.beta);
                state.rho.values[[l + 1, i, j]] = rho_new;
                scale[[i, j]] = cell_scale;
                change_num += (rho_new - old) * (rho_new - old);
                change_den += old * old;
            }
        }

        let face_scale = cells_to_faces(&scale, &g);
        let mut m1 = state.m.m1.index_axis_mut(Axis(0), l);
        ndarray::Zip::from(&mut m1)
            .and(&face_scale.f1)
            .and(&w.f1)
            .for_each(|m, &s, &wv| *m = s * wv);
        let mut m2 = state.m.m2.index_axis_mut(Axis(0), l);
        ndarray::Zip::from(&mut m2)
            .and(&face_scale.f2)
            .and(&w.f2)
            .for_each(|m, &s, &wv| *m = s * wv);
    }
    state.last_rho_change = change_num.sqrt() / change_den.sqrt().max(1e-14);
}

/// Coefficient update `a_l <- (tau_a Ginv + I)^-1 (a_l + tau_a F_l)` on every
/// time level, using the matrix cached in the workspace. `moments` must come
/// from the freshly updated density.
pub fn prox_a(state: &mut PdhgState, moments: &Array2<f64>, ws: &Workspace, tau_a: f64) {
    assert_eq!(moments.dim(), state.a.values.dim());
    let mut rhs = moments.to_owned();
    rhs.mapv_inplace(|v| v * tau_a);
    rhs += &state.a.values;
    state.a.values = rhs.dot(&ws.prox_a_matrix.t());
}

/// Applies the space-time operator of the value-function update to all
/// levels of `phi`, producing one row per time slot `l = 0..n_t-1`:
///
/// - slot 0 (Robin): `(phi^1 - phi^0) / (dt^2 tau_phi_t) - phi^0 / (dt
///   tau_phi_0) + lap(phi^0) / tau_grad_phi`,
/// - interior: `(phi^{l+1} - 2 phi^l + phi^{l-1}) / (dt^2 tau_phi_t) +
///   lap(phi^l) / tau_grad_phi`.
///
/// The terminal level only feeds the last interior row; its own (Dirichlet)
/// row is handled by the solver keeping that level fixed.
pub fn apply_spacetime_operator(
    phi: &Array3<f64>,
    grid: &Grid,
    steps: &StepSizes,
) -> Array3<f64> {
    let g = grid;
    assert_eq!(phi.dim(), (g.n_t + 1, g.n_x1, g.n_x2));
    let inv_tt = 1.0 / (g.dt * g.dt * steps.tau_phi_t);
    let robin = 1.0 / (g.dt * steps.tau_phi_0);
    let mut out = Array3::zeros((g.n_t, g.n_x1, g.n_x2));
    for l in 0..g.n_t {
        let lap = laplacian(phi.index_axis(Axis(0), l), g);
        let mut row = out.index_axis_mut(Axis(0), l);
        for i in 0..g.n_x1 {
            for j in 0..g.n_x2 {
                let time_part = if l == 0 {
                    (phi[[1, i, j]] - phi[[0, i, j]]) * inv_tt - phi[[0, i, j]] * robin
                } else {
                    (phi[[l + 1, i, j]] - 2.0 * phi[[l, i, j]] + phi[[l - 1, i, j]]) * inv_tt
                };
                row[[i, j]] = time_part + lap[[i, j]] / steps.tau_grad_phi;
            }
        }
    }
    out
}

/// Solves the value-function update: finds `phi_new` with the same terminal
/// level as `phi` such that applying [`apply_spacetime_operator`] to
/// `phi_new` equals `data` plus the operator applied to `phi`. Diagonalizes
/// space with the cached eigenbases, then solves one tridiagonal time system
/// per spatial mode.
pub fn spacetime_solve(
    phi: &Array3<f64>,
    data: &Array3<f64>,
    grid: &Grid,
    steps: &StepSizes,
    ws: &Workspace,
) -> Array3<f64> {
    let g = grid;
    assert_eq!(phi.dim(), (g.n_t + 1, g.n_x1, g.n_x2));
    assert_eq!(data.dim(), (g.n_t, g.n_x1, g.n_x2));
    let inv_tt = 1.0 / (g.dt * g.dt * steps.tau_phi_t);
    let robin = 1.0 / (g.dt * steps.tau_phi_0);

    // Spatial transform of every data slice: dhat = V1' d V2.
    let mut dhat = Array3::zeros((g.n_t, g.n_x1, g.n_x2));
    for l in 0..g.n_t {
        let slice = data.index_axis(Axis(0), l);
        dhat.index_axis_mut(Axis(0), l)
            .assign(&ws.v1.t().dot(&slice).dot(&ws.v2));
    }

    // One tridiagonal solve in time per spatial mode.
    let n = g.n_t;
    let mut lower = vec![inv_tt; n];
    let mut upper = vec![inv_tt; n];
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut delta_hat = Array3::zeros((n, g.n_x1, g.n_x2));
    for p in 0..g.n_x1 {
        for q in 0..g.n_x2 {
            let lam = ws.eig1[p] + ws.eig2[q];
            diag[0] = -inv_tt - robin + lam / steps.tau_grad_phi;
            for l in 1..n {
                diag[l] = -2.0 * inv_tt + lam / steps.tau_grad_phi;
            }
            for l in 0..n {
                rhs[l] = dhat[[l, p, q]];
            }
            let x = linalg::solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
            for l in 0..n {
                delta_hat[[l, p, q]] = x[l];
            }
        }
    }

    // Inverse transform and add the increment; the terminal level is kept.
    let mut out = phi.clone();
    for l in 0..n {
        let inc = ws.v1.dot(&delta_hat.index_axis(Axis(0), l)).dot(&ws.v2.t());
        out.index_axis_mut(Axis(0), l).zip_mut_with(&inc, |o, &d| *o += d);
    }
    out
}

/// Value-function update from the freshly updated density and flux: the
/// right-hand data is the continuity defect `(rho^{l+1} - rho^l)/dt +
/// div m^l` per interval.
pub fn prox_phi(state: &mut PdhgState, spec: &ProblemSpec, steps: &StepSizes, ws: &Workspace) {
    let g = spec.grid;
    let mut data = Array3::zeros((g.n_t, g.n_x1, g.n_x2));
    for l in 0..g.n_t {
        let mut defect = time_diff_forward(&state.rho, l);
        defect += &divergence(&state.m, l);
        data.index_axis_mut(Axis(0), l).assign(&defect);
    }
    state.phi.values = spacetime_solve(&state.phi.values, &data, &g, steps, ws);
}

/// One full iteration: density/flux ascent against the extrapolated duals,
/// coefficient update from fresh moments, value-function update from the
/// fresh continuity defect, then dual extrapolation. Pinned levels are
/// re-asserted at the end.
pub fn pdhg_step(state: &mut PdhgState, spec: &ProblemSpec, steps: &StepSizes, ws: &Workspace) {
    prox_rho_m(state, spec, steps);

    let moments = spec.basis.moments(&state.rho);
    state.a_prev = state.a.clone();
    prox_a(state, &moments, ws, steps.tau_a);

    state.phi_prev = state.phi.clone();
    prox_phi(state, spec, steps, ws);

    // Extrapolate the duals: bar = 2 new - old.
    let mut phi_bar = state.phi.values.clone();
    phi_bar.zip_mut_with(&state.phi_prev.values, |b, &p| *b = 2.0 * *b - p);
    state.phi_bar.values = phi_bar;
    let mut a_bar = state.a.values.clone();
    a_bar.zip_mut_with(&state.a_prev.values, |b, &p| *b = 2.0 * *b - p);
    state.a_bar.values = a_bar;

    // Re-assert pinned data.
    state
        .phi
        .values
        .index_axis_mut(Axis(0), spec.grid.n_t)
        .assign(&spec.terminal);
    state
        .phi_bar
        .values
        .index_axis_mut(Axis(0), spec.grid.n_t)
        .assign(&spec.terminal);
    state.iteration += 1;
}

/// Convergence diagnostics of one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// Absolute space-time L2 norm of `rho_t + div m`.
    pub continuity: f64,
    /// Relative dt-weighted L2 distance between the coefficients and the
    /// Gram-mapped feature moments of the density.
    pub a_fixedpoint: f64,
    /// Density-weighted L1 defect of the discrete backward value equation.
    pub complementarity: f64,
    /// Largest relative change of rho, phi, or a in the latest step.
    pub iterate_change: f64,
}

fn relative_l2_change<D: ndarray::Dimension>(
    new: &ndarray::Array<f64, D>,
    old: &ndarray::Array<f64, D>,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    ndarray::Zip::from(new).and(old).for_each(|&n, &o| {
        num += (n - o) * (n - o);
        den += o * o;
    });
    num.sqrt() / den.sqrt().max(1e-14)
}

pub fn residuals(state: &PdhgState, spec: &ProblemSpec) -> Residuals {
    let g = spec.grid;
    let cell_w = g.cell_area() * g.dt;

    let mut continuity_sq = 0.0;
    for l in 0..g.n_t {
        let mut defect = time_diff_forward(&state.rho, l);
        defect += &divergence(&state.m, l);
        defect.iter().for_each(|&d| continuity_sq += d * d);
    }
    let continuity = (continuity_sq * cell_w).sqrt();

    let kf = spec.basis.apply_gram(&spec.basis.moments(&state.rho));
    let mut diff_sq = 0.0;
    let mut a_sq = 0.0;
    let mut kf_sq = 0.0;
    ndarray::Zip::from(&state.a.values).and(&kf).for_each(|&av, &kv| {
        diff_sq += (av - kv) * (av - kv);
        a_sq += av * av;
        kf_sq += kv * kv;
    });
    let a_fixedpoint =
        (diff_sq * g.dt).sqrt() / (a_sq.max(kf_sq) * g.dt).sqrt().max(1e-14);

    let interaction = spec.basis.interaction_field(&state.a);
    let mut comp = 0.0;
    for l in 1..=g.n_t {
        let grad = gradient_forward(state.phi.level(l), &g);
        let (c1, c2) = faces_to_cells(&grad, &g);
        for i in 0..g.n_x1 {
            for j in 0..g.n_x2 {
                let phi_t = (state.phi.values[[l, i, j]] - state.phi.values[[l - 1, i, j]]) / g.dt;
                let grad_sq = c1[[i, j]] * c1[[i, j]] + c2[[i, j]] * c2[[i, j]];
                let defect = -phi_t + 0.5 * spec.beta * grad_sq
                    - spec.q[[l - 1, i, j]]
                    - interaction[[l, i, j]];
                comp += state.rho.values[[l, i, j]] * defect.abs();
            }
        }
    }
    let complementarity = comp * cell_w;

    let iterate_change = state
        .last_rho_change
        .max(relative_l2_change(&state.phi.values, &state.phi_prev.values))
        .max(relative_l2_change(&state.a.values, &state.a_prev.values));

    Residuals { continuity, a_fixedpoint, complementarity, iterate_change }
}

/// Saddle objective value; `infeasible` marks a state with flux on a cell of
/// zero density, where the kinetic term is infinite (reported through the
/// sentinel value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub infeasible: bool,
}

/// Sentinel reported for infeasible states.
pub const INFEASIBLE_OBJECTIVE: f64 = 1e300;

/// Evaluates the discrete saddle objective at the current iterate.
pub fn saddle_objective(state: &PdhgState, spec: &ProblemSpec) -> ObjectiveValue {
    let g = spec.grid;
    let area = g.cell_area();
    let gram_inv = spec.basis.gram_inv();

    let mut quad = 0.0;
    for l in 1..=g.n_t {
        let a_l = state.a.values.row(l);
        let ga = gram_inv.dot(&a_l.to_owned());
        quad += a_l.dot(&ga);
    }
    let t1 = 0.5 * g.dt * quad;

    let mut t2 = 0.0;
    ndarray::Zip::from(state.phi.level(0)).and(&spec.rho0).for_each(|&p, &r| t2 += p * r);
    let t2 = t2 * area;

    let mut t3 = 0.0;
    for s in 0..g.n_t {
        for i in 0..g.n_x1 {
            for j in 0..g.n_x2 {
                t3 += state.rho.values[[s + 1, i, j]]
                    * (state.phi.values[[s + 1, i, j]] - state.phi.values[[s, i, j]]);
            }
        }
    }
    let t3 = t3 * area;

    let mut t4 = 0.0;
    for s in 0..g.n_t {
        let grad = gradient_forward(state.phi.level(s), &g);
        let faces = FaceSlices {
            f1: state.m.m1.index_axis(Axis(0), s).to_owned(),
            f2: state.m.m2.index_axis(Axis(0), s).to_owned(),
        };
        t4 += inner_faces(&faces, &grad, &g);
    }
    let t4 = t4 * g.dt;

    let interaction = spec.basis.interaction_field(&state.a);
    let mut t5 = 0.0;
    let mut infeasible = false;
    for s in 0..g.n_t {
        let faces = FaceSlices {
            f1: state.m.m1.index_axis(Axis(0), s).to_owned(),
            f2: state.m.m2.index_axis(Axis(0), s).to_owned(),
        };
        let (c1, c2) = faces_to_cells(&faces, &g);
        for i in 0..g.n_x1 {
            for j in 0..g.n_x2 {
                let rho = state.rho.values[[s + 1, i, j]];
                let m_sq = c1[[i, j]] * c1[[i, j]] + c2[[i, j]] * c2[[i, j]];
                if rho > 0.0 {
                    t5 += m_sq / (2.0 * spec.beta * rho)
                        + rho * (spec.q[[s, i, j]] + interaction[[s + 1, i, j]]);
                } else if m_sq > 0.0 {
                    infeasible = true;
                }
            }
        }
    }
    let t5 = t5 * area * g.dt;

    if infeasible {
        ObjectiveValue { value: INFEASIBLE_OBJECTIVE, infeasible: true }
    } else {
        ObjectiveValue { value: t1 - t2 - t3 - t4 - t5, infeasible: false }
    }
}

/// Returns the name of the first state field holding a non-finite value.
fn nonfinite_field(state: &PdhgState) -> Option<&'static str> {
    if state.rho.values.iter().any(|v| !v.is_finite()) {
        return Some("rho");
    }
    if state.m.m1.iter().chain(state.m.m2.iter()).any(|v| !v.is_finite()) {
        return Some("m");
    }
    if state.phi.values.iter().any(|v| !v.is_finite()) {
        return Some("phi");
    }
    if state.a.values.iter().any(|v| !v.is_finite()) {
        return Some("a");
    }
    None
}

/// Iteration budget, tolerance, and history stride of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iters: u64,
    /// The solve stops when `max(continuity, a_fixedpoint) <= tol`.
    pub tol: f64,
    /// Residual history is recorded every this many iterations (and at the
    /// final iteration); 0 disables history.
    pub log_stride: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iters: 20_000, tol: 1e-3, log_stride: 100 }
    }
}

/// One recorded history row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iteration: u64,
    pub continuity: f64,
    pub a_fixedpoint: f64,
    pub complementarity: f64,
    pub objective: f64,
}

/// Result of a solve: the final iterate, whether the tolerance was reached,
/// and the recorded residual history.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: PdhgState,
    pub residuals: Residuals,
    pub iterations: u64,
    pub converged: bool,
    pub history: Vec<HistoryRow>,
}

pub fn solve(spec: &ProblemSpec, steps: &StepSizes, opts: &SolveOptions) -> Result<SolveOutcome> {
    solve_with_observer(spec, steps, opts, |_, _, _| {})
}

/// Runs the iteration until `max(continuity, a_fixedpoint) <= tol` or the
/// iteration budget is exhausted. The observer sees every iterate after its
/// residuals are computed. A non-finite value in any field aborts with a
/// divergence error naming the field and iteration.
pub fn solve_with_observer(
    spec: &ProblemSpec,
    steps: &StepSizes,
    opts: &SolveOptions,
    mut observer: impl FnMut(u64, &PdhgState, &Residuals),
) -> Result<SolveOutcome> {
    steps.validate()?;
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::Config(format!(
            "solve needs a positive tolerance and at least one iteration, got tol {} and {} iterations",
            opts.tol, opts.max_iters
        )));
    }
    let ws = Workspace::new(spec, steps)?;
    let mut state = PdhgState::init(spec);
    let mut history = Vec::new();
    let mut res = residuals(&state, spec);
    let mut converged = false;
    let mut last_logged = 0;
    while state.iteration < opts.max_iters {
        pdhg_step(&mut state, spec, steps, &ws);
        if let Some(field) = nonfinite_field(&state) {
            return Err(Error::Diverged { field, iteration: state.iteration });
        }
        res = residuals(&state, spec);
        observer(state.iteration, &state, &res);
        converged = res.continuity.max(res.a_fixedpoint) <= opts.tol;
        if opts.log_stride > 0
            && (state.iteration % opts.log_stride == 0 || converged || state.iteration == opts.max_iters)
            && state.iteration != last_logged
        {
            let objective = saddle_objective(&state, spec).value;
            history.push(HistoryRow {
                iteration: state.iteration,
                continuity: res.continuity,
                a_fixedpoint: res.a_fixedpoint,
                complementarity: res.complementarity,
                objective,
            });
            last_logged = state.iteration;
        }
        if converged {
            break;
        }
    }
    let iterations = state.iteration;
    Ok(SolveOutcome { state, residuals: res, iterations, converged, history })
}
