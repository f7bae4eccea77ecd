//! Kernel feature bases.
//!
//! A nonlocal interaction kernel is represented by features sampled at cell
//! centers together with a coefficient matrix (the Gram matrix of the
//! expansion): `K(x, y) = sum_ij k_ij f_i(x) f_j(y)`. With that structure the
//! interaction integral collapses to `sum_k a_k(t) f_k(x)` where the
//! coefficient path `a` is driven by the feature moments of the density.
//!
//! Families:
//! - linear: `sqrt(2 lambda_i) x_i`, reproducing `2 (lambda_1 x1 y1 + lambda_2 x2 y2)`
//! - gaussian: scaled Hermite-style monomials reproducing a separable
//!   Gaussian bump kernel up to a chosen total degree
//! - subregion: child bases restricted to disjoint cell masks, giving a
//!   block-diagonal kernel with zero interaction across regions
//! - fourier_green: trigonometric modes with Green-function weights for the
//!   periodic operator `mu * (I - Lap)^{-2}`

use ndarray::{Array2, Array3, ArrayView2};

use crate::grid::{Boundary, DensityField, Grid};
use crate::linalg;
use crate::{Error, Result};

/// Which constructor produced a basis; carries the parameters that matter
/// for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisFamily {
    LinearSpread { lambda1: f64, lambda2: f64 },
    Gaussian { mu: f64, sigma1: f64, sigma2: f64, order: usize },
    Subregion,
    FourierGreen { mu: f64, order: usize },
    Custom,
}

/// Feature expansion of an interaction kernel on a fixed grid.
#[derive(Debug, Clone)]
pub struct FeatureBasis {
    pub grid: Grid,
    /// One cell-centered field per feature.
    features: Vec<Array2<f64>>,
    /// Expansion coefficients `k_ij` (the kernel Gram matrix).
    gram: Array2<f64>,
    gram_inv: Array2<f64>,
    pub family: BasisFamily,
}

/// Time-dependent expansion coefficients, one row per time level.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPath {
    /// Indexed `[level, feature]`, levels `0..=n_t`.
    pub values: Array2<f64>,
}

impl CoefficientPath {
    pub fn zeros(grid: &Grid, r: usize) -> Self {
        CoefficientPath {
            values: Array2::zeros((grid.n_t + 1, r)),
        }
    }

    pub fn r(&self) -> usize {
        self.values.ncols()
    }
}

impl FeatureBasis {
    /// Number of features.
    pub fn r(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, k: usize) -> ArrayView2<'_, f64> {
        self.features[k].view()
    }

    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.gram.view()
    }

    pub fn gram_inv(&self) -> ArrayView2<'_, f64> {
        self.gram_inv.view()
    }

    /// Linear spreading kernel `2 (lambda1 x1 y1 + lambda2 x2 y2)` via the
    /// features `sqrt(2 lambda_i) x_i` with identity Gram matrix.
    pub fn linear_spread(grid: &Grid, lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative, got {l}"
                )));
            }
        }
        let mut features = Vec::with_capacity(2);
        for (lambda, axis) in [(lambda1, 0), (lambda2, 1)] {
            let w = (2.0 * lambda).sqrt();
            features.push(Array2::from_shape_fn((grid.n_x1, grid.n_x2), |(i, j)| {
                let (x1, x2) = grid.cell_center(i, j);
                w * if axis == 0 { x1 } else { x2 }
            }));
        }
        Ok(Self::with_identity_gram(
            *grid,
            features,
            BasisFamily::LinearSpread { lambda1, lambda2 },
        ))
    }

    /// Truncated expansion of the separable Gaussian kernel
    /// `mu * exp(-|x1-y1|^2 / (2 sigma1^2)) * exp(-|x2-y2|^2 / (2 sigma2^2))`
    /// with all monomial orders of total degree at most `order`; the feature
    /// count is `(order + 1)(order + 2) / 2`.
    pub fn gaussian(
        grid: &Grid,
        mu: f64,
        sigma1: f64,
        sigma2: f64,
        order: usize,
    ) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Config(format!("mu must be positive, got {mu}")));
        }
        for (name, s) in [("sigma1", sigma1), ("sigma2", sigma2)] {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {s}")));
            }
        }
        let sqrt_mu = mu.sqrt();
        let mut features = Vec::new();
        for (a1, a2) in total_degree_indices(order) {
            let norm = sigma1.powi(a1 as i32)
                * sigma2.powi(a2 as i32)
                * (factorial(a1) * factorial(a2)).sqrt();
            features.push(Array2::from_shape_fn((grid.n_x1, grid.n_x2), |(i, j)| {
                let (x1, x2) = grid.cell_center(i, j);
                let envelope =
                    (-x1 * x1 / (2.0 * sigma1 * sigma1) - x2 * x2 / (2.0 * sigma2 * sigma2)).exp();
                sqrt_mu * envelope * x1.powi(a1 as i32) * x2.powi(a2 as i32) / norm
            }));
        }
        Ok(Self::with_identity_gram(
            *grid,
            features,
            BasisFamily::Gaussian { mu, sigma1, sigma2, order },
        ))
    }

    /// Restricts child bases to pairwise disjoint cell masks. Interaction
    /// across regions is exactly zero because every feature vanishes outside
    /// its own mask; the Gram matrix is block diagonal.
    pub fn subregion(grid: &Grid, parts: Vec<(Array2<bool>, FeatureBasis)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Config("subregion basis needs at least one region".into()));
        }
        let mut claimed = Array2::<bool>::from_elem((grid.n_x1, grid.n_x2), false);
        for (mask, child) in &parts {
            if mask.dim() != (grid.n_x1, grid.n_x2) {
                return Err(Error::Config(format!(
                    "region mask shape {:?} does not match grid {} x {}",
                    mask.dim(),
                    grid.n_x1,
                    grid.n_x2
                )));
            }
            if child.grid != *grid {
                return Err(Error::Config(
                    "subregion child basis built on a different grid".into(),
                ));
            }
            for (idx, &inside) in mask.indexed_iter() {
                if inside {
                    if claimed[idx] {
                        return Err(Error::Config(format!(
                            "region masks overlap at cell {:?}",
                            idx
                        )));
                    }
                    claimed[idx] = true;
                }
            }
        }

        let r_total: usize = parts.iter().map(|(_, c)| c.r()).sum();
        let mut features = Vec::with_capacity(r_total);
        let mut gram = Array2::zeros((r_total, r_total));
        let mut gram_inv = Array2::zeros((r_total, r_total));
        let mut offset = 0;
        for (mask, child) in &parts {
            for k in 0..child.r() {
                let mut f = child.features[k].clone();
                for (idx, v) in f.indexed_iter_mut() {
                    if !mask[idx] {
                        *v = 0.0;
                    }
                }
                features.push(f);
            }
            for i in 0..child.r() {
                for j in 0..child.r() {
                    gram[[offset + i, offset + j]] = child.gram[[i, j]];
                    gram_inv[[offset + i, offset + j]] = child.gram_inv[[i, j]];
                }
            }
            offset += child.r();
        }
        let basis = FeatureBasis {
            grid: *grid,
            features,
            gram,
            gram_inv,
            family: BasisFamily::Subregion,
        };
        basis.check_gram_inverse()?;
        Ok(basis)
    }

    /// Trigonometric expansion of the periodic Green-function kernel of
    /// `mu * (I - Lap)^{-2}`: a constant mode with weight `mu` plus cosine and
    /// sine pairs with weights `2 mu / (1 + 8 pi^2 |alpha|^2 + 16 pi^4 |alpha|^4)`
    /// over half-lattice frequencies with `|alpha_1| + |alpha_2| <= order`.
    pub fn fourier_green(grid: &Grid, mu: f64, order: usize) -> Result<Self> {
        if grid.boundary != Boundary::Periodic {
            return Err(Error::Config(
                "fourier_green basis requires a periodic grid".into(),
            ));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Config(format!("mu must be positive, got {mu}")));
        }
        if order == 0 {
            return Err(Error::Config("fourier order must be at least 1".into()));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let extent1 = grid.x1_max - grid.x1_min;
        let extent2 = grid.x2_max - grid.x2_min;

        let mut features = Vec::new();
        let gamma0 = mu;
        features.push(Array2::from_elem((grid.n_x1, grid.n_x2), gamma0.sqrt()));
        for (a1, a2) in half_lattice(order) {
            let weight = green_weight(mu, a1, a2).sqrt();
            let phase = |i: usize, j: usize| {
                let (x1, x2) = grid.cell_center(i, j);
                let u1 = (x1 - grid.x1_min) / extent1;
                let u2 = (x2 - grid.x2_min) / extent2;
                two_pi * (a1 as f64 * u1 + a2 as f64 * u2)
            };
            features.push(Array2::from_shape_fn((grid.n_x1, grid.n_x2), |(i, j)| {
                weight * phase(i, j).cos()
            }));
            features.push(Array2::from_shape_fn((grid.n_x1, grid.n_x2), |(i, j)| {
                weight * phase(i, j).sin()
            }));
        }
        Ok(Self::with_identity_gram(
            *grid,
            features,
            BasisFamily::FourierGreen { mu, order },
        ))
    }

    /// Arbitrary features with an explicit symmetric positive definite Gram
    /// matrix. The inverse is validated to `|G G^-1 - I| <= 1e-10`.
    pub fn custom(grid: &Grid, features: Vec<Array2<f64>>, gram: Array2<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("custom basis needs at least one feature".into()));
        }
        for f in &features {
            if f.dim() != (grid.n_x1, grid.n_x2) {
                return Err(Error::Config(format!(
                    "feature shape {:?} does not match grid {} x {}",
                    f.dim(),
                    grid.n_x1,
                    grid.n_x2
                )));
            }
        }
        let r = features.len();
        if gram.dim() != (r, r) {
            return Err(Error::Config(format!(
                "gram matrix shape {:?} does not match feature count {r}",
                gram.dim()
            )));
        }
        let gram_inv = linalg::invert(&gram)
            .ok_or_else(|| Error::Config("gram matrix is singular".into()))?;
        let basis = FeatureBasis {
            grid: *grid,
            features,
            gram,
            gram_inv,
            family: BasisFamily::Custom,
        };
        basis.check_gram_inverse()?;
        Ok(basis)
    }

    fn with_identity_gram(grid: Grid, features: Vec<Array2<f64>>, family: BasisFamily) -> Self {
        let r = features.len();
        FeatureBasis {
            grid,
            features,
            gram: Array2::eye(r),
            gram_inv: Array2::eye(r),
            family,
        }
    }

    fn check_gram_inverse(&self) -> Result<()> {
        let prod = self.gram.dot(&self.gram_inv);
        let r = self.r();
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { 1.0 } else { 0.0 };
                if (prod[[i, j]] - want).abs() > 1e-10 {
                    return Err(Error::Config(
                        "gram matrix inverse check failed beyond 1e-10".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Reconstructed kernel value between the cells `a` and `b`.
    pub fn kernel_eval(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        let r = self.r();
        let mut sum = 0.0;
        for i in 0..r {
            let fa = self.features[i][[a.0, a.1]];
            if fa == 0.0 {
                continue;
            }
            for j in 0..r {
                sum += self.gram[[i, j]] * fa * self.features[j][[b.0, b.1]];
            }
        }
        sum
    }

    /// Interaction field `sum_k a_{l,k} f_k(x)` on every time level.
    pub fn interaction_field(&self, a: &CoefficientPath) -> Array3<f64> {
        assert_eq!(a.r(), self.r(), "coefficient path feature count mismatch");
        let g = &self.grid;
        let levels = a.values.nrows();
        let mut out = Array3::zeros((levels, g.n_x1, g.n_x2));
        for l in 0..levels {
            for k in 0..self.r() {
                let coeff = a.values[[l, k]];
                if coeff == 0.0 {
                    continue;
                }
                let f = &self.features[k];
                let mut slice = out.index_axis_mut(ndarray::Axis(0), l);
                slice.zip_mut_with(f, |o, &fv| *o += coeff * fv);
            }
        }
        out
    }

    /// Feature moments `F_{l,k} = dx1 dx2 * sum_cells f_k rho^l` for every
    /// stored time level, summed in a fixed cell order.
    pub fn moments(&self, rho: &DensityField) -> Array2<f64> {
        let levels = rho.values.dim().0;
        let area = self.grid.cell_area();
        let mut out = Array2::zeros((levels, self.r()));
        for l in 0..levels {
            let slice = rho.level(l);
            for k in 0..self.r() {
                let mut sum = 0.0;
                ndarray::Zip::from(&self.features[k])
                    .and(&slice)
                    .for_each(|f, r| sum += f * r);
                out[[l, k]] = sum * area;
            }
        }
        out
    }

    /// Applies the Gram matrix to each row of a moment array, giving the
    /// kernel-mapped moments `(K F)_l`.
    pub fn apply_gram(&self, moments: &Array2<f64>) -> Array2<f64> {
        moments.dot(&self.gram.t())
    }

    /// Multiplies every feature by `factor` (used when rescaling the time
    /// horizon, where the kernel picks up the horizon length).
    pub fn scale_features(&mut self, factor: f64) {
        for f in &mut self.features {
            f.mapv_inplace(|v| v * factor);
        }
    }
}

/// Green-function weight of a nonzero frequency pair.
pub fn green_weight(mu: f64, a1: i64, a2: i64) -> f64 {
    let pi = std::f64::consts::PI;
    let norm_sq = (a1 * a1 + a2 * a2) as f64;
    2.0 * mu / (1.0 + 8.0 * pi * pi * norm_sq + 16.0 * pi.powi(4) * norm_sq * norm_sq)
}

/// All `(a1, a2)` with `a1 + a2 <= order`, grouped by total degree with `a1`
/// descending inside each group.
fn total_degree_indices(order: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for d in 0..=order {
        for a1 in (0..=d).rev() {
            out.push((a1, d - a1));
        }
    }
    out
}

/// Half-lattice frequencies: `a1 > 0`, or `a1 = 0` with `a2 > 0`, bounded by
/// `|a1| + |a2| <= order`.
fn half_lattice(order: usize) -> Vec<(i64, i64)> {
    let n = order as i64;
    let mut out = Vec::new();
    for a2 in 1..=n {
        out.push((0, a2));
    }
    for a1 in 1..=n {
        for a2 in -(n - a1)..=(n - a1) {
            out.push((a1, a2));
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k as u64).product::<u64>() as f64
}
