//! G-norm machinery: analytic ribbon bounds and a numerical estimator.
//!
//! The discrete G-norm of a zero-mean image `f` is
//!
//! ```text
//! ||f||_G = inf { max_i |g_i|  :  div g = f }
//! ```
//!
//! with the pointwise Euclidean norm on the vector field `g`. The estimator
//! solves this min-max flow problem with an augmented-Lagrangian (ADMM)
//! scheme: one half-step restores the divergence constraint exactly through
//! a conjugate-gradient Poisson solve, the other clips the field's pointwise
//! norms (the prox of the max-norm). Every iteration therefore yields
//!
//! * a feasible field, whose max norm is a certified upper bound, and
//! * a dual test function `w`, whose bound `<f, w> / ||grad w||_1` is a
//!   certified lower bound (exact weak duality under the discrete
//!   adjointness of `gradient`/`divergence`).
//!
//! For ribbon indicators the interval narrows onto the analytic band of
//! [`lemma1_bounds`].

use crate::decomposition::tv_norm;
use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, ImageGrid, VectorField};

/// Analytic G-norm band of the unit ribbon indicator with aspect ratio `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RibbonBounds {
    pub n: f64,
    /// `n / (2n + 2)`
    pub lower: f64,
    /// `1/2`
    pub upper: f64,
}

/// G-norm band of the indicator of a `1 x n` ribbon: `[n/(2n+2), 1/2]`.
///
/// The upper bound comes from writing the indicator as the divergence of a
/// clamped ramp of sup-norm 1/2; the lower bound from
/// `||f||_G ||f||_BV >= integral of f^2` with `||f||_BV = 2n + 2`.
pub fn lemma1_bounds(n: f64) -> Result<RibbonBounds> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("aspect ratio must be > 0, got {n}")));
    }
    Ok(RibbonBounds {
        n,
        lower: n / (2.0 * n + 2.0),
        upper: 0.5,
    })
}

/// Certified duality lower bound `<f, w> / tv_norm(w)`.
///
/// Valid for any test image `w` with nonzero total variation; the quotient
/// never exceeds the discrete G-norm of a zero-mean `f`.
pub fn duality_lower_bound(f: &ImageGrid, w: &ImageGrid) -> Result<f64> {
    if f.width() != w.width() || f.height() != w.height() {
        return Err(Error::Dimension(format!(
            "f is {}x{} but w is {}x{}",
            f.width(),
            f.height(),
            w.width(),
            w.height()
        )));
    }
    let tv = tv_norm(w);
    if tv <= 0.0 {
        return Err(Error::Domain(
            "duality bound needs a test image with nonzero total variation".into(),
        ));
    }
    Ok(f.dot(w) / tv)
}

/// Result of the numerical G-norm estimation.
#[derive(Debug, Clone, Copy)]
pub struct GNormEstimate {
    /// Best certified feasible objective (equals `certified_upper`).
    pub value: f64,
    pub certified_lower: f64,
    pub certified_upper: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Mean subtracted from the input before estimating (the G-norm is
    /// defined for zero-mean images; discrete divergences sum to zero).
    pub mean_removed: f64,
}

pub const DEFAULT_GNORM_TOL: f64 = 5e-3;
pub const DEFAULT_GNORM_MAX_ITER: usize = 4000;

/// Estimate the discrete G-norm of `f`.
///
/// `tol` is the relative certified gap at which iteration stops; `max_iter`
/// caps the ADMM iterations.
pub fn gnorm_estimate(f: &ImageGrid, tol: f64, max_iter: usize) -> Result<GNormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol must be > 0, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Domain("max_iter must be positive".into()));
    }
    if !f.all_finite() {
        return Err(Error::Domain("input contains non-finite values".into()));
    }
    let mean = f.mean();
    let b = f.map(|v| v - mean);
    let scale = b.max_abs();
    if scale <= 0.0 {
        return Ok(GNormEstimate {
            value: 0.0,
            certified_lower: 0.0,
            certified_upper: 0.0,
            converged: true,
            iterations: 0,
            mean_removed: mean,
        });
    }

    let (w, h) = (b.width(), b.height());
    let n = w * h;
    let mut solver = PoissonSolver::new(w, h);

    // initial feasible field: g = grad(nu), div(grad(nu)) = b
    let mut nu = ImageGrid::zeros(w, h);
    solver.solve(&b, &mut nu, 1e-11);
    let mut g = gradient(&nu);
    let mut hfield = g.clone();
    let mut dual = VectorField::zeros(w, h);

    let mut best_upper = g.max_norm();
    let mut best_lower = duality_lower_bound(&b, &b).unwrap_or(0.0).max(0.0);

    let mut rho = 1.0 / best_upper.max(1e-12);
    let mut converged = false;
    let mut iterations = 0;
    let mut rhs = ImageGrid::zeros(w, h);
    let mut z = VectorField::zeros(w, h);

    for _ in 0..max_iter {
        iterations += 1;

        // g-step: project h - dual onto {div g = b}
        for i in 0..n {
            z.gx_mut()[i] = hfield.gx()[i] - dual.gx()[i];
            z.gy_mut()[i] = hfield.gy()[i] - dual.gy()[i];
        }
        let div_z = divergence(&z);
        for i in 0..n {
            rhs.data_mut()[i] = b.data()[i] - div_z.data()[i];
        }
        solver.solve(&rhs, &mut nu, 1e-10);
        let grad_nu = gradient(&nu);
        for i in 0..n {
            g.gx_mut()[i] = z.gx()[i] + grad_nu.gx()[i];
            g.gy_mut()[i] = z.gy()[i] + grad_nu.gy()[i];
        }
        best_upper = best_upper.min(g.max_norm());

        // lower bound candidate: the Poisson multiplier approaches the
        // optimal dual test function (sign is a gauge; both are valid)
        if let Ok(lb) = duality_lower_bound(&b, &nu) {
            best_lower = best_lower.max(lb.abs());
        }

        // h-step: prox of the max-norm = pointwise clip at a level
        // absorbing 1/rho of total mass
        let prev_h = hfield.clone();
        for i in 0..n {
            hfield.gx_mut()[i] = g.gx()[i] + dual.gx()[i];
            hfield.gy_mut()[i] = g.gy()[i] + dual.gy()[i];
        }
        clip_prox(&mut hfield, 1.0 / rho);

        // dual update and residuals
        let mut r_primal = 0.0f64;
        let mut r_dual = 0.0f64;
        for i in 0..n {
            let ex = g.gx()[i] - hfield.gx()[i];
            let ey = g.gy()[i] - hfield.gy()[i];
            dual.gx_mut()[i] += ex;
            dual.gy_mut()[i] += ey;
            r_primal += ex * ex + ey * ey;
            let dx = hfield.gx()[i] - prev_h.gx()[i];
            let dy = hfield.gy()[i] - prev_h.gy()[i];
            r_dual += dx * dx + dy * dy;
        }
        r_primal = r_primal.sqrt();
        r_dual = rho * r_dual.sqrt();

        if best_upper - best_lower <= tol * best_upper.max(1e-12) {
            converged = true;
            break;
        }

        // residual balancing keeps the scheme scale-free
        if r_primal > 10.0 * r_dual && rho < 1e12 {
            rho *= 2.0;
            let (dx, dy) = dual.components_mut();
            for v in dx.iter_mut().chain(dy.iter_mut()) {
                *v *= 0.5;
            }
        } else if r_dual > 10.0 * r_primal && rho > 1e-12 {
            rho *= 0.5;
            let (dx, dy) = dual.components_mut();
            for v in dx.iter_mut().chain(dy.iter_mut()) {
                *v *= 2.0;
            }
        }
    }

    let certified_lower = best_lower.min(best_upper);
    Ok(GNormEstimate {
        value: best_upper,
        certified_lower,
        certified_upper: best_upper,
        converged,
        iterations,
        mean_removed: mean,
    })
}

/// Clip the pointwise norms of `field` at the level `lambda` such that the
/// total clipped mass equals `budget`; this is the prox of the max-of-norms
/// function (Moreau decomposition against the sum-of-norms ball).
fn clip_prox(field: &mut VectorField, budget: f64) {
    let n = field.gx().len();
    let norms: Vec<f64> = (0..n)
        .map(|i| field.gx()[i].hypot(field.gy()[i]))
        .collect();
    let total: f64 = norms.iter().sum();
    if total <= budget {
        // whole field fits in the dual ball: prox collapses it to zero
        let (fx, fy) = field.components_mut();
        for v in fx.iter_mut().chain(fy.iter_mut()) {
            *v = 0.0;
        }
        return;
    }
    // find lambda with sum_i max(n_i - lambda, 0) = budget
    let mut sorted = norms.clone();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut prefix = 0.0;
    let mut lambda = 0.0;
    for (k, &nk) in sorted.iter().enumerate() {
        prefix += nk;
        let cand = (prefix - budget) / (k + 1) as f64;
        if k + 1 == sorted.len() || cand >= sorted[k + 1] {
            lambda = cand;
            break;
        }
    }
    let lambda = lambda.max(0.0);
    for i in 0..n {
        if norms[i] > lambda {
            let s = lambda / norms[i];
            field.gx_mut()[i] *= s;
            field.gy_mut()[i] *= s;
        }
    }
}

/// Warm-started conjugate-gradient solver for `div(grad(nu)) = rhs`.
struct PoissonSolver {
    w: usize,
    h: usize,
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

impl PoissonSolver {
    fn new(w: usize, h: usize) -> Self {
        PoissonSolver {
            w,
            h,
            r: vec![0.0; w * h],
            p: vec![0.0; w * h],
            ap: vec![0.0; w * h],
        }
    }

    /// Apply the (negated) five-point Neumann Laplacian: out = -div(grad(x)).
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        for y in 0..h {
            for xx in 0..w {
                let i = y * w + xx;
                let c = x[i];
                let mut acc = 0.0;
                if xx + 1 < w {
                    acc += c - x[i + 1];
                }
                if xx > 0 {
                    acc += c - x[i - 1];
                }
                if y + 1 < h {
                    acc += c - x[i + w];
                }
                if y > 0 {
                    acc += c - x[i - w];
                }
                out[i] = acc;
            }
        }
    }

    /// Solve `div(grad(nu)) = rhs` (rhs must be zero-mean), warm-starting
    /// from the passed `nu`. Stops when the residual 2-norm falls below
    /// `rel_tol * ||rhs||`.
    fn solve(&mut self, rhs: &ImageGrid, nu: &mut ImageGrid, rel_tol: f64) {
        let n = self.w * self.h;
        let rhs_neg: Vec<f64> = rhs.data().iter().map(|&v| -v).collect();
        let rhs_norm = rhs_neg.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rhs_norm == 0.0 {
            return;
        }
        let tol_abs = rel_tol * rhs_norm;
        let x = nu.data_mut();
        // r = rhs_neg - A x
        let mut ax = std::mem::take(&mut self.ap);
        self.apply(x, &mut ax);
        for i in 0..n {
            self.r[i] = rhs_neg[i] - ax[i];
        }
        self.ap = ax;
        self.p.copy_from_slice(&self.r);
        let mut rs: f64 = self.r.iter().map(|v| v * v).sum();
        let max_cg = 20 * (self.w + self.h);
        for _ in 0..max_cg {
            if rs.sqrt() <= tol_abs {
                break;
            }
            let mut ap = std::mem::take(&mut self.ap);
            self.apply(&self.p, &mut ap);
            let pap: f64 = self.p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                self.ap = ap;
                break;
            }
            let alpha = rs / pap;
            for i in 0..n {
                x[i] += alpha * self.p[i];
                self.r[i] -= alpha * ap[i];
            }
            self.ap = ap;
            let rs_new: f64 = self.r.iter().map(|v| v * v).sum();
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..n {
                self.p[i] = self.r[i] + beta * self.p[i];
            }
        }
        // keep the zero-mean gauge
        let mean = x.iter().sum::<f64>() / n as f64;
        for v in x.iter_mut() {
            *v -= mean;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_ribbon;

    #[test]
    fn lemma_bounds_formula() {
        let b = lemma1_bounds(1.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.25, 0.5));
        let b = lemma1_bounds(4.0).unwrap();
        assert!((b.lower - 0.4).abs() < 1e-15);
        assert_eq!(b.upper, 0.5);
        let b = lemma1_bounds(1e6).unwrap();
        assert!((b.lower - 0.5).abs() < 1e-6);
        assert!(lemma1_bounds(0.0).is_err());
        assert!(lemma1_bounds(-3.0).is_err());
    }

    #[test]
    fn lemma_lower_bound_increases_with_n() {
        let mut prev = 0.0;
        for n in [1.0, 2.0, 4.0, 8.0, 64.0] {
            let b = lemma1_bounds(n).unwrap();
            assert!(b.lower > prev && b.lower < b.upper);
            prev = b.lower;
        }
    }

    #[test]
    fn estimate_of_zero_is_zero() {
        let e = gnorm_estimate(&ImageGrid::zeros(16, 16), 1e-3, 100).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.converged);
    }

    /// Exact G-norm of a column-constant zero-mean image: the flow problem
    /// reduces to one dimension, where the unique feasible x-transport is
    /// the running column sum. Upper and lower bounds coincide at
    /// `max_i |sum_{j<=i} c_j|` over interior prefixes.
    fn exact_column_gnorm(cols: &[f64]) -> f64 {
        let mut ps = 0.0;
        let mut best = 0.0f64;
        for &c in &cols[..cols.len() - 1] {
            ps += c;
            best = best.max(ps.abs());
        }
        best
    }

    fn column_image(cols: &[f64], h: usize) -> ImageGrid {
        let w = cols.len();
        let mut img = ImageGrid::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, cols[x]);
            }
        }
        img
    }

    #[test]
    fn estimator_matches_exact_column_oracle() {
        // sinusoid columns: closed-form optimum from partial sums
        let w = 48;
        for k in [2usize, 5] {
            let cols: Vec<f64> = (0..w)
                .map(|x| (std::f64::consts::TAU * k as f64 * x as f64 / w as f64).sin())
                .collect();
            let img = column_image(&cols, 32);
            let exact = exact_column_gnorm(&cols);
            let est = gnorm_estimate(&img, 1e-3, 4000).unwrap();
            assert!(
                (est.value - exact).abs() <= 0.02 * exact,
                "k={k}: estimate {} vs exact {exact}",
                est.value
            );
            assert!(est.certified_lower <= exact * (1.0 + 1e-9));
            assert!(est.certified_upper >= exact * (1.0 - 1e-9));
        }
    }

    #[test]
    fn doubling_frequency_decreases_estimate() {
        let w = 64;
        let mk = |k: usize| {
            let cols: Vec<f64> = (0..w)
                .map(|x| (std::f64::consts::TAU * k as f64 * x as f64 / w as f64).sin())
                .collect();
            column_image(&cols, 32)
        };
        let lo = gnorm_estimate(&mk(3), 1e-3, 4000).unwrap();
        let hi = gnorm_estimate(&mk(6), 1e-3, 4000).unwrap();
        assert!(
            hi.value < lo.value,
            "higher oscillation should be cheaper: {} vs {}",
            hi.value,
            lo.value
        );
    }

    #[test]
    fn ribbon_estimate_lands_in_lemma_band() {
        // width-6 aspect-8 ribbon on a 96 grid, normalized by width*contrast
        let n_aspect = 8usize;
        let w_px = 6usize;
        let img = make_ribbon(n_aspect, w_px, 96, 96).unwrap();
        let est = gnorm_estimate(&img, 2e-3, 4000).unwrap();
        let normalized = est.value / w_px as f64;
        let bounds = lemma1_bounds(n_aspect as f64).unwrap();
        assert!(
            normalized >= bounds.lower - 0.05 && normalized <= bounds.upper + 0.05,
            "normalized estimate {normalized} outside [{}, {}] (+-0.05)",
            bounds.lower,
            bounds.upper
        );
    }

    #[test]
    fn estimate_scales_linearly() {
        let img = make_ribbon(4, 6, 64, 64).unwrap();
        let base = gnorm_estimate(&img, 1e-3, 4000).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled = gnorm_estimate(&img.map(|v| c * v), 1e-3, 4000).unwrap();
            let ratio = scaled.value / (c * base.value);
            assert!(
                (ratio - 1.0).abs() < 0.01,
                "scaling by {c} gave ratio {ratio}"
            );
        }
    }

    #[test]
    fn duality_bound_identities() {
        let img = make_ribbon(8, 4, 64, 64).unwrap();
        let zero_mean = {
            let m = img.mean();
            img.map(|v| v - m)
        };
        // w = f reproduces integral(f^2)/TV(f)
        let lb = duality_lower_bound(&zero_mean, &zero_mean).unwrap();
        let direct = zero_mean.dot(&zero_mean) / tv_norm(&zero_mean);
        assert!((lb - direct).abs() < 1e-12);
        // a test image orthogonal to f: a dipole on the ribbon interior,
        // where f is constant, has zero inner product with f
        let mut dipole = ImageGrid::zeros(64, 64);
        dipole.set(31, 31, 1.0);
        dipole.set(31, 32, -1.0);
        let inner = zero_mean.dot(&dipole);
        assert!(inner.abs() < 1e-12, "dipole not orthogonal: {inner}");
        let lb0 = duality_lower_bound(&zero_mean, &dipole).unwrap();
        assert!(lb0.abs() < 1e-12);
        // constant w rejected
        assert!(duality_lower_bound(&zero_mean, &ImageGrid::filled(64, 64, 3.0)).is_err());
    }

    #[test]
    fn bound_never_exceeds_certified_upper() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let img = ImageGrid::from_vec(32, 32, data).unwrap();
        let mean = img.mean();
        let b = img.map(|v| v - mean);
        let est = gnorm_estimate(&b, 1e-3, 4000).unwrap();
        for seed in 0..20 {
            let wdata: Vec<f64> = {
                let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(100 + seed);
                (0..32 * 32).map(|_| r.gen_range(-1.0..1.0)).collect()
            };
            let wimg = ImageGrid::from_vec(32, 32, wdata).unwrap();
            let lb = duality_lower_bound(&b, &wimg).unwrap();
            assert!(
                lb <= est.certified_upper * (1.0 + 1e-6) + 1e-12,
                "bound {lb} beats certified upper {}",
                est.certified_upper
            );
        }
    }
}
