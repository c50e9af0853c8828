//! Canny-Deriche edge detection, the comparison representation.
//!
//! The smoother is the separable recursive filter with impulse response
//! `k(x) = c (1 + a|x|) e^(-a|x|)`, realized exactly by a second-order
//! causal plus second-order anticausal recursion per axis (fourth order in
//! total), normalized to unit DC gain. Edge maps are gradient magnitudes of
//! the smoothed image, optionally reduced to one-pixel chains by non-maximum
//! suppression and hysteresis thresholding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Edge detector parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DericheParams {
    /// Filter sharpness in 1/pixels; larger is tighter support.
    pub alpha: f64,
    /// Hysteresis low threshold; `None` picks `0.4 * t_high`.
    pub t_low: Option<f64>,
    /// Hysteresis high threshold; `None` picks the 80th percentile of
    /// nonzero gradient magnitudes.
    pub t_high: Option<f64>,
    /// When false, `canny_deriche` returns the raw magnitude map.
    pub enable_nms: bool,
}

impl Default for DericheParams {
    fn default() -> Self {
        DericheParams {
            alpha: 1.0,
            t_low: None,
            t_high: None,
            enable_nms: true,
        }
    }
}

impl DericheParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if let (Some(lo), Some(hi)) = (self.t_low, self.t_high) {
            if !(lo >= 0.0 && lo < hi) {
                return Err(Error::Domain(format!(
                    "hysteresis thresholds need 0 <= low < high, got {lo} >= {hi}"
                )));
            }
        }
        Ok(())
    }
}

/// Recursion coefficients of the normalized smoothing kernel.
struct Coefficients {
    a0: f64,
    a1: f64,
    a2: f64,
    a3: f64,
    b1: f64,
    b2: f64,
    /// Steady-state gains of the causal/anticausal halves under constant input.
    s_causal: f64,
    s_anti: f64,
}

impl Coefficients {
    fn smoothing(alpha: f64) -> Self {
        let e1 = (-alpha).exp();
        let e2 = (-2.0 * alpha).exp();
        let c = (1.0 - e1).powi(2) / (1.0 + 2.0 * alpha * e1 - e2);
        let b1 = 2.0 * e1;
        let b2 = -e2;
        let a0 = c;
        let a1 = c * e1 * (alpha - 1.0);
        let a2 = c * e1 * (alpha + 1.0);
        let a3 = -c * e2;
        let denom = 1.0 - b1 - b2;
        Coefficients {
            a0,
            a1,
            a2,
            a3,
            b1,
            b2,
            s_causal: (a0 + a1) / denom,
            s_anti: (a2 + a3) / denom,
        }
    }

    /// The analytic impulse response the recursion realizes.
    fn kernel(&self, alpha: f64, x: f64) -> f64 {
        let c = self.a0;
        c * (1.0 + alpha * x.abs()) * (-alpha * x.abs()).exp()
    }
}

fn filter_line(co: &Coefficients, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    debug_assert_eq!(out.len(), n);
    // causal sweep with replicated left boundary
    let mut ym1 = co.s_causal * x[0];
    let mut ym2 = ym1;
    let mut xm1 = x[0];
    for i in 0..n {
        let y = co.a0 * x[i] + co.a1 * xm1 + co.b1 * ym1 + co.b2 * ym2;
        out[i] = y;
        xm1 = x[i];
        ym2 = ym1;
        ym1 = y;
    }
    // anticausal sweep with replicated right boundary
    let mut yp1 = co.s_anti * x[n - 1];
    let mut yp2 = yp1;
    let mut xp1 = x[n - 1];
    let mut xp2 = x[n - 1];
    for i in (0..n).rev() {
        let y = co.a2 * xp1 + co.a3 * xp2 + co.b1 * yp1 + co.b2 * yp2;
        out[i] += y;
        xp2 = xp1;
        xp1 = x[i];
        yp2 = yp1;
        yp1 = y;
    }
}

/// Separable recursive smoothing with unit DC gain and replicated borders.
pub fn deriche_smooth(img: &ImageGrid, alpha: f64) -> Result<ImageGrid> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    let co = Coefficients::smoothing(alpha);
    let (w, h) = (img.width(), img.height());
    let mut horiz = ImageGrid::zeros(w, h);
    let mut line = vec![0.0; w.max(h)];
    let mut out_line = vec![0.0; w.max(h)];
    for y in 0..h {
        line[..w].copy_from_slice(&img.data()[y * w..(y + 1) * w]);
        filter_line(&co, &line[..w], &mut out_line[..w]);
        horiz.data_mut()[y * w..(y + 1) * w].copy_from_slice(&out_line[..w]);
    }
    let mut out = ImageGrid::zeros(w, h);
    for x in 0..w {
        for y in 0..h {
            line[y] = horiz.get(x, y);
        }
        filter_line(&co, &line[..h], &mut out_line[..h]);
        for y in 0..h {
            out.set(x, y, out_line[y]);
        }
    }
    Ok(out)
}

/// Gradient of the smoothed image by centered differences (replicated
/// borders); returns the two partials.
fn smoothed_gradient(img: &ImageGrid, alpha: f64) -> Result<(ImageGrid, ImageGrid)> {
    let s = deriche_smooth(img, alpha)?;
    let (w, h) = (s.width(), s.height());
    let mut gx = ImageGrid::zeros(w, h);
    let mut gy = ImageGrid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            gx.set(x, y, (s.get(xp, y) - s.get(xm, y)) / 2.0);
            gy.set(x, y, (s.get(x, yp) - s.get(x, ym)) / 2.0);
        }
    }
    Ok((gx, gy))
}

/// Edge response: gradient magnitude of the Deriche-smoothed image; with
/// `enable_nms`, non-maximum suppression plus hysteresis reduce it to a
/// binary (0/1) edge map.
pub fn canny_deriche(img: &ImageGrid, params: &DericheParams) -> Result<ImageGrid> {
    params.validate()?;
    let (gx, gy) = smoothed_gradient(img, params.alpha)?;
    let (w, h) = (img.width(), img.height());
    let mut mag = ImageGrid::zeros(w, h);
    for i in 0..w * h {
        mag.data_mut()[i] = gx.data()[i].hypot(gy.data()[i]);
    }
    if !params.enable_nms {
        return Ok(mag);
    }

    let thinned = non_maximum_suppression(&mag, &gx, &gy);
    let (t_low, t_high) = resolve_thresholds(&thinned, params)?;
    Ok(hysteresis(&thinned, t_low, t_high))
}

fn resolve_thresholds(mag: &ImageGrid, params: &DericheParams) -> Result<(f64, f64)> {
    let t_high = match params.t_high {
        Some(v) => v,
        None => {
            let mut nonzero: Vec<f64> =
                mag.data().iter().copied().filter(|&v| v > 1e-12).collect();
            if nonzero.is_empty() {
                return Ok((0.0, f64::INFINITY));
            }
            nonzero.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let idx = ((nonzero.len() as f64) * 0.8) as usize;
            nonzero[idx.min(nonzero.len() - 1)]
        }
    };
    let t_low = params.t_low.unwrap_or(0.4 * t_high);
    if !(t_low >= 0.0 && t_low < t_high) {
        return Err(Error::Domain(format!(
            "resolved hysteresis thresholds invalid: low {t_low}, high {t_high}"
        )));
    }
    Ok((t_low, t_high))
}

/// Keep pixels that dominate their two neighbors along the gradient
/// direction (strict on one side so plateau ties thin to one pixel).
fn non_maximum_suppression(mag: &ImageGrid, gx: &ImageGrid, gy: &ImageGrid) -> ImageGrid {
    let (w, h) = (mag.width(), mag.height());
    let mut out = ImageGrid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let m = mag.get(x, y);
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = sector(gx.get(x, y), gy.get(x, y));
            let fetch = |ix: isize, iy: isize| -> f64 {
                if ix < 0 || iy < 0 || ix >= w as isize || iy >= h as isize {
                    0.0
                } else {
                    mag.get(ix as usize, iy as usize)
                }
            };
            let back = fetch(x as isize - dx, y as isize - dy);
            let fwd = fetch(x as isize + dx, y as isize + dy);
            if m > back && m >= fwd {
                out.set(x, y, m);
            }
        }
    }
    out
}

/// Quantize a gradient direction into one of four neighbor offsets.
fn sector(gx: f64, gy: f64) -> (isize, isize) {
    let angle = gy.atan2(gx);
    let a = if angle < 0.0 {
        angle + std::f64::consts::PI
    } else {
        angle
    };
    let deg = a.to_degrees();
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Binary edge map: flood from strong pixels through weak ones (8-connected).
fn hysteresis(mag: &ImageGrid, t_low: f64, t_high: f64) -> ImageGrid {
    let (w, h) = (mag.width(), mag.height());
    let mut out = ImageGrid::zeros(w, h);
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mag.get(x, y) >= t_high && out.get(x, y) == 0.0 {
                out.set(x, y, 1.0);
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                        for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                            if out.get(nx, ny) == 0.0 && mag.get(nx, ny) >= t_low {
                                out.set(nx, ny, 1.0);
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_passes_through() {
        let img = ImageGrid::filled(33, 17, 123.0);
        let s = deriche_smooth(&img, 1.0).unwrap();
        for &v in s.data() {
            assert!((v - 123.0).abs() < 1e-6 * 123.0, "got {v}");
        }
    }

    #[test]
    fn impulse_response_matches_analytic_kernel() {
        let alpha = 1.0;
        let n = 65;
        let mut img = ImageGrid::zeros(n, n);
        img.set(32, 32, 1.0);
        let s = deriche_smooth(&img, alpha).unwrap();
        let co = Coefficients::smoothing(alpha);
        let mut max_err = 0.0f64;
        for y in 0..n {
            for x in 0..n {
                let expect =
                    co.kernel(alpha, x as f64 - 32.0) * co.kernel(alpha, y as f64 - 32.0);
                max_err = max_err.max((s.get(x, y) - expect).abs());
            }
        }
        assert!(max_err < 1e-4, "kernel mismatch {max_err}");
    }

    #[test]
    fn dc_gain_is_one() {
        // the grid must hold essentially all of the kernel support, so the
        // softest alpha gets the largest grid
        for (alpha, n) in [(0.5, 161), (1.0, 65), (2.0, 65)] {
            let mut img = ImageGrid::zeros(n, n);
            img.set(n / 2, n / 2, 1.0);
            let s = deriche_smooth(&img, alpha).unwrap();
            let sum: f64 = s.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "alpha {alpha}: gain {sum}");
        }
    }

    #[test]
    fn sharper_alpha_has_smaller_support() {
        let n = 65;
        let mut img = ImageGrid::zeros(n, n);
        img.set(32, 32, 1.0);
        let s4 = deriche_smooth(&img, 4.0).unwrap();
        let s1 = deriche_smooth(&img, 1.0).unwrap();
        // alpha = 4: negligible beyond |x| = 4 along the central row
        for x in 0..n {
            let d = (x as isize - 32).abs();
            if d > 4 {
                assert!(s4.get(x, 32).abs() < 1e-6);
            }
        }
        // alpha = 1 still has visible mass at |x| = 5
        assert!(s1.get(37, 32) > 1e-4);
    }

    #[test]
    fn impulse_response_is_symmetric() {
        let n = 33;
        let mut img = ImageGrid::zeros(n, n);
        img.set(16, 16, 1.0);
        let s = deriche_smooth(&img, 1.3).unwrap();
        for y in 0..n {
            for x in 0..n {
                let mirrored = s.get(n - 1 - x, y);
                assert!((s.get(x, y) - mirrored).abs() < 1e-10);
                let transposed = s.get(y, x);
                assert!((s.get(x, y) - transposed).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shift_equivariance_on_interior() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let n = 48;
        let mut img = ImageGrid::zeros(n, n);
        for y in 12..36 {
            for x in 12..36 {
                img.set(x, y, rng.gen_range(0.0..255.0));
            }
        }
        let (dx, dy) = (3usize, 2usize);
        let mut shifted = ImageGrid::zeros(n, n);
        for y in 0..n - dy {
            for x in 0..n - dx {
                shifted.set(x + dx, y + dy, img.get(x, y));
            }
        }
        let a = deriche_smooth(&img, 1.0).unwrap();
        let b = deriche_smooth(&shifted, 1.0).unwrap();
        // compare deep interior where boundary replication cannot reach
        for y in 16..32 {
            for x in 16..32 {
                let err = (a.get(x, y) - b.get(x + dx, y + dy)).abs();
                assert!(err < 1e-9, "shift equivariance broke at ({x},{y}): {err}");
            }
        }
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = ImageGrid::filled(32, 32, 50.0);
        let edges = canny_deriche(&img, &DericheParams::default()).unwrap();
        assert!(edges.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_gives_single_pixel_chain() {
        let n = 32;
        let mut img = ImageGrid::zeros(n, n);
        for y in 0..n {
            for x in 16..n {
                img.set(x, y, 255.0);
            }
        }
        let edges = canny_deriche(&img, &DericheParams::default()).unwrap();
        for y in 4..n - 4 {
            let cols: Vec<usize> = (0..n).filter(|&x| edges.get(x, y) > 0.0).collect();
            assert_eq!(cols.len(), 1, "row {y}: edge chain not one pixel: {cols:?}");
            let d = (cols[0] as f64 - 15.5).abs();
            assert!(d <= 1.0, "row {y}: edge at {} not within 1 px of 15.5", cols[0]);
        }
    }

    #[test]
    fn ribbon_produces_two_parallel_chains() {
        let n = 48;
        let w_px = 7usize;
        let x0 = 20;
        let mut img = ImageGrid::zeros(n, n);
        for y in 0..n {
            for x in x0..x0 + w_px {
                img.set(x, y, 200.0);
            }
        }
        let edges = canny_deriche(&img, &DericheParams::default()).unwrap();
        for y in 6..n - 6 {
            let cols: Vec<usize> = (0..n).filter(|&x| edges.get(x, y) > 0.0).collect();
            assert_eq!(cols.len(), 2, "row {y}: expected double edge, got {cols:?}");
            let sep = cols[1] as f64 - cols[0] as f64;
            assert!(
                (sep - w_px as f64).abs() <= 1.5,
                "row {y}: separation {sep} not about {w_px}"
            );
        }
    }
}
