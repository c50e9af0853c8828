//! A-contrario detection of aligned point chains (road-segment candidates).
//!
//! Candidate segments are scanned over endpoint pairs; a sampled point on a
//! segment counts as aligned when its local orientation agrees with the
//! segment direction within `precision * pi`. A segment is kept when its
//! number of false alarms
//!
//! ```text
//! NFA = n_tests * B(n, k, q)
//! ```
//!
//! drops below `epsilon`, where `B` is the upper binomial tail, `n_tests =
//! (W*H)^2` counts the full pixel-pair family, and `q` is the probability
//! that a uniformly random orientation passes the angular test. Under pure
//! orientation noise the expected number of detections is then at most
//! `epsilon`. Detections are pruned to maximal segments and can optionally
//! be fused when they are collinear continuations of one another.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

const PI: f64 = std::f64::consts::PI;

/// Per-pixel line orientation (mod pi) with gradient magnitude and a
/// validity mask.
#[derive(Debug, Clone)]
pub struct OrientationField {
    width: usize,
    height: usize,
    /// Line direction in [0, pi); meaningful only where `valid`.
    theta: Vec<f64>,
    magnitude: Vec<f64>,
    valid: Vec<bool>,
}

impl OrientationField {
    /// Build directly from raw parts (used by tests and noise calibration).
    pub fn from_parts(
        width: usize,
        height: usize,
        theta: Vec<f64>,
        magnitude: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if theta.len() != n || magnitude.len() != n || valid.len() != n {
            return Err(Error::Dimension(
                "orientation field components must match width*height".into(),
            ));
        }
        Ok(OrientationField {
            width,
            height,
            theta,
            magnitude,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn theta(&self, x: usize, y: usize) -> f64 {
        self.theta[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    #[inline]
    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Orientation of the local level line: perpendicular to the gradient,
/// computed with centered differences after a 3x3 binomial pre-smoothing
/// (staircase edges otherwise quantize the orientation to multiples of 45
/// degrees); pixels whose gradient magnitude is at or below
/// `magnitude_floor` are marked invalid.
pub fn orientation_field(img: &ImageGrid, magnitude_floor: f64) -> OrientationField {
    let (w, h) = (img.width(), img.height());
    let smoothed = binomial_smooth(img);
    let mut theta = vec![0.0; w * h];
    let mut magnitude = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            // centered differences with replicated borders
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            let gx = (smoothed.get(xp, y) - smoothed.get(xm, y)) / 2.0;
            let gy = (smoothed.get(x, yp) - smoothed.get(x, ym)) / 2.0;
            let mag = gx.hypot(gy);
            let i = y * w + x;
            magnitude[i] = mag;
            if mag > magnitude_floor {
                // line direction = gradient rotated by 90 degrees, mod pi
                let mut t = gy.atan2(gx) + PI / 2.0;
                while t < 0.0 {
                    t += PI;
                }
                while t >= PI {
                    t -= PI;
                }
                theta[i] = t;
                valid[i] = true;
            }
        }
    }
    OrientationField {
        width: w,
        height: h,
        theta,
        magnitude,
        valid,
    }
}

/// Separable [1 2 1]/4 smoothing with replicated borders.
fn binomial_smooth(img: &ImageGrid) -> ImageGrid {
    let (w, h) = (img.width(), img.height());
    let mut horiz = ImageGrid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            horiz.set(
                x,
                y,
                0.25 * img.get(xm, y) + 0.5 * img.get(x, y) + 0.25 * img.get(xp, y),
            );
        }
    }
    let mut out = ImageGrid::zeros(w, h);
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            out.set(
                x,
                y,
                0.25 * horiz.get(x, ym) + 0.5 * horiz.get(x, y) + 0.25 * horiz.get(x, yp),
            );
        }
    }
    out
}

/// A detected alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Euclidean length in pixels.
    pub length: f64,
    /// Sampled point count.
    pub n: usize,
    /// Aligned point count.
    pub k: usize,
    pub nfa: f64,
    /// Rough transverse extent of the support (plumbing for the snake stage).
    #[serde(default = "default_width_hint", skip_serializing_if = "is_default_width")]
    pub width_hint: f64,
}

fn default_width_hint() -> f64 {
    1.0
}

fn is_default_width(w: &f64) -> bool {
    *w == 1.0
}

impl Segment {
    pub fn direction(&self) -> (f64, f64) {
        let dx = self.x2 - self.x1;
        let dy = self.y2 - self.y1;
        let len = dx.hypot(dy).max(1e-12);
        (dx / len, dy / len)
    }

    /// Line orientation in [0, pi).
    pub fn angle(&self) -> f64 {
        let (dx, dy) = self.direction();
        let mut a = dy.atan2(dx);
        if a < 0.0 {
            a += PI;
        }
        if a >= PI {
            a -= PI;
        }
        a
    }
}

/// Detector parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentParams {
    /// Angular tolerance as a fraction of pi; a point is aligned when its
    /// orientation is within `precision * pi` of the segment direction.
    pub precision: f64,
    /// NFA detection threshold.
    pub epsilon: f64,
    /// Spacing of sampled points along a candidate, and the stride of the
    /// candidate endpoint grid.
    pub sample_step: f64,
    /// Gradient magnitude at or below this is void of orientation.
    pub magnitude_floor: f64,
    /// Fusion: largest orientation gap, in degrees.
    pub fuse_max_angle_deg: f64,
    /// Fusion: largest lateral offset of the merged segment's endpoints.
    pub fuse_max_lateral: f64,
    /// Fusion: largest longitudinal gap between segments.
    pub fuse_max_gap: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        AlignmentParams {
            precision: 1.0 / 16.0,
            epsilon: 1.0,
            sample_step: 1.0,
            magnitude_floor: 2.0,
            fuse_max_angle_deg: 5.0,
            fuse_max_lateral: 2.0,
            fuse_max_gap: 10.0,
        }
    }
}

impl AlignmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.precision > 0.0 && self.precision < 0.5) {
            return Err(Error::Domain(format!(
                "precision must lie in (0, 0.5), got {}",
                self.precision
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain("epsilon must be > 0".into()));
        }
        if !(self.sample_step >= 1.0) {
            return Err(Error::Domain("sample step must be >= 1 px".into()));
        }
        Ok(())
    }

    /// Probability that a uniform orientation (mod pi) falls within
    /// `precision * pi` of a given direction. The mod-pi distance caps at
    /// pi/2, so the acceptance mass is `2 * precision` of it.
    pub fn alignment_probability(&self) -> f64 {
        (2.0 * self.precision).min(1.0)
    }
}

/// Number of false alarms: `n_tests * B(n, k, p)` with `B` the upper
/// binomial tail, evaluated in log domain (stable up to n ~ 1e4).
pub fn nfa(n: usize, k: usize, p: f64, n_tests: f64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    if !(n_tests >= 1.0) {
        return Err(Error::Domain(format!("n_tests must be >= 1, got {n_tests}")));
    }
    Ok((n_tests.ln() + log_binomial_tail(n, k, p)).exp().max(f64::MIN_POSITIVE))
}

/// log of the upper binomial tail sum_{j=k..n} C(n,j) p^j (1-p)^(n-j).
fn log_binomial_tail(n: usize, k: usize, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let lnfact = ln_factorials(n);
    let lnp = p.ln();
    let lnq = (1.0 - p).ln();
    let ln_term = |j: usize| -> f64 {
        lnfact[n] - lnfact[j] - lnfact[n - j] + j as f64 * lnp + (n - j) as f64 * lnq
    };
    // log-sum-exp over the tail
    let mut max_ln = f64::NEG_INFINITY;
    for j in k..=n {
        max_ln = max_ln.max(ln_term(j));
    }
    if max_ln == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for j in k..=n {
        acc += (ln_term(j) - max_ln).exp();
    }
    max_ln + acc.ln()
}

/// Kahan-compensated table of ln(i!) for i = 0..=n.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    table.push(0.0);
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in 1..=n {
        let term = (i as f64).ln() - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
        table.push(sum);
    }
    table
}

/// Precomputed smallest meaningful aligned count per sample count.
struct NfaTable {
    k_min: Vec<usize>,
    n_tests: f64,
    prob: f64,
}

impl NfaTable {
    fn build(max_n: usize, prob: f64, epsilon: f64, n_tests: f64) -> NfaTable {
        let lnfact = ln_factorials(max_n);
        let lnp = prob.ln();
        let lnq = (1.0 - prob).ln();
        let ln_thresh = (epsilon / n_tests).ln();
        let mut k_min = vec![usize::MAX; max_n + 1];
        for n in 1..=max_n {
            let ln_term = |j: usize| -> f64 {
                lnfact[n] - lnfact[j] - lnfact[n - j] + j as f64 * lnp + (n - j) as f64 * lnq
            };
            // the tail is decreasing in k: walk k down from n accumulating
            // the tail until it first exceeds the threshold; the previous k
            // is then the smallest meaningful count
            let mut ln_tail = f64::NEG_INFINITY;
            let mut k = n + 1;
            while k > 0 {
                let cand = ln_term(k - 1);
                ln_tail = if ln_tail == f64::NEG_INFINITY {
                    cand
                } else {
                    let m = ln_tail.max(cand);
                    m + ((ln_tail - m).exp() + (cand - m).exp()).ln()
                };
                if ln_tail > ln_thresh {
                    break;
                }
                k -= 1;
            }
            // k == n + 1 means not even k = n is meaningful
            if k <= n {
                k_min[n] = k;
            }
        }
        NfaTable {
            k_min,
            n_tests,
            prob,
        }
    }

    #[inline]
    fn meaningful(&self, n: usize, k: usize) -> bool {
        n < self.k_min.len() && k >= self.k_min[n]
    }
}

/// Scan the candidate family and return all maximal meaningful segments,
/// sorted by increasing NFA.
pub fn detect_alignments(field: &OrientationField, params: &AlignmentParams) -> Result<Vec<Segment>> {
    params.validate()?;
    let (w, h) = (field.width(), field.height());
    let n_tests = ((w * h) as f64).powi(2);
    let prob = params.alignment_probability();
    let step = params.sample_step;
    let stride = step.round().max(1.0) as usize;

    let diag = ((w * w + h * h) as f64).sqrt();
    let max_n = (diag / step).ceil() as usize + 2;
    let table = NfaTable::build(max_n, prob, params.epsilon, n_tests);

    // segments shorter than this can never be meaningful
    let min_n = match table.k_min.iter().position(|&k| k != usize::MAX) {
        Some(n) => n,
        None => return Ok(Vec::new()),
    };
    let min_len = (min_n.saturating_sub(1)) as f64 * step;

    // endpoint grid
    let xs: Vec<usize> = (0..w).step_by(stride).collect();
    let ys: Vec<usize> = (0..h).step_by(stride).collect();
    let points: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();

    use rayon::prelude::*;
    let mut candidates: Vec<Segment> = points
        .par_iter()
        .enumerate()
        .map(|(ai, &(ax, ay))| {
            let mut found = Vec::new();
            for &(bx, by) in &points[ai + 1..] {
                let dx = bx as f64 - ax as f64;
                let dy = by as f64 - ay as f64;
                let len = dx.hypot(dy);
                if len < min_len || len <= 0.0 {
                    continue;
                }
                let n = (len / step).floor() as usize + 1;
                if !table.k_min.get(n).map_or(false, |&km| km != usize::MAX) {
                    continue;
                }
                let seg_theta = {
                    let mut t = dy.atan2(dx);
                    if t < 0.0 {
                        t += PI;
                    }
                    if t >= PI {
                        t -= PI;
                    }
                    t
                };
                let tol = params.precision * PI;
                let (ux, uy) = (dx / len, dy / len);
                let mut k = 0usize;
                for s in 0..n {
                    let t = s as f64 * step;
                    let px = (ax as f64 + ux * t).round() as isize;
                    let py = (ay as f64 + uy * t).round() as isize;
                    if px < 0 || py < 0 || px as usize >= w || py as usize >= h {
                        continue;
                    }
                    let (pxu, pyu) = (px as usize, py as usize);
                    if !field.is_valid(pxu, pyu) {
                        continue;
                    }
                    let mut d = (field.theta(pxu, pyu) - seg_theta).abs();
                    if d > PI / 2.0 {
                        d = PI - d;
                    }
                    if d <= tol {
                        k += 1;
                    }
                }
                if table.meaningful(n, k) {
                    let value = nfa(n, k, prob, n_tests).expect("validated domain");
                    found.push(Segment {
                        x1: ax as f64,
                        y1: ay as f64,
                        x2: bx as f64,
                        y2: by as f64,
                        length: len,
                        n,
                        k,
                        nfa: value,
                        width_hint: 1.0,
                    });
                }
            }
            found
        })
        .flatten_iter()
        .collect();

    sort_segments(&mut candidates);
    Ok(prune_to_maximal(candidates))
}

/// Deterministic total order: by NFA, then lexicographic endpoints.
fn sort_segments(segs: &mut [Segment]) {
    segs.sort_by(|a, b| {
        a.nfa
            .partial_cmp(&b.nfa)
            .unwrap()
            .then(a.x1.partial_cmp(&b.x1).unwrap())
            .then(a.y1.partial_cmp(&b.y1).unwrap())
            .then(a.x2.partial_cmp(&b.x2).unwrap())
            .then(a.y2.partial_cmp(&b.y2).unwrap())
    });
}

/// Drop every detection strictly contained in an already-kept detection on
/// the same line (the kept one has the smaller NFA thanks to the ordering).
fn prune_to_maximal(sorted: Vec<Segment>) -> Vec<Segment> {
    let mut kept: Vec<Segment> = Vec::new();
    for seg in sorted {
        let contained = kept.iter().any(|k| contains(k, &seg, 1.0));
        if !contained {
            kept.push(seg);
        }
    }
    kept
}

/// True when `inner` lies on `outer`'s line (within `lat_tol`) and its span
/// is inside `outer`'s span.
fn contains(outer: &Segment, inner: &Segment, lat_tol: f64) -> bool {
    let (ux, uy) = outer.direction();
    let project = |x: f64, y: f64| -> (f64, f64) {
        let dx = x - outer.x1;
        let dy = y - outer.y1;
        (dx * ux + dy * uy, (dx * uy - dy * ux).abs())
    };
    let (s1, d1) = project(inner.x1, inner.y1);
    let (s2, d2) = project(inner.x2, inner.y2);
    d1 <= lat_tol
        && d2 <= lat_tol
        && s1 >= -1e-9
        && s2 >= -1e-9
        && s1 <= outer.length + 1e-9
        && s2 <= outer.length + 1e-9
}

/// Greedily merge collinear continuations; idempotent, never increases the
/// segment count.
pub fn fuse_segments(segs: &[Segment], params: &AlignmentParams) -> Vec<Segment> {
    let mut pool: Vec<Segment> = segs.to_vec();
    sort_segments(&mut pool);
    let max_angle = params.fuse_max_angle_deg.to_radians();

    let mut out: Vec<Segment> = Vec::new();
    while let Some(mut best) = if pool.is_empty() {
        None
    } else {
        Some(pool.remove(0))
    } {
        // absorb every mergeable partner, rescanning after each merge since
        // the span grows
        loop {
            let mut merged_any = false;
            let mut i = 0;
            while i < pool.len() {
                if mergeable(&best, &pool[i], max_angle, params) {
                    let other = pool.remove(i);
                    best = merge_pair(&best, &other);
                    merged_any = true;
                } else {
                    i += 1;
                }
            }
            if !merged_any {
                break;
            }
        }
        out.push(best);
    }
    sort_segments(&mut out);
    out
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let mut d = (a - b).abs();
    if d > PI / 2.0 {
        d = PI - d;
    }
    d
}

fn mergeable(a: &Segment, b: &Segment, max_angle: f64, params: &AlignmentParams) -> bool {
    if angle_gap(a.angle(), b.angle()) > max_angle {
        return false;
    }
    // lateral: both endpoints of b close to a's line
    let (ux, uy) = a.direction();
    let lat = |x: f64, y: f64| ((x - a.x1) * uy - (y - a.y1) * ux).abs();
    if lat(b.x1, b.y1) > params.fuse_max_lateral || lat(b.x2, b.y2) > params.fuse_max_lateral {
        return false;
    }
    // longitudinal: spans overlap or gap below threshold
    let proj = |x: f64, y: f64| (x - a.x1) * ux + (y - a.y1) * uy;
    let (s1, s2) = (proj(b.x1, b.y1), proj(b.x2, b.y2));
    let (bmin, bmax) = (s1.min(s2), s1.max(s2));
    let gap = (bmin - a.length).max(-bmax).max(0.0);
    gap <= params.fuse_max_gap
}

/// Enclosing segment on the more confident line; counts accumulate and the
/// smaller NFA is kept.
fn merge_pair(a: &Segment, b: &Segment) -> Segment {
    let (ux, uy) = a.direction();
    let proj = |x: f64, y: f64| (x - a.x1) * ux + (y - a.y1) * uy;
    let ss = [
        0.0,
        a.length,
        proj(b.x1, b.y1),
        proj(b.x2, b.y2),
    ];
    let smin = ss.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = ss.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Segment {
        x1: a.x1 + smin * ux,
        y1: a.y1 + smin * uy,
        x2: a.x1 + smax * ux,
        y2: a.y1 + smax * uy,
        length: smax - smin,
        n: a.n + b.n,
        k: a.k + b.k,
        nfa: a.nfa.min(b.nfa),
        width_hint: a.width_hint.max(b.width_hint),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nfa_with_k_zero_is_n_tests() {
        assert!((nfa(50, 0, 0.0625, 1e8).unwrap() - 1e8).abs() < 1e-4);
    }

    #[test]
    fn nfa_all_aligned_matches_power() {
        // n = k = 10, p = 1/16: tail is p^10 exactly
        let v = nfa(10, 10, 1.0 / 16.0, 1e8).unwrap();
        let expect = 1e8 * (1.0f64 / 16.0).powi(10);
        assert!((v - expect).abs() < 1e-9 * expect, "{v} vs {expect}");
        // direct power computation: 1e8 / 16^10 = 9.095e-5
        assert!((expect - 9.095e-5).abs() < 1e-8);
    }

    /// Brute-force tail using exact integer binomial coefficients.
    fn brute_force_nfa(n: usize, k: usize, p: f64, n_tests: f64) -> f64 {
        let mut tail = 0.0f64;
        for j in k..=n {
            tail += binomial(n, j) * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32);
        }
        n_tests * tail
    }

    fn binomial(n: usize, k: usize) -> f64 {
        // Pascal's triangle in u128; exact for n <= 50 and exactly
        // representable in f64 (C(50,25) < 2^53)
        let mut row = vec![1u128; 1];
        for _ in 0..n {
            let mut next = vec![1u128; row.len() + 1];
            for i in 1..row.len() {
                next[i] = row[i - 1] + row[i];
            }
            row = next;
        }
        row[k] as f64
    }

    #[test]
    fn nfa_matches_brute_force_tail() {
        let v = nfa(20, 10, 1.0 / 16.0, 1.0).unwrap();
        let b = brute_force_nfa(20, 10, 1.0 / 16.0, 1.0);
        assert!((v - b).abs() <= 1e-12 * b, "{v} vs {b}");
        for n in [5usize, 17, 33, 50] {
            for k in [0usize, 1, n / 3, n / 2, n - 1, n] {
                for p in [0.05, 1.0 / 16.0, 0.125, 0.4] {
                    let v = nfa(n, k, p, 1e8).unwrap();
                    let b = brute_force_nfa(n, k, p, 1e8);
                    assert!(
                        (v - b).abs() <= 1e-12 * b.max(f64::MIN_POSITIVE),
                        "n={n} k={k} p={p}: {v} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn nfa_monotone_in_k_and_p() {
        // decreasing in k
        let mut prev = f64::INFINITY;
        for k in 0..=40 {
            let v = nfa(40, k, 0.0625, 1e6).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        // increasing in p for k >= n*p
        let mut last = 0.0;
        for p in [0.1, 0.2, 0.3, 0.4] {
            let v = nfa(40, 30, p, 1e6).unwrap();
            assert!(v > last, "nfa not increasing in p");
            last = v;
        }
    }

    #[test]
    fn nfa_domain_errors() {
        assert!(nfa(5, 6, 0.1, 1.0).is_err());
        assert!(nfa(5, 2, 0.0, 1.0).is_err());
        assert!(nfa(5, 2, 1.0, 1.0).is_err());
        assert!(nfa(5, 2, 0.1, 0.5).is_err());
    }

    #[test]
    fn nfa_survives_large_n() {
        // log-domain evaluation: no overflow/underflow panic up to n = 1e4
        let v = nfa(10_000, 9_000, 0.0625, 1e16).unwrap();
        assert!(v > 0.0 && v.is_finite());
        let v2 = nfa(10_000, 700, 0.0625, 1e16).unwrap();
        assert!(v2.is_finite());
    }

    #[test]
    fn orientation_of_vertical_step_edge() {
        let mut img = ImageGrid::zeros(16, 16);
        for y in 0..16 {
            for x in 8..16 {
                img.set(x, y, 100.0);
            }
        }
        let field = orientation_field(&img, 1.0);
        for y in 1..15 {
            for x in [7usize, 8] {
                assert!(field.is_valid(x, y));
                let t = field.theta(x, y);
                assert!(
                    (t - PI / 2.0).abs() < 1e-9,
                    "expected vertical line direction, got {t}"
                );
            }
        }
    }

    #[test]
    fn constant_image_is_all_invalid() {
        let field = orientation_field(&ImageGrid::filled(12, 12, 50.0), 1.0);
        assert_eq!(field.valid_count(), 0);
    }

    #[test]
    fn all_invalid_field_detects_nothing() {
        let n = 32 * 32;
        let field =
            OrientationField::from_parts(32, 32, vec![0.0; n], vec![0.0; n], vec![false; n])
                .unwrap();
        let segs = detect_alignments(&field, &AlignmentParams::default()).unwrap();
        assert!(segs.is_empty());
    }

    fn noise_field(w: usize, h: usize, seed: u64) -> OrientationField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..PI)).collect();
        OrientationField::from_parts(w, h, theta, vec![10.0; w * h], vec![true; w * h]).unwrap()
    }

    #[test]
    fn few_detections_on_uniform_noise() {
        // small Monte-Carlo smoke check; the full 50-seed calibration runs
        // in the acceptance suite
        let params = AlignmentParams {
            sample_step: 2.0,
            ..AlignmentParams::default()
        };
        let mut total = 0usize;
        for seed in 0..5 {
            let field = noise_field(64, 64, 100 + seed);
            total += detect_alignments(&field, &params).unwrap().len();
        }
        assert!(total <= 2, "too many detections on noise: {total}");
    }

    #[test]
    fn detects_planted_alignment() {
        use rand::{Rng, SeedableRng};
        let (w, h) = (64, 64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut theta: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..PI)).collect();
        // plant a horizontal alignment on row 30, columns 10..54
        for x in 10..54 {
            theta[30 * w + x] = 0.0;
        }
        let field =
            OrientationField::from_parts(w, h, theta, vec![10.0; w * h], vec![true; w * h])
                .unwrap();
        let segs = detect_alignments(&field, &AlignmentParams::default()).unwrap();
        assert!(!segs.is_empty(), "planted alignment missed");
        let best = &segs[0];
        assert!((best.y1 - 30.0).abs() < 2.0 && (best.y2 - 30.0).abs() < 2.0);
        assert!(best.angle() < 0.05 || best.angle() > PI - 0.05);
    }

    #[test]
    fn rotating_field_rotates_detections() {
        use rand::{Rng, SeedableRng};
        let n = 48;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut theta: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..PI)).collect();
        for x in 6..42 {
            theta[20 * n + x] = 0.0;
        }
        let field =
            OrientationField::from_parts(n, n, theta.clone(), vec![10.0; n * n], vec![true; n * n])
                .unwrap();
        // rotate by 90 degrees: (x, y) -> (y, n-1-x), theta -> theta + pi/2
        let mut rtheta = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                let (rx, ry) = (y, n - 1 - x);
                let mut t = theta[y * n + x] + PI / 2.0;
                if t >= PI {
                    t -= PI;
                }
                rtheta[ry * n + rx] = t;
            }
        }
        let rfield =
            OrientationField::from_parts(n, n, rtheta, vec![10.0; n * n], vec![true; n * n])
                .unwrap();
        let segs = detect_alignments(&field, &AlignmentParams::default()).unwrap();
        let rsegs = detect_alignments(&rfield, &AlignmentParams::default()).unwrap();
        assert!(!segs.is_empty() && !rsegs.is_empty());
        let rot = |x: f64, y: f64| (y, (n - 1) as f64 - x);
        let best = &segs[0];
        let rbest = &rsegs[0];
        let (ex1, ey1) = rot(best.x1, best.y1);
        let (ex2, ey2) = rot(best.x2, best.y2);
        let direct =
            (rbest.x1 - ex1).abs() + (rbest.y1 - ey1).abs() + (rbest.x2 - ex2).abs() + (rbest.y2 - ey2).abs();
        let flipped =
            (rbest.x1 - ex2).abs() + (rbest.y1 - ey2).abs() + (rbest.x2 - ex1).abs() + (rbest.y2 - ey1).abs();
        assert!(
            direct.min(flipped) <= 4.0,
            "rotated detection too far: {} / {}",
            direct,
            flipped
        );
        assert!(angle_gap(rbest.angle(), best.angle() + PI / 2.0) < 2f64.to_radians());
    }

    fn seg(x1: f64, y1: f64, x2: f64, y2: f64, nfa: f64) -> Segment {
        let length = (x2 - x1).hypot(y2 - y1);
        Segment {
            x1,
            y1,
            x2,
            y2,
            length,
            n: length as usize,
            k: length as usize,
            nfa,
            width_hint: 1.0,
        }
    }

    #[test]
    fn fuse_collinear_abutting_pair() {
        let params = AlignmentParams::default();
        let fused = fuse_segments(
            &[seg(0.0, 0.0, 10.0, 0.0, 1e-5), seg(10.0, 0.0, 20.0, 0.0, 1e-4)],
            &params,
        );
        assert_eq!(fused.len(), 1);
        let s = &fused[0];
        assert!((s.length - 20.0).abs() < 1e-9);
        assert!((s.nfa - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn fuse_leaves_perpendicular_crossing_alone() {
        let params = AlignmentParams::default();
        let fused = fuse_segments(
            &[seg(0.0, 5.0, 10.0, 5.0, 1e-5), seg(5.0, 0.0, 5.0, 10.0, 1e-4)],
            &params,
        );
        assert_eq!(fused.len(), 2);
    }

    #[test]
    fn fuse_matches_transitive_closure_oracle() {
        use rand::{Rng, SeedableRng};
        let params = AlignmentParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        // 10 random overlapping spans on the same line
        let segs: Vec<Segment> = (0..10)
            .map(|i| {
                let a = rng.gen_range(0.0..40.0);
                let len = rng.gen_range(8.0..30.0);
                seg(a, 3.0, a + len, 3.0, 1e-3 * (i + 1) as f64)
            })
            .collect();
        let fused = fuse_segments(&segs, &params);
        // brute-force transitive closure over the pairwise mergeable relation
        let mut labels: Vec<usize> = (0..segs.len()).collect();
        loop {
            let mut changed = false;
            for i in 0..segs.len() {
                for j in 0..segs.len() {
                    if i != j
                        && mergeable(&segs[i], &segs[j], params.fuse_max_angle_deg.to_radians(), &params)
                        && labels[j] != labels[i]
                    {
                        let l = labels[i].min(labels[j]);
                        labels[i] = l;
                        labels[j] = l;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut uniq: Vec<usize> = labels.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(fused.len(), uniq.len());
        assert_eq!(fused.len(), 1, "spans all overlap on one line");
    }

    #[test]
    fn fusion_is_idempotent() {
        let params = AlignmentParams::default();
        let segs = vec![
            seg(0.0, 0.0, 12.0, 0.0, 1e-6),
            seg(14.0, 0.5, 30.0, 0.5, 1e-5),
            seg(0.0, 20.0, 0.0, 40.0, 1e-4),
            seg(5.0, 21.0, 25.0, 21.0, 1e-3),
        ];
        let once = fuse_segments(&segs, &params);
        let twice = fuse_segments(&once, &params);
        assert_eq!(once.len(), twice.len());
        for (a, b) in once.iter().zip(&twice) {
            assert!((a.x1 - b.x1).abs() < 1e-9 && (a.y2 - b.y2).abs() < 1e-9);
        }
        assert!(once.len() <= segs.len());
    }
}
