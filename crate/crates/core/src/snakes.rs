//! Open active contours: segments become node chains that slide along
//! their normals toward strong feature response.
//!
//! Each sweep visits the nodes in order; a node moves to the candidate
//! position (along its normal, in `search_step` increments up to the search
//! half-range) that maximizes
//!
//! ```text
//! score = mean feature over a window along the local tangent
//!         - beta * (curvature terms the node participates in)
//! ```
//!
//! where curvature is the squared second difference of node positions.
//! Endpoints may also slide along their tangent, extending or retracting
//! the curve. Moves are accepted only on strict improvement, so the
//! sequentially updated total score never decreases. After every sweep the
//! polyline is resampled to its nominal node spacing.

use serde::{Deserialize, Serialize};

use crate::alignment::Segment;
use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Open polygonal curve with (nominally) uniformly spaced nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polyline {
    pub nodes: Vec<[f64; 2]>,
    /// Nominal node spacing in pixels.
    pub spacing: f64,
    /// Open curve marker (no wrap-around between last and first node).
    pub open: bool,
}

impl Polyline {
    pub fn new(nodes: Vec<[f64; 2]>, spacing: f64) -> Result<Self> {
        let p = Polyline {
            nodes,
            spacing,
            open: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 3 {
            return Err(Error::Geometry(format!(
                "polyline needs >= 3 nodes, got {}",
                self.nodes.len()
            )));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::Geometry("node spacing must be > 0".into()));
        }
        for w in self.nodes.windows(2) {
            let d = dist(w[0], w[1]);
            if !(0.5 * self.spacing..=1.5 * self.spacing).contains(&d) {
                return Err(Error::Geometry(format!(
                    "consecutive nodes {d:.3} px apart violate [{}, {}]",
                    0.5 * self.spacing,
                    1.5 * self.spacing
                )));
            }
        }
        if self.self_intersects() {
            return Err(Error::Geometry("polyline self-intersects".into()));
        }
        Ok(())
    }

    /// Pairwise segment intersection test, skipping adjacent segments.
    fn self_intersects(&self) -> bool {
        let n = self.nodes.len();
        for i in 0..n - 1 {
            for j in i + 2..n - 1 {
                if segments_cross(
                    self.nodes[i],
                    self.nodes[i + 1],
                    self.nodes[j],
                    self.nodes[j + 1],
                ) {
                    return true;
                }
            }
        }
        false
    }

    pub fn length(&self) -> f64 {
        self.nodes.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    /// Sample the curve at roughly `step` spacing (arc length), endpoints
    /// included.
    pub fn densify(&self, step: f64) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for w in self.nodes.windows(2) {
            let d = dist(w[0], w[1]);
            let n = (d / step).ceil().max(1.0) as usize;
            for i in 0..n {
                let t = i as f64 / n as f64;
                out.push([
                    w[0][0] + t * (w[1][0] - w[0][0]),
                    w[0][1] + t * (w[1][1] - w[0][1]),
                ]);
            }
        }
        out.push(*self.nodes.last().unwrap());
        out
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| -> f64 {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Snake evolution parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SnakeParams {
    /// Nominal node spacing (delta).
    pub spacing: f64,
    /// Search half-range along the normal, in pixels.
    pub search_range: f64,
    /// Candidate increment along the normal.
    pub search_step: f64,
    pub max_sweeps: usize,
    /// Curvature penalty weight.
    pub beta: f64,
    /// Half-length of the feature window along the tangent, in pixels.
    pub window_half: f64,
}

impl Default for SnakeParams {
    fn default() -> Self {
        SnakeParams {
            spacing: 5.0,
            search_range: 4.0,
            search_step: 1.0,
            max_sweeps: 50,
            beta: 0.5,
            window_half: 10.0,
        }
    }
}

impl SnakeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) {
            return Err(Error::Domain("spacing must be > 0".into()));
        }
        if !(self.search_range > 0.0 && self.search_step > 0.0) {
            return Err(Error::Domain("search range and step must be > 0".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Domain("max sweeps must be >= 1".into()));
        }
        if self.beta < 0.0 {
            return Err(Error::Domain("beta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one evolution run.
#[derive(Debug, Clone)]
pub struct EvolveReport {
    pub sweeps: usize,
    pub converged: bool,
    /// Per sweep: the total score before any move, then the sequentially
    /// updated total after each node visit. Non-decreasing within a sweep
    /// (moves are accepted only on strict improvement); the baseline resets
    /// between sweeps because resampling renormalizes the node set.
    pub sweep_score_trace: Vec<Vec<f64>>,
}

/// Place nodes along a detected segment at `spacing`-px intervals,
/// endpoints included; short segments are rejected.
pub fn segment_to_polyline(seg: &Segment, spacing: f64) -> Result<Polyline> {
    if !(spacing > 0.0) {
        return Err(Error::Domain("spacing must be > 0".into()));
    }
    let len = (seg.x2 - seg.x1).hypot(seg.y2 - seg.y1);
    if len < 2.0 * spacing {
        return Err(Error::Geometry(format!(
            "segment of length {len:.2} too short for spacing {spacing} (needs >= {})",
            2.0 * spacing
        )));
    }
    let count = (len / spacing).floor() as usize + 1;
    let nodes = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            [
                seg.x1 + t * (seg.x2 - seg.x1),
                seg.y1 + t * (seg.y2 - seg.y1),
            ]
        })
        .collect();
    Polyline::new(nodes, spacing)
}

/// Resample to spacing-delta intervals along arc length. All intervals are
/// exactly delta except the last, which carries the remainder (merged into
/// the previous interval when shorter than half a spacing).
fn resample(poly: &Polyline) -> Polyline {
    let total = poly.length();
    let delta = poly.spacing;
    let dense = poly.densify(0.05 * delta);
    // arc-length positions of dense samples
    let mut arcs = Vec::with_capacity(dense.len());
    let mut acc = 0.0;
    arcs.push(0.0);
    for w in dense.windows(2) {
        acc += dist(w[0], w[1]);
        arcs.push(acc);
    }
    let at = |s: f64| -> [f64; 2] {
        let s = s.clamp(0.0, acc);
        let idx = arcs.partition_point(|&a| a < s).min(arcs.len() - 1);
        if idx == 0 {
            return dense[0];
        }
        let (a0, a1) = (arcs[idx - 1], arcs[idx]);
        let t = if a1 > a0 { (s - a0) / (a1 - a0) } else { 0.0 };
        [
            dense[idx - 1][0] + t * (dense[idx][0] - dense[idx - 1][0]),
            dense[idx - 1][1] + t * (dense[idx][1] - dense[idx - 1][1]),
        ]
    };
    let mut marks: Vec<f64> = Vec::new();
    let mut s = 0.0;
    while s < total {
        marks.push(s);
        s += delta;
    }
    // final node at the exact end; drop the previous mark when the
    // remainder is shorter than half a spacing
    if let Some(&last) = marks.last() {
        if total - last < 0.5 * delta && marks.len() > 1 {
            marks.pop();
        }
    }
    marks.push(total);
    while marks.len() < 3 {
        // degenerate short curve: fall back to halving
        marks = vec![0.0, total / 2.0, total];
    }
    let nodes: Vec<[f64; 2]> = marks.iter().map(|&m| at(m)).collect();
    Polyline {
        nodes,
        spacing: delta,
        open: true,
    }
}

/// Mean feature along the tangent window at a candidate node position.
fn window_mean(feature: &ImageGrid, center: [f64; 2], tangent: [f64; 2], half: f64) -> f64 {
    let steps = half.floor().max(0.0) as i64;
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in -steps..=steps {
        let x = center[0] + tangent[0] * s as f64;
        let y = center[1] + tangent[1] * s as f64;
        sum += feature.sample_bilinear(x, y);
        n += 1;
    }
    sum / n as f64
}

/// Squared second difference at interior node `i` of `nodes` with node `j`
/// virtually placed at `q`.
fn curvature_at(nodes: &[[f64; 2]], i: usize, j: usize, q: [f64; 2]) -> f64 {
    if i == 0 || i + 1 >= nodes.len() {
        return 0.0;
    }
    let pick = |idx: usize| -> [f64; 2] {
        if idx == j {
            q
        } else {
            nodes[idx]
        }
    };
    let (a, b, c) = (pick(i - 1), pick(i), pick(i + 1));
    let ddx = a[0] - 2.0 * b[0] + c[0];
    let ddy = a[1] - 2.0 * b[1] + c[1];
    ddx * ddx + ddy * ddy
}

/// Score contribution of node `j` placed at `q`: its own data term minus
/// beta times every curvature term it participates in. With the tangent
/// frozen, this delta equals the change of the sweep objective exactly.
fn node_score(
    nodes: &[[f64; 2]],
    j: usize,
    q: [f64; 2],
    tangent: [f64; 2],
    feature: &ImageGrid,
    params: &SnakeParams,
) -> f64 {
    let data = window_mean(feature, q, tangent, params.window_half);
    let mut curv = 0.0;
    let lo = j.saturating_sub(1);
    let hi = (j + 1).min(nodes.len() - 1);
    for i in lo..=hi {
        curv += curvature_at(nodes, i, j, q);
    }
    data - params.beta * curv
}

/// Sweep objective with a frozen tangent per node.
fn frozen_score(
    nodes: &[[f64; 2]],
    tangents: &[[f64; 2]],
    feature: &ImageGrid,
    params: &SnakeParams,
) -> f64 {
    let mut total = 0.0;
    for (i, &p) in nodes.iter().enumerate() {
        total += window_mean(feature, p, tangents[i], params.window_half);
        total -= params.beta * curvature_at(nodes, i, usize::MAX, p);
    }
    total
}

/// All node tangents, or `None` if any chord is degenerate.
fn freeze_tangents(poly: &Polyline) -> Option<Vec<[f64; 2]>> {
    (0..poly.nodes.len())
        .map(|i| tangent_at(&poly.nodes, i))
        .collect()
}

/// Unit tangent at node `i` from the chord between its neighbors.
fn tangent_at(nodes: &[[f64; 2]], i: usize) -> Option<[f64; 2]> {
    let (a, b) = if i == 0 {
        (nodes[0], nodes[1])
    } else if i + 1 == nodes.len() {
        (nodes[nodes.len() - 2], nodes[nodes.len() - 1])
    } else {
        (nodes[i - 1], nodes[i + 1])
    };
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    if len < 1e-9 {
        None
    } else {
        Some([dx / len, dy / len])
    }
}

/// Total score of the polyline in its current state.
pub fn polyline_score(poly: &Polyline, feature: &ImageGrid, params: &SnakeParams) -> f64 {
    let nodes = &poly.nodes;
    let mut total = 0.0;
    for (i, &p) in nodes.iter().enumerate() {
        let tangent = tangent_at(nodes, i).unwrap_or([1.0, 0.0]);
        total += window_mean(feature, p, tangent, params.window_half);
        total -= params.beta * curvature_at(nodes, i, usize::MAX, p);
    }
    total
}

/// Evolve the polyline over the feature image (texture magnitude by
/// convention). Returns the refined polyline and a report.
pub fn evolve(
    poly: &Polyline,
    feature: &ImageGrid,
    params: &SnakeParams,
) -> Result<(Polyline, EvolveReport)> {
    params.validate()?;
    poly.validate()?;
    let mut current = poly.clone();
    let mut sweep_score_trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    let m = (params.search_range / params.search_step).floor() as i64;

    for _ in 0..params.max_sweeps {
        sweeps += 1;
        // tangents are frozen for the whole sweep; a degenerate chord means
        // coincident nodes, cured by resampling (or fatal if it persists)
        let tangents = match freeze_tangents(&current) {
            Some(t) => t,
            None => {
                current = resample(&current);
                match freeze_tangents(&current) {
                    Some(t) => t,
                    None => {
                        return Err(Error::Geometry(
                            "degenerate polyline: coincident nodes survive resampling".into(),
                        ))
                    }
                }
            }
        };
        let mut max_move = 0.0f64;
        let mut running_total = frozen_score(&current.nodes, &tangents, feature, params);
        let mut trace = vec![running_total];
        let n = current.nodes.len();
        for j in 0..n {
            let tangent = tangents[j];
            let normal = [-tangent[1], tangent[0]];
            let origin = current.nodes[j];
            let is_endpoint = j == 0 || j + 1 == current.nodes.len();

            let origin_score = node_score(&current.nodes, j, origin, tangent, feature, params);
            let mut best_q = origin;
            let mut best_score = origin_score;
            let mut consider = |q: [f64; 2], best_q: &mut [f64; 2], best_score: &mut f64| {
                let s = node_score(&current.nodes, j, q, tangent, feature, params);
                if s > *best_score + 1e-12 {
                    *best_score = s;
                    *best_q = q;
                }
            };
            if is_endpoint {
                // endpoints explore the normal/tangent grid: lateral motion
                // plus extension or retraction
                for a in -m..=m {
                    for b in -m..=m {
                        if a == 0 && b == 0 {
                            continue;
                        }
                        let q = [
                            origin[0]
                                + params.search_step * (a as f64 * normal[0] + b as f64 * tangent[0]),
                            origin[1]
                                + params.search_step * (a as f64 * normal[1] + b as f64 * tangent[1]),
                        ];
                        consider(q, &mut best_q, &mut best_score);
                    }
                }
            } else {
                for a in -m..=m {
                    if a == 0 {
                        continue;
                    }
                    let q = [
                        origin[0] + params.search_step * a as f64 * normal[0],
                        origin[1] + params.search_step * a as f64 * normal[1],
                    ];
                    consider(q, &mut best_q, &mut best_score);
                }
            }
            if best_q != origin {
                max_move = max_move.max(dist(origin, best_q));
                current.nodes[j] = best_q;
                running_total += best_score - origin_score;
            }
            trace.push(running_total);
        }
        debug_assert!(
            (running_total - frozen_score(&current.nodes, &tangents, feature, params)).abs()
                < 1e-6,
            "incremental sweep total drifted"
        );
        sweep_score_trace.push(trace);

        if max_move <= 0.1 {
            converged = true;
            break;
        }
        current = resample(&current);
    }

    Ok((
        current,
        EvolveReport {
            sweeps,
            converged,
            sweep_score_trace,
        },
    ))
}
