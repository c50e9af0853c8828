//! Completeness / correctness evaluation of extracted centerlines against
//! ground truth, with symmetric buffer matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matching scores at buffer distance `buffer`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Fraction of ground-truth length within the buffer of a detection.
    pub completeness: f64,
    /// Fraction of detected length within the buffer of the ground truth.
    pub correctness: f64,
    /// Root-mean-square nearest distance over all matched samples.
    pub rmse: f64,
    pub buffer: f64,
    pub gt_points: usize,
    pub det_points: usize,
    pub matched_gt: usize,
    pub matched_det: usize,
    /// Set when there was nothing detected; correctness is reported as 1 by
    /// convention in that case.
    pub zero_length_detection: bool,
}

/// Resample a point chain at the given spacing (arc length), endpoints kept.
pub fn densify(points: &[[f64; 2]], step: f64) -> Vec<[f64; 2]> {
    if points.len() < 2 {
        return points.to_vec();
    }
    let mut out = Vec::new();
    for w in points.windows(2) {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        let n = (d / step).ceil().max(1.0) as usize;
        for i in 0..n {
            let t = i as f64 / n as f64;
            out.push([
                w[0][0] + t * (w[1][0] - w[0][0]),
                w[0][1] + t * (w[1][1] - w[0][1]),
            ]);
        }
    }
    out.push(*points.last().unwrap());
    out
}

/// Evaluate detected curves against ground-truth centerlines.
///
/// Both curve sets are densified at 0.5 px before matching.
pub fn evaluate(
    detected: &[Vec<[f64; 2]>],
    ground_truth: &[Vec<[f64; 2]>],
    buffer: f64,
) -> Result<EvalReport> {
    if !(buffer > 0.0) {
        return Err(Error::Domain(format!("buffer must be > 0, got {buffer}")));
    }
    if ground_truth.iter().all(|c| c.is_empty()) {
        return Err(Error::Domain("ground truth is empty".into()));
    }
    let step = 0.5;
    let gt: Vec<[f64; 2]> = ground_truth.iter().flat_map(|c| densify(c, step)).collect();
    let det: Vec<[f64; 2]> = detected.iter().flat_map(|c| densify(c, step)).collect();

    if det.is_empty() {
        return Ok(EvalReport {
            completeness: 0.0,
            correctness: 1.0,
            rmse: 0.0,
            buffer,
            gt_points: gt.len(),
            det_points: 0,
            matched_gt: 0,
            matched_det: 0,
            zero_length_detection: true,
        });
    }

    let index = BucketIndex::build(&det, buffer);
    let mut matched_gt = 0usize;
    let mut sq_sum = 0.0;
    let mut matched_total = 0usize;
    for p in &gt {
        if let Some(d) = index.nearest_within(*p, buffer) {
            matched_gt += 1;
            sq_sum += d * d;
            matched_total += 1;
        }
    }
    let gt_index = BucketIndex::build(&gt, buffer);
    let mut matched_det = 0usize;
    for p in &det {
        if let Some(d) = gt_index.nearest_within(*p, buffer) {
            matched_det += 1;
            sq_sum += d * d;
            matched_total += 1;
        }
    }

    Ok(EvalReport {
        completeness: matched_gt as f64 / gt.len() as f64,
        correctness: matched_det as f64 / det.len() as f64,
        rmse: if matched_total > 0 {
            (sq_sum / matched_total as f64).sqrt()
        } else {
            0.0
        },
        buffer,
        gt_points: gt.len(),
        det_points: det.len(),
        matched_gt,
        matched_det,
        zero_length_detection: false,
    })
}

/// Uniform-grid point index for nearest-within-radius queries.
struct BucketIndex {
    cell: f64,
    buckets: std::collections::HashMap<(i64, i64), Vec<[f64; 2]>>,
}

impl BucketIndex {
    fn build(points: &[[f64; 2]], cell: f64) -> Self {
        let mut buckets: std::collections::HashMap<(i64, i64), Vec<[f64; 2]>> =
            std::collections::HashMap::new();
        for &p in points {
            let key = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
            buckets.entry(key).or_default().push(p);
        }
        BucketIndex { cell, buckets }
    }

    fn nearest_within(&self, p: [f64; 2], radius: f64) -> Option<f64> {
        let (cx, cy) = (
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
        );
        let reach = (radius / self.cell).ceil() as i64;
        let mut best = f64::INFINITY;
        for gy in cy - reach..=cy + reach {
            for gx in cx - reach..=cx + reach {
                if let Some(pts) = self.buckets.get(&(gx, gy)) {
                    for q in pts {
                        let d = (p[0] - q[0]).hypot(p[1] - q[1]);
                        if d < best {
                            best = d;
                        }
                    }
                }
            }
        }
        (best <= radius).then_some(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(y: f64) -> Vec<[f64; 2]> {
        vec![[0.0, y], [100.0, y]]
    }

    #[test]
    fn identical_curves_score_perfectly() {
        let r = evaluate(&[line(5.0)], &[line(5.0)], 3.0).unwrap();
        assert_eq!(r.completeness, 1.0);
        assert_eq!(r.correctness, 1.0);
        assert!(r.rmse < 1e-12);
    }

    #[test]
    fn empty_detection_convention() {
        let r = evaluate(&[], &[line(5.0)], 3.0).unwrap();
        assert_eq!(r.completeness, 0.0);
        assert_eq!(r.correctness, 1.0);
        assert!(r.zero_length_detection);
    }

    #[test]
    fn empty_ground_truth_is_domain_error() {
        assert!(evaluate(&[line(1.0)], &[], 3.0).is_err());
        assert!(evaluate(&[line(1.0)], &[vec![]], 3.0).is_err());
    }

    #[test]
    fn shifted_curve_rmse_is_the_shift() {
        let r = evaluate(&[line(6.0)], &[line(5.0)], 3.0).unwrap();
        assert_eq!(r.completeness, 1.0);
        assert_eq!(r.correctness, 1.0);
        assert!((r.rmse - 1.0).abs() <= 0.05, "rmse {}", r.rmse);
    }

    #[test]
    fn far_curve_matches_nothing() {
        let r = evaluate(&[line(50.0)], &[line(5.0)], 3.0).unwrap();
        assert_eq!(r.completeness, 0.0);
        assert_eq!(r.correctness, 0.0);
        assert!(!r.zero_length_detection);
    }

    #[test]
    fn evaluation_is_symmetric_for_self_match() {
        let curves = vec![
            vec![[3.0, 4.0], [20.0, 9.0], [40.0, 4.0]],
            vec![[10.0, 30.0], [12.0, 55.0]],
        ];
        let r = evaluate(&curves, &curves, 2.0).unwrap();
        assert_eq!(r.completeness, 1.0);
        assert_eq!(r.correctness, 1.0);
        assert!(r.rmse < 1e-12);
    }
}
