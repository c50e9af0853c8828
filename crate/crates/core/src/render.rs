//! Overlay rendering: draw detections over a grayscale image.

use crate::alignment::Segment;
use crate::grid::ImageGrid;
use crate::snakes::Polyline;

/// Copy of `base` with line features burned in at the given gray value.
pub fn overlay(base: &ImageGrid, segments: &[Segment], polylines: &[Polyline]) -> ImageGrid {
    let mut out = normalize_base(base);
    for s in segments {
        draw_line(&mut out, [s.x1, s.y1], [s.x2, s.y2], 255.0);
    }
    for p in polylines {
        for w in p.nodes.windows(2) {
            draw_line(&mut out, w[0], w[1], 255.0);
        }
        for n in &p.nodes {
            draw_dot(&mut out, *n, 0.0);
        }
    }
    out
}

fn normalize_base(base: &ImageGrid) -> ImageGrid {
    let (min, max) = (base.min(), base.max());
    if max > min {
        base.map(|v| (v - min) * 220.0 / (max - min))
    } else {
        base.map(|_| 0.0)
    }
}

fn draw_line(img: &mut ImageGrid, a: [f64; 2], b: [f64; 2], value: f64) {
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let steps = (len * 2.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (a[0] + t * (b[0] - a[0])).round();
        let y = (a[1] + t * (b[1] - a[1])).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
            img.set(x as usize, y as usize, value);
        }
    }
}

fn draw_dot(img: &mut ImageGrid, p: [f64; 2], value: f64) {
    let (x, y) = (p[0].round(), p[1].round());
    if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.set(x as usize, y as usize, value);
    }
}
