//! Synthetic scene generation with exact centerline ground truth.
//!
//! Scenes are a flat background plus ribbons (straight or circular-arc, with
//! area-accurate 1-px anti-aliased edges), a sum of 2-D sinusoids standing in
//! for oscillating ground texture, and optional Gaussian noise. Everything is
//! deterministic for a fixed seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Centerline geometry of one ribbon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RibbonPath {
    /// Straight segment between two points (pixel-center coordinates).
    Straight { start: [f64; 2], end: [f64; 2] },
    /// Circular arc: center, radius, and angles in degrees (counter-clockwise
    /// from the +x axis; `theta1` > `theta0`).
    Arc {
        center: [f64; 2],
        radius: f64,
        theta0_deg: f64,
        theta1_deg: f64,
    },
}

impl RibbonPath {
    /// Sample the centerline at roughly `step` px spacing, endpoints included.
    pub fn sample(&self, step: f64) -> Vec<[f64; 2]> {
        match *self {
            RibbonPath::Straight { start, end } => {
                let len = ((end[0] - start[0]).powi(2) + (end[1] - start[1]).powi(2)).sqrt();
                let n = (len / step).ceil().max(1.0) as usize;
                (0..=n)
                    .map(|i| {
                        let t = i as f64 / n as f64;
                        [
                            start[0] + t * (end[0] - start[0]),
                            start[1] + t * (end[1] - start[1]),
                        ]
                    })
                    .collect()
            }
            RibbonPath::Arc {
                center,
                radius,
                theta0_deg,
                theta1_deg,
            } => {
                let (t0, t1) = (theta0_deg.to_radians(), theta1_deg.to_radians());
                let arc_len = radius * (t1 - t0).abs();
                let n = (arc_len / step).ceil().max(1.0) as usize;
                (0..=n)
                    .map(|i| {
                        let t = t0 + (t1 - t0) * i as f64 / n as f64;
                        [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                    })
                    .collect()
            }
        }
    }

    /// Pixel coverage of a ribbon of the given width at a pixel center.
    ///
    /// Edges ramp linearly over one pixel centered on the geometric boundary;
    /// straight ribbons get flat end caps so an axis-aligned ribbon with
    /// half-integer edges rasterizes to the exact binary rectangle.
    fn coverage(&self, x: f64, y: f64, width: f64) -> f64 {
        let half = width / 2.0;
        match *self {
            RibbonPath::Straight { start, end } => {
                let (vx, vy) = (end[0] - start[0], end[1] - start[1]);
                let len = (vx * vx + vy * vy).sqrt();
                if len == 0.0 {
                    return 0.0;
                }
                let (ux, uy) = (vx / len, vy / len);
                let s = (x - start[0]) * ux + (y - start[1]) * uy;
                let d = ((x - start[0]) * uy - (y - start[1]) * ux).abs();
                let lateral = (half - d + 0.5).clamp(0.0, 1.0);
                let caps = (s + 0.5).clamp(0.0, 1.0) * (len - s + 0.5).clamp(0.0, 1.0);
                lateral * caps
            }
            RibbonPath::Arc {
                center,
                radius,
                theta0_deg,
                theta1_deg,
            } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                let ang = dy.atan2(dx);
                let (t0, t1) = (theta0_deg.to_radians(), theta1_deg.to_radians());
                let mut a = ang;
                while a < t0 {
                    a += std::f64::consts::TAU;
                }
                if a <= t1 {
                    let d = ((dx * dx + dy * dy).sqrt() - radius).abs();
                    (half - d + 0.5).clamp(0.0, 1.0)
                } else {
                    // rounded caps past the end angles
                    let p0 = [center[0] + radius * t0.cos(), center[1] + radius * t0.sin()];
                    let p1 = [center[0] + radius * t1.cos(), center[1] + radius * t1.sin()];
                    let d0 = ((x - p0[0]).powi(2) + (y - p0[1]).powi(2)).sqrt();
                    let d1 = ((x - p1[0]).powi(2) + (y - p1[1]).powi(2)).sqrt();
                    (half - d0.min(d1) + 0.5).clamp(0.0, 1.0)
                }
            }
        }
    }

    fn bounding_radius_points(&self) -> Vec<[f64; 2]> {
        self.sample(2.0)
    }
}

/// One ribbon: a centerline, a width and a contrast added over the background.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RibbonSpec {
    pub path: RibbonPath,
    pub width: f64,
    pub contrast: f64,
}

/// One sinusoidal texture component `amp * sin(2*pi*(fx*x + fy*y) + phase)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextureSpec {
    pub amplitude: f64,
    pub freq_x: f64,
    pub freq_y: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_background")]
    pub background: f64,
    #[serde(default)]
    pub ribbons: Vec<RibbonSpec>,
    #[serde(default)]
    pub texture: Vec<TextureSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_background() -> f64 {
    128.0
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(Error::Validation(format!(
                "scene dimensions must be >= 1, got {}x{}",
                self.width, self.height
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Validation("noise sigma must be >= 0".into()));
        }
        for (i, t) in self.texture.iter().enumerate() {
            if t.amplitude < 0.0 {
                return Err(Error::Validation(format!(
                    "texture component {i} has negative amplitude"
                )));
            }
        }
        for (i, r) in self.ribbons.iter().enumerate() {
            if r.width < 1.0 {
                return Err(Error::Validation(format!(
                    "ribbon {i} width {} must be >= 1 px",
                    r.width
                )));
            }
            if r.contrast < 0.0 {
                return Err(Error::Validation(format!("ribbon {i} has negative contrast")));
            }
            let half = r.width / 2.0;
            for p in r.path.bounding_radius_points() {
                if p[0] - half < -0.5
                    || p[1] - half < -0.5
                    || p[0] + half > self.width as f64 - 0.5
                    || p[1] + half > self.height as f64 - 0.5
                {
                    return Err(Error::Validation(format!(
                        "ribbon {i} leaves the {}x{} grid at ({:.1}, {:.1})",
                        self.width, self.height, p[0], p[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

impl SceneSpec {
    /// Pixel mask of the ribbon support, widened by `extra` px on each side.
    pub fn ribbon_mask(&self, extra: f64) -> Vec<bool> {
        let mut mask = vec![false; self.width * self.height];
        for r in &self.ribbons {
            for y in 0..self.height {
                for x in 0..self.width {
                    if r.path.coverage(x as f64, y as f64, r.width + 2.0 * extra) > 0.5 {
                        mask[y * self.width + x] = true;
                    }
                }
            }
        }
        mask
    }
}

/// Rendered scene plus exact centerline ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: ImageGrid,
    /// One densified centerline polyline per ribbon.
    pub ground_truth: Vec<Vec<[f64; 2]>>,
}

/// Render a scene. Deterministic for a fixed (spec, seed).
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut img = ImageGrid::filled(w, h, spec.background);

    // sinusoidal texture layer
    for t in &spec.texture {
        let data = img.data_mut();
        for y in 0..h {
            for x in 0..w {
                let arg = std::f64::consts::TAU * (t.freq_x * x as f64 + t.freq_y * y as f64)
                    + t.phase;
                data[y * w + x] += t.amplitude * arg.sin();
            }
        }
    }

    // Overlapping ribbons take the strongest contribution, not the sum.
    if !spec.ribbons.is_empty() {
        let data = img.data_mut();
        for y in 0..h {
            for x in 0..w {
                let mut add = 0.0f64;
                for r in &spec.ribbons {
                    let c = r.path.coverage(x as f64, y as f64, r.width);
                    add = add.max(c * r.contrast);
                }
                data[y * w + x] += add;
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = spec.noise_sigma;
        let data = img.data_mut();
        for v in data.iter_mut() {
            *v += sigma * gauss_sample(&mut rng);
        }
    }

    let ground_truth = spec.ribbons.iter().map(|r| r.path.sample(1.0)).collect();
    Ok(Scene {
        image: img,
        ground_truth,
    })
}

/// Standard normal via Box-Muller on the seeded stream.
fn gauss_sample(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_ribbon;

    fn empty_spec(w: usize, h: usize) -> SceneSpec {
        SceneSpec {
            width: w,
            height: h,
            background: 100.0,
            ribbons: vec![],
            texture: vec![],
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn no_ribbons_no_texture_is_constant() {
        let scene = synth_scene(&empty_spec(32, 20), 1).unwrap();
        assert!(scene.image.data().iter().all(|&v| v == 100.0));
        assert!(scene.ground_truth.is_empty());
    }

    #[test]
    fn straight_ribbon_matches_make_ribbon() {
        // vertical ribbon 4 px wide and 32 px long centered in a 64x64 grid,
        // with edges on half-integer coordinates: identical to the binary
        // rectangle from make_ribbon.
        let mut spec = empty_spec(64, 64);
        spec.background = 10.0;
        spec.ribbons.push(RibbonSpec {
            path: RibbonPath::Straight {
                start: [31.5, 15.5],
                end: [31.5, 47.5],
            },
            width: 4.0,
            contrast: 80.0,
        });
        let scene = synth_scene(&spec, 0).unwrap();
        let rect = make_ribbon(8, 4, 64, 64).unwrap();
        for i in 0..64 * 64 {
            let expect = 10.0 + 80.0 * rect.data()[i];
            assert!(
                (scene.image.data()[i] - expect).abs() < 1e-12,
                "pixel {i}: {} vs {expect}",
                scene.image.data()[i]
            );
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let mut spec = empty_spec(48, 48);
        spec.noise_sigma = 5.0;
        spec.texture.push(TextureSpec {
            amplitude: 8.0,
            freq_x: 0.11,
            freq_y: 0.05,
            phase: 0.3,
        });
        let a = synth_scene(&spec, 77).unwrap();
        let b = synth_scene(&spec, 77).unwrap();
        assert_eq!(a.image, b.image);
        let c = synth_scene(&spec, 78).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn ribbon_outside_grid_is_rejected() {
        let mut spec = empty_spec(32, 32);
        spec.ribbons.push(RibbonSpec {
            path: RibbonPath::Straight {
                start: [2.0, 2.0],
                end: [40.0, 2.0],
            },
            width: 3.0,
            contrast: 50.0,
        });
        assert!(matches!(synth_scene(&spec, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn arc_ground_truth_lies_on_circle() {
        let mut spec = empty_spec(128, 128);
        spec.ribbons.push(RibbonSpec {
            path: RibbonPath::Arc {
                center: [64.0, 64.0],
                radius: 40.0,
                theta0_deg: 20.0,
                theta1_deg: 120.0,
            },
            width: 4.0,
            contrast: 60.0,
        });
        let scene = synth_scene(&spec, 0).unwrap();
        for p in &scene.ground_truth[0] {
            let r = ((p[0] - 64.0).powi(2) + (p[1] - 64.0).powi(2)).sqrt();
            assert!((r - 40.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scene_spec_toml_roundtrip() {
        let mut spec = empty_spec(64, 48);
        spec.ribbons.push(RibbonSpec {
            path: RibbonPath::Arc {
                center: [30.0, 24.0],
                radius: 15.0,
                theta0_deg: 0.0,
                theta1_deg: 90.0,
            },
            width: 3.0,
            contrast: 40.0,
        });
        spec.texture.push(TextureSpec {
            amplitude: 6.0,
            freq_x: 0.2,
            freq_y: 0.1,
            phase: 0.0,
        });
        let text = toml::to_string_pretty(&spec).unwrap();
        let back: SceneSpec = toml::from_str(&text).unwrap();
        assert_eq!(back.width, 64);
        assert_eq!(back.ribbons.len(), 1);
        assert_eq!(back.texture[0].amplitude, 6.0);
    }
}
