//! The standard synthetic scene corpus and the representation comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::ImageGrid;
use crate::synth::{synth_scene, RibbonPath, RibbonSpec, SceneSpec, TextureSpec};

use super::eval::{evaluate, EvalReport};
use super::{run_pipeline, PipelineConfig, Representation};

/// Ten seeded 256x256 scenes: one to three ribbons (straight and arcs),
/// widths 3..8 px, sinusoidal background texture, noise sigma alternating
/// between 0 and 5.
pub fn standard_corpus() -> Vec<(SceneSpec, u64)> {
    (0..10).map(scene_for_index).collect()
}

fn scene_for_index(i: u64) -> (SceneSpec, u64) {
    let widths = [3.0, 4.0, 5.0, 6.0, 8.0];
    let w0 = widths[(i as usize) % widths.len()];
    let sigma = if i % 2 == 0 { 0.0 } else { 5.0 };
    let mut ribbons = vec![];

    // every scene: one long straight ribbon at a slowly rotating angle
    let angle = 15.0 + 13.0 * i as f64;
    let (s, c) = angle.to_radians().sin_cos();
    let (cx, cy) = (128.0, 128.0);
    let half_len = 100.0;
    ribbons.push(RibbonSpec {
        path: RibbonPath::Straight {
            start: [cx - half_len * c, cy - half_len * s],
            end: [cx + half_len * c, cy + half_len * s],
        },
        width: w0,
        contrast: 80.0,
    });

    if i % 3 >= 1 {
        // an arc in the upper-left quadrant
        ribbons.push(RibbonSpec {
            path: RibbonPath::Arc {
                center: [40.0, 200.0],
                radius: 120.0,
                theta0_deg: 280.0,
                theta1_deg: 320.0,
            },
            width: widths[(i as usize + 2) % widths.len()],
            contrast: 70.0,
        });
    }
    if i % 3 == 2 {
        // a short straight ribbon along the bottom
        ribbons.push(RibbonSpec {
            path: RibbonPath::Straight {
                start: [40.0, 225.0],
                end: [180.0, 235.0],
            },
            width: widths[(i as usize + 4) % widths.len()],
            contrast: 60.0,
        });
    }

    let spec = SceneSpec {
        width: 256,
        height: 256,
        background: 110.0,
        ribbons,
        texture: vec![
            TextureSpec {
                amplitude: 8.0,
                freq_x: 0.13,
                freq_y: 0.06,
                phase: 0.9 * i as f64,
            },
            TextureSpec {
                amplitude: 6.0,
                freq_x: 0.04,
                freq_y: 0.17,
                phase: 0.4 * i as f64,
            },
        ],
        noise_sigma: sigma,
    };
    (spec, i)
}

/// Detector/refinement settings that keep the 256x256 corpus at a
/// minutes-level total runtime.
///
/// The magnitude floor is calibrated to the [0, 255]-rescaled feature
/// images: ribbon boundaries gradient well above it, sinusoidal background
/// texture well below.
pub fn corpus_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.alignment.sample_step = 3.0;
    cfg.alignment.magnitude_floor = 40.0;
    cfg.decomposition.max_iter = 30;
    cfg.decomposition.tol = 5e-4;
    cfg.decomposition.inner_max_iter = 120;
    cfg.decomposition.inner_tol = 1e-4;
    cfg
}

/// Per-scene completeness/correctness of both representations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneComparison {
    pub scene: usize,
    pub seed: u64,
    pub texture: EvalReport,
    pub edges: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub scenes: Vec<SceneComparison>,
    pub buffer: f64,
    pub mean_completeness_texture: f64,
    pub mean_completeness_edges: f64,
    pub mean_correctness_texture: f64,
    pub mean_correctness_edges: f64,
}

impl ComparisonTable {
    /// Plain-text table for terminal output.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("scene  seed  repr     completeness  correctness  rmse\n");
        for row in &self.scenes {
            for (name, r) in [("texture", &row.texture), ("edges", &row.edges)] {
                out.push_str(&format!(
                    "{:>5}  {:>4}  {:<8} {:>12.3}  {:>11.3}  {:>5.2}\n",
                    row.scene, row.seed, name, r.completeness, r.correctness, r.rmse
                ));
            }
        }
        out.push_str(&format!(
            "mean   -     texture  {:>12.3}  {:>11.3}\nmean   -     edges    {:>12.3}  {:>11.3}\n",
            self.mean_completeness_texture,
            self.mean_correctness_texture,
            self.mean_completeness_edges,
            self.mean_correctness_edges,
        ));
        out
    }
}

/// Run the pipeline under the texture and edges representations on every
/// scene and tabulate completeness/correctness at the given buffer.
pub fn compare_representations(
    corpus: &[(SceneSpec, u64)],
    cfg: &PipelineConfig,
    buffer: f64,
) -> Result<ComparisonTable> {
    if corpus.is_empty() {
        return Err(crate::error::Error::Domain("corpus is empty".into()));
    }
    let rows: Result<Vec<SceneComparison>> = corpus
        .par_iter()
        .enumerate()
        .map(|(idx, (spec, seed))| {
            let scene = synth_scene(spec, *seed)?;
            let mut reports = Vec::new();
            for repr in [Representation::Texture, Representation::Edges] {
                let mut c = cfg.clone();
                c.representation = repr;
                c.seed = *seed;
                c.output_dir = None;
                let res = run_pipeline(&scene.image, &c)?;
                let detected: Vec<Vec<[f64; 2]>> =
                    res.polylines.iter().map(|p| p.nodes.clone()).collect();
                reports.push(evaluate(&detected, &scene.ground_truth, buffer)?);
            }
            let edges = reports.pop().expect("two reports");
            let texture = reports.pop().expect("two reports");
            Ok(SceneComparison {
                scene: idx,
                seed: *seed,
                texture,
                edges,
            })
        })
        .collect();
    let scenes = rows?;
    let n = scenes.len() as f64;
    let table = ComparisonTable {
        buffer,
        mean_completeness_texture: scenes.iter().map(|s| s.texture.completeness).sum::<f64>() / n,
        mean_completeness_edges: scenes.iter().map(|s| s.edges.completeness).sum::<f64>() / n,
        mean_correctness_texture: scenes.iter().map(|s| s.texture.correctness).sum::<f64>() / n,
        mean_correctness_edges: scenes.iter().map(|s| s.edges.correctness).sum::<f64>() / n,
        scenes,
    };
    Ok(table)
}

/// Mean absolute feature response on the ribbon support divided by the mean
/// on the (3 px eroded) background.
pub fn ribbon_background_ratio(feature: &ImageGrid, spec: &SceneSpec) -> f64 {
    let on = spec.ribbon_mask(0.0);
    let off = spec.ribbon_mask(3.0);
    let mut on_sum = 0.0;
    let mut on_n = 0usize;
    let mut off_sum = 0.0;
    let mut off_n = 0usize;
    for (i, &v) in feature.data().iter().enumerate() {
        if on[i] {
            on_sum += v.abs();
            on_n += 1;
        } else if !off[i] {
            off_sum += v.abs();
            off_n += 1;
        }
    }
    if on_n == 0 || off_n == 0 || off_sum == 0.0 {
        return f64::NAN;
    }
    (on_sum / on_n as f64) / (off_sum / off_n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_has_ten_valid_scenes() {
        let corpus = standard_corpus();
        assert_eq!(corpus.len(), 10);
        let mut sigmas = std::collections::BTreeSet::new();
        let mut counts = std::collections::BTreeSet::new();
        for (spec, seed) in &corpus {
            spec.validate().expect("corpus scene valid");
            assert_eq!(spec.width, 256);
            sigmas.insert(spec.noise_sigma as i64);
            counts.insert(spec.ribbons.len());
            let scene = synth_scene(spec, *seed).unwrap();
            assert!(scene.image.all_finite());
        }
        assert_eq!(sigmas.into_iter().collect::<Vec<_>>(), vec![0, 5]);
        assert_eq!(counts.into_iter().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn ratio_is_high_on_clean_ribbon_mask() {
        let (spec, seed) = scene_for_index(0);
        let scene = synth_scene(&spec, seed).unwrap();
        // the input image itself has ribbon contrast over background texture
        let bg = spec.background;
        let centered = scene.image.map(|v| v - bg);
        let ratio = ribbon_background_ratio(&centered, &spec);
        assert!(ratio > 3.0, "ratio {ratio}");
    }
}
