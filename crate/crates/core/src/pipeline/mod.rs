//! End-to-end orchestration: representation, detection, fusion, refinement,
//! with every intermediate persisted and the whole chain deterministic for a
//! fixed (config, seed).

pub mod corpus;
pub mod eval;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::alignment::{detect_alignments, fuse_segments, orientation_field, AlignmentParams, Segment};
use crate::baseline::{canny_deriche, DericheParams};
use crate::decomposition::{decompose, DecompositionParams, DecompositionResult};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::io::save_image;
use crate::render::overlay;
use crate::snakes::{evolve, segment_to_polyline, Polyline, SnakeParams};

/// Which feature image feeds the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Texture magnitude |v| of the decomposition, rescaled to [0, 255].
    Texture,
    /// Canny-Deriche gradient magnitude (no suppression).
    Edges,
    /// The input image unchanged.
    Raw,
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Representation::Texture => write!(f, "texture"),
            Representation::Edges => write!(f, "edges"),
            Representation::Raw => write!(f, "raw"),
        }
    }
}

/// Full pipeline configuration, serializable as one TOML document with a
/// section per stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub representation: Representation,
    pub seed: u64,
    /// Merge collinear detections before refinement.
    pub fuse: bool,
    pub output_dir: Option<PathBuf>,
    pub decomposition: DecompositionParams,
    pub alignment: AlignmentParams,
    pub snakes: SnakeParams,
    pub deriche: DericheParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            representation: Representation::Texture,
            seed: 0,
            fuse: true,
            output_dir: None,
            decomposition: DecompositionParams::default(),
            alignment: AlignmentParams::default(),
            snakes: SnakeParams::default(),
            deriche: DericheParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.decomposition.validate()?;
        self.alignment.validate()?;
        self.snakes.validate()?;
        self.deriche.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config parse error: {e}")))
    }
}

/// Everything one pipeline run produces.
#[derive(Debug)]
pub struct PipelineResult {
    pub polylines: Vec<Polyline>,
    pub segments: Vec<Segment>,
    pub fused: Vec<Segment>,
    pub feature: ImageGrid,
    pub decomposition: Option<DecompositionResult>,
    pub timings: Vec<(&'static str, Duration)>,
}

/// Wire format of the polylines file: one `{nodes: [[x, y], ...]}` per curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolylineJson {
    pub nodes: Vec<[f64; 2]>,
}

/// Non-timing run summary persisted next to the outputs.
#[derive(Debug, Serialize)]
struct RunReport<'a> {
    representation: String,
    seed: u64,
    segments_detected: usize,
    segments_after_fusion: usize,
    polylines: usize,
    decomposition: Option<DecompositionReport<'a>>,
}

#[derive(Debug, Serialize)]
struct DecompositionReport<'a> {
    iterations: usize,
    converged: bool,
    energy_trace: &'a [f64],
}

/// Run representation -> orientation -> detection -> fusion -> refinement.
///
/// With `output_dir` set in the config, all intermediates are written there
/// (feature/overlay images, segments, polylines, config snapshot, report).
pub fn run_pipeline(img: &ImageGrid, cfg: &PipelineConfig) -> Result<PipelineResult> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let mut timings = Vec::new();
    let clock = Instant::now;

    // representation stage
    let t0 = clock();
    let mut decomposition = None;
    let feature = match cfg.representation {
        Representation::Texture => {
            let d = decompose(img, &cfg.decomposition).map_err(|e| e.in_stage("decompose"))?;
            let f = d.v.abs_rescaled();
            decomposition = Some(d);
            f
        }
        Representation::Edges => {
            let p = DericheParams {
                enable_nms: false,
                ..cfg.deriche.clone()
            };
            // rescaled to [0, 255] exactly like the texture magnitude, so
            // one magnitude floor is comparable across representations
            canny_deriche(img, &p)
                .map_err(|e| e.in_stage("edges"))?
                .abs_rescaled()
        }
        Representation::Raw => img.clone(),
    };
    timings.push(("representation", t0.elapsed()));

    // detection stage
    let t1 = clock();
    let field = orientation_field(&feature, cfg.alignment.magnitude_floor);
    let segments =
        detect_alignments(&field, &cfg.alignment).map_err(|e| e.in_stage("detect"))?;
    timings.push(("detect", t1.elapsed()));

    // fusion stage
    let t2 = clock();
    let fused = if cfg.fuse {
        fuse_segments(&segments, &cfg.alignment)
    } else {
        segments.clone()
    };
    timings.push(("fuse", t2.elapsed()));

    // refinement stage
    let t3 = clock();
    let mut polylines = Vec::new();
    for seg in &fused {
        match segment_to_polyline(seg, cfg.snakes.spacing) {
            Ok(init) => {
                let (snake, _) =
                    evolve(&init, &feature, &cfg.snakes).map_err(|e| e.in_stage("refine"))?;
                polylines.push(snake);
            }
            Err(_) => continue, // too short for the node spacing: skip
        }
    }
    timings.push(("refine", t3.elapsed()));

    let result = PipelineResult {
        polylines,
        segments,
        fused,
        feature,
        decomposition,
        timings,
    };
    if let Some(dir) = &cfg.output_dir {
        persist(img, cfg, &result, dir).map_err(|e| e.in_stage("persist"))?;
    }
    Ok(result)
}

/// Write every intermediate; JSON outputs carry no timing or other
/// run-to-run-varying data, so identical (config, seed) runs are
/// byte-identical.
fn persist(img: &ImageGrid, cfg: &PipelineConfig, res: &PipelineResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_image(img, dir.join("input.png"))?;
    save_image(&res.feature, dir.join("feature.png"))?;
    if let Some(d) = &res.decomposition {
        save_image(&d.u, dir.join("u.png"))?;
        save_image(&d.v, dir.join("v.png"))?;
        save_image(&d.v.abs_rescaled(), dir.join("v_abs.png"))?;
        save_image(&d.residual, dir.join("residual.png"))?;
    }
    write_segments_json(&res.segments, &dir.join("segments.json"))?;
    write_segments_json(&res.fused, &dir.join("segments_fused.json"))?;
    write_polylines_json(&res.polylines, &dir.join("polylines.json"))?;
    let over = overlay(img, &res.fused, &res.polylines);
    save_image(&over, dir.join("overlay.png"))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let report = RunReport {
        representation: cfg.representation.to_string(),
        seed: cfg.seed,
        segments_detected: res.segments.len(),
        segments_after_fusion: res.fused.len(),
        polylines: res.polylines.len(),
        decomposition: res.decomposition.as_ref().map(|d| DecompositionReport {
            iterations: d.iterations_used,
            converged: d.converged,
            energy_trace: &d.energy_trace,
        }),
    };
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    let timing_lines: String = res
        .timings
        .iter()
        .map(|(stage, d)| format!("{stage}: {:.3} s\n", d.as_secs_f64()))
        .collect();
    std::fs::write(dir.join("timings.txt"), timing_lines)?;
    Ok(())
}

pub fn write_segments_json(segs: &[Segment], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(segs).expect("segments serialize"))?;
    Ok(())
}

pub fn write_polylines_json(polys: &[Polyline], path: &Path) -> Result<()> {
    let wire: Vec<PolylineJson> = polys
        .iter()
        .map(|p| PolylineJson {
            nodes: p.nodes.clone(),
        })
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&wire).expect("polylines serialize"))?;
    Ok(())
}

pub fn read_polylines_json(path: &Path) -> Result<Vec<PolylineJson>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: format!("polylines parse error: {e}"),
    })
}

pub fn read_segments_json(path: &Path) -> Result<Vec<Segment>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: format!("segments parse error: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_image_yields_no_polylines() {
        let img = ImageGrid::filled(64, 64, 128.0);
        for repr in [Representation::Texture, Representation::Edges, Representation::Raw] {
            let cfg = PipelineConfig {
                representation: repr,
                alignment: AlignmentParams {
                    sample_step: 2.0,
                    ..AlignmentParams::default()
                },
                ..PipelineConfig::default()
            };
            let res = run_pipeline(&img, &cfg).unwrap();
            assert!(res.polylines.is_empty(), "{repr}: {:?}", res.polylines.len());
        }
    }

    #[test]
    fn config_toml_roundtrip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back.representation, cfg.representation);
        assert_eq!(back.alignment.precision, cfg.alignment.precision);
        assert_eq!(back.snakes.spacing, cfg.snakes.spacing);
    }

    #[test]
    fn pipeline_errors_carry_stage_labels() {
        let img = ImageGrid::filled(32, 32, 10.0);
        let cfg = PipelineConfig {
            decomposition: DecompositionParams {
                tau: 0.9, // invalid
                ..DecompositionParams::default()
            },
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&img, &cfg).unwrap_err();
        assert!(err.to_string().contains("stage config"), "{err}");
    }
}
