//! Road-network extraction from grayscale imagery.
//!
//! The toolkit decomposes an image into a structure part `u` and an
//! oscillating texture part `v`; thin ribbon-like objects (roads) are
//! enhanced in `v`, where an a-contrario alignment detector finds segment
//! candidates that open active contours then refine into curves. A
//! Canny-Deriche edge detector serves as the comparison representation,
//! and the pipeline module wires the stages together with completeness /
//! correctness evaluation on synthetic scenes.

pub mod alignment;
pub mod baseline;
pub mod decomposition;
pub mod error;
pub mod gnorm;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod render;
pub mod snakes;
pub mod synth;

pub use alignment::{
    detect_alignments, fuse_segments, nfa, orientation_field, AlignmentParams, OrientationField,
    Segment,
};
pub use baseline::{canny_deriche, deriche_smooth, DericheParams};
pub use decomposition::{
    chambolle_project, decompose, tv_norm, DecompositionParams, DecompositionResult,
};
pub use error::{Error, Result};
pub use gnorm::{duality_lower_bound, gnorm_estimate, lemma1_bounds, GNormEstimate, RibbonBounds};
pub use grid::{divergence, gradient, make_ribbon, ImageGrid, VectorField};
pub use io::{load_image, save_image, AffineMap};
pub use pipeline::corpus::{compare_representations, standard_corpus, ComparisonTable};
pub use pipeline::eval::{densify, evaluate, EvalReport};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineResult, Representation};
pub use snakes::{evolve, polyline_score, segment_to_polyline, EvolveReport, Polyline, SnakeParams};
pub use synth::{synth_scene, RibbonPath, RibbonSpec, Scene, SceneSpec, TextureSpec};
