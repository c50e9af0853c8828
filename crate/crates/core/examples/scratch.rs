use roadtex_core::*;
use roadtex_core::pipeline::corpus::{standard_corpus, corpus_config, compare_representations, ribbon_background_ratio};
use roadtex_core::baseline::{canny_deriche, DericheParams};
use std::time::Instant;

fn main() {
    let corpus = standard_corpus();
    let cfg = corpus_config();
    // probe scenes 0 and 1 (sigma 0 and 5)
    let two: Vec<_> = corpus.into_iter().take(2).collect();
    let t = Instant::now();
    let table = compare_representations(&two, &cfg, 3.0).unwrap();
    println!("2 scenes took {:.1} s", t.elapsed().as_secs_f64());
    print!("{}", table.render_text());

    // ribbon/background contrast ratios for scene 1
    let (spec, seed) = &roadtex_core::pipeline::corpus::standard_corpus()[1];
    let scene = synth_scene(spec, *seed).unwrap();
    let t = Instant::now();
    let dec = decompose(&scene.image, &cfg.decomposition).unwrap();
    println!("decompose 256x256 took {:.1} s ({} outer iters, converged {})",
        t.elapsed().as_secs_f64(), dec.iterations_used, dec.converged);
    let vabs = dec.v.map(|x| x.abs());
    let dp = DericheParams { enable_nms: false, ..DericheParams::default() };
    let mag = canny_deriche(&scene.image, &dp).unwrap();
    println!("ratio |v| = {:.2}  ratio deriche = {:.2}",
        ribbon_background_ratio(&vabs, spec),
        ribbon_background_ratio(&mag, spec));
}
