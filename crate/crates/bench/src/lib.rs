//! Inputs shared by the benchmarks in `benches/`.

use panfuse_core::fusion::{fuse, FusionConfig};
use panfuse_core::synth::{generate_scene, Perturbation, Scene, SceneSpec};
use panfuse_core::{ClassTaxonomy, PanopticMap};

pub struct Workload {
    pub taxonomy: ClassTaxonomy,
    pub scene: Scene,
    /// The scene's fused prediction, for metric benchmarks.
    pub fused: PanopticMap,
}

/// A perturbed scene of the given size, fused once with default settings.
pub fn workload(height: usize, width: usize, n_stuff: usize, n_instances: usize) -> Workload {
    let taxonomy = ClassTaxonomy::synthetic(n_stuff, 10).expect("valid taxonomy");
    let spec = SceneSpec::new(4256, height, width, n_stuff, n_instances).with_perturbation(Perturbation {
        mask_jitter: 2,
        score_noise: 0.2,
        drop_probability: 0.05,
    });
    let scene = generate_scene(&spec, &taxonomy).expect("scene fits taxonomy");
    let fused = fuse(&scene.probs, &scene.instances, &taxonomy, &FusionConfig::default()).expect("fusion succeeds");
    Workload { taxonomy, scene, fused }
}
