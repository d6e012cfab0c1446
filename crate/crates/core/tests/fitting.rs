use hybridskin_core::fitting::{fit_frame, fit_sequence, objective, Descent, FitConfig, FrameParams};
use hybridskin_core::graph::{build_graph, sample_control_nodes};
use hybridskin_core::nalgebra::Vector3;
use hybridskin_core::primitives::uv_sphere;
use hybridskin_core::rotation::exp_so3;
use hybridskin_core::skinning::{deform_mesh, NodeTransform};
use hybridskin_core::{DeformationGraph, Mesh, Metric, SkinningMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(segments: usize, rings: usize, n_node: usize) -> (Mesh, DeformationGraph) {
    let mesh = uv_sphere(segments, rings, 1.0);
    let nodes = sample_control_nodes(&mesh, n_node, 0).unwrap();
    let graph = build_graph(&mesh, &nodes, 4, Metric::Geodesic).unwrap();
    (mesh, graph)
}

fn small_motion(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<NodeTransform<f64>> {
    (0..n)
        .map(|_| {
            let r = Vector3::from_fn(|_, _| rng.random::<f64>() - 0.5) * (0.4 * scale);
            let t = Vector3::from_fn(|_, _| rng.random::<f64>() - 0.5) * (0.2 * scale);
            NodeTransform::rigid(exp_so3(&r), t).with_rigid_strength(rng.random_range(0.1..0.9))
        })
        .collect()
}

fn data_only(mode: SkinningMode) -> FitConfig<f64> {
    FitConfig {
        lambda_arap: 0.0,
        lambda_nc: 0.0,
        mode,
        ..FitConfig::default()
    }
}

#[test]
fn optimizer_reaches_generator_objective() {
    let (mesh, graph) = setup(8, 6, 8);
    for (seed, mode) in (11..15).flat_map(|s| [SkinningMode::Lbs, SkinningMode::Dqs, SkinningMode::Ahs].map(|m| (s, m))) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = small_motion(&mut rng, 8, 1.0);
        let targets = deform_mesh(&mesh, &graph, &truth, mode).unwrap().positions;
        let cfg = FitConfig {
            max_iters: 200,
            convergence_tol: 0.0,
            descent: Descent::LevenbergMarquardt,
            ..data_only(mode)
        };
        let truth_params = FrameParams::from_transforms(&truth);
        let (at_truth, _) = objective(&mesh, &graph, &truth_params, &targets, &cfg).unwrap();
        let res = fit_frame(&mesh, &graph, &targets, &cfg, &FrameParams::identity(8)).unwrap();
        let fitted = res.trace.last().unwrap().value.data;
        assert!(fitted <= at_truth.data + 1e-10, "{mode} seed {seed}: fitted {fitted:e}, truth {:e}", at_truth.data);
        assert!(res.trace.windows(2).all(|w| w[1].value.total <= w[0].value.total));
    }
}

#[test]
fn regularized_fit_is_monotone_with_every_descent() {
    let (mesh, graph) = setup(10, 8, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let targets = deform_mesh(&mesh, &graph, &small_motion(&mut rng, 12, 1.0), SkinningMode::Ahs).unwrap().positions;
    for descent in [Descent::Gradient, Descent::Lbfgs, Descent::LevenbergMarquardt] {
        let cfg = FitConfig {
            max_iters: 60,
            descent,
            ..FitConfig::default()
        };
        let res = fit_frame(&mesh, &graph, &targets, &cfg, &FrameParams::identity(12)).unwrap();
        assert!(res.trace.len() > 1, "{descent}: no step accepted");
        assert!(res.trace.windows(2).all(|w| w[1].value.total <= w[0].value.total), "{descent}");
        assert!(res.iterations() <= 60);
    }
}

#[test]
fn warm_start_converges_fast_on_repeated_targets() {
    let (mesh, graph) = setup(8, 6, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let target = deform_mesh(&mesh, &graph, &small_motion(&mut rng, 8, 1.0), SkinningMode::Ahs).unwrap().positions;
    let frames = vec![target; 4];
    let cfg = FitConfig {
        descent: Descent::LevenbergMarquardt,
        ..data_only(SkinningMode::Ahs)
    };
    let results = fit_sequence(&mesh, &graph, &frames, &cfg).unwrap();
    assert_eq!(results.len(), 4);
    for r in &results[1..] {
        assert!(r.iterations() <= 5, "warm-started frame took {} iterations", r.iterations());
    }
}

#[test]
fn sweep_is_recovered_frame_by_frame() {
    let (mesh, graph) = setup(16, 12, 24);
    let bbox = mesh.bbox_diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let end = small_motion(&mut rng, 24, 1.0);
    let frames: Vec<Vec<_>> = (1..=8)
        .map(|k| {
            let s = k as f64 / 8.0;
            let ts: Vec<_> = end
                .iter()
                .map(|t| {
                    let r = hybridskin_core::rotation::log_so3(&t.rotation) * s;
                    NodeTransform::rigid(exp_so3(&r), t.translation * s).with_rigid_strength(t.rigid_strength)
                })
                .collect();
            deform_mesh(&mesh, &graph, &ts, SkinningMode::Ahs).unwrap().positions
        })
        .collect();
    let results = fit_sequence(&mesh, &graph, &frames, &data_only(SkinningMode::Ahs)).unwrap();
    for (k, (res, target)) in results.iter().zip(&frames).enumerate() {
        let fitted = deform_mesh(&mesh, &graph, &res.params.to_transforms(), SkinningMode::Ahs).unwrap().positions;
        let sq: f64 = fitted.iter().zip(target).map(|(a, b)| (a - b).norm_squared()).sum();
        let rmse = (sq / fitted.len() as f64).sqrt();
        assert!(rmse < 1e-3 * bbox, "frame {k}: rmse {rmse:e}");
    }
}

#[test]
fn empty_sequence_is_rejected() {
    let (mesh, graph) = setup(8, 6, 8);
    assert!(fit_sequence(&mesh, &graph, &[], &FitConfig::default()).is_err());
}
