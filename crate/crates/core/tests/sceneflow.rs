use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempo_guard_core::attacksim::two_body_cloud;
use tempo_guard_core::sceneflow::{
    apply_flow, chamfer_distance, coherence_loss, estimate_flow, estimate_flow_in, loss_gradient,
    total_loss, FlowField, FlowProblem, MlpPrior, SfeConfig,
};
use tempo_guard_core::{dbscan, same_cluster, ClusterLabeling, ClusterParams, Point3, PointCloud};

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, half: f32) -> PointCloud {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(-half..half),
            )
        })
        .collect()
}

fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    let one_way = |x: &PointCloud, y: &PointCloud| -> f64 {
        x.iter()
            .map(|p| y.iter().map(|q| p.distance_squared(*q)).fold(f64::INFINITY, f64::min))
            .sum()
    };
    one_way(a, b) + one_way(b, a)
}

fn brute_coherence(flow: &FlowField, labels: &ClusterLabeling, w: f64) -> f64 {
    let n = labels.num_clustered() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..flow.len() {
        for j in 0..flow.len() {
            if same_cluster(labels, i, j).unwrap() {
                s += w * flow[i].distance_squared(flow[j]);
            }
        }
    }
    s / (n * n)
}

#[test]
fn chamfer_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let na = rng.random_range(1..60);
        let nb = rng.random_range(1..60);
        let a = random_cloud(&mut rng, na, 2.0);
        let b = random_cloud(&mut rng, nb, 2.0);
        let fast = chamfer_distance(&a, &b).unwrap();
        assert!((fast - brute_chamfer(&a, &b)).abs() <= 1e-9 * fast.max(1.0));
    }
}

#[test]
fn coherence_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n = rng.random_range(5..80);
        let src = random_cloud(&mut rng, n, 1.0);
        let labels = dbscan(&src, ClusterParams::new(0.6, 3).unwrap()).unwrap();
        let flow: FlowField = random_cloud(&mut rng, n, 0.5).into_points().into();
        let w = rng.random_range(0.5..2.0);
        let fast = coherence_loss(&src, &flow, &labels, w).unwrap();
        let slow = brute_coherence(&flow, &labels, w);
        assert!((fast - slow).abs() <= 1e-9 * slow.max(1e-12), "{fast} vs {slow}");
    }
}

#[test]
fn total_loss_is_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let src = random_cloud(&mut rng, 40, 1.0);
    let tgt = random_cloud(&mut rng, 35, 1.0);
    let labels = dbscan(&src, ClusterParams::new(0.6, 3).unwrap()).unwrap();
    let flow: FlowField = random_cloud(&mut rng, 40, 0.3).into_points().into();
    let cfg = SfeConfig {
        alpha: 0.7,
        beta: 2.5,
        ..Default::default()
    };
    let ch = chamfer_distance(&apply_flow(&src, &flow).unwrap(), &tgt).unwrap();
    let co = coherence_loss(&src, &flow, &labels, 1.0).unwrap();
    let total = total_loss(&src, &tgt, &flow, &labels, &cfg).unwrap();
    assert!((total - (0.7 * ch + 2.5 * co)).abs() < 1e-9 * total);
}

/// Backprop against central differences in double precision, with a random
/// output layer so that every parameter has a gradient.
#[test]
fn gradient_matches_finite_differences() {
    let t0 = Instant::now();
    let h = 1e-4;
    let mut checked = 0;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + inst);
        let src = random_cloud(&mut rng, 10, 0.5);
        let tgt = random_cloud(&mut rng, 10, 0.5);
        let cfg = SfeConfig {
            hidden_width: 8,
            num_layers: 4,
            cluster_params: ClusterParams::new(0.5, 2).unwrap(),
            seed: inst,
            ..Default::default()
        };
        let problem = FlowProblem::new(&src, &tgt, &cfg).unwrap();
        assert!(problem.labeling().num_clustered() > 0);
        let mut prior = MlpPrior::<f64>::new(8, 4, 1.0, inst).unwrap();
        let total = prior.num_parameters();
        let out_start = total - (8 * 3 + 3);
        for k in out_start..total {
            *prior.parameter_mut(k).unwrap() = rng.random_range(-0.3..0.3);
        }
        let (_, grads) = loss_gradient(&prior, &problem).unwrap();
        let g = grads.flatten();
        // one parameter from the output layer, four from anywhere
        let mut sample = vec![rng.random_range(out_start..total)];
        sample.extend((0..4).map(|_| rng.random_range(0..total)));
        for k in sample {
            let orig = *prior.parameter_mut(k).unwrap();
            *prior.parameter_mut(k).unwrap() = orig + h;
            let up = loss_gradient(&prior, &problem).unwrap().0.total;
            *prior.parameter_mut(k).unwrap() = orig - h;
            let down = loss_gradient(&prior, &problem).unwrap().0.total;
            *prior.parameter_mut(k).unwrap() = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-3, "instance {inst} param {k}: backprop {} fd {fd}", g[k]);
            checked += 1;
        }
    }
    assert_eq!(checked, 100);
    assert!(t0.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn identity_pair_gives_zero_flow() {
    let cloud = two_body_cloud(200, 4);
    let est = estimate_flow(&cloud, &cloud, &SfeConfig::default()).unwrap();
    assert!(est.flow.max_norm() < 1e-6);
    assert!(est.best_loss.total < 1e-9);
    let problem = FlowProblem::new(&cloud, &cloud, &SfeConfig::default()).unwrap();
    let prior = MlpPrior::<f64>::new(128, 6, 1.0, 0).unwrap();
    let (_, g) = loss_gradient(&prior, &problem).unwrap();
    assert!(g.flatten().iter().all(|v| *v == 0.0));
}

#[test]
fn zero_beta_ignores_clustering() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let src = random_cloud(&mut rng, 30, 0.5);
    let tgt = random_cloud(&mut rng, 30, 0.5);
    let mut prior = MlpPrior::<f64>::new(16, 3, 1.0, 0).unwrap();
    let total = prior.num_parameters();
    for k in total - 51..total {
        *prior.parameter_mut(k).unwrap() = rng.random_range(-0.3..0.3);
    }
    let base = SfeConfig {
        beta: 0.0,
        ..Default::default()
    };
    let loose = SfeConfig {
        cluster_params: ClusterParams::new(2.0, 2).unwrap(),
        ..base
    };
    let a = loss_gradient(&prior, &FlowProblem::new(&src, &tgt, &base).unwrap()).unwrap();
    let b = loss_gradient(&prior, &FlowProblem::new(&src, &tgt, &loose).unwrap()).unwrap();
    assert_eq!(a.0.total, b.0.total);
    assert_eq!(a.1.flatten(), b.1.flatten());
}

#[test]
fn recovers_rigid_translation() {
    let t0 = Instant::now();
    let src = two_body_cloud(500, 0);
    let shift = Point3::new(0.5, 0.2, 0.0);
    let tgt: PointCloud = src.iter().map(|&p| p + shift).collect();
    let est = estimate_flow(&src, &tgt, &SfeConfig::default()).unwrap();
    assert!(est.labeling.num_clusters() == 2, "both bodies should be clustered");
    let epe = est.flow.iter().map(|f| (*f - shift).norm()).sum::<f64>() / src.len() as f64;
    assert!(epe < 0.1, "mean end-point error {epe}");
    let trace = &est.trace.entries;
    assert_eq!(trace.len(), 30);
    assert!(trace.windows(2).all(|w| w[1].best_total <= w[0].best_total));
    assert!(trace.last().unwrap().chamfer < 0.2 * trace[0].chamfer);
    assert!(t0.elapsed().as_secs_f64() < 120.0);
}

#[test]
fn double_precision_agrees_with_single() {
    let src = two_body_cloud(120, 1);
    let tgt: PointCloud = src.iter().map(|&p| p + Point3::new(0.2, 0.0, 0.0)).collect();
    let cfg = SfeConfig {
        iterations: 5,
        ..Default::default()
    };
    let a = estimate_flow_in::<f32>(&src, &tgt, &cfg).unwrap();
    let b = estimate_flow_in::<f64>(&src, &tgt, &cfg).unwrap();
    let gap = a.flow.iter().zip(b.flow.iter()).map(|(x, y)| (*x - *y).norm()).fold(0.0, f64::max);
    assert!(gap < 1e-3, "{gap}");
}

#[test]
fn negated_flow_undoes_warp() {
    let cloud = two_body_cloud(50, 2);
    let flow: FlowField = cloud.iter().map(|p| Point3::new(p.y * 0.1, -0.2, p.x * 0.05)).collect::<Vec<_>>().into();
    let back = apply_flow(&apply_flow(&cloud, &flow).unwrap(), &flow.negated()).unwrap();
    for (a, b) in back.iter().zip(cloud.iter()) {
        assert!(a.distance_squared(*b) < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_is_translation_invariant(
        seed in 0u64..1000,
        tx in -5.0f32..5.0, ty in -5.0f32..5.0, tz in -5.0f32..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cloud(&mut rng, 25, 1.0);
        let b = random_cloud(&mut rng, 30, 1.0);
        let t = Point3::new(tx, ty, tz);
        let shift = |c: &PointCloud| c.iter().map(|&p| p + t).collect::<PointCloud>();
        let d0 = chamfer_distance(&a, &b).unwrap();
        let d1 = chamfer_distance(&shift(&a), &shift(&b)).unwrap();
        // translated coordinates are rounded to f32
        prop_assert!((d0 - d1).abs() <= 1e-4 * d0.max(1.0));
        prop_assert!(chamfer_distance(&a, &b).unwrap() == chamfer_distance(&b, &a).unwrap());
    }
}
