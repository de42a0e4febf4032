use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempo_guard_core::attacksim::{generate_scene, two_body_cloud, ObjectTemplate, Pose, SceneObject, SceneSpec};
use tempo_guard_core::sceneflow::{normalized_chamfer_distance, FlowField, SfeConfig};
use tempo_guard_core::synthesis::{propagate_flow, warp_to_incoming, HistoryBuffer, Synthesis, SynthesisConfig};
use tempo_guard_core::voxel::voxelize;
use tempo_guard_core::{Frame, Point3, PointCloud};

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    (0..n)
        .map(|_| Point3::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..1.0)))
        .collect()
}

#[test]
fn propagation_matches_direct_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let older = random_cloud(&mut rng, 60);
        let newer = random_cloud(&mut rng, 40);
        let flow: FlowField = (0..40)
            .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0))
            .collect::<Vec<_>>()
            .into();
        let side = 0.3;
        let origin = Point3::ZERO;
        let og = voxelize(&older, side, origin).unwrap();
        let ng = voxelize(&newer, side, origin).unwrap();
        let (got, stale) = propagate_flow(&older, &og, &ng, &flow).unwrap();

        let cell = |p: Point3| {
            [
                (p.x as f64 / side).floor() as i64,
                (p.y as f64 / side).floor() as i64,
                (p.z as f64 / side).floor() as i64,
            ]
        };
        let voxel_mean = |c: [i64; 3]| -> Option<[f64; 3]> {
            let idx: Vec<usize> = (0..newer.len()).filter(|&j| cell(newer[j]) == c).collect();
            (!idx.is_empty()).then(|| {
                let mut m = [0.0; 3];
                for &j in &idx {
                    let v = flow[j].to_f64();
                    for a in 0..3 {
                        m[a] += v[a] / idx.len() as f64;
                    }
                }
                m
            })
        };
        for i in 0..older.len() {
            let c = cell(older[i]);
            let expect = voxel_mean(c).or_else(|| {
                let mut acc = [0.0; 3];
                let mut n = 0;
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if (dx, dy, dz) == (0, 0, 0) {
                                continue;
                            }
                            if let Some(m) = voxel_mean([c[0] + dx, c[1] + dy, c[2] + dz]) {
                                for a in 0..3 {
                                    acc[a] += m[a];
                                }
                                n += 1;
                            }
                        }
                    }
                }
                (n > 0).then(|| acc.map(|v| v / n as f64))
            });
            match expect {
                Some(e) => {
                    assert!(!stale[i]);
                    assert!(got[i].distance_squared(Point3::from_f64(e)) < 1e-10);
                }
                None => {
                    assert!(stale[i]);
                    assert_eq!(got[i], Point3::ZERO);
                }
            }
        }
    }
}

fn static_frames(n: usize) -> Vec<Frame> {
    let spec = SceneSpec {
        duration_frames: n,
        objects: vec![SceneObject {
            template: ObjectTemplate::CAR,
            pose: Pose::new(12.0, -3.0, 0.4),
            velocity: Point3::ZERO,
            points_per_frame: 120,
        }],
        ..SceneSpec::default()
    };
    generate_scene(&spec).unwrap().0
}

#[test]
fn static_scene_synthesis_stays_put() {
    let frames = static_frames(6);
    let cfg = SynthesisConfig {
        capacity: 5,
        ..Default::default()
    };
    let buf = HistoryBuffer::from_frames(&frames[..5], cfg).unwrap();
    assert_eq!(buf.frame_indices(), vec![0, 1, 2, 3, 4]);
    let synth = buf.synthesis();
    let stale = synth.stale.iter().filter(|s| **s).count();
    assert!(stale * 100 <= synth.len());
    let latest = cfg.thin(&frames[4].cloud).unwrap();
    let cd = normalized_chamfer_distance(&synth.cloud, &latest).unwrap();
    // resampling noise between two raw frames sets the scale
    let noise = normalized_chamfer_distance(&cfg.thin(&frames[3].cloud).unwrap(), &latest).unwrap();
    assert!(cd < 1.5 * noise, "static synthesis drifted: {cd} vs {noise}");
}

#[test]
fn moving_object_history_lands_on_newest_frame() {
    let spec = SceneSpec {
        duration_frames: 3,
        objects: vec![SceneObject {
            template: ObjectTemplate::CAR,
            pose: Pose::new(11.0, 0.0, 0.0),
            velocity: Point3::new(4.0, 0.0, 0.0),
            points_per_frame: 150,
        }],
        noise_sigma: 0.0,
        ..SceneSpec::default()
    };
    let frames = generate_scene(&spec).unwrap().0;
    let cfg = SynthesisConfig {
        capacity: 3,
        ..Default::default()
    };
    let buf = HistoryBuffer::from_frames(&frames, cfg).unwrap();
    let newest = cfg.thin(&frames[2].cloud).unwrap();
    let warped = buf.warped_frame(0).unwrap();
    let raw = cfg.thin(&frames[0].cloud).unwrap();
    // compare on the object only; the ground is static
    let above = |c: &PointCloud| c.iter().copied().filter(|p| p.z > 0.15).collect::<PointCloud>();
    let before = normalized_chamfer_distance(&above(&raw), &above(&newest)).unwrap();
    let after = normalized_chamfer_distance(&above(warped), &above(&newest)).unwrap();
    assert!(after < 0.7 * before, "warping did not help: {before} -> {after}");
}

fn shifted_frames(count: usize) -> Vec<Frame> {
    let base = two_body_cloud(300, 11);
    (0..count)
        .map(|k| {
            let d = Point3::new(0.05 * k as f32, 0.0, 0.0);
            Frame::new(k as u32, k as f64 * 0.1, base.iter().map(|&p| p + d).collect())
        })
        .collect()
}

#[test]
fn one_solve_per_advance() {
    let sfe = SfeConfig {
        iterations: 3,
        hidden_width: 32,
        ..Default::default()
    };
    for l in [2usize, 10, 15] {
        let frames = shifted_frames(l + 4);
        let cfg = SynthesisConfig {
            capacity: l,
            sfe,
            ..Default::default()
        };
        let mut buf = HistoryBuffer::new(&frames[0], cfg).unwrap();
        assert_eq!(buf.solve_count(), 0);
        for (k, f) in frames[1..].iter().enumerate() {
            let before = buf.solve_count();
            buf.advance(f).unwrap();
            assert_eq!(buf.solve_count() - before, 1, "L={l}, advance {k}");
            assert_eq!(buf.len(), (k + 2).min(l));
        }
    }
}

#[test]
fn warp_onto_itself_is_identity() {
    let cloud = two_body_cloud(300, 12);
    let n = cloud.len();
    let s = Synthesis {
        cloud: cloud.clone(),
        source_frame: vec![0; n],
        stale: vec![false; n],
    };
    let exact = SynthesisConfig {
        warp_fit_voxel: None,
        ..Default::default()
    };
    let w = warp_to_incoming(&s, &cloud, &exact).unwrap();
    assert!(w.flow.max_norm() < 1e-6, "{}", w.flow.max_norm());
    // fitting on a thinned copy leaves a small residual motion
    let w = warp_to_incoming(&s, &cloud, &SynthesisConfig::default()).unwrap();
    assert!(w.flow.max_norm() < 0.05, "{}", w.flow.max_norm());
    assert_eq!(w.synthesis.source_frame, s.source_frame);
    assert!(warp_to_incoming(&Synthesis::default(), &cloud, &SynthesisConfig::default()).is_err());
}

#[test]
fn without_stale_drops_flagged_points() {
    let s = Synthesis {
        cloud: vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)].into(),
        source_frame: vec![0, 1, 1],
        stale: vec![false, true, false],
    };
    let kept = s.without_stale();
    assert_eq!(kept.len(), 2);
    assert_eq!(kept.source_frame, vec![0, 1]);
    assert!(kept.stale.iter().all(|v| !v));
}
