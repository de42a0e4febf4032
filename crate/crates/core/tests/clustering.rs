use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempo_guard_core::{dbscan, same_cluster, ClusterLabeling, ClusterParams, Point3, PointCloud};

/// O(n^2) DBSCAN with the same border rule: a non-core point joins the
/// cluster of its lowest-index core neighbor.
fn brute_dbscan(cloud: &PointCloud, p: ClusterParams) -> Vec<Option<usize>> {
    let n = cloud.len();
    let eps2 = p.eps * p.eps;
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| cloud[i].distance_squared(cloud[j]) <= eps2).collect())
        .collect();
    let core: Vec<bool> = adj.iter().map(|r| r.iter().filter(|&&b| b).count() >= p.min_pts).collect();
    // union-find over core points
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && adj[i][j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut labels: Vec<Option<usize>> = (0..n)
        .map(|i| core[i].then(|| find(&mut parent, i)))
        .collect();
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n).find(|&j| adj[i][j] && core[j]).and_then(|j| labels[j]);
        }
    }
    labels
}

/// Relabels clusters in order of first appearance.
fn canonical(labels: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|id| {
                let next = map.len();
                *map.entry(id).or_insert(next)
            })
        })
        .collect()
}

/// Blobs of varying density plus uniform clutter, at roughly LiDAR spacing.
fn instance(seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=300);
    let blobs = rng.random_range(1..=5);
    let centres: Vec<Point3> = (0..blobs)
        .map(|_| Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..1.0)))
        .collect();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.25) {
                Point3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(0.0..1.5))
            } else {
                let c = centres[rng.random_range(0..blobs)];
                let s = rng.random_range(0.05..0.6);
                c + Point3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
            }
        })
        .collect()
}

#[test]
fn matches_brute_force_on_100_instances() {
    let t0 = Instant::now();
    let mut clustered = 0;
    for seed in 0..100 {
        let cloud = instance(seed);
        assert!(cloud.len() <= 300);
        for p in [ClusterParams::DENSE, ClusterParams::SPARSE] {
            let fast = dbscan(&cloud, p).unwrap();
            let slow = brute_dbscan(&cloud, p);
            assert_eq!(canonical(fast.labels()), canonical(&slow), "seed {seed}, {p:?}");
            clustered += fast.num_clustered();
        }
    }
    assert!(clustered > 0, "instances never produce clusters");
    assert!(t0.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn ids_follow_lowest_core_index() {
    let l = dbscan(&instance(7), ClusterParams::SPARSE).unwrap();
    assert_eq!(canonical(l.labels()), l.labels().to_vec());
}

#[test]
fn core_partition_ignores_point_order() {
    for seed in 0..20 {
        let cloud = instance(seed);
        let n = cloud.len();
        let p = ClusterParams::SPARSE;
        let a = dbscan(&cloud, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let b = dbscan(&cloud.select(&perm), p).unwrap();
        assert_eq!(a.num_clusters(), b.num_clusters());
        // core points are labeled identically up to renaming; border points may switch
        let eps2 = p.eps * p.eps;
        let is_core = |i: usize| (0..n).filter(|&j| cloud[i].distance_squared(cloud[j]) <= eps2).count() >= p.min_pts;
        let core: Vec<usize> = (0..n).filter(|&i| is_core(i)).collect();
        let pos: Vec<usize> = {
            let mut inv = vec![0; n];
            for (k, &i) in perm.iter().enumerate() {
                inv[i] = k;
            }
            inv
        };
        for &i in &core {
            for &j in &core {
                assert_eq!(
                    same_cluster(&a, i, j).unwrap(),
                    same_cluster(&b, pos[i], pos[j]).unwrap()
                );
            }
        }
        for i in 0..n {
            assert_eq!(a.label(i).is_some(), b.label(pos[i]).is_some());
        }
    }
}

#[test]
fn larger_eps_never_adds_outliers() {
    for seed in 0..20 {
        let cloud = instance(seed);
        let mut prev = usize::MAX;
        for eps in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let l = dbscan(&cloud, ClusterParams::new(eps, 9).unwrap()).unwrap();
            assert!(l.num_outliers() <= prev);
            prev = l.num_outliers();
        }
    }
}

#[test]
fn same_cluster_is_an_equivalence_on_clustered_points() {
    let l: ClusterLabeling = dbscan(&instance(3), ClusterParams::DENSE).unwrap();
    for i in 0..l.len() {
        assert_eq!(same_cluster(&l, i, i).unwrap(), l.label(i).is_some());
    }
    assert!(same_cluster(&l, 0, l.len()).is_err());
}
