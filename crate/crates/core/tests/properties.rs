use micp_core::bvh::closest_hit_brute;
use micp_core::mesh::{MeshBuilder, TriangleMesh};
use micp_core::registration::objective;
use micp_core::{
    cross_statistics, find_correspondences, merge_statistics, solve_umeyama, Bvh, CorrespondenceSet, Ray, Raycaster,
    Scan, SensorModel, SensorRig, SpcParams, Transform, Vec3,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn random_transform(rng: &mut ChaCha8Rng) -> Transform {
    let axis = random_vec(rng, 1.0);
    let angle = rng.random_range(-3.0..3.0);
    Transform::from_translation(random_vec(rng, 5.0)).compose(&Transform::from_axis_angle(axis, angle))
}

fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> CorrespondenceSet {
    let s: Vec<Vec3> = (0..n).map(|_| random_vec(rng, 10.0)).collect();
    let m: Vec<Vec3> = s.iter().map(|p| p + random_vec(rng, 0.5)).collect();
    CorrespondenceSet::from_pairs(s, m)
}

fn random_soup(rng: &mut ChaCha8Rng, faces: usize) -> TriangleMesh {
    let mut b = MeshBuilder::new();
    for _ in 0..faces {
        let c = random_vec(rng, 5.0);
        b.add_triangle(
            c + random_vec(rng, 1.0),
            c + random_vec(rng, 1.0),
            c + random_vec(rng, 1.0),
        );
    }
    b.build().unwrap()
}

fn is_rotation(t: &Transform) -> bool {
    let r = t.rotation_matrix();
    (r.transpose() * r - micp_core::Mat3::identity()).norm() < 1e-9 && (r.determinant() - 1.0).abs() < 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn default_merge_equals_concatenation(seed in any::<u64>(), sizes in prop::collection::vec(0usize..40, 1..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sets: Vec<CorrespondenceSet> = sizes.iter().map(|&n| random_pairs(&mut rng, n)).collect();
        let mut all = CorrespondenceSet::default();
        for s in &sets {
            all.extend(s);
        }
        let stats: Vec<_> = sets.iter().map(cross_statistics).collect();
        let merged = merge_statistics(&stats, None);
        if all.is_empty() {
            prop_assert!(merged.is_err());
        } else {
            let merged = merged.unwrap();
            let direct = cross_statistics(&all);
            prop_assert_eq!(merged.count, direct.count);
            prop_assert!((merged.covariance - direct.covariance).norm() < 1e-9 * (1.0 + direct.covariance.norm()));
            prop_assert!((merged.mean_scan - direct.mean_scan).norm() < 1e-9);
            prop_assert!((merged.mean_map - direct.mean_map).norm() < 1e-9);
        }
    }

    #[test]
    fn explicit_weights_are_scale_invariant(seed in any::<u64>(), w in prop::collection::vec(0.01f64..10.0, 3), k in 0.1f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats: Vec<_> = (0..3).map(|_| cross_statistics(&random_pairs(&mut rng, 20))).collect();
        let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
        let a = merge_statistics(&stats, Some(&w)).unwrap();
        let b = merge_statistics(&stats, Some(&scaled)).unwrap();
        prop_assert!((a.covariance - b.covariance).norm() < 1e-9 * (1.0 + a.covariance.norm()));
        prop_assert!((a.mean_map - b.mean_map).norm() < 1e-9);
    }

    #[test]
    fn solve_yields_proper_rotation(seed in any::<u64>(), n in 3usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corr = random_pairs(&mut rng, n);
        let delta = solve_umeyama(&cross_statistics(&corr)).unwrap();
        prop_assert!(is_rotation(&delta));
    }

    #[test]
    fn solve_recovers_exact_transform_of_centered_points(seed in any::<u64>(), n in 4usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_transform(&mut rng);
        let mut s: Vec<Vec3> = (0..n).map(|_| random_vec(&mut rng, 3.0)).collect();
        let mean = s.iter().sum::<Vec3>() / n as f64;
        s.iter_mut().for_each(|p| *p -= mean);
        let m = s.iter().map(|p| truth.apply(p)).collect();
        let corr = CorrespondenceSet::from_pairs(s, m);
        let stats = cross_statistics(&corr);
        let sv = stats.covariance.singular_values();
        // nearly collinear samples leave the rotation undetermined
        prop_assume!(sv[1] > 1e-3 * sv[0]);
        let delta = solve_umeyama(&stats).unwrap();
        let e = micp_core::pose_error(&delta, &truth);
        prop_assert!(e.translation_error < 1e-7 && e.rotation_error < 1e-7, "{:?}", e);
    }

    #[test]
    fn correction_never_increases_objective(seed in any::<u64>(), n in 3usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corr = random_pairs(&mut rng, n);
        let delta = solve_umeyama(&cross_statistics(&corr)).unwrap();
        let before = objective(&corr, &Transform::identity());
        let after = objective(&corr, &delta);
        prop_assert!(after <= before * (1.0 + 1e-12) + 1e-12, "{} > {}", after, before);
    }

    #[test]
    fn compose_inverse_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_transform(&mut rng);
        let b = random_transform(&mut rng);
        let p = random_vec(&mut rng, 10.0);
        let ab = a.compose(&b);
        prop_assert!((ab.apply(&p) - a.apply(&b.apply(&p))).norm() < 1e-9);
        prop_assert!((ab.inverse().apply(&ab.apply(&p)) - p).norm() < 1e-9);
        prop_assert!(is_rotation(&ab));
    }

    #[test]
    fn bvh_matches_brute_force(seed in any::<u64>(), faces in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = random_soup(&mut rng, faces);
        let bvh = Bvh::build(&mesh);
        for _ in 0..64 {
            let ray = Ray::new(random_vec(&mut rng, 7.0), random_vec(&mut rng, 1.0));
            let max_range = rng.random_range(0.5..20.0);
            prop_assert_eq!(bvh.closest_hit(&ray, max_range), closest_hit_brute(&mesh, &ray, max_range));
        }
    }

    #[test]
    fn spc_moves_points_along_the_hit_normal(seed in any::<u64>(), noise in 0.0f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = random_soup(&mut rng, 200);
        let bvh = Bvh::build(&mesh);
        let model = SensorModel::vlp16(36);
        let ranges = (0..model.ray_count())
            .map(|_| rng.random_range(0.5..8.0) + rng.random_range(-noise..=noise))
            .collect();
        let scan = Scan::new(&model, ranges).unwrap();
        let rig = SensorRig::new(model, random_transform(&mut rng)).unwrap();
        let pose = random_transform(&mut rng);
        let params = SpcParams { max_projective_distance: 2.0, ..SpcParams::default() };
        let corr = find_correspondences(&bvh, &rig, &scan, &pose, &params).unwrap();
        for i in 0..corr.len() {
            let (s, m, n, d) = (corr.scan_points[i], corr.map_points[i], corr.normals[i], corr.projective_distances[i]);
            prop_assert!(d.abs() <= 2.0);
            prop_assert!((n.norm() - 1.0).abs() < 1e-9);
            prop_assert!(((s - m) - n * d).norm() < 1e-9);
        }
    }
}

#[test]
fn brute_force_caster_reports_face_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mesh = random_soup(&mut rng, 17);
    assert_eq!(micp_core::BruteForce(&mesh).face_count(), 17);
    assert_eq!(Bvh::build(&mesh).face_count(), 17);
}
