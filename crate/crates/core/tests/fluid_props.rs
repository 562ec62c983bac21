use jackflow_core::fluid::{
    classify_two_node, dual_rate_vanishes, face_velocity, path_cost, polyline_cost, resolve_face,
    reverse_to_optimal, solve_dual_fluid, SNAP_TOLERANCE,
};
use jackflow_core::momenta::MomentaTable;
use jackflow_core::sampling::random_ergodic_network;
use jackflow_core::{build_dual, Error, FaceLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(rng: &mut ChaCha8Rng, k: usize) -> MomentaTable {
    let net = random_ergodic_network(k, (0.1, 0.9), rng);
    let t = net.solve_traffic().unwrap();
    MomentaTable::build(&net, &t).unwrap()
}

/// Targets that hit faces as well as the interior.
fn random_target(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let r: Vec<f64> = (0..k)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.05..2.0) })
            .collect();
        if r.iter().any(|&v| v > 0.0) {
            return r;
        }
    }
}

#[test]
fn cost_identity_and_monotone_faces() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..40 {
        let k = rng.random_range(1..=4);
        let t = table(&mut rng, k);
        let r = random_target(&mut rng, k);
        let traj = solve_dual_fluid(&r, &t).unwrap();
        assert!(traj.segments.len() <= 1 << k);
        let path = reverse_to_optimal(&traj, &t).unwrap();
        let c = path_cost(&path, t.network()).unwrap();
        assert!(
            (c - path.cost).abs() <= 1e-6 * (1.0 + path.cost.abs()),
            "r={r:?}: path cost {c} vs {}",
            path.cost
        );
        for w in traj.segments.windows(2) {
            assert!(w[0].face.is_subset_of(w[1].face));
            assert!((w[0].t_end - w[1].t_start).abs() == 0.0);
        }
        for s in &traj.segments {
            assert!(s.t_end > s.t_start);
            for l in s.face.indices() {
                assert_eq!(s.start_point[l], 0.0);
                assert_eq!(s.velocity[l], 0.0);
            }
            assert!(t.face(s.face).unwrap().essential);
        }
        let end = traj.segments.last().unwrap().end_point();
        assert!(end.iter().all(|v| v.abs() <= 1e-9 * r.iter().cloned().fold(0.0, f64::max)));
    }
}

#[test]
fn dual_local_cost_vanishes_along_fluid() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let k = rng.random_range(1..=4);
        let t = table(&mut rng, k);
        let dual = build_dual(t.network(), t.traffic());
        let r = random_target(&mut rng, k);
        let traj = solve_dual_fluid(&r, &t).unwrap();
        assert!(dual_rate_vanishes(&traj, &dual).unwrap() <= 1e-5);
    }
}

#[test]
fn comparison_polylines_never_beat_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..5 {
        let k = rng.random_range(1..=3);
        let t = table(&mut rng, k);
        let r = random_target(&mut rng, k);
        let bound: f64 = t.theta_star.iter().zip(&r).map(|(a, b)| a * b).sum();
        for _ in 0..20 {
            let legs = rng.random_range(1..=3);
            let mut vertices = vec![vec![0.0; k]];
            for _ in 1..legs {
                let v: Vec<f64> = (0..k)
                    .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..2.0) })
                    .collect();
                vertices.push(v);
            }
            vertices.push(r.clone());
            let durations: Vec<f64> = (0..legs).map(|_| rng.random_range(0.1..3.0)).collect();
            let c = polyline_cost(&vertices, &durations, t.network()).unwrap();
            assert!(c >= bound - 1e-6, "polyline {c} beats {bound}");
        }
    }
}

#[test]
fn inessential_source_face_is_left_at_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut seen = 0;
    for _ in 0..400 {
        let k = rng.random_range(2..=4);
        let t = table(&mut rng, k);
        let r = random_target(&mut rng, k);
        let traj = solve_dual_fluid(&r, &t).unwrap();
        if !traj.source_face_essential {
            seen += 1;
            let first = traj.segments[0].face;
            assert!(first.is_subset_of(traj.source_face) && first != traj.source_face);
            let err = face_velocity(traj.source_face, &t);
            assert!(matches!(err, Err(Error::InessentialFace { .. })));
        }
    }
    assert!(seen > 0, "no inessential source faces sampled");
}

#[test]
fn dual_service_rates_bracketed_on_essential_faces() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..30 {
        let k = rng.random_range(1..=5);
        let t = table(&mut rng, k);
        for j in FaceLabel::all_faces(k) {
            let f = t.face(j).unwrap();
            if !f.essential {
                continue;
            }
            for (l, rt) in j.indices().zip(&f.rho_tilde) {
                let d = t.traffic().nu[l] / rt;
                assert!(d >= t.traffic().nu[l] * (1.0 - 1e-12));
                assert!(d <= t.network().mu[l] * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn origin_resolves_to_full_face() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for k in 1..=5 {
        let t = table(&mut rng, k);
        assert_eq!(resolve_face(&vec![0.0; k], &t, SNAP_TOLERANCE).unwrap(), FaceLabel::full(k));
    }
}

#[test]
fn two_node_classification_matches_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut inessential = 0;
    for _ in 0..300 {
        let t = table(&mut rng, 2);
        let c = classify_two_node(&t).unwrap();
        if !c.x_axis_essential {
            inessential += 1;
            let traj = solve_dual_fluid(&[1.0, 0.0], &t).unwrap();
            let path = reverse_to_optimal(&traj, &t).unwrap();
            let faces: Vec<FaceLabel> = path.segments.iter().map(|s| s.face).collect();
            assert_eq!(faces, vec![FaceLabel::from_indices([0]), FaceLabel::EMPTY], "{c:?}");
        }
    }
    assert!(inessential > 0);
}
