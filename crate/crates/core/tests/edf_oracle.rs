use forestry_mpc::edf::{compute_edf_bruteforce, VoxelEdf, VoxelGrid};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_matches_bruteforce(edf: &VoxelEdf) {
    let oracle = compute_edf_bruteforce(edf.grid(), edf.d_max()).unwrap();
    for (i, (a, b)) in edf.distances().iter().zip(oracle.distances()).enumerate() {
        assert!(a == b, "voxel {:?}: incremental {a} vs brute force {b}", edf.grid().unlinear(i));
    }
}

fn random_box(rng: &mut ChaCha8Rng, grid: &VoxelGrid, max_side: f64) -> (Vector3<f64>, Vector3<f64>) {
    let hi_corner = grid.max_corner();
    let lo = Vector3::from_fn(|a, _| rng.gen_range(grid.origin()[a] - 0.2..hi_corner[a]));
    let side = Vector3::from_fn(|_, _| rng.gen_range(0.0..max_side));
    (lo, lo + side)
}

#[test]
fn single_insert_into_empty_map() {
    let grid = VoxelGrid::new(Vector3::zeros(), 0.1, [16, 16, 16]).unwrap();
    let mut edf = VoxelEdf::new(grid, 2.0).unwrap();
    let c = edf.grid().center([7, 3, 11]);
    let changed = edf.set_box_obstacle(&c, &c, true);
    assert_eq!(changed.len(), 1);
    assert_matches_bruteforce(&edf);
}

/// Two hundred random box insertions and deletions on a 32³ grid, checked
/// against the brute-force field after every operation.
#[test]
fn random_insert_delete_sequence_on_32_cube() {
    let grid = VoxelGrid::new(Vector3::new(-1.0, 0.5, 0.0), 0.1, [32, 32, 32]).unwrap();
    let mut edf = VoxelEdf::new(grid, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for step in 0..200 {
        let (lo, hi) = random_box(&mut rng, edf.grid(), 0.8);
        let insert = step < 10 || rng.gen_bool(0.6);
        edf.set_box_obstacle(&lo, &hi, insert);
        assert_matches_bruteforce(&edf);
    }
}

/// Two hundred independent randomized sequences, each a short mix of box and
/// single-voxel edits with a shorter truncation radius.
#[test]
fn many_random_sequences_on_32_cube() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let grid = VoxelGrid::new(Vector3::zeros(), 0.1, [32, 32, 32]).unwrap();
        let d_max = rng.gen_range(0.25..0.9);
        let mut edf = VoxelEdf::new(grid, d_max).unwrap();
        for _ in 0..4 {
            if rng.gen_bool(0.7) {
                let (lo, hi) = random_box(&mut rng, edf.grid(), 0.6);
                let insert = rng.gen_bool(0.7);
                edf.set_box_obstacle(&lo, &hi, insert);
            } else {
                let v = [rng.gen_range(0..32), rng.gen_range(0..32), rng.gen_range(0..32)];
                let flip = !edf.grid().is_occupied(v);
                edf.grid_mut().set(v, flip);
                edf.update_incremental(&[v]);
            }
            assert_matches_bruteforce(&edf);
        }
    }
}

fn small_grid_with_boxes(seed: u64, boxes: usize) -> VoxelEdf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = VoxelGrid::new(Vector3::new(0.3, -0.2, 0.1), 0.1, [14, 12, 10]).unwrap();
    let mut edf = VoxelEdf::new(grid, 0.7).unwrap();
    for _ in 0..boxes {
        let (lo, hi) = random_box(&mut rng, edf.grid(), 0.4);
        edf.set_box_obstacle(&lo, &hi, true);
    }
    edf
}

fn distance_to_cell_plane(edf: &VoxelEdf, p: &Vector3<f64>) -> f64 {
    let g = edf.grid();
    (0..3)
        .map(|a| {
            let s = (p[a] - g.origin()[a]) / g.resolution() - 0.5;
            (s - s.round()).abs() * g.resolution()
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_never_increases_and_removing_never_decreases(seed in 0u64..10_000, add in any::<bool>()) {
        let mut edf = small_grid_with_boxes(seed, 3);
        let before = edf.distances().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let (lo, hi) = random_box(&mut rng, edf.grid(), 0.5);
        edf.set_box_obstacle(&lo, &hi, add);
        for (b, a) in before.iter().zip(edf.distances()) {
            if add {
                prop_assert!(a <= b);
            } else {
                prop_assert!(a >= b);
            }
        }
    }

    #[test]
    fn field_is_bounded_zero_on_obstacles_and_lipschitz(seed in 0u64..10_000) {
        let edf = small_grid_with_boxes(seed, 3);
        let g = edf.grid();
        for i in 0..g.len() {
            let d = edf.distances()[i];
            prop_assert!((0.0..=edf.d_max()).contains(&d));
            prop_assert_eq!(d == 0.0, g.is_occupied(g.unlinear(i)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..300 {
            let a = rng.gen_range(0..g.len());
            let b = rng.gen_range(0..g.len());
            let gap = (g.center(g.unlinear(a)) - g.center(g.unlinear(b))).norm();
            prop_assert!((edf.distances()[a] - edf.distances()[b]).abs() <= gap + 1e-12);
        }
    }

    #[test]
    fn interpolant_is_continuous_across_cell_faces(seed in 0u64..10_000) {
        let edf = small_grid_with_boxes(seed, 2);
        let g = edf.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let axis = rng.gen_range(0..3);
            let mut p = Vector3::from_fn(|a, _| {
                rng.gen_range(g.origin()[a] + g.resolution()..g.max_corner()[a] - g.resolution())
            });
            // snap onto a plane through voxel centers, which bounds interpolation cells
            let k = ((p[axis] - g.origin()[axis]) / g.resolution() - 0.5).round();
            p[axis] = g.origin()[axis] + (k + 0.5) * g.resolution();
            let mut below = p;
            below[axis] -= 1e-13;
            let mut above = p;
            above[axis] += 1e-13;
            prop_assert!((edf.query_distance(&below) - edf.query_distance(&above)).abs() < 1e-12);
        }
    }
}

#[test]
fn gradient_matches_central_differences_at_interior_points() {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 1000 {
        let edf = small_grid_with_boxes(seed, 3);
        seed += 1;
        let g = edf.grid();
        for _ in 0..100 {
            let p = Vector3::from_fn(|a, _| {
                rng.gen_range(g.origin()[a] + g.resolution()..g.max_corner()[a] - g.resolution())
            });
            if distance_to_cell_plane(&edf, &p) < 2.0 * h {
                continue;
            }
            let grad = edf.query_gradient(&p);
            for a in 0..3 {
                let mut e = Vector3::zeros();
                e[a] = h;
                let fd = (edf.query_distance(&(p + e)) - edf.query_distance(&(p - e))) / (2.0 * h);
                assert!((fd - grad[a]).abs() < 1e-4, "axis {a} at {p:?}: fd {fd} vs {}", grad[a]);
            }
            checked += 1;
        }
    }
}
