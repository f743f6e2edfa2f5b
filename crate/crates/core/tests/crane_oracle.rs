use forestry_mpc::crane::*;
use forestry_mpc::sim::step_plant;
use nalgebra::{SymmetricEigen, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_q(rng: &mut ChaCha8Rng, p: &CraneParams) -> Vec7 {
    Vec7::from_fn(|i, _| {
        // keep the pendulum away from its ±1.2 rad limits
        let (lo, hi) = if i >= N_ACTUATED { (-0.8, 0.8) } else { (p.q_min[i], p.q_max[i]) };
        rng.gen_range(lo..hi)
    })
}

fn random_qd(rng: &mut ChaCha8Rng) -> Vec7 {
    Vec7::from_fn(|_, _| rng.gen_range(-0.6..0.6))
}

fn mass(p: &CraneParams, q: &Vec7) -> Mat7 {
    mass_matrix(p, q).full
}

fn potential(p: &CraneParams, q: &Vec7) -> f64 {
    forward_kinematics(p, q)
        .iter()
        .zip(&p.links)
        .map(|(pose, l)| -l.mass * p.gravity.dot(&(pose * nalgebra::Point3::from(l.com)).coords))
        .sum()
}

fn energy(p: &CraneParams, s: &CraneState) -> f64 {
    0.5 * s.qd.dot(&(mass(p, &s.q) * s.qd)) + potential(p, &s.q)
}

/// Fourth-order central difference of a matrix-valued function along `dir`.
fn directional(f: impl Fn(&Vec7) -> Mat7, q: &Vec7, dir: &Vec7, h: f64) -> Mat7 {
    let at = |s: f64| f(&(q + dir * s));
    (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h)
}

#[test]
fn gripper_jacobian_matches_central_differences() {
    let p = CraneParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let local = Vector3::new(0.0, 0.0, -1.2);
    for _ in 0..200 {
        let q = random_q(&mut rng, &p);
        let frames = joint_frames(&p, &q);
        let point = frames[6].to_world(&local);
        let jac = point_jacobian(&frames, 6, &point);
        let h = 1e-6;
        for j in 0..N_JOINTS {
            let mut e = Vec7::zeros();
            e[j] = h;
            let plus = joint_frames(&p, &(q + e))[6].to_world(&local);
            let minus = joint_frames(&p, &(q - e))[6].to_world(&local);
            let fd = (plus - minus) / (2.0 * h);
            assert!((fd - jac.column(j)).amax() < 1e-5, "joint {j}: {fd} vs {}", jac.column(j));
        }
    }
}

#[test]
fn mass_matrix_is_symmetric_positive_definite() {
    let p = CraneParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let q = Vec7::from_fn(|i, _| rng.gen_range(p.q_min[i]..=p.q_max[i]));
        let d = mass(&p, &q);
        assert!((d - d.transpose()).amax() < 1e-10);
        let min_eig = SymmetricEigen::new(d).eigenvalues.min();
        assert!(min_eig > 0.0, "min eigenvalue {min_eig} at {q}");
    }
}

#[test]
fn mass_matrix_columns_match_inverse_dynamics() {
    let p = CraneParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let q = random_q(&mut rng, &p);
        let d = mass(&p, &q);
        for j in 0..N_JOINTS {
            let mut a = Vec7::zeros();
            a[j] = 1.0;
            let col = inverse_dynamics(&p, &q, &Vec7::zeros(), &a, false);
            assert!((col - d.column(j)).amax() < 1e-9 * (1.0 + d.amax()));
        }
        let blocks = passive_blocks(&p, &q);
        assert!((blocks.d_p - mass_matrix(&p, &q).d_p()).amax() < 1e-9);
        assert!((blocks.d_m - mass_matrix(&p, &q).d_m()).amax() < 1e-9);
    }
}

/// Passive rows of `Ḋq̇ − ∂T/∂q + ∂V/∂q`, the Euler-Lagrange forces at zero
/// acceleration, all by finite differences of energies.
fn lagrangian_bias(p: &CraneParams, q: &Vec7, qd: &Vec7) -> Vec2 {
    let h = 1e-4;
    let d_dot = directional(|x| mass(p, x), q, qd, h);
    let mut out = d_dot * qd;
    for i in 0..N_JOINTS {
        let mut e = Vec7::zeros();
        e[i] = 1.0;
        let dd = directional(|x| mass(p, x), q, &e, h);
        let v = |s: f64| potential(p, &(q + e * s));
        let dv = (v(-2.0 * h) - v(2.0 * h) + 8.0 * (v(h) - v(-h))) / (12.0 * h);
        out[i] += -0.5 * qd.dot(&(dd * qd)) + dv;
    }
    Vec2::new(out[5], out[6])
}

#[test]
fn bias_forces_match_lagrangian_oracle() {
    let p = CraneParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let q = random_q(&mut rng, &p);
        let qd = random_qd(&mut rng);
        let b = bias_forces(&p, &q, &qd);
        let oracle = lagrangian_bias(&p, &q, &qd);
        let rel = (b - oracle).norm() / b.norm().max(1.0);
        assert!(rel < 1e-4, "bias {b} vs {oracle}");
        let rows = inverse_dynamics(&p, &q, &qd, &Vec7::zeros(), true);
        assert!((Vec2::new(rows[5], rows[6]) - b).amax() < 1e-9 * (1.0 + b.amax()));
    }
}

#[test]
fn bias_at_rest_is_passive_gravity() {
    let p = CraneParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let q = random_q(&mut rng, &p);
        let g = gravity_forces(&p, &q);
        assert!((bias_forces(&p, &q, &Vec7::zeros()) - Vec2::new(g[5], g[6])).amax() < 1e-12);
    }
}

#[test]
fn inertia_derivative_minus_twice_coriolis_is_skew() {
    let p = CraneParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let q = random_q(&mut rng, &p);
        let qd = random_qd(&mut rng);
        let d_dot = directional(|x| mass(&p, x), &q, &qd, 1e-3);
        // C(q, q̇)q̇ from the recursive Newton-Euler pass without gravity
        let c_qd = inverse_dynamics(&p, &q, &qd, &Vec7::zeros(), false);
        let power = qd.dot(&(d_dot * qd));
        let form = power - 2.0 * qd.dot(&c_qd);
        // Ḋ comes from differences of a matrix with entries near 10³ kg·m²
        assert!(form.abs() < 1e-8 * power.abs().max(1.0), "q̇ᵀ(Ḋ − 2C)q̇ = {form:e} against {power:e}");
    }
}

#[test]
fn free_swing_conserves_energy() {
    let p = CraneParams { passive_damping: 0.0, ..CraneParams::default() };
    let q_a = Vec5::new(0.4, 0.5, -0.8, 1.2, 0.3);
    let mut s = CraneState::at_rest(join_q(&q_a, &Vec2::new(0.35, -0.2)));
    s.qd[5] = 0.3;
    let e0 = energy(&p, &s);
    let rest = potential(&p, &join_q(&q_a, &passive_equilibrium(&p, &q_a)));
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        s = step_plant(&p, &s, &Vec5::zeros(), 1e-3).unwrap();
        worst = worst.max((energy(&p, &s) - e0).abs());
    }
    assert_eq!(s.q_a(), q_a, "actuated joints moved");
    // drift relative to the oscillation energy above the hanging rest pose
    assert!(worst / (e0 - rest) < 1e-5, "relative drift {:e}", worst / (e0 - rest));
}

#[test]
fn critically_damped_actuator_step_response() {
    let mut p = CraneParams::default();
    p.actuator_damping = Vec5::repeat(1.0);
    let w = p.actuator_omega[0];
    let q_a = Vec5::new(0.0, 0.4, -0.4, 1.0, 0.0);
    let mut s = CraneState::at_rest(join_q(&q_a, &passive_equilibrium(&p, &q_a)));
    let u = Vec5::new(1.0, 0.0, 0.0, 0.0, 0.0);
    let dt = 1e-3;
    for k in 1..=3000 {
        s = step_plant(&p, &s, &u, dt).unwrap();
        let t = k as f64 * dt;
        let analytic = 1.0 - (1.0 + w * t) * (-w * t).exp();
        assert!((s.qd[0] - analytic).abs() < 1e-4, "t = {t}: {} vs {analytic}", s.qd[0]);
    }
}

#[test]
fn rk4_converges_under_step_halving() {
    let p = CraneParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let start = CraneState {
            q: random_q(&mut rng, &p),
            qd: random_qd(&mut rng),
            qdd_a: Vec5::from_fn(|_, _| rng.gen_range(-0.3..0.3)),
        };
        let u = Vec5::from_fn(|i, _| rng.gen_range(-p.u_max[i]..p.u_max[i]));
        let run = |dt: f64, n: usize| (0..n).fold(start, |s, _| step_plant(&p, &s, &u, dt).unwrap());
        let coarse = run(1e-3, 1000);
        let fine = run(1e-4, 10_000);
        let err = (coarse.to_vector() - fine.to_vector()).amax();
        assert!(err < 1e-6, "dt halving difference {err:e}");
    }
}

#[test]
fn full_equilibrium_is_a_fixed_point() {
    let p = CraneParams::default();
    let q_a = Vec5::new(-0.7, 0.2, -0.5, 2.0, 1.0);
    let s = CraneState::at_rest(join_q(&q_a, &passive_equilibrium(&p, &q_a)));
    let dx = state_derivative(&p, &s, &Vec5::zeros()).unwrap();
    assert!(dx.amax() < 1e-10);
}

proptest! {
    #[test]
    fn actuator_jerk_superposes(
        a in prop::array::uniform15(-2.0..2.0f64),
        b in prop::array::uniform15(-2.0..2.0f64),
        alpha in -3.0..3.0f64,
    ) {
        let p = CraneParams::default();
        let split = |v: &[f64; 15]| (Vec5::from_column_slice(&v[0..5]), Vec5::from_column_slice(&v[5..10]), Vec5::from_column_slice(&v[10..15]));
        let (qa, aa, ua) = split(&a);
        let (qb, ab, ub) = split(&b);
        let combined = actuator_jerk(&p, &(qa + qb * alpha), &(aa + ab * alpha), &(ua + ub * alpha));
        let separate = actuator_jerk(&p, &qa, &aa, &ua) + actuator_jerk(&p, &qb, &ab, &ub) * alpha;
        prop_assert!((combined - separate).amax() < 1e-12 * (1.0 + combined.amax()));
    }

    #[test]
    fn pump_flow_is_positively_homogeneous(v in prop::array::uniform5(-1.0..1.0f64), alpha in 0.01..10.0f64) {
        let p = CraneParams::default();
        let qd = Vec5::from(v);
        let q = Vec5::zeros();
        let base = pump_flow(&p, &q, &qd);
        prop_assert!(base >= 0.0);
        prop_assert!((pump_flow(&p, &q, &(qd * alpha)) - alpha * base).abs() <= 1e-15 + 1e-12 * alpha * base);
    }
}
