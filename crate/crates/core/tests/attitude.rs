use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use startrack::attitude::{skew, ARCSEC_PER_RAD};
use startrack::simulator::{perturb, random_attitude, random_unit};
use startrack::{delta_c, principal_angle, propagate_quaternion, solve_wahba, AngularVelocity, Quaternion, RotationMatrix, UnitVec3};

const TOL: f64 = 1e-10;

fn unit() -> impl Strategy<Value = UnitVec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| UnitVec3::from_xyz(x, y, z).unwrap())
}

fn quat() -> impl Strategy<Value = Quaternion> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z, w)| x * x + y * y + z * z + w * w > 1e-3)
        .prop_map(|(x, y, z, w)| Quaternion::new(x, y, z, w).normalized())
}

fn max_abs(m: &Matrix3<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// Rodrigues' formula written out independently of the library.
fn rodrigues(a: &Vector3<f64>, phi: f64) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
    // Rotation of vectors by +phi about a; the attitude (frame) rotation is its transpose.
    (Matrix3::identity() + k * phi.sin() + k * k * (1.0 - phi.cos())).transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn rotation_matrices_are_orthonormal(q in quat()) {
        let c = q.to_rotation_matrix();
        prop_assert!(max_abs(&(c.matrix() * c.matrix().transpose() - Matrix3::identity())) < TOL);
        prop_assert!((c.matrix().determinant() - 1.0).abs() < TOL);
        prop_assert!(c.is_proper(TOL));
    }

    #[test]
    fn composition_matches_matrix_product(a in quat(), b in quat()) {
        let lhs = a.compose(&b).to_rotation_matrix();
        let rhs = a.to_rotation_matrix() * b.to_rotation_matrix();
        prop_assert!(max_abs(&(lhs.matrix() - rhs.matrix())) < TOL);
    }

    #[test]
    fn composition_is_associative(a in quat(), b in quat(), c in quat()) {
        let l = a.compose(&b).compose(&c).to_vector4();
        let r = a.compose(&b.compose(&c)).to_vector4();
        prop_assert!((l - r).amax() < TOL);
    }

    #[test]
    fn inverse_composes_to_identity(q in quat()) {
        let i = q.compose(&q.inverse()).to_vector4();
        prop_assert!((i - Quaternion::identity().to_vector4()).amax() < TOL);
    }

    #[test]
    fn matrix_quaternion_round_trip(q in quat()) {
        let back = Quaternion::from_rotation_matrix(&q.to_rotation_matrix());
        // Equal up to sign.
        prop_assert!((back.dot(&q).abs() - 1.0).abs() < TOL);
    }

    #[test]
    fn propagation_round_trip(q in quat(), a in unit(), rate in -0.5f64..0.5, dt in 0.0f64..20.0) {
        let w = AngularVelocity::new(a, rate);
        let fwd = propagate_quaternion(&q, &w, dt);
        let back = propagate_quaternion(&fwd, &w, -dt);
        prop_assert!((back.to_vector4() - q.to_vector4()).amax() < TOL);
        prop_assert!((fwd.norm() - 1.0).abs() < TOL);
    }

    #[test]
    fn propagation_is_additive_in_time(q in quat(), a in unit(), rate in -0.5f64..0.5, t1 in 0.0f64..10.0, t2 in 0.0f64..10.0) {
        let w = AngularVelocity::new(a, rate);
        let two = propagate_quaternion(&propagate_quaternion(&q, &w, t1), &w, t2);
        let one = propagate_quaternion(&q, &w, t1 + t2);
        prop_assert!((two.to_vector4() - one.to_vector4()).amax() < TOL);
    }

    #[test]
    fn delta_c_matches_rodrigues(a in unit(), phi in -3.1f64..3.1) {
        let d = delta_c(a.as_vector(), phi).unwrap();
        prop_assert!(max_abs(&(d.matrix() - rodrigues(a.as_vector(), phi))) < TOL);
        let explicit = Matrix3::identity() * phi.cos() + a.as_vector() * a.as_vector().transpose() * (1.0 - phi.cos())
            - skew(a.as_vector()) * phi.sin();
        prop_assert!(max_abs(&(d.matrix() - explicit)) < TOL);
    }

    #[test]
    fn delta_c_fixes_its_axis(a in unit(), phi in -3.1f64..3.1) {
        let d = delta_c(a.as_vector(), phi).unwrap();
        prop_assert!((d.apply(&a).as_vector() - a.as_vector()).amax() < TOL);
        prop_assert!((principal_angle(&RotationMatrix::identity(), &d) - phi.abs()).abs() < 1e-8);
    }

    #[test]
    fn propagation_agrees_with_delta_c(q in quat(), a in unit(), rate in 0.0f64..0.5, dt in 0.0f64..5.0) {
        // The closed-form propagation left-multiplies, so the axis is in the
        // body frame and the attitude advances as δC·C₀.
        let c0 = q.to_rotation_matrix();
        let via_delta = delta_c(a.as_vector(), rate * dt).unwrap() * c0;
        let via_quat = propagate_quaternion(&q, &AngularVelocity::new(a, rate), dt).to_rotation_matrix();
        prop_assert!(max_abs(&(via_delta.matrix() - via_quat.matrix())) < TOL);
    }

    #[test]
    fn principal_angle_is_symmetric(a in quat(), b in quat()) {
        let (ca, cb) = (a.to_rotation_matrix(), b.to_rotation_matrix());
        prop_assert!((principal_angle(&ca, &cb) - principal_angle(&cb, &ca)).abs() < 1e-8);
    }
}

#[test]
fn wahba_recovers_noiseless_attitude() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let c = random_attitude(&mut rng);
        let refs: Vec<UnitVec3> = (0..4).map(|_| random_unit(&mut rng)).collect();
        let obs: Vec<UnitVec3> = refs.iter().map(|r| c.apply(r)).collect();
        let sol = solve_wahba(&obs, &refs, &[1.0; 4]).unwrap();
        assert!(sol.quaternion.dot(&c.to_quaternion()).abs() > 1.0 - 1e-12);
        assert!(sol.cost < 1e-20);
    }
}

#[test]
fn wahba_cost_is_minimal_against_perturbed_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let c = random_attitude(&mut rng);
        let refs: Vec<UnitVec3> = (0..8).map(|_| random_unit(&mut rng)).collect();
        let obs: Vec<UnitVec3> = refs.iter().map(|r| perturb(&c.apply(r), 1e-3, &mut rng)).collect();
        let w: Vec<f64> = (0..8).map(|i| 0.5 + i as f64 * 0.25).collect();
        let sol = solve_wahba(&obs, &refs, &w).unwrap();
        let cost = |m: &RotationMatrix| -> f64 {
            obs.iter()
                .zip(&refs)
                .zip(&w)
                .map(|((b, r), wi)| 0.5 * wi * (b.as_vector() - m.apply(r).as_vector()).norm_squared())
                .sum()
        };
        assert!((cost(&sol.attitude()) - sol.cost).abs() < 1e-12);
        for _ in 0..200 {
            let d = delta_c(random_unit(&mut rng).as_vector(), 1e-4).unwrap();
            assert!(cost(&(d * sol.attitude())) >= sol.cost - 1e-15);
        }
    }
}

#[test]
fn wahba_is_invariant_to_weight_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = random_attitude(&mut rng);
    let refs: Vec<UnitVec3> = (0..6).map(|_| random_unit(&mut rng)).collect();
    let obs: Vec<UnitVec3> = refs.iter().map(|r| perturb(&c.apply(r), 1e-4, &mut rng)).collect();
    let w: Vec<f64> = (0..6).map(|i| 1.0 + i as f64).collect();
    let w7: Vec<f64> = w.iter().map(|x| 7.0 * x).collect();
    let a = solve_wahba(&obs, &refs, &w).unwrap();
    let b = solve_wahba(&obs, &refs, &w7).unwrap();
    assert!(a.quaternion.dot(&b.quaternion).abs() > 1.0 - 1e-12);
    assert!((b.cost - 7.0 * a.cost).abs() < 1e-12);
}

#[test]
fn arcsecond_conversion() {
    assert!((ARCSEC_PER_RAD * startrack::arcsec(1.0) - 1.0).abs() < 1e-12);
    assert!((startrack::arcsec(3600.0) - 1f64.to_radians()).abs() < 1e-15);
}
