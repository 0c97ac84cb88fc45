use impactfit_core::dynamics::{apply_impulse, cuboid_inertia, integrate_pose, momentum_from_angular_velocity};
use impactfit_core::io::{from_json, to_json};
use impactfit_core::residuals::{residual_impulse, residual_momentum, Body, UnknownLayout as L};
use impactfit_core::simulator::{add_noise, detect_contact_obb, impulse_magnitude};
use impactfit_core::{AnnotationFile, BodyObservations, BodyState, Impulse, Observation, ObservationSet, Quatf, Vec3};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn quat() -> impl Strategy<Value = Quatf> {
    (vec3(1.0), -3.0..3.0f64).prop_map(|(a, t)| {
        let axis = if a.norm() < 1e-3 { Vec3::new(0.0, 1.0, 0.0) } else { a };
        Quatf::from_axis_angle(axis, t)
    })
}

fn dims() -> impl Strategy<Value = Vec3> {
    (0.1..2.0f64, 0.1..2.0f64, 0.1..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

prop_compose! {
    fn body()(p in vec3(5.0), q in quat(), v in vec3(4.0), w in vec3(6.0), mass in 0.2..5.0f64, d in dims()) -> BodyState {
        let inertia0 = cuboid_inertia(d, mass).unwrap();
        let k = momentum_from_angular_velocity(q, inertia0, w).unwrap();
        BodyState { p, q, v, k, mass, inertia0 }
    }
}

fn total_momenta(s: &[BodyState]) -> (Vec3, Vec3) {
    s.iter().fold((Vec3::zero(), Vec3::zero()), |(l, a), b| {
        (l + b.linear_momentum(), a + b.angular_momentum_about_origin())
    })
}

fn track() -> impl Strategy<Value = Vec<Observation>> {
    prop::collection::vec((1u32..20, vec3(10.0), quat()), 2..6).prop_map(|v| {
        let mut frame = 0.0;
        v.into_iter()
            .map(|(step, p, q)| {
                frame += f64::from(step);
                Observation { frame, p, q }
            })
            .collect()
    })
}

fn observations() -> impl Strategy<Value = ObservationSet> {
    (20.0..240.0f64, dims(), dims(), track(), track()).prop_map(|(fps, da, db, oa, ob)| ObservationSet {
        fps,
        bodies: vec![
            BodyObservations { name: "a".into(), dims: da, observations: oa },
            BodyObservations { name: "b".into(), dims: db, observations: ob },
        ],
    })
}

proptest! {
    #[test]
    fn impulses_conserve_momenta(a in body(), b in body(), jn in vec3(10.0), x_c in vec3(5.0)) {
        let (a2, b2) = apply_impulse(&a, &b, &Impulse { jn, x_c });
        let (l0, h0) = total_momenta(&[a, b]);
        let (l1, h1) = total_momenta(&[a2, b2]);
        let scale = 1.0 + l0.norm() + h0.norm() + jn.norm() * (1.0 + x_c.norm());
        prop_assert!((l1 - l0).norm() <= 1e-12 * scale);
        prop_assert!((h1 - h0).norm() <= 1e-12 * scale);
    }

    #[test]
    fn impulse_magnitude_round_trips_restitution(a in body(), b in body(), n in vec3(1.0), x_c in vec3(1.0), c in 0.0..1.0f64) {
        prop_assume!(n.norm() > 0.1);
        let n = n.normalize();
        let rel = |a: &BodyState, b: &BodyState| {
            (impactfit_core::dynamics::point_velocity(a, x_c) - impactfit_core::dynamics::point_velocity(b, x_c)).dot(n)
        };
        let before = rel(&a, &b);
        prop_assume!(before < -1e-3);
        let j = impulse_magnitude(&a, &b, n, x_c, c).unwrap();
        let (a2, b2) = apply_impulse(&a, &b, &Impulse { jn: n * j, x_c });
        prop_assert!((-rel(&a2, &b2) / before - c).abs() < 1e-8);
    }

    #[test]
    fn integrated_poses_stay_unit(q in quat(), w in vec3(10.0), d in dims(), span in -40.0..40.0f64, substep in 0.05..1.0f64) {
        let inertia0 = cuboid_inertia(d, 1.0).unwrap();
        let k = momentum_from_angular_velocity(q, inertia0, w).unwrap();
        let q1 = integrate_pose(q, k, inertia0, span, substep, 60.0).unwrap();
        prop_assert!((q1.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_contact_is_symmetric(a in body(), b in body(), da in dims(), db in dims()) {
        let ab = detect_contact_obb(&a, da, &b, db);
        let ba = detect_contact_obb(&b, db, &a, da);
        prop_assert_eq!(ab.is_some(), ba.is_some());
        if let (Some(ab), Some(ba)) = (ab, ba) {
            prop_assert!((ab.depth - ba.depth).abs() < 1e-9);
            prop_assert!((ab.n + ba.n).norm() < 1e-9);
        }
    }

    #[test]
    fn noise_is_bounded_and_seeded(obs in observations(), level in 0.0..0.2f64, seed in any::<u64>()) {
        let noisy = add_noise(&obs, level, seed).unwrap();
        prop_assert_eq!(&noisy, &add_noise(&obs, level, seed).unwrap());
        let bound = level * obs.position_extent() * (1.0 + 1e-12);
        for (b0, b1) in obs.bodies.iter().zip(&noisy.bodies) {
            for (o0, o1) in b0.observations.iter().zip(&b1.observations) {
                let d = o1.p - o0.p;
                prop_assert!(d.x.abs() <= bound && d.y.abs() <= bound && d.z.abs() <= bound);
                prop_assert!((o1.q.norm() - 1.0).abs() < 1e-12);
                prop_assert_eq!(o1.frame, o0.frame);
            }
        }
    }

    #[test]
    fn annotations_round_trip(obs in observations()) {
        let text = to_json(&AnnotationFile::new(&obs)).unwrap();
        let back: AnnotationFile = from_json(&text).unwrap();
        prop_assert_eq!(back.observations(), obs);
    }

    #[test]
    fn physics_residuals_ignore_world_translation(
        raw in prop::collection::vec(-2.0..2.0f64, L::LEN),
        mass in 0.1..5.0f64,
        t in vec3(50.0),
    ) {
        let mut x = raw;
        x[L::MASS_RATIO] = mass;
        let mut moved = x.clone();
        for i in [L::offset(Body::A), L::offset(Body::B), L::COLLISION_POINT] {
            moved[i] += t.x;
            moved[i + 1] += t.y;
            moved[i + 2] += t.z;
        }
        let before = residual_momentum(&x, 30.0).into_iter().chain(residual_impulse(&x, 30.0));
        let after = residual_momentum(&moved, 30.0).into_iter().chain(residual_impulse(&moved, 30.0));
        for (r0, r1) in before.zip(after) {
            prop_assert!((r0 - r1).abs() <= 1e-9 * (1.0 + r0.abs()) * (1.0 + t.norm()));
        }
    }
}
