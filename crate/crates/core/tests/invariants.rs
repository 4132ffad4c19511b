use std::sync::Arc;

use geoint::actiongroupoid::{
    action_hamiltonian_step, action_lagrangian_step, action_poisson_tensor, heavy_top_model, ActionState,
};
use geoint::algebra::{random_rotation, AlgebraDescriptor};
use geoint::liepoisson::{lp_hamiltonian_step, lp_lagrangian_step, LPState, RigidBody};
use geoint::retractions::{cayley_retraction, exp_retraction, RetractionMap};
use geoint::solver::SolverConfig;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn so3() -> Arc<AlgebraDescriptor> {
    Arc::new(AlgebraDescriptor::so3())
}

fn tau(cay: bool) -> RetractionMap {
    if cay {
        cayley_retraction(so3()).unwrap()
    } else {
        exp_retraction(so3()).unwrap()
    }
}

fn vec3(scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::array::uniform3(-scale..scale).prop_map(|a| DVector::from_column_slice(&a))
}

fn solver() -> SolverConfig {
    SolverConfig::default().with_tol(1e-14)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_satisfies_jacobi(a in vec3(2.0), b in vec3(2.0), c in vec3(2.0)) {
        let alg = AlgebraDescriptor::se2();
        let br = |x: &DVector<f64>, y: &DVector<f64>| alg.bracket(x, y).unwrap();
        let j = br(&a, &br(&b, &c)) + br(&b, &br(&c, &a)) + br(&c, &br(&a, &b));
        prop_assert!(j.amax() < 1e-12);
        let alg = AlgebraDescriptor::so3();
        let br = |x: &DVector<f64>, y: &DVector<f64>| alg.bracket(x, y).unwrap();
        let j = br(&a, &br(&b, &c)) + br(&b, &br(&c, &a)) + br(&c, &br(&a, &b));
        prop_assert!(j.amax() < 1e-12);
    }

    #[test]
    fn coadjoint_is_dual_to_adjoint(seed in any::<u64>(), mu in vec3(3.0), xi in vec3(3.0)) {
        let alg = AlgebraDescriptor::so3();
        let g = random_rotation(&mut ChaCha8Rng::seed_from_u64(seed));
        let lhs = alg.coadjoint(&g, &mu).unwrap().dot(&xi);
        let rhs = mu.dot(&alg.adjoint(&g, &xi).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let ad_star = alg.ad_star(&xi, &mu).unwrap().dot(&mu);
        prop_assert!(ad_star.abs() < 1e-12);
    }

    #[test]
    fn adjoint_retraction_is_an_involution(w in vec3(1.5), cay in any::<bool>()) {
        let t = tau(cay);
        let back = t.adjoint().adjoint();
        let d = t.evaluate(&w).unwrap().matrix() - back.evaluate(&w).unwrap().matrix();
        prop_assert!(d.amax() < 1e-14);
        let sym = t.adjoint().evaluate(&w).unwrap().matrix() - t.evaluate(&w).unwrap().matrix();
        prop_assert!(sym.amax() < 1e-12);
    }

    #[test]
    fn zero_step_is_the_identity(mu in vec3(2.0), cay in any::<bool>()) {
        let rb = RigidBody::new([1.0, 2.0, 3.0]).unwrap();
        let s = LPState::new(so3(), mu.clone()).unwrap();
        let o = lp_hamiltonian_step(&rb, &s, 0.0, &tau(cay), &solver()).unwrap();
        prop_assert!((o.state.mu() - &mu).amax() < 1e-15);
    }

    #[test]
    fn lie_poisson_steps_keep_the_casimir(mu in vec3(2.0), h in 0.001f64..0.2, cay in any::<bool>()) {
        let rb = RigidBody::new([1.0, 2.0, 3.0]).unwrap();
        let t = tau(cay);
        let c0 = mu.norm_squared();
        let mut s = LPState::new(so3(), mu.clone()).unwrap();
        let mut l = s.clone();
        for _ in 0..20 {
            s = lp_hamiltonian_step(&rb, &s, h, &t, &solver()).unwrap().state;
            l = lp_lagrangian_step(&rb, &l, h, &t, &solver()).unwrap().state;
        }
        prop_assert!((s.mu().norm_squared() - c0).abs() <= 1e-12 * c0.max(1.0));
        prop_assert!((l.mu().norm_squared() - c0).abs() <= 1e-12 * c0.max(1.0));
        prop_assert!((s.mu() - l.mu()).amax() < 1e-10);
    }

    #[test]
    fn heavy_top_keeps_its_casimirs(q in vec3(1.0), mu in vec3(1.0), h in 0.001f64..0.05, cay in any::<bool>()) {
        prop_assume!(q.norm() > 0.1);
        let top = heavy_top_model([1.0, 2.0, 3.0], 1.0, 9.81, 0.1, [0.0, 0.0, 1.0]).unwrap();
        let t = tau(cay);
        let (c1, c2) = (q.norm_squared(), q.dot(&mu));
        let mut s = ActionState::new(so3(), q, mu).unwrap();
        for _ in 0..20 {
            s = action_hamiltonian_step(&top, &s, h, &t, &solver()).unwrap().state;
        }
        prop_assert!((s.q.norm_squared() - c1).abs() < 1e-12);
        prop_assert!((s.q.dot(s.mu()) - c2).abs() < 1e-12);
    }

    #[test]
    fn heavy_top_lagrangian_matches_hamiltonian(q in vec3(1.0), mu in vec3(1.0), h in 0.001f64..0.05) {
        let top = heavy_top_model([1.0, 2.0, 3.0], 1.0, 9.81, 0.1, [0.0, 0.0, 1.0]).unwrap();
        let t = tau(true);
        let mut a = ActionState::new(so3(), q, mu).unwrap();
        let mut b = a.clone();
        for _ in 0..5 {
            a = action_hamiltonian_step(&top, &a, h, &t, &solver()).unwrap().state;
            b = action_lagrangian_step(&top, &b, h, &t, &solver()).unwrap().state;
        }
        prop_assert!((&a.q - &b.q).amax() < 1e-10);
        prop_assert!((a.mu() - b.mu()).amax() < 1e-10);
    }

    #[test]
    fn heavy_top_without_gravity_is_the_rigid_body(q in vec3(1.0), mu in vec3(2.0), h in 0.001f64..0.1, cay in any::<bool>()) {
        let top = heavy_top_model([1.0, 2.0, 3.0], 0.0, 9.81, 0.1, [0.0, 0.0, 1.0]).unwrap();
        let rb = RigidBody::new([1.0, 2.0, 3.0]).unwrap();
        let t = tau(cay);
        let a = action_hamiltonian_step(&top, &ActionState::new(so3(), q, mu.clone()).unwrap(), h, &t, &solver()).unwrap();
        let b = lp_hamiltonian_step(&rb, &LPState::new(so3(), mu).unwrap(), h, &t, &solver()).unwrap();
        prop_assert!((a.state.mu() - b.state.mu()).amax() < 1e-12);
    }

    #[test]
    fn action_tensor_satisfies_jacobi(q in vec3(2.0), mu in vec3(2.0)) {
        let top = heavy_top_model([1.0, 2.0, 3.0], 1.0, 9.81, 0.1, [0.0, 0.0, 1.0]).unwrap();
        let z = DVector::from_iterator(6, q.iter().chain(mu.iter()).copied());
        let tensor = |z: &DVector<f64>| action_poisson_tensor(&top, &z.rows(0, 3).into(), &z.rows(3, 3).into());
        let lam = tensor(&z);
        // the tensor is linear in z, so central differences are exact up to rounding
        let dlam: Vec<DMatrix<f64>> = (0..6)
            .map(|l| {
                let mut e = DVector::zeros(6);
                e[l] = 1.0;
                (tensor(&(&z + &e)) - tensor(&(&z - &e))) / 2.0
            })
            .collect();
        let mut worst: f64 = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    let mut s = 0.0;
                    for l in 0..6 {
                        s += lam[(i, l)] * dlam[l][(j, k)] + lam[(j, l)] * dlam[l][(k, i)] + lam[(k, l)] * dlam[l][(i, j)];
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
        prop_assert!(worst < 1e-10);
        prop_assert!((&lam + lam.transpose()).amax() < 1e-14);
    }
}
