mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{normal, random_objective, shifted_instance};
use shiftrisk::oracle::sphere_max_risk;
use shiftrisk::semgen::population_all;
use shiftrisk::WorstRiskObjective;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

#[test]
fn envelope_identity_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let p = rng.random_range(1..=5);
        let k = rng.random_range(1..=6);
        let gamma = rng.random_range(0.0..6.0);
        let obj = random_objective(&mut rng, p, k, gamma);
        let beta = DVector::from_fn(p, |_, _| 3.0 * normal(&mut rng));
        let wr = obj.worst_risk(&beta);
        assert!(rel(obj.decomposition_value(&beta), wr.value) <= 1e-10);
        assert!(!wr.argmax.is_empty());
    }
}

#[test]
fn sphere_matches_worst_risk_on_semgen_populations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..10 {
        let p = rng.random_range(1..=3);
        let k = rng.random_range(1..=4);
        let spec = common::random_spec(&mut rng, p, k, 1, t);
        let (o, a) = population_all(&spec).unwrap();
        let gamma = rng.random_range(0.0..4.0);
        let obj = WorstRiskObjective::from_moments(&o, &a, gamma).unwrap();
        let beta = DVector::from_fn(p, |_, _| normal(&mut rng));
        let wr = obj.worst_risk(&beta).value;
        let sphere = sphere_max_risk(&obj, &beta, 10_000, t);
        assert!(rel(sphere, wr) <= 1e-6);
        assert!(sphere <= obj.decomposition_value(&beta) + 1e-12 * (1.0 + wr.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>(), p in 1usize..=5, k in 1usize..=4, gamma in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obj = random_objective(&mut rng, p, k, gamma);
        let beta = DVector::from_fn(p, |_, _| normal(&mut rng));
        let h = 1e-5;
        for risk in obj.penalized_all() {
            let g = risk.gradient(&beta);
            for u in 0..p {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[u] += h;
                dn[u] -= h;
                let fd = (risk.eval(&up) - risk.eval(&dn)) / (2.0 * h);
                prop_assert!((g[u] - fd).abs() <= 1e-5 * (1.0 + g.amax()), "{} vs {}", g[u], fd);
            }
        }
    }

    #[test]
    fn envelope_is_convex_when_every_hessian_is_definite(seed in any::<u64>(), p in 1usize..=4, k in 1usize..=4, gamma in 0.0f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (o, a) = shifted_instance(&mut rng, p, k);
        let obj = WorstRiskObjective::from_moments(&o, &a, gamma).unwrap();
        prop_assert!(obj.penalized_all().iter().all(|h| h.min_curvature() > 0.0));
        for _ in 0..100 {
            let x = DVector::from_fn(p, |_, _| 3.0 * normal(&mut rng));
            let y = DVector::from_fn(p, |_, _| 3.0 * normal(&mut rng));
            let mid = (&x + &y) * 0.5;
            let (fx, fy, fm) = (obj.value(&x), obj.value(&y), obj.value(&mid));
            prop_assert!(fm <= 0.5 * (fx + fy) + 1e-10 * (1.0 + fx.abs() + fy.abs()));
        }
    }

    #[test]
    fn scaling_scales_the_envelope(seed in any::<u64>(), s in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obj = random_objective(&mut rng, 3, 3, 2.0);
        let beta = DVector::from_fn(3, |_, _| normal(&mut rng));
        let scaled = obj.scaled(s);
        prop_assert!(rel(scaled.value(&beta), s * obj.value(&beta)) <= 1e-12 * s.max(1.0));
    }

    #[test]
    fn ties_split_weight_evenly(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let one = random_objective(&mut rng, 2, 1, 1.5);
        // the same environment three times is a three-way tie everywhere
        let risks = vec![one.risks()[0].clone(); 3];
        let obj = WorstRiskObjective::new(risks, one.risk_o().clone(), 1.5).unwrap();
        let beta = DVector::from_fn(2, |_, _| normal(&mut rng));
        let w = obj.optimal_weights(&beta);
        prop_assert_eq!(obj.worst_risk(&beta).argmax, vec![0, 1, 2]);
        for v in w.iter() {
            prop_assert!((v * v - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}
