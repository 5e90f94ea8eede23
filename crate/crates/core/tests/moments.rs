mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{gaussian_matrix, normal, random_psd};
use shiftrisk::io::MomentSet;
use shiftrisk::moments::{combine_plusdelta, estimate_moments, EnvLabel, EnvironmentMoments, EnvironmentSample, SampleCount};
use shiftrisk::semgen::{population_moments, sample_environment, SemSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moments_ignore_row_order(seed in any::<u64>(), n in 1usize..200, p in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian_matrix(&mut rng, n, p);
        let y = DVector::from_fn(n, |_, _| normal(&mut rng));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let xs = DMatrix::from_fn(n, p, |r, c| x[(perm[r], c)]);
        let ys = DVector::from_fn(n, |r, _| y[perm[r]]);
        let a = estimate_moments(&EnvironmentSample::new(x, y, EnvLabel::Observational).unwrap()).unwrap();
        let b = estimate_moments(&EnvironmentSample::new(xs, ys, EnvLabel::Observational).unwrap()).unwrap();
        let tol = 1e-12 * (1.0 + a.g.amax().max(a.g_y));
        prop_assert!((&a.g - &b.g).amax() <= tol);
        prop_assert!((&a.z - &b.z).amax() <= tol);
        prop_assert!((a.g_y - b.g_y).abs() <= tol);
        prop_assert_eq!(a.n, SampleCount::Finite(n));
    }

    #[test]
    fn combine_plusdelta_is_linear(seed in any::<u64>(), p in 1usize..5, gamma in 0.0f64..5.0, s in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng| {
            EnvironmentMoments::new(random_psd(rng, p, p, 0.1), DVector::from_fn(p, |_, _| normal(rng)), 1.0, SampleCount::POPULATION).unwrap()
        };
        let (a, b, o) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let sum = EnvironmentMoments::new(&a.g + &b.g * s, &a.z + &b.z * s, 1.0, SampleCount::POPULATION).unwrap();
        let (ga, za) = combine_plusdelta(&a, &o, gamma).unwrap();
        let (gb, zb) = combine_plusdelta(&b, &o, gamma).unwrap();
        let (gs, zs) = combine_plusdelta(&sum, &o, gamma).unwrap();
        // affine in the shifted argument: the observational part enters once
        let (go, zo) = combine_plusdelta(&EnvironmentMoments::new(DMatrix::zeros(p, p), DVector::zeros(p), 0.0, SampleCount::POPULATION).unwrap(), &o, gamma).unwrap();
        prop_assert!((&gs - (&ga + (&gb - &go) * s)).amax() <= 1e-10 * (1.0 + gs.amax()));
        prop_assert!((&zs - (&za + (&zb - &zo) * s)).amax() <= 1e-10 * (1.0 + zs.amax()));
    }

    #[test]
    fn moment_json_round_trip_is_bit_exact(seed in any::<u64>(), p in 1usize..5, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (o, a) = common::shifted_instance(&mut rng, p, k);
        let set = MomentSet::new(o, a);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        set.write(&path).unwrap();
        prop_assert_eq!(MomentSet::read(&path).unwrap(), set);
    }
}

const SPEC: &str = r#"
p = 2
k = 1
seed = 99
B = [[[0.0, 0.5, -0.3], [0.0, 0.0, 0.4], [0.0, 0.0, 0.0]]]
probs = [1.0]
noise_cov = [[1.0, 0.2, 0.0], [0.2, 1.0, 0.1], [0.0, 0.1, 1.5]]
shift_covs = [[[0.0, 0.0, 0.0], [0.0, 0.8, 0.0], [0.0, 0.0, 0.3]]]
"#;

#[test]
fn sample_moments_converge_to_population() {
    let spec = SemSpec::from_toml_str(SPEC).unwrap();
    let n = 100_000;
    for env in spec.environments() {
        let sample = sample_environment(&spec, env, n).unwrap();
        let est = estimate_moments(&sample).unwrap();
        let pop = population_moments(&spec, env).unwrap();
        // per-entry std of x_a·x_b estimated from the sample itself
        let cols: Vec<DVector<f64>> = std::iter::once(sample.y.clone()).chain(sample.x.column_iter().map(|c| c.into_owned())).collect();
        let sd = |a: usize, b: usize| {
            let prod = cols[a].component_mul(&cols[b]);
            let mean = prod.mean();
            (prod.map(|v| (v - mean).powi(2)).sum() / n as f64).sqrt()
        };
        let band = |a: usize, b: usize| 5.0 * sd(a, b) / (n as f64).sqrt();
        for a in 0..2 {
            for b in 0..2 {
                assert!((est.g[(a, b)] - pop.g[(a, b)]).abs() <= band(a + 1, b + 1), "{env} G[{a},{b}]");
            }
            assert!((est.z[a] - pop.z[a]).abs() <= band(a + 1, 0), "{env} Z[{a}]");
        }
        assert!((est.g_y - pop.g_y).abs() <= band(0, 0), "{env} g_Y");
    }
}
