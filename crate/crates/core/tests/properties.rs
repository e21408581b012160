use manismooth::asymptotics::{ks_distance, sigma_normalized, sigma_unnormalized};
use manismooth::functions::TestFunction;
use manismooth::harness::parse_config;
use manismooth::kernels::Bandwidth;
use manismooth::sampling::{derive_seed, sample_uniform};
use manismooth::smoothing::{smooth_normalized, smooth_unnormalized};
use manismooth::spectral::{build_reweighted_laplacian, eigendecompose, hks_at_samples, w_normalize};
use manismooth::{Manifold, Sample};
use proptest::prelude::*;

fn circle_sample(n: usize, seed: u64) -> Sample {
    sample_uniform(&Manifold::circle(1.0).unwrap(), n, seed).unwrap()
}

fn torus_sample(n: usize, seed: u64) -> Sample {
    sample_uniform(&Manifold::torus(0.5, 1.0 / 3.0).unwrap(), n, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_smoothing_commutes_with_shifts(seed in 0u64..1000, theta in -3.0f64..3.0, c in -50.0f64..50.0, eps in 0.05f64..2.0) {
        let s = circle_sample(120, seed);
        let f = s.evaluate(&TestFunction::CosTheta { radius: 1.0 });
        let shifted: Vec<f64> = f.iter().map(|v| v + c).collect();
        let x = [theta.cos(), theta.sin()];
        let bw = Bandwidth::new(eps, 1).unwrap();
        let a = smooth_normalized(&s, &f, &x, bw).unwrap();
        let b = smooth_normalized(&s, &shifted, &x, bw).unwrap();
        prop_assert!((b - a - c).abs() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn unnormalized_smoothing_is_linear(seed in 0u64..1000, a in -5.0f64..5.0, b in -5.0f64..5.0, eps in 0.05f64..1.0) {
        let s = torus_sample(150, seed);
        let f = s.evaluate(&TestFunction::TorusExample);
        let g: Vec<f64> = (0..s.len()).map(|i| s.point(i)[2]).collect();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(u, v)| a * u + b * v).collect();
        let x = s.point(0).to_vec();
        let bw = Bandwidth::new(eps, 2).unwrap();
        let lhs = smooth_unnormalized(&s, &combo, &x, bw).unwrap();
        let rhs = a * smooth_unnormalized(&s, &f, &x, bw).unwrap() + b * smooth_unnormalized(&s, &g, &x, bw).unwrap();
        let scale = smooth_unnormalized(&s, &vec![a.abs() + b.abs() + 1.0; s.len()], &x, bw).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn normalized_smoothing_stays_in_range(seed in 0u64..1000, theta in -3.0f64..3.0, eps in 0.01f64..3.0) {
        let s = circle_sample(80, seed);
        let f: Vec<f64> = (0..s.len()).map(|i| (7.0 * s.point(i)[0]).sin() * 3.0).collect();
        let x = [theta.cos(), theta.sin()];
        if let Ok(v) = smooth_normalized(&s, &f, &x, Bandwidth::new(eps, 1).unwrap()) {
            let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn huge_bandwidth_gives_the_sample_mean(seed in 0u64..1000, theta in -3.0f64..3.0) {
        let s = circle_sample(60, seed);
        let f = s.evaluate(&TestFunction::CosTheta { radius: 1.0 });
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let v = smooth_normalized(&s, &f, &[theta.cos(), theta.sin()], Bandwidth::new(1e6, 1).unwrap()).unwrap();
        prop_assert!((v - mean).abs() <= 1e-9);
    }

    #[test]
    fn samples_are_reproducible(seed in any::<u64>(), n in 1usize..200) {
        let m = Manifold::torus(0.5, 1.0 / 3.0).unwrap();
        prop_assert_eq!(sample_uniform(&m, n, seed).unwrap(), sample_uniform(&m, n, seed).unwrap());
    }

    #[test]
    fn derived_seeds_differ_by_index(root in any::<u64>(), i in 0u64..u32::MAX as u64, j in 0u64..u32::MAX as u64) {
        prop_assume!(i != j);
        prop_assert_ne!(derive_seed(root, i), derive_seed(root, j));
        prop_assert_eq!(derive_seed(root, i), derive_seed(root, i));
    }

    #[test]
    fn variances_scale_as_their_formulas(rho in 0.01f64..10.0, f in 0.1f64..10.0, c in 0.1f64..10.0) {
        for d in [1usize, 2] {
            let base = sigma_unnormalized(rho, f, d).unwrap().sigma2;
            prop_assert!((sigma_unnormalized(rho, c * f, d).unwrap().sigma2 - c * c * base).abs() <= 1e-12 * c * c * base);
            prop_assert!((sigma_unnormalized(c * rho, f, d).unwrap().sigma2 - c * base).abs() <= 1e-12 * c * base);
            let g = sigma_normalized(rho, f, d).unwrap().sigma2;
            prop_assert!((sigma_normalized(c * rho, f, d).unwrap().sigma2 - g / c).abs() <= 1e-12 * g / c);
        }
    }

    #[test]
    fn ks_is_scale_free(xs in prop::collection::vec(-5.0f64..5.0, 30..80), sigma2 in 0.1f64..4.0, c in 0.1f64..10.0) {
        let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        let a = ks_distance(&xs, sigma2).unwrap();
        let b = ks_distance(&scaled, c * c * sigma2).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn config_round_trips(seed in 0u64..1_000_000, b in 30usize..500, n1 in 2usize..5000, theta in -3.0f64..3.0, a in -0.9f64..-0.1) {
        let text = format!(
            "experiment = \"berry_circle\"\nseed = {seed}\nreplicates = {b}\nn = [{n1}, {}]\npoints = [[{theta:?}]]\nbandwidth = \"power:{a:?}\"\n\n[manifold]\nkind = \"circle\"\nradius = 2.5\n\n[function]\nid = \"circle_example\"\n",
            n1 + 7
        );
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(cfg.hash(), again.hash());
        prop_assert_eq!(cfg, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn heat_kernel_signature_decreases_in_time(seed in 0u64..1000, t1 in 0.05f64..2.0, dt in 0.0f64..2.0) {
        let s = circle_sample(120, seed);
        let l = build_reweighted_laplacian(&s, 0.3).unwrap();
        let dec = w_normalize(&eigendecompose(&l, 6).unwrap(), &s, 0.3).unwrap();
        let early = hks_at_samples(&dec, t1, 6).unwrap();
        let late = hks_at_samples(&dec, t1 + dt, 6).unwrap();
        let fewer = hks_at_samples(&dec, t1, 3).unwrap();
        for i in 0..s.len() {
            prop_assert!(late[i] <= early[i]);
            prop_assert!(fewer[i] <= early[i]);
        }
    }
}
