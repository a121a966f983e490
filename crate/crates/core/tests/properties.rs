use binagg::aggregation::{self, assign_bins, NoiseMode, PrepareOptions};
use binagg::gdp::{self, GdpBudget, RandomSource};
use binagg::privtree::{self, debug, PrivTreeConfig};
use binagg::regression::{self, PrivatizeOptions};
use binagg::{synthesis, Region};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn data(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut rng = RandomSource::new(seed, 1);
    DMatrix::from_fn(n, d, |_, _| {
        // mass on a few exact split points to exercise the boundaries
        match rng.index(10) {
            0 => 0.5,
            1 => 1.0,
            2 => 0.25,
            _ => rng.uniform(0.0, 1.0),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_is_root_sum_of_squares(mus in prop::collection::vec(0.01f64..10.0, 1..6)) {
        let budgets: Vec<GdpBudget> = mus.iter().map(|m| GdpBudget::new(*m).unwrap()).collect();
        let total = gdp::compose(&budgets).unwrap().value();
        let expect = mus.iter().map(|m| m * m).sum::<f64>().sqrt();
        prop_assert!((total - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn allocation_recomposes(total in 0.05f64..8.0, r in prop::array::uniform4(0.1f64..10.0)) {
        let b = gdp::allocate(GdpBudget::new(total).unwrap(), r).unwrap();
        prop_assert!((b.total().value() - total).abs() <= 1e-10 * total);
        let ratio = b.mu_s.value() / b.mu_bin.value();
        prop_assert!((ratio - r[2] / r[0]).abs() <= 1e-9 * ratio);
    }

    #[test]
    fn delta_decreases_in_epsilon(mu in 0.1f64..4.0, e1 in 0.0f64..5.0, gap in 0.01f64..3.0) {
        let m = GdpBudget::new(mu).unwrap();
        let a = gdp::gdp_to_approx_dp(m, e1).unwrap().delta;
        let b = gdp::gdp_to_approx_dp(m, e1 + gap).unwrap().delta;
        prop_assert!(b <= a);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn pure_conversion_round_trips(eps in 0.01f64..20.0) {
        let mu = gdp::pure_dp_to_gdp(eps).unwrap();
        prop_assert!((gdp::gdp_to_pure_dp(mu) - eps).abs() <= 1e-9 * eps.max(1.0));
    }

    #[test]
    fn tree_leaves_partition_domain(seed in 0u64..10_000, n in 0usize..400, d in 1usize..4, theta in -5.0f64..20.0) {
        let x = data(seed, n, d);
        let domain = Region::unit(d).unwrap();
        let cfg = PrivTreeConfig::for_epsilon(1.0, theta, 20).unwrap();
        let mut rng = RandomSource::new(seed, 0);
        let leaves = privtree::build(&x, &domain, &cfg, &mut rng).unwrap();
        let vol: f64 = leaves.iter().map(Region::volume).sum();
        prop_assert!((vol - 1.0).abs() < 1e-9);
        // every row lands in exactly one leaf
        let upper = domain.upper().to_vec();
        for j in 0..n {
            let p: Vec<f64> = (0..d).map(|i| x[(j, i)]).collect();
            let hits = leaves.iter().filter(|l| l.contains_in(&p, &upper)).count();
            prop_assert_eq!(hits, 1);
        }
        prop_assert_eq!(assign_bins(&x, &leaves).unwrap().len(), n);
    }

    #[test]
    fn noiseless_counts_add_up(seed in 0u64..10_000, n in 1usize..300, d in 1usize..4) {
        let x = data(seed, n, d);
        let cfg = PrivTreeConfig::new(0.0, 1.0, 1.0, 15).unwrap();
        let nodes = debug::grow_noiseless(&x, &Region::unit(d).unwrap(), &cfg).unwrap();
        prop_assert_eq!(nodes[0].count, n);
        let leaf_total: usize = nodes.iter().filter(|v| !v.split).map(|v| v.count).sum();
        prop_assert_eq!(leaf_total, n);
        // children follow their parent in breadth-first order
        for w in nodes.windows(2) {
            prop_assert!(w[0].depth <= w[1].depth);
        }
    }

    #[test]
    fn surviving_bins_respect_threshold(seed in 0u64..10_000, n in 50usize..600, min_count in 2i64..10) {
        let x = data(seed, n, 2);
        let y = DVector::from_fn(n, |j, _| x[(j, 0)] + x[(j, 1)]);
        let mut rng = RandomSource::new(seed, 0);
        let cfg = PrivTreeConfig::for_epsilon(1.0, 0.0, 20).unwrap();
        let leaves = privtree::build(&x, &Region::unit(2).unwrap(), &cfg, &mut rng).unwrap();
        let opts = PrepareOptions { min_count, noise: NoiseMode::Calibrated };
        match aggregation::prepare(&x, &y, &leaves, GdpBudget::new(0.5).unwrap(), 2.0, opts, &mut rng) {
            Ok(p) => {
                prop_assert_eq!(p.len() + p.discarded(), leaves.len());
                for b in p.bins() {
                    prop_assert!(b.noisy_count() >= min_count);
                    prop_assert!(b.label_sum().abs() <= 2.0 * b.true_count() as f64);
                }
            }
            Err(e) => prop_assert!(matches!(e, binagg::Error::EmptyResult), "{e}"),
        }
    }

    #[test]
    fn estimating_equation_vanishes_at_fit(seed in 0u64..10_000, k in 8usize..40, d in 1usize..4) {
        let mut rng = RandomSource::new(seed, 2);
        let s = DMatrix::from_fn(k, d, |_, _| rng.uniform(0.0, 30.0));
        let t = DVector::from_fn(k, |_, _| rng.uniform(0.0, 40.0));
        let w = DVector::from_fn(k, |_, _| 1.0 / (2 + rng.index(40)) as f64);
        let dv = DMatrix::from_fn(k, d, |_, _| rng.uniform(0.0, 1.0));
        let p = regression::PrivatizedSummaries::from_parts(s, t, w, dv).unwrap();
        if let Ok(beta) = regression::fit_debiased(&p) {
            let total = regression::estimating_terms(&p, &beta)
                .into_iter()
                .fold(DVector::zeros(d), |a, q| a + q);
            let scale = beta.amax().max(1.0) * 1e3;
            prop_assert!(total.amax() <= 1e-9 * scale, "{total}");
        }
    }

    #[test]
    fn synthetic_records_fill_each_bin(seed in 0u64..10_000, n in 100usize..500) {
        let x = data(seed, n, 2);
        let y = DVector::from_fn(n, |j, _| x[(j, 0)] - x[(j, 1)]);
        let mut rng = RandomSource::new(seed, 0);
        let cfg = PrivTreeConfig::for_epsilon(1.0, 0.0, 20).unwrap();
        let leaves = privtree::build(&x, &Region::unit(2).unwrap(), &cfg, &mut rng).unwrap();
        let Ok(p) = aggregation::prepare(&x, &y, &leaves, GdpBudget::new(1.0).unwrap(), 1.0, PrepareOptions::default(), &mut rng) else {
            return Ok(());
        };
        let mu = GdpBudget::new(1.0).unwrap();
        let ds = synthesis::generate(&p, mu, mu, PrivatizeOptions::default(), &mut rng);
        let counts = ds.bin_counts();
        for (k, b) in p.bins().iter().enumerate() {
            prop_assert_eq!(counts[k] as i64, b.noisy_count());
        }
        prop_assert_eq!(ds.len(), counts.iter().sum::<usize>());
    }
}
