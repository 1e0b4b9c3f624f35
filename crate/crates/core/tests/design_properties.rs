use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use blockdesign::design::{
    admissible_block_counts, cov_block_closed, cov_crd_closed, exhaustive, for_each_combination, Allocation,
    ArmSizes, BlockStructure, CovMatrix, DesignSpec,
};
use blockdesign::verify::{run_suite, Suite, VerifyOptions};

fn arms_strategy(max_n: usize) -> impl Strategy<Value = ArmSizes> {
    (1..=max_n).prop_flat_map(|n| (Just(n), 1..2 * n)).prop_map(|(n, nt)| ArmSizes::new(n, nt).unwrap())
}

/// Arm sizes with a random admissible block count, blocks scattered over subjects.
fn scattered_blocks() -> impl Strategy<Value = (BlockStructure, u64)> {
    (arms_strategy(24), any::<u64>()).prop_map(|(arms, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = admissible_block_counts(&arms);
        let b = *counts.choose(&mut rng).unwrap();
        let mut order: Vec<usize> = (0..arms.total()).collect();
        order.shuffle(&mut rng);
        let size = arms.total() / b;
        let blocks = order.chunks(size).map(<[usize]>::to_vec).collect();
        (BlockStructure::new(arms, blocks).unwrap(), seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fast_quadratic_form_matches_dense((s, seed) in scattered_blocks()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let v: Vec<f64> = (0..s.total()).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
        let cov = cov_block_closed(&s);
        let fast = cov.quadratic_form(&v).unwrap();
        let dense = cov.quadratic_form_dense(&v).unwrap();
        prop_assert!((fast - dense).abs() <= 1e-9 * dense.abs().max(1e-12), "{fast} vs {dense}");
    }
}

proptest! {
    #[test]
    fn supported_covariances_have_constant_diagonal_and_null_ones((s, _) in scattered_blocks()) {
        let arms = *s.arms();
        for cov in [cov_block_closed(&s), cov_crd_closed(&arms)] {
            prop_assert!(cov.diagonal().iter().all(|d| (d - arms.rr()).abs() < 1e-12));
            let ones = vec![1.0; arms.total()];
            prop_assert!(cov.apply(&ones).unwrap().iter().all(|x| x.abs() < 1e-9));
            prop_assert!(cov.is_symmetric(1e-12));
            prop_assert!(cov.is_psd(1e-10));
        }
    }

    #[test]
    fn complete_randomization_spectrum(arms in arms_strategy(20)) {
        let mut eig = cov_crd_closed(&arms).eigenvalues();
        eig.sort_by(f64::total_cmp);
        prop_assert!(eig[0].abs() < 1e-10);
        prop_assert!(eig[1..].iter().all(|&e| e > 1e-10));
        let top = *eig.last().unwrap();
        prop_assert!(eig[1..].iter().all(|&e| (e - top).abs() < 1e-10 * top));
    }

    #[test]
    fn block_samples_are_balanced_within_blocks((s, seed) in scattered_blocks()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = DesignSpec::block(s.clone());
        for _ in 0..20 {
            let w = spec.sample(&mut rng);
            prop_assert!(w.is_valid_for(s.arms()));
            for block in s.blocks() {
                let treated = block.iter().filter(|&&i| w.entries()[i] == 1).count();
                prop_assert_eq!(treated, s.treated_per_block());
            }
        }
    }

    #[test]
    fn design_mean_matches_allocation((s, _) in scattered_blocks()) {
        let arms = *s.arms();
        let target = 0.5 * (arms.r() - arms.r_tilde());
        for spec in [DesignSpec::block(s.clone()), DesignSpec::complete(arms)] {
            prop_assert!(spec.mean().unwrap().iter().all(|m| (m - target).abs() < 1e-12));
        }
    }

    #[test]
    fn exhaustive_balance_is_optimal(half in 1usize..=6, mu in prop::collection::vec(-10.0f64..10.0, 12)) {
        let mu = &mu[..2 * half];
        let best = exhaustive(mu);
        prop_assert!(best.allocation.is_valid_for(&ArmSizes::equal(half).unwrap()));
        let mut ok = true;
        for_each_combination(2 * half, half, |treated| {
            let w = Allocation::from_treated(2 * half, treated.iter().copied());
            ok &= best.imbalance <= w.dot(mu).abs() + 1e-12;
        });
        prop_assert!(ok);
    }
}

#[test]
fn enumeration_matches_closed_forms_up_to_ten_subjects() {
    let opts = VerifyOptions {
        max_total: 10,
        ..VerifyOptions::default()
    };
    let report = run_suite(Suite::Enumeration, &opts);
    assert!(report.passed(), "{report}");
}

#[test]
fn rank_one_design_is_supported() {
    let w = Allocation::new(vec![1, -1, -1, 1]).unwrap();
    let cov = DesignSpec::perfect_balance_pair(w.clone()).unwrap().covariance().unwrap();
    let r1 = CovMatrix::rank_one(w.to_f64());
    for i in 0..4 {
        for j in 0..4 {
            assert!((cov.entry(i, j) - r1.entry(i, j)).abs() < 1e-12);
        }
    }
}
