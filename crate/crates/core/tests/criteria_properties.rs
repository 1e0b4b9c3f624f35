use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use blockdesign::criteria::{
    b1, lower_bound_rate, mean_mse, q_q, q_tilde, tail_terms, tail_terms_dense, var_mse_analytic,
    worst_case_block_closed, TailTerms,
};
use blockdesign::design::{
    admissible_block_counts, cov_block_closed, cov_crd_closed, find_perfect_balance, ArmSizes, BlockStructure,
    CovMatrix,
};
use blockdesign::response::{profile_from_means, MomentProfile, MomentVariant, ResponseKind};
use blockdesign::verify::{run_suite, Suite, VerifyOptions};

const C_Q: f64 = 1.645;

fn kind_strategy() -> impl Strategy<Value = ResponseKind> {
    prop::sample::select(ResponseKind::ALL.to_vec())
}

/// `(kind, arms, block count, uniforms)` for building a profile and a design.
fn instance() -> impl Strategy<Value = (ResponseKind, ArmSizes, usize, Vec<f64>)> {
    (kind_strategy(), 2usize..=24)
        .prop_flat_map(|(kind, n)| (Just(kind), Just(n), 1..2 * n))
        .prop_flat_map(|(kind, n, nt)| {
            let arms = ArmSizes::new(n, nt).unwrap();
            let counts = admissible_block_counts(&arms);
            (
                Just(kind),
                Just(arms),
                prop::sample::select(counts),
                prop::collection::vec(0.02f64..0.98, 4 * n),
            )
        })
}

fn mean_of(kind: ResponseKind, u: f64) -> f64 {
    match kind {
        ResponseKind::Continuous => 6.0 * u - 3.0,
        ResponseKind::Incidence | ResponseKind::Proportion => u,
        ResponseKind::Count => 10.0 * u,
        ResponseKind::Survival => 5.0 * u,
    }
}

fn profile(kind: ResponseKind, arms: &ArmSizes, u: &[f64]) -> MomentProfile {
    let total = arms.total();
    let mu_t: Vec<f64> = u[..total].iter().map(|&x| mean_of(kind, x)).collect();
    let mu_c: Vec<f64> = u[total..].iter().map(|&x| mean_of(kind, x)).collect();
    profile_from_means(kind, kind.default_dispersion(), &mu_t, &mu_c, arms, MomentVariant::Scaled).unwrap()
}

fn designs(arms: ArmSizes, blocks: usize, mu: &[f64]) -> Vec<CovMatrix> {
    let mut out = vec![
        cov_block_closed(&BlockStructure::contiguous(arms, blocks).unwrap()),
        cov_crd_closed(&arms),
    ];
    if arms.is_equal() {
        let w = find_perfect_balance(mu, &arms, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        out.push(CovMatrix::rank_one(w.allocation.to_f64()));
    }
    out
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

fn terms_close(a: &TailTerms, b: &TailTerms, tol: f64) -> bool {
    close(a.b1, b.b1, tol) && close(a.b2, b.b2, tol) && close(a.s, b.s, tol) && close(a.r, b.r, tol)
}

fn sse(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum()
}

fn f(v: &[f64]) -> f64 {
    let l = v.len() as f64;
    l / (l - 1.0) * sse(v)
}

proptest! {
    #[test]
    fn fast_terms_match_dense((kind, arms, blocks, u) in instance()) {
        let p = profile(kind, &arms, &u);
        for cov in designs(arms, blocks, &p.mu) {
            let fast = tail_terms(&p, &cov, &arms).unwrap();
            let dense = tail_terms_dense(&p, &cov, &arms).unwrap();
            prop_assert!(terms_close(&fast, &dense, 1e-9), "{fast:?} vs {dense:?}");
        }
    }

    #[test]
    fn quantile_equals_mean_plus_sd((kind, arms, blocks, u) in instance()) {
        let p = profile(kind, &arms, &u);
        for cov in designs(arms, blocks, &p.mu) {
            let t = tail_terms(&p, &cov, &arms).unwrap();
            let q = q_q(&t, p.kappa_z, p.c_z, arms.r(), arms.r_tilde(), C_Q, arms.n()).unwrap();
            let mean = mean_mse(&p, &cov, &arms).unwrap();
            let var = var_mse_analytic(&p, &cov, &arms).unwrap();
            prop_assert!(close(q, mean + C_Q * var.sqrt(), 1e-9));
            let q0 = q_q(&t, p.kappa_z, p.c_z, arms.r(), arms.r_tilde(), 0.0, arms.n()).unwrap();
            prop_assert!(close(q0, mean, 1e-12));
        }
    }

    #[test]
    fn terms_scale_with_the_mean_vector((kind, arms, blocks, u) in instance(), a in -4.0f64..4.0) {
        let p = profile(kind, &arms, &u);
        let mut scaled = p.clone();
        scaled.mu.iter_mut().for_each(|m| *m *= a);
        for cov in designs(arms, blocks, &p.mu) {
            let t = tail_terms(&p, &cov, &arms).unwrap();
            let s = tail_terms(&scaled, &cov, &arms).unwrap();
            prop_assert!((s.b1 - a * a * t.b1).abs() <= 1e-9 * (1.0 + a * a * t.b1.abs()));
            prop_assert!((s.b2 - a * a * t.b2).abs() <= 1e-9 * (1.0 + a * a * t.b2.abs()));
            prop_assert!((s.s - a * t.s).abs() <= 1e-9 * (1.0 + (a * t.s).abs()));
            prop_assert_eq!(s.r, t.r);
        }
    }

    #[test]
    fn split_sse_inequality(mut v in prop::collection::vec(-10.0f64..10.0, 4..40), cut in 0.0f64..1.0) {
        v.sort_by(f64::total_cmp);
        let l = 2 + ((v.len() - 4) as f64 * cut) as usize;
        prop_assert!(f(&v) + 1e-9 * (1.0 + f(&v)) >= f(&v[..l]) + f(&v[l..]));
    }

    #[test]
    fn block_sse_inequality(mut v in prop::collection::vec(-10.0f64..10.0, 48), k in prop::sample::select(vec![2usize, 3, 4, 6, 8, 12, 16, 24])) {
        v.sort_by(f64::total_cmp);
        let blocked: f64 = v.chunks(k).map(f).sum();
        prop_assert!(f(&v) + 1e-9 * (1.0 + f(&v)) >= blocked);
    }
}

#[test]
fn worst_case_increases_in_block_count() {
    for n in 1..=40 {
        for nt in 1..2 * n {
            let arms = ArmSizes::new(n, nt).unwrap();
            for m in [0.5, 1.0, 3.0] {
                let values: Vec<f64> = admissible_block_counts(&arms)
                    .into_iter()
                    .map(|b| worst_case_block_closed(&arms, b, m).unwrap())
                    .collect();
                assert!(values.windows(2).all(|w| w[0] < w[1]), "n={n} n_T={nt} M={m}: {values:?}");
            }
        }
    }
}

#[test]
fn corner_maximizers_and_minimax() {
    for suite in [Suite::Corner, Suite::Minimax] {
        let report = run_suite(suite, &VerifyOptions::default());
        assert!(report.passed(), "{report}");
    }
}

#[test]
fn finest_blocks_minimize_imbalance_for_ordered_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let n = rand::Rng::random_range(&mut rng, 1..=12);
        let arms = ArmSizes::equal(n).unwrap();
        let mut mu: Vec<f64> = (0..arms.total()).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        mu.sort_by(f64::total_cmp);
        let len = mu.len();
        let p = MomentProfile {
            mu,
            rho: vec![0.0; len],
            gamma: vec![0.0; len],
            kappa_z: 0.0,
            c_z: 0.0,
        };
        let values: Vec<f64> = admissible_block_counts(&arms)
            .into_iter()
            .map(|b| b1(&p, &cov_block_closed(&BlockStructure::contiguous(arms, b).unwrap())).unwrap())
            .collect();
        let finest = *values.last().unwrap();
        assert!(values.iter().all(|&v| finest <= v + 1e-12));
    }
}

fn homoskedastic(n: usize) -> (ArmSizes, MomentProfile) {
    let arms = ArmSizes::equal(n).unwrap();
    let total = arms.total();
    let half: Vec<f64> = (0..total).map(|i| 0.5 * (i as f64 + 0.5) / total as f64).collect();
    let p = profile_from_means(ResponseKind::Continuous, Some(1.0), &half, &half, &arms, MomentVariant::Scaled).unwrap();
    (arms, p)
}

#[test]
fn window_block_counts_dominate_extremes() {
    for n in [96, 192, 384, 768, 1536, 2048] {
        let (arms, p) = homoskedastic(n);
        let bound = lower_bound_rate(&p, 1.0, 1.0, C_Q, n);
        let at = |cov: &CovMatrix| {
            let t = tail_terms(&p, cov, &arms).unwrap();
            q_tilde(&t, p.kappa_z, 1.0, 1.0, C_Q).unwrap()
        };
        let root = (n as f64).sqrt();
        let window: Vec<f64> = admissible_block_counts(&arms)
            .into_iter()
            .filter(|&b| b as f64 >= root / 2.0 && b as f64 <= 2.0 * root)
            .map(|b| at(&cov_block_closed(&BlockStructure::contiguous(arms, b).unwrap())))
            .collect();
        assert!(!window.is_empty());
        let w = find_perfect_balance(&p.mu, &arms, 4, &mut ChaCha8Rng::seed_from_u64(n as u64)).unwrap();
        let crd = at(&cov_crd_closed(&arms));
        let pb = at(&CovMatrix::rank_one(w.allocation.to_f64()));
        let (lo, hi) = window.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(crd > hi && pb > hi, "n={n}: crd {crd} pb {pb} window max {hi}");
        assert!((hi - lo) < 0.05 * bound, "n={n}: window spread {} vs bound {bound}", hi - lo);
    }
}
