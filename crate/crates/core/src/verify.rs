//! Oracle suites: enumeration against closed forms, unbiasedness and
//! exhaustive MSE, Monte Carlo moment gates, corner brute force and the
//! minimax property of complete randomization.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::criteria::{worst_case_block_closed, worst_case_block_even, worst_case_continuous, worst_case_corner_brute};
use crate::design::{
    admissible_block_counts, binomial, cov_empirical, cov_from_support, enumerate_design, exhaustive, Allocation,
    ArmSizes, BlockStructure, CovMatrix, DesignSpec, DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::estimator::{estimand_tau, mse_exhaustive, mse_over_design, tau_hat, tau_hat_naive};
use crate::response::{central_moments, ResponseKind, ResponseLaw};
use crate::seed::{derive_seed, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Enumeration,
    Unbiasedness,
    Moments,
    Corner,
    Minimax,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Enumeration,
        Suite::Unbiasedness,
        Suite::Moments,
        Suite::Corner,
        Suite::Minimax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Enumeration => "enumeration",
            Suite::Unbiasedness => "unbiasedness",
            Suite::Moments => "moments",
            Suite::Corner => "corner",
            Suite::Minimax => "minimax",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Multiply every closed-form covariance and worst-case value by this
    /// factor; a correct suite must then fail.
    pub mutate_closed_form: Option<f64>,
    /// Largest `2n` enumerated.
    pub max_total: usize,
    pub random_pairs: usize,
    pub moment_means: usize,
    pub moment_draws: usize,
    /// Largest `2n` in the corner search.
    pub corner_max_total: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: crate::sim::DEFAULT_SEED,
            mutate_closed_form: None,
            max_total: 8,
            random_pairs: 100,
            moment_means: 10,
            moment_draws: 1_000_000,
            corner_max_total: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub failure: Option<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            None => write!(f, "{:<13} ok    {} checks in {:.2?}", self.suite.name(), self.checks, self.elapsed),
            Some(why) => write!(f, "{:<13} FAIL  after {} checks: {why}", self.suite.name(), self.checks),
        }
    }
}

type Check = std::result::Result<(), String>;

struct Tally {
    checks: usize,
}

impl Tally {
    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) -> Check {
        self.checks += 1;
        if ok {
            Ok(())
        } else {
            Err(describe())
        }
    }
}

fn internal(e: Error) -> String {
    format!("unexpected error: {e}")
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> SuiteReport {
    let start = Instant::now();
    let mut tally = Tally { checks: 0 };
    let outcome = match suite {
        Suite::Enumeration => enumeration_suite(opts, &mut tally),
        Suite::Unbiasedness => unbiasedness_suite(opts, &mut tally),
        Suite::Moments => moments_suite(opts, &mut tally),
        Suite::Corner => corner_suite(opts, &mut tally),
        Suite::Minimax => minimax_suite(opts, &mut tally),
    };
    SuiteReport {
        suite,
        checks: tally.checks,
        failure: outcome.err(),
        elapsed: start.elapsed(),
    }
}

pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteReport> {
    Suite::ALL.into_iter().map(|s| run_suite(s, opts)).collect()
}

/// Every arm split with `2n ≤ max_total`.
pub fn small_arms(max_total: usize) -> Vec<ArmSizes> {
    (1..=max_total / 2)
        .flat_map(|n| (1..2 * n).map(move |nt| ArmSizes::new(n, nt).expect("valid split")))
        .collect()
}

/// Complete randomization and every admissible contiguous block design on
/// every arm split with `2n ≤ max_total`.
pub fn enumerable_designs(max_total: usize) -> Vec<DesignSpec> {
    let mut out = Vec::new();
    for arms in small_arms(max_total) {
        out.push(DesignSpec::complete(arms));
        for b in admissible_block_counts(&arms) {
            let s = BlockStructure::contiguous(arms, b).expect("admissible count");
            out.push(DesignSpec::block(s));
        }
    }
    out
}

fn closed_form(spec: &DesignSpec, mutate: Option<f64>) -> Result<CovMatrix> {
    let mut cov = spec.covariance()?;
    if let Some(f) = mutate {
        cov.scale_dense(f);
    }
    Ok(cov)
}

fn describe(spec: &DesignSpec) -> String {
    let a = spec.arms();
    format!("{} with 2n={}, n_T={}", spec.label(), a.total(), a.n_treated())
}

fn enumeration_suite(opts: &VerifyOptions, t: &mut Tally) -> Check {
    for spec in enumerable_designs(opts.max_total) {
        let full = enumerate_design(&spec, DEFAULT_ENUMERATION_CAP).map_err(internal)?;
        let empirical = cov_empirical(&full).map_err(internal)?.dense();
        let closed = closed_form(&spec, opts.mutate_closed_form).map_err(internal)?.dense();
        let worst = (&empirical - &closed).amax();
        t.check(worst <= 1e-12, || format!("{}: |Σ_emp - Σ_closed| = {worst:e}", describe(&spec)))?;
        let (_, mean) = cov_from_support(
            spec.arms().total(),
            full.support().unwrap_or_default().iter().map(|(w, p)| (w.entries(), *p)),
        );
        let target = spec.arms().mean_assignment();
        let off = mean.iter().map(|m| (m - target).abs()).fold(0.0, f64::max);
        t.check(off <= 1e-12, || format!("{}: E[W] off by {off:e}", describe(&spec)))?;
    }
    Ok(())
}

fn random_outcomes(rng: &mut ChaCha8Rng, len: usize) -> (Vec<f64>, Vec<f64>) {
    let yt = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
    let yc = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
    (yt, yc)
}

fn unbiasedness_suite(opts: &VerifyOptions, t: &mut Tally) -> Check {
    let mut rng = stream_rng(derive_seed(opts.seed, &["verify", "unbiasedness"]), 0);
    let mut designs = enumerable_designs(opts.max_total);
    for arms in small_arms(opts.max_total).into_iter().filter(ArmSizes::is_equal) {
        let mu: Vec<f64> = (0..arms.total()).map(|_| rng.random()).collect();
        let w = exhaustive(&mu).allocation;
        designs.push(DesignSpec::perfect_balance_pair(w).map_err(internal)?);
    }
    for spec in designs {
        let arms = *spec.arms();
        let full = enumerate_design(&spec, DEFAULT_ENUMERATION_CAP).map_err(internal)?;
        let support = full.support().unwrap_or_default();
        let cov = closed_form(&spec, opts.mutate_closed_form).map_err(internal)?;
        for _ in 0..opts.random_pairs {
            let (yt, yc) = random_outcomes(&mut rng, arms.total());
            let tau = estimand_tau(&yt, &yc).map_err(internal)?;
            let mut mean = 0.0;
            for (w, p) in support {
                let closed = tau_hat(&yt, &yc, w, &arms).map_err(internal)?;
                let naive = tau_hat_naive(&yt, &yc, w, &arms).map_err(internal)?;
                t.check((closed - naive).abs() <= 1e-12, || {
                    format!("{}: τ̂ paths differ by {:e}", describe(&spec), closed - naive)
                })?;
                mean += p * closed;
            }
            t.check((mean - tau).abs() <= 1e-12, || {
                format!("{}: E[τ̂] - τ = {:e} at y_T={yt:?}, y_C={yc:?}", describe(&spec), mean - tau)
            })?;
            let brute = mse_exhaustive(&yt, &yc, &arms, support.iter().map(|(w, p)| (w, *p))).map_err(internal)?;
            let formula = match mse_over_design(&yt, &yc, &cov, &arms) {
                Ok(v) => v,
                Err(e) => return t.check(false, || format!("{}: {e}", describe(&spec))),
            };
            t.check((brute - formula).abs() <= 1e-12 * (1.0 + brute), || {
                format!("{}: exhaustive MSE {brute} vs quadratic form {formula}", describe(&spec))
            })?;
        }
    }
    Ok(())
}

/// Standardized errors of the Monte Carlo mean and central moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentGate {
    pub kind: ResponseKind,
    pub mu: f64,
    /// `(estimate - exact)/SE` for the mean and central moments 2, 3, 4.
    pub z: [f64; 4],
}

impl MomentGate {
    pub fn worst(&self) -> f64 {
        self.z.iter().map(|z| z.abs()).fold(0.0, f64::max)
    }
}

/// Draw `draws` responses at mean `mu` and compare the sample mean and the
/// central moments about the known mean against the exact values.
pub fn moment_gate<R: Rng + ?Sized>(
    kind: ResponseKind,
    mu: f64,
    dispersion: Option<f64>,
    draws: usize,
    rng: &mut R,
) -> Result<MomentGate> {
    let law = ResponseLaw::new(kind, mu, dispersion)?;
    let exact = central_moments(kind, mu, dispersion)?;
    let target = [0.0, exact.variance, exact.third, exact.fourth];
    // Running sums of d^k and d^{2k} for k = 1..4.
    let (mut s, mut s2) = ([0.0f64; 4], [0.0f64; 4]);
    for _ in 0..draws {
        let d = law.sample(rng) - mu;
        let mut p = 1.0;
        for k in 0..4 {
            p *= d;
            s[k] += p;
            s2[k] += p * p;
        }
    }
    let n = draws as f64;
    let z = std::array::from_fn(|k| {
        let mean = s[k] / n;
        let var = (s2[k] / n - mean * mean).max(0.0) * n / (n - 1.0);
        let se = (var / n).sqrt();
        let err = mean - target[k];
        if se > 0.0 {
            err / se
        } else if err.abs() <= 1e-12 * (1.0 + target[k].abs()) {
            0.0
        } else {
            f64::INFINITY
        }
    });
    Ok(MomentGate { kind, mu, z })
}

/// A mean drawn from a range typical of each kind's simulations.
pub fn random_mean<R: Rng + ?Sized>(kind: ResponseKind, rng: &mut R) -> f64 {
    match kind {
        ResponseKind::Continuous => rng.random_range(-3.0..3.0),
        ResponseKind::Incidence | ResponseKind::Proportion => rng.random_range(0.02..0.98),
        ResponseKind::Count => rng.random_range(0.1..10.0),
        ResponseKind::Survival => rng.random_range(0.1..5.0),
    }
}

fn moments_suite(opts: &VerifyOptions, t: &mut Tally) -> Check {
    for kind in ResponseKind::ALL {
        let mut rng = stream_rng(derive_seed(opts.seed, &["verify", "moments", kind.name()]), 0);
        for _ in 0..opts.moment_means {
            let mu = random_mean(kind, &mut rng);
            let gate = moment_gate(kind, mu, kind.default_dispersion(), opts.moment_draws, &mut rng).map_err(internal)?;
            t.check(gate.worst() < 4.0, || format!("{kind} at μ={mu}: z-scores {:?}", gate.z))?;
        }
    }
    Ok(())
}

fn corner_suite(opts: &VerifyOptions, t: &mut Tally) -> Check {
    let factor = opts.mutate_closed_form.unwrap_or(1.0);
    for arms in small_arms(opts.corner_max_total) {
        for b in admissible_block_counts(&arms) {
            let s = BlockStructure::contiguous(arms, b).expect("admissible count");
            let dense = CovMatrix::from_dense(crate::design::cov_block_closed(&s).dense()).map_err(internal)?;
            let (brute, arg) = worst_case_corner_brute(&dense, 1.0).map_err(internal)?;
            let closed = factor * worst_case_block_closed(&arms, b, 1.0).map_err(internal)?;
            let label = format!("BL({b}) with 2n={}, n_T={}", arms.total(), arms.n_treated());
            t.check((brute - closed).abs() <= 1e-9 * closed, || {
                format!("{label}: corner maximum {brute} vs closed form {closed}")
            })?;
            let size = s.block_size();
            if size.is_multiple_of(2) {
                let even = factor * worst_case_block_even(&arms, b, 1.0);
                t.check((brute - even).abs() <= 1e-9 * even, || {
                    format!("{label}: corner maximum {brute} vs r r̃ M² n²/(2n-B) = {even}")
                })?;
            }
            // The maximizer puts M on ⌊n_B/2⌋ or ⌈n_B/2⌉ entries of each block.
            let shaped = s.blocks().iter().all(|cell| {
                let on = cell.iter().filter(|&&i| arg[i] > 0.0).count();
                on == size / 2 || on == size.div_ceil(2)
            });
            t.check(shaped, || format!("{label}: maximizer {arg:?} is not half-filled per block"))?;
        }
    }
    Ok(())
}

/// A random design symmetrized over cyclic shifts, so that `E[W]` is
/// constant across subjects.
pub fn random_cyclic_design<R: Rng + ?Sized>(arms: ArmSizes, atoms: usize, rng: &mut R) -> Result<DesignSpec> {
    let total = arms.total();
    let mut support: Vec<(Allocation, f64)> = Vec::new();
    let weights: Vec<f64> = (0..atoms).map(|_| rng.random::<f64>() + 1e-3).collect();
    let z: f64 = weights.iter().sum();
    for w in weights {
        let treated = rand::seq::index::sample(rng, total, arms.n_treated()).into_vec();
        for shift in 0..total {
            let a = Allocation::from_treated(total, treated.iter().map(|i| (i + shift) % total));
            let p = w / z / total as f64;
            match support.iter_mut().find(|(b, _)| *b == a) {
                Some((_, q)) => *q += p,
                None => support.push((a, p)),
            }
        }
    }
    DesignSpec::explicit(arms, support)
}

fn minimax_suite(opts: &VerifyOptions, t: &mut Tally) -> Check {
    let mut rng = stream_rng(derive_seed(opts.seed, &["verify", "minimax"]), 0);
    for arms in small_arms(opts.max_total) {
        let crd = worst_case_continuous(&DesignSpec::complete(arms).covariance().map_err(internal)?);
        let label = format!("2n={}, n_T={}", arms.total(), arms.n_treated());
        let mut rivals = Vec::new();
        for b in admissible_block_counts(&arms) {
            rivals.push(DesignSpec::block(BlockStructure::contiguous(arms, b).expect("admissible")));
        }
        let atoms = binomial(arms.total(), arms.n_treated()).min(6) as usize;
        for _ in 0..20 {
            rivals.push(random_cyclic_design(arms, atoms.max(1), &mut rng).map_err(internal)?);
        }
        for rival in rivals {
            let lambda = worst_case_continuous(&rival.covariance().map_err(internal)?);
            t.check(lambda >= crd - 1e-10, || {
                format!("{label}: {} has λ_max {lambda} below complete randomization's {crd}", rival.label())
            })?;
        }
    }
    Ok(())
}
