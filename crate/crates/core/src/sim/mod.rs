//! Monte Carlo grid over response kinds, covariate counts, allocation ratios
//! and block counts.
//!
//! Within a row `(kind, p, ratio)` every block count sees the same `N_y`
//! potential-outcome draws, so differences between block counts are not
//! blurred by independent noise. Draws are produced in fixed-size batches,
//! each on its own pre-assigned ChaCha stream, which keeps results identical
//! for any worker count.

mod output;

use nalgebra::DMatrix;
use serde::Serialize;

pub use output::{to_csv_string, meta_path, meta_string, write_csv, write_meta, CSV_COLUMNS};

use crate::criteria::{summarize, CriteriaSummary};
use crate::design::{
    admissible_block_counts, block_shape, build_blocks_bivariate, build_blocks_univariate, cov_block_closed,
    ArmSizes, BlockStructure, CovMatrix,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::response::{
    draw_covariates, mean_pair, profile_from_means, CovariateDist, CovariateSpec, MomentProfile, MomentVariant,
    ResponseKind, ResponseLaw, ResponseModel, DEFAULT_BETA, DEFAULT_BETA0, DEFAULT_BETA_T,
};
use crate::seed::{derive_seed, stream_rng};

pub const DEFAULT_SEED: u64 = 1729;
pub const DEFAULT_N: usize = 48;
pub const DEFAULT_NY: usize = 100_000;
pub const DEFAULT_Q: f64 = 0.95;
pub const DEFAULT_CQ: f64 = 1.645;
pub const DEFAULT_BATCH: usize = 1024;
pub const MIN_NY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateFamily {
    #[default]
    Uniform,
    Exponential,
}

impl CovariateFamily {
    pub fn name(self) -> &'static str {
        match self {
            CovariateFamily::Uniform => "uniform",
            CovariateFamily::Exponential => "exponential",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(CovariateFamily::Uniform),
            "exponential" => Ok(CovariateFamily::Exponential),
            _ => Err(Error::Config(format!(
                "unknown covariate family `{s}` (expected uniform or exponential)"
            ))),
        }
    }

    /// Covariate law used for `kind`.
    pub fn distribution(self, kind: ResponseKind) -> CovariateDist {
        match self {
            CovariateFamily::Uniform => CovariateDist::uniform_default(kind),
            CovariateFamily::Exponential => CovariateDist::exponential_default(kind),
        }
    }
}

/// One allocation ratio `control:treated` and the block counts run under it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPlan {
    pub control: usize,
    pub treated: usize,
    pub blocks: Vec<usize>,
}

impl AllocationPlan {
    /// All admissible block counts for the ratio.
    pub fn admissible(n: usize, control: usize, treated: usize) -> Result<Self> {
        let arms = ArmSizes::from_ratio(n, control, treated)?;
        Ok(Self {
            control,
            treated,
            blocks: admissible_block_counts(&arms),
        })
    }

    pub fn arms(&self, n: usize) -> Result<ArmSizes> {
        ArmSizes::from_ratio(n, self.control, self.treated)
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.control, self.treated)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub plans: Vec<AllocationPlan>,
    pub p_list: Vec<usize>,
    pub kinds: Vec<ResponseKind>,
    pub n_y: usize,
    pub q: f64,
    pub c_q: f64,
    pub covariates: CovariateFamily,
    pub seed: u64,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub beta_t: f64,
    pub sigma: f64,
    pub phi: f64,
    pub k: f64,
    pub moment_variant: MomentVariant,
    pub batch_size: usize,
    pub execution: Execution,
}

impl Default for SimConfig {
    fn default() -> Self {
        let plans = [(1, 1), (2, 1)]
            .into_iter()
            .map(|(c, t)| AllocationPlan::admissible(DEFAULT_N, c, t).expect("default ratios divide 2n"))
            .collect();
        Self {
            n: DEFAULT_N,
            plans,
            p_list: vec![1, 2, 5],
            kinds: ResponseKind::ALL.to_vec(),
            n_y: DEFAULT_NY,
            q: DEFAULT_Q,
            c_q: DEFAULT_CQ,
            covariates: CovariateFamily::Uniform,
            seed: DEFAULT_SEED,
            beta0: DEFAULT_BETA0,
            beta: DEFAULT_BETA.to_vec(),
            beta_t: DEFAULT_BETA_T,
            sigma: 1.0,
            phi: 2.0,
            k: 4.0,
            moment_variant: MomentVariant::default(),
            batch_size: DEFAULT_BATCH,
            execution: Execution::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_y < MIN_NY {
            return bad(format!("N_y must be at least {MIN_NY}, got {}", self.n_y));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {}", self.q));
        }
        if !self.c_q.is_finite() {
            return bad("c_q must be finite".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if let Some(&p) = self.p_list.iter().find(|&&p| p == 0 || p > self.beta.len()) {
            return bad(format!("p = {p} needs 1..={} coefficients", self.beta.len()));
        }
        for plan in &self.plans {
            let arms = plan.arms(self.n)?;
            for &b in &plan.blocks {
                block_shape(&arms, b)?;
            }
        }
        for kind in &self.kinds {
            self.model(*kind, 1)?;
        }
        Ok(())
    }

    pub fn dispersion(&self, kind: ResponseKind) -> Option<f64> {
        match kind {
            ResponseKind::Continuous => Some(self.sigma),
            ResponseKind::Proportion => Some(self.phi),
            ResponseKind::Survival => Some(self.k),
            ResponseKind::Incidence | ResponseKind::Count => None,
        }
    }

    pub fn model(&self, kind: ResponseKind, p: usize) -> Result<ResponseModel> {
        let beta = self
            .beta
            .get(..p)
            .ok_or_else(|| Error::InvalidParameter(format!("p = {p} exceeds the coefficient list")))?
            .to_vec();
        ResponseModel::new(kind, self.beta0, beta, self.beta_t, self.dispersion(kind))
    }

    /// The fixed covariate matrix of `(kind, p)`, shared by every ratio.
    pub fn covariate_matrix(&self, kind: ResponseKind, p: usize) -> Result<DMatrix<f64>> {
        let key = [
            "covariates",
            self.covariates.name(),
            kind.name(),
            &p.to_string(),
        ];
        let seed = derive_seed(self.seed, &key);
        let spec = CovariateSpec::new(self.covariates.distribution(kind), p, self.n, seed)?;
        Ok(draw_covariates(&spec, &mut stream_rng(seed, 0)))
    }

    /// Seed of the potential-outcome draws of one row.
    pub fn row_seed(&self, kind: ResponseKind, p: usize, plan: &AllocationPlan) -> u64 {
        derive_seed(
            self.seed,
            &["draws", self.covariates.name(), kind.name(), &p.to_string(), &plan.label()],
        )
    }
}

/// Block structure of `BL(B)` built from the covariates: sorted on the single
/// covariate when `p = 1`, on the first two otherwise.
pub fn blocks_from_covariates(x: &DMatrix<f64>, arms: ArmSizes, blocks: usize) -> Result<BlockStructure> {
    if x.ncols() == 1 {
        build_blocks_univariate(x.column(0).as_slice(), arms, blocks)
    } else {
        build_blocks_bivariate(x, arms, blocks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResultRow {
    pub kind: ResponseKind,
    pub p: usize,
    pub ratio: String,
    #[serde(rename = "B")]
    pub blocks: usize,
    pub n: usize,
    #[serde(rename = "N_y")]
    pub n_y: usize,
    pub q: f64,
    pub c_q: f64,
    pub seed: u64,
    pub empirical_q: f64,
    pub approx_q_mc: f64,
    #[serde(rename = "analytic_Q")]
    pub analytic_q: f64,
    pub mean_mse_mc: f64,
    pub var_mse_mc: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "kappa_Z")]
    pub kappa_z: f64,
    #[serde(rename = "c_Z")]
    pub c_z: f64,
    #[serde(skip)]
    pub analytic: CriteriaSummary,
    /// Fourth central moment of the MSE draws.
    #[serde(skip)]
    pub m4_mse_mc: f64,
}

impl SimResultRow {
    pub fn sd_mse_mc(&self) -> f64 {
        self.var_mse_mc.sqrt()
    }

    /// Standard error of `mean_mse_mc`.
    pub fn mean_se(&self) -> f64 {
        (self.var_mse_mc / self.n_y as f64).sqrt()
    }

    /// Large-sample standard error of `var_mse_mc`.
    pub fn var_se(&self) -> f64 {
        ((self.m4_mse_mc - self.var_mse_mc.powi(2)).max(0.0) / self.n_y as f64).sqrt()
    }

    pub fn approx_gap(&self) -> f64 {
        (self.approx_q_mc - self.empirical_q).abs() / self.empirical_q
    }
}

/// Everything about one row that does not depend on the draws.
pub struct RowSetup {
    pub kind: ResponseKind,
    pub p: usize,
    pub plan: AllocationPlan,
    pub arms: ArmSizes,
    pub profile: MomentProfile,
    pub laws: Vec<(ResponseLaw, ResponseLaw)>,
    pub designs: Vec<(usize, CovMatrix)>,
    pub seed: u64,
}

impl RowSetup {
    pub fn new(config: &SimConfig, kind: ResponseKind, p: usize, plan: &AllocationPlan) -> Result<Self> {
        let x = config.covariate_matrix(kind, p)?;
        Self::with_covariates(config, kind, p, plan, &x)
    }

    pub fn with_covariates(
        config: &SimConfig,
        kind: ResponseKind,
        p: usize,
        plan: &AllocationPlan,
        x: &DMatrix<f64>,
    ) -> Result<Self> {
        let arms = plan.arms(config.n)?;
        let model = config.model(kind, p)?;
        let (mu_t, mu_c) = mean_pair(x, &model)?;
        let dispersion = model.dispersion;
        let profile = profile_from_means(kind, dispersion, &mu_t, &mu_c, &arms, config.moment_variant)?;
        let laws = mu_t
            .iter()
            .zip(&mu_c)
            .enumerate()
            .map(|(i, (&t, &c))| {
                let law = |mu| {
                    ResponseLaw::new(kind, mu, dispersion).map_err(|e| match e {
                        Error::InvalidMean { kind, value, .. } => Error::InvalidMean { kind, index: i, value },
                        e => e,
                    })
                };
                Ok((law(t)?, law(c)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let designs = plan
            .blocks
            .iter()
            .map(|&b| Ok((b, cov_block_closed(&blocks_from_covariates(x, arms, b)?))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            p,
            plan: plan.clone(),
            arms,
            profile,
            laws,
            designs,
            seed: config.row_seed(kind, p, plan),
        })
    }

    /// MSE of every design on the `count` draws of stream `batch`, draw-major.
    fn draw_batch(&self, batch: u64, count: usize) -> Vec<f64> {
        let mut rng = stream_rng(self.seed, batch);
        let (r, rt) = (self.arms.r(), self.arms.r_tilde());
        let norm = (self.arms.total() as f64).powi(2);
        let mut v = vec![0.0; self.laws.len()];
        let mut out = Vec::with_capacity(count * self.designs.len());
        for _ in 0..count {
            for (slot, (lt, lc)) in v.iter_mut().zip(&self.laws) {
                let yt = lt.sample(&mut rng);
                let yc = lc.sample(&mut rng);
                *slot = yt / r + yc / rt;
            }
            for (_, cov) in &self.designs {
                out.push(cov.quadratic_form(&v).expect("dimensions fixed at setup") / norm);
            }
        }
        out
    }

    /// Per-design MSE samples over `n_y` draws.
    pub fn draw(&self, n_y: usize, batch_size: usize, execution: Execution) -> Vec<Vec<f64>> {
        let batches = n_y.div_ceil(batch_size);
        let chunks = execution.map(batches, |k| {
            let count = batch_size.min(n_y - k * batch_size);
            self.draw_batch(k as u64, count)
        });
        let d = self.designs.len();
        let mut per_design = vec![Vec::with_capacity(n_y); d];
        for chunk in chunks {
            for row in chunk.chunks_exact(d) {
                for (j, &x) in row.iter().enumerate() {
                    per_design[j].push(x);
                }
            }
        }
        per_design
    }
}

/// Upper order statistic at 1-based rank `⌈q·N⌉`.
pub fn empirical_quantile(samples: &[f64], q: f64) -> f64 {
    assert!(!samples.is_empty(), "quantile of an empty sample");
    let rank = ((q * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    let mut buf = samples.to_vec();
    let (_, x, _) = buf.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *x
}

/// Mean, unbiased variance and fourth central moment.
pub fn sample_stats(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in samples {
        let d2 = (x - mean).powi(2);
        m2 += d2;
        m4 += d2 * d2;
    }
    (mean, m2 / (n - 1.0), m4 / n)
}

fn assemble(config: &SimConfig, setup: &RowSetup, blocks: usize, cov: &CovMatrix, mse: &[f64]) -> Result<SimResultRow> {
    let analytic = summarize(&setup.profile, cov, &setup.arms, config.c_q)?;
    let (mean, var, m4) = sample_stats(mse);
    Ok(SimResultRow {
        kind: setup.kind,
        p: setup.p,
        ratio: setup.plan.label(),
        blocks,
        n: config.n,
        n_y: config.n_y,
        q: config.q,
        c_q: config.c_q,
        seed: config.seed,
        empirical_q: empirical_quantile(mse, config.q),
        approx_q_mc: mean + config.c_q * var.sqrt(),
        analytic_q: analytic.q_q,
        mean_mse_mc: mean,
        var_mse_mc: var,
        b1: analytic.terms.b1,
        b2: analytic.terms.b2,
        s: analytic.terms.s,
        r: analytic.terms.r,
        kappa_z: setup.profile.kappa_z,
        c_z: setup.profile.c_z,
        analytic,
        m4_mse_mc: m4,
    })
}

/// All block counts of one row on shared draws.
pub fn run_row(config: &SimConfig, kind: ResponseKind, p: usize, plan: &AllocationPlan) -> Result<Vec<SimResultRow>> {
    let setup = RowSetup::new(config, kind, p, plan)?;
    let samples = setup.draw(config.n_y, config.batch_size, config.execution);
    setup
        .designs
        .iter()
        .zip(&samples)
        .map(|((b, cov), mse)| assemble(config, &setup, *b, cov, mse))
        .collect()
}

/// Identifies one grid cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub kind: ResponseKind,
    pub p: usize,
    pub control: usize,
    pub treated: usize,
    pub blocks: usize,
}

/// One cell; identical to the matching row entry of [`run_grid`].
pub fn run_cell(config: &SimConfig, cell: &Cell) -> Result<SimResultRow> {
    let plan = AllocationPlan {
        control: cell.control,
        treated: cell.treated,
        blocks: vec![cell.blocks],
    };
    let setup = RowSetup::new(config, cell.kind, cell.p, &plan)?;
    let samples = setup.draw(config.n_y, config.batch_size, config.execution);
    let (b, cov) = &setup.designs[0];
    assemble(config, &setup, *b, cov, &samples[0])
}

/// The full grid in `(ratio, kind, p, B)` order.
pub fn run_grid(config: &SimConfig) -> Result<Vec<SimResultRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for plan in &config.plans {
        for &kind in &config.kinds {
            for &p in &config.p_list {
                rows.extend(run_row(config, kind, p, plan)?);
            }
        }
    }
    Ok(rows)
}

/// [`run_grid`] with variance-matched mean-centered exponential covariates.
pub fn run_exponential_grid(config: &SimConfig) -> Result<Vec<SimResultRow>> {
    run_grid(&SimConfig {
        covariates: CovariateFamily::Exponential,
        ..config.clone()
    })
}

/// Block count with the smallest value of `metric` among `rows` of one
/// `(kind, p, ratio)`; ties resolve to the smaller block count.
pub fn argmin_blocks(rows: &[&SimResultRow], metric: impl Fn(&SimResultRow) -> f64) -> Option<usize> {
    rows.iter()
        .min_by(|a, b| metric(a).total_cmp(&metric(b)).then(a.blocks.cmp(&b.blocks)))
        .map(|r| r.blocks)
}
