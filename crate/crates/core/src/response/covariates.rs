use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};

use super::model::ResponseKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovariateDist {
    /// Uniform on `(-a, a)`.
    UniformSymmetric { a: f64 },
    /// `Exp(rate) - 1/rate`.
    MeanCenteredExponential { rate: f64 },
}

impl CovariateDist {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            CovariateDist::UniformSymmetric { a } => ("a", a),
            CovariateDist::MeanCenteredExponential { rate } => ("rate", rate),
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "covariate parameter `{name}` must be positive, got {v}"
            )))
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            CovariateDist::UniformSymmetric { a } => a * a / 3.0,
            CovariateDist::MeanCenteredExponential { rate } => 1.0 / (rate * rate),
        }
    }

    /// Uniform covariates used by the simulation grid: `U(-3,3)` for incidence, `U(-1,1)` otherwise.
    pub fn uniform_default(kind: ResponseKind) -> Self {
        match kind {
            ResponseKind::Incidence => CovariateDist::UniformSymmetric { a: 3.0 },
            _ => CovariateDist::UniformSymmetric { a: 1.0 },
        }
    }

    /// Long-tailed covariates with the same mean and variance as [`uniform_default`](Self::uniform_default).
    pub fn exponential_default(kind: ResponseKind) -> Self {
        let var = Self::uniform_default(kind).variance();
        CovariateDist::MeanCenteredExponential {
            rate: 1.0 / var.sqrt(),
        }
    }
}

impl fmt::Display for CovariateDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CovariateDist::UniformSymmetric { a } => write!(f, "uniform(-{a},{a})"),
            CovariateDist::MeanCenteredExponential { rate } => {
                write!(f, "exponential(rate={rate})-{}", 1.0 / rate)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateSpec {
    pub distribution: CovariateDist,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
}

impl CovariateSpec {
    pub fn new(distribution: CovariateDist, p: usize, n: usize, seed: u64) -> Result<Self> {
        distribution.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter("half-sample size must be positive".into()));
        }
        Ok(Self {
            distribution,
            p,
            n,
            seed,
        })
    }
}

/// Draw a `2n × p` matrix of iid covariates, filled row by row.
pub fn draw_covariates<R: Rng + ?Sized>(spec: &CovariateSpec, rng: &mut R) -> DMatrix<f64> {
    let rows = 2 * spec.n;
    let mut out = DMatrix::zeros(rows, spec.p);
    match spec.distribution {
        CovariateDist::UniformSymmetric { a } => {
            let d = Uniform::new(-a, a).expect("validated bound");
            fill(&mut out, || d.sample(rng));
        }
        CovariateDist::MeanCenteredExponential { rate } => {
            let d = Exp::new(rate).expect("validated rate");
            fill(&mut out, || d.sample(rng) - 1.0 / rate);
        }
    }
    out
}

fn fill(m: &mut DMatrix<f64>, mut f: impl FnMut() -> f64) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] = f();
        }
    }
}
