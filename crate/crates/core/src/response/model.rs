use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Bernoulli, Beta, Distribution, Normal, Poisson, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Proportion means are clamped into `[ε, 1-ε]` before the Beta law is built.
pub const PROPORTION_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Continuous,
    Incidence,
    Proportion,
    Count,
    Survival,
}

impl ResponseKind {
    pub const ALL: [ResponseKind; 5] = [
        ResponseKind::Continuous,
        ResponseKind::Incidence,
        ResponseKind::Proportion,
        ResponseKind::Count,
        ResponseKind::Survival,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResponseKind::Continuous => "continuous",
            ResponseKind::Incidence => "incidence",
            ResponseKind::Proportion => "proportion",
            ResponseKind::Count => "count",
            ResponseKind::Survival => "survival",
        }
    }

    /// Inverse link applied to the linear predictor.
    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            ResponseKind::Continuous => eta,
            ResponseKind::Incidence | ResponseKind::Proportion => 1.0 / (1.0 + (-eta).exp()),
            ResponseKind::Count | ResponseKind::Survival => eta.exp(),
        }
    }

    /// Whether `mu` lies in the mean space of this kind.
    pub fn admits_mean(self, mu: f64) -> bool {
        mu.is_finite()
            && match self {
                ResponseKind::Continuous => true,
                ResponseKind::Incidence | ResponseKind::Proportion => mu > 0.0 && mu < 1.0,
                ResponseKind::Count | ResponseKind::Survival => mu > 0.0,
            }
    }

    /// Name of the dispersion parameter, if the kind has one.
    pub fn dispersion_name(self) -> Option<&'static str> {
        match self {
            ResponseKind::Continuous => Some("sigma"),
            ResponseKind::Proportion => Some("phi"),
            ResponseKind::Survival => Some("k"),
            ResponseKind::Incidence | ResponseKind::Count => None,
        }
    }

    /// Simulation default for the dispersion: σ = 1, φ = 2, k = 4.
    pub fn default_dispersion(self) -> Option<f64> {
        match self {
            ResponseKind::Continuous => Some(1.0),
            ResponseKind::Proportion => Some(2.0),
            ResponseKind::Survival => Some(4.0),
            ResponseKind::Incidence | ResponseKind::Count => None,
        }
    }
}

impl fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResponseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ResponseKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown response kind `{s}`")))
    }
}

/// Default covariate coefficients, truncated to the first `p`.
pub const DEFAULT_BETA: [f64; 5] = [0.2, -0.2, 0.2, -0.2, 0.2];
pub const DEFAULT_BETA0: f64 = -0.2;
pub const DEFAULT_BETA_T: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    pub kind: ResponseKind,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub beta_t: f64,
    pub dispersion: Option<f64>,
}

impl ResponseModel {
    pub fn new(
        kind: ResponseKind,
        beta0: f64,
        beta: Vec<f64>,
        beta_t: f64,
        dispersion: Option<f64>,
    ) -> Result<Self> {
        let model = Self {
            kind,
            beta0,
            beta,
            beta_t,
            dispersion,
        };
        model.validate()?;
        Ok(model)
    }

    /// The simulation model for `kind` with `p` covariates.
    pub fn simulation_default(kind: ResponseKind, p: usize) -> Result<Self> {
        if p == 0 || p > DEFAULT_BETA.len() {
            return Err(Error::InvalidParameter(format!(
                "default coefficients cover 1..={} covariates, got {p}",
                DEFAULT_BETA.len()
            )));
        }
        Self::new(
            kind,
            DEFAULT_BETA0,
            DEFAULT_BETA[..p].to_vec(),
            DEFAULT_BETA_T,
            kind.default_dispersion(),
        )
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    fn validate(&self) -> Result<()> {
        match (self.kind.dispersion_name(), self.dispersion) {
            (Some(name), None) => Err(Error::InvalidParameter(format!(
                "{} responses need a dispersion `{name}`",
                self.kind
            ))),
            (Some(name), Some(d)) if !(d > 0.0 && d.is_finite()) => Err(Error::InvalidParameter(
                format!("dispersion `{name}` must be positive, got {d}"),
            )),
            (None, Some(_)) => Err(Error::InvalidParameter(format!(
                "{} responses take no dispersion parameter",
                self.kind
            ))),
            _ => Ok(()),
        }
    }
}

/// Per-subject treated and control means `(μ_T, μ_C)`.
pub fn mean_pair(x: &DMatrix<f64>, model: &ResponseModel) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.ncols() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            got: x.ncols(),
        });
    }
    let mut mu_t = Vec::with_capacity(x.nrows());
    let mut mu_c = Vec::with_capacity(x.nrows());
    for i in 0..x.nrows() {
        let eta = model.beta0 + (0..x.ncols()).map(|j| model.beta[j] * x[(i, j)]).sum::<f64>();
        if !eta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite linear predictor at subject {i}"
            )));
        }
        for (out, shift) in [(&mut mu_t, model.beta_t), (&mut mu_c, -model.beta_t)] {
            let mu = model.kind.inverse_link(eta + shift);
            if !model.kind.admits_mean(mu) {
                return Err(Error::InvalidMean {
                    kind: model.kind.name(),
                    index: i,
                    value: mu,
                });
            }
            out.push(mu);
        }
    }
    Ok((mu_t, mu_c))
}

/// Sampler for one subject's response law at mean `μ`.
#[derive(Debug, Clone, Copy)]
pub enum ResponseLaw {
    Normal(Normal<f64>),
    Bernoulli(Bernoulli),
    Beta(Beta<f64>),
    Poisson(Poisson<f64>),
    Weibull(Weibull<f64>),
}

impl ResponseLaw {
    pub fn new(kind: ResponseKind, mu: f64, dispersion: Option<f64>) -> Result<Self> {
        let invalid = || Error::InvalidMean {
            kind: kind.name(),
            index: 0,
            value: mu,
        };
        if !kind.admits_mean(mu) {
            return Err(invalid());
        }
        let param = |name: &str| {
            dispersion.ok_or_else(|| {
                Error::InvalidParameter(format!("{kind} responses need `{name}`"))
            })
        };
        let bad = |e: &dyn fmt::Display| Error::InvalidParameter(e.to_string());
        Ok(match kind {
            ResponseKind::Continuous => {
                ResponseLaw::Normal(Normal::new(mu, param("sigma")?).map_err(|e| bad(&e))?)
            }
            ResponseKind::Incidence => {
                ResponseLaw::Bernoulli(Bernoulli::new(mu).map_err(|e| bad(&e))?)
            }
            ResponseKind::Proportion => {
                let phi = param("phi")?;
                let m = clamp_proportion(mu);
                ResponseLaw::Beta(Beta::new(phi * m, phi * (1.0 - m)).map_err(|e| bad(&e))?)
            }
            ResponseKind::Count => ResponseLaw::Poisson(Poisson::new(mu).map_err(|e| bad(&e))?),
            ResponseKind::Survival => {
                let k = param("k")?;
                let scale = mu / libm::tgamma(1.0 + 1.0 / k);
                ResponseLaw::Weibull(Weibull::new(scale, k).map_err(|e| bad(&e))?)
            }
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ResponseLaw::Normal(d) => d.sample(rng),
            ResponseLaw::Bernoulli(d) => d.sample(rng) as u8 as f64,
            ResponseLaw::Beta(d) => d.sample(rng),
            ResponseLaw::Poisson(d) => d.sample(rng),
            ResponseLaw::Weibull(d) => d.sample(rng),
        }
    }
}

pub fn clamp_proportion(mu: f64) -> f64 {
    mu.clamp(PROPORTION_CLAMP, 1.0 - PROPORTION_CLAMP)
}

/// One draw from the response law of `kind` at mean `mu`.
pub fn draw_response<R: Rng + ?Sized>(
    kind: ResponseKind,
    mu: f64,
    dispersion: Option<f64>,
    rng: &mut R,
) -> Result<f64> {
    Ok(ResponseLaw::new(kind, mu, dispersion)?.sample(rng))
}
