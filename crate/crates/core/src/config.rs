//! Flat TOML configuration shared by every subcommand.
//!
//! Keys mirror the field names of the types they feed. Every key is
//! optional; absent keys fall back to the simulation defaults. Unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{gcd, ArmSizes, BlockStructure, DesignSpec};
use crate::error::{Error, Result};
use crate::response::{MomentVariant, ResponseKind, ResponseModel};
use crate::sim::{AllocationPlan, CovariateFamily, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Crd,
    Block,
    Pb,
}

impl FamilyName {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crd" | "bcrd" | "complete" => Ok(FamilyName::Crd),
            "block" | "bl" => Ok(FamilyName::Block),
            "pb" | "perfect_balance" => Ok(FamilyName::Pb),
            _ => Err(Error::Config(format!("unknown design family `{s}` (expected crd, block or pb)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub family: Option<FamilyName>,
    pub n: Option<usize>,
    #[serde(rename = "n_T")]
    pub n_t: Option<usize>,
    #[serde(rename = "B")]
    pub blocks: Option<usize>,
    pub seed: Option<u64>,
    pub kind: Option<ResponseKind>,
    pub beta0: Option<f64>,
    pub beta: Option<Vec<f64>>,
    #[serde(rename = "beta_T")]
    pub beta_t: Option<f64>,
    pub sigma: Option<f64>,
    pub phi: Option<f64>,
    pub k: Option<f64>,
    pub covariate_dist: Option<String>,
    pub p: Option<usize>,
    #[serde(rename = "N_y")]
    pub n_y: Option<usize>,
    pub q: Option<f64>,
    pub c_q: Option<f64>,
    pub p_list: Option<Vec<usize>>,
    pub kinds: Option<Vec<ResponseKind>>,
    pub ratios: Option<Vec<String>>,
    #[serde(rename = "B_list")]
    pub block_list: Option<Vec<usize>>,
    pub batch_size: Option<usize>,
    pub moment_variant: Option<MomentVariant>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub threads: Option<usize>,
}

/// Parse `"c:t"` into `(control, treated)`.
pub fn parse_ratio(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("ratio `{s}` is not of the form control:treated"));
    let (c, t) = s.split_once(':').ok_or_else(bad)?;
    let c: usize = c.trim().parse().map_err(|_| bad())?;
    let t: usize = t.trim().parse().map_err(|_| bad())?;
    if c == 0 || t == 0 {
        return Err(bad());
    }
    Ok((c, t))
}

impl FileConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(crate::sim::DEFAULT_SEED)
    }

    /// Arm sizes from `n` and `n_T` (equal allocation when `n_T` is absent).
    pub fn arms(&self) -> Result<ArmSizes> {
        let n = self.n.unwrap_or(crate::sim::DEFAULT_N);
        ArmSizes::new(n, self.n_t.unwrap_or(n))
    }

    pub fn covariate_family(&self) -> Result<CovariateFamily> {
        self.covariate_dist
            .as_deref()
            .map_or(Ok(CovariateFamily::Uniform), CovariateFamily::parse)
    }

    /// The design named by `family` and `B`. Perfect-balance pairs need the
    /// subject means, so they are built by the caller.
    pub fn design(&self) -> Result<DesignSpec> {
        let arms = self.arms()?;
        let implied = if self.blocks.is_some() { FamilyName::Block } else { FamilyName::Crd };
        match self.family.unwrap_or(implied) {
            FamilyName::Crd => match self.blocks {
                None | Some(1) => Ok(DesignSpec::complete(arms)),
                Some(b) => Err(Error::Config(format!("family `crd` is a single block; got B = {b}"))),
            },
            FamilyName::Block => {
                let b = self
                    .blocks
                    .ok_or_else(|| Error::Config("family `block` needs `B`".into()))?;
                Ok(DesignSpec::block(BlockStructure::contiguous(arms, b)?))
            }
            FamilyName::Pb => Err(Error::Unsupported(
                "perfect-balance pairs are built from subject means".into(),
            )),
        }
    }

    /// Simulation configuration with these keys applied over the defaults.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let base = SimConfig::default();
        let n = self.n.unwrap_or(base.n);
        let ratios: Vec<(usize, usize)> = match (&self.n_t, &self.ratios) {
            (Some(nt), _) => {
                let arms = ArmSizes::new(n, *nt)?;
                let g = gcd(arms.n_control(), arms.n_treated());
                vec![(arms.n_control() / g, arms.n_treated() / g)]
            }
            (None, Some(list)) => list.iter().map(|s| parse_ratio(s)).collect::<Result<_>>()?,
            // The 2:1 variant needs 3 | 2n; drop it quietly for other sizes.
            (None, None) => [(1, 1), (2, 1)]
                .into_iter()
                .filter(|&(c, t)| (2 * n).is_multiple_of(c + t))
                .collect(),
        };
        let block_list = self.block_list.clone().or(self.blocks.map(|b| vec![b]));
        let plans = ratios
            .into_iter()
            .map(|(c, t)| {
                let mut plan = AllocationPlan::admissible(n, c, t)?;
                if let Some(list) = &block_list {
                    plan.blocks = list.clone();
                }
                Ok(plan)
            })
            .collect::<Result<Vec<_>>>()?;
        let config = SimConfig {
            n,
            plans,
            p_list: self.p.map(|p| vec![p]).or(self.p_list.clone()).unwrap_or(base.p_list),
            kinds: self.kind.map(|k| vec![k]).or(self.kinds.clone()).unwrap_or(base.kinds),
            n_y: self.n_y.unwrap_or(base.n_y),
            q: self.q.unwrap_or(base.q),
            c_q: self.c_q.unwrap_or(base.c_q),
            covariates: self.covariate_family()?,
            seed: self.seed_or_default(),
            beta0: self.beta0.unwrap_or(base.beta0),
            beta: self.beta.clone().unwrap_or(base.beta),
            beta_t: self.beta_t.unwrap_or(base.beta_t),
            sigma: self.sigma.unwrap_or(base.sigma),
            phi: self.phi.unwrap_or(base.phi),
            k: self.k.unwrap_or(base.k),
            moment_variant: self.moment_variant.unwrap_or_default(),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            execution: base.execution,
        };
        config.validate()?;
        Ok(config)
    }

    /// Keys that reproduce `config` exactly.
    pub fn from_sim(config: &SimConfig) -> Self {
        let shared = config.plans.first().map(|p| p.blocks.clone());
        let defaults = config.plans.iter().all(|p| {
            AllocationPlan::admissible(config.n, p.control, p.treated).is_ok_and(|d| d.blocks == p.blocks)
        });
        let block_list = match shared {
            Some(list) if !defaults && config.plans.iter().all(|p| p.blocks == list) => Some(list),
            _ => None,
        };
        Self {
            n: Some(config.n),
            seed: Some(config.seed),
            beta0: Some(config.beta0),
            beta: Some(config.beta.clone()),
            beta_t: Some(config.beta_t),
            sigma: Some(config.sigma),
            phi: Some(config.phi),
            k: Some(config.k),
            covariate_dist: Some(config.covariates.name().to_string()),
            n_y: Some(config.n_y),
            q: Some(config.q),
            c_q: Some(config.c_q),
            p_list: Some(config.p_list.clone()),
            kinds: Some(config.kinds.clone()),
            ratios: Some(config.plans.iter().map(AllocationPlan::label).collect()),
            block_list,
            batch_size: Some(config.batch_size),
            moment_variant: Some(config.moment_variant),
            ..Self::default()
        }
    }

    /// Response model for `kind` (default continuous) with `p` covariates.
    pub fn response_model(&self) -> Result<ResponseModel> {
        let sim = self.sim_config()?;
        let kind = self.kind.unwrap_or(ResponseKind::Continuous);
        sim.model(kind, self.p.unwrap_or(1))
    }
}
