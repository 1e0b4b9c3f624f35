use rand::seq::index;
use rand::Rng;

use super::allocation::{binomial, for_each_combination, Allocation, ArmSizes};
use super::blocks::BlockStructure;
use super::cov::{cov_block_closed, cov_crd_closed, cov_from_support, CovMatrix};
use crate::error::{Error, Result};

/// Largest support `enumerate_design` will materialize.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum DesignFamily {
    /// i/BCRD: uniform over all allocations with `n_T` treated.
    CompleteRandomization,
    Block(BlockStructure),
    /// The two-point design `{w*, -w*}`.
    PerfectBalancePair(Allocation),
    Explicit(Vec<(Allocation, f64)>),
}

/// A design: a distribution over allocations with fixed arm sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    family: DesignFamily,
    arms: ArmSizes,
}

impl DesignSpec {
    pub fn complete(arms: ArmSizes) -> Self {
        Self {
            family: DesignFamily::CompleteRandomization,
            arms,
        }
    }

    pub fn block(structure: BlockStructure) -> Self {
        Self {
            arms: *structure.arms(),
            family: DesignFamily::Block(structure),
        }
    }

    pub fn perfect_balance_pair(w_star: Allocation) -> Result<Self> {
        if !w_star.len().is_multiple_of(2) || w_star.is_empty() {
            return Err(Error::Structural("allocation length must be even".into()));
        }
        let arms = ArmSizes::equal(w_star.len() / 2)?;
        if !w_star.is_valid_for(&arms) {
            return Err(Error::Unsupported(
                "perfect-balance pairs exist only under equal allocation".into(),
            ));
        }
        Ok(Self {
            family: DesignFamily::PerfectBalancePair(w_star),
            arms,
        })
    }

    pub fn explicit(arms: ArmSizes, support: Vec<(Allocation, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Structural("explicit design needs a support".into()));
        }
        let mut total = 0.0;
        for (k, (w, p)) in support.iter().enumerate() {
            if !w.is_valid_for(&arms) {
                return Err(Error::Structural(format!(
                    "support allocation {k} violates the {} allocation",
                    arms.ratio_label()
                )));
            }
            if p.is_nan() || *p < 0.0 {
                return Err(Error::Structural(format!(
                    "support allocation {k} has negative probability {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::Structural(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            family: DesignFamily::Explicit(support),
            arms,
        })
    }

    pub fn family(&self) -> &DesignFamily {
        &self.family
    }

    pub fn arms(&self) -> &ArmSizes {
        &self.arms
    }

    pub fn label(&self) -> String {
        match &self.family {
            DesignFamily::CompleteRandomization => "CRD".into(),
            DesignFamily::Block(b) => format!("BL({})", b.count()),
            DesignFamily::PerfectBalancePair(_) => "PB".into(),
            DesignFamily::Explicit(s) => format!("explicit({})", s.len()),
        }
    }

    /// Number of allocations in the support.
    pub fn support_size(&self) -> u128 {
        match &self.family {
            DesignFamily::CompleteRandomization => {
                binomial(self.arms.total(), self.arms.n_treated())
            }
            DesignFamily::Block(b) => {
                let per = binomial(b.block_size(), b.treated_per_block());
                (0..b.count()).fold(1u128, |acc, _| acc.saturating_mul(per))
            }
            DesignFamily::PerfectBalancePair(_) => 2,
            DesignFamily::Explicit(s) => s.len() as u128,
        }
    }

    pub fn support(&self) -> Option<&[(Allocation, f64)]> {
        match &self.family {
            DesignFamily::Explicit(s) => Some(s),
            _ => None,
        }
    }

    /// `E[W]`.
    pub fn mean(&self) -> Result<Vec<f64>> {
        let expected = self.arms.mean_assignment();
        let total = self.arms.total();
        match &self.family {
            DesignFamily::Explicit(support) => {
                let mut mean = vec![0.0; total];
                for (w, p) in support {
                    for (m, &e) in mean.iter_mut().zip(w.entries()) {
                        *m += p * e as f64;
                    }
                }
                if let Some(i) = mean.iter().position(|m| (m - expected).abs() > PROBABILITY_TOL) {
                    return Err(Error::AssumptionViolation(format!(
                        "subject {i} has E[W_i] = {}, expected {expected}",
                        mean[i]
                    )));
                }
                Ok(mean)
            }
            _ => Ok(vec![expected; total]),
        }
    }

    /// `Σ_W` in closed form where one exists, else from the explicit support.
    pub fn covariance(&self) -> Result<CovMatrix> {
        Ok(match &self.family {
            DesignFamily::CompleteRandomization => cov_crd_closed(&self.arms),
            DesignFamily::Block(b) => cov_block_closed(b),
            DesignFamily::PerfectBalancePair(w) => CovMatrix::rank_one(w.to_f64()),
            DesignFamily::Explicit(_) => cov_empirical(self)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Allocation {
        let total = self.arms.total();
        match &self.family {
            DesignFamily::CompleteRandomization => Allocation::from_treated(
                total,
                index::sample(rng, total, self.arms.n_treated()),
            ),
            DesignFamily::Block(b) => {
                let mut treated = Vec::with_capacity(self.arms.n_treated());
                for cell in b.blocks() {
                    treated.extend(
                        index::sample(rng, cell.len(), b.treated_per_block())
                            .into_iter()
                            .map(|k| cell[k]),
                    );
                }
                Allocation::from_treated(total, treated)
            }
            DesignFamily::PerfectBalancePair(w) => {
                if rng.random::<bool>() {
                    w.clone()
                } else {
                    w.negated()
                }
            }
            DesignFamily::Explicit(support) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, p) in support {
                    acc += p;
                    if u < acc {
                        return w.clone();
                    }
                }
                support.last().map(|(w, _)| w.clone()).unwrap()
            }
        }
    }
}

/// The full support of `spec` with its probabilities.
pub fn enumerate_design(spec: &DesignSpec, cap: u128) -> Result<DesignSpec> {
    let count = spec.support_size();
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let arms = *spec.arms();
    let total = arms.total();
    let support = match spec.family() {
        DesignFamily::Explicit(_) => return Ok(spec.clone()),
        DesignFamily::PerfectBalancePair(w) => vec![(w.clone(), 0.5), (w.negated(), 0.5)],
        DesignFamily::CompleteRandomization => {
            let p = 1.0 / count as f64;
            let mut out = Vec::with_capacity(count as usize);
            for_each_combination(total, arms.n_treated(), |t| {
                out.push((Allocation::from_treated(total, t.iter().copied()), p));
            });
            out
        }
        DesignFamily::Block(b) => {
            let mut per_block: Vec<Vec<usize>> = Vec::new();
            for_each_combination(b.block_size(), b.treated_per_block(), |t| {
                per_block.push(t.to_vec())
            });
            let p = 1.0 / count as f64;
            let mut out = Vec::with_capacity(count as usize);
            let mut choice = vec![0usize; b.count()];
            loop {
                let treated = choice.iter().enumerate().flat_map(|(blk, &c)| {
                    per_block[c].iter().map(move |&k| b.blocks()[blk][k])
                });
                out.push((Allocation::from_treated(total, treated), p));
                // odometer over per-block choices
                let mut pos = 0;
                while pos < choice.len() {
                    choice[pos] += 1;
                    if choice[pos] < per_block.len() {
                        break;
                    }
                    choice[pos] = 0;
                    pos += 1;
                }
                if pos == choice.len() {
                    break;
                }
            }
            out
        }
    };
    DesignSpec::explicit(arms, support)
}

/// `Σ_W` computed from the (enumerated) support.
pub fn cov_empirical(spec: &DesignSpec) -> Result<CovMatrix> {
    let owned;
    let support = match spec.support() {
        Some(s) => s,
        None => {
            owned = enumerate_design(spec, DEFAULT_ENUMERATION_CAP)?;
            owned.support().unwrap_or_default()
        }
    };
    let (cov, _) = cov_from_support(
        spec.arms().total(),
        support.iter().map(|(w, p)| (w.entries(), *p)),
    );
    Ok(cov)
}
