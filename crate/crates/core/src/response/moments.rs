use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::{clamp_proportion, mean_pair, ResponseKind, ResponseModel};
use crate::design::ArmSizes;
use crate::error::{Error, Result};

/// Variance, third and fourth central moments of one response law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralMoments {
    pub variance: f64,
    pub third: f64,
    pub fourth: f64,
}

impl CentralMoments {
    pub fn as_tuple(self) -> (f64, f64, f64) {
        (self.variance, self.third, self.fourth)
    }
}

fn central_from_raw(m1: f64, e2: f64, e3: f64, e4: f64) -> CentralMoments {
    let m1s = m1 * m1;
    CentralMoments {
        variance: e2 - m1s,
        third: e3 - 3.0 * m1 * e2 + 2.0 * m1s * m1,
        fourth: e4 - 4.0 * m1 * e3 + 6.0 * m1s * e2 - 3.0 * m1s * m1s,
    }
}

/// Raw moments of `Beta(a, b)` for orders 1..=4.
pub fn beta_raw_moments(a: f64, b: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    let mut acc = 1.0;
    for (j, slot) in out.iter_mut().enumerate() {
        let j = j as f64;
        acc *= (a + j) / (a + b + j);
        *slot = acc;
    }
    out
}

/// Raw moments `scale^j Γ(1 + j/k)` of a Weibull law, orders 1..=4.
pub fn weibull_raw_moments(scale: f64, k: f64) -> [f64; 4] {
    std::array::from_fn(|j| {
        let j = (j + 1) as f64;
        scale.powf(j) * libm::tgamma(1.0 + j / k)
    })
}

/// Exact central moments of the response law of `kind` at mean `mu`.
pub fn central_moments(kind: ResponseKind, mu: f64, dispersion: Option<f64>) -> Result<CentralMoments> {
    if !kind.admits_mean(mu) {
        return Err(Error::InvalidMean {
            kind: kind.name(),
            index: 0,
            value: mu,
        });
    }
    let disp = |name: &str| {
        dispersion
            .filter(|d| *d > 0.0 && d.is_finite())
            .ok_or_else(|| Error::InvalidParameter(format!("{kind} responses need a positive `{name}`")))
    };
    Ok(match kind {
        ResponseKind::Continuous => {
            let s2 = disp("sigma")?.powi(2);
            CentralMoments {
                variance: s2,
                third: 0.0,
                fourth: 3.0 * s2 * s2,
            }
        }
        ResponseKind::Incidence => {
            let v = mu * (1.0 - mu);
            CentralMoments {
                variance: v,
                third: v * (1.0 - 2.0 * mu),
                fourth: v * (1.0 - 3.0 * v),
            }
        }
        ResponseKind::Proportion => {
            let phi = disp("phi")?;
            let m = clamp_proportion(mu);
            // Work on the side of ½ nearer zero; 1 - X has the same even moments.
            let (lo, flip) = if m > 0.5 { (1.0 - m, -1.0) } else { (m, 1.0) };
            let [e1, e2, e3, e4] = beta_raw_moments(phi * lo, phi * (1.0 - lo));
            let c = central_from_raw(e1, e2, e3, e4);
            CentralMoments {
                third: flip * c.third,
                ..c
            }
        }
        ResponseKind::Count => CentralMoments {
            variance: mu,
            third: mu,
            fourth: mu + 3.0 * mu * mu,
        },
        ResponseKind::Survival => {
            let k = disp("k")?;
            let scale = mu / libm::tgamma(1.0 + 1.0 / k);
            let [e1, e2, e3, e4] = weibull_raw_moments(scale, k);
            central_from_raw(e1, e2, e3, e4)
        }
    })
}

/// Weighting of the treated and control noise in ρ and γ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentVariant {
    /// Moments of `Z = Z_T/r + Z_C/r̃`: weights `1/r²`, `1/r³`.
    #[default]
    Scaled,
    /// Weights `1/r` in both ρ and γ.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    pub kappa_z: f64,
    pub c_z: f64,
}

impl MomentProfile {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn rho_sum(&self) -> f64 {
        self.rho.iter().sum()
    }

    pub fn rho_norm_sq(&self) -> f64 {
        self.rho.iter().map(|r| r * r).sum()
    }

    /// The same subjects in the order `perm[0], perm[1], …`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            mu: pick(&self.mu),
            rho: pick(&self.rho),
            gamma: pick(&self.gamma),
            ..*self
        }
    }
}

/// Profile of subjects whose treated and control means are given directly.
pub fn profile_from_means(
    kind: ResponseKind,
    dispersion: Option<f64>,
    mu_t: &[f64],
    mu_c: &[f64],
    arms: &ArmSizes,
    variant: MomentVariant,
) -> Result<MomentProfile> {
    if mu_t.len() != arms.total() || mu_c.len() != arms.total() {
        return Err(Error::DimensionMismatch {
            expected: arms.total(),
            got: mu_t.len().min(mu_c.len()),
        });
    }
    let (r, rt) = (arms.r(), arms.r_tilde());
    let (r2, rt2) = (r * r, rt * rt);
    let mut out = MomentProfile {
        mu: Vec::with_capacity(mu_t.len()),
        rho: Vec::with_capacity(mu_t.len()),
        gamma: Vec::with_capacity(mu_t.len()),
        kappa_z: 0.0,
        c_z: 0.0,
    };
    for (i, (&mt, &mc)) in mu_t.iter().zip(mu_c).enumerate() {
        let at_index = |e: Error| match e {
            Error::InvalidMean { kind, value, .. } => Error::InvalidMean { kind, index: i, value },
            e => e,
        };
        let t = central_moments(kind, mt, dispersion).map_err(at_index)?;
        let c = central_moments(kind, mc, dispersion).map_err(at_index)?;
        let rho_z = t.variance / r2 + c.variance / rt2;
        let z4 = t.fourth / (r2 * r2) + 6.0 * t.variance * c.variance / (r2 * rt2) + c.fourth / (rt2 * rt2);
        out.kappa_z += z4 - 3.0 * rho_z * rho_z;
        let (rho, gamma) = match variant {
            MomentVariant::Scaled => (rho_z, t.third / (r2 * r) + c.third / (rt2 * rt)),
            MomentVariant::Linear => (t.variance / r + c.variance / rt, t.third / r + c.third / rt),
        };
        out.mu.push(mt / r + mc / rt);
        out.rho.push(rho);
        out.gamma.push(gamma);
    }
    out.c_z = arms.rr() * out.rho_sum();
    Ok(out)
}

/// Profile of the subjects with covariates `x` under `model`.
pub fn moment_profile(
    x: &DMatrix<f64>,
    model: &ResponseModel,
    arms: &ArmSizes,
    variant: MomentVariant,
) -> Result<MomentProfile> {
    if x.nrows() != arms.total() {
        return Err(Error::DimensionMismatch {
            expected: arms.total(),
            got: x.nrows(),
        });
    }
    let (mu_t, mu_c) = mean_pair(x, model)?;
    profile_from_means(model.kind, model.dispersion, &mu_t, &mu_c, arms, variant)
}
