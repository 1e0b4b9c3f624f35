//! Potential outcomes, the sample average treatment effect and the
//! difference-in-means estimator.

use crate::design::{Allocation, ArmSizes, CovMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub y_t: Vec<f64>,
    pub y_c: Vec<f64>,
}

impl PotentialOutcomes {
    pub fn new(y_t: Vec<f64>, y_c: Vec<f64>) -> Result<Self> {
        check_len(y_t.len(), y_c.len())?;
        Ok(Self { y_t, y_c })
    }

    pub fn len(&self) -> usize {
        self.y_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_t.is_empty()
    }

    /// `v = y_T/r + y_C/r̃`.
    pub fn v(&self, arms: &ArmSizes) -> Vec<f64> {
        potential_vector(&self.y_t, &self.y_c, arms)
    }

    pub fn tau(&self) -> f64 {
        estimand_tau(&self.y_t, &self.y_c).expect("lengths checked on construction")
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `v = y_T/r + y_C/r̃`.
pub fn potential_vector(y_t: &[f64], y_c: &[f64], arms: &ArmSizes) -> Vec<f64> {
    let (r, rt) = (arms.r(), arms.r_tilde());
    y_t.iter().zip(y_c).map(|(t, c)| t / r + c / rt).collect()
}

/// Responses revealed by `w`: `y_T,i` where `w_i = +1`, `y_C,i` otherwise.
pub fn observed_responses(y_t: &[f64], y_c: &[f64], w: &Allocation) -> Result<Vec<f64>> {
    check_len(y_t.len(), y_c.len())?;
    check_len(y_t.len(), w.len())?;
    Ok(w
        .entries()
        .iter()
        .zip(y_t.iter().zip(y_c))
        .map(|(&wi, (&t, &c))| if wi > 0 { t } else { c })
        .collect())
}

/// `½(y_T + y_C + diag(w)(y_T - y_C))`.
pub fn observed_responses_linear(y_t: &[f64], y_c: &[f64], w: &Allocation) -> Result<Vec<f64>> {
    check_len(y_t.len(), y_c.len())?;
    check_len(y_t.len(), w.len())?;
    Ok(w
        .entries()
        .iter()
        .zip(y_t.iter().zip(y_c))
        .map(|(&wi, (&t, &c))| 0.5 * (t + c + wi as f64 * (t - c)))
        .collect())
}

/// `(1/2n) 1ᵀ(y_T - y_C)`.
pub fn estimand_tau(y_t: &[f64], y_c: &[f64]) -> Result<f64> {
    check_len(y_t.len(), y_c.len())?;
    if y_t.is_empty() {
        return Ok(0.0);
    }
    Ok(y_t.iter().zip(y_c).map(|(t, c)| t - c).sum::<f64>() / y_t.len() as f64)
}

fn check_allocation(w: &Allocation, arms: &ArmSizes, len: usize) -> Result<()> {
    check_len(arms.total(), len)?;
    if !w.is_valid_for(arms) {
        return Err(Error::AssumptionViolation(format!(
            "allocation treats {} of {} subjects, expected {}",
            w.n_treated(),
            w.len(),
            arms.n_treated()
        )));
    }
    Ok(())
}

/// `(1/2n)[1ᵀ(y_T/r - y_C/r̃) + wᵀ(y_T/r + y_C/r̃)]`.
pub fn tau_hat(y_t: &[f64], y_c: &[f64], w: &Allocation, arms: &ArmSizes) -> Result<f64> {
    check_len(y_t.len(), y_c.len())?;
    check_allocation(w, arms, y_t.len())?;
    let (r, rt) = (arms.r(), arms.r_tilde());
    let mut acc = 0.0;
    for ((&wi, &t), &c) in w.entries().iter().zip(y_t).zip(y_c) {
        acc += t / r - c / rt + wi as f64 * (t / r + c / rt);
    }
    Ok(acc / arms.total() as f64)
}

/// Treated-group mean minus control-group mean of the observed responses.
pub fn tau_hat_naive(y_t: &[f64], y_c: &[f64], w: &Allocation, arms: &ArmSizes) -> Result<f64> {
    check_allocation(w, arms, y_t.len())?;
    let y = observed_responses(y_t, y_c, w)?;
    let (mut st, mut sc) = (0.0, 0.0);
    for (&wi, yi) in w.entries().iter().zip(&y) {
        if wi > 0 {
            st += yi;
        } else {
            sc += yi;
        }
    }
    Ok(st / arms.n_treated() as f64 - sc / arms.n_control() as f64)
}

/// `(1/4n²) vᵀ Σ_W v` for a design whose covariance is `cov`.
pub fn mse_over_design(y_t: &[f64], y_c: &[f64], cov: &CovMatrix, arms: &ArmSizes) -> Result<f64> {
    check_len(y_t.len(), y_c.len())?;
    check_len(cov.dim(), y_t.len())?;
    check_diagonal(cov, arms)?;
    let v = potential_vector(y_t, y_c, arms);
    Ok(cov.quadratic_form(&v)? / (arms.total() as f64).powi(2))
}

pub(crate) fn check_diagonal(cov: &CovMatrix, arms: &ArmSizes) -> Result<()> {
    let rr = arms.rr();
    let suspect = (0..cov.dim()).find(|&i| (cov.entry(i, i) - rr).abs() > 1e-9 * rr.max(1.0));
    match suspect {
        Some(i) => Err(Error::AssumptionViolation(format!(
            "Var(W_{i}) = {} but the allocation implies r·r̃ = {rr}",
            cov.entry(i, i)
        ))),
        None => Ok(()),
    }
}

/// `Σ_k p_k (τ̂(w_k) - τ)²` over an explicit support.
pub fn mse_exhaustive<'a>(
    y_t: &[f64],
    y_c: &[f64],
    arms: &ArmSizes,
    support: impl IntoIterator<Item = (&'a Allocation, f64)>,
) -> Result<f64> {
    let tau = estimand_tau(y_t, y_c)?;
    let mut acc = 0.0;
    for (w, p) in support {
        let d = tau_hat(y_t, y_c, w, arms)? - tau;
        acc += p * d * d;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{cov_crd_closed, DesignSpec};

    fn w(e: &[i8]) -> Allocation {
        Allocation::new(e.to_vec()).unwrap()
    }

    #[test]
    fn observed_examples() {
        let a = w(&[1, -1]);
        assert_eq!(observed_responses(&[1.0, 1.0], &[0.0, 0.0], &a).unwrap(), vec![1.0, 0.0]);
        assert_eq!(observed_responses(&[3.0, 4.0], &[3.0, 4.0], &a).unwrap(), vec![3.0, 4.0]);
        assert!(observed_responses(&[1.0], &[1.0], &a).is_err());
    }

    #[test]
    fn tau_examples() {
        assert_eq!(estimand_tau(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).unwrap(), 2.5);
        assert_eq!(estimand_tau(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(estimand_tau(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn tau_hat_examples() {
        let arms = ArmSizes::equal(2).unwrap();
        let a = w(&[1, -1, 1, -1]);
        let (yt, yc) = ([2.0, 2.0, 0.0, 0.0], [1.0; 4]);
        assert!(tau_hat(&yt, &yc, &a, &arms).unwrap().abs() < 1e-15);
        assert!(tau_hat_naive(&yt, &yc, &a, &arms).unwrap().abs() < 1e-15);

        let arms = ArmSizes::new(2, 1).unwrap();
        let a = w(&[1, -1, -1, -1]);
        let (yt, yc) = ([4.0, 9.0, 9.0, 9.0], [7.0, 1.0, 2.0, 3.0]);
        assert!((tau_hat(&yt, &yc, &a, &arms).unwrap() - 2.0).abs() < 1e-12);
        assert!((tau_hat_naive(&yt, &yc, &a, &arms).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_effect_recovered() {
        let arms = ArmSizes::equal(3).unwrap();
        let yc = [0.7; 6];
        let yt = yc.map(|c| c + 1.5);
        let a = w(&[1, 1, -1, 1, -1, -1]);
        assert!((tau_hat(&yt, &yc, &a, &arms).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn invalid_allocation_rejected() {
        let arms = ArmSizes::equal(2).unwrap();
        assert!(tau_hat(&[0.0; 4], &[0.0; 4], &w(&[1, 1, 1, -1]), &arms).is_err());
    }

    #[test]
    fn crd_constant_v_has_zero_mse() {
        let arms = ArmSizes::equal(3).unwrap();
        let cov = cov_crd_closed(&arms);
        let mse = mse_over_design(&[2.0; 6], &[0.0; 6], &cov, &arms).unwrap();
        assert!(mse.abs() < 1e-12);
    }

    #[test]
    fn crd_four_enumerated_mse() {
        let arms = ArmSizes::equal(2).unwrap();
        let spec = crate::design::enumerate_design(&DesignSpec::complete(arms), 100).unwrap();
        let (yt, yc) = ([1.0, 4.0, 2.0, 0.5], [0.0, 1.5, -1.0, 2.0]);
        let support: Vec<_> = spec.support().unwrap().iter().map(|(a, p)| (a, *p)).collect();
        assert_eq!(support.len(), 6);
        let brute = mse_exhaustive(&yt, &yc, &arms, support).unwrap();
        let closed = mse_over_design(&yt, &yc, &cov_crd_closed(&arms), &arms).unwrap();
        assert!((brute - closed).abs() < 1e-12);
    }

    #[test]
    fn wrong_diagonal_rejected() {
        let arms = ArmSizes::new(3, 2).unwrap();
        let cov = cov_crd_closed(&ArmSizes::equal(3).unwrap());
        assert!(mse_over_design(&[0.0; 6], &[0.0; 6], &cov, &arms).is_err());
    }
}
