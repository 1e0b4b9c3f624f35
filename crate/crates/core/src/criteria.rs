//! Worst-case, mean and tail criteria of a design, plus the variance of the
//! MSE and the asymptotic plug-in lower bound.

use crate::design::{block_shape, ArmSizes, CovMatrix};
use crate::error::{Error, Result};
use crate::response::MomentProfile;

/// Largest dimension searched corner by corner.
pub const CORNER_LIMIT: usize = 20;

/// Worst-case MSE over the unit ball: `λ_max(Σ_W)`.
pub fn worst_case_continuous(cov: &CovMatrix) -> f64 {
    cov.max_eigenvalue()
}

/// `max vᵀΣ_W v` over `v ∈ [0, M]^{2n}` for `BL(B)`.
///
/// Each block attains `r r̃ M² ⌊n_B/2⌋⌈n_B/2⌉/(n_B - 1)`, which equals
/// `r r̃ M² n²/(2n - B)` in total when `n_B` is even.
pub fn worst_case_block_closed(arms: &ArmSizes, blocks: usize, m: f64) -> Result<f64> {
    let (size, _) = block_shape(arms, blocks)?;
    let half = (size / 2) as f64;
    let upper = size.div_ceil(2) as f64;
    Ok(arms.rr() * m * m * blocks as f64 * half * upper / (size as f64 - 1.0))
}

/// `r r̃ M² n²/(2n - B)`.
pub fn worst_case_block_even(arms: &ArmSizes, blocks: usize, m: f64) -> f64 {
    let n = arms.n() as f64;
    arms.rr() * m * m * n * n / (2.0 * n - blocks as f64)
}

/// Maximum of `vᵀΣ_W v` over the corners `{0, M}^{2n}` and a maximizer.
///
/// Dense matrices are searched exhaustively up to [`CORNER_LIMIT`]
/// coordinates; block matrices block by block.
pub fn worst_case_corner_brute(cov: &CovMatrix, m: f64) -> Result<(f64, Vec<f64>)> {
    if m == 0.0 {
        return Ok((0.0, vec![0.0; cov.dim()]));
    }
    if let Some(tag) = cov.block_tag() {
        let size = tag.block_size();
        if size > CORNER_LIMIT {
            return Err(Error::SizeCap(format!(
                "block size {size} exceeds the corner search limit {CORNER_LIMIT}"
            )));
        }
        let off = -tag.scale / (size as f64 - 1.0);
        let local = nalgebra::DMatrix::from_fn(size, size, |i, j| if i == j { tag.scale } else { off });
        let (best, arg) = corner_search(&local, m);
        let mut v = vec![0.0; cov.dim()];
        for cell in tag.structure.blocks() {
            for (k, &i) in cell.iter().enumerate() {
                v[i] = arg[k];
            }
        }
        return Ok((best * tag.count() as f64, v));
    }
    if cov.dim() > CORNER_LIMIT {
        return Err(Error::SizeCap(format!(
            "corner search over 2^{} vertices exceeds 2^{CORNER_LIMIT}",
            cov.dim()
        )));
    }
    Ok(corner_search(&cov.dense(), m))
}

/// `max vᵀΣ_W v` over the box `[0, M]^{2n}`: closed form for block and
/// rank-one matrices, corner search otherwise.
pub fn worst_case_box(cov: &CovMatrix, m: f64) -> Result<f64> {
    if let Some(tag) = cov.block_tag() {
        let size = tag.block_size();
        let half = (size / 2) as f64;
        let upper = size.div_ceil(2) as f64;
        return Ok(tag.scale * m * m * tag.count() as f64 * half * upper / (size as f64 - 1.0));
    }
    if let Some(w) = cov.rank_one_vector() {
        let pos: f64 = w.iter().filter(|x| **x > 0.0).sum();
        let neg: f64 = -w.iter().filter(|x| **x < 0.0).sum::<f64>();
        return Ok(m * m * pos.max(neg).powi(2));
    }
    Ok(worst_case_corner_brute(cov, m)?.0)
}

/// Gray-code walk over `{0, M}^d`, keeping `Σv` current.
fn corner_search(s: &nalgebra::DMatrix<f64>, m: f64) -> (f64, Vec<f64>) {
    let d = s.nrows();
    let mut on = vec![false; d];
    let mut sv = vec![0.0; d];
    let (mut value, mut best, mut best_code) = (0.0, 0.0, 0u64);
    let mut code = 0u64;
    for step in 1..(1u64 << d) {
        let j = step.trailing_zeros() as usize;
        let sign = if on[j] { -1.0 } else { 1.0 };
        // f(v ± M e_j) = f(v) ± 2M (Σv)_j + M² Σ_jj
        value += sign * 2.0 * m * sv[j] + m * m * s[(j, j)];
        for (i, x) in sv.iter_mut().enumerate() {
            *x += sign * m * s[(i, j)];
        }
        on[j] = !on[j];
        code ^= 1 << j;
        if value > best {
            best = value;
            best_code = code;
        }
    }
    let arg = (0..d).map(|i| if best_code >> i & 1 == 1 { m } else { 0.0 }).collect();
    (best, arg)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TailTerms {
    pub b1: f64,
    pub b2: f64,
    pub s: f64,
    pub r: f64,
}

fn check_profile(profile: &MomentProfile, cov: &CovMatrix) -> Result<()> {
    if profile.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            expected: cov.dim(),
            got: profile.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `B1 = μᵀΣ_Wμ`, through the structured quadratic form.
pub fn b1(profile: &MomentProfile, cov: &CovMatrix) -> Result<f64> {
    check_profile(profile, cov)?;
    cov.quadratic_form(&profile.mu)
}

/// `(B1 + c_Z)/4n²`.
pub fn mean_mse(profile: &MomentProfile, cov: &CovMatrix, arms: &ArmSizes) -> Result<f64> {
    Ok((b1(profile, cov)? + profile.c_z) / four_n_sq(arms))
}

fn four_n_sq(arms: &ArmSizes) -> f64 {
    (arms.total() as f64).powi(2)
}

/// `B1, B2 = μᵀΣ_WΣ_ZΣ_Wμ, S = r r̃ μᵀΣ_Wγ, R = tr((Σ_WΣ_Z)²)`.
pub fn tail_terms(profile: &MomentProfile, cov: &CovMatrix, arms: &ArmSizes) -> Result<TailTerms> {
    check_profile(profile, cov)?;
    let rr = arms.rr();
    let (rho, gamma) = (&profile.rho, &profile.gamma);
    if let Some(w) = cov.rank_one_vector() {
        let wm = dot(w, &profile.mu);
        let wrho: f64 = w.iter().zip(rho).map(|(x, r)| x * x * r).sum();
        return Ok(TailTerms {
            b1: wm * wm,
            b2: wm * wm * wrho,
            s: rr * wm * dot(w, gamma),
            r: wrho * wrho,
        });
    }
    let smu = cov.apply(&profile.mu)?;
    let b1 = dot(&profile.mu, &smu);
    let b2 = smu.iter().zip(rho).map(|(x, r)| r * x * x).sum();
    let s = rr * dot(gamma, &smu);
    let r = match cov.block_tag() {
        Some(tag) => {
            let total = cov.dim() as f64;
            let blocks = tag.count() as f64;
            let scale = tag.scale;
            let rho_sigma_rho = cov.quadratic_form(rho)?;
            (scale * scale * total * profile.rho_norm_sq() - scale * blocks * rho_sigma_rho) / (total - blocks)
        }
        None => {
            let mut acc = 0.0;
            for i in 0..cov.dim() {
                for j in 0..cov.dim() {
                    let e = cov.entry(i, j);
                    acc += e * e * rho[i] * rho[j];
                }
            }
            acc
        }
    };
    Ok(TailTerms { b1, b2, s, r })
}

/// [`tail_terms`] by explicit dense matrix products.
pub fn tail_terms_dense(profile: &MomentProfile, cov: &CovMatrix, arms: &ArmSizes) -> Result<TailTerms> {
    use nalgebra::{DMatrix, DVector};
    check_profile(profile, cov)?;
    let s = cov.dense();
    let mu = DVector::from_column_slice(&profile.mu);
    let gamma = DVector::from_column_slice(&profile.gamma);
    let dz = DMatrix::from_diagonal(&DVector::from_column_slice(&profile.rho));
    let smu = &s * &mu;
    let sd = &s * &dz;
    Ok(TailTerms {
        b1: mu.dot(&smu),
        b2: smu.dot(&(&dz * &smu)),
        s: arms.rr() * gamma.dot(&smu),
        r: (&sd * &sd).trace(),
    })
}

fn radicand(terms: &TailTerms, kappa_z: f64, r: f64, r_tilde: f64) -> f64 {
    (r * r_tilde).powi(2) * kappa_z + 4.0 * (terms.b2 + terms.s) + 2.0 * terms.r
}

fn checked_radicand(terms: &TailTerms, kappa_z: f64, r: f64, r_tilde: f64) -> Result<f64> {
    let rr = r * r_tilde;
    let value = radicand(terms, kappa_z, r, r_tilde);
    let magnitude = (rr * rr * kappa_z).abs() + 4.0 * (terms.b2.abs() + terms.s.abs()) + 2.0 * terms.r.abs();
    if value >= 0.0 {
        Ok(value)
    } else if value >= -1e-12 * magnitude {
        Ok(0.0)
    } else {
        Err(Error::NumericalInconsistency {
            radicand: value,
            kappa_z,
            b2: terms.b2,
            s: terms.s,
            r: terms.r,
            rr,
        })
    }
}

/// `Q̃ = B1 + c_q √(r²r̃²κ_Z + 4(B2 + S) + 2R)`.
pub fn q_tilde(terms: &TailTerms, kappa_z: f64, r: f64, r_tilde: f64, c_q: f64) -> Result<f64> {
    Ok(terms.b1 + c_q * checked_radicand(terms, kappa_z, r, r_tilde)?.sqrt())
}

/// `Q_q = (c_Z + Q̃)/4n²`.
pub fn q_q(
    terms: &TailTerms,
    kappa_z: f64,
    c_z: f64,
    r: f64,
    r_tilde: f64,
    c_q: f64,
    n: usize,
) -> Result<f64> {
    let four_n_sq = (2.0 * n as f64).powi(2);
    Ok((c_z + q_tilde(terms, kappa_z, r, r_tilde, c_q)?) / four_n_sq)
}

/// Variance of `MSE_W` over the noise: `(4(B2 + S) + r²r̃²κ_Z + 2R)/16n⁴`.
pub fn var_mse_analytic(profile: &MomentProfile, cov: &CovMatrix, arms: &ArmSizes) -> Result<f64> {
    let terms = tail_terms(profile, cov, arms)?;
    var_mse_from_terms(&terms, profile.kappa_z, arms)
}

pub fn var_mse_from_terms(terms: &TailTerms, kappa_z: f64, arms: &ArmSizes) -> Result<f64> {
    let rad = checked_radicand(terms, kappa_z, arms.r(), arms.r_tilde())?;
    Ok(rad / four_n_sq(arms).powi(2))
}

/// Finite-n plug-in `√n c_q r r̃ √(2(κ_Z/2n + 2‖ρ‖²/2n))` of the asymptotic
/// lower bound on `Q̃`.
pub fn lower_bound_rate(profile: &MomentProfile, r: f64, r_tilde: f64, c_q: f64, n: usize) -> f64 {
    let total = 2.0 * n as f64;
    let inner = 2.0 * (profile.kappa_z / total + 2.0 * profile.rho_norm_sq() / total);
    (n as f64).sqrt() * c_q * r * r_tilde * inner.max(0.0).sqrt()
}

/// `2 r r̃ √(C_γ n B1)` with `C_γ = ‖γ‖²/2n`.
pub fn skew_bound(profile: &MomentProfile, terms: &TailTerms, arms: &ArmSizes) -> f64 {
    let total = arms.total() as f64;
    let c_gamma = profile.gamma.iter().map(|g| g * g).sum::<f64>() / total;
    2.0 * arms.rr() * (c_gamma * arms.n() as f64 * terms.b1.max(0.0)).sqrt()
}

/// All criteria of one design on one moment profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriteriaSummary {
    pub terms: TailTerms,
    pub mean_mse: f64,
    pub var_mse: f64,
    pub q_tilde: f64,
    pub q_q: f64,
}

pub fn summarize(profile: &MomentProfile, cov: &CovMatrix, arms: &ArmSizes, c_q: f64) -> Result<CriteriaSummary> {
    let terms = tail_terms(profile, cov, arms)?;
    let (r, rt) = (arms.r(), arms.r_tilde());
    let qt = q_tilde(&terms, profile.kappa_z, r, rt, c_q)?;
    Ok(CriteriaSummary {
        terms,
        mean_mse: (terms.b1 + profile.c_z) / four_n_sq(arms),
        var_mse: var_mse_from_terms(&terms, profile.kappa_z, arms)?,
        q_tilde: qt,
        q_q: (profile.c_z + qt) / four_n_sq(arms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{cov_block_closed, cov_crd_closed, BlockStructure};

    fn arms(n: usize) -> ArmSizes {
        ArmSizes::equal(n).unwrap()
    }

    fn profile(mu: Vec<f64>, rho: Vec<f64>, gamma: Vec<f64>, kappa_z: f64, rr: f64) -> MomentProfile {
        let c_z = rr * rho.iter().sum::<f64>();
        MomentProfile {
            mu,
            rho,
            gamma,
            kappa_z,
            c_z,
        }
    }

    #[test]
    fn continuous_examples() {
        assert!((worst_case_continuous(&cov_crd_closed(&arms(2))) - 4.0 / 3.0).abs() < 1e-12);
        let pb = CovMatrix::rank_one(vec![1.0, -1.0, -1.0, 1.0]);
        assert_eq!(worst_case_continuous(&pb), 4.0);
        let bl = cov_block_closed(&BlockStructure::contiguous(arms(2), 2).unwrap());
        assert!((worst_case_continuous(&bl) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn block_closed_examples() {
        let a = arms(4);
        assert!((worst_case_block_closed(&a, 2, 1.0).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert!((worst_case_block_closed(&a, 1, 1.0).unwrap() - 16.0 / 7.0).abs() < 1e-12);
        let base = worst_case_block_closed(&a, 4, 1.0).unwrap();
        assert!((worst_case_block_closed(&a, 4, 2.0).unwrap() - 4.0 * base).abs() < 1e-12);
        assert!((worst_case_block_even(&a, 4, 1.0) - base).abs() < 1e-12);
    }

    #[test]
    fn corner_examples() {
        let bl = cov_block_closed(&BlockStructure::contiguous(arms(2), 1).unwrap());
        let (v, arg) = worst_case_corner_brute(&bl, 1.0).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(arg.iter().filter(|&&x| x == 1.0).count(), 2);
        assert_eq!(worst_case_corner_brute(&bl, 0.0).unwrap().0, 0.0);
        let dense = cov_crd_closed(&arms(2));
        assert!((worst_case_corner_brute(&dense, 1.0).unwrap().0 - 4.0 / 3.0).abs() < 1e-12);
        assert!(worst_case_corner_brute(&cov_crd_closed(&arms(11)), 1.0).is_err());
    }

    #[test]
    fn box_worst_case_paths_agree() {
        let a = ArmSizes::new(4, 2).unwrap();
        for b in crate::design::admissible_block_counts(&a) {
            let bl = cov_block_closed(&BlockStructure::contiguous(a, b).unwrap());
            let dense = CovMatrix::from_dense(bl.dense()).unwrap();
            let x = worst_case_box(&bl, 1.5).unwrap();
            assert!((x - worst_case_box(&dense, 1.5).unwrap()).abs() < 1e-9);
            assert!((x - worst_case_block_closed(&a, b, 1.5).unwrap()).abs() < 1e-9);
        }
        let pb = CovMatrix::rank_one(vec![1.0, -1.0, -1.0, 1.0, 1.0, -1.0]);
        let dense = CovMatrix::from_dense(pb.dense()).unwrap();
        assert!((worst_case_box(&pb, 2.0).unwrap() - 36.0).abs() < 1e-12);
        assert!((worst_case_box(&dense, 2.0).unwrap() - 36.0).abs() < 1e-12);
    }

    #[test]
    fn mean_criterion_orders_blocks() {
        let a = arms(2);
        let p = profile(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4], vec![0.0; 4], 0.0, 1.0);
        let one = b1(&p, &cov_block_closed(&BlockStructure::contiguous(a, 1).unwrap())).unwrap();
        let two = b1(&p, &cov_block_closed(&BlockStructure::contiguous(a, 2).unwrap())).unwrap();
        assert!((one - 20.0 / 3.0).abs() < 1e-12);
        assert!((two - 2.0).abs() < 1e-12);
        let flat = profile(vec![3.0; 4], vec![1.0; 4], vec![0.0; 4], 0.0, 1.0);
        let crd = cov_crd_closed(&a);
        assert!((mean_mse(&flat, &crd, &a).unwrap() - 4.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn q_tilde_degenerate_cases() {
        let t = TailTerms {
            b1: 3.0,
            b2: 1.0,
            s: 0.5,
            r: 2.0,
        };
        assert_eq!(q_tilde(&t, 1.0, 1.0, 1.0, 0.0).unwrap(), 3.0);
        let quiet = TailTerms { b1: 3.0, ..TailTerms::default() };
        assert_eq!(q_tilde(&quiet, 0.0, 1.0, 1.0, 1.645).unwrap(), 3.0);
        let bad = TailTerms { s: -10.0, ..t };
        assert!(matches!(
            q_tilde(&bad, 0.0, 1.0, 1.0, 1.0),
            Err(Error::NumericalInconsistency { .. })
        ));
        let p = profile(vec![0.0; 4], vec![1.0; 4], vec![0.0; 4], 0.0, 1.0);
        let q = q_q(&t, 1.0, p.c_z, 1.0, 1.0, 0.0, 2).unwrap();
        assert!((q - (p.c_z + 3.0) / 16.0).abs() < 1e-15);
    }

    #[test]
    fn pb_rank_one_terms() {
        let w = vec![1.0, -1.0, -1.0, 1.0];
        let cov = CovMatrix::rank_one(w);
        let a = arms(2);
        let p = profile(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 1.0, 0.5], vec![0.3, -0.1, 0.0, 0.2], 0.7, 1.0);
        let fast = tail_terms(&p, &cov, &a).unwrap();
        let dense = tail_terms_dense(&p, &cov, &a).unwrap();
        for (x, y) in [(fast.b1, dense.b1), (fast.b2, dense.b2), (fast.s, dense.s), (fast.r, dense.r)] {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert_eq!(fast.b1, 0.0);
        assert_eq!(fast.r, 4.5f64.powi(2));
    }

    #[test]
    fn lower_bound_gaussian() {
        let n = 48;
        let p = profile(vec![0.0; 96], vec![2.0; 96], vec![0.0; 96], 0.0, 1.0);
        let lb = lower_bound_rate(&p, 1.0, 1.0, 1.645, n);
        assert!((lb - 4.0 * 1.645 * (n as f64).sqrt()).abs() < 1e-12);
        let quiet = profile(vec![0.0; 96], vec![0.0; 96], vec![0.0; 96], 0.0, 1.0);
        assert_eq!(lower_bound_rate(&quiet, 1.0, 1.0, 1.645, n), 0.0);
    }
}
