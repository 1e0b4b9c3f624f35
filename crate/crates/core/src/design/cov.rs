//! Design covariance matrices `Σ_W = Var(W)` and their quadratic forms.
//!
//! Block designs and perfect-balance pairs keep a structured representation
//! so that quadratic forms and traces run in `O(2n)`; the dense matrix is
//! materialized only on request.

use nalgebra::{DMatrix, SymmetricEigen};

use super::allocation::ArmSizes;
use super::blocks::BlockStructure;
use crate::error::{Error, Result};

/// Structural tag of a block-diagonal `Σ_W` whose blocks all equal
/// `scale·(n_B I - J)/(n_B - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTag {
    pub structure: BlockStructure,
    pub scale: f64,
}

impl BlockTag {
    pub fn count(&self) -> usize {
        self.structure.count()
    }

    pub fn block_size(&self) -> usize {
        self.structure.block_size()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(DMatrix<f64>),
    Block(BlockTag),
    /// `Σ_W = w wᵀ`.
    RankOne(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    dim: usize,
    repr: Repr,
}

impl CovMatrix {
    pub fn from_dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        Ok(Self {
            dim: m.nrows(),
            repr: Repr::Dense(m),
        })
    }

    pub fn rank_one(w: Vec<f64>) -> Self {
        Self {
            dim: w.len(),
            repr: Repr::RankOne(w),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_tag(&self) -> Option<&BlockTag> {
        match &self.repr {
            Repr::Block(tag) => Some(tag),
            _ => None,
        }
    }

    pub fn rank_one_vector(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::RankOne(w) => Some(w),
            _ => None,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m[(i, j)],
            Repr::RankOne(w) => w[i] * w[j],
            Repr::Block(tag) => {
                let size = tag.block_size() as f64;
                let same = tag
                    .structure
                    .blocks()
                    .iter()
                    .any(|cell| cell.contains(&i) && cell.contains(&j));
                match (same, i == j) {
                    (_, true) => tag.scale,
                    (true, false) => -tag.scale / (size - 1.0),
                    (false, false) => 0.0,
                }
            }
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::RankOne(w) => DMatrix::from_fn(self.dim, self.dim, |i, j| w[i] * w[j]),
            Repr::Block(tag) => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                let off = -tag.scale / (tag.block_size() as f64 - 1.0);
                for cell in tag.structure.blocks() {
                    for &i in cell {
                        for &j in cell {
                            m[(i, j)] = if i == j { tag.scale } else { off };
                        }
                    }
                }
                m
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.entry(i, i)).collect()
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `Σ_W v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        Ok(match &self.repr {
            Repr::Dense(m) => (m * nalgebra::DVector::from_column_slice(v))
                .iter()
                .copied()
                .collect(),
            Repr::RankOne(w) => {
                let dot: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                w.iter().map(|wi| wi * dot).collect()
            }
            Repr::Block(tag) => {
                let mut out = vec![0.0; self.dim];
                let size = tag.block_size() as f64;
                let factor = tag.scale * size / (size - 1.0);
                for cell in tag.structure.blocks() {
                    let mean = cell.iter().map(|&i| v[i]).sum::<f64>() / size;
                    for &i in cell {
                        out[i] = factor * (v[i] - mean);
                    }
                }
                out
            }
        })
    }

    /// `vᵀ Σ_W v`, through the structured identity when one applies.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        Ok(match &self.repr {
            Repr::Dense(_) => self.quadratic_form_dense_unchecked(v),
            Repr::RankOne(w) => {
                let dot: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                dot * dot
            }
            Repr::Block(tag) => block_quadratic_form(tag, v),
        })
    }

    /// `vᵀ Σ_W v` by a full dense multiply, whatever the representation.
    pub fn quadratic_form_dense(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        Ok(self.quadratic_form_dense_unchecked(v))
    }

    fn quadratic_form_dense_unchecked(&self, v: &[f64]) -> f64 {
        let m = match &self.repr {
            Repr::Dense(m) => std::borrow::Cow::Borrowed(m),
            _ => std::borrow::Cow::Owned(self.dense()),
        };
        let mut acc = 0.0;
        for i in 0..self.dim {
            let row: f64 = (0..self.dim).map(|j| m[(i, j)] * v[j]).sum();
            acc += v[i] * row;
        }
        acc
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.dense())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Largest eigenvalue, closed form for structured matrices.
    pub fn max_eigenvalue(&self) -> f64 {
        match &self.repr {
            Repr::Dense(_) => *self.eigenvalues().last().unwrap_or(&0.0),
            Repr::RankOne(w) => w.iter().map(|x| x * x).sum(),
            Repr::Block(tag) => {
                let size = tag.block_size() as f64;
                tag.scale * size / (size - 1.0)
            }
        }
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m.iter().map(|x| x * x).sum(),
            Repr::RankOne(w) => {
                let s: f64 = w.iter().map(|x| x * x).sum();
                s * s
            }
            Repr::Block(tag) => {
                let size = tag.block_size() as f64;
                let b = tag.count() as f64;
                let off = tag.scale / (size - 1.0);
                b * (size * tag.scale * tag.scale + size * (size - 1.0) * off * off)
            }
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let m = self.dense();
        (0..self.dim).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
    }

    /// PSD check through the smallest eigenvalue.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.eigenvalues().first().is_none_or(|&l| l >= -tol)
    }

    pub(crate) fn scale_dense(&mut self, factor: f64) {
        self.repr = Repr::Dense(self.dense() * factor);
    }
}

fn block_quadratic_form(tag: &BlockTag, v: &[f64]) -> f64 {
    let size = tag.block_size() as f64;
    let sse: f64 = tag
        .structure
        .blocks()
        .iter()
        .map(|cell| {
            let mean = cell.iter().map(|&i| v[i]).sum::<f64>() / size;
            cell.iter().map(|&i| (v[i] - mean).powi(2)).sum::<f64>()
        })
        .sum();
    tag.scale * size / (size - 1.0) * sse
}

/// `Σ_W = (r r̃ / (2n-1)) (2n I - J)` of i/BCRD.
pub fn cov_crd_closed(arms: &ArmSizes) -> CovMatrix {
    let total = arms.total();
    let t = total as f64;
    let c = arms.rr() / (t - 1.0);
    let m = DMatrix::from_fn(total, total, |i, j| if i == j { c * (t - 1.0) } else { -c });
    CovMatrix {
        dim: total,
        repr: Repr::Dense(m),
    }
}

/// Block-diagonal `Σ_W` of `BL(B)`, kept in structured form.
pub fn cov_block_closed(structure: &BlockStructure) -> CovMatrix {
    CovMatrix {
        dim: structure.total(),
        repr: Repr::Block(BlockTag {
            scale: structure.arms().rr(),
            structure: structure.clone(),
        }),
    }
}

/// `Σ_k p_k w_k w_kᵀ - E[W]E[W]ᵀ` from an explicit support.
pub fn cov_from_support<'a>(
    dim: usize,
    support: impl IntoIterator<Item = (&'a [i8], f64)>,
) -> (CovMatrix, Vec<f64>) {
    let mut second = DMatrix::<f64>::zeros(dim, dim);
    let mut mean = vec![0.0; dim];
    for (w, p) in support {
        for i in 0..dim {
            let wi = w[i] as f64;
            mean[i] += p * wi;
            for j in 0..dim {
                second[(i, j)] += p * wi * w[j] as f64;
            }
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            second[(i, j)] -= mean[i] * mean[j];
        }
    }
    (
        CovMatrix {
            dim,
            repr: Repr::Dense(second),
        },
        mean,
    )
}
