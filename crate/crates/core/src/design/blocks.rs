use nalgebra::DMatrix;

use super::allocation::ArmSizes;
use crate::error::{Error, Result};

/// An ordered partition of the `2n` subjects into `B` equal cells, each
/// treating the same share of its subjects as the whole experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    arms: ArmSizes,
    blocks: Vec<Vec<usize>>,
    treated_per_block: usize,
}

/// Block size and per-block treated count for `B` blocks, if admissible.
pub fn block_shape(arms: &ArmSizes, count: usize) -> Result<(usize, usize)> {
    let total = arms.total();
    if count == 0 || !total.is_multiple_of(count) {
        return Err(Error::Structural(format!(
            "{total} subjects cannot be split into {count} equal blocks"
        )));
    }
    let size = total / count;
    if size < 2 {
        return Err(Error::Structural(format!(
            "blocks of size {size} cannot be randomized"
        )));
    }
    if !(size * arms.n_treated()).is_multiple_of(total) {
        return Err(Error::Structural(format!(
            "blocks of size {size} cannot hold the {} allocation exactly",
            arms.ratio_label()
        )));
    }
    Ok((size, size * arms.n_treated() / total))
}

/// All admissible block counts for these arm sizes, ascending.
pub fn admissible_block_counts(arms: &ArmSizes) -> Vec<usize> {
    (1..=arms.total())
        .filter(|&b| block_shape(arms, b).is_ok())
        .collect()
}

impl BlockStructure {
    pub fn new(arms: ArmSizes, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let (size, treated) = block_shape(&arms, blocks.len())?;
        let mut seen = vec![false; arms.total()];
        for cell in &blocks {
            if cell.len() != size {
                return Err(Error::Structural(format!(
                    "block of size {} where {size} is required",
                    cell.len()
                )));
            }
            for &i in cell {
                if i >= arms.total() || seen[i] {
                    return Err(Error::Structural(format!(
                        "subject {i} is out of range or appears in two blocks"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(Self {
            arms,
            blocks,
            treated_per_block: treated,
        })
    }

    /// Blocks of consecutive subject indices.
    pub fn contiguous(arms: ArmSizes, count: usize) -> Result<Self> {
        let order: Vec<usize> = (0..arms.total()).collect();
        Self::from_order(arms, &order, count)
    }

    fn from_order(arms: ArmSizes, order: &[usize], count: usize) -> Result<Self> {
        let (size, _) = block_shape(&arms, count)?;
        let blocks = order.chunks(size).map(<[usize]>::to_vec).collect();
        Self::new(arms, blocks)
    }

    pub fn arms(&self) -> &ArmSizes {
        &self.arms
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_size(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn treated_per_block(&self) -> usize {
        self.treated_per_block
    }

    pub fn total(&self) -> usize {
        self.arms.total()
    }
}

fn stable_order(values: impl Fn(usize) -> f64, indices: &mut [usize]) {
    indices.sort_by(|&a, &b| values(a).total_cmp(&values(b)));
}

/// Sort subjects by `x` (ties by index) and cut the order into `B` runs.
pub fn build_blocks_univariate(x: &[f64], arms: ArmSizes, count: usize) -> Result<BlockStructure> {
    if x.len() != arms.total() {
        return Err(Error::DimensionMismatch {
            expected: arms.total(),
            got: x.len(),
        });
    }
    block_shape(&arms, count)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    stable_order(|i| x[i], &mut order);
    BlockStructure::from_order(arms, &order, count)
}

/// Two-stage blocking on the first two covariates: order by column 0, re-sort
/// each consecutive group of `2·n_B` subjects by column 1, then cut into runs
/// of `n_B`. When `B` is odd the final group holds the remaining `n_B`
/// subjects.
pub fn build_blocks_bivariate(
    x: &DMatrix<f64>,
    arms: ArmSizes,
    count: usize,
) -> Result<BlockStructure> {
    if x.nrows() != arms.total() {
        return Err(Error::DimensionMismatch {
            expected: arms.total(),
            got: x.nrows(),
        });
    }
    if x.ncols() < 2 {
        return Err(Error::Structural(
            "bivariate blocking needs at least two covariates".into(),
        ));
    }
    let (size, _) = block_shape(&arms, count)?;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    stable_order(|i| x[(i, 0)], &mut order);
    if count > 1 {
        for group in order.chunks_mut(2 * size) {
            stable_order(|i| x[(i, 1)], group);
        }
    }
    BlockStructure::from_order(arms, &order, count)
}
