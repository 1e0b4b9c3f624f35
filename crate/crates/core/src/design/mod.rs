//! Allocations, designs, block construction and design covariance matrices.

mod allocation;
mod balance;
mod blocks;
mod cov;
mod spec;

pub(crate) use allocation::gcd;
pub use allocation::{
    binomial, for_each_combination, validate_allocation, Allocation, ArmSizes,
};
pub use balance::{exhaustive, find_perfect_balance, greedy, BalanceResult, EXHAUSTIVE_LIMIT};
pub use blocks::{
    admissible_block_counts, block_shape, build_blocks_bivariate, build_blocks_univariate,
    BlockStructure,
};
pub use cov::{cov_block_closed, cov_crd_closed, cov_from_support, BlockTag, CovMatrix};
pub use spec::{cov_empirical, enumerate_design, DesignFamily, DesignSpec, DEFAULT_ENUMERATION_CAP};
