use crate::error::{Error, Result};

/// Arm sizes of a two-arm experiment with `2n` subjects, `n_T` treated.
///
/// The ratios `r = n_T/n` and `r̃ = n_C/n = 2 - r` are always derived from
/// the counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArmSizes {
    n: usize,
    n_treated: usize,
}

impl ArmSizes {
    pub fn new(n: usize, n_treated: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Structural("half-sample size n must be positive".into()));
        }
        if n_treated == 0 || n_treated >= 2 * n {
            return Err(Error::Structural(format!(
                "treated count {n_treated} must lie in 1..{}",
                2 * n
            )));
        }
        Ok(Self { n, n_treated })
    }

    pub fn equal(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    /// Arm sizes for an `n_C : n_T` control-to-treatment ratio.
    pub fn from_ratio(n: usize, control: usize, treated: usize) -> Result<Self> {
        let parts = control + treated;
        if parts == 0 || !(2 * n).is_multiple_of(parts) {
            return Err(Error::Structural(format!(
                "2n = {} is not divisible by the ratio {control}:{treated}",
                2 * n
            )));
        }
        Self::new(n, 2 * n / parts * treated)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> usize {
        2 * self.n
    }

    pub fn n_treated(&self) -> usize {
        self.n_treated
    }

    pub fn n_control(&self) -> usize {
        2 * self.n - self.n_treated
    }

    pub fn r(&self) -> f64 {
        self.n_treated as f64 / self.n as f64
    }

    pub fn r_tilde(&self) -> f64 {
        self.n_control() as f64 / self.n as f64
    }

    /// `r·r̃`, the per-subject assignment variance of every supported design.
    pub fn rr(&self) -> f64 {
        self.r() * self.r_tilde()
    }

    pub fn is_equal(&self) -> bool {
        2 * self.n_treated == self.total()
    }

    /// Required sum of every allocation, `n_T - n_C`.
    pub fn imbalance(&self) -> i64 {
        self.n_treated as i64 - self.n_control() as i64
    }

    /// `E[W_i] = (r - r̃)/2`.
    pub fn mean_assignment(&self) -> f64 {
        0.5 * (self.r() - self.r_tilde())
    }

    /// `n_C:n_T` label, e.g. `1:1` or `2:1`.
    pub fn ratio_label(&self) -> String {
        let g = gcd(self.n_control(), self.n_treated);
        format!("{}:{}", self.n_control() / g, self.n_treated / g)
    }
}

pub(crate) fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A ±1 assignment vector, `+1` for treatment and `-1` for control.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Allocation {
    entries: Vec<i8>,
}

impl Allocation {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|&e| e != 1 && e != -1) {
            return Err(Error::Structural(format!(
                "entry {i} is {}, allocations hold only +1/-1",
                entries[i]
            )));
        }
        Ok(Self { entries })
    }

    /// Allocation of `total` subjects treating exactly `treated`.
    pub fn from_treated(total: usize, treated: impl IntoIterator<Item = usize>) -> Self {
        let mut entries = vec![-1i8; total];
        for i in treated {
            entries[i] = 1;
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.entries.iter().filter(|&&e| e == 1).count()
    }

    pub fn sum(&self) -> i64 {
        self.entries.iter().map(|&e| e as i64).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| e as f64).collect()
    }

    pub fn negated(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|&e| -e).collect(),
        }
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.entries.iter().zip(v).map(|(&w, &x)| w as f64 * x).sum()
    }

    pub fn is_valid_for(&self, arms: &ArmSizes) -> bool {
        self.len() == arms.total() && self.sum() == arms.imbalance()
    }
}

/// True iff `entries` are all ±1 and sum to `n_T - n_C`.
pub fn validate_allocation(entries: &[i8], arms: &ArmSizes) -> Result<bool> {
    if entries.len() != arms.total() {
        return Err(Error::DimensionMismatch {
            expected: arms.total(),
            got: entries.len(),
        });
    }
    let signed = entries.iter().all(|&e| e == 1 || e == -1);
    let sum: i64 = entries.iter().map(|&e| e as i64).sum();
    Ok(signed && sum == arms.imbalance())
}

/// `C(n, k)` without overflow for the sizes used here.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Visit every `k`-subset of `0..m` in lexicographic order.
pub fn for_each_combination(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + m - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
