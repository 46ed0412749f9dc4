//! Small shared statistics helpers.
//!
//! Every standard deviation in this crate is the population form (divide by
//! `n`, not `n - 1`): groups and batches are fixed finite collections we
//! normalize within, not samples of a larger population. This convention also
//! makes the law-of-total-variance decomposition used by the controller an
//! exact identity.

/// Arithmetic mean. Returns 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divide by `n`). Returns 0 for an empty slice.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mu = mean(values);
    values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    libm::sqrt(population_variance(values))
}

/// True when every element is bit-identical to the first.
///
/// Used to detect genuinely constant reward groups, where normalized
/// advantages are defined to be zero. Comparing bits instead of testing
/// `std < tol` keeps the decision independent of float summation noise.
pub fn all_equal(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[0].to_bits() == w[1].to_bits())
}

/// Standard logistic function 1 / (1 + e^(-x)).
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}
