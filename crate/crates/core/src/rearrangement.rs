//! Displacement algebra in the moving frame.
//!
//! A failure by worker `i + 1` (1-based) lengthens gap `i` and shortens gap
//! `i + 1` (mod k); that change is the generator `δ_i`. Any displacement
//! `Δ = Y - X` with zero sum is a non-negative combination of generators,
//! and the canonical one (with some coefficient equal to zero) counts the
//! fewest failures that realize `Δ`.
//!
//! Worker and generator indices are 1-based in the documentation and in
//! [`delta_vector`]; every vector slot and serialized array is 0-based, so
//! `δ_i` has `+1` at slot `i - 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::state_space::State;

/// Change in physical gaps between two configurations. Components sum to zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Displacement(Vec<i64>);

impl Displacement {
    pub fn new(d: Vec<i64>) -> Result<Self> {
        let sum: i64 = d.iter().sum();
        if sum != 0 {
            return Err(Error::InvalidDisplacement(sum));
        }
        Ok(Displacement(d))
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<i64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }
}

impl std::ops::Neg for &Displacement {
    type Output = Displacement;

    fn neg(self) -> Displacement {
        Displacement(self.0.iter().map(|x| -x).collect())
    }
}

/// Non-negative generator coefficients with at least one zero.
///
/// `beta[i]` is the number of failures by worker `i + 2` (mod k, 1-based),
/// i.e. the multiplicity of generator `δ_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PathDecomposition {
    pub beta: Vec<u64>,
    pub length: u64,
}

/// Generator `δ_i` for 1-based `i`: `+1` at slot `i`, `-1` at slot `i + 1` (mod k).
pub fn delta_vector(i: usize, k: usize) -> Result<Vec<i64>> {
    if k < 1 || i < 1 || i > k {
        return Err(Error::OutOfRange {
            index: i as u128,
            len: k as u128,
        });
    }
    let mut v = vec![0i64; k];
    v[i - 1] += 1;
    v[i % k] -= 1;
    Ok(v)
}

/// `Y - X` on physical gaps; a blocked `1*` counts as 1.
pub fn displacement(x: &State, y: &State) -> Result<Displacement> {
    if x.k() != y.k() || x.n() != y.n() {
        return Err(Error::Mismatch(format!(
            "states {x} and {y} belong to different (k, n)"
        )));
    }
    Ok(Displacement(
        x.gaps()
            .iter()
            .zip(y.gaps())
            .map(|(&a, &b)| b as i64 - a as i64)
            .collect(),
    ))
}

fn check_sum(d: &[i64]) -> Result<()> {
    let sum: i64 = d.iter().sum();
    if sum != 0 {
        return Err(Error::InvalidDisplacement(sum));
    }
    Ok(())
}

/// Prefix sums of `d`; the last component is always zero.
pub fn gamma(d: &[i64]) -> Result<Vec<i64>> {
    check_sum(d)?;
    Ok(d.iter()
        .scan(0i64, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect())
}

/// The unique non-negative decomposition with a zero coefficient:
/// `γ` shifted down by its minimum. Which index attains the minimum does
/// not matter; only the value enters.
pub fn canonical_beta(d: &[i64]) -> Result<PathDecomposition> {
    let g = gamma(d)?;
    let min = g.iter().copied().min().unwrap_or(0);
    let beta: Vec<u64> = g.iter().map(|&x| (x - min) as u64).collect();
    let length = beta.iter().sum();
    Ok(PathDecomposition { beta, length })
}

/// Shortest rearrangement length: the 1-norm of [`canonical_beta`].
pub fn phi(d: &[i64]) -> Result<u64> {
    check_sum(d)?;
    Ok(phi_unchecked(d))
}

/// `Σγ - k·min(γ)` without allocating; `d` must sum to zero.
#[inline]
pub(crate) fn phi_unchecked(d: &[i64]) -> u64 {
    let mut acc = 0i64;
    let mut sum = 0i64;
    let mut min = i64::MAX;
    for &x in d {
        acc += x;
        sum += acc;
        min = min.min(acc);
    }
    (sum - d.len() as i64 * min) as u64
}

/// Shortest rearrangement length between two states' physical configurations.
#[inline]
pub(crate) fn phi_between(x: &State, y: &State) -> u64 {
    let mut acc = 0i64;
    let mut sum = 0i64;
    let mut min = i64::MAX;
    for (&a, &b) in x.gaps().iter().zip(y.gaps()) {
        acc += b as i64 - a as i64;
        sum += acc;
        min = min.min(acc);
    }
    (sum - x.k() as i64 * min) as u64
}

/// `A·coeffs`, where column `i` of `A` is `δ_{i+1}`.
pub fn apply_generators(coeffs: &[i64]) -> Vec<i64> {
    let k = coeffs.len();
    (0..k)
        .map(|j| coeffs[j] - coeffs[(j + k - 1) % k])
        .collect()
}

/// Co-state: gaps and blocked mask reversed. An involution.
pub fn costate(x: &State) -> State {
    let k = x.k();
    let gaps: Vec<u32> = x.gaps().iter().rev().copied().collect();
    let mask = x.blocked_workers().fold(0u64, |m, i| m | 1 << (k - 1 - i));
    State::from_parts_unchecked(gaps, mask)
}
