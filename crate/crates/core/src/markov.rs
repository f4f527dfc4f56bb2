//! Transition probabilities, the stationary density and blockage frequency.
//!
//! From any state `X_i` the chain moves to `X_j` with probability
//!
//! ```text
//! p_ij = r^{b_j} · s^k / (1 - q^k) · q^{l_ij}
//! ```
//!
//! where `b_j` counts blocked workers in the target, `l_ij` is the shortest
//! rearrangement length between the physical configurations, and the
//! source's blocked markers play no role. The stationary density weights
//! each state by `r^{b}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rearrangement::phi_between;
use crate::state_space::{binomial, check_dims, Params, State, StateSpace, DEFAULT_STATE_CAP};

/// Default convergence tolerance for power iteration (max norm of `νP - ν`).
pub const POWER_TOL: f64 = 1e-13;
/// Default iteration budget for power iteration.
pub const POWER_MAX_ITER: usize = 1_000_000;

/// `x^e` by binary exponentiation. Used for every integer power in this
/// module so that equal exponents always give bit-identical factors.
#[inline]
pub fn powu(x: f64, e: u32) -> f64 {
    let mut base = x;
    let mut e = e;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// Per-parameter constants shared by every entry of one matrix.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    q: f64,
    r: f64,
    /// `s^k / (1 - q^k)`
    norm: f64,
}

impl Kernel {
    fn new(p: &Params) -> Self {
        let k = p.k() as u32;
        let q = p.q();
        Kernel {
            q,
            r: p.r(),
            norm: powu(p.s(), k) / (1.0 - powu(q, k)),
        }
    }

    /// Probability for an unblocked target at rearrangement length `l`.
    #[inline]
    fn unblocked(&self, l: u64) -> f64 {
        self.norm * powu(self.q, l as u32)
    }

    #[inline]
    fn entry(&self, from: &State, to: &State) -> f64 {
        let base = self.unblocked(phi_between(from, to));
        match to.blockages() {
            0 => base,
            b => powu(self.r, b) * base,
        }
    }
}

fn check_state(x: &State, params: &Params) -> Result<()> {
    if x.k() != params.k() || x.n() != params.n() {
        return Err(Error::Mismatch(format!(
            "state {x} does not belong to k = {}, n = {}",
            params.k(),
            params.n()
        )));
    }
    Ok(())
}

/// One-step probability of moving from `from` to `to`.
pub fn transition_probability(from: &State, to: &State, params: &Params) -> Result<f64> {
    check_state(from, params)?;
    check_state(to, params)?;
    Ok(Kernel::new(params).entry(from, to))
}

/// Dense row-stochastic matrix over the canonical state order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    params: Params,
    states: Vec<State>,
    data: Vec<f64>,
}

pub fn build_transition_matrix(params: &Params) -> Result<TransitionMatrix> {
    build_transition_matrix_with_cap(params, DEFAULT_STATE_CAP)
}

/// Rows are built in parallel; each row depends only on its source state,
/// so the result does not depend on scheduling.
pub fn build_transition_matrix_with_cap(params: &Params, cap: u128) -> Result<TransitionMatrix> {
    let space = StateSpace::with_cap(params.k(), params.n(), cap)?;
    let states = space.states()?;
    let m = states.len();
    let kernel = Kernel::new(params);
    let mut data = vec![0.0; m * m];
    data.par_chunks_mut(m.max(1))
        .zip(states.par_iter())
        .for_each(|(row, from)| {
            for (cell, to) in row.iter_mut().zip(&states) {
                *cell = kernel.entry(from, to);
            }
        });
    Ok(TransitionMatrix {
        params: *params,
        states,
        data,
    })
}

impl TransitionMatrix {
    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Matrix order `M`.
    pub fn order(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.order();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.order().max(1))
    }

    /// Largest `|Σ_j p_ij - 1|` over all rows.
    pub fn max_row_sum_error(&self) -> f64 {
        self.rows()
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Row vector times matrix, `xP`.
    pub fn left_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.order() {
            return Err(Error::Mismatch(format!(
                "vector of length {} against matrix of order {}",
                x.len(),
                self.order()
            )));
        }
        let mut out = vec![0.0; self.order()];
        left_mul_into(&self.data, x, &mut out);
        Ok(out)
    }
}

fn left_mul_into(data: &[f64], x: &[f64], out: &mut [f64]) {
    let m = x.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (xi, row) in x.iter().zip(data.chunks(m)) {
        for (o, p) in out.iter_mut().zip(row) {
            *o += xi * p;
        }
    }
}

/// Probability vector over the canonical state order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub nu: Vec<f64>,
}

impl StationaryDistribution {
    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// `‖νP - ν‖∞`.
    pub fn residual(&self, p: &TransitionMatrix) -> Result<f64> {
        let next = p.left_mul(&self.nu)?;
        Ok(max_abs_diff(&next, &self.nu))
    }

    pub fn max_abs_diff(&self, other: &StationaryDistribution) -> f64 {
        max_abs_diff(&self.nu, &other.nu)
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.nu.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Normalizer `‖ω‖ = Σ_b N(b, k, n) r^b`.
pub fn weight_norm(params: &Params) -> Result<f64> {
    let (k, n) = (params.k(), params.n());
    let r = params.r();
    let mut acc = 0.0;
    for b in 0..k {
        let count = crate::state_space::count_states_with_blockages(b, k, n)?;
        acc += count as f64 * powu(r, b as u32);
    }
    Ok(acc)
}

/// `ν_i = r^{b_i} / ‖ω‖` in canonical order.
pub fn closed_form_stationary(params: &Params) -> Result<StationaryDistribution> {
    closed_form_stationary_with_cap(params, DEFAULT_STATE_CAP)
}

pub fn closed_form_stationary_with_cap(
    params: &Params,
    cap: u128,
) -> Result<StationaryDistribution> {
    let states = StateSpace::with_cap(params.k(), params.n(), cap)?.states()?;
    let norm = weight_norm(params)?;
    let r = params.r();
    Ok(StationaryDistribution {
        nu: states
            .iter()
            .map(|s| powu(r, s.blockages()) / norm)
            .collect(),
    })
}

/// Convergence record of a power iteration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Left fixed vector of `p` by power iteration from the uniform vector.
pub fn power_iteration_stationary(
    p: &TransitionMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryDistribution> {
    let m = p.order();
    let start = vec![1.0 / m as f64; m];
    power_iteration_from(p, &start, tol, max_iter).map(|(d, _)| d)
}

/// Power iteration from an arbitrary non-negative, non-zero start vector.
/// Stops once `‖xP - x‖∞ ≤ tol` after normalization.
pub fn power_iteration_from(
    p: &TransitionMatrix,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(StationaryDistribution, PowerStats)> {
    let m = p.order();
    if start.len() != m {
        return Err(Error::Mismatch(format!(
            "start vector of length {} against matrix of order {m}",
            start.len()
        )));
    }
    let total: f64 = start.iter().sum();
    if total.is_nan() || total <= 0.0 || start.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Domain(
            "start vector must be non-negative with positive mass".into(),
        ));
    }
    let mut x: Vec<f64> = start.iter().map(|v| v / total).collect();
    let mut next = vec![0.0; m];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        left_mul_into(&p.data, &x, &mut next);
        let mass: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= mass);
        residual = max_abs_diff(&next, &x);
        std::mem::swap(&mut x, &mut next);
        if residual <= tol {
            return Ok((
                StationaryDistribution { nu: x },
                PowerStats {
                    iterations: iter,
                    residual,
                },
            ));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Long-run fraction of steps on which worker 1 is blocked, in closed form.
pub fn blockage_fraction_closed_form(k: usize, n: usize, r: f64) -> Result<f64> {
    check_dims(k, n)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!(
            "odds r must be positive and finite, got {r}"
        )));
    }
    let (ki, ni) = (k as i64, n as i64);
    let mut num = 0.0;
    for b in 0..ki - 1 {
        let c = binomial(ki - 1, b)?
            .checked_mul(binomial(ni - b - 2, ki - b - 2)?)
            .ok_or(Error::Overflow("blockage numerator"))?;
        num += c as f64 * powu(r, b as u32 + 1);
    }
    let mut den = 0.0;
    for b in 0..ki {
        let c = binomial(ki, b)?
            .checked_mul(binomial(ni - b - 1, ki - b - 1)?)
            .ok_or(Error::Overflow("blockage denominator"))?;
        den += c as f64 * powu(r, b as u32);
    }
    Ok(num / den)
}

/// Mass of `nu` on states where worker 1 is blocked.
pub fn blockage_fraction_from_distribution(
    nu: &StationaryDistribution,
    states: &[State],
) -> Result<f64> {
    worker_blockage_from_distribution(nu, states, 0)
}

/// Mass of `nu` on states where the given 0-based worker is blocked.
pub fn worker_blockage_from_distribution(
    nu: &StationaryDistribution,
    states: &[State],
    worker: usize,
) -> Result<f64> {
    if nu.len() != states.len() {
        return Err(Error::Mismatch(format!(
            "distribution of length {} against {} states",
            nu.len(),
            states.len()
        )));
    }
    Ok(nu
        .nu
        .iter()
        .zip(states)
        .filter(|(_, s)| s.is_blocked(worker))
        .map(|(v, _)| v)
        .sum())
}
