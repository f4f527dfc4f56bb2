//! Markov states of the ring: gap configurations plus blocked markers.
//!
//! A state records, for each worker `i` (0-based), the distance `gaps[i]`
//! forward to worker `i + 1` (mod k). Bit `i` of the blocked mask marks
//! worker `i` as having been stopped by occupancy rather than by a success;
//! its gap is then physically 1 and is written `1*`.
//!
//! States are ordered lexicographically by gaps, then by the mask read as
//! an unsigned integer. The position in that order is the [`StateIndex`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default limit on the number of states any routine will materialize.
pub const DEFAULT_STATE_CAP: u128 = 1_000_000;

/// Largest worker count representable by the blocked mask.
pub const MAX_WORKERS: usize = 64;

/// Model parameters: `k` workers, `n` bins, per-bin success probability `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    k: usize,
    n: usize,
    s: f64,
}

impl Params {
    pub fn new(k: usize, n: usize, s: f64) -> Result<Self> {
        check_dims(k, n)?;
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!(
                "success probability must lie strictly between 0 and 1, got {s}"
            )));
        }
        Ok(Params { k, n, s })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Failure probability `1 - s`.
    pub fn q(&self) -> f64 {
        1.0 - self.s
    }

    /// Failure-to-success odds `q / s`.
    pub fn r(&self) -> f64 {
        self.q() / self.s
    }
}

pub(crate) fn check_dims(k: usize, n: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::Domain("worker count k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::Domain(format!(
            "bin count n = {n} must be at least the worker count k = {k}"
        )));
    }
    if k > MAX_WORKERS {
        return Err(Error::Domain(format!(
            "at most {MAX_WORKERS} workers are supported, got {k}"
        )));
    }
    Ok(())
}

/// Position of a state in the canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateIndex(pub usize);

/// A Markov state: physical gaps plus the blocked-worker mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "StateRepr", into = "StateRepr")]
pub struct State {
    gaps: Vec<u32>,
    blocked: u64,
}

#[derive(Serialize, Deserialize)]
struct StateRepr {
    gaps: Vec<u32>,
    blocked: Vec<usize>,
}

impl From<State> for StateRepr {
    fn from(s: State) -> Self {
        StateRepr {
            blocked: s.blocked_workers().collect(),
            gaps: s.gaps,
        }
    }
}

impl TryFrom<StateRepr> for State {
    type Error = Error;

    fn try_from(repr: StateRepr) -> Result<Self> {
        let mut mask = 0u64;
        for &w in &repr.blocked {
            if w >= repr.gaps.len() {
                return Err(Error::InvalidState(format!(
                    "blocked worker {w} out of range for {} workers",
                    repr.gaps.len()
                )));
            }
            mask |= 1 << w;
        }
        State::new(repr.gaps, mask)
    }
}

impl State {
    /// Builds a state, checking every invariant except the total `n`
    /// (which is taken to be the gap sum).
    pub fn new(gaps: Vec<u32>, blocked: u64) -> Result<Self> {
        let k = gaps.len();
        let n: u64 = gaps.iter().map(|&g| g as u64).sum();
        if k == 0 || k > MAX_WORKERS {
            return Err(Error::InvalidState(format!("worker count {k} unsupported")));
        }
        if !validate_state(&gaps, blocked, k, n as usize) {
            return Err(Error::InvalidState(format!(
                "gaps {gaps:?} with blocked mask {blocked:#b} violate the state invariants"
            )));
        }
        Ok(State { gaps, blocked })
    }

    /// A configuration with no blocked workers.
    pub fn unblocked(gaps: Vec<u32>) -> Result<Self> {
        State::new(gaps, 0)
    }

    pub(crate) fn from_parts_unchecked(gaps: Vec<u32>, blocked: u64) -> Self {
        debug_assert!(validate_state(
            &gaps,
            blocked,
            gaps.len(),
            gaps.iter().map(|&g| g as usize).sum()
        ));
        State { gaps, blocked }
    }

    pub fn k(&self) -> usize {
        self.gaps.len()
    }

    pub fn n(&self) -> usize {
        self.gaps.iter().map(|&g| g as usize).sum()
    }

    pub fn gaps(&self) -> &[u32] {
        &self.gaps
    }

    pub fn blocked_mask(&self) -> u64 {
        self.blocked
    }

    /// Number of blocked workers.
    pub fn blockages(&self) -> u32 {
        self.blocked.count_ones()
    }

    pub fn is_blocked(&self, worker: usize) -> bool {
        worker < 64 && self.blocked >> worker & 1 == 1
    }

    pub fn blocked_workers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k()).filter(move |&i| self.is_blocked(i))
    }

    /// The same physical configuration with every blocked marker cleared.
    pub fn physical(&self) -> State {
        State {
            gaps: self.gaps.clone(),
            blocked: 0,
        }
    }

    /// CSV-style label, e.g. `1*,2,4`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.gaps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{g}")?;
            if self.is_blocked(i) {
                f.write_str("*")?;
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for State {
    type Err = Error;

    /// Parses the CSV label form, e.g. `1*,2,4`.
    fn from_str(s: &str) -> Result<Self> {
        let mut gaps = Vec::new();
        let mut mask = 0u64;
        for (i, tok) in s.split(',').enumerate() {
            let tok = tok.trim();
            let (num, star) = match tok.strip_suffix('*') {
                Some(rest) => (rest, true),
                None => (tok, false),
            };
            let g: u32 = num
                .parse()
                .map_err(|_| Error::InvalidState(format!("bad gap entry {tok:?}")))?;
            if star {
                if i >= MAX_WORKERS {
                    return Err(Error::InvalidState("too many workers".into()));
                }
                mask |= 1 << i;
            }
            gaps.push(g);
        }
        State::new(gaps, mask)
    }
}

/// Checks every state invariant for `k` workers on `n` bins.
pub fn validate_state(gaps: &[u32], blocked: u64, k: usize, n: usize) -> bool {
    if !(1..=MAX_WORKERS).contains(&k) || n < k || gaps.len() != k {
        return false;
    }
    if k < 64 && blocked >> k != 0 {
        return false;
    }
    if gaps.iter().any(|&g| g < 1) {
        return false;
    }
    if gaps.iter().map(|&g| g as u64).sum::<u64>() != n as u64 {
        return false;
    }
    if (0..k).any(|i| blocked >> i & 1 == 1 && gaps[i] != 1) {
        return false;
    }
    (blocked.count_ones() as usize) < k
}

/// Exact binomial coefficient; zero when `r < 0` or `r > m`, one for `C(-1, -1)`.
pub fn binomial(m: i64, r: i64) -> Result<u128> {
    if r < 0 || m < 0 {
        // C(-1,-1) = 1 keeps the blocked-state count uniform at n = k.
        return Ok(u128::from(m == -1 && r == -1));
    }
    if r > m {
        return Ok(0);
    }
    let r = r.min(m - r) as u128;
    let m = m as u128;
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (m - i) is divisible by (i + 1) at every step.
        acc = acc.checked_mul(m - i).ok_or(Error::Overflow("binomial"))? / (i + 1);
    }
    Ok(acc)
}

/// Number of unblocked configurations, `C(n-1, k-1)`.
pub fn count_configurations(k: usize, n: usize) -> Result<u128> {
    check_dims(k, n)?;
    binomial(n as i64 - 1, k as i64 - 1)
}

/// Number of states with exactly `b` blocked workers, `C(k,b) C(n-b-1, k-b-1)`.
pub fn count_states_with_blockages(b: usize, k: usize, n: usize) -> Result<u128> {
    check_dims(k, n)?;
    if b >= k {
        return Err(Error::Domain(format!(
            "blockage count b = {b} must be below k = {k}"
        )));
    }
    let (b, k, n) = (b as i64, k as i64, n as i64);
    binomial(k, b)?
        .checked_mul(binomial(n - b - 1, k - b - 1)?)
        .ok_or(Error::Overflow("state count"))
}

/// Total number of states, summed over all blockage counts.
pub fn count_total_states(k: usize, n: usize) -> Result<u128> {
    check_dims(k, n)?;
    (0..k).try_fold(0u128, |acc, b| {
        acc.checked_add(count_states_with_blockages(b, k, n)?)
            .ok_or(Error::Overflow("state count"))
    })
}

/// Enumerates every state in canonical order, failing if there are more
/// than [`DEFAULT_STATE_CAP`].
pub fn enumerate_states(k: usize, n: usize) -> Result<Vec<State>> {
    StateSpace::with_cap(k, n, DEFAULT_STATE_CAP)?.states()
}

pub fn rank(state: &State, k: usize, n: usize) -> Result<StateIndex> {
    StateSpace::new(k, n)?.rank(state)
}

pub fn unrank(index: StateIndex, k: usize, n: usize) -> Result<State> {
    StateSpace::new(k, n)?.unrank(index)
}

/// Ranking tables for one `(k, n)` pair.
///
/// `weight[m][t]` counts the states of `m` trailing workers whose gaps sum
/// to `t`, where every gap of 1 may or may not carry the blocked marker.
#[derive(Debug, Clone)]
pub struct StateSpace {
    k: usize,
    n: usize,
    len: usize,
    cap: u128,
    weight: Vec<Vec<u128>>,
}

impl StateSpace {
    /// Ranking tables with the default materialization cap. `rank` and
    /// `unrank` work for any size; `states()` refuses spaces above the cap.
    pub fn new(k: usize, n: usize) -> Result<Self> {
        Self::with_cap(k, n, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(k: usize, n: usize, cap: u128) -> Result<Self> {
        check_dims(k, n)?;
        let total = count_total_states(k, n)?;
        let len = usize::try_from(total).map_err(|_| Error::Overflow("state index"))?;

        let mut weight = vec![vec![0u128; n + 1]; k + 1];
        weight[0][0] = 1;
        for m in 1..=k {
            for t in m..=n {
                let mut acc = 0u128;
                for v in 1..=(t - (m - 1)) {
                    let mult = if v == 1 { 2 } else { 1 };
                    let term = weight[m - 1][t - v]
                        .checked_mul(mult)
                        .ok_or(Error::Overflow("rank table"))?;
                    acc = acc.checked_add(term).ok_or(Error::Overflow("rank table"))?;
                }
                weight[m][t] = acc;
            }
        }
        Ok(StateSpace {
            k,
            n,
            len,
            cap,
            weight,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of states `M(k, n)`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cap(&self) -> u128 {
        self.cap
    }

    pub(crate) fn ensure_within_cap(&self) -> Result<()> {
        if self.len as u128 > self.cap {
            return Err(Error::ResourceCap {
                what: "state space",
                size: self.len as u128,
                cap: self.cap,
            });
        }
        Ok(())
    }

    /// All states in canonical order.
    pub fn states(&self) -> Result<Vec<State>> {
        self.ensure_within_cap()?;
        let mut out = Vec::with_capacity(self.len);
        for gaps in Compositions::new(self.k, self.n) {
            let ones = ones_mask(&gaps);
            for mask in Submasks::new(ones) {
                if mask.count_ones() as usize == self.k {
                    continue;
                }
                out.push(State {
                    gaps: gaps.clone(),
                    blocked: mask,
                });
            }
        }
        debug_assert_eq!(out.len(), self.len);
        Ok(out)
    }

    /// All unblocked configurations in lexicographic order.
    pub fn configurations(&self) -> Result<Vec<State>> {
        let count = count_configurations(self.k, self.n)?;
        if count > self.cap {
            return Err(Error::ResourceCap {
                what: "configuration set",
                size: count,
                cap: self.cap,
            });
        }
        Ok(Compositions::new(self.k, self.n)
            .map(|gaps| State { gaps, blocked: 0 })
            .collect())
    }

    pub fn contains(&self, state: &State) -> bool {
        validate_state(&state.gaps, state.blocked, self.k, self.n)
    }

    /// Lexicographic rank of an unblocked configuration among all
    /// `C(n-1, k-1)` configurations.
    pub fn configuration_rank(&self, gaps: &[u32]) -> Result<usize> {
        if !validate_state(gaps, 0, self.k, self.n) {
            return Err(Error::InvalidState(format!(
                "{gaps:?} is not a configuration for k = {}, n = {}",
                self.k, self.n
            )));
        }
        let mut index: u128 = 0;
        let mut remaining = self.n as i64;
        for (i, &g) in gaps.iter().enumerate().take(self.k - 1) {
            let tail = (self.k - i - 1) as i64;
            for v in 1..g as i64 {
                index += binomial(remaining - v - 1, tail - 1)?;
            }
            remaining -= g as i64;
        }
        Ok(index as usize)
    }

    pub fn rank(&self, state: &State) -> Result<StateIndex> {
        if !self.contains(state) {
            return Err(Error::InvalidState(format!(
                "{state} is not a state for k = {}, n = {}",
                self.k, self.n
            )));
        }
        let mut index: u128 = 0;
        let mut remaining = self.n;
        let mut prefix_mult: u128 = 1;
        for (i, &g) in state.gaps.iter().enumerate().take(self.k - 1) {
            let tail = self.k - i - 1;
            for v in 1..g as usize {
                let mult = if v == 1 { 2 } else { 1 };
                index += prefix_mult * mult * self.weight[tail][remaining - v];
            }
            if g == 1 {
                prefix_mult *= 2;
            }
            remaining -= g as usize;
        }
        index += compress_bits(state.blocked, ones_mask(&state.gaps)) as u128;
        Ok(StateIndex(index as usize))
    }

    pub fn unrank(&self, index: StateIndex) -> Result<State> {
        if index.0 >= self.len {
            return Err(Error::OutOfRange {
                index: index.0 as u128,
                len: self.len as u128,
            });
        }
        let mut rest = index.0 as u128;
        let mut gaps = Vec::with_capacity(self.k);
        let mut remaining = self.n;
        let mut prefix_mult: u128 = 1;
        for i in 0..self.k - 1 {
            let tail = self.k - i - 1;
            let mut v = 1;
            loop {
                let mult = if v == 1 { 2 } else { 1 };
                let block = prefix_mult * mult * self.weight[tail][remaining - v];
                if rest < block {
                    break;
                }
                rest -= block;
                v += 1;
            }
            if v == 1 {
                prefix_mult *= 2;
            }
            gaps.push(v as u32);
            remaining -= v;
        }
        gaps.push(remaining as u32);
        let blocked = deposit_bits(rest as u64, ones_mask(&gaps));
        Ok(State { gaps, blocked })
    }
}

fn ones_mask(gaps: &[u32]) -> u64 {
    gaps.iter()
        .enumerate()
        .filter(|(_, &g)| g == 1)
        .fold(0, |m, (i, _)| m | 1 << i)
}

/// Packs the bits of `value` selected by `select` into the low bits.
fn compress_bits(value: u64, select: u64) -> u64 {
    let mut out = 0;
    let mut j = 0;
    let mut sel = select;
    while sel != 0 {
        let bit = sel.trailing_zeros();
        out |= (value >> bit & 1) << j;
        j += 1;
        sel &= sel - 1;
    }
    out
}

/// Inverse of [`compress_bits`].
fn deposit_bits(value: u64, select: u64) -> u64 {
    let mut out = 0;
    let mut j = 0;
    let mut sel = select;
    while sel != 0 {
        let bit = sel.trailing_zeros();
        out |= (value >> j & 1) << bit;
        j += 1;
        sel &= sel - 1;
    }
    out
}

/// Positive compositions of `n` into `k` parts, lexicographically ascending.
#[derive(Debug, Clone)]
pub struct Compositions {
    next: Option<Vec<u32>>,
}

impl Compositions {
    pub fn new(k: usize, n: usize) -> Self {
        let next = (k >= 1 && n >= k).then(|| {
            let mut first = vec![1u32; k];
            first[k - 1] = (n - k + 1) as u32;
            first
        });
        Compositions { next }
    }
}

impl Iterator for Compositions {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let current = self.next.take()?;
        let k = current.len();
        // Rightmost slot whose suffix can donate one unit.
        let mut suffix: u32 = current[k - 1];
        let mut successor = None;
        for i in (0..k.saturating_sub(1)).rev() {
            if suffix > (k - 1 - i) as u32 {
                let mut g = current.clone();
                g[i] += 1;
                for slot in g.iter_mut().take(k - 1).skip(i + 1) {
                    *slot = 1;
                }
                g[k - 1] = suffix - 1 - (k - 2 - i) as u32;
                successor = Some(g);
                break;
            }
            suffix += current[i];
        }
        self.next = successor;
        Some(current)
    }
}

/// Submasks of `set` in increasing integer order, starting at zero.
struct Submasks {
    set: u64,
    next: Option<u64>,
}

impl Submasks {
    fn new(set: u64) -> Self {
        Submasks { set, next: Some(0) }
    }
}

impl Iterator for Submasks {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let cur = self.next?;
        let succ = (cur | !self.set).wrapping_add(1) & self.set;
        self.next = (succ != 0).then_some(succ);
        Some(cur)
    }
}
