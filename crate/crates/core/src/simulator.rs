//! Monte Carlo simulation of the workers in the fixed (bin) frame.
//!
//! A time step runs in synchronous rounds until every worker has stopped:
//!
//! 1. A moving worker whose next bin holds a stopped worker is blocked and
//!    stops without a trial. Blocking cascades backwards through a train of
//!    adjacent moving workers within the same round, since a worker blocked
//!    this round does not vacate its bin.
//! 2. Every remaining moving worker advances one bin and draws a
//!    Bernoulli(s) trial, stopping on success.
//! 3. With a failure cap `f`, a worker's `f`-th failure in the step stops it
//!    in place without a part (exhausted). It occupies its bin and blocks
//!    followers like any stopped worker.
//!
//! Randomness comes from ChaCha8 streams: the key is derived from the master
//! seed, and stream `replica << 16 | slot` feeds worker `slot` of that
//! replica. Slot `0xFFFF` draws the initial placement. Each worker consumes
//! exactly one draw per trial, so outcomes never depend on scheduling.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::sig17;
use crate::state_space::{Params, State, StateIndex, StateSpace, DEFAULT_STATE_CAP};

/// Rounds allowed in a single time step before giving up.
pub const ROUND_CAP: u64 = 10_000_000;

/// Burn-in used by the CLI when none is given.
pub const DEFAULT_BURNIN: u64 = 10_000;

const PLACEMENT_SLOT: u64 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkerStatus {
    Moving,
    StoppedSuccess,
    StoppedBlocked,
    StoppedExhausted,
}

/// Per-worker random streams for one replica.
#[derive(Debug, Clone)]
pub struct WorkerStreams {
    rngs: Vec<ChaCha8Rng>,
}

fn stream(seed: u64, replica: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica << 16 | slot);
    rng
}

impl WorkerStreams {
    pub fn new(seed: u64, replica: u64, k: usize) -> Self {
        WorkerStreams {
            rngs: (0..k as u64).map(|w| stream(seed, replica, w)).collect(),
        }
    }

    fn trial(&mut self, worker: usize, s: f64) -> bool {
        self.rngs[worker].random::<f64>() < s
    }
}

/// Worker positions on the ring. Worker `i + 1` (mod k) is the next worker
/// ahead of worker `i` in the direction of motion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    n: usize,
    positions: Vec<usize>,
    status: Vec<WorkerStatus>,
}

/// What happened during one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    /// Resulting Markov state; its mask marks the blocked workers.
    pub state: State,
    pub blocked: u64,
    pub exhausted: u64,
    pub rounds: u64,
    pub parts_collected: usize,
}

/// Gaps from bin positions given in worker order.
pub fn configuration_of_positions(positions: &[usize], n: usize) -> Result<State> {
    gaps_of_positions(positions, n).and_then(State::unblocked)
}

fn gaps_of_positions(positions: &[usize], n: usize) -> Result<Vec<u32>> {
    let k = positions.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("{k} workers cannot occupy {n} bins")));
    }
    if let Some(&p) = positions.iter().find(|&&p| p >= n) {
        return Err(Error::Domain(format!("bin {p} out of range for n = {n}")));
    }
    let mut sorted = positions.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidState(format!(
            "duplicate positions in {positions:?}"
        )));
    }
    let gaps: Vec<u32> = (0..k)
        .map(|i| {
            let d = (positions[(i + 1) % k] + n - positions[i]) % n;
            if d == 0 {
                n as u32
            } else {
                d as u32
            }
        })
        .collect();
    if gaps.iter().map(|&g| g as usize).sum::<usize>() != n {
        return Err(Error::InvalidState(format!(
            "positions {positions:?} are not in cyclic worker order"
        )));
    }
    Ok(gaps)
}

impl WorldState {
    pub fn new(positions: Vec<usize>, n: usize) -> Result<Self> {
        gaps_of_positions(&positions, n)?;
        let k = positions.len();
        Ok(WorldState {
            n,
            positions,
            status: vec![WorkerStatus::Moving; k],
        })
    }

    /// Places worker 1 at bin 0 and the rest according to `state`'s gaps.
    pub fn from_state(state: &State) -> Self {
        let mut positions = Vec::with_capacity(state.k());
        let mut at = 0usize;
        for &g in state.gaps() {
            positions.push(at);
            at += g as usize;
        }
        WorldState {
            n: state.n(),
            positions,
            status: vec![WorkerStatus::Moving; state.k()],
        }
    }

    /// Uniformly random placement: a random set of `k` bins with a random
    /// choice of which one holds worker 1.
    pub fn random<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<Self> {
        crate::state_space::check_dims(k, n)?;
        let mut bins = sample(rng, n, k).into_vec();
        bins.sort_unstable();
        let offset = rng.random_range(0..k);
        bins.rotate_left(offset);
        Self::new(bins, n)
    }

    pub fn k(&self) -> usize {
        self.positions.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn status(&self) -> &[WorkerStatus] {
        &self.status
    }

    pub fn configuration(&self) -> State {
        configuration_of_positions(&self.positions, self.n).expect("world invariants hold")
    }

    fn gap(&self, i: usize) -> usize {
        let k = self.k();
        let d = (self.positions[(i + 1) % k] + self.n - self.positions[i]) % self.n;
        if d == 0 {
            self.n
        } else {
            d
        }
    }

    /// Runs one time step in place.
    pub fn step(
        &mut self,
        params: &Params,
        f_cap: Option<u64>,
        streams: &mut WorkerStreams,
    ) -> Result<StepRecord> {
        let k = self.k();
        let s = params.s();
        self.status
            .iter_mut()
            .for_each(|st| *st = WorkerStatus::Moving);
        let mut failures = vec![0u64; k];
        let mut rounds = 0u64;

        while self.status.contains(&WorkerStatus::Moving) {
            rounds += 1;
            if rounds > ROUND_CAP {
                return Err(Error::RoundCap(ROUND_CAP));
            }
            if k > 1 {
                self.resolve_blockages();
            }
            for (i, fails) in failures.iter_mut().enumerate() {
                if self.status[i] != WorkerStatus::Moving {
                    continue;
                }
                self.positions[i] = (self.positions[i] + 1) % self.n;
                if streams.trial(i, s) {
                    self.status[i] = WorkerStatus::StoppedSuccess;
                } else {
                    *fails += 1;
                    if f_cap.is_some_and(|f| *fails >= f) {
                        self.status[i] = WorkerStatus::StoppedExhausted;
                    }
                }
            }
        }

        let mask_of = |want: WorkerStatus| {
            self.status
                .iter()
                .enumerate()
                .filter(|(_, &st)| st == want)
                .fold(0u64, |m, (i, _)| m | 1 << i)
        };
        let blocked = mask_of(WorkerStatus::StoppedBlocked);
        let exhausted = mask_of(WorkerStatus::StoppedExhausted);
        let gaps = (0..k).map(|i| self.gap(i) as u32).collect();
        let state = State::new(gaps, blocked)?;
        let parts_collected = self
            .status
            .iter()
            .filter(|&&st| st == WorkerStatus::StoppedSuccess)
            .count();
        Ok(StepRecord {
            state,
            blocked,
            exhausted,
            rounds,
            parts_collected,
        })
    }

    /// Marks every moving worker directly behind a stopped worker as
    /// blocked, repeating until no further worker is caught.
    fn resolve_blockages(&mut self) {
        let k = self.k();
        loop {
            let mut changed = false;
            for i in 0..k {
                if self.status[i] == WorkerStatus::Moving
                    && self.gap(i) == 1
                    && self.status[(i + 1) % k] != WorkerStatus::Moving
                {
                    self.status[i] = WorkerStatus::StoppedBlocked;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
}

/// One time step from `world`, returning the successor world.
pub fn step(
    world: &WorldState,
    params: &Params,
    f_cap: Option<u64>,
    streams: &mut WorkerStreams,
) -> Result<(WorldState, StepRecord)> {
    let mut next = world.clone();
    let rec = next.step(params, f_cap, streams)?;
    Ok((next, rec))
}

/// Experiment configuration for [`run_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: Params,
    /// Recorded steps per replica.
    pub steps: u64,
    pub seed: u64,
    pub burnin: u64,
    pub f_cap: Option<u64>,
    pub replicas: u64,
    /// Fixed initial configuration; uniform random placement when `None`.
    pub start: Option<State>,
    pub state_cap: u128,
}

impl SimConfig {
    pub fn new(params: Params, steps: u64, seed: u64) -> Self {
        SimConfig {
            params,
            steps,
            seed,
            burnin: DEFAULT_BURNIN,
            f_cap: None,
            replicas: 1,
            start: None,
            state_cap: DEFAULT_STATE_CAP,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Domain("steps must be at least 1".into()));
        }
        if self.replicas < 1 {
            return Err(Error::Domain("replicas must be at least 1".into()));
        }
        if self.replicas >= 1 << 48 {
            return Err(Error::Domain("too many replicas".into()));
        }
        if self.f_cap == Some(0) {
            return Err(Error::Domain("failure cap must be at least 1".into()));
        }
        if let Some(st) = &self.start {
            if st.k() != self.params.k() || st.n() != self.params.n() {
                return Err(Error::Mismatch(format!(
                    "start state {st} does not match k and n"
                )));
            }
        }
        Ok(())
    }
}

/// Aggregated statistics of one or more replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationStats {
    pub params: Params,
    pub seed: u64,
    pub rng: &'static str,
    pub replicas: u64,
    /// Total recorded steps over all replicas.
    pub steps: u64,
    pub burnin: u64,
    pub f_cap: Option<u64>,
    pub per_worker_blocked: Vec<u64>,
    pub per_worker_exhausted: Vec<u64>,
    /// Blocked worker-steps over all worker-steps.
    #[serde(serialize_with = "sig17")]
    pub blocked_fraction: f64,
    #[serde(serialize_with = "sig17")]
    pub worker1_blocked_fraction: f64,
    /// Exhausted worker-steps over all worker-steps.
    #[serde(serialize_with = "sig17")]
    pub exhausted_fraction: f64,
    pub parts_collected: u64,
    /// Visits per state, in canonical state order.
    pub occupancy: Vec<u64>,
}

impl SimulationStats {
    fn empty(cfg: &SimConfig, m: usize) -> Self {
        let k = cfg.params.k();
        SimulationStats {
            params: cfg.params,
            seed: cfg.seed,
            rng: "ChaCha8",
            replicas: 0,
            steps: 0,
            burnin: cfg.burnin,
            f_cap: cfg.f_cap,
            per_worker_blocked: vec![0; k],
            per_worker_exhausted: vec![0; k],
            blocked_fraction: 0.0,
            worker1_blocked_fraction: 0.0,
            exhausted_fraction: 0.0,
            parts_collected: 0,
            occupancy: vec![0; m],
        }
    }

    /// Adds another replica's counts. Associative and commutative on the
    /// counters; fractions are recomputed from them.
    pub fn merge(&mut self, other: &SimulationStats) {
        self.replicas += other.replicas;
        self.steps += other.steps;
        self.parts_collected += other.parts_collected;
        for (a, b) in self
            .per_worker_blocked
            .iter_mut()
            .zip(&other.per_worker_blocked)
        {
            *a += b;
        }
        for (a, b) in self
            .per_worker_exhausted
            .iter_mut()
            .zip(&other.per_worker_exhausted)
        {
            *a += b;
        }
        for (a, b) in self.occupancy.iter_mut().zip(&other.occupancy) {
            *a += b;
        }
        self.refresh_fractions();
    }

    fn refresh_fractions(&mut self) {
        let worker_steps = (self.steps * self.params.k() as u64) as f64;
        if self.steps == 0 {
            return;
        }
        self.blocked_fraction = self.per_worker_blocked.iter().sum::<u64>() as f64 / worker_steps;
        self.exhausted_fraction =
            self.per_worker_exhausted.iter().sum::<u64>() as f64 / worker_steps;
        self.worker1_blocked_fraction = self.per_worker_blocked[0] as f64 / self.steps as f64;
    }

    pub fn worker_blocked_fraction(&self, worker: usize) -> f64 {
        self.per_worker_blocked[worker] as f64 / self.steps as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

/// One row of an optional per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub replica: u64,
    pub step: u64,
    pub state: StateIndex,
    pub blocked: u64,
}

fn run_replica(
    cfg: &SimConfig,
    space: &StateSpace,
    replica: u64,
    mut trace: Option<&mut dyn FnMut(TraceRow)>,
) -> Result<SimulationStats> {
    let (k, n) = (cfg.params.k(), cfg.params.n());
    let mut world = match &cfg.start {
        Some(st) => WorldState::from_state(st),
        None => WorldState::random(k, n, &mut stream(cfg.seed, replica, PLACEMENT_SLOT))?,
    };
    let mut streams = WorkerStreams::new(cfg.seed, replica, k);
    for _ in 0..cfg.burnin {
        world.step(&cfg.params, cfg.f_cap, &mut streams)?;
    }
    let mut stats = SimulationStats::empty(cfg, space.len());
    stats.replicas = 1;
    for t in 0..cfg.steps {
        let rec = world.step(&cfg.params, cfg.f_cap, &mut streams)?;
        let idx = space.rank(&rec.state)?;
        stats.occupancy[idx.0] += 1;
        stats.parts_collected += rec.parts_collected as u64;
        for w in 0..k {
            stats.per_worker_blocked[w] += rec.blocked >> w & 1;
            stats.per_worker_exhausted[w] += rec.exhausted >> w & 1;
        }
        if let Some(sink) = trace.as_mut() {
            sink(TraceRow {
                replica,
                step: t,
                state: idx,
                blocked: rec.blocked,
            });
        }
    }
    stats.steps = cfg.steps;
    stats.refresh_fractions();
    Ok(stats)
}

/// Runs every replica (in parallel) and merges their statistics in
/// replica order.
pub fn run_config(cfg: &SimConfig) -> Result<SimulationStats> {
    cfg.validate()?;
    let space = StateSpace::with_cap(cfg.params.k(), cfg.params.n(), cfg.state_cap)?;
    space.ensure_within_cap()?;
    let parts = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| run_replica(cfg, &space, r, None))
        .collect::<Result<Vec<_>>>()?;
    let mut total = SimulationStats::empty(cfg, space.len());
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Sequential variant of [`run_config`] that reports every recorded step.
pub fn run_traced(cfg: &SimConfig, mut sink: impl FnMut(TraceRow)) -> Result<SimulationStats> {
    cfg.validate()?;
    let space = StateSpace::with_cap(cfg.params.k(), cfg.params.n(), cfg.state_cap)?;
    space.ensure_within_cap()?;
    let mut total = SimulationStats::empty(cfg, space.len());
    for r in 0..cfg.replicas {
        total.merge(&run_replica(cfg, &space, r, Some(&mut sink))?);
    }
    Ok(total)
}

pub fn run(
    params: Params,
    steps: u64,
    seed: u64,
    burnin: u64,
    f_cap: Option<u64>,
    replicas: u64,
) -> Result<SimulationStats> {
    run_config(&SimConfig {
        burnin,
        f_cap,
        replicas,
        ..SimConfig::new(params, steps, seed)
    })
}

/// Normalized occupancy frequencies in canonical state order.
pub fn empirical_state_distribution(stats: &SimulationStats) -> Result<Vec<f64>> {
    if stats.steps == 0 {
        return Err(Error::EmptyRun("no recorded steps".into()));
    }
    let total = stats.steps as f64;
    Ok(stats.occupancy.iter().map(|&c| c as f64 / total).collect())
}

/// Empirical one-step successor frequencies from a fixed start state.
pub fn transition_frequencies(
    params: &Params,
    start: &State,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if start.k() != params.k() || start.n() != params.n() {
        return Err(Error::Mismatch(format!(
            "start state {start} does not match k and n"
        )));
    }
    if trials == 0 {
        return Err(Error::EmptyRun("no trials".into()));
    }
    let space = StateSpace::new(params.k(), params.n())?;
    space.ensure_within_cap()?;
    let mut counts = vec![0u64; space.len()];
    let mut streams = WorkerStreams::new(seed, 0, params.k());
    let origin = WorldState::from_state(start);
    for _ in 0..trials {
        let mut world = origin.clone();
        let rec = world.step(params, None, &mut streams)?;
        counts[space.rank(&rec.state)?.0] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / trials as f64)
        .collect())
}
