//! Aggregated invariant checks for one `(k, n, s)` instance.

use serde::Serialize;

use crate::digraph::{build_digraph_with_cap, check_self_converse, compare_distances_with_phi};
use crate::error::Result;
use crate::export::sig17;
use crate::markov::{
    blockage_fraction_closed_form, blockage_fraction_from_distribution,
    build_transition_matrix_with_cap, closed_form_stationary_with_cap, power_iteration_from, powu,
    POWER_MAX_ITER, POWER_TOL,
};
use crate::rearrangement::costate;
use crate::state_space::{
    count_configurations, count_states_with_blockages, count_total_states, Params, StateIndex,
    StateSpace, DEFAULT_STATE_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Checks of closed forms evaluated in floating point.
    pub exact: f64,
    /// Cross-checks against power iteration.
    pub eigen: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: 1e-12,
            eigen: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub params: Params,
    pub tolerances: Tolerances,
    pub states: usize,
    pub configurations: usize,
    #[serde(serialize_with = "sig17")]
    pub blockage_fraction: f64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Largest instance for which all-pairs BFS and rank round-trips run.
const PAIRWISE_CAP: usize = 5_000;
const ROUNDTRIP_CAP: usize = 100_000;

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail: detail.into(),
    }
}

/// Runs every module-level invariant suite. Resource-cap failures are
/// returned as errors; everything else becomes a check result.
pub fn verify_instance(params: &Params, tol: Tolerances, cap: u128) -> Result<VerifyReport> {
    let (k, n) = (params.k(), params.n());
    let space = StateSpace::with_cap(k, n, cap)?;
    let states = space.states()?;
    let mut checks = Vec::new();

    let total = count_total_states(k, n)?;
    let by_blockage: u128 = (0..k)
        .map(|b| count_states_with_blockages(b, k, n))
        .sum::<Result<u128>>()?;
    checks.push(check(
        "state counts",
        states.len() as u128 == total && total == by_blockage,
        format!(
            "enumerated {}, formula {total}, summed by blockage {by_blockage}",
            states.len()
        ),
    ));

    if states.len() <= ROUNDTRIP_CAP {
        let bad = states.iter().enumerate().find(|(i, st)| {
            space.rank(st).ok() != Some(StateIndex(*i))
                || space.unrank(StateIndex(*i)).ok().as_ref() != Some(*st)
        });
        checks.push(check(
            "rank/unrank round trip",
            bad.is_none(),
            match bad {
                Some((i, st)) => format!("fails at index {i} ({st})"),
                None => format!("{} states", states.len()),
            },
        ));
    }

    let p = build_transition_matrix_with_cap(params, cap)?;
    let row_err = p.max_row_sum_error();
    checks.push(check(
        "row sums",
        row_err <= tol.exact,
        format!("max |row sum - 1| = {row_err:e}"),
    ));
    let min_entry = p.rows().flatten().copied().fold(f64::INFINITY, f64::min);
    checks.push(check(
        "positive entries",
        min_entry > 0.0,
        format!("min entry {min_entry:e}"),
    ));

    let nu = closed_form_stationary_with_cap(params, cap)?;
    let residual = nu.residual(&p)?;
    checks.push(check(
        "closed-form stationarity",
        residual <= tol.exact,
        format!("|nu P - nu|_inf = {residual:e}"),
    ));

    let uniform = vec![1.0; p.order()];
    let power = power_iteration_from(&p, &uniform, POWER_TOL, POWER_MAX_ITER);
    let power_nu = match power {
        Ok((dist, stats)) => {
            let diff = dist.max_abs_diff(&nu);
            checks.push(check(
                "power iteration agrees",
                diff <= tol.eigen,
                format!("max diff {diff:e} after {} iterations", stats.iterations),
            ));
            Some(dist)
        }
        Err(e) => {
            checks.push(check("power iteration agrees", false, e.to_string()));
            None
        }
    };

    let closed_b = blockage_fraction_closed_form(k, n, params.r())?;
    let summed_b = blockage_fraction_from_distribution(&nu, &states)?;
    checks.push(check(
        "blockage formula vs closed-form density",
        (closed_b - summed_b).abs() <= tol.exact,
        format!("formula {closed_b:.17}, summed {summed_b:.17}"),
    ));
    if let Some(power_nu) = &power_nu {
        let eigen_b = blockage_fraction_from_distribution(power_nu, &states)?;
        checks.push(check(
            "blockage formula vs power iteration",
            (closed_b - eigen_b).abs() <= tol.eigen,
            format!("formula {closed_b:.17}, eigen {eigen_b:.17}"),
        ));
    }

    let r = params.r();
    let twin: Vec<usize> = states
        .iter()
        .map(|st| space.rank(&st.physical()).map(|i| i.0))
        .collect::<Result<_>>()?;
    let mut column_bad = None;
    let mut row_bad = None;
    'columns: for (j, st) in states.iter().enumerate() {
        if st.blockages() == 0 {
            continue;
        }
        if p.row(j) != p.row(twin[j]) && row_bad.is_none() {
            row_bad = Some(st.clone());
        }
        let factor = powu(r, st.blockages());
        for (i, from) in states.iter().enumerate() {
            if p.get(i, j) != factor * p.get(i, twin[j]) {
                column_bad = Some((from.clone(), st.clone()));
                break 'columns;
            }
        }
    }
    checks.push(check(
        "blocked-target columns scale by r^b",
        column_bad.is_none(),
        column_bad.map_or("exact".into(), |(x, y)| format!("fails for {x} -> {y}")),
    ));
    checks.push(check(
        "blocked-source rows match unblocked twin",
        row_bad.is_none(),
        row_bad.map_or("exact".into(), |x| format!("fails for {x}")),
    ));

    let unblocked: Vec<usize> = (0..states.len())
        .filter(|&i| states[i].blockages() == 0)
        .collect();
    let co: Vec<usize> = states
        .iter()
        .map(|st| space.rank(&costate(st)).map(|i| i.0))
        .collect::<Result<_>>()?;
    let mut sym_bad = None;
    'sym: for &i in &unblocked {
        for &j in &unblocked {
            if p.get(i, j) != p.get(co[j], co[i]) {
                sym_bad = Some((states[i].clone(), states[j].clone()));
                break 'sym;
            }
        }
    }
    checks.push(check(
        "co-state symmetry p(X,Y) = p(Y*,X*)",
        sym_bad.is_none(),
        sym_bad.map_or(format!("{} unblocked states", unblocked.len()), |(x, y)| {
            format!("fails for {x} -> {y}")
        }),
    ));

    let configs = count_configurations(k, n)? as usize;
    let g = build_digraph_with_cap(k, n, cap)?;
    let sc = check_self_converse(&g);
    checks.push(check(
        "digraph self-converse",
        sc.holds,
        match &sc.violation {
            Some((x, y)) => format!("edge {x} -> {y} has no reversed image"),
            None => format!("{} vertices, {} edges", g.vertex_count(), g.edge_count()),
        },
    ));
    if configs <= PAIRWISE_CAP {
        let report = compare_distances_with_phi(&g);
        checks.push(check(
            "BFS distance equals phi",
            report.passed(),
            match report.mismatches.first() {
                Some(m) => format!(
                    "{} mismatches, first {} -> {}: bfs {:?}, phi {}",
                    report.mismatches.len(),
                    m.from,
                    m.to,
                    m.bfs,
                    m.phi
                ),
                None => format!("{} ordered pairs", report.pairs_checked),
            },
        ));
    }

    Ok(VerifyReport {
        params: *params,
        tolerances: tol,
        states: states.len(),
        configurations: configs,
        blockage_fraction: closed_b,
        checks,
    })
}

pub fn verify(params: &Params) -> Result<VerifyReport> {
    verify_instance(params, Tolerances::default(), DEFAULT_STATE_CAP)
}
