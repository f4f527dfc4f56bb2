use std::fmt::Write as _;
use std::path::Path;

use ringwalk::export::{self, csv_field, fmt17, sig17, LabeledProbability};
use ringwalk::markov::{
    build_transition_matrix_with_cap, closed_form_stationary_with_cap, power_iteration_from,
};
use ringwalk::simulator::run_traced;
use ringwalk::verify::{verify_instance, Tolerances};
use ringwalk::{
    blockage_fraction_closed_form, count_configurations, empirical_state_distribution, run_config,
    Params, SimConfig, State, StateSpace,
};
use serde::Serialize;

use crate::output::{write_atomic, Sink};
use crate::{Cli, Command, Dims, Failure, Format, Method, Rate};

type Outcome = Result<(), Failure>;

/// Scale of the blockage tolerance: 3 / sqrt(recorded steps).
const BLOCKAGE_TOL_SCALE: f64 = 3.0;
/// Scale of the occupancy L1 tolerance: 10 / sqrt(recorded steps).
const OCCUPANCY_TOL_SCALE: f64 = 10.0;

fn params(dims: Dims, rate: Rate) -> Result<Params, Failure> {
    Ok(Params::new(dims.k, dims.n, rate.s)?)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("output serializes");
    s.push('\n');
    s
}

fn stem(name: &str, dims: Dims, rate: Option<Rate>) -> String {
    match rate {
        Some(r) => format!("{name}_k{}_n{}_s{}", dims.k, dims.n, r.s),
        None => format!("{name}_k{}_n{}", dims.k, dims.n),
    }
}

struct Emitter<'a> {
    out: Option<&'a Path>,
    dir: Option<&'a Path>,
    format: Format,
}

impl Emitter<'_> {
    fn emit(&self, stem: &str, body: &str) -> Outcome {
        let ext = match self.format {
            Format::Json => "json",
            Format::Csv => "csv",
        };
        Sink::resolve(self.out, self.dir, &format!("{stem}.{ext}")).write(body)?;
        Ok(())
    }
}

pub fn dispatch(cli: Cli) -> Outcome {
    let io = &cli.io;
    if let Command::Digraph { dot: true, .. } = cli.command {
        if io.format.is_some() {
            return Err(Failure::Domain(
                "--dot cannot be combined with --format".into(),
            ));
        }
    }
    let em = Emitter {
        out: io.out.as_deref(),
        dir: io.out_dir.as_deref(),
        format: io.format.unwrap_or(Format::Json),
    };
    let cap = io.cap;
    match cli.command {
        Command::States { dims } => states(&em, dims, cap),
        Command::Matrix { dims, rate } => {
            let p = build_transition_matrix_with_cap(&params(dims, rate)?, cap)?;
            let body = match em.format {
                Format::Json => export::matrix_json(&p) + "\n",
                Format::Csv => export::matrix_csv(&p),
            };
            em.emit(&stem("matrix", dims, Some(rate)), &body)
        }
        Command::Stationary {
            dims,
            rate,
            method,
            power_tol,
            max_iter,
        } => stationary(&em, dims, rate, method, power_tol, max_iter, cap),
        Command::Blockage { dims, rate } => blockage(&em, dims, rate),
        Command::Simulate {
            dims,
            rate,
            steps,
            seed,
            burnin,
            f_cap,
            replicas,
            start,
            trace,
            check,
        } => {
            let start = start.map(|s| s.parse::<State>()).transpose()?;
            let cfg = SimConfig {
                burnin,
                f_cap,
                replicas,
                start,
                state_cap: cap,
                ..SimConfig::new(params(dims, rate)?, steps, seed)
            };
            let trace = trace.map(|t| match (&io.out_dir, t.is_relative()) {
                (Some(d), true) => d.join(t),
                _ => t,
            });
            simulate(&em, dims, rate, &cfg, trace.as_deref(), check)
        }
        Command::Verify {
            dims,
            rate,
            tol_exact,
            tol_eigen,
        } => {
            if [tol_exact, tol_eigen]
                .iter()
                .any(|t| !(t.is_finite() && *t >= 0.0))
            {
                return Err(Failure::Domain(
                    "tolerances must be finite and non-negative".into(),
                ));
            }
            let tol = Tolerances {
                exact: tol_exact,
                eigen: tol_eigen,
            };
            let report = verify_instance(&params(dims, rate)?, tol, cap)?;
            let body = match em.format {
                Format::Json => json(&report),
                Format::Csv => {
                    let mut out = String::from("check,passed,detail\n");
                    for c in &report.checks {
                        let _ = writeln!(
                            out,
                            "{},{},{}",
                            csv_field(c.name),
                            c.passed,
                            csv_field(&c.detail)
                        );
                    }
                    out
                }
            };
            em.emit(&stem("verify", dims, Some(rate)), &body)?;
            match report.checks.iter().find(|c| !c.passed) {
                Some(c) => Err(Failure::Verification(format!(
                    "check failed: {} ({})",
                    c.name, c.detail
                ))),
                None => Ok(()),
            }
        }
        Command::Digraph { dims, dot } => digraph(&em, dims, dot, cap),
    }
}

#[derive(Serialize)]
struct StateRow<'a> {
    index: usize,
    label: String,
    #[serde(flatten)]
    state: &'a State,
}

#[derive(Serialize)]
struct StatesDoc<'a> {
    k: usize,
    n: usize,
    count: usize,
    configurations: u128,
    states: Vec<StateRow<'a>>,
}

fn states(em: &Emitter, dims: Dims, cap: u128) -> Outcome {
    let space = StateSpace::with_cap(dims.k, dims.n, cap)?;
    let all = space.states()?;
    let body = match em.format {
        Format::Json => json(&StatesDoc {
            k: dims.k,
            n: dims.n,
            count: all.len(),
            configurations: count_configurations(dims.k, dims.n)?,
            states: all
                .iter()
                .enumerate()
                .map(|(index, state)| StateRow {
                    index,
                    label: state.label(),
                    state,
                })
                .collect(),
        }),
        Format::Csv => {
            let mut out = String::from("state\n");
            for st in &all {
                out.push_str(&csv_field(&st.label()));
                out.push('\n');
            }
            out
        }
    };
    em.emit(&stem("states", dims, None), &body)
}

#[derive(Serialize)]
struct PowerSummary {
    iterations: usize,
    #[serde(serialize_with = "sig17")]
    residual: f64,
}

#[derive(Serialize)]
struct StationaryDoc {
    params: Params,
    method: &'static str,
    closed: Option<Vec<LabeledProbability>>,
    power: Option<Vec<LabeledProbability>>,
    power_iteration: Option<PowerSummary>,
    #[serde(serialize_with = "opt17")]
    max_abs_diff: Option<f64>,
}

fn opt17<S: serde::Serializer>(x: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => sig17(v, ser),
        None => ser.serialize_none(),
    }
}

fn stationary(
    em: &Emitter,
    dims: Dims,
    rate: Rate,
    method: Method,
    tol: f64,
    max_iter: usize,
    cap: u128,
) -> Outcome {
    let params = params(dims, rate)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Failure::Domain(format!(
            "power tolerance must be positive, got {tol}"
        )));
    }
    let space = StateSpace::with_cap(dims.k, dims.n, cap)?;
    let states = space.states()?;
    let closed = match method {
        Method::Closed | Method::Both => Some(closed_form_stationary_with_cap(&params, cap)?),
        Method::Power => None,
    };
    let power = match method {
        Method::Power | Method::Both => {
            let p = build_transition_matrix_with_cap(&params, cap)?;
            Some(power_iteration_from(
                &p,
                &vec![1.0; p.order()],
                tol,
                max_iter,
            )?)
        }
        Method::Closed => None,
    };
    let body = match em.format {
        Format::Json => json(&StationaryDoc {
            params,
            method: match method {
                Method::Closed => "closed",
                Method::Power => "power",
                Method::Both => "both",
            },
            closed: closed.as_ref().map(|nu| export::labeled(nu, &states)),
            power: power.as_ref().map(|(nu, _)| export::labeled(nu, &states)),
            power_iteration: power.as_ref().map(|(_, st)| PowerSummary {
                iterations: st.iterations,
                residual: st.residual,
            }),
            max_abs_diff: match (&closed, &power) {
                (Some(c), Some((p, _))) => Some(c.max_abs_diff(p)),
                _ => None,
            },
        }),
        Format::Csv => {
            let mut out = String::from("state");
            if closed.is_some() {
                out.push_str(",closed");
            }
            if power.is_some() {
                out.push_str(",power");
            }
            out.push('\n');
            for (i, st) in states.iter().enumerate() {
                out.push_str(&csv_field(&st.label()));
                if let Some(c) = &closed {
                    let _ = write!(out, ",{}", fmt17(c.nu[i]));
                }
                if let Some((p, _)) = &power {
                    let _ = write!(out, ",{}", fmt17(p.nu[i]));
                }
                out.push('\n');
            }
            out
        }
    };
    em.emit(&stem("stationary", dims, Some(rate)), &body)
}

#[derive(Serialize)]
struct BlockageDoc {
    params: Params,
    #[serde(serialize_with = "sig17")]
    r: f64,
    #[serde(serialize_with = "sig17")]
    blockage_fraction: f64,
}

fn blockage(em: &Emitter, dims: Dims, rate: Rate) -> Outcome {
    let params = params(dims, rate)?;
    let b = blockage_fraction_closed_form(dims.k, dims.n, params.r())?;
    let body = match em.format {
        Format::Json => json(&BlockageDoc {
            params,
            r: params.r(),
            blockage_fraction: b,
        }),
        Format::Csv => format!(
            "k,n,s,r,blockage_fraction\n{},{},{},{},{}\n",
            dims.k,
            dims.n,
            fmt17(params.s()),
            fmt17(params.r()),
            fmt17(b)
        ),
    };
    em.emit(&stem("blockage", dims, Some(rate)), &body)
}

/// Simulation statistics against the closed forms, with tolerances scaled
/// by the run length. A finite failure cap has no analytic target; the
/// comparison is still reported against the unbounded chain.
#[derive(Serialize)]
struct Comparison {
    #[serde(serialize_with = "sig17")]
    closed_form_blockage: f64,
    #[serde(serialize_with = "sig17")]
    worker1_deviation: f64,
    #[serde(serialize_with = "sig17")]
    aggregate_deviation: f64,
    #[serde(serialize_with = "sig17")]
    blockage_tolerance: f64,
    #[serde(serialize_with = "sig17")]
    occupancy_l1: f64,
    #[serde(serialize_with = "sig17")]
    occupancy_tolerance: f64,
    within_tolerance: bool,
}

#[derive(Serialize)]
struct SimulateDoc {
    stats: Box<serde_json::value::RawValue>,
    comparison: Comparison,
}

fn simulate(
    em: &Emitter,
    dims: Dims,
    rate: Rate,
    cfg: &SimConfig,
    trace: Option<&Path>,
    check: bool,
) -> Outcome {
    let space = StateSpace::with_cap(dims.k, dims.n, cfg.state_cap)?;
    let stats = match trace {
        None => run_config(cfg)?,
        Some(path) => {
            let labels: Vec<String> = space.states()?.iter().map(State::label).collect();
            let mut csv = String::from("replica,step,state,blocked_workers\n");
            let stats = run_traced(cfg, |row| {
                let blocked: Vec<String> = (0..dims.k)
                    .filter(|w| row.blocked >> w & 1 == 1)
                    .map(|w| (w + 1).to_string())
                    .collect();
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    row.replica,
                    row.step,
                    csv_field(&labels[row.state.0]),
                    csv_field(&blocked.join(","))
                );
            })?;
            write_atomic(path, csv.as_bytes())?;
            stats
        }
    };

    let params = cfg.params;
    let b = blockage_fraction_closed_form(dims.k, dims.n, params.r())?;
    let nu = closed_form_stationary_with_cap(&params, cfg.state_cap)?;
    let emp = empirical_state_distribution(&stats)?;
    let root = (stats.steps as f64).sqrt();
    let cmp = Comparison {
        closed_form_blockage: b,
        worker1_deviation: (stats.worker1_blocked_fraction - b).abs(),
        aggregate_deviation: (stats.blocked_fraction - b).abs(),
        blockage_tolerance: BLOCKAGE_TOL_SCALE / root,
        occupancy_l1: nu.l1_distance(&emp),
        occupancy_tolerance: OCCUPANCY_TOL_SCALE / root,
        within_tolerance: false,
    };
    let within = cmp.worker1_deviation <= cmp.blockage_tolerance
        && cmp.aggregate_deviation <= cmp.blockage_tolerance
        && cmp.occupancy_l1 <= cmp.occupancy_tolerance;
    let cmp = Comparison {
        within_tolerance: within,
        ..cmp
    };

    let body = match em.format {
        Format::Json => json(&SimulateDoc {
            stats: serde_json::value::RawValue::from_string(stats.to_json())
                .expect("stats are JSON"),
            comparison: cmp,
        }),
        Format::Csv => {
            let states = space.states()?;
            let mut out = String::from("state,visits,frequency,stationary\n");
            for (i, st) in states.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    csv_field(&st.label()),
                    stats.occupancy[i],
                    fmt17(emp[i]),
                    fmt17(nu.nu[i])
                );
            }
            out
        }
    };
    em.emit(&stem("simulate", dims, Some(rate)), &body)?;
    if check && !within {
        return Err(Failure::Verification(
            "simulation statistics outside tolerance".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct EdgeRow<'a> {
    from: &'a str,
    to: &'a str,
    generator: usize,
}

#[derive(Serialize)]
struct DigraphDoc<'a> {
    k: usize,
    n: usize,
    vertices: &'a [String],
    edges: Vec<EdgeRow<'a>>,
    strongly_connected: bool,
    self_converse: bool,
}

fn digraph(em: &Emitter, dims: Dims, dot: bool, cap: u128) -> Outcome {
    let g = ringwalk::digraph::build_digraph_with_cap(dims.k, dims.n, cap)?;
    if dot {
        let sink = Sink::resolve(
            em.out,
            em.dir,
            &format!("{}.dot", stem("digraph", dims, None)),
        );
        sink.write(&g.to_dot())?;
        return Ok(());
    }
    let labels: Vec<String> = g.vertices().iter().map(State::label).collect();
    let edges: Vec<EdgeRow> = (0..g.vertex_count())
        .flat_map(|v| {
            let labels = &labels;
            g.out_edges(v).iter().map(move |e| EdgeRow {
                from: &labels[v],
                to: &labels[e.target],
                generator: e.generator,
            })
        })
        .collect();
    let body = match em.format {
        Format::Json => json(&DigraphDoc {
            k: dims.k,
            n: dims.n,
            vertices: &labels,
            strongly_connected: g.is_strongly_connected(),
            self_converse: ringwalk::check_self_converse(&g).holds,
            edges,
        }),
        Format::Csv => {
            let mut out = String::from("from,to,generator\n");
            for e in &edges {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    csv_field(e.from),
                    csv_field(e.to),
                    e.generator
                );
            }
            out
        }
    };
    em.emit(&stem("digraph", dims, None), &body)
}
