//! Exact analysis of `k` workers circulating without passing on a ring of
//! `n` bins.
//!
//! Each time step every worker moves forward until it either succeeds at a
//! bin (probability `s` per bin) or runs into a stopped worker. Described by
//! the gaps between consecutive workers, this is a finite Markov chain whose
//! transition probabilities and stationary density have closed forms. The
//! crate enumerates the chain, evaluates those closed forms, and checks
//! them against power iteration, breadth-first search on the rearrangement
//! digraph, and direct Monte Carlo simulation.
//!
//! ```
//! use ringwalk::{blockage_fraction_closed_form, closed_form_stationary, Params};
//!
//! let params = Params::new(3, 7, 0.5).unwrap();
//! let nu = closed_form_stationary(&params).unwrap();
//! assert_eq!(nu.len(), 33);
//! let b = blockage_fraction_closed_form(3, 7, params.r()).unwrap();
//! assert!((b - 7.0 / 33.0).abs() < 1e-15);
//! ```

pub mod digraph;
pub mod error;
pub mod export;
pub mod markov;
pub mod rearrangement;
pub mod simulator;
pub mod state_space;
pub mod verify;

pub use digraph::{
    build_digraph, check_self_converse, compare_distances_with_phi, RearrangementDigraph,
    SelfConverseReport,
};
pub use error::{Error, Result};
pub use markov::{
    blockage_fraction_closed_form, blockage_fraction_from_distribution, build_transition_matrix,
    closed_form_stationary, power_iteration_from, power_iteration_stationary,
    transition_probability, StationaryDistribution, TransitionMatrix,
};
pub use rearrangement::{
    canonical_beta, costate, delta_vector, displacement, gamma, phi, Displacement,
    PathDecomposition,
};
pub use simulator::{
    configuration_of_positions, empirical_state_distribution, run, run_config, SimConfig,
    SimulationStats, WorldState,
};
pub use state_space::{
    count_configurations, count_states_with_blockages, count_total_states, enumerate_states, rank,
    unrank, validate_state, Params, State, StateIndex, StateSpace,
};
