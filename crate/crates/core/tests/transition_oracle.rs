//! Exact enumeration of one time step's trial outcomes, compared with the
//! closed-form transition matrix.
//!
//! The oracle replays the round dynamics directly: it branches on every
//! moving worker's trial each round and accumulates the probability of each
//! final (gaps, blocked mask). It shares no code with the simulator or the
//! matrix builder.

use std::collections::BTreeMap;

use ringwalk::{build_transition_matrix, Params};

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Moving,
    Stopped,
    Blocked,
}

struct Oracle {
    n: i64,
    s: f64,
    prune: f64,
    pruned: f64,
    outcomes: BTreeMap<(Vec<u32>, u64), f64>,
}

impl Oracle {
    fn gaps(&self, pos: &[i64]) -> Vec<u32> {
        let k = pos.len();
        (0..k)
            .map(|i| {
                let d = (pos[(i + 1) % k] - pos[i]).rem_euclid(self.n);
                if d == 0 {
                    self.n as u32
                } else {
                    d as u32
                }
            })
            .collect()
    }

    fn explore(&mut self, pos: Vec<i64>, status: Vec<Status>, prob: f64) {
        let k = pos.len();
        if prob < self.prune {
            self.pruned += prob;
            return;
        }
        let mut status = status;
        // Blocking, propagated through adjacent moving workers.
        loop {
            let gaps = self.gaps(&pos);
            let mut changed = false;
            for i in 0..k {
                if k > 1
                    && status[i] == Status::Moving
                    && gaps[i] == 1
                    && status[(i + 1) % k] != Status::Moving
                {
                    status[i] = Status::Blocked;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let moving: Vec<usize> = (0..k).filter(|&i| status[i] == Status::Moving).collect();
        if moving.is_empty() {
            let mask = (0..k)
                .filter(|&i| status[i] == Status::Blocked)
                .fold(0u64, |m, i| m | 1 << i);
            *self.outcomes.entry((self.gaps(&pos), mask)).or_default() += prob;
            return;
        }
        let mut next_pos = pos.clone();
        for &i in &moving {
            next_pos[i] += 1;
        }
        for outcome in 0u32..(1 << moving.len()) {
            let mut st = status.clone();
            let mut p = prob;
            for (bit, &i) in moving.iter().enumerate() {
                if outcome >> bit & 1 == 1 {
                    st[i] = Status::Stopped;
                    p *= self.s;
                } else {
                    p *= 1.0 - self.s;
                }
            }
            self.explore(next_pos.clone(), st, p);
        }
    }
}

fn check_rows(k: usize, n: usize, s: f64) {
    let params = Params::new(k, n, s).unwrap();
    let p = build_transition_matrix(&params).unwrap();
    let mut seen = std::collections::HashSet::new();
    for (i, from) in p.states().iter().enumerate() {
        if !seen.insert(from.gaps().to_vec()) {
            continue;
        }
        let mut oracle = Oracle {
            n: n as i64,
            s,
            prune: 1e-15,
            pruned: 0.0,
            outcomes: BTreeMap::new(),
        };
        let mut pos = Vec::new();
        let mut at = 0i64;
        for &g in from.gaps() {
            pos.push(at);
            at += g as i64;
        }
        oracle.explore(pos, vec![Status::Moving; k], 1.0);
        let tol = oracle.pruned + 1e-12;
        assert!(
            oracle.pruned < 1e-9,
            "pruned too much mass: {}",
            oracle.pruned
        );
        for (j, to) in p.states().iter().enumerate() {
            let exact = oracle
                .outcomes
                .get(&(to.gaps().to_vec(), to.blocked_mask()))
                .copied()
                .unwrap_or(0.0);
            let formula = p.get(i, j);
            assert!(
                (exact - formula).abs() <= tol,
                "k={k} n={n} s={s}: {from} -> {to}: enumeration {exact}, formula {formula}"
            );
        }
        // Nothing lands outside the state space.
        assert_eq!(oracle.outcomes.len(), p.order(), "k={k} n={n}");
    }
}

#[test]
fn two_workers_three_bins() {
    for s in [0.3, 0.5, 0.8] {
        check_rows(2, 3, s);
    }
}

#[test]
fn hand_values_for_two_workers() {
    let s: f64 = 0.5;
    let q = 1.0 - s;
    let params = Params::new(2, 3, s).unwrap();
    let p = build_transition_matrix(&params).unwrap();
    let c = s * s / (1.0 - q * q);
    // (1,2) -> (2,1) and (1,2) -> (2,1*)
    assert!((p.get(0, 2) - c * q).abs() < 1e-15);
    assert!((p.get(0, 3) - (q / s) * c * q).abs() < 1e-15);
}

#[test]
fn three_workers_seven_bins() {
    check_rows(3, 7, 0.5);
    check_rows(3, 7, 0.7);
}

#[test]
fn crowded_rings() {
    check_rows(3, 3, 0.5);
    check_rows(4, 5, 0.6);
    check_rows(2, 6, 0.4);
}
