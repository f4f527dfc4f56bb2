//! Rearrangement digraph over unblocked configurations.
//!
//! Vertices are the configurations of one `(k, n)` pair, indexed by their
//! lexicographic rank. There is an edge `X -> X + δ_i` whenever the target
//! still has every gap at least 1, so paths never leave the bounded
//! polytope. This makes the breadth-first distance an independent check on
//! the closed-form shortest-path length, which ignores the boundary.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rearrangement::{costate, phi};
use crate::state_space::{count_configurations, State, StateSpace, DEFAULT_STATE_CAP};

/// An edge target together with the 1-based generator that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub target: usize,
    pub generator: usize,
}

#[derive(Debug, Clone)]
pub struct RearrangementDigraph {
    space: StateSpace,
    vertices: Vec<State>,
    out: Vec<Vec<Edge>>,
}

pub fn build_digraph(k: usize, n: usize) -> Result<RearrangementDigraph> {
    build_digraph_with_cap(k, n, DEFAULT_STATE_CAP)
}

pub fn build_digraph_with_cap(k: usize, n: usize, cap: u128) -> Result<RearrangementDigraph> {
    let count = count_configurations(k, n)?;
    if count > cap {
        return Err(Error::ResourceCap {
            what: "rearrangement digraph",
            size: count,
            cap,
        });
    }
    let space = StateSpace::with_cap(k, n, cap)?;
    let vertices = space.configurations()?;
    let mut out = Vec::with_capacity(vertices.len());
    for v in &vertices {
        let gaps = v.gaps();
        let mut edges = Vec::new();
        if k > 1 {
            for i in 0..k {
                let next = (i + 1) % k;
                if gaps[next] < 2 {
                    continue;
                }
                let mut target = gaps.to_vec();
                target[i] += 1;
                target[next] -= 1;
                edges.push(Edge {
                    target: space.configuration_rank(&target)?,
                    generator: i + 1,
                });
            }
        }
        out.push(edges);
    }
    Ok(RearrangementDigraph {
        space,
        vertices,
        out,
    })
}

impl RearrangementDigraph {
    pub fn k(&self) -> usize {
        self.space.k()
    }

    pub fn n(&self) -> usize {
        self.space.n()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn vertices(&self) -> &[State] {
        &self.vertices
    }

    pub fn out_edges(&self, v: usize) -> &[Edge] {
        &self.out[v]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.out[from].iter().any(|e| e.target == to)
    }

    /// Vertex index of a configuration; blocked markers are ignored.
    pub fn index_of(&self, x: &State) -> Result<usize> {
        if x.k() != self.k() || x.n() != self.n() {
            return Err(Error::InvalidState(format!(
                "{x} is not a vertex of the ({}, {}) digraph",
                self.k(),
                self.n()
            )));
        }
        self.space.configuration_rank(x.gaps())
    }

    /// Breadth-first distances from `source` to every vertex.
    pub fn distances_from(&self, source: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.vertices.len()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            for e in &self.out[v] {
                if dist[e.target].is_none() {
                    dist[e.target] = Some(d + 1);
                    queue.push_back(e.target);
                }
            }
        }
        dist
    }

    /// Length of the shortest directed path, or `None` if unreachable.
    pub fn bfs_distance(&self, x: &State, y: &State) -> Result<Option<u32>> {
        let from = self.index_of(x)?;
        let to = self.index_of(y)?;
        Ok(self.distances_from(from)[to])
    }

    /// True when every vertex reaches every other.
    pub fn is_strongly_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        let forward = self.distances_from(0).iter().all(Option::is_some);
        let mut reverse = vec![Vec::new(); self.vertices.len()];
        for (v, edges) in self.out.iter().enumerate() {
            for e in edges {
                reverse[e.target].push(v);
            }
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &reverse[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        forward && seen.into_iter().all(|s| s)
    }

    /// Graphviz rendering with vertices labeled by gap tuples.
    pub fn to_dot(&self) -> String {
        let mut s = format!("digraph rearrangement_k{}_n{} {{\n", self.k(), self.n());
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "  v{i} [label=\"({v})\"];");
        }
        for (i, edges) in self.out.iter().enumerate() {
            for e in edges {
                let _ = writeln!(s, "  v{i} -> v{} [label=\"d{}\"];", e.target, e.generator);
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Outcome of checking that reversal of gaps maps the converse digraph
/// onto the digraph itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfConverseReport {
    pub holds: bool,
    /// `witness[v]` is the vertex index of the co-state of vertex `v`.
    pub witness: Vec<usize>,
    /// First edge `(X, Y)` whose image `(Y*, X*)` is missing.
    pub violation: Option<(State, State)>,
}

pub fn check_self_converse(g: &RearrangementDigraph) -> SelfConverseReport {
    let witness: Vec<usize> = g
        .vertices
        .iter()
        .map(|v| {
            g.index_of(&costate(v))
                .expect("co-state of a configuration is a configuration")
        })
        .collect();

    let mut image = witness.clone();
    image.sort_unstable();
    let bijective = image.iter().enumerate().all(|(i, &w)| i == w);

    let mut violation = None;
    'outer: for (x, edges) in g.out.iter().enumerate() {
        for e in edges {
            if !g.has_edge(witness[e.target], witness[x]) {
                violation = Some((g.vertices[x].clone(), g.vertices[e.target].clone()));
                break 'outer;
            }
        }
    }
    SelfConverseReport {
        holds: bijective && violation.is_none(),
        witness,
        violation,
    }
}

/// A pair whose breadth-first distance disagrees with the closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMismatch {
    pub from: State,
    pub to: State,
    pub bfs: Option<u32>,
    pub phi: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub pairs_checked: usize,
    pub mismatches: Vec<DistanceMismatch>,
}

impl DistanceReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares BFS distance against `phi(Y - X)` for every ordered pair.
/// Sources are processed in parallel; mismatches are reported in source order.
pub fn compare_distances_with_phi(g: &RearrangementDigraph) -> DistanceReport {
    let m = g.vertex_count();
    let mismatches: Vec<DistanceMismatch> = (0..m)
        .into_par_iter()
        .map(|src| {
            let dist = g.distances_from(src);
            let x = &g.vertices[src];
            let mut bad = Vec::new();
            for (dst, d) in dist.into_iter().enumerate() {
                let y = &g.vertices[dst];
                let delta: Vec<i64> = x
                    .gaps()
                    .iter()
                    .zip(y.gaps())
                    .map(|(&a, &b)| b as i64 - a as i64)
                    .collect();
                let p = phi(&delta).expect("configurations share n");
                if d.map(u64::from) != Some(p) {
                    bad.push(DistanceMismatch {
                        from: x.clone(),
                        to: y.clone(),
                        bfs: d,
                        phi: p,
                    });
                }
            }
            bad
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    DistanceReport {
        pairs_checked: m * m,
        mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(label: &str) -> State {
        label.parse().unwrap()
    }

    #[test]
    fn build_examples() {
        let g = build_digraph(3, 7).unwrap();
        assert_eq!(g.vertex_count(), 15);

        let g = build_digraph(1, 6).unwrap();
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.edge_count(), 0);

        let g = build_digraph(2, 3).unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.edge_count(), 2);
        let a = g.index_of(&st("1,2")).unwrap();
        let b = g.index_of(&st("2,1")).unwrap();
        assert!(g.has_edge(a, b));
        assert!(g.has_edge(b, a));
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            build_digraph_with_cap(5, 16, 1000),
            Err(Error::ResourceCap { size: 1365, .. })
        ));
    }

    #[test]
    fn edges_are_single_generators() {
        for (k, n) in [(2, 6), (3, 7), (4, 9), (5, 8)] {
            let g = build_digraph(k, n).unwrap();
            for (v, edges) in g.out.iter().enumerate() {
                assert!(edges.len() <= k);
                for e in edges {
                    let x = &g.vertices[v];
                    let y = &g.vertices[e.target];
                    let d: Vec<i64> = x
                        .gaps()
                        .iter()
                        .zip(y.gaps())
                        .map(|(&a, &b)| b as i64 - a as i64)
                        .collect();
                    assert_eq!(
                        d,
                        crate::rearrangement::delta_vector(e.generator, k).unwrap()
                    );
                    assert_eq!(phi(&d).unwrap(), 1);
                }
            }
        }
    }

    #[test]
    fn bfs_examples() {
        let g = build_digraph(3, 7).unwrap();
        let x = st("2,1,4");
        assert_eq!(g.bfs_distance(&x, &x).unwrap(), Some(0));
        assert_eq!(g.bfs_distance(&x, &st("1,1,5")).unwrap(), Some(1));
        assert_eq!(g.bfs_distance(&x, &st("3,1,3")).unwrap(), Some(2));
        assert!(g.bfs_distance(&x, &st("2,1,3")).is_err());
    }

    #[test]
    fn self_converse_examples() {
        let r = check_self_converse(&build_digraph(3, 7).unwrap());
        assert!(r.holds);
        assert_eq!(r.violation, None);
        for n in 2..=12 {
            assert!(check_self_converse(&build_digraph(2, n).unwrap()).holds);
        }
        assert!(check_self_converse(&build_digraph(1, 4).unwrap()).holds);
    }

    #[test]
    fn edge_reversal_property_up_to_ten_thousand_vertices() {
        for n in 1..=16 {
            for k in 1..=n.min(8) {
                if count_configurations(k, n).unwrap() > 10_000 {
                    continue;
                }
                let g = build_digraph(k, n).unwrap();
                for x in 0..g.vertex_count() {
                    let xs = g.index_of(&costate(&g.vertices[x])).unwrap();
                    for y in 0..g.vertex_count() {
                        if !g.has_edge(x, y) {
                            continue;
                        }
                        let ys = g.index_of(&costate(&g.vertices[y])).unwrap();
                        assert!(g.has_edge(ys, xs), "k={k} n={n}");
                    }
                }
            }
        }
    }

    #[test]
    fn bfs_matches_phi_on_small_instances() {
        for n in 1..=12 {
            for k in 1..=n {
                if count_configurations(k, n).unwrap() > 500 {
                    continue;
                }
                let report = compare_distances_with_phi(&build_digraph(k, n).unwrap());
                assert!(
                    report.passed(),
                    "k={k} n={n}: {:?}",
                    report.mismatches.first()
                );
            }
        }
    }

    #[test]
    fn strongly_connected_when_room_to_move() {
        for (k, n) in [(2, 3), (3, 7), (4, 9), (5, 7)] {
            assert!(build_digraph(k, n).unwrap().is_strongly_connected());
        }
    }

    #[test]
    fn dot_export_lists_vertices_and_edges() {
        let dot = build_digraph(2, 3).unwrap().to_dot();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("label=\"(1,2)\""));
        assert_eq!(dot.matches("->").count(), 2);
    }
}
