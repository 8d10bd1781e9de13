//! Per-round topologies whose unions over every window of `δ` rounds are
//! strongly connected.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use crate::error::{param, Error, Result};
use crate::graph::WeightedDigraph;
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleMode {
    /// The base graph every round.
    Fixed,
    /// Base edges dealt round-robin into `delta` groups, one group per round.
    Partition { delta: usize },
    /// Each base edge dropped independently with probability `p_drop`; a
    /// spanning certificate is restored at the end of any window whose
    /// union would otherwise be disconnected.
    RandomDrop { p_drop: f64, delta: usize },
    /// Jamming corrupts data, not links: the base graph every round.
    JamIsolation { jammed: Vec<usize> },
}

impl ScheduleMode {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleMode::Fixed => "fixed",
            ScheduleMode::Partition { .. } => "partition",
            ScheduleMode::RandomDrop { .. } => "random_drop",
            ScheduleMode::JamIsolation { .. } => "jam_isolation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySchedule {
    base: WeightedDigraph,
    mode: ScheduleMode,
    seed: u64,
    edges: Vec<(usize, usize)>,
    certificate: BTreeSet<(usize, usize)>,
}

impl TopologySchedule {
    pub fn new(base: WeightedDigraph, mode: ScheduleMode, seed: u64) -> Result<Self> {
        if !base.is_strongly_connected() {
            return Err(Error::Structure("schedule base graph must be strongly connected".into()));
        }
        match &mode {
            ScheduleMode::Partition { delta } | ScheduleMode::RandomDrop { delta, .. } if *delta == 0 => {
                return Err(param("window length delta must be at least 1"));
            }
            ScheduleMode::RandomDrop { p_drop, .. } if !(0.0..=1.0).contains(p_drop) => {
                return Err(param(format!("drop probability {p_drop} outside [0,1]")));
            }
            ScheduleMode::JamIsolation { jammed } if jammed.iter().any(|&j| j >= base.n()) => {
                return Err(param("jammed node out of range"));
            }
            _ => {}
        }
        let edges = base.edges().map(|(i, j, _)| (i, j)).collect();
        let certificate = spanning_certificate(&base);
        Ok(Self { base, mode, seed, edges, certificate })
    }

    pub fn base(&self) -> &WeightedDigraph {
        &self.base
    }

    pub fn mode(&self) -> &ScheduleMode {
        &self.mode
    }

    /// Window length `δ`; 1 for modes that emit the base graph.
    pub fn delta(&self) -> usize {
        match self.mode {
            ScheduleMode::Partition { delta } | ScheduleMode::RandomDrop { delta, .. } => delta,
            _ => 1,
        }
    }

    /// True if every round emits the same graph.
    pub fn is_static(&self) -> bool {
        matches!(self.mode, ScheduleMode::Fixed | ScheduleMode::JamIsolation { .. })
            || matches!(self.mode, ScheduleMode::Partition { delta: 1 })
    }

    /// `G^t` for `t ≥ 1`, a pure function of `(seed, t)`.
    pub fn edges_at(&self, t: usize) -> WeightedDigraph {
        let t = t.max(1);
        match &self.mode {
            ScheduleMode::Fixed | ScheduleMode::JamIsolation { .. } => self.base.clone(),
            ScheduleMode::Partition { delta } => {
                let group = (t - 1) % delta;
                self.base.subgraph(self.edges.iter().enumerate().filter(|(k, _)| k % delta == group).map(|(_, &e)| e))
            }
            ScheduleMode::RandomDrop { p_drop, delta } => {
                let mut kept = self.dropped_round(t, *p_drop);
                if t % delta == 0 {
                    let mut union: BTreeSet<(usize, usize)> = kept.iter().copied().collect();
                    for s in t + 1 - delta..t {
                        union.extend(self.dropped_round(s, *p_drop));
                    }
                    let window = self.base.subgraph(union.iter().copied());
                    if !window.is_strongly_connected() {
                        let present: BTreeSet<_> = kept.iter().copied().collect();
                        kept.extend(self.certificate.iter().filter(|e| !present.contains(e)).copied());
                    }
                }
                self.base.subgraph(kept)
            }
        }
    }

    fn dropped_round(&self, t: usize, p_drop: f64) -> Vec<(usize, usize)> {
        let mut rng = stream(self.seed, tag::SCHEDULE, t as u64, 0);
        self.edges.iter().copied().filter(|_| !rng.random_bool(p_drop)).collect()
    }
}

/// Out-tree from node 0 together with an in-tree into node 0, both by BFS.
fn spanning_certificate(g: &WeightedDigraph) -> BTreeSet<(usize, usize)> {
    let mut cert = BTreeSet::new();
    if g.n() == 0 {
        return cert;
    }
    for forward in [true, false] {
        let mut seen = vec![false; g.n()];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            let next = if forward { g.out_neighbors(u) } else { g.in_neighbors(u) };
            for &v in next {
                if !seen[v] {
                    seen[v] = true;
                    cert.insert(if forward { (u, v) } else { (v, u) });
                    queue.push_back(v);
                }
            }
        }
    }
    cert
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleReport {
    pub delta: usize,
    pub windows_checked: usize,
    /// 1-based index of the first window whose union is not strongly
    /// connected.
    pub first_violation: Option<usize>,
}

impl ScheduleReport {
    pub fn is_valid(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks every complete `δ`-window in rounds `1..=horizon`.
pub fn validate_schedule(sched: &TopologySchedule, horizon: usize) -> ScheduleReport {
    validate_windows(sched.delta(), horizon, |t| sched.edges_at(t))
}

/// [`validate_schedule`] for an arbitrary per-round graph source.
pub fn validate_windows(delta: usize, horizon: usize, edges_at: impl Fn(usize) -> WeightedDigraph) -> ScheduleReport {
    let delta = delta.max(1);
    let windows = horizon / delta;
    for w in 0..windows {
        let graphs: Vec<_> = (w * delta + 1..=(w + 1) * delta).map(&edges_at).collect();
        let connected = WeightedDigraph::union_graph(&graphs).is_ok_and(|u| u.is_strongly_connected());
        if !connected {
            return ScheduleReport { delta, windows_checked: w + 1, first_violation: Some(w + 1) };
        }
    }
    ScheduleReport { delta, windows_checked: windows, first_violation: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GraphFamily, GraphFamilySpec};

    fn er(n: usize, seed: u64) -> WeightedDigraph {
        let spec = GraphFamilySpec::new(GraphFamily::ErdosRenyi { p: 0.3, directed: false }, n, seed);
        let g = generate(&spec).unwrap();
        assert!(g.is_strongly_connected());
        g
    }

    #[test]
    fn fixed_mode_emits_base() {
        let g = er(12, 1);
        let s = TopologySchedule::new(g.clone(), ScheduleMode::Fixed, 0).unwrap();
        assert_eq!(s.edges_at(1), g);
        assert_eq!(s.edges_at(77), g);
        assert!(validate_schedule(&s, 100).is_valid());
    }

    #[test]
    fn partition_deals_round_robin() {
        let cycle = generate(&GraphFamilySpec::new(GraphFamily::DirectedCycle, 4, 0)).unwrap();
        let s = TopologySchedule::new(cycle.clone(), ScheduleMode::Partition { delta: 2 }, 0).unwrap();
        let (a, b) = (s.edges_at(1), s.edges_at(2));
        assert_eq!(a.edge_count(), 2);
        assert_eq!(b.edge_count(), 2);
        assert_eq!(s.edges_at(3), a);
        for t in 1..10 {
            let u = WeightedDigraph::union_graph(&[s.edges_at(t), s.edges_at(t + 1)]).unwrap();
            assert_eq!(u, cycle);
        }
        let report = validate_schedule(&s, 101);
        assert!(report.is_valid());
        assert_eq!(report.windows_checked, 50);

        let g = er(15, 2);
        let s = TopologySchedule::new(g.clone(), ScheduleMode::Partition { delta: 3 }, 0).unwrap();
        let window: Vec<_> = (4..=6).map(|t| s.edges_at(t)).collect();
        assert_eq!(WeightedDigraph::union_graph(&window).unwrap().adjacency(), g.adjacency());
    }

    #[test]
    fn random_drop_is_deterministic_and_valid() {
        let g = er(20, 3);
        let s = TopologySchedule::new(g, ScheduleMode::RandomDrop { p_drop: 0.9, delta: 3 }, 42).unwrap();
        for t in 1..30 {
            assert_eq!(s.edges_at(t), s.edges_at(t));
        }
        assert!(validate_schedule(&s, 300).is_valid());
        let sparse = (1..=300).any(|t| !s.edges_at(t).is_strongly_connected());
        assert!(sparse);
    }

    #[test]
    fn jam_isolation_keeps_links() {
        let g = er(10, 4);
        let s = TopologySchedule::new(g.clone(), ScheduleMode::JamIsolation { jammed: vec![1, 2] }, 0).unwrap();
        assert_eq!(s.edges_at(5), g);
    }

    #[test]
    fn empty_rounds_violate_first_window() {
        let report = validate_windows(2, 10, |_| WeightedDigraph::empty(3));
        assert_eq!(report.first_violation, Some(1));
    }

    #[test]
    fn rejects_disconnected_base() {
        let g = WeightedDigraph::from_pairs(3, [(0, 1), (1, 0)]).unwrap();
        assert!(matches!(TopologySchedule::new(g, ScheduleMode::Fixed, 0), Err(Error::Structure(_))));
    }
}
