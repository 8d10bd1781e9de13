//! Weighted directed graphs, the standard random families, and hop-distance
//! analysis.
//!
//! An edge `(i, j)` means information flows from `i` to `j`, so `i` belongs
//! to the in-neighborhood `N_j`. Nodes are 0-indexed in the API; the text
//! format is 1-indexed.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Error, Result};
use crate::linalg::Matrix;

/// Retry budget for the configuration-model k-regular sampler.
pub const REGULAR_MAX_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    edges: BTreeMap<(usize, usize), f64>,
    in_nbrs: Vec<Vec<usize>>,
    out_nbrs: Vec<Vec<usize>>,
}

impl WeightedDigraph {
    /// Graph on `n` nodes with no edges.
    pub fn empty(n: usize) -> Self {
        Self { n, edges: BTreeMap::new(), in_nbrs: vec![Vec::new(); n], out_nbrs: vec![Vec::new(); n] }
    }

    /// Builds a graph from `(from, to, weight)` triples.
    ///
    /// Rejects self-loops, duplicate edges, out-of-range nodes and negative
    /// or non-finite weights.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut map = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Validation(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::Validation(format!("self-loop at node {i}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Validation(format!("edge ({i},{j}) has invalid weight {w}")));
            }
            if map.insert((i, j), w).is_some() {
                return Err(Error::Validation(format!("duplicate edge ({i},{j})")));
            }
        }
        Ok(Self::from_map(n, map))
    }

    fn from_map(n: usize, edges: BTreeMap<(usize, usize), f64>) -> Self {
        let mut in_nbrs = vec![Vec::new(); n];
        let mut out_nbrs = vec![Vec::new(); n];
        for &(i, j) in edges.keys() {
            out_nbrs[i].push(j);
            in_nbrs[j].push(i);
        }
        for v in &mut in_nbrs {
            v.sort_unstable();
        }
        Self { n, edges, in_nbrs, out_nbrs }
    }

    /// Unit-weight graph from unweighted pairs.
    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(n: usize, pairs: I) -> Result<Self> {
        Self::from_edges(n, pairs.into_iter().map(|(i, j)| (i, j, 1.0)))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic `(from, to)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        self.edges.get(&(from, to)).copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains_key(&(from, to))
    }

    /// `N_i`: nodes with an edge into `i`, ascending.
    #[inline]
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_nbrs[i]
    }

    #[inline]
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_nbrs[i]
    }

    /// Weighted in-degree `d_i`.
    pub fn in_degree(&self, i: usize) -> f64 {
        self.in_nbrs[i].iter().map(|&j| self.edges[&(j, i)]).sum()
    }

    /// `max_i |N_i|`.
    pub fn max_in_neighbors(&self) -> usize {
        self.in_nbrs.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True if every edge has its reverse with the same weight.
    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|(&(i, j), &w)| self.edges.get(&(j, i)) == Some(&w))
    }

    /// Adjacency matrix with `A[j][i] = w` for edge `(i, j)`: row `j` lists
    /// what `j` receives.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for (&(i, j), &w) in &self.edges {
            a[(j, i)] = w;
        }
        a
    }

    /// Graph Laplacian `Δ − A` with `Δ` the diagonal of weighted in-degrees.
    pub fn laplacian(&self) -> Matrix {
        let mut l = self.adjacency();
        for j in 0..self.n {
            let d: f64 = l.row(j).iter().sum();
            for v in l.row_mut(j) {
                *v = -*v;
            }
            l[(j, j)] = d;
        }
        l
    }

    /// All-pairs directed hop distances by BFS.
    pub fn distances(&self) -> Distances {
        let n = self.n;
        let mut d = vec![None; n * n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            let row = &mut d[s * n..(s + 1) * n];
            row[s] = Some(0);
            queue.clear();
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                let du = row[u].unwrap_or(0);
                for &v in &self.out_nbrs[u] {
                    if row[v].is_none() {
                        row[v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
        }
        Distances { n, d }
    }

    /// Every ordered pair is mutually reachable.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let reach = |adj: &Vec<Vec<usize>>| {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        count += 1;
                        stack.push(v);
                    }
                }
            }
            count == self.n
        };
        reach(&self.out_nbrs) && reach(&self.in_nbrs)
    }

    /// Union of edge sets with weights summed on shared edges.
    pub fn union_graph(graphs: &[WeightedDigraph]) -> Result<WeightedDigraph> {
        let Some(first) = graphs.first() else {
            return Err(param("union of an empty sequence"));
        };
        let mut map = BTreeMap::new();
        for g in graphs {
            if g.n != first.n {
                return Err(param(format!("union over mismatched node counts {} and {}", first.n, g.n)));
            }
            for (&e, &w) in &g.edges {
                *map.entry(e).or_insert(0.0) += w;
            }
        }
        Ok(Self::from_map(first.n, map))
    }

    /// Subgraph keeping only the listed edges (which must exist here).
    pub fn subgraph<I: IntoIterator<Item = (usize, usize)>>(&self, keep: I) -> WeightedDigraph {
        let map = keep
            .into_iter()
            .filter_map(|e| self.edges.get(&e).map(|&w| (e, w)))
            .collect();
        Self::from_map(self.n, map)
    }

    /// Edge-list text: `n=<int>` then one 1-indexed `i j w` per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n={}\n", self.n);
        for (i, j, w) in self.edges() {
            let _ = writeln!(s, "{} {} {}", i + 1, j + 1, w);
        }
        s
    }

    /// Parses the format written by [`to_edge_list`](Self::to_edge_list).
    /// Blank lines and `#` comments are ignored; a missing weight means 1.
    pub fn from_edge_list(text: &str) -> Result<WeightedDigraph> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Format("missing header".into()))?;
        let n: usize = header
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Format(format!("bad header {header:?}, expected n=<int>")))?;
        let mut edges = Vec::new();
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 && parts.len() != 3 {
                return Err(Error::Format(format!("bad edge line {line:?}")));
            }
            let idx = |s: &str| -> Result<usize> {
                let v: usize = s.parse().map_err(|_| Error::Format(format!("bad node {s:?}")))?;
                if v == 0 {
                    return Err(Error::Format("nodes are 1-indexed".into()));
                }
                Ok(v - 1)
            };
            let w = match parts.get(2) {
                Some(s) => s.parse().map_err(|_| Error::Format(format!("bad weight {s:?}")))?,
                None => 1.0,
            };
            edges.push((idx(parts[0])?, idx(parts[1])?, w));
        }
        WeightedDigraph::from_edges(n, edges)
    }
}

/// Hop-distance matrix; `None` marks an unreachable pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Distances {
    n: usize,
    d: Vec<Option<usize>>,
}

impl Distances {
    /// `dist(from, to)`.
    #[inline]
    pub fn get(&self, from: usize, to: usize) -> Option<usize> {
        self.d[from * self.n + to]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `max_j dist(j, i)`, or `None` if some node cannot reach `i`.
    pub fn in_eccentricity(&self, i: usize) -> Option<usize> {
        (0..self.n).map(|j| self.get(j, i)).try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphFamily {
    /// `(i, j) ∈ E` iff `|i − j| = 1`.
    Path,
    /// Each candidate edge present with probability `p`. When `directed` is
    /// false, unordered pairs are sampled and stored in both directions.
    ErdosRenyi { p: f64, directed: bool },
    /// Uniform labeled tree (Prüfer sequence).
    RandomTree,
    /// Uniform-ish simple k-regular graph (pairing model with rejection).
    RandomRegular { k: usize },
    /// `0 → 1 → … → n−1 → 0`.
    DirectedCycle,
    /// Every ordered pair.
    Complete,
    /// Explicit 0-indexed edge list with unit weights.
    Explicit(Vec<(usize, usize)>),
}

impl GraphFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GraphFamily::Path => "path",
            GraphFamily::ErdosRenyi { .. } => "erdos_renyi",
            GraphFamily::RandomTree => "random_tree",
            GraphFamily::RandomRegular { .. } => "random_regular",
            GraphFamily::DirectedCycle => "directed_cycle",
            GraphFamily::Complete => "complete",
            GraphFamily::Explicit(_) => "explicit",
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(
            self,
            GraphFamily::ErdosRenyi { .. } | GraphFamily::RandomTree | GraphFamily::RandomRegular { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphFamilySpec {
    pub family: GraphFamily,
    pub n: usize,
    pub seed: u64,
}

impl GraphFamilySpec {
    pub fn new(family: GraphFamily, n: usize, seed: u64) -> Self {
        Self { family, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(param("graph needs at least one node"));
        }
        match self.family {
            GraphFamily::ErdosRenyi { p, .. } if !(0.0..=1.0).contains(&p) => {
                Err(param(format!("edge probability {p} outside [0,1]")))
            }
            GraphFamily::RandomRegular { k } => {
                if k == 0 || k >= self.n {
                    Err(param(format!("k-regular needs 1 <= k < n, got k={k}, n={}", self.n)))
                } else if (self.n * k) % 2 == 1 {
                    Err(param(format!("k-regular infeasible: n*k = {} is odd", self.n * k)))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Generates a graph of the requested family with unit weights.
pub fn generate(spec: &GraphFamilySpec) -> Result<WeightedDigraph> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let undirected = |pairs: &mut Vec<(usize, usize)>, a: usize, b: usize| {
        pairs.push((a, b));
        pairs.push((b, a));
    };
    match &spec.family {
        GraphFamily::Path => {
            for i in 1..n {
                undirected(&mut pairs, i - 1, i);
            }
        }
        GraphFamily::ErdosRenyi { p, directed } => {
            for i in 0..n {
                for j in 0..n {
                    if i == j || (!directed && j < i) {
                        continue;
                    }
                    if rng.random_bool(*p) {
                        if *directed {
                            pairs.push((i, j));
                        } else {
                            undirected(&mut pairs, i, j);
                        }
                    }
                }
            }
        }
        GraphFamily::RandomTree => {
            for (a, b) in random_tree_edges(n, &mut rng) {
                undirected(&mut pairs, a, b);
            }
        }
        GraphFamily::RandomRegular { k } => {
            for (a, b) in random_regular_edges(n, *k, &mut rng)? {
                undirected(&mut pairs, a, b);
            }
        }
        GraphFamily::DirectedCycle => {
            if n > 1 {
                pairs.extend((0..n).map(|i| (i, (i + 1) % n)));
            }
        }
        GraphFamily::Complete => {
            pairs.extend((0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))));
        }
        GraphFamily::Explicit(list) => pairs.extend(list.iter().copied()),
    }
    WeightedDigraph::from_pairs(n, pairs)
}

/// Decodes a uniformly random Prüfer sequence.
fn random_tree_edges(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => return Vec::new(),
        2 => return vec![(0, 1)],
        _ => {}
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let Reverse(leaf) = leaves.pop().expect("prufer decoding always has a leaf");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.push(Reverse(s));
        }
    }
    let Reverse(u) = leaves.pop().expect("two leaves remain");
    let Reverse(v) = leaves.pop().expect("two leaves remain");
    edges.push((u.min(v), u.max(v)));
    edges
}

/// Pairing model: shuffle `n·k` stubs, pair them up, reject self-loops and
/// multi-edges.
fn random_regular_edges(n: usize, k: usize, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    'attempt: for _ in 0..REGULAR_MAX_RETRIES {
        stubs.shuffle(rng);
        let mut seen = std::collections::BTreeSet::new();
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
        }
        return Ok(seen.into_iter().collect());
    }
    Err(Error::Generation(format!(
        "no simple {k}-regular pairing on {n} nodes after {REGULAR_MAX_RETRIES} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(g: &WeightedDigraph) -> Vec<(usize, usize)> {
        g.edges().map(|(i, j, _)| (i, j)).collect()
    }

    #[test]
    fn path_of_three() {
        let g = generate(&GraphFamilySpec::new(GraphFamily::Path, 3, 0)).unwrap();
        assert_eq!(pairs(&g), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn erdos_renyi_with_p_one_is_complete() {
        for directed in [false, true] {
            let g = generate(&GraphFamilySpec::new(GraphFamily::ErdosRenyi { p: 1.0, directed }, 4, 9)).unwrap();
            assert_eq!(g.edge_count(), 12);
        }
    }

    #[test]
    fn random_regular_has_exact_degree() {
        let g = generate(&GraphFamilySpec::new(GraphFamily::RandomRegular { k: 4 }, 100, 11)).unwrap();
        for i in 0..100 {
            assert_eq!(g.in_neighbors(i).len(), 4);
            assert_eq!(g.in_degree(i), 4.0);
        }
        assert!(g.is_symmetric());
    }

    #[test]
    fn infeasible_regular_requests_are_rejected() {
        let odd = GraphFamilySpec::new(GraphFamily::RandomRegular { k: 3 }, 5, 0);
        assert!(matches!(generate(&odd), Err(Error::Parameter(_))));
        let too_big = GraphFamilySpec::new(GraphFamily::RandomRegular { k: 5 }, 5, 0);
        assert!(matches!(generate(&too_big), Err(Error::Parameter(_))));
        let bad_p = GraphFamilySpec::new(GraphFamily::ErdosRenyi { p: 1.5, directed: false }, 5, 0);
        assert!(matches!(generate(&bad_p), Err(Error::Parameter(_))));
    }

    #[test]
    fn random_tree_is_a_spanning_tree() {
        for seed in 0..20 {
            let g = generate(&GraphFamilySpec::new(GraphFamily::RandomTree, 30, seed)).unwrap();
            assert_eq!(g.edge_count(), 2 * 29);
            assert!(g.is_strongly_connected());
        }
    }

    #[test]
    fn distances_on_small_graphs() {
        let complete = generate(&GraphFamilySpec::new(GraphFamily::Complete, 3, 0)).unwrap();
        let d = complete.distances();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.get(i, j), Some(usize::from(i != j)));
            }
        }
        let cycle = generate(&GraphFamilySpec::new(GraphFamily::DirectedCycle, 3, 0)).unwrap();
        let d = cycle.distances();
        assert_eq!(d.get(0, 2), Some(2));
        assert_eq!(d.get(2, 0), Some(1));
        let split = WeightedDigraph::empty(2);
        assert_eq!(split.distances().get(0, 1), None);
    }

    #[test]
    fn strong_connectivity() {
        let path = generate(&GraphFamilySpec::new(GraphFamily::Path, 5, 0)).unwrap();
        assert!(path.is_strongly_connected());
        let isolated = WeightedDigraph::from_pairs(3, [(0, 1), (1, 0)]).unwrap();
        assert!(!isolated.is_strongly_connected());
        let cycle = generate(&GraphFamilySpec::new(GraphFamily::DirectedCycle, 4, 0)).unwrap();
        assert!(cycle.is_strongly_connected());
        let one_way = WeightedDigraph::from_pairs(2, [(0, 1)]).unwrap();
        assert!(!one_way.is_strongly_connected());
    }

    #[test]
    fn union_behaviour() {
        let g = generate(&GraphFamilySpec::new(GraphFamily::Path, 4, 0)).unwrap();
        let u = WeightedDigraph::union_graph(&[g.clone(), g.clone()]).unwrap();
        assert_eq!(pairs(&u), pairs(&g));
        assert!(u.edges().all(|(_, _, w)| w == 2.0));

        let a = WeightedDigraph::from_pairs(4, [(0, 1), (2, 3)]).unwrap();
        let b = WeightedDigraph::from_pairs(4, [(1, 2), (3, 0)]).unwrap();
        let cycle = generate(&GraphFamilySpec::new(GraphFamily::DirectedCycle, 4, 0)).unwrap();
        assert_eq!(WeightedDigraph::union_graph(&[a, b]).unwrap(), cycle);

        let e = WeightedDigraph::union_graph(&[WeightedDigraph::empty(3), WeightedDigraph::empty(3)]).unwrap();
        assert_eq!(e.edge_count(), 0);

        let err = WeightedDigraph::union_graph(&[WeightedDigraph::empty(3), WeightedDigraph::empty(4)]);
        assert!(matches!(err, Err(Error::Parameter(_))));
    }

    #[test]
    fn laplacian_examples() {
        assert_eq!(WeightedDigraph::empty(3).laplacian(), Matrix::zeros(3, 3));
        let g = WeightedDigraph::from_pairs(2, [(0, 1)]).unwrap();
        let l = g.laplacian();
        assert_eq!(l, Matrix::from_rows(&[vec![0.0, 0.0], vec![-1.0, 1.0]]).unwrap());
        let er = generate(&GraphFamilySpec::new(GraphFamily::ErdosRenyi { p: 0.3, directed: true }, 25, 3)).unwrap();
        assert!(er.laplacian().mul_vec(&[1.0; 25]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_invalid_edges() {
        assert!(WeightedDigraph::from_pairs(2, [(0, 0)]).is_err());
        assert!(WeightedDigraph::from_pairs(2, [(0, 1), (0, 1)]).is_err());
        assert!(WeightedDigraph::from_edges(2, [(0, 1, -1.0)]).is_err());
        assert!(WeightedDigraph::from_pairs(2, [(0, 2)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = WeightedDigraph::from_edges(3, [(0, 1, 0.5), (2, 0, 2.0)]).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("n=3\n1 2 0.5\n"));
        assert_eq!(WeightedDigraph::from_edge_list(&text).unwrap(), g);
        assert!(WeightedDigraph::from_edge_list("n=2\n0 1 1").is_err());
        assert!(WeightedDigraph::from_edge_list("3\n1 2").is_err());
    }
}
