//! Immutable undirected weighted graphs in compressed adjacency form.
//!
//! External vertex ids are arbitrary whitespace-free strings mapped to dense
//! internal indices in order of first appearance; all downstream math runs on
//! internal indices. Graphs are immutable after construction, so concurrent
//! readers need no synchronization.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Bijection between external ids and dense internal indices.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `name`, inserting it if unseen.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: u32) -> &str {
        &self.names[index as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Immutable undirected weighted graph.
///
/// Invariants: neighbor lists are strictly sorted with no duplicate arcs,
/// `u in adj(v) ⟺ v in adj(u)` with equal weights, and all weights are
/// strictly positive.
#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    edge_count: usize,
    id_map: IdMap,
    weighted: bool,
}

/// Sorted set of internal vertex indices.
#[derive(Debug, Clone)]
pub struct VertexSet {
    members: Vec<u32>,
}

impl VertexSet {
    /// Build from arbitrary indices; sorts and deduplicates.
    pub fn new(mut members: Vec<u32>) -> Self {
        members.sort_unstable();
        members.dedup();
        VertexSet { members }
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: u32) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    /// Position of `v` within the set (the induced-subgraph index).
    pub fn position(&self, v: u32) -> Option<usize> {
        self.members.binary_search(&v).ok()
    }
}

/// Accumulates undirected edges before freezing into a `Graph`.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    id_map: IdMap,
    // canonical (min, max) endpoint -> summed weight
    edges: HashMap<(u32, u32), f64>,
    weighted: bool,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        self.id_map.intern(name)
    }

    /// Add an undirected edge between two internal indices. Duplicate edges
    /// sum their weights; self-loops are rejected.
    pub fn add_edge(&mut self, u: u32, v: u32, weight: f64) -> Result<()> {
        if u == v {
            return Err(Error::Validation(format!(
                "self-loop on vertex '{}' rejected",
                self.id_map.name(u)
            )));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::Validation(format!(
                "edge weight must be strictly positive and finite, got {weight}"
            )));
        }
        let key = (u.min(v), u.max(v));
        *self.edges.entry(key).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn add_named_edge(&mut self, u: &str, v: &str, weight: f64) -> Result<()> {
        let ui = self.intern(u);
        let vi = self.intern(v);
        self.add_edge(ui, vi, weight)
    }

    /// Mark explicit weighting even when all weights are 1.0.
    pub fn set_weighted(&mut self, weighted: bool) {
        self.weighted = self.weighted || weighted;
    }

    pub fn finish(self) -> Graph {
        let n = self.id_map.len();
        // collapsed duplicates leave a non-unit weight behind; keep it
        let weighted = self.weighted || self.edges.values().any(|&w| w != 1.0);
        let mut degree = vec![0usize; n];
        for &(u, v) in self.edges.keys() {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let arc_count = offsets[n];
        let mut targets = vec![0u32; arc_count];
        let mut weights = vec![0f64; arc_count];
        let mut cursor = offsets.clone();
        for (&(u, v), &w) in &self.edges {
            targets[cursor[u as usize]] = v;
            weights[cursor[u as usize]] = w;
            cursor[u as usize] += 1;
            targets[cursor[v as usize]] = u;
            weights[cursor[v as usize]] = w;
            cursor[v as usize] += 1;
        }
        // sort each neighbor list by target index, weights in lockstep
        for v in 0..n {
            let lo = offsets[v];
            let hi = offsets[v + 1];
            let mut pairs: Vec<(u32, f64)> = targets[lo..hi]
                .iter()
                .copied()
                .zip(weights[lo..hi].iter().copied())
                .collect();
            pairs.sort_unstable_by_key(|&(t, _)| t);
            for (k, (t, w)) in pairs.into_iter().enumerate() {
                targets[lo + k] = t;
                weights[lo + k] = w;
            }
        }
        Graph {
            offsets,
            targets,
            weights,
            edge_count: self.edges.len(),
            id_map: self.id_map,
            weighted,
        }
    }
}

impl Graph {
    pub fn vertex_count(&self) -> usize {
        self.id_map.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn degree(&self, v: u32) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    /// Weighted degree (sum of incident edge weights).
    pub fn weighted_degree(&self, v: u32) -> f64 {
        let (lo, hi) = (self.offsets[v as usize], self.offsets[v as usize + 1]);
        self.weights[lo..hi].iter().sum()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        let (lo, hi) = (self.offsets[v as usize], self.offsets[v as usize + 1]);
        &self.targets[lo..hi]
    }

    pub fn neighbor_weights(&self, v: u32) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.offsets[v as usize], self.offsets[v as usize + 1]);
        (&self.targets[lo..hi], &self.weights[lo..hi])
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn edge_weight(&self, u: u32, v: u32) -> Option<f64> {
        let lo = self.offsets[u as usize];
        self.neighbors(u)
            .binary_search(&v)
            .ok()
            .map(|k| self.weights[lo + k])
    }

    pub fn id_map(&self) -> &IdMap {
        &self.id_map
    }

    pub fn external_id(&self, v: u32) -> &str {
        self.id_map.name(v)
    }

    pub fn internal_id(&self, name: &str) -> Option<u32> {
        self.id_map.get(name)
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count() as u32)
            .map(|v| self.degree(v))
            .max()
            .unwrap_or(0)
    }

    /// Canonical edge iterator: each undirected edge once, with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.vertex_count() as u32).flat_map(move |u| {
            let (ts, ws) = self.neighbor_weights(u);
            ts.iter()
                .zip(ws.iter())
                .filter(move |(&t, _)| u < t)
                .map(move |(&t, &w)| (u, t, w))
        })
    }

    fn check_vertex(&self, v: u32) -> Result<()> {
        if (v as usize) < self.vertex_count() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "vertex index {v} out of range (vertex_count = {})",
                self.vertex_count()
            )))
        }
    }

    /// Subgraph induced by `s`: exactly the edges with both endpoints in `s`.
    /// Returns the subgraph and, per new index, the original index.
    pub fn induced_subgraph(&self, s: &VertexSet) -> Result<(Graph, Vec<u32>)> {
        if s.is_empty() {
            return Err(Error::Validation("induced_subgraph on empty set".into()));
        }
        for &v in s.members() {
            self.check_vertex(v)?;
        }
        let mut builder = GraphBuilder::new();
        builder.set_weighted(self.weighted);
        for &v in s.members() {
            builder.intern(self.external_id(v));
        }
        for &u in s.members() {
            let (ts, ws) = self.neighbor_weights(u);
            for (&t, &w) in ts.iter().zip(ws.iter()) {
                if u < t && s.contains(t) {
                    let ui = s.position(u).unwrap() as u32;
                    let ti = s.position(t).unwrap() as u32;
                    builder.add_edge(ui, ti, w)?;
                }
            }
        }
        Ok((builder.finish(), s.members().to_vec()))
    }

    /// Extend to `n` vertices by appending isolated padding vertices. Padding
    /// ids contain a space, so they can never collide with loadable ids.
    pub fn pad_to(&self, n: usize) -> Graph {
        let mut g = self.clone();
        let mut i = 0usize;
        while g.id_map.len() < n {
            let name = format!(" pad{i}");
            if g.id_map.get(&name).is_none() {
                g.id_map.intern(&name);
                g.offsets.push(*g.offsets.last().unwrap());
            }
            i += 1;
        }
        g
    }

    /// Per-vertex connected-component labels in `0..C`, numbered by first
    /// encounter in index order.
    pub fn connected_components(&self) -> Vec<u32> {
        let n = self.vertex_count();
        let mut label = vec![u32::MAX; n];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for s in 0..n as u32 {
            if label[s as usize] != u32::MAX {
                continue;
            }
            label[s as usize] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &t in self.neighbors(v) {
                    if label[t as usize] == u32::MAX {
                        label[t as usize] = next;
                        stack.push(t);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        self.connected_components()
            .iter()
            .max()
            .map_or(0, |&m| m as usize + 1)
    }

    /// Write the canonical save format: header `num_vertices num_edges`, then
    /// one `u v [w]` line per edge with endpoints and lines ordered by
    /// external id, which keeps the bytes stable across reloads that
    /// re-assign internal indices. Isolated vertices are not representable
    /// in this format and are dropped (the header counts only vertices with
    /// degree >= 1).
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let covered = (0..self.vertex_count() as u32)
            .filter(|&v| self.degree(v) > 0)
            .count();
        writeln!(out, "{covered} {}", self.edge_count())?;
        let mut lines: Vec<(&str, &str, f64)> = self
            .edges()
            .map(|(u, v, w)| {
                let (a, b) = (self.external_id(u), self.external_id(v));
                if a <= b {
                    (a, b, w)
                } else {
                    (b, a, w)
                }
            })
            .collect();
        lines.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        for (a, b, w) in lines {
            if self.weighted {
                writeln!(out, "{a} {b} {w}")?;
            } else {
                writeln!(out, "{a} {b}")?;
            }
        }
        Ok(())
    }

    /// Load the canonical save format written by [`Graph::save`].
    pub fn load<R: BufRead>(reader: R) -> Result<Graph> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })??;
        let mut parts = header.split_whitespace();
        let nv: usize = parse_field(parts.next(), 1, "num_vertices")?;
        let ne: usize = parse_field(parts.next(), 1, "num_edges")?;
        let mut builder = GraphBuilder::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if is_comment_or_blank(&line) {
                continue;
            }
            let (u, v, w) = parse_edge_line(&line, lineno)?;
            builder.add_named_edge(&u, &v, w.unwrap_or(1.0))?;
        }
        let g = builder.finish();
        if g.vertex_count() != nv || g.edge_count() != ne {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "header declares {nv} vertices / {ne} edges, body has {} / {}",
                    g.vertex_count(),
                    g.edge_count()
                ),
            });
        }
        Ok(g)
    }
}

fn is_comment_or_blank(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('#')
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("bad {what}") })
}

fn parse_edge_line(line: &str, lineno: usize) -> Result<(String, String, Option<f64>)> {
    let mut parts = line.split_whitespace();
    let u = parts
        .next()
        .ok_or_else(|| Error::Parse { line: lineno, msg: "empty edge line".into() })?;
    let v = parts
        .next()
        .ok_or_else(|| Error::Parse { line: lineno, msg: "missing second endpoint".into() })?;
    let w = match parts.next() {
        Some(tok) => Some(tok.parse::<f64>().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad weight '{tok}'"),
        })?),
        None => None,
    };
    if parts.next().is_some() {
        return Err(Error::Parse { line: lineno, msg: "trailing tokens on edge line".into() });
    }
    Ok((u.to_string(), v.to_string(), w))
}

/// Parse a whitespace-separated edge list: one `u v` or `u v w` line per edge,
/// `#` starting a comment line. Duplicate edges sum weights; input self-loops
/// are rejected (self-loops are added analytically by the model layers).
pub fn load_edge_list<R: BufRead>(reader: R, weighted: bool) -> Result<Graph> {
    let mut builder = GraphBuilder::new();
    builder.set_weighted(weighted);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if is_comment_or_blank(&line) {
            continue;
        }
        let (u, v, w) = parse_edge_line(&line, lineno)?;
        if w.is_some() && !weighted {
            return Err(Error::Parse {
                line: lineno,
                msg: "weight column present but weighted flag is off".into(),
            });
        }
        if u == v {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("self-loop '{u} {v}' rejected"),
            });
        }
        let w = w.unwrap_or(1.0);
        if w < 0.0 {
            return Err(Error::Validation(format!(
                "negative weight {w} at line {lineno}"
            )));
        }
        builder.add_named_edge(&u, &v, w)?;
    }
    Ok(builder.finish())
}

/// Convenience constructor for tests and generators: edges over internal
/// indices `0..n` with unit weights.
pub fn graph_from_edges(n: usize, edges: &[(u32, u32)]) -> Graph {
    let mut b = GraphBuilder::new();
    for v in 0..n {
        b.intern(&v.to_string());
    }
    for &(u, v) in edges {
        b.add_edge(u, v, 1.0).expect("valid edge");
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    #[test]
    fn load_simple_edge_list() {
        let g = load_edge_list(Cursor::new("0 1\n1 2"), false).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
        let one = g.internal_id("1").unwrap();
        let nbrs: Vec<&str> = g.neighbors(one).iter().map(|&v| g.external_id(v)).collect();
        assert_eq!(nbrs, vec!["0", "2"]);
    }

    #[test]
    fn undirected_dedup_sums_weights() {
        let g = load_edge_list(Cursor::new("a b\nb a"), false).unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.edge_count(), 1);
        let a = g.internal_id("a").unwrap();
        let b = g.internal_id("b").unwrap();
        assert_eq!(g.edge_weight(a, b), Some(2.0));
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let g = load_edge_list(Cursor::new("# header\n\n0 1\n  # indented\n1 2\n"), false).unwrap();
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = load_edge_list(Cursor::new("0 1\n2"), false).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let err = load_edge_list(Cursor::new("0 1 -2.0"), true).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn self_loop_rejected() {
        let err = load_edge_list(Cursor::new("3 3"), false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn induced_subgraph_of_triangle_edge() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        let (sub, mapping) = g.induced_subgraph(&VertexSet::new(vec![0, 1])).unwrap();
        assert_eq!(sub.vertex_count(), 2);
        assert_eq!(sub.edge_count(), 1);
        assert_eq!(mapping, vec![0, 1]);
    }

    #[test]
    fn induced_subgraph_identity() {
        let g = graph_from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let all = VertexSet::new((0..4).collect());
        let (sub, _) = g.induced_subgraph(&all).unwrap();
        assert_eq!(sub.edge_count(), g.edge_count());
        for v in 0..4u32 {
            assert_eq!(sub.degree(v), g.degree(v));
        }
    }

    #[test]
    fn induced_subgraph_rejects_out_of_range() {
        let g = graph_from_edges(3, &[(0, 1)]);
        let err = g.induced_subgraph(&VertexSet::new(vec![0, 9])).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn components_two_disjoint_edges() {
        let g = graph_from_edges(4, &[(0, 1), (2, 3)]);
        let labels = g.connected_components();
        assert_eq!(g.component_count(), 2);
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
    }

    #[test]
    fn components_empty_edge_graph() {
        let g = graph_from_edges(4, &[]);
        assert_eq!(g.component_count(), 4);
    }

    #[test]
    fn pad_to_appends_isolated() {
        let g = graph_from_edges(2, &[(0, 1)]);
        let p = g.pad_to(5);
        assert_eq!(p.vertex_count(), 5);
        assert_eq!(p.edge_count(), 1);
        for v in 2..5u32 {
            assert_eq!(p.degree(v), 0);
        }
    }

    /// Oracle: component labels via boolean-matrix transitive closure.
    fn closure_components(n: usize, edges: &[(u32, u32)]) -> Vec<Vec<bool>> {
        let mut reach = vec![vec![false; n]; n];
        for v in 0..n {
            reach[v][v] = true;
        }
        for &(u, v) in edges {
            reach[u as usize][v as usize] = true;
            reach[v as usize][u as usize] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        reach
    }

    proptest! {
        #[test]
        fn arcs_double_edges(edges in proptest::collection::vec((0u32..10, 0u32..10), 0..30)) {
            let edges: Vec<(u32, u32)> = edges.into_iter().filter(|(u, v)| u != v).collect();
            let g = graph_from_edges(10, &edges);
            let arc_sum: usize = (0..10u32).map(|v| g.degree(v)).sum();
            prop_assert_eq!(arc_sum, 2 * g.edge_count());
        }

        #[test]
        fn components_match_closure_oracle(edges in proptest::collection::vec((0u32..12, 0u32..12), 0..25)) {
            let edges: Vec<(u32, u32)> = edges.into_iter().filter(|(u, v)| u != v).collect();
            let g = graph_from_edges(12, &edges);
            let labels = g.connected_components();
            let reach = closure_components(12, &edges);
            for i in 0..12 {
                for j in 0..12 {
                    prop_assert_eq!(labels[i] == labels[j], reach[i][j]);
                }
            }
        }

        #[test]
        fn induced_subgraph_matches_edge_filter(
            edges in proptest::collection::vec((0u32..12, 0u32..12), 0..25),
            members in proptest::collection::btree_set(0u32..12, 1..12),
        ) {
            let edges: Vec<(u32, u32)> = edges.into_iter().filter(|(u, v)| u != v).collect();
            let g = graph_from_edges(12, &edges);
            let set = VertexSet::new(members.iter().copied().collect());
            let (sub, mapping) = g.induced_subgraph(&set).unwrap();
            let mut expect: Vec<(u32, u32)> = g
                .edges()
                .filter(|(u, v, _)| set.contains(*u) && set.contains(*v))
                .map(|(u, v, _)| (set.position(u).unwrap() as u32, set.position(v).unwrap() as u32))
                .collect();
            expect.sort_unstable();
            let mut got: Vec<(u32, u32)> = sub.edges().map(|(u, v, _)| (u, v)).collect();
            got.sort_unstable();
            prop_assert_eq!(got, expect);
            prop_assert_eq!(mapping.len(), set.len());
        }

        #[test]
        fn save_load_round_trip(edges in proptest::collection::vec((0u32..40, 0u32..40), 1..60)) {
            let edges: Vec<(u32, u32)> = edges.into_iter().filter(|(u, v)| u != v).collect();
            prop_assume!(!edges.is_empty());
            let g = graph_from_edges(40, &edges);
            // drop isolated vertices: the save format cannot carry them
            let used = VertexSet::new(edges.iter().flat_map(|&(u, v)| [u, v]).collect());
            let (g, _) = g.induced_subgraph(&used).unwrap();
            let mut buf = Vec::new();
            g.save(&mut buf).unwrap();
            let g2 = Graph::load(Cursor::new(&buf)).unwrap();
            let mut buf2 = Vec::new();
            g2.save(&mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
        }
    }
}
