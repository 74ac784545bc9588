//! Structural vertex features and hand-crafted ego-network features.
//!
//! All vertex features are computed once on the global graph; instances look
//! their rows up by global index. Spectral scores use power iteration with
//! fixed-order reductions, so results are deterministic.

use std::io::{BufRead, Write};

use crate::data::SampledInstance;
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexSet};

/// Column order of the persisted table. `degree` is kept so that the
/// ego-level rarity feature (reciprocal ego degree) can be reconstructed
/// without the graph.
pub const TABLE_COLUMNS: [&str; 7] = [
    "coreness",
    "pagerank",
    "hub",
    "authority",
    "eigencentrality",
    "clustering",
    "degree",
];

/// Column order of assembled per-instance vertex features.
pub const FEATURE_COLUMNS: [&str; 7] = [
    "coreness",
    "pagerank",
    "hub",
    "authority",
    "eigencentrality",
    "clustering",
    "rarity",
];

/// Number of per-vertex features entering the model input layer.
pub const VERTEX_FEATURE_DIM: usize = FEATURE_COLUMNS.len();

/// Per-vertex structural features of the global graph.
#[derive(Debug, Clone)]
pub struct VertexFeatureTable {
    pub coreness: Vec<u32>,
    pub pagerank: Vec<f64>,
    pub hub: Vec<f64>,
    pub authority: Vec<f64>,
    pub eigencentrality: Vec<f64>,
    pub clustering: Vec<f64>,
    pub degree: Vec<u32>,
}

/// Hand-crafted features of one ego-network instance, computed on the
/// sampled sub-network (plus the ego's global degree for rarity).
#[derive(Debug, Clone, PartialEq)]
pub struct EgoFeatureVector {
    pub num_active: usize,
    pub ratio_active: f64,
    pub active_density: f64,
    pub active_components: usize,
    pub rarity: f64,
}

impl EgoFeatureVector {
    pub const DIM: usize = 4;

    /// The four ego-network entries of the baseline feature block
    /// (rarity lives in the vertex block).
    pub fn as_block(&self) -> [f64; 4] {
        [
            self.num_active as f64,
            self.ratio_active,
            self.active_density,
            self.active_components as f64,
        ]
    }
}

/// Coreness by iterative minimum-degree peeling (bucket queue, O(m)).
pub fn coreness(g: &Graph) -> Vec<u32> {
    let n = g.vertex_count();
    if n == 0 {
        return Vec::new();
    }
    let mut deg: Vec<usize> = (0..n as u32).map(|v| g.degree(v)).collect();
    let max_deg = *deg.iter().max().unwrap();
    // bucket sort vertices by degree
    let mut bin = vec![0usize; max_deg + 2];
    for &d in &deg {
        bin[d] += 1;
    }
    let mut start = 0usize;
    for b in bin.iter_mut() {
        let count = *b;
        *b = start;
        start += count;
    }
    let mut pos = vec![0usize; n];
    let mut vert = vec![0u32; n];
    {
        let mut cursor = bin.clone();
        for v in 0..n {
            pos[v] = cursor[deg[v]];
            vert[pos[v]] = v as u32;
            cursor[deg[v]] += 1;
        }
    }
    let mut core = vec![0u32; n];
    for i in 0..n {
        let v = vert[i];
        core[v as usize] = deg[v as usize] as u32;
        for &u in g.neighbors(v) {
            let u = u as usize;
            if deg[u] > deg[v as usize] {
                let du = deg[u];
                let pu = pos[u];
                let pw = bin[du];
                let w = vert[pw];
                if u as u32 != w {
                    vert[pu] = w;
                    vert[pw] = u as u32;
                    pos[u] = pw;
                    pos[w as usize] = pu;
                }
                bin[du] += 1;
                deg[u] -= 1;
            }
        }
    }
    core
}

/// Outcome of an iterative solver: the values plus convergence information.
#[derive(Debug, Clone)]
pub struct IterativeResult {
    pub values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped random-surfer scores on the undirected graph. Transitions follow
/// edge weights; mass on degree-zero vertices is redistributed uniformly.
/// Stops when the L1 residual drops below `tol` (non-convergence is reported,
/// not fatal).
pub fn pagerank(g: &Graph, damping: f64, tol: f64, max_iter: usize) -> IterativeResult {
    let n = g.vertex_count();
    assert!(n >= 1, "pagerank needs at least one vertex");
    let nf = n as f64;
    let wdeg: Vec<f64> = (0..n as u32).map(|v| g.weighted_degree(v)).collect();
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0f64; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let dangling: f64 = (0..n).filter(|&v| wdeg[v] == 0.0).map(|v| x[v]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        next.iter_mut().for_each(|e| *e = base);
        for v in 0..n as u32 {
            if wdeg[v as usize] == 0.0 {
                continue;
            }
            let share = damping * x[v as usize] / wdeg[v as usize];
            let (ts, ws) = g.neighbor_weights(v);
            for (&t, &w) in ts.iter().zip(ws.iter()) {
                next[t as usize] += share * w;
            }
        }
        residual = x.iter().zip(next.iter()).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < tol {
            break;
        }
    }
    IterativeResult { values: x, converged: residual < tol, iterations, residual }
}

fn l2_normalize(v: &mut [f64]) {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Hub and authority scores: the nonnegative L2-normalized fixed point of
/// the mutual hub/authority recursion. On an undirected graph the adjacency
/// is symmetric, so the two vectors coincide with each other (and with
/// eigenvector centrality). Computed per connected component with the same
/// oscillation-breaking diagonal shift, each component L2-normalized, which
/// keeps the result well-defined on disconnected graphs with tied dominant
/// eigenvalues.
pub fn hits(g: &Graph, tol: f64, max_iter: usize) -> Result<(IterativeResult, IterativeResult)> {
    if g.edge_count() == 0 {
        return Err(Error::Degenerate("hits requires at least one edge".into()));
    }
    let hub = eigenvector_centrality(g, tol, max_iter)?;
    let auth = hub.clone();
    Ok((hub, auth))
}

/// Nonnegative principal eigenvector of the adjacency matrix, computed per
/// connected component with a diagonal shift of `0.1 * max_degree` to break
/// bipartite oscillation; each component is L2-normalized, isolated vertices
/// score zero.
pub fn eigenvector_centrality(g: &Graph, tol: f64, max_iter: usize) -> Result<IterativeResult> {
    let n = g.vertex_count();
    if g.edge_count() == 0 {
        return Err(Error::Degenerate(
            "eigenvector centrality requires at least one edge".into(),
        ));
    }
    let gamma = 0.1 * g.max_degree() as f64;
    let labels = g.connected_components();
    let comp_count = g.component_count();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); comp_count];
    for v in 0..n as u32 {
        members[labels[v as usize] as usize].push(v);
    }
    let mut values = vec![0.0f64; n];
    let mut converged = true;
    let mut iterations = 0usize;
    let mut residual = 0.0f64;
    for comp in &members {
        if comp.len() < 2 {
            continue; // isolated vertex: centrality 0
        }
        let m = comp.len();
        let mut x = vec![1.0 / (m as f64).sqrt(); m];
        let mut y = vec![0.0f64; m];
        let mut res = f64::INFINITY;
        let mut its = 0usize;
        for it in 0..max_iter {
            its = it + 1;
            for (i, &v) in comp.iter().enumerate() {
                let (ts, ws) = g.neighbor_weights(v);
                let mut acc = gamma * x[i];
                for (&t, &w) in ts.iter().zip(ws.iter()) {
                    // all neighbors share the component
                    let j = comp.binary_search(&t).unwrap();
                    acc += w * x[j];
                }
                y[i] = acc;
            }
            l2_normalize(&mut y);
            res = x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut x, &mut y);
            if res < tol {
                break;
            }
        }
        converged &= res < tol;
        iterations = iterations.max(its);
        residual = residual.max(res);
        for (i, &v) in comp.iter().enumerate() {
            values[v as usize] = x[i].abs();
        }
    }
    Ok(IterativeResult { values, converged, iterations, residual })
}

/// Local clustering coefficient: edges among neighbors over `deg(deg-1)/2`,
/// zero for degree < 2. Edge multiplicity is ignored (existence only).
pub fn clustering_coefficient(g: &Graph) -> Vec<f64> {
    let n = g.vertex_count();
    let mut out = vec![0.0f64; n];
    for v in 0..n as u32 {
        let nbrs = g.neighbors(v);
        let d = nbrs.len();
        if d < 2 {
            continue;
        }
        // count edges among neighbors by sorted-list intersection
        let mut links = 0usize;
        for (i, &u) in nbrs.iter().enumerate() {
            let un = g.neighbors(u);
            for &w in &nbrs[i + 1..] {
                if un.binary_search(&w).is_ok() {
                    links += 1;
                }
            }
        }
        out[v as usize] = 2.0 * links as f64 / (d as f64 * (d as f64 - 1.0));
    }
    out
}

impl VertexFeatureTable {
    /// Compute the full table on the global graph with default solver
    /// settings.
    pub fn compute(g: &Graph) -> Result<VertexFeatureTable> {
        Self::compute_with(g, 0.85, 1e-8, 200, 1000)
    }

    pub fn compute_with(
        g: &Graph,
        damping: f64,
        tol: f64,
        max_iter: usize,
        eigen_max_iter: usize,
    ) -> Result<VertexFeatureTable> {
        let n = g.vertex_count();
        let pr = pagerank(g, damping, tol, max_iter).values;
        let (hub, auth, eig) = if g.edge_count() > 0 {
            let (h, a) = hits(g, tol, max_iter)?;
            let e = eigenvector_centrality(g, tol, eigen_max_iter)?;
            (h.values, a.values, e.values)
        } else {
            (vec![0.0; n], vec![0.0; n], vec![0.0; n])
        };
        Ok(VertexFeatureTable {
            coreness: coreness(g),
            pagerank: pr,
            hub,
            authority: auth,
            eigencentrality: eig,
            clustering: clustering_coefficient(g),
            degree: (0..n as u32).map(|v| g.degree(v) as u32).collect(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.coreness.len()
    }

    /// Table row in `TABLE_COLUMNS` order.
    pub fn row(&self, v: u32) -> [f64; 7] {
        let v = v as usize;
        [
            self.coreness[v] as f64,
            self.pagerank[v],
            self.hub[v],
            self.authority[v],
            self.eigencentrality[v],
            self.clustering[v],
            self.degree[v] as f64,
        ]
    }

    /// Save format: a `# vertex_id` + column-name header, then one
    /// full-precision row per vertex.
    pub fn save<W: Write>(&self, g: &Graph, mut out: W) -> Result<()> {
        writeln!(out, "# vertex_id {}", TABLE_COLUMNS.join(" "))?;
        for v in 0..self.vertex_count() as u32 {
            let r = self.row(v);
            writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                g.external_id(v),
                r[0],
                r[1],
                r[2],
                r[3],
                r[4],
                r[5],
                r[6]
            )?;
        }
        Ok(())
    }

    /// Load a saved table, re-indexing rows through the graph's id map.
    pub fn load<R: BufRead>(reader: R, g: &Graph) -> Result<VertexFeatureTable> {
        let n = g.vertex_count();
        let mut table = VertexFeatureTable {
            coreness: vec![0; n],
            pagerank: vec![0.0; n],
            hub: vec![0.0; n],
            authority: vec![0.0; n],
            eigencentrality: vec![0.0; n],
            clustering: vec![0.0; n],
            degree: vec![0; n],
        };
        let mut seen = vec![false; n];
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 8 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 8 fields, got {}", parts.len()),
                });
            }
            let v = g.internal_id(parts[0]).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown vertex id '{}'", parts[0]),
            })?;
            let mut vals = [0.0f64; 7];
            for (k, tok) in parts[1..].iter().enumerate() {
                vals[k] = tok.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad number '{tok}'"),
                })?;
            }
            let vi = v as usize;
            table.coreness[vi] = vals[0] as u32;
            table.pagerank[vi] = vals[1];
            table.hub[vi] = vals[2];
            table.authority[vi] = vals[3];
            table.eigencentrality[vi] = vals[4];
            table.clustering[vi] = vals[5];
            table.degree[vi] = vals[6] as u32;
            seen[vi] = true;
        }
        if let Some(v) = seen.iter().position(|&s| !s) {
            return Err(Error::Validation(format!(
                "feature table missing vertex '{}'",
                g.external_id(v as u32)
            )));
        }
        Ok(table)
    }
}

/// Assemble the per-instance vertex feature matrix (row-major, n x 7):
/// `[coreness, pagerank, hub, authority, eigencentrality, clustering, rarity]`
/// per instance row, where rarity is the reciprocal global ego degree
/// broadcast to every row. Padded rows are all zero.
pub fn assemble_vertex_features(
    table: &VertexFeatureTable,
    instance: &SampledInstance,
) -> Result<Vec<f64>> {
    let n = instance.size();
    let ego_global = instance.vertices[instance.ego_local];
    if ego_global as usize >= table.vertex_count() {
        return Err(Error::Validation(format!(
            "instance ego {ego_global} not covered by feature table"
        )));
    }
    let ego_deg = table.degree[ego_global as usize];
    if ego_deg == 0 {
        return Err(Error::Validation("ego has zero global degree".into()));
    }
    let rarity = 1.0 / ego_deg as f64;
    let mut out = vec![0.0f64; n * VERTEX_FEATURE_DIM];
    for (local, &global) in instance.vertices.iter().enumerate() {
        if global as usize >= table.vertex_count() {
            return Err(Error::Validation(format!(
                "instance vertex {global} not covered by feature table"
            )));
        }
        let r = table.row(global);
        let row = &mut out[local * VERTEX_FEATURE_DIM..(local + 1) * VERTEX_FEATURE_DIM];
        row[..6].copy_from_slice(&r[..6]);
        row[6] = rarity;
    }
    Ok(out)
}

/// Ego-network features of a sampled instance: counts, ratio, density, and
/// component structure of the ego's active neighbors within the sampled
/// sub-network, plus rarity from the ego's global degree.
pub fn ego_features(instance: &SampledInstance, g: &Graph) -> Result<EgoFeatureVector> {
    let local = &instance.local_graph;
    let ego = instance.ego_local as u32;
    let neighbors = local.neighbors(ego);
    if neighbors.is_empty() {
        return Err(Error::Validation("instance ego has no sampled neighbors".into()));
    }
    let active: Vec<u32> = neighbors
        .iter()
        .copied()
        .filter(|&u| instance.active[u as usize])
        .collect();
    let m = active.len();
    let (density, components) = if m == 0 {
        (0.0, 0)
    } else {
        let (sub, _) = local.induced_subgraph(&VertexSet::new(active.clone()))?;
        let density = if m >= 2 {
            sub.edge_count() as f64 / (m as f64 * (m as f64 - 1.0) / 2.0)
        } else {
            0.0
        };
        (density, sub.component_count())
    };
    let ego_global = instance.vertices[instance.ego_local];
    let ego_deg = g.degree(ego_global);
    if ego_deg == 0 {
        return Err(Error::Validation("ego has zero global degree".into()));
    }
    Ok(EgoFeatureVector {
        num_active: m,
        ratio_active: m as f64 / neighbors.len() as f64,
        active_density: density,
        active_components: components,
        rarity: 1.0 / ego_deg as f64,
    })
}
