//! Action-log ingestion, instance generation, random-walk-with-restart
//! sampling of fixed-size sub-networks, dataset balancing and splitting, and
//! a synthetic cascade generator for desk-scale experiments.
//!
//! Status semantics: a vertex is active at time `t` if its first activation
//! is `<= t`. The ego itself is the prediction target, so its own flag inside
//! an instance uses the strict comparison and is therefore always 0 for
//! well-formed instances (positives carry the activation time as the
//! instance time).

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBuilder, IdMap, VertexSet};
use crate::seeds;

/// One activation record: user performed action at time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionRecord {
    pub user: u32,
    pub action: u32,
    pub time: i64,
}

/// Immutable log of social actions within an observation window. At most one
/// activation is kept per (user, action): the earliest.
#[derive(Debug, Clone)]
pub struct ActionLog {
    actions: IdMap,
    window: (i64, i64),
    first_activation: HashMap<(u32, u32), i64>,
    per_action: Vec<Vec<(i64, u32)>>,
}

impl ActionLog {
    pub fn from_records(records: Vec<(u32, String, i64)>, window: (i64, i64)) -> Result<ActionLog> {
        let mut actions = IdMap::new();
        let mut first_activation: HashMap<(u32, u32), i64> = HashMap::new();
        for (user, action, time) in records {
            if time < window.0 || time > window.1 {
                return Err(Error::Validation(format!(
                    "record time {time} outside window [{}, {}]",
                    window.0, window.1
                )));
            }
            let a = actions.intern(&action);
            first_activation
                .entry((a, user))
                .and_modify(|t| *t = (*t).min(time))
                .or_insert(time);
        }
        let mut per_action: Vec<Vec<(i64, u32)>> = vec![Vec::new(); actions.len()];
        for (&(a, u), &t) in &first_activation {
            per_action[a as usize].push((t, u));
        }
        for list in &mut per_action {
            list.sort_unstable();
        }
        Ok(ActionLog { actions, window, first_activation, per_action })
    }

    /// Parse the text format: one `user action timestamp` line each, `#`
    /// starting a comment line. Users must exist in the graph.
    pub fn load<R: BufRead>(reader: R, g: &Graph) -> Result<ActionLog> {
        let mut records = Vec::new();
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 'user action timestamp', got {} fields", parts.len()),
                });
            }
            let user = g.internal_id(parts[0]).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown user '{}'", parts[0]),
            })?;
            let time: i64 = parts[2].parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad timestamp '{}'", parts[2]),
            })?;
            lo = lo.min(time);
            hi = hi.max(time);
            records.push((user, parts[1].to_string(), time));
        }
        if records.is_empty() {
            return Err(Error::EmptyDataset("action log has no records".into()));
        }
        ActionLog::from_records(records, (lo, hi))
    }

    /// Write the text format sorted by (action, time, user) for stable bytes.
    pub fn save<W: Write>(&self, g: &Graph, mut out: W) -> Result<()> {
        for a in 0..self.actions.len() as u32 {
            for &(t, u) in &self.per_action[a as usize] {
                writeln!(out, "{} {} {}", g.external_id(u), self.actions.name(a), t)?;
            }
        }
        Ok(())
    }

    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn action_name(&self, a: u32) -> &str {
        self.actions.name(a)
    }

    pub fn action_id(&self, name: &str) -> Option<u32> {
        self.actions.get(name)
    }

    pub fn first_activation(&self, action: u32, user: u32) -> Option<i64> {
        self.first_activation.get(&(action, user)).copied()
    }

    /// Binary status `s_u^t`: active iff first activation `<= t`.
    pub fn active_at(&self, action: u32, user: u32, t: i64) -> bool {
        self.first_activation(action, user).is_some_and(|ft| ft <= t)
    }

    pub fn ever_active(&self, action: u32, user: u32) -> bool {
        self.first_activation.contains_key(&(action, user))
    }

    /// Activations of one action sorted by (time, user).
    pub fn activations(&self, action: u32) -> &[(i64, u32)] {
        &self.per_action[action as usize]
    }

    pub fn record_count(&self) -> usize {
        self.first_activation.len()
    }
}

/// An influence-prediction instance: will `ego` perform `action` given the
/// neighborhood observed at `time`?
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceSpec {
    pub ego: u32,
    pub action: u32,
    pub time: i64,
    pub label: bool,
}

/// Number of the ego's neighbors active at `t` (status `<= t`).
pub fn count_active_neighbors(g: &Graph, log: &ActionLog, ego: u32, action: u32, t: i64) -> usize {
    g.neighbors(ego)
        .iter()
        .filter(|&&u| log.active_at(action, u, t))
        .count()
}

/// Generate one positive instance per activation and one negative instance
/// per never-active neighbor of each activated user (deduplicated to the
/// earliest influencing time). Output is sorted by (action, time, ego) with
/// positives before negatives on ties.
pub fn build_instances(g: &Graph, log: &ActionLog) -> Vec<InstanceSpec> {
    let mut specs = Vec::new();
    let mut neg_time: HashMap<(u32, u32), i64> = HashMap::new();
    for a in 0..log.action_count() as u32 {
        for &(t, v) in log.activations(a) {
            specs.push(InstanceSpec { ego: v, action: a, time: t, label: true });
            for &u in g.neighbors(v) {
                if !log.ever_active(a, u) {
                    neg_time
                        .entry((a, u))
                        .and_modify(|e| *e = (*e).min(t))
                        .or_insert(t);
                }
            }
        }
    }
    for (&(a, u), &t) in &neg_time {
        specs.push(InstanceSpec { ego: u, action: a, time: t, label: false });
    }
    specs.sort_unstable_by_key(|s| (s.action, s.time, s.ego, !s.label));
    specs
}

/// Outcome of [`filter_and_balance`].
#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub positives_before: usize,
    pub positives: usize,
    pub negatives_before: usize,
    pub negatives_after: usize,
    pub achieved_ratio: f64,
}

/// Drop instances whose ego has fewer than `min_active` active neighbors at
/// the instance time, then downsample whichever class is over-represented
/// relative to the `neg_pos` target ratio (uniformly at random, seeded).
/// Classes are never upsampled, so when one class is simply too scarce the
/// achieved ratio falls short of the target and is reported as-is.
pub fn filter_and_balance(
    specs: &[InstanceSpec],
    g: &Graph,
    log: &ActionLog,
    min_active: usize,
    neg_pos: f64,
    seed: u64,
) -> Result<(Vec<InstanceSpec>, BalanceReport)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for &s in specs {
        if count_active_neighbors(g, log, s.ego, s.action, s.time) < min_active {
            continue;
        }
        if s.label {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    if pos.is_empty() {
        return Err(Error::EmptyDataset(
            "no positive instances survive the active-neighbor filter".into(),
        ));
    }
    let positives_before = pos.len();
    let negatives_before = neg.len();
    let mut rng = seeds::rng(seed, "balance");
    let neg_target = (neg_pos * pos.len() as f64).floor() as usize;
    if neg.len() > neg_target {
        // negatives over-represented
        neg.shuffle(&mut rng);
        neg.truncate(neg_target);
    } else {
        // positives over-represented; keep all negatives, trim positives
        let pos_target = ((neg.len() as f64 / neg_pos).floor() as usize).max(1);
        if pos.len() > pos_target && !neg.is_empty() {
            pos.shuffle(&mut rng);
            pos.truncate(pos_target);
        }
    }
    let negatives_after = neg.len();
    let mut out = pos;
    out.extend(neg);
    out.sort_unstable_by_key(|s| (s.action, s.time, s.ego, !s.label));
    let positives = out.iter().filter(|s| s.label).count();
    Ok((
        out,
        BalanceReport {
            positives_before,
            positives,
            negatives_before,
            negatives_after,
            achieved_ratio: negatives_after as f64 / positives as f64,
        },
    ))
}

/// Fixed-size sampled proxy of an ego network with action statuses.
///
/// Local indices `0..vertices.len()` are real vertices sorted by global
/// index; the remainder up to `size()` are inert padding (no edges, zero
/// features, excluded from normalization statistics and attention support).
#[derive(Debug, Clone)]
pub struct SampledInstance {
    /// Global indices of the real vertices, ascending; `vertices[ego_local]`
    /// is the ego.
    pub vertices: Vec<u32>,
    /// Graph on `size()` vertices; padded vertices are isolated.
    pub local_graph: Graph,
    pub ego_local: usize,
    /// Status flags at instance time, length `size()`; the ego's own flag is
    /// always false.
    pub active: Vec<bool>,
    /// True for padding slots, length `size()`.
    pub pad_mask: Vec<bool>,
    pub label: bool,
    pub action: String,
    pub time: i64,
}

impl SampledInstance {
    /// Total slot count n (real + padding).
    pub fn size(&self) -> usize {
        self.local_graph.vertex_count()
    }

    pub fn real_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn ego_global(&self) -> u32 {
        self.vertices[self.ego_local]
    }
}

/// Tuning knobs of the sampler.
#[derive(Debug, Clone, Copy)]
pub struct RwrConfig {
    /// Target sub-network size n.
    pub n: usize,
    /// Probability of jumping back to the start set at each step.
    pub restart: f64,
    /// Step budget; on exhaustion the partial result is padded.
    pub max_steps: usize,
    /// Optional BFS radius bound around the ego (vertices farther than this
    /// are never collected). `None` runs on the full graph.
    pub radius: Option<usize>,
}

impl RwrConfig {
    pub fn with_size(n: usize) -> RwrConfig {
        RwrConfig { n, restart: 0.8, max_steps: 100 * n, radius: None }
    }
}

impl Default for RwrConfig {
    fn default() -> Self {
        RwrConfig::with_size(50)
    }
}

fn weighted_neighbor(g: &Graph, v: u32, rng: &mut ChaCha8Rng) -> Option<u32> {
    let (ts, ws) = g.neighbor_weights(v);
    if ts.is_empty() {
        return None;
    }
    let total: f64 = ws.iter().sum();
    let mut draw = rng.random::<f64>() * total;
    for (&t, &w) in ts.iter().zip(ws.iter()) {
        draw -= w;
        if draw <= 0.0 {
            return Some(t);
        }
    }
    Some(*ts.last().unwrap())
}

/// One transition of the restart chain: jump to a fresh uniform member of
/// the start set with probability `restart`, otherwise move to a neighbor
/// with probability proportional to edge weight (a vertex with no neighbors
/// forces a restart).
fn rwr_step(g: &Graph, start_set: &[u32], current: u32, restart: f64, rng: &mut ChaCha8Rng) -> u32 {
    if rng.random::<f64>() < restart {
        start_set[rng.random_range(0..start_set.len())]
    } else {
        match weighted_neighbor(g, current, rng) {
            Some(t) => t,
            None => start_set[rng.random_range(0..start_set.len())],
        }
    }
}

/// Visit counts of the restart chain over `steps` transitions, for comparing
/// the sampler's walk against the explicit chain's stationary distribution.
/// Counts include the initial state.
pub fn rwr_visit_counts(
    g: &Graph,
    start_set: &[u32],
    restart: f64,
    steps: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    if start_set.is_empty() {
        return Err(Error::Validation("start set must be nonempty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; g.vertex_count()];
    let mut current = start_set[rng.random_range(0..start_set.len())];
    counts[current as usize] += 1;
    for _ in 0..steps {
        current = rwr_step(g, start_set, current, restart, &mut rng);
        counts[current as usize] += 1;
    }
    Ok(counts)
}

/// BFS hop distances from `ego` out to `limit` hops.
fn bfs_within(g: &Graph, ego: u32, limit: usize) -> HashMap<u32, usize> {
    let mut dist = HashMap::new();
    dist.insert(ego, 0usize);
    let mut frontier = vec![ego];
    for d in 1..=limit {
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in g.neighbors(v) {
                dist.entry(u).or_insert_with(|| {
                    next.push(u);
                    d
                });
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    dist
}

/// Sample a fixed-size sub-network around the ego by random walk with
/// restart. The walk starts at a uniform member of the start set
/// `S = {ego} ∪ {active neighbors at instance time}` and restarts to a fresh
/// uniform member of S; otherwise it moves to a neighbor with probability
/// proportional to edge weight. Every distinct visited vertex is collected
/// until `n` are found or the step budget runs out; short samples are padded.
pub fn rwr_sample(
    g: &Graph,
    spec: &InstanceSpec,
    log: &ActionLog,
    cfg: &RwrConfig,
    seed: u64,
) -> Result<SampledInstance> {
    if !(cfg.restart > 0.0 && cfg.restart <= 1.0) {
        return Err(Error::Validation(format!(
            "restart probability must be in (0, 1], got {}",
            cfg.restart
        )));
    }
    let mut start_set: Vec<u32> = g
        .neighbors(spec.ego)
        .iter()
        .copied()
        .filter(|&u| log.active_at(spec.action, u, spec.time))
        .collect();
    if start_set.is_empty() {
        return Err(Error::Validation(format!(
            "ego {} has no active neighbors at time {}",
            g.external_id(spec.ego),
            spec.time
        )));
    }
    start_set.push(spec.ego);
    start_set.sort_unstable();

    let allowed = cfg.radius.map(|r| bfs_within(g, spec.ego, r));
    let in_range = |v: u32| allowed.as_ref().is_none_or(|d| d.contains_key(&v));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut collected: Vec<u32> = vec![spec.ego];
    let mut seen: std::collections::HashSet<u32> = collected.iter().copied().collect();
    let mut current = start_set[rng.random_range(0..start_set.len())];
    if in_range(current) && seen.insert(current) {
        collected.push(current);
    }
    let mut steps = 0usize;
    while collected.len() < cfg.n && steps < cfg.max_steps {
        steps += 1;
        current = rwr_step(g, &start_set, current, cfg.restart, &mut rng);
        if in_range(current) && seen.insert(current) {
            collected.push(current);
        }
    }

    let set = VertexSet::new(collected);
    let (local, old_of_new) = g.induced_subgraph(&set)?;
    let local = local.pad_to(cfg.n.max(set.len()));
    let n = local.vertex_count();
    let ego_local = set.position(spec.ego).unwrap();
    let k = old_of_new.len();
    let mut active = vec![false; n];
    let mut pad_mask = vec![false; n];
    for (i, &v) in old_of_new.iter().enumerate() {
        active[i] = v != spec.ego && log.active_at(spec.action, v, spec.time);
    }
    for flag in pad_mask.iter_mut().skip(k) {
        *flag = true;
    }
    Ok(SampledInstance {
        vertices: old_of_new,
        local_graph: local,
        ego_local,
        active,
        pad_mask,
        label: spec.label,
        action: log.action_name(spec.action).to_string(),
        time: spec.time,
    })
}

/// Stratified dataset split.
#[derive(Debug, Clone)]
pub struct SplitOutput {
    pub train: Vec<InstanceSpec>,
    pub valid: Vec<InstanceSpec>,
    pub test: Vec<InstanceSpec>,
    pub warnings: Vec<String>,
}

fn largest_remainder(total: usize, fractions: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut sizes: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..(total - assigned) {
        sizes[order[i % order.len()]] += 1;
    }
    sizes
}

/// Split into train/valid/test by seeded shuffle with per-class proportional
/// interleaving, so each split approximately preserves the class ratio.
/// Split sizes follow the largest-remainder rule on the totals.
pub fn split(
    specs: &[InstanceSpec],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitOutput> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|&f| f < 0.0) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "split fractions must be nonnegative and sum to 1, got {fr:?}"
        )));
    }
    let mut pos: Vec<InstanceSpec> = specs.iter().copied().filter(|s| s.label).collect();
    let mut neg: Vec<InstanceSpec> = specs.iter().copied().filter(|s| !s.label).collect();
    let mut rng = seeds::rng(seed, "split");
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    // interleave the two shuffled classes by fractional position so every
    // contiguous chunk carries an approximately proportional class mix
    let key = |i: usize, len: usize| (i as f64 + 0.5) / len as f64;
    let mut merged: Vec<InstanceSpec> = Vec::with_capacity(specs.len());
    let (mut i, mut j) = (0usize, 0usize);
    while i < pos.len() || j < neg.len() {
        let take_pos = match (i < pos.len(), j < neg.len()) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => key(i, pos.len()) <= key(j, neg.len()),
            (false, false) => unreachable!(),
        };
        if take_pos {
            merged.push(pos[i]);
            i += 1;
        } else {
            merged.push(neg[j]);
            j += 1;
        }
    }

    let sizes = largest_remainder(merged.len(), &fr);
    let train: Vec<_> = merged[..sizes[0]].to_vec();
    let valid: Vec<_> = merged[sizes[0]..sizes[0] + sizes[1]].to_vec();
    let test: Vec<_> = merged[sizes[0] + sizes[1]..].to_vec();
    let mut warnings = Vec::new();
    for (name, part) in [("train", &train), ("valid", &valid), ("test", &test)] {
        if !part.is_empty() && !part.iter().any(|s| s.label) {
            warnings.push(format!("{name} split contains zero positive instances"));
        }
    }
    Ok(SplitOutput { train, valid, test, warnings })
}

// ---------------------------------------------------------------------------
// instance files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    vertices: Vec<String>,
    edges: Vec<(u32, u32, f64)>,
    ego: usize,
    active: Vec<bool>,
    pad_mask: Vec<bool>,
    label: u8,
    action: String,
    time: i64,
}

/// Write instances as one self-describing JSON record per line.
pub fn save_instances<W: Write>(instances: &[SampledInstance], g: &Graph, mut out: W) -> Result<()> {
    for inst in instances {
        let rec = InstanceRecord {
            vertices: inst.vertices.iter().map(|&v| g.external_id(v).to_string()).collect(),
            edges: inst.local_graph.edges().collect(),
            ego: inst.ego_local,
            active: inst.active.clone(),
            pad_mask: inst.pad_mask.clone(),
            label: u8::from(inst.label),
            action: inst.action.clone(),
            time: inst.time,
        };
        let line = serde_json::to_string(&rec)
            .map_err(|e| Error::Validation(format!("serialize instance: {e}")))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Read instances written by [`save_instances`], re-resolving vertex ids
/// through the graph.
pub fn load_instances<R: BufRead>(reader: R, g: &Graph) -> Result<Vec<SampledInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad instance record: {e}"),
        })?;
        let n = rec.pad_mask.len();
        let k = rec.vertices.len();
        if rec.active.len() != n || rec.ego >= k {
            return Err(Error::Parse {
                line: lineno,
                msg: "inconsistent instance record field lengths".into(),
            });
        }
        let mut vertices = Vec::with_capacity(k);
        let mut builder = GraphBuilder::new();
        for name in &rec.vertices {
            let v = g.internal_id(name).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown vertex id '{name}'"),
            })?;
            vertices.push(v);
            builder.intern(name);
        }
        for &(u, v, w) in &rec.edges {
            builder.add_edge(u, v, w)?;
        }
        let local = builder.finish().pad_to(n);
        out.push(SampledInstance {
            vertices,
            local_graph: local,
            ego_local: rec.ego,
            active: rec.active,
            pad_mask: rec.pad_mask,
            label: rec.label != 0,
            action: rec.action,
            time: rec.time,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// synthetic cascades
// ---------------------------------------------------------------------------

/// Graph topology generated by [`synth_cascades`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Ring lattice with `k` neighbors per side, rewired with probability
    /// `beta` (per edge).
    SmallWorld,
    /// Preferential attachment with `m` edges per arriving vertex.
    ScaleFree,
}

/// Per-attempt activation probability model of the cascade. `Uniform` is the
/// plain independent-cascade model; `DegreeScaled` is the weighted variant in
/// which a source's attempts succeed with probability proportional to its
/// degree (influential hubs), capped at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfluenceModel {
    Uniform,
    DegreeScaled,
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub topology: Topology,
    pub vertices: usize,
    /// Small-world: neighbors on each side of the ring.
    pub ws_k: usize,
    /// Small-world rewiring probability.
    pub ws_beta: f64,
    /// Scale-free: edges added per arriving vertex.
    pub ba_m: usize,
    /// Independent-cascade activation probability per edge attempt
    /// (the base rate under `DegreeScaled`).
    pub edge_prob: f64,
    /// Fraction of vertices seeded active at t = 0 in each cascade.
    pub seeds_fraction: f64,
    /// Number of propagation rounds per cascade.
    pub rounds: usize,
    /// Number of independent cascades (one action each).
    pub cascades: usize,
    pub influence: InfluenceModel,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            topology: Topology::SmallWorld,
            vertices: 1000,
            ws_k: 5,
            ws_beta: 0.1,
            ba_m: 5,
            edge_prob: 0.1,
            seeds_fraction: 0.05,
            rounds: 10,
            cascades: 20,
            influence: InfluenceModel::Uniform,
        }
    }
}

fn generate_small_world(n: usize, k: usize, beta: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut b = GraphBuilder::new();
    for v in 0..n {
        b.intern(&v.to_string());
    }
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for v in 0..n {
        for j in 1..=k {
            let u = (v + j) % n;
            if u != v {
                edges.push((v as u32, u as u32));
            }
        }
    }
    let mut have: std::collections::HashSet<(u32, u32)> = edges
        .iter()
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    for e in edges.iter_mut() {
        if rng.random::<f64>() >= beta {
            continue;
        }
        let (u, old) = *e;
        for _ in 0..16 {
            let w = rng.random_range(0..n as u32);
            let cand = (u.min(w), u.max(w));
            if w != u && !have.contains(&cand) {
                have.remove(&(u.min(old), u.max(old)));
                have.insert(cand);
                *e = (u, w);
                break;
            }
        }
    }
    let mut uniq: Vec<(u32, u32)> = have.into_iter().collect();
    uniq.sort_unstable();
    for (u, v) in uniq {
        b.add_edge(u, v, 1.0).expect("generator produces valid edges");
    }
    b.finish()
}

fn generate_scale_free(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Graph {
    let m = m.max(1);
    let m0 = (m + 1).min(n);
    let mut b = GraphBuilder::new();
    for v in 0..n {
        b.intern(&v.to_string());
    }
    let mut endpoints: Vec<u32> = Vec::new();
    for u in 0..m0 as u32 {
        for v in (u + 1)..m0 as u32 {
            b.add_edge(u, v, 1.0).expect("valid seed edge");
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    for v in m0..n {
        let mut targets: Vec<u32> = Vec::new();
        while targets.len() < m.min(v) {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if t != v as u32 && !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            b.add_edge(v as u32, t, 1.0).expect("valid edge");
            endpoints.push(v as u32);
            endpoints.push(t);
        }
    }
    b.finish()
}

/// Generate a synthetic topology and independent-cascade action log. Each
/// cascade seeds a random vertex fraction at t = 0; in each round, every
/// vertex activated in the previous round attempts once to activate each
/// currently-inactive neighbor with probability `edge_prob`.
pub fn synth_cascades(params: &SynthParams, seed: u64) -> Result<(Graph, ActionLog)> {
    if !(params.edge_prob >= 0.0 && params.edge_prob <= 1.0) {
        return Err(Error::Validation(format!(
            "edge_prob must be in [0, 1], got {}",
            params.edge_prob
        )));
    }
    if params.vertices == 0 || params.cascades == 0 {
        return Err(Error::Validation("vertices and cascades must be positive".into()));
    }
    let mut topo_rng = seeds::rng(seed, "synth-topology");
    let g = match params.topology {
        Topology::SmallWorld => {
            generate_small_world(params.vertices, params.ws_k, params.ws_beta, &mut topo_rng)
        }
        Topology::ScaleFree => generate_scale_free(params.vertices, params.ba_m, &mut topo_rng),
    };
    let n = g.vertex_count();
    let num_seeds = ((params.seeds_fraction * n as f64).round() as usize).clamp(1, n);
    let mean_degree =
        (0..n as u32).map(|v| g.degree(v) as f64).sum::<f64>() / n.max(1) as f64;
    let attempt_prob = |source: u32| -> f64 {
        match params.influence {
            InfluenceModel::Uniform => params.edge_prob,
            InfluenceModel::DegreeScaled => {
                (params.edge_prob * g.degree(source) as f64 / mean_degree).min(1.0)
            }
        }
    };
    let mut records: Vec<(u32, String, i64)> = Vec::new();
    for c in 0..params.cascades {
        let action = format!("a{c}");
        let mut rng = seeds::rng_indexed(seed, "synth-cascade", &[c as u64]);
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(&mut rng);
        let mut active_at: Vec<Option<i64>> = vec![None; n];
        let mut frontier: Vec<u32> = order[..num_seeds].to_vec();
        frontier.sort_unstable();
        for &s in &frontier {
            active_at[s as usize] = Some(0);
            records.push((s, action.clone(), 0));
        }
        for round in 1..=params.rounds as i64 {
            let mut next: Vec<u32> = Vec::new();
            for &v in &frontier {
                let p = attempt_prob(v);
                for &u in g.neighbors(v) {
                    if active_at[u as usize].is_some() {
                        continue;
                    }
                    if rng.random::<f64>() < p {
                        active_at[u as usize] = Some(round);
                        records.push((u, action.clone(), round));
                        next.push(u);
                    }
                }
            }
            next.sort_unstable();
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
    }
    let log = ActionLog::from_records(records, (0, params.rounds as i64))?;
    Ok((g, log))
}
