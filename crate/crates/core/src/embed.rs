//! Pre-trained network embeddings: random-walk corpus generation and
//! skip-gram training with negative sampling.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seeds;

/// Random-walk corpus over a graph's vertices.
#[derive(Debug, Clone)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<u32>>,
    pub vertex_count: usize,
}

impl WalkCorpus {
    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }
}

/// Uniform random walks: `walks_per_vertex` walks of `walk_length` tokens
/// from every non-isolated vertex. Each start vertex owns a derived RNG, so
/// the corpus is independent of evaluation order.
pub fn generate_walks(
    g: &Graph,
    walks_per_vertex: usize,
    walk_length: usize,
    seed: u64,
) -> Result<WalkCorpus> {
    if g.edge_count() == 0 {
        return Err(Error::Degenerate("walk generation requires at least one edge".into()));
    }
    if walk_length == 0 {
        return Err(Error::Validation("walk_length must be at least 1".into()));
    }
    let mut walks = Vec::new();
    for v in 0..g.vertex_count() as u32 {
        if g.degree(v) == 0 {
            continue;
        }
        let mut rng = seeds::rng_indexed(seed, "walk", &[u64::from(v)]);
        for _ in 0..walks_per_vertex {
            let mut walk = Vec::with_capacity(walk_length);
            let mut cur = v;
            walk.push(cur);
            for _ in 1..walk_length {
                let nbrs = g.neighbors(cur);
                cur = nbrs[rng.random_range(0..nbrs.len())];
                walk.push(cur);
            }
            walks.push(walk);
        }
    }
    Ok(WalkCorpus { walks, vertex_count: g.vertex_count() })
}

/// Per-vertex embedding rows (row-major, `vertex_count x dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<EmbeddingMatrix> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Validation(format!(
                "embedding data length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(EmbeddingMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, v: u32) -> &[f64] {
        let v = v as usize;
        &self.data[v * self.dim..(v + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Text format: header `N D`, then `vertex_id v1 ... vD` per line.
    pub fn save<W: Write>(&self, g: &Graph, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.vertex_count(), self.dim)?;
        for v in 0..self.vertex_count() as u32 {
            write!(out, "{}", g.external_id(v))?;
            for x in self.row(v) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Load the text format, re-indexing rows through the graph's id map so
    /// external files with arbitrary vertex order work.
    pub fn load<R: BufRead>(reader: R, g: &Graph, expect_dim: Option<usize>) -> Result<EmbeddingMatrix> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing embedding header".into() })??;
        let mut parts = header.split_whitespace();
        let count: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse { line: 1, msg: "bad vertex count".into() })?;
        let dim: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse { line: 1, msg: "bad dimension".into() })?;
        if let Some(expected) = expect_dim {
            if dim != expected {
                return Err(Error::Validation(format!(
                    "embedding dimension {dim} does not match configured {expected}"
                )));
            }
        }
        if count != g.vertex_count() {
            return Err(Error::Validation(format!(
                "embedding file covers {count} vertices, graph has {}",
                g.vertex_count()
            )));
        }
        let mut data = vec![0.0f64; count * dim];
        let mut seen = vec![false; count];
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let name = toks
                .next()
                .ok_or_else(|| Error::Parse { line: lineno, msg: "empty row".into() })?;
            let v = g.internal_id(name).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown vertex id '{name}'"),
            })?;
            let row: Vec<f64> = toks
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: lineno, msg: format!("bad value: {e}") })?;
            if row.len() != dim {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {dim} values, got {}", row.len()),
                });
            }
            let vi = v as usize;
            data[vi * dim..(vi + 1) * dim].copy_from_slice(&row);
            seen[vi] = true;
        }
        if let Some(v) = seen.iter().position(|&s| !s) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("embedding file missing vertex '{}'", g.external_id(v as u32)),
            });
        }
        Ok(EmbeddingMatrix { dim, data })
    }
}

/// Skip-gram training settings.
#[derive(Debug, Clone)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr_start: 0.025,
            lr_end: 0.0001,
        }
    }
}

/// Per-epoch mean pair loss, for convergence reporting.
#[derive(Debug, Clone)]
pub struct SkipGramReport {
    pub epoch_loss: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `-ln(sigmoid(z))`, numerically stable.
fn softplus_neg(z: f64) -> f64 {
    if z > 30.0 {
        0.0
    } else if z < -30.0 {
        -z
    } else {
        (1.0 + (-z).exp()).ln()
    }
}

/// Train skip-gram embeddings with negative sampling: noise distribution
/// proportional to token frequency^0.75, linear learning-rate decay, fixed
/// context window. Deterministic for a given seed (single-threaded).
pub fn train_skipgram(
    corpus: &WalkCorpus,
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<(EmbeddingMatrix, SkipGramReport)> {
    if corpus.walks.is_empty() {
        return Err(Error::EmptyDataset("skip-gram corpus is empty".into()));
    }
    let n = corpus.vertex_count;
    let dim = cfg.dim;

    // noise distribution over tokens
    let mut counts = vec![0u64; n];
    for walk in &corpus.walks {
        for &v in walk {
            counts[v as usize] += 1;
        }
    }
    let mut noise_cdf = vec![0.0f64; n];
    let mut acc = 0.0;
    for v in 0..n {
        acc += (counts[v] as f64).powf(0.75);
        noise_cdf[v] = acc;
    }
    let noise_total = acc;
    if noise_total <= 0.0 {
        return Err(Error::EmptyDataset("skip-gram corpus has no tokens".into()));
    }

    let mut rng = seeds::rng(seed, "skipgram");
    let mut input: Vec<f64> = (0..n * dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0f64; n * dim];

    let total_tokens = (corpus.token_count() * cfg.epochs) as f64;
    let mut processed = 0usize;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut in_delta = vec![0.0f64; dim];

    for _epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0f64;
        let mut pairs = 0u64;
        for walk in &corpus.walks {
            for (i, &center) in walk.iter().enumerate() {
                processed += 1;
                let progress = processed as f64 / total_tokens;
                let lr = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * progress;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(walk.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let context = walk[j];
                    let ci = center as usize * dim;
                    in_delta.iter_mut().for_each(|d| *d = 0.0);

                    // positive pair
                    let oi = context as usize * dim;
                    let z: f64 = (0..dim).map(|d| input[ci + d] * output[oi + d]).sum();
                    loss_sum += softplus_neg(z);
                    let g = sigmoid(z) - 1.0;
                    for d in 0..dim {
                        in_delta[d] += g * output[oi + d];
                        output[oi + d] -= lr * g * input[ci + d];
                    }

                    // negative samples
                    for _ in 0..cfg.negatives {
                        let draw = rng.random::<f64>() * noise_total;
                        let neg = noise_cdf.partition_point(|&c| c < draw).min(n - 1) as u32;
                        if neg == context {
                            continue;
                        }
                        let oi = neg as usize * dim;
                        let z: f64 = (0..dim).map(|d| input[ci + d] * output[oi + d]).sum();
                        loss_sum += softplus_neg(-z);
                        let g = sigmoid(z);
                        for d in 0..dim {
                            in_delta[d] += g * output[oi + d];
                            output[oi + d] -= lr * g * input[ci + d];
                        }
                    }

                    for d in 0..dim {
                        input[ci + d] -= lr * in_delta[d];
                    }
                    pairs += 1;
                }
            }
        }
        epoch_loss.push(loss_sum / pairs.max(1) as f64);
    }

    let matrix = EmbeddingMatrix { dim, data: input };
    if !matrix.is_finite() {
        return Err(Error::Divergence("skip-gram produced non-finite embeddings".into()));
    }
    Ok((matrix, SkipGramReport { epoch_loss }))
}

/// Cosine similarity between two vectors; zero if either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::graph_from_edges;

    #[test]
    fn walks_stay_within_components() {
        let g = graph_from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]);
        let labels = g.connected_components();
        let corpus = generate_walks(&g, 4, 10, 1).unwrap();
        for walk in &corpus.walks {
            let c = labels[walk[0] as usize];
            assert!(walk.iter().all(|&v| labels[v as usize] == c));
        }
    }

    #[test]
    fn walk_length_one_gives_singletons() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2)]);
        let corpus = generate_walks(&g, 2, 1, 1).unwrap();
        assert_eq!(corpus.walks.len(), 6);
        assert!(corpus.walks.iter().all(|w| w.len() == 1));
    }

    #[test]
    fn isolated_vertices_skipped() {
        let g = graph_from_edges(4, &[(0, 1)]);
        let corpus = generate_walks(&g, 3, 5, 1).unwrap();
        assert!(corpus.walks.iter().all(|w| w[0] == 0 || w[0] == 1));
    }

    #[test]
    fn visit_frequency_proportional_to_degree() {
        // lollipop: triangle {0,1,2} plus path 2-3; degrees (2,2,3,1)
        let g = graph_from_edges(4, &[(0, 1), (1, 2), (0, 2), (2, 3)]);
        let corpus = generate_walks(&g, 60, 400, 7).unwrap();
        let mut counts = [0usize; 4];
        for walk in &corpus.walks {
            // drop a burn-in prefix so starts do not bias the estimate
            for &v in &walk[50..] {
                counts[v as usize] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let deg_total = 8.0;
        let mut l1 = 0.0;
        for v in 0..4u32 {
            let expect = g.degree(v) as f64 / deg_total;
            let got = counts[v as usize] as f64 / total as f64;
            l1 += (expect - got).abs();
        }
        assert!(l1 < 0.02, "L1 distance {l1}");
    }

    #[test]
    fn skipgram_shape_and_determinism() {
        let g = graph_from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let corpus = generate_walks(&g, 3, 8, 2).unwrap();
        let cfg = SkipGramConfig { dim: 8, epochs: 2, ..SkipGramConfig::default() };
        let (a, report) = train_skipgram(&corpus, &cfg, 5).unwrap();
        assert_eq!(a.vertex_count(), 5);
        assert_eq!(a.dim(), 8);
        assert_eq!(report.epoch_loss.len(), 2);
        let (b, _) = train_skipgram(&corpus, &cfg, 5).unwrap();
        assert_eq!(a, b);
    }

    fn two_cliques() -> Graph {
        let mut edges = Vec::new();
        for u in 0..4u32 {
            for v in (u + 1)..4 {
                edges.push((u, v));
                edges.push((u + 4, v + 4));
            }
        }
        graph_from_edges(8, &edges)
    }

    fn clique_separation(seed: u64) -> bool {
        let g = two_cliques();
        let corpus = generate_walks(&g, 12, 20, seed).unwrap();
        let cfg = SkipGramConfig { dim: 16, epochs: 5, ..SkipGramConfig::default() };
        let (emb, _) = train_skipgram(&corpus, &cfg, seed).unwrap();
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        for u in 0..8u32 {
            for v in (u + 1)..8 {
                let c = cosine(emb.row(u), emb.row(v));
                if (u < 4) == (v < 4) {
                    intra.push(c);
                } else {
                    inter.push(c);
                }
            }
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        mean(&intra) > mean(&inter)
    }

    #[test]
    fn cliques_separate_in_embedding_space() {
        let ok = (0..20).filter(|&s| clique_separation(1000 + s)).count();
        assert!(ok >= 19, "separation held for only {ok}/20 seeds");
    }

    #[test]
    fn skipgram_loss_reported_decreasing() {
        let g = two_cliques();
        let corpus = generate_walks(&g, 10, 15, 3).unwrap();
        let cfg = SkipGramConfig { dim: 12, epochs: 4, ..SkipGramConfig::default() };
        let (_, report) = train_skipgram(&corpus, &cfg, 4).unwrap();
        assert!(report.epoch_loss.windows(2).all(|w| w[1] <= w[0] + 1e-6));
    }

    #[test]
    fn embeddings_round_trip_and_reindex() {
        let g = graph_from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let corpus = generate_walks(&g, 2, 6, 9).unwrap();
        let cfg = SkipGramConfig { dim: 4, epochs: 1, ..SkipGramConfig::default() };
        let (emb, _) = train_skipgram(&corpus, &cfg, 9).unwrap();
        let mut buf = Vec::new();
        emb.save(&g, &mut buf).unwrap();
        let loaded = EmbeddingMatrix::load(std::io::Cursor::new(&buf), &g, Some(4)).unwrap();
        assert_eq!(emb, loaded);

        // shuffled row order re-indexes through the id map
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        let shuffled = lines.join("\n");
        let loaded2 =
            EmbeddingMatrix::load(std::io::Cursor::new(shuffled.as_bytes()), &g, Some(4)).unwrap();
        assert_eq!(emb, loaded2);
    }

    #[test]
    fn embedding_dim_mismatch_rejected() {
        let g = graph_from_edges(2, &[(0, 1)]);
        let text = "2 3\n0 1 2 3\n1 4 5 6\n";
        let err = EmbeddingMatrix::load(std::io::Cursor::new(text), &g, Some(8)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn embedding_header_body_mismatch_rejected() {
        let g = graph_from_edges(2, &[(0, 1)]);
        let text = "2 3\n0 1 2\n1 4 5 6\n";
        assert!(EmbeddingMatrix::load(std::io::Cursor::new(text), &g, None).is_err());
    }
}
