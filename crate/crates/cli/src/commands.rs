//! Command implementations. Each command reads its inputs, writes artifacts
//! into the `out` directory, and prints a short summary; a manifest with the
//! resolved configuration, seed, version, and wall time accompanies every
//! successful run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use influlocal::baselines::{
    self, ColumnStats, LinearKind, PscnConfig,
};
use influlocal::data::{
    self, ActionLog, InfluenceModel, InstanceSpec, RwrConfig, SampledInstance, SynthParams,
    Topology,
};
use influlocal::embed::{self, EmbeddingMatrix, SkipGramConfig};
use influlocal::eval::{evaluate, EvalReport};
use influlocal::feats::VertexFeatureTable;
use influlocal::graph::Graph;
use influlocal::model::{self, DeepInf, FeatureStats, FitConfig};
use influlocal::{seeds, Error, Result};

use crate::config::RunConfig;

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?))
}

fn load_graph(cfg: &RunConfig) -> Result<Graph> {
    let path = cfg.required_path("graph", "produced by `influlocal synth` or external data")?;
    let text = std::fs::read_to_string(&path)?;
    // saved graphs carry a header line; raw edge lists do not
    let first = text.lines().find(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let headerish = first.is_some_and(|l| {
        let toks: Vec<&str> = l.split_whitespace().collect();
        toks.len() == 2 && toks.iter().all(|t| t.parse::<usize>().is_ok())
    });
    let weighted = cfg.bool_or("weighted", false)?;
    if headerish {
        match Graph::load(std::io::Cursor::new(text.as_bytes())) {
            Ok(g) => return Ok(g),
            Err(_) => { /* fall through: ids merely looked numeric */ }
        }
    }
    influlocal::graph::load_edge_list(std::io::Cursor::new(text.as_bytes()), weighted)
}

fn load_log(cfg: &RunConfig, g: &Graph) -> Result<ActionLog> {
    let path = cfg.required_path("log", "produced by `influlocal synth` or external data")?;
    ActionLog::load(open_reader(&path)?, g)
}

fn load_embeddings(cfg: &RunConfig, g: &Graph, dim: usize) -> Result<EmbeddingMatrix> {
    let path = cfg.required_path("embeddings", "produced by `influlocal embed`")?;
    EmbeddingMatrix::load(open_reader(&path)?, g, Some(dim))
}

fn load_feature_table(cfg: &RunConfig, g: &Graph) -> Result<Option<VertexFeatureTable>> {
    match cfg.optional_path("features") {
        Some(path) => Ok(Some(VertexFeatureTable::load(open_reader(&path)?, g)?)),
        None => Ok(None),
    }
}

fn load_split(cfg: &RunConfig, g: &Graph, split: &str) -> Result<Vec<SampledInstance>> {
    let dir = cfg.required_path("instances", "produced by `influlocal prepare`")?;
    let path = dir.join(format!("{split}.jsonl"));
    data::load_instances(open_reader(&path)?, g)
}

/// Manifest written next to every successful command's artifacts.
pub fn write_manifest(cfg: &RunConfig, command: &str, wall: Duration) -> Result<()> {
    let Ok(dir) = cfg.out_dir() else {
        return Ok(()); // commands without an out dir have no manifest
    };
    let mut doc = BTreeMap::new();
    doc.insert(
        "command".to_string(),
        serde_json::Value::String(command.to_string()),
    );
    doc.insert(
        "version".to_string(),
        serde_json::Value::String(env!("CARGO_PKG_VERSION").to_string()),
    );
    doc.insert("seed".to_string(), serde_json::Value::from(cfg.seed()?));
    doc.insert(
        "wall_time_secs".to_string(),
        serde_json::Value::from(wall.as_secs_f64()),
    );
    let entries: BTreeMap<String, String> = cfg.entries().clone();
    doc.insert(
        "config".to_string(),
        serde_json::to_value(entries).expect("config serializes"),
    );
    let path = dir.join(format!("{command}.manifest.json"));
    let mut out = create_writer(&path)?;
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&doc).expect("manifest serializes")
    )?;
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let d = SynthParams::default();
    let topology = match cfg.string_or("topology", "small-world").as_str() {
        "small-world" => Topology::SmallWorld,
        "scale-free" => Topology::ScaleFree,
        other => {
            return Err(Error::Validation(format!(
                "unknown topology '{other}' (small-world | scale-free)"
            )))
        }
    };
    let influence = match cfg.string_or("ic_influence", "uniform").as_str() {
        "uniform" => InfluenceModel::Uniform,
        "degree" => InfluenceModel::DegreeScaled,
        other => {
            return Err(Error::Validation(format!(
                "unknown ic_influence '{other}' (uniform | degree)"
            )))
        }
    };
    let params = SynthParams {
        topology,
        vertices: cfg.usize_or("vertices", d.vertices)?,
        ws_k: cfg.usize_or("ws_k", d.ws_k)?,
        ws_beta: cfg.f64_or("ws_beta", d.ws_beta)?,
        ba_m: cfg.usize_or("ba_m", d.ba_m)?,
        edge_prob: cfg.f64_or("edge_prob", d.edge_prob)?,
        seeds_fraction: cfg.f64_or("seeds_fraction", d.seeds_fraction)?,
        rounds: cfg.usize_or("rounds", d.rounds)?,
        cascades: cfg.usize_or("cascades", d.cascades)?,
        influence,
    };
    let (g, log) = data::synth_cascades(&params, cfg.seed()?)?;
    g.save(create_writer(&out.join("graph.txt"))?)?;
    log.save(&g, create_writer(&out.join("actions.txt"))?)?;
    println!(
        "synth: {} vertices, {} edges, {} cascades, {} activation records",
        g.vertex_count(),
        g.edge_count(),
        log.action_count(),
        log.record_count()
    );
    Ok(())
}

pub fn features(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_graph(cfg)?;
    let table = VertexFeatureTable::compute(&g)?;
    table.save(&g, create_writer(&out.join("features.txt"))?)?;
    println!(
        "features: {} vertices, 7 columns -> {}",
        g.vertex_count(),
        out.join("features.txt").display()
    );
    Ok(())
}

pub fn embed(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_graph(cfg)?;
    let seed = cfg.seed()?;
    let d = SkipGramConfig::default();
    let corpus = embed::generate_walks(
        &g,
        cfg.usize_or("walks_per_vertex", 10)?,
        cfg.usize_or("walk_length", 40)?,
        seeds::derive(seed, "walks"),
    )?;
    let sg = SkipGramConfig {
        dim: cfg.usize_or("embed_dim", 64)?,
        window: cfg.usize_or("window", d.window)?,
        negatives: cfg.usize_or("negatives", d.negatives)?,
        epochs: cfg.usize_or("embed_epochs", d.epochs)?,
        lr_start: cfg.f64_or("embed_lr_start", d.lr_start)?,
        lr_end: cfg.f64_or("embed_lr_end", d.lr_end)?,
    };
    let (matrix, report) = embed::train_skipgram(&corpus, &sg, seeds::derive(seed, "skipgram"))?;
    matrix.save(&g, create_writer(&out.join("embeddings.txt"))?)?;
    let losses: Vec<String> = report.epoch_loss.iter().map(|l| format!("{l:.5}")).collect();
    println!(
        "embed: {} walks, dim {}, epoch losses [{}]",
        corpus.walks.len(),
        sg.dim,
        losses.join(", ")
    );
    Ok(())
}

fn sample_split(
    g: &Graph,
    log: &ActionLog,
    specs: &[InstanceSpec],
    rwr: &RwrConfig,
    seed: u64,
    split_tag: u64,
) -> Result<Vec<SampledInstance>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let s = seeds::derive_indexed(seed, "sample", &[split_tag, i as u64]);
            data::rwr_sample(g, spec, log, rwr, s)
        })
        .collect()
}

pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_graph(cfg)?;
    let log = load_log(cfg, &g)?;
    let seed = cfg.seed()?;
    let specs = data::build_instances(&g, &log);
    let (kept, report) = data::filter_and_balance(
        &specs,
        &g,
        &log,
        cfg.usize_or("min_active", 3)?,
        cfg.f64_or("neg_pos", 3.0)?,
        seed,
    )?;
    let fractions = (
        cfg.f64_or("frac_train", 0.75)?,
        cfg.f64_or("frac_valid", 0.125)?,
        cfg.f64_or("frac_test", 0.125)?,
    );
    let splits = data::split(&kept, fractions, seed)?;
    for w in &splits.warnings {
        eprintln!("warning: {w}");
    }
    let n = cfg.usize_or("n", 50)?;
    let rwr = RwrConfig {
        n,
        restart: cfg.f64_or("restart", 0.8)?,
        max_steps: cfg.usize_or("max_steps", 100 * n)?,
        radius: match cfg.usize_or("radius", 0)? {
            0 => None,
            r => Some(r),
        },
    };
    for (tag, (name, specs)) in [
        ("train", &splits.train),
        ("valid", &splits.valid),
        ("test", &splits.test),
    ]
    .into_iter()
    .enumerate()
    {
        let sampled = sample_split(&g, &log, specs, &rwr, seed, tag as u64)?;
        data::save_instances(&sampled, &g, create_writer(&out.join(format!("{name}.jsonl")))?)?;
        let pos = sampled.iter().filter(|s| s.label).count();
        println!(
            "prepare: {name} split {} instances ({} positive, {} negative)",
            sampled.len(),
            pos,
            sampled.len() - pos
        );
    }
    println!(
        "prepare: positives {} -> {}, negatives {} -> {}, achieved neg:pos ratio {:.4}",
        report.positives_before,
        report.positives,
        report.negatives_before,
        report.negatives_after,
        report.achieved_ratio
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_graph(cfg)?;
    let config = cfg.deepinf()?;
    let emb = load_embeddings(cfg, &g, config.embed_dim)?;
    let table = load_feature_table(cfg, &g)?;
    if config.use_vertex_features && table.is_none() {
        return Err(Error::Validation(
            "use_vertex_features is on but no 'features' path given (produced by `influlocal features`)"
                .into(),
        ));
    }
    let train_set = load_split(cfg, &g, "train")?;
    let valid_set = load_split(cfg, &g, "valid")?;
    let (model, history) = model::train(&config, &train_set, &valid_set, &emb, table.as_ref())?;
    model.save(create_writer(&out.join("checkpoint.txt"))?)?;
    history.save(create_writer(&out.join("history.txt"))?)?;
    println!(
        "train: {} epochs run, best epoch {} (valid loss {:.5}), stop: {}",
        history.train_loss.len(),
        history.best_epoch,
        history.best_valid_loss(),
        history.stop_reason
    );
    Ok(())
}

fn report_files(out: &Path, report: &EvalReport, fingerprint: &str, seed: u64) -> Result<()> {
    report.save(create_writer(&out.join("report.txt"))?, fingerprint, seed)?;
    report.save_scores(create_writer(&out.join("scores.txt"))?)?;
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_graph(cfg)?;
    let ckpt_path = cfg.required_path("checkpoint", "produced by `influlocal train`")?;
    let model = DeepInf::load(open_reader(&ckpt_path)?)?;
    let emb = load_embeddings(cfg, &g, model.config.embed_dim)?;
    let table = load_feature_table(cfg, &g)?;
    if model.config.use_vertex_features && table.is_none() {
        return Err(Error::Validation(
            "checkpoint uses vertex features but no 'features' path given".into(),
        ));
    }
    let split = cfg.string_or("eval_split", "test");
    let instances = load_split(cfg, &g, &split)?;
    let scores = model.predict(&instances, &emb, table.as_ref())?;
    let labels: Vec<bool> = instances.iter().map(|i| i.label).collect();
    let threshold = cfg.f64_or("threshold", 0.5)?;
    let report = evaluate(&labels, &scores, threshold)?;
    report_files(&out, &report, &model.config.fingerprint(), cfg.seed()?)?;
    println!(
        "eval[{split}]: auc {:.4} precision {:.4} recall {:.4} f1 {:.4} ({} instances)",
        report.auc,
        report.precision,
        report.recall,
        report.f1,
        report.instance_count()
    );
    Ok(())
}

fn linear_baseline(
    cfg: &RunConfig,
    out: &Path,
    g: &Graph,
    kind: LinearKind,
) -> Result<EvalReport> {
    let table = load_feature_table(cfg, g)?.ok_or_else(|| {
        Error::Validation("linear baselines need a 'features' path".into())
    })?;
    let emb = load_embeddings(cfg, g, cfg.usize_or("embed_dim", 64)?)?;
    let train_set = load_split(cfg, g, "train")?;
    let test_set = load_split(cfg, g, "test")?;
    let (train_x, train_y) = baselines::build_baseline_features(&train_set, &table, &emb, g)?;
    let (test_x, test_y) = baselines::build_baseline_features(&test_set, &table, &emb, g)?;
    let stats = ColumnStats::fit(&train_x)?;
    let train_x = stats.apply(&train_x);
    let test_x = stats.apply(&test_x);
    if cfg.bool_or("dump_features", false)? {
        baselines::save_baseline_features(
            &train_x,
            &train_y,
            create_writer(&out.join("baseline_features_train.txt"))?,
        )?;
        baselines::save_baseline_features(
            &test_x,
            &test_y,
            create_writer(&out.join("baseline_features_test.txt"))?,
        )?;
    }
    let model = baselines::linear_train(
        &train_x,
        &train_y,
        kind,
        cfg.f64_or("l2", 1e-4)?,
        cfg.usize_or("linear_epochs", 50)?,
        cfg.f64_or("linear_lr", 0.05)?,
        cfg.seed()?,
    )?;
    let scores: Vec<f64> = (0..test_x.rows()).map(|i| model.score(test_x.row(i))).collect();
    evaluate(&test_y, &scores, model.threshold())
}

fn pscn_baseline(cfg: &RunConfig, g: &Graph) -> Result<EvalReport> {
    let config = cfg.deepinf()?;
    let emb = load_embeddings(cfg, g, config.embed_dim)?;
    let table = load_feature_table(cfg, g)?;
    if config.use_vertex_features && table.is_none() {
        return Err(Error::Validation(
            "pscn with vertex features needs a 'features' path".into(),
        ));
    }
    let train_set = load_split(cfg, g, "train")?;
    let valid_set = load_split(cfg, g, "valid")?;
    let test_set = load_split(cfg, g, "test")?;
    let stats = if config.use_vertex_features {
        Some(FeatureStats::fit(&train_set, table.as_ref().unwrap())?)
    } else {
        None
    };
    let pscn_cfg = PscnConfig {
        w: cfg.usize_or("pscn_w", 16)?,
        k: cfg.usize_or("pscn_k", 5)?,
        ..PscnConfig::default()
    };
    let emb_tensor = model::embedding_tensor(&emb);
    let fields = |instances: &[SampledInstance]| -> Result<(Vec<_>, Vec<bool>)> {
        let mut rf = Vec::with_capacity(instances.len());
        let mut labels = Vec::with_capacity(instances.len());
        for inst in instances {
            let feats = match (&stats, &table) {
                (Some(s), Some(t)) => Some(s.standardize::<f32>(inst, t)?),
                _ => None,
            };
            let input = model::build_input_matrix(
                inst,
                &emb_tensor,
                feats.as_ref(),
                config.use_instance_norm,
                config.instance_norm_eps,
            )?;
            rf.push(baselines::pscn_receptive_fields(inst, &pscn_cfg, &input)?);
            labels.push(inst.label);
        }
        Ok((rf, labels))
    };
    let (train_rf, train_y) = fields(&train_set)?;
    let (valid_rf, valid_y) = fields(&valid_set)?;
    let (test_rf, test_y) = fields(&test_set)?;
    let fit = FitConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        batch: config.batch,
        max_epochs: config.max_epochs,
        patience: config.patience,
        seed: config.seed,
    };
    let (params, history) =
        baselines::pscn_train(&pscn_cfg, &train_rf, &train_y, &valid_rf, &valid_y, &fit)?;
    println!(
        "baseline[pscn]: {} epochs, best {} (valid loss {:.5})",
        history.train_loss.len(),
        history.best_epoch,
        history.best_valid_loss()
    );
    let scores: Vec<f64> = test_rf
        .iter()
        .map(|rf| baselines::pscn_score(&pscn_cfg, &params, rf))
        .collect::<Result<_>>()?;
    evaluate(&test_y, &scores, 0.5)
}

pub fn baseline(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_graph(cfg)?;
    let kind = cfg.string_or("baseline", "lr");
    let report = match kind.as_str() {
        "lr" => linear_baseline(cfg, &out, &g, LinearKind::Logistic)?,
        "svm" => linear_baseline(cfg, &out, &g, LinearKind::Hinge)?,
        "pscn" => pscn_baseline(cfg, &g)?,
        other => {
            return Err(Error::Validation(format!(
                "unknown baseline '{other}' (lr | svm | pscn)"
            )))
        }
    };
    let fingerprint = format!("{{\"baseline\":\"{kind}\"}}");
    report_files(&out, &report, &fingerprint, cfg.seed()?)?;
    println!(
        "baseline[{kind}]: auc {:.4} precision {:.4} recall {:.4} f1 {:.4}",
        report.auc, report.precision, report.recall, report.f1
    );
    Ok(())
}

pub fn attend(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_graph(cfg)?;
    let ckpt_path = cfg.required_path("checkpoint", "produced by `influlocal train`")?;
    let model = DeepInf::load(open_reader(&ckpt_path)?)?;
    let emb = load_embeddings(cfg, &g, model.config.embed_dim)?;
    let table = load_feature_table(cfg, &g)?;
    let split = cfg.string_or("eval_split", "test");
    let instances = load_split(cfg, &g, &split)?;
    let wanted = cfg.string_or("attend_instances", "0");
    for token in wanted.split(',') {
        let idx: usize = token.trim().parse().map_err(|_| {
            Error::Validation(format!("bad instance index '{token}' in attend_instances"))
        })?;
        let inst = instances.get(idx).ok_or_else(|| {
            Error::Validation(format!(
                "instance index {idx} out of range ({} instances in {split})",
                instances.len()
            ))
        })?;
        let capture = model.attention_scores(inst, &emb, table.as_ref())?;
        let mut file = create_writer(&out.join(format!("attention_{idx}.jsonl")))?;
        for (layer, per_layer) in capture.coefficients.iter().enumerate() {
            for (head, coeffs) in per_layer.iter().enumerate() {
                let mut edges: Vec<serde_json::Value> = Vec::new();
                for i in 0..inst.size() {
                    for j in 0..inst.size() {
                        let a = coeffs.get(i, j);
                        if a != 0.0 {
                            edges.push(serde_json::json!([i, j, a]));
                        }
                    }
                }
                let scores: Vec<f32> = capture.scores[layer][head].clone();
                let line = serde_json::json!({
                    "instance": idx,
                    "layer": layer,
                    "head": head,
                    "edges": edges,
                    "scores": scores,
                });
                writeln!(file, "{line}")?;
            }
        }
        // plain declarative graph description for external rendering
        let mut gd = create_writer(&out.join(format!("case_{idx}.graph")))?;
        writeln!(gd, "# case study instance {idx} ({split} split)")?;
        writeln!(gd, "label {}", u8::from(inst.label))?;
        for (local, &global) in inst.vertices.iter().enumerate() {
            writeln!(
                gd,
                "vertex {local} id={} active={} ego={}",
                g.external_id(global),
                u8::from(inst.active[local]),
                u8::from(local == inst.ego_local)
            )?;
        }
        for (u, v, w) in inst.local_graph.edges() {
            writeln!(gd, "edge {u} {v} {w}")?;
        }
        println!(
            "attend: instance {idx} -> attention_{idx}.jsonl ({} layers x {} heads), case_{idx}.graph",
            capture.coefficients.len(),
            model.config.heads
        );
    }
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let axis = cfg.string_or("sweep_axis", "");
    if !["restart", "n", "neg_pos", "heads"].contains(&axis.as_str()) {
        return Err(Error::Validation(format!(
            "sweep_axis must be one of restart | n | neg_pos | heads, got '{axis}'"
        )));
    }
    let values_raw = cfg.string_or("sweep_values", "");
    if values_raw.is_empty() {
        return Err(Error::Validation("sweep_values must list comma-separated values".into()));
    }
    let values: Vec<String> = values_raw.split(',').map(|v| v.trim().to_string()).collect();
    let mut table = create_writer(&out.join("sweep.tsv"))?;
    writeln!(table, "{axis}\tauc\tf1")?;
    for value in &values {
        let cell_dir = out.join(format!("cell_{axis}_{value}"));
        let result = sweep_cell(cfg, &cell_dir, &axis, value);
        match result {
            Ok((auc, f1)) => {
                writeln!(table, "{value}\t{auc:.4}\t{f1:.4}")?;
                println!("sweep {axis}={value}: auc {auc:.4} f1 {f1:.4}");
            }
            Err(e) => {
                writeln!(table, "{value}\tERROR\t{e}")?;
                eprintln!("sweep {axis}={value} failed: {e}");
            }
        }
    }
    println!("sweep: results in {}", out.join("sweep.tsv").display());
    Ok(())
}

fn sweep_cell(base: &RunConfig, cell_dir: &Path, axis: &str, value: &str) -> Result<(f64, f64)> {
    std::fs::create_dir_all(cell_dir)?;
    let mut cfg = base.clone();
    cfg.set(axis, value.to_string());
    cfg.set("out", cell_dir.display().to_string());
    // one full prepare/train/eval cycle with the shared seed
    prepare(&cfg)?;
    cfg.set("instances", cell_dir.display().to_string());
    train(&cfg)?;
    cfg.set(
        "checkpoint",
        cell_dir.join("checkpoint.txt").display().to_string(),
    );
    eval(&cfg)?;
    let report = std::fs::read_to_string(cell_dir.join("report.txt"))?;
    let mut auc = None;
    let mut f1 = None;
    for line in report.lines() {
        if let Some(v) = line.strip_prefix("auc ") {
            auc = v.trim().parse::<f64>().ok();
        }
        if let Some(v) = line.strip_prefix("f1 ") {
            f1 = v.trim().parse::<f64>().ok();
        }
    }
    match (auc, f1) {
        (Some(a), Some(f)) => Ok((a, f)),
        _ => Err(Error::Validation("cell report missing auc/f1".into())),
    }
}
