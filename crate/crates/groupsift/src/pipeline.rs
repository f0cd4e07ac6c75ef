//! Pipeline orchestration and run artifacts.
//!
//! A detection run ingests an edge file, optionally prunes popular
//! objects, builds the similarity graph, clusters it, ranks groups and
//! writes reproducible report files plus a manifest sufficient to rerun
//! the exact configuration.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bipartite::{BipartiteGraph, IngestOptions, ObjectId, PruneCutoff, UserId};
use crate::error::{Error, Result};
use crate::eval::{self, EvalResult};
use crate::inject::{self, GroundTruth, InjectionSpec};
use crate::labelprop::{propagate, Partition, PropagateOptions, UpdateCriterion};
use crate::osg::{build_osg, Osg, OsgOptions};
use crate::suspicion::{rank_groups, GroupReport, RankOptions};

/// Full configuration of a detection run; serialized into the manifest
/// and restorable from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub edges: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub delimiter: char,
    #[serde(default)]
    pub attr_widths: Vec<f64>,
    #[serde(default)]
    pub prune: Option<PruneCutoff>,
    pub criterion: UpdateCriterion,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub strict_topk: bool,
    pub min_outdeg: u32,
    #[serde(default)]
    pub top_k: Option<usize>,
    pub hub_guard: usize,
    pub workers: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub dump_osg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            edges: PathBuf::new(),
            labels: None,
            delimiter: '\t',
            attr_widths: Vec::new(),
            prune: None,
            criterion: UpdateCriterion::TopK(3),
            max_iters: None,
            strict_topk: false,
            min_outdeg: 3,
            top_k: None,
            hub_guard: 10_000,
            workers: 1,
            seed: 0,
            out_dir: PathBuf::new(),
            dump_osg: false,
        }
    }
}

/// Algorithm knobs of [`detect`], free of any file paths.
#[derive(Debug, Clone)]
pub struct DetectParams {
    pub prune: Option<PruneCutoff>,
    pub criterion: UpdateCriterion,
    pub max_iters: Option<usize>,
    pub strict_topk: bool,
    pub min_outdeg: u32,
    pub top_k: Option<usize>,
    pub hub_guard: usize,
    pub workers: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            prune: None,
            criterion: UpdateCriterion::TopK(3),
            max_iters: None,
            strict_topk: false,
            min_outdeg: 3,
            top_k: None,
            hub_guard: 10_000,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn detect_params(&self) -> DetectParams {
        DetectParams {
            prune: self.prune,
            criterion: self.criterion,
            max_iters: self.max_iters,
            strict_topk: self.strict_topk,
            min_outdeg: self.min_outdeg,
            top_k: self.top_k,
            hub_guard: self.hub_guard,
            workers: self.workers,
        }
    }
}

/// Everything a detection run produces, in memory.
pub struct DetectArtifacts {
    pub graph: BipartiteGraph,
    pub removed_objects: Vec<String>,
    pub osg: Osg,
    pub partition: Partition,
    /// Reports in rank order.
    pub reports: Vec<GroupReport>,
    pub timings_ms: BTreeMap<String, u64>,
}

/// Runs prune, similarity-graph construction, clustering and ranking on
/// an already-loaded graph.
pub fn detect(graph: BipartiteGraph, params: &DetectParams) -> Result<DetectArtifacts> {
    let mut timings = BTreeMap::new();

    let t = Instant::now();
    let (graph, removed_objects) = match params.prune {
        Some(cutoff) => graph.prune_popular(cutoff)?,
        None => (graph, Vec::new()),
    };
    timings.insert("prune".to_string(), ms(t));

    let t = Instant::now();
    let osg = build_osg(
        &graph,
        &OsgOptions {
            hub_guard: params.hub_guard,
            workers: params.workers,
        },
    )?;
    timings.insert("osg".to_string(), ms(t));

    let t = Instant::now();
    let partition = propagate(
        &osg,
        params.criterion,
        &PropagateOptions {
            max_iters: params.max_iters,
            workers: params.workers,
            strict_topk: params.strict_topk,
            trace_monochromatic: false,
        },
    );
    timings.insert("cluster".to_string(), ms(t));

    let t = Instant::now();
    let reports = rank_groups(
        &osg,
        &graph,
        &partition,
        &RankOptions {
            top_k: params.top_k,
            min_outdeg: params.min_outdeg,
            workers: params.workers,
        },
    )?;
    timings.insert("score".to_string(), ms(t));

    Ok(DetectArtifacts {
        graph,
        removed_objects,
        osg,
        partition,
        reports,
        timings_ms: timings,
    })
}

/// Scores detection quality against planted ground truth. Truth is
/// re-anchored by entity key, so it stays correct after pruning; objects
/// pruned away count as unflagged (score 0) members of the population.
pub fn evaluate_detection(artifacts: &DetectArtifacts, truth: &GroundTruth) -> Result<EvalResult> {
    let resolved = truth.resolve(&artifacts.graph);

    let mut object_scores = eval::object_scores(&artifacts.reports, &artifacts.partition);
    let mut object_truth = vec![false; artifacts.graph.num_objects()];
    for &o in &resolved.fraud_objects {
        object_truth[o.index()] = true;
    }
    // Pruned objects rejoin the population unflagged.
    let truth_keys: std::collections::HashSet<&str> = truth
        .groups
        .iter()
        .flat_map(|g| g.object_keys.iter().map(String::as_str))
        .collect();
    for name in &artifacts.removed_objects {
        object_scores.push(0.0);
        object_truth.push(truth_keys.contains(name.as_str()));
    }

    let user_scores = eval::user_scores(&artifacts.reports, artifacts.graph.num_users());
    let mut user_truth = vec![false; artifacts.graph.num_users()];
    for &u in &resolved.fraud_users {
        user_truth[u.index()] = true;
    }

    let auc_objects = eval::auc(&object_scores, &object_truth)?;
    let auc_users = eval::auc(&user_scores, &user_truth)?;
    let (f1_threshold_objects, best_f1_objects) = eval::best_f1(&object_scores, &object_truth)?;
    let (f1_threshold_users, best_f1_users) = eval::best_f1(&user_scores, &user_truth)?;
    let num_fragments = resolved
        .group_objects
        .iter()
        .map(|objects| {
            let ids: Vec<u32> = objects.iter().map(|o| o.0).collect();
            eval::fragmentation(&artifacts.partition, &ids)
        })
        .collect();

    Ok(EvalResult {
        auc_objects,
        auc_users,
        best_f1_objects,
        best_f1_users,
        f1_threshold_objects,
        f1_threshold_users,
        num_fragments,
        converged: artifacts.partition.converged,
        runtime_ms: artifacts.timings_ms.clone(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: RunConfig,
    stats: ManifestStats,
    timings_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestStats {
    num_users: usize,
    num_objects: usize,
    num_edges: usize,
    removed_objects: usize,
    osg_edges: usize,
    num_groups: usize,
    iterations_run: usize,
    converged: bool,
    tie_events: u64,
}

#[derive(Serialize)]
struct ReportRow<'a> {
    group_id: u32,
    f: f64,
    f1: f64,
    f2: f64,
    edge_density: f64,
    size: usize,
    members: Vec<&'a str>,
    users: Vec<&'a str>,
}

/// Ingests per the config, runs [`detect`] and writes the report files:
/// `partition.tsv`, `reports.jsonl`, `summary.csv`, `scores_objects.tsv`,
/// `scores_users.tsv`, optional `osg.tsv`, and `manifest.json`.
pub fn run_detect(config: &RunConfig) -> Result<DetectArtifacts> {
    let t_total = Instant::now();
    let t = Instant::now();
    let mut graph = BipartiteGraph::ingest_edges(
        &config.edges,
        &IngestOptions {
            delimiter: config.delimiter,
            attr_widths: config.attr_widths.clone(),
        },
    )?;
    if let Some(labels) = &config.labels {
        graph.load_labels(labels)?;
    }
    let ingest_ms = ms(t);

    let mut artifacts = detect(graph, &config.detect_params())?;
    artifacts.timings_ms.insert("ingest".to_string(), ingest_ms);
    artifacts
        .timings_ms
        .insert("total".to_string(), ms(t_total));

    write_artifacts(config, &artifacts)?;
    Ok(artifacts)
}

fn write_artifacts(config: &RunConfig, artifacts: &DetectArtifacts) -> Result<()> {
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let graph = &artifacts.graph;

    // partition.tsv: group ids are dense by descending group size.
    let mut w = writer(dir.join("partition.tsv"))?;
    for o in 0..graph.num_objects() {
        wline(
            &mut w,
            format_args!(
                "{}\t{}",
                graph.object_name(ObjectId(o as u32)),
                artifacts.partition.group_of[o]
            ),
        )?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    // reports.jsonl in rank order.
    let mut w = writer(dir.join("reports.jsonl"))?;
    for r in &artifacts.reports {
        let row = ReportRow {
            group_id: r.group_id,
            f: r.f,
            f1: r.f1,
            f2: r.f2,
            edge_density: r.edge_density,
            size: r.members.len(),
            members: r
                .members
                .iter()
                .map(|&m| graph.object_name(ObjectId(m)))
                .collect(),
            users: r
                .users
                .iter()
                .map(|&u| graph.user_name(UserId(u)))
                .collect(),
        };
        let line = serde_json::to_string(&row)
            .map_err(|e| Error::Internal(format!("serialize report: {e}")))?;
        wline(&mut w, format_args!("{line}"))?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    // summary.csv: same columns minus the member/user lists.
    let mut w = writer(dir.join("summary.csv"))?;
    wline(
        &mut w,
        format_args!("group_id,f,f1,f2,edge_density,size,num_users"),
    )?;
    for r in &artifacts.reports {
        wline(
            &mut w,
            format_args!(
                "{},{},{},{},{},{},{}",
                r.group_id,
                r.f,
                r.f1,
                r.f2,
                r.edge_density,
                r.members.len(),
                r.users.len()
            ),
        )?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    // Per-entity scores so evaluation needs no re-ingestion.
    let object_scores = eval::object_scores(&artifacts.reports, &artifacts.partition);
    let mut w = writer(dir.join("scores_objects.tsv"))?;
    for (o, score) in object_scores.iter().enumerate() {
        wline(
            &mut w,
            format_args!("{}\t{}", graph.object_name(ObjectId(o as u32)), score),
        )?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let user_scores = eval::user_scores(&artifacts.reports, graph.num_users());
    let mut w = writer(dir.join("scores_users.tsv"))?;
    for (u, score) in user_scores.iter().enumerate() {
        wline(
            &mut w,
            format_args!("{}\t{}", graph.user_name(UserId(u as u32)), score),
        )?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    if config.dump_osg {
        let mut w = writer(dir.join("osg.tsv"))?;
        artifacts
            .osg
            .write_tsv(graph, &mut w)
            .map_err(|e| Error::io(dir, e))?;
        w.flush().map_err(|e| Error::io(dir, e))?;
    }

    let manifest = Manifest {
        config: config.clone(),
        stats: ManifestStats {
            num_users: graph.num_users(),
            num_objects: graph.num_objects(),
            num_edges: graph.num_edges(),
            removed_objects: artifacts.removed_objects.len(),
            osg_edges: artifacts.osg.num_edges(),
            num_groups: artifacts.partition.groups.len(),
            iterations_run: artifacts.partition.iterations_run,
            converged: artifacts.partition.converged,
            tie_events: artifacts.partition.tie_events,
        },
        timings_ms: artifacts.timings_ms.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Internal(format!("serialize manifest: {e}")))?;
    fs::write(dir.join("manifest.json"), json).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Reads the config back out of a run manifest.
pub fn config_from_manifest(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&data)
        .map_err(|e| Error::invalid(format!("{}: not a run manifest: {e}", path.display())))?;
    Ok(manifest.config)
}

/// Where an injection run gets its background graph from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundSource {
    Generate {
        users: usize,
        objects: usize,
        edges: usize,
        skew: f64,
        seed: u64,
    },
    File {
        path: PathBuf,
        delimiter: char,
    },
}

impl BackgroundSource {
    pub fn load(&self) -> Result<BipartiteGraph> {
        match self {
            BackgroundSource::Generate {
                users,
                objects,
                edges,
                skew,
                seed,
            } => inject::make_background(*users, *objects, *edges, *skew, *seed),
            BackgroundSource::File { path, delimiter } => BipartiteGraph::ingest_edges(
                path,
                &IngestOptions {
                    delimiter: *delimiter,
                    attr_widths: Vec::new(),
                },
            ),
        }
    }
}

/// Configuration of an injection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectConfig {
    pub background: BackgroundSource,
    pub groups: Vec<InjectionSpec>,
    /// Fraction of fraud users to emit as a labels file.
    #[serde(default)]
    pub label_fraction: Option<f64>,
    #[serde(default)]
    pub label_seed: u64,
    pub out_dir: PathBuf,
}

/// Writes `edges.tsv`, `truth_users.txt`, `truth_objects.txt`, an
/// optional `labels.txt` sample, and `inject_manifest.json`.
pub fn run_inject(config: &InjectConfig) -> Result<(BipartiteGraph, GroundTruth)> {
    let background = config.background.load()?;
    let (graph, truth) = inject::inject_many(&background, &config.groups)?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = writer(dir.join("edges.tsv"))?;
    for (u, o, _) in graph.edges() {
        wline(
            &mut w,
            format_args!("{}\t{}", graph.user_name(u), graph.object_name(o)),
        )?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = writer(dir.join("truth_users.txt"))?;
    for &u in &truth.fraud_users {
        wline(&mut w, format_args!("{}", graph.user_name(u)))?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = writer(dir.join("truth_objects.txt"))?;
    for &o in &truth.fraud_objects {
        wline(&mut w, format_args!("{}", graph.object_name(o)))?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    if let Some(fraction) = config.label_fraction {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid("label fraction must be in [0, 1]"));
        }
        let sample = sample_labels(&truth, fraction, config.label_seed);
        let mut w = writer(dir.join("labels.txt"))?;
        for &u in &sample {
            wline(&mut w, format_args!("{}", graph.user_name(u)))?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
    }

    let json = serde_json::to_string_pretty(config)
        .map_err(|e| Error::Internal(format!("serialize inject manifest: {e}")))?;
    fs::write(dir.join("inject_manifest.json"), json).map_err(|e| Error::io(dir, e))?;
    Ok((graph, truth))
}

/// Deterministic sample of fraud users for semi-supervised runs.
pub fn sample_labels(truth: &GroundTruth, fraction: f64, seed: u64) -> Vec<UserId> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut users = truth.fraud_users.clone();
    users.shuffle(&mut rng);
    let take = ((users.len() as f64) * fraction).round() as usize;
    let mut sample: Vec<UserId> = users.into_iter().take(take).collect();
    sample.sort_unstable();
    sample
}

/// Evaluates a finished run directory against truth files; returns the
/// result and writes `eval.json` plus `sweep_objects.csv` when an output
/// directory is given.
pub fn run_eval(
    run_dir: impl AsRef<Path>,
    truth_users: impl AsRef<Path>,
    truth_objects: impl AsRef<Path>,
    out_dir: Option<&Path>,
) -> Result<EvalResult> {
    let run_dir = run_dir.as_ref();
    let object_scores = read_scores(run_dir.join("scores_objects.tsv"))?;
    let user_scores = read_scores(run_dir.join("scores_users.tsv"))?;
    let truth_user_keys = read_keys(truth_users.as_ref())?;
    let truth_object_keys = read_keys(truth_objects.as_ref())?;

    let (obj_scores, obj_truth) = align(&object_scores, &truth_object_keys);
    let (usr_scores, usr_truth) = align(&user_scores, &truth_user_keys);

    let auc_objects = eval::auc(&obj_scores, &obj_truth)?;
    let auc_users = eval::auc(&usr_scores, &usr_truth)?;
    let (f1_threshold_objects, best_f1_objects) = eval::best_f1(&obj_scores, &obj_truth)?;
    let (f1_threshold_users, best_f1_users) = eval::best_f1(&usr_scores, &usr_truth)?;

    // Fragmentation from the partition dump: distinct group ids over the
    // truth objects (a single planted set when truth comes from files).
    let partition = read_partition(run_dir.join("partition.tsv"))?;
    let truth_set: std::collections::HashSet<&str> =
        truth_object_keys.iter().map(String::as_str).collect();
    let fragments: std::collections::HashSet<u32> = partition
        .iter()
        .filter(|(key, _)| truth_set.contains(key.as_str()))
        .map(|&(_, g)| g)
        .collect();

    let manifest = fs::read_to_string(run_dir.join("manifest.json"))
        .ok()
        .and_then(|data| serde_json::from_str::<Manifest>(&data).ok());
    let (converged, runtime_ms) = manifest
        .map(|m| (m.stats.converged, m.timings_ms))
        .unwrap_or((false, BTreeMap::new()));

    let result = EvalResult {
        auc_objects,
        auc_users,
        best_f1_objects,
        best_f1_users,
        f1_threshold_objects,
        f1_threshold_users,
        num_fragments: vec![fragments.len()],
        converged,
        runtime_ms,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(&result)
            .map_err(|e| Error::Internal(format!("serialize eval: {e}")))?;
        fs::write(dir.join("eval.json"), json).map_err(|e| Error::io(dir, e))?;

        let rows = eval::sweep_table(&obj_scores, &obj_truth)?;
        let mut w = writer(dir.join("sweep_objects.csv"))?;
        wline(&mut w, format_args!("threshold,precision,recall,f1"))?;
        for r in rows {
            wline(
                &mut w,
                format_args!("{},{},{},{}", r.threshold, r.precision, r.recall, r.f1),
            )?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
    }
    Ok(result)
}

fn read_scores(path: PathBuf) -> Result<Vec<(String, f64)>> {
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('\t').ok_or_else(|| Error::MalformedRow {
            path: path.clone(),
            line: lineno + 1,
            msg: "expected key<TAB>score".into(),
        })?;
        let score: f64 = value.parse().map_err(|_| Error::MalformedRow {
            path: path.clone(),
            line: lineno + 1,
            msg: format!("unparsable score {value:?}"),
        })?;
        out.push((key.to_string(), score));
    }
    Ok(out)
}

fn read_keys(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let key = line.trim();
        if !key.is_empty() && !key.starts_with('#') {
            out.push(key.to_string());
        }
    }
    Ok(out)
}

fn read_partition(path: PathBuf) -> Result<Vec<(String, u32)>> {
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('\t').ok_or_else(|| Error::MalformedRow {
            path: path.clone(),
            line: lineno + 1,
            msg: "expected key<TAB>group".into(),
        })?;
        let group: u32 = value.parse().map_err(|_| Error::MalformedRow {
            path: path.clone(),
            line: lineno + 1,
            msg: format!("unparsable group id {value:?}"),
        })?;
        out.push((key.to_string(), group));
    }
    Ok(out)
}

fn align(scores: &[(String, f64)], truth_keys: &[String]) -> (Vec<f64>, Vec<bool>) {
    let truth_set: std::collections::HashSet<&str> =
        truth_keys.iter().map(String::as_str).collect();
    let mut values: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let mut flags: Vec<bool> = scores
        .iter()
        .map(|(k, _)| truth_set.contains(k.as_str()))
        .collect();
    // Truth entities absent from the run (for example pruned away) stay
    // in the population, unflagged by the detector.
    let scored: std::collections::HashSet<&str> = scores.iter().map(|(k, _)| k.as_str()).collect();
    for key in truth_keys {
        if !scored.contains(key.as_str()) {
            values.push(0.0);
            flags.push(true);
        }
    }
    (values, flags)
}

/// One sweep cell: a planted group configuration times a clustering
/// criterion times a seed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub theta: f64,
    pub camouflage: String,
    pub criterion: String,
    pub seed: u64,
    pub auc_objects: f64,
    pub auc_users: f64,
    pub best_f1_objects: f64,
    pub best_f1_users: f64,
    pub fragments: usize,
    pub converged: bool,
}

/// Configuration of a sweep over synchrony, camouflage budget and
/// clustering criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub background: BackgroundSource,
    pub group_users: usize,
    pub group_objects: usize,
    pub rhos: Vec<f64>,
    /// Explicit camouflage budgets; when empty, `theta = rho * objects`.
    pub thetas: Vec<f64>,
    pub camouflage: Vec<crate::inject::CamouflageKind>,
    pub criteria: Vec<UpdateCriterion>,
    pub seeds: Vec<u64>,
    pub min_outdeg: u32,
    pub workers: usize,
    pub out_dir: PathBuf,
}

/// Runs the cartesian product and writes `sweep.csv` (per run) plus
/// `sweep_summary.csv` (means per cell).
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    let background = config.background.load()?;
    let mut rows = Vec::new();
    let thetas: Vec<Option<f64>> = if config.thetas.is_empty() {
        vec![None]
    } else {
        config.thetas.iter().copied().map(Some).collect()
    };

    for &rho in &config.rhos {
        for theta in &thetas {
            let theta = theta.unwrap_or_else(|| (rho * config.group_objects as f64).round());
            for &camo in &config.camouflage {
                for &seed in &config.seeds {
                    let spec = InjectionSpec {
                        n_users: config.group_users,
                        n_objects: config.group_objects,
                        rho,
                        theta,
                        camouflage: camo,
                        seed,
                        jitter: false,
                    };
                    let (graph, truth) = inject::inject(&background, &spec)?;
                    for &criterion in &config.criteria {
                        let artifacts = detect(
                            graph.clone(),
                            &DetectParams {
                                criterion,
                                min_outdeg: config.min_outdeg,
                                workers: config.workers,
                                ..Default::default()
                            },
                        )?;
                        let result = evaluate_detection(&artifacts, &truth)?;
                        rows.push(SweepRow {
                            rho,
                            theta,
                            camouflage: camo.to_string(),
                            criterion: criterion.to_string(),
                            seed,
                            auc_objects: result.auc_objects,
                            auc_users: result.auc_users,
                            best_f1_objects: result.best_f1_objects,
                            best_f1_users: result.best_f1_users,
                            fragments: result.num_fragments[0],
                            converged: result.converged,
                        });
                    }
                }
            }
        }
    }

    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(config)
        .map_err(|e| Error::Internal(format!("serialize sweep manifest: {e}")))?;
    fs::write(dir.join("sweep_manifest.json"), json).map_err(|e| Error::io(dir, e))?;
    let mut w = writer(dir.join("sweep.csv"))?;
    wline(
        &mut w,
        format_args!(
            "rho,theta,camouflage,criterion,seed,auc_objects,auc_users,best_f1_objects,best_f1_users,fragments,converged"
        ),
    )?;
    for r in &rows {
        wline(
            &mut w,
            format_args!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.rho,
                r.theta,
                r.camouflage,
                r.criterion,
                r.seed,
                r.auc_objects,
                r.auc_users,
                r.best_f1_objects,
                r.best_f1_users,
                r.fragments,
                r.converged
            ),
        )?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    // Mean per cell, seeds collapsed.
    let mut cells: BTreeMap<String, (usize, f64, f64, f64, f64, f64)> = BTreeMap::new();
    for r in &rows {
        let key = format!("{},{},{},{}", r.rho, r.theta, r.camouflage, r.criterion);
        let cell = cells.entry(key).or_insert((0, 0.0, 0.0, 0.0, 0.0, 0.0));
        cell.0 += 1;
        cell.1 += r.auc_objects;
        cell.2 += r.auc_users;
        cell.3 += r.best_f1_objects;
        cell.4 += r.best_f1_users;
        cell.5 += r.fragments as f64;
    }
    let mut w = writer(dir.join("sweep_summary.csv"))?;
    wline(
        &mut w,
        format_args!(
            "rho,theta,camouflage,criterion,runs,auc_objects,auc_users,best_f1_objects,best_f1_users,fragments"
        ),
    )?;
    for (key, (n, a, b, c, d, e)) in cells {
        let n_f = n as f64;
        wline(
            &mut w,
            format_args!(
                "{},{},{},{},{},{},{}",
                key,
                n,
                a / n_f,
                b / n_f,
                c / n_f,
                d / n_f,
                e / n_f
            ),
        )?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    Ok(rows)
}

fn ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

fn writer(path: PathBuf) -> Result<BufWriter<File>> {
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(BufWriter::new(file))
}

fn wline(w: &mut BufWriter<File>, args: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(w, "{args}").map_err(|e| Error::Internal(format!("write failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_round_trips_losslessly() {
        let config = RunConfig {
            edges: PathBuf::from("/tmp/edges.tsv"),
            labels: Some(PathBuf::from("/tmp/labels.txt")),
            delimiter: ',',
            attr_widths: vec![3600.0, 1.0],
            prune: Some(PruneCutoff::Quantile(0.995)),
            criterion: UpdateCriterion::TopK(3),
            max_iters: Some(50),
            strict_topk: true,
            min_outdeg: 2,
            top_k: Some(10),
            hub_guard: 5_000,
            workers: 4,
            seed: 99,
            out_dir: PathBuf::from("/tmp/out"),
            dump_osg: true,
        };
        let json = serde_json::to_string(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }
}
