//! Command-line front end: ingest, inject, detect, evaluate and sweep.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groupsift::bipartite::{BipartiteGraph, IngestOptions, PruneCutoff};
use groupsift::inject::{CamouflageKind, InjectionSpec};
use groupsift::labelprop::UpdateCriterion;
use groupsift::osg::{build_osg, OsgOptions};
use groupsift::pipeline::{self, BackgroundSource, InjectConfig, RunConfig, SweepConfig};
use groupsift::Error;

const ENV_OUT_DIR: &str = "GROUPSIFT_OUT_DIR";
const ENV_WORKERS: &str = "GROUPSIFT_WORKERS";

#[derive(Parser)]
#[command(
    name = "groupsift",
    about = "Detect coordinated groups in user-object interaction logs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the object similarity graph and dump it as TSV.
    BuildOsg(BuildOsgArgs),
    /// Run the full detection pipeline and write report files.
    Detect(DetectArgs),
    /// Generate a background graph with planted fraud groups.
    Inject(InjectArgs),
    /// Score a finished run directory against ground-truth files.
    Eval(EvalArgs),
    /// Cartesian sweep over synchrony, camouflage and criteria.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Edge file: user<TAB>object[<TAB>attr...]
    #[arg(long)]
    edges: PathBuf,
    /// Column delimiter.
    #[arg(long, default_value = "\t")]
    delimiter: char,
    /// Comma-separated bucket widths, one per attribute column.
    #[arg(long, value_delimiter = ',')]
    attr_widths: Vec<f64>,
}

#[derive(Args)]
struct BuildOsgArgs {
    #[command(flatten)]
    ingest: IngestArgs,
    /// Label file, one user key per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    hub_guard: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output TSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Rerun the exact configuration stored in a run manifest.
    #[arg(long, conflicts_with_all = ["edges", "labels"])]
    from_manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "from_manifest")]
    edges: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "\t")]
    delimiter: char,
    #[arg(long, value_delimiter = ',')]
    attr_widths: Vec<f64>,
    /// Remove objects with in-degree above this absolute cutoff.
    #[arg(long, conflicts_with = "prune_quantile")]
    prune_deg: Option<u32>,
    /// Remove objects above this in-degree quantile, in (0, 1].
    #[arg(long)]
    prune_quantile: Option<f64>,
    /// Clustering criterion: lpa, sum, max or topk.
    #[arg(long, default_value = "topk")]
    criterion: String,
    /// K for the topk criterion.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Require at least K edges behind a label instead of summing fewer.
    #[arg(long)]
    strict_topk: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Drop extracted users touching fewer group members than this.
    #[arg(long, default_value_t = 3)]
    min_outdeg: u32,
    /// Extract users only for the strongest N groups.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    hub_guard: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the similarity graph as osg.tsv.
    #[arg(long)]
    dump_osg: bool,
}

#[derive(Args)]
struct InjectArgs {
    /// Use an existing edge file as background.
    #[arg(long, conflicts_with_all = ["bg_users", "bg_objects", "bg_edges"])]
    background: Option<PathBuf>,
    #[arg(long, default_value = "\t")]
    delimiter: char,
    #[arg(long, default_value_t = 10_000)]
    bg_users: usize,
    #[arg(long, default_value_t = 2_000)]
    bg_objects: usize,
    #[arg(long, default_value_t = 53_000)]
    bg_edges: usize,
    /// Zipf exponent of background object in-degrees (0 = uniform).
    #[arg(long, default_value_t = 1.0)]
    bg_skew: f64,
    #[arg(long, default_value_t = 0)]
    bg_seed: u64,
    /// Planted group, e.g.
    /// "users=200,objects=50,rho=0.3,theta=15,camo=random,seed=1".
    #[arg(long = "group")]
    groups: Vec<String>,
    /// Shortcut: plant the five-group profile (one kind of camouflage
    /// per group) derived from this seed.
    #[arg(long)]
    five_groups: Option<u64>,
    /// Also write a labels file sampling this fraction of fraud users.
    #[arg(long)]
    label_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    label_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory produced by `detect`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    truth_users: PathBuf,
    #[arg(long)]
    truth_objects: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 10_000)]
    bg_users: usize,
    #[arg(long, default_value_t = 2_000)]
    bg_objects: usize,
    #[arg(long, default_value_t = 53_000)]
    bg_edges: usize,
    #[arg(long, default_value_t = 1.0)]
    bg_skew: f64,
    #[arg(long, default_value_t = 0)]
    bg_seed: u64,
    #[arg(long, default_value_t = 200)]
    group_users: usize,
    #[arg(long, default_value_t = 50)]
    group_objects: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    rhos: Vec<f64>,
    /// Camouflage budgets; defaults to theta = rho * objects.
    #[arg(long, value_delimiter = ',')]
    thetas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "random")]
    camo: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "topk")]
    criteria: Vec<String>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 3)]
    min_outdeg: u32,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Io { .. } | Error::MalformedRow { .. } | Error::InvalidInput(_) => 2,
                Error::Internal(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::BuildOsg(args) => cmd_build_osg(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Inject(args) => cmd_inject(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn env_workers(cli_value: usize) -> usize {
    std::env::var(ENV_WORKERS)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(cli_value)
}

fn resolve_out(cli_value: Option<PathBuf>) -> Result<PathBuf, Error> {
    cli_value
        .or_else(|| std::env::var(ENV_OUT_DIR).ok().map(PathBuf::from))
        .ok_or_else(|| Error::InvalidInput(format!("--out or {ENV_OUT_DIR} required")))
}

fn parse_criterion(name: &str, k: usize) -> Result<UpdateCriterion, Error> {
    match name {
        "lpa" => Ok(UpdateCriterion::Lpa),
        "sum" => Ok(UpdateCriterion::Sum),
        "max" => Ok(UpdateCriterion::Max),
        "topk" => {
            if k == 0 {
                return Err(Error::InvalidInput("K must be at least 1".into()));
            }
            Ok(UpdateCriterion::TopK(k))
        }
        other => Err(Error::InvalidInput(format!(
            "unknown criterion {other:?} (expected lpa, sum, max or topk)"
        ))),
    }
}

fn cmd_build_osg(args: BuildOsgArgs) -> Result<(), Error> {
    let mut graph = BipartiteGraph::ingest_edges(
        &args.ingest.edges,
        &IngestOptions {
            delimiter: args.ingest.delimiter,
            attr_widths: args.ingest.attr_widths.clone(),
        },
    )?;
    if let Some(labels) = &args.labels {
        let summary = graph.load_labels(labels)?;
        println!(
            "labels: {} matched, {} unknown",
            summary.matched,
            summary.unknown.len()
        );
    }
    let osg = build_osg(
        &graph,
        &OsgOptions {
            hub_guard: args.hub_guard,
            workers: env_workers(args.workers),
        },
    )?;
    let file = std::fs::File::create(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let mut w = std::io::BufWriter::new(file);
    osg.write_tsv(&graph, &mut w).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    println!(
        "osg: {} objects, {} edges -> {}",
        osg.num_objects(),
        osg.num_edges(),
        args.out.display()
    );
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> Result<(), Error> {
    let mut config = if let Some(manifest) = &args.from_manifest {
        pipeline::config_from_manifest(manifest)?
    } else {
        let prune = match (args.prune_deg, args.prune_quantile) {
            (Some(d), None) => Some(PruneCutoff::Absolute(d)),
            (None, Some(q)) => Some(PruneCutoff::Quantile(q)),
            (None, None) => None,
            (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        };
        RunConfig {
            edges: args.edges.clone().expect("required by clap"),
            labels: args.labels.clone(),
            delimiter: args.delimiter,
            attr_widths: args.attr_widths.clone(),
            prune,
            criterion: parse_criterion(&args.criterion, args.k)?,
            max_iters: args.max_iters,
            strict_topk: args.strict_topk,
            min_outdeg: args.min_outdeg,
            top_k: args.top_k,
            hub_guard: args.hub_guard,
            workers: args.workers,
            seed: args.seed,
            out_dir: PathBuf::new(),
            dump_osg: args.dump_osg,
        }
    };
    if args.from_manifest.is_none() || args.out.is_some() {
        config.out_dir = resolve_out(args.out)?;
    }
    config.workers = env_workers(config.workers);

    let artifacts = pipeline::run_detect(&config)?;
    println!(
        "detect: {} objects in {} groups ({} iterations, converged: {}) -> {}",
        artifacts.graph.num_objects(),
        artifacts.partition.groups.len(),
        artifacts.partition.iterations_run,
        artifacts.partition.converged,
        config.out_dir.display()
    );
    for r in artifacts.reports.iter().take(5) {
        println!(
            "  group {}: f={:.4} size={} users={}",
            r.group_id,
            r.f,
            r.members.len(),
            r.users.len()
        );
    }
    Ok(())
}

fn parse_group_spec(text: &str) -> Result<InjectionSpec, Error> {
    let mut spec = InjectionSpec {
        n_users: 0,
        n_objects: 0,
        rho: 0.0,
        theta: 0.0,
        camouflage: CamouflageKind::None,
        seed: 0,
        jitter: false,
    };
    for part in text.split(',') {
        let part = part.trim();
        if part == "jitter" {
            spec.jitter = true;
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("bad group field {part:?}")))?;
        let bad = || Error::InvalidInput(format!("bad value in group field {part:?}"));
        match key {
            "users" => spec.n_users = value.parse().map_err(|_| bad())?,
            "objects" => spec.n_objects = value.parse().map_err(|_| bad())?,
            "rho" => spec.rho = value.parse().map_err(|_| bad())?,
            "theta" => spec.theta = value.parse().map_err(|_| bad())?,
            "camo" => spec.camouflage = value.parse()?,
            "seed" => spec.seed = value.parse().map_err(|_| bad())?,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown group field {other:?}"
                )))
            }
        }
    }
    Ok(spec)
}

fn cmd_inject(args: InjectArgs) -> Result<(), Error> {
    let background = if let Some(path) = &args.background {
        BackgroundSource::File {
            path: path.clone(),
            delimiter: args.delimiter,
        }
    } else {
        BackgroundSource::Generate {
            users: args.bg_users,
            objects: args.bg_objects,
            edges: args.bg_edges,
            skew: args.bg_skew,
            seed: args.bg_seed,
        }
    };
    let mut groups: Vec<InjectionSpec> = args
        .groups
        .iter()
        .map(|g| parse_group_spec(g))
        .collect::<Result<_, _>>()?;
    if let Some(seed) = args.five_groups {
        groups.extend(groupsift::inject::five_group_specs(seed));
    }
    if groups.is_empty() {
        return Err(Error::InvalidInput(
            "at least one --group (or --five-groups) required".into(),
        ));
    }
    let config = InjectConfig {
        background,
        groups,
        label_fraction: args.label_fraction,
        label_seed: args.label_seed,
        out_dir: resolve_out(args.out)?,
    };
    let (graph, truth) = pipeline::run_inject(&config)?;
    println!(
        "inject: {} users / {} objects / {} edges, {} fraud users, {} fraud objects -> {}",
        graph.num_users(),
        graph.num_objects(),
        graph.num_edges(),
        truth.fraud_users.len(),
        truth.fraud_objects.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let out = args.out.clone().or_else(|| Some(args.run.clone()));
    let result = pipeline::run_eval(
        &args.run,
        &args.truth_users,
        &args.truth_objects,
        out.as_deref(),
    )?;
    let json = serde_json::to_string_pretty(&result)
        .map_err(|e| Error::Internal(format!("serialize eval: {e}")))?;
    println!("{json}");
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let criteria = args
        .criteria
        .iter()
        .map(|c| parse_criterion(c, args.k))
        .collect::<Result<Vec<_>, _>>()?;
    let camouflage = args
        .camo
        .iter()
        .map(|c| c.parse())
        .collect::<Result<Vec<CamouflageKind>, _>>()?;
    let config = SweepConfig {
        background: BackgroundSource::Generate {
            users: args.bg_users,
            objects: args.bg_objects,
            edges: args.bg_edges,
            skew: args.bg_skew,
            seed: args.bg_seed,
        },
        group_users: args.group_users,
        group_objects: args.group_objects,
        rhos: args.rhos.clone(),
        thetas: args.thetas.clone(),
        camouflage,
        criteria,
        seeds: args.seeds.clone(),
        min_outdeg: args.min_outdeg,
        workers: env_workers(args.workers),
        out_dir: resolve_out(args.out)?,
    };
    let rows = pipeline::run_sweep(&config)?;
    println!("sweep: {} runs -> {}", rows.len(), config.out_dir.display());
    Ok(())
}
