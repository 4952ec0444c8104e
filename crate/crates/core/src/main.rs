use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use infattack::attack::{
    build_candidates, plan_with_labels, resolve_labels, AttackConfig, AttackMode,
};
use infattack::data::{
    edge_homophily, generate_sbm, load_bundle_with_report, pick_target_label, sample_split,
    save_bundle, SbmParams, SplitConfig,
};
use infattack::graph::{norm_adj_power_row, Graph};
use infattack::harness::{bench_influence, run_sweep, train_victim, ExperimentConfig};
use infattack::influence::{
    approx_constant, approx_delta, label_influence_dfs, label_influence_exact, objective_dfs,
    objective_exact, Direction, InfluenceBreakdown, InfluenceQuery, LabelSource,
};
use infattack::victim::{argmax, dense_features, SgcModel, TrainConfig, Victim};
use infattack::{Error, ErrorKind, Topology};

#[derive(Parser)]
#[command(name = "infattack", version, about = "Influence-based targeted evasion attacks on graph node classifiers")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (or file, for single-artifact commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan an attack on one target and print the plan as JSON.
    Attack(AttackArgs),
    /// Run a budget sweep over many targets from a config file.
    Sweep(SweepArgs),
    /// Print influence values for a (v, u, k) query.
    Influence(InfluenceArgs),
    /// Train an SGC victim and save it.
    TrainVictim(TrainArgs),
    /// Generate a stochastic block model bundle.
    GenSbm(SbmArgs),
    /// Print bundle statistics.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Approx,
    Exact,
}

impl From<ModeArg> for AttackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Approx => AttackMode::Approx,
            ModeArg::Exact => AttackMode::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelsArg {
    True,
    Estimated,
}

impl From<LabelsArg> for LabelSource {
    fn from(l: LabelsArg) -> Self {
        match l {
            LabelsArg::True => LabelSource::TrueLabels,
            LabelsArg::Estimated => LabelSource::EstimatedLabels,
        }
    }
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Target node, by name or id.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 1)]
    budget: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, value_enum, default_value = "approx")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "true")]
    labels: LabelsArg,
    /// Target class; defaults to the victim's second most probable class.
    #[arg(long)]
    target_label: Option<usize>,
    /// Trained model file; otherwise a victim is trained on all labeled nodes.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Keep toggling after the victim flips.
    #[arg(long)]
    no_early_stop: bool,
    #[arg(long)]
    require_positive_gain: bool,
    #[arg(long)]
    candidate_cap: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Also time approximate against exact planning and write bench.json.
    #[arg(long)]
    bench: bool,
}

#[derive(Args)]
struct InfluenceArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    v: String,
    #[arg(long)]
    u: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Class `c`; defaults to the lowest class other than v's.
    #[arg(long)]
    target_label: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Training nodes sampled per class; 0 trains on every labeled node.
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
}

#[derive(Args)]
struct SbmArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 250)]
    per_class: usize,
    #[arg(long, default_value_t = 0.03)]
    p_in: f64,
    #[arg(long, default_value_t = 0.002)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 4.25)]
    noise: f64,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    bundle: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Runtime => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(v)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        // A closed reader (e.g. `| head`) is not an error for us.
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Data(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.cmd {
        Cmd::Attack(a) => attack(cli, a),
        Cmd::Sweep(s) => sweep(cli, s),
        Cmd::Influence(i) => influence(i),
        Cmd::TrainVictim(t) => train(cli, t),
        Cmd::GenSbm(s) => gen_sbm(cli, s),
        Cmd::Inspect(i) => inspect(i),
    }
}

fn load(dir: &Path) -> Result<Graph, Error> {
    let (g, report) = load_bundle_with_report(dir)?;
    if report.duplicate_edges > 0 {
        log::info!("{} duplicate edges dropped", report.duplicate_edges);
    }
    Ok(g)
}

fn all_labeled(g: &Graph) -> Vec<usize> {
    (0..g.num_nodes()).filter(|&u| g.label(u).is_some()).collect()
}

fn attack(cli: &Cli, a: &AttackArgs) -> Result<(), Error> {
    let g = load(&a.bundle)?;
    let v = g.resolve_node(&a.target)?;
    let victim = match &a.model {
        Some(path) => {
            let model = SgcModel::load(path)?;
            if model.depth != a.k {
                log::warn!("model depth {} differs from --k {}", model.depth, a.k);
            }
            Victim::new(model, &g, dense_features(&g).view())?
        }
        None => {
            let cfg = TrainConfig {
                seed: cli.seed.unwrap_or(0),
                ..TrainConfig::default()
            };
            train_victim(&g, a.k, &all_labeled(&g), &cfg)?
        }
    };
    let source = LabelSource::from(a.labels);
    let probs = victim.clean_probabilities();
    let own = match source {
        LabelSource::TrueLabels => g.label(v).ok_or(Error::MissingLabel(v))?,
        LabelSource::EstimatedLabels => argmax(probs.row(v)),
    };
    let c = match a.target_label {
        Some(c) if c >= g.num_classes() => {
            return Err(Error::InvalidArgument(format!("class {c} out of range")))
        }
        Some(c) => c,
        None => pick_target_label(&probs.row(v).to_vec(), own)?,
    };
    let labels = resolve_labels(&g, Some(&victim), source)?;
    let cfg = AttackConfig {
        budget: a.budget,
        mode: a.mode.into(),
        early_stop: !a.no_early_stop,
        require_positive_gain: a.require_positive_gain,
        candidate_cap: a.candidate_cap,
    };
    let plan = plan_with_labels(&g, &victim, &labels, v, c, own, a.k, source, &cfg)?;
    if let Some(out) = &cli.out {
        write_json(out, &plan)?;
    }
    print_json(&plan)
}

fn sweep(cli: &Cli, s: &SweepArgs) -> Result<(), Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("sweep needs --config".into()))?;
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let result = run_sweep(&cfg, Some(&out))?;
    if s.bench {
        let report = bench_influence(&cfg)?;
        write_json(&out.join("bench.json"), &report)?;
    }
    print_json(&result.summary)
}

fn influence(i: &InfluenceArgs) -> Result<(), Error> {
    let g = load(&i.bundle)?;
    let v = g.resolve_node(&i.v)?;
    let u = g.resolve_node(&i.u)?;
    let exact = label_influence_exact(&g, v, u, i.k)?;
    let matrix = norm_adj_power_row(&g, v, i.k)?[u];
    // Per-pair DFS: only `u` carries the target label.
    let mut only_u = vec![None; g.num_nodes()];
    let mut out = json!({
        "v": g.node_label_str(v),
        "u": g.node_label_str(u),
        "k": i.k,
        "exact": exact,
        "matrix": matrix,
    });
    let Some(own) = g.label(v) else {
        return print_json(&out);
    };
    let c = match i.target_label {
        Some(c) => c,
        None => (0..g.num_classes()).find(|&c| c != own).ok_or_else(|| {
            Error::InvalidArgument("need at least two classes".into())
        })?,
    };
    only_u[u] = Some(c);
    let q_single = InfluenceQuery::new(v, c, own, i.k, LabelSource::EstimatedLabels)?;
    out["dfs"] = json!(label_influence_dfs(&g, v, i.k, &only_u, &q_single)?.toward_target);

    let q = InfluenceQuery::new(v, c, own, i.k, LabelSource::TrueLabels)?;
    let labels = g.labels();
    let mut objective = json!({
        "target_label": c,
        "own_label": own,
        "exact": objective_exact(&g, labels, &q)?,
        "dfs": objective_dfs(&g, labels, &q)?,
        "approx_constant_add": approx_constant(&g, labels, &q, Direction::Add)?,
    });
    if g.degree(v) > 2 {
        objective["approx_constant_delete"] = json!(approx_constant(&g, labels, &q, Direction::Delete)?);
    }
    out["objective"] = objective;

    let cands = build_candidates(&g, labels, &q, None)?;
    let dir = if cands.add_candidates.contains(&u) {
        Some(Direction::Add)
    } else if cands.delete_candidates.contains(&u) && g.degree(v) > 2 {
        Some(Direction::Delete)
    } else {
        None
    };
    if let Some(dir) = dir {
        let b = InfluenceBreakdown {
            constant: approx_constant(&g, labels, &q, dir)?,
            delta: approx_delta(&g, labels, &q, u, dir)?,
            candidate: u,
            direction: dir,
        };
        out["candidate"] = json!({
            "direction": dir,
            "constant": b.constant,
            "delta": b.delta,
            "gain": b.gain(),
        });
    }
    print_json(&out)
}

fn train(cli: &Cli, t: &TrainArgs) -> Result<(), Error> {
    let g = load(&t.bundle)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        lr: t.lr.unwrap_or(defaults.lr),
        epochs: t.epochs.unwrap_or(defaults.epochs),
        l2: t.l2.unwrap_or(defaults.l2),
        seed: cli.seed.unwrap_or(0),
        ..defaults
    };
    let (train_ids, victim) = if t.per_class == 0 {
        let ids = all_labeled(&g);
        let v = train_victim(&g, t.k, &ids, &cfg)?;
        (ids, v)
    } else {
        // Targets are irrelevant here; ask for one so the split is valid.
        let split = SplitConfig {
            per_class: t.per_class,
            num_targets: 1,
        };
        let (s, v) = sample_split(&g, split, cfg.seed, |ids| train_victim(&g, t.k, ids, &cfg))?;
        (s.train_ids, v)
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("model.json"));
    victim.model.save(&out)?;
    let unseen: Vec<usize> = (0..g.num_nodes()).filter(|u| train_ids.binary_search(u).is_err()).collect();
    print_json(&json!({
        "model": out,
        "depth": t.k,
        "train_nodes": train_ids.len(),
        "train_accuracy": victim.accuracy(&train_ids, g.labels()),
        "unseen_accuracy": victim.accuracy(&unseen, g.labels()),
        "final_loss": victim.model.train_meta.as_ref().map(|m| m.final_loss),
    }))
}

fn gen_sbm(cli: &Cli, s: &SbmArgs) -> Result<(), Error> {
    let params = SbmParams {
        classes: s.classes,
        per_class: s.per_class,
        p_in: s.p_in,
        p_out: s.p_out,
        feature_dim: s.feature_dim,
        noise: s.noise,
        seed: cli.seed.unwrap_or(0),
    };
    let g = generate_sbm(&params)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(g.name()));
    save_bundle(&g, &out, None)?;
    print_json(&json!({
        "bundle": out,
        "num_nodes": g.num_nodes(),
        "num_edges": g.num_edges(),
        "homophily": edge_homophily(&g),
    }))
}

fn inspect(i: &InspectArgs) -> Result<(), Error> {
    let (g, report) = load_bundle_with_report(&i.bundle)?;
    let n = g.num_nodes();
    let mut class_counts = vec![0usize; g.num_classes()];
    for c in g.labels().iter().flatten() {
        class_counts[*c] += 1;
    }
    let degrees: Vec<usize> = (0..n).map(|u| g.degree(u) - 1).collect();
    print_json(&json!({
        "name": g.name(),
        "num_nodes": n,
        "num_edges": g.num_edges(),
        "num_classes": g.num_classes(),
        "num_features": g.features().map_or(0, |f| f.dim()),
        "labeled": class_counts.iter().sum::<usize>(),
        "class_counts": class_counts,
        "mean_degree": if n == 0 { 0.0 } else { degrees.iter().sum::<usize>() as f64 / n as f64 },
        "max_degree": degrees.iter().max().copied().unwrap_or(0),
        "isolated": degrees.iter().filter(|&&d| d == 0).count(),
        "homophily": edge_homophily(&g),
        "duplicate_edges_dropped": report.duplicate_edges,
        "has_split": report.split.is_some(),
    }))
}
