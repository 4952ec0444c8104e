//! Experiment orchestration: budget sweeps over many targets, result files,
//! and approximate-versus-exact timing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    plan_with_labels, resolve_labels, AttackConfig, AttackMode, AttackPlan,
};
use crate::data::{
    generate_sbm, load_bundle_with_report, pick_target_label, sample_split, ExperimentSplit,
    SbmParams, SplitConfig,
};
use crate::error::{Error, Result};
use crate::graph::{ClassId, Graph, NodeId, Topology};
use crate::influence::{LabelSource, MAX_DEPTH};
use crate::victim::{dense_features, sgc_propagate, sgc_train, NodeClassifier, TrainConfig, Victim};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Column order of `results.csv`.
pub const RESULT_COLUMNS: [&str; 10] = [
    "target",
    "target_label",
    "budget",
    "success",
    "edges_added",
    "edges_removed",
    "final_margin",
    "wall_time_ms",
    "mode",
    "label_source",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundle directory; mutually exclusive with `sbm`.
    pub bundle: Option<PathBuf>,
    pub sbm: Option<SbmParams>,
    pub k: usize,
    pub budgets: Vec<usize>,
    pub mode: AttackMode,
    pub label_source: LabelSource,
    pub seed: u64,
    pub workers: usize,
    pub victim: TrainConfig,
    pub early_stop: bool,
    pub require_positive_gain: bool,
    pub candidate_cap: Option<usize>,
    pub n_per_class: usize,
    pub n_targets: usize,
    /// Also write one JSON plan per target under `plans/`.
    pub write_plans: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            bundle: None,
            sbm: None,
            k: 2,
            budgets: (1..=6).collect(),
            mode: AttackMode::Approx,
            label_source: LabelSource::EstimatedLabels,
            seed: 0,
            workers: 1,
            victim: TrainConfig::default(),
            early_stop: true,
            require_positive_gain: false,
            candidate_cap: None,
            n_per_class: 20,
            n_targets: 100,
            write_plans: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match (&self.bundle, &self.sbm) {
            (Some(_), Some(_)) => return bad("set either bundle or sbm, not both".into()),
            (None, None) => return bad("config needs a bundle or sbm section".into()),
            _ => {}
        }
        if self.k == 0 || self.k > MAX_DEPTH {
            return bad(format!("k must be in 1..={MAX_DEPTH}"));
        }
        if self.budgets.is_empty() || self.budgets[0] == 0 {
            return bad("budgets must be non-empty positive integers".into());
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad("budgets must be strictly increasing".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.n_targets == 0 || self.n_per_class == 0 {
            return bad("n_targets and n_per_class must be positive".into());
        }
        Ok(())
    }

    pub fn max_budget(&self) -> usize {
        *self.budgets.last().expect("validated non-empty")
    }

    fn attack_config(&self, mode: AttackMode) -> AttackConfig {
        AttackConfig {
            budget: self.max_budget(),
            mode,
            early_stop: self.early_stop,
            require_positive_gain: self.require_positive_gain,
            candidate_cap: self.candidate_cap,
        }
    }

    pub fn load_graph(&self) -> Result<Graph> {
        match (&self.bundle, &self.sbm) {
            (Some(dir), _) => Ok(load_bundle_with_report(dir)?.0),
            (None, Some(p)) => generate_sbm(p),
            (None, None) => Err(Error::InvalidArgument("no graph source".into())),
        }
    }
}

/// Trains an SGC victim of depth `k` on `train_ids` and binds it to `g`.
pub fn train_victim(g: &Graph, k: usize, train_ids: &[NodeId], cfg: &TrainConfig) -> Result<Victim> {
    let x = dense_features(g);
    let h = sgc_propagate(g, x.view(), k)?;
    let model = sgc_train(h.view(), k, train_ids, g.labels(), g.num_classes(), cfg)?;
    Victim::new(model, g, x.view())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub target: NodeId,
    pub target_label: ClassId,
    pub budget: usize,
    pub success: bool,
    pub edges_added: usize,
    pub edges_removed: usize,
    pub final_margin: f64,
    /// Planning time of the whole plan the row was read from.
    pub wall_time_ms: f64,
    pub mode: AttackMode,
    pub label_source: LabelSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub budget: usize,
    pub targets: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_time_ms: f64,
    pub median_time_ms: f64,
    pub attack_edges: usize,
    /// Added edges over all attack edges; absent when no edge was toggled.
    pub added_edge_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub dataset: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub k: usize,
    pub mode: AttackMode,
    pub label_source: LabelSource,
    pub seed: u64,
    pub num_targets: usize,
    pub victim_train_accuracy: f64,
    pub victim_accuracy_unseen: f64,
    /// Fraction of labeled nodes whose estimated label matches the stored one.
    pub label_agreement: f64,
    pub per_budget: Vec<BudgetSummary>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub summary: SweepSummary,
    pub plans: Vec<AttackPlan>,
    pub split: ExperimentSplit,
}

/// Everything a sweep needs before planning: graph, victim, split, labels.
pub struct Prepared {
    pub graph: Graph,
    pub victim: Victim,
    pub split: ExperimentSplit,
    pub attacker_labels: Vec<Option<ClassId>>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let graph = cfg.load_graph()?;
    let split_cfg = SplitConfig {
        per_class: cfg.n_per_class,
        num_targets: cfg.n_targets,
    };
    let (split, victim) = sample_split(&graph, split_cfg, cfg.seed, |train| {
        train_victim(&graph, cfg.k, train, &cfg.victim)
    })?;
    let attacker_labels = resolve_labels(&graph, Some(&victim), cfg.label_source)?;
    Ok(Prepared {
        graph,
        victim,
        split,
        attacker_labels,
    })
}

fn plan_target(p: &Prepared, cfg: &ExperimentConfig, v: NodeId, mode: AttackMode) -> Result<AttackPlan> {
    let probs = p.victim.clean_probabilities();
    let own = match cfg.label_source {
        LabelSource::TrueLabels => p.graph.label(v).ok_or(Error::MissingLabel(v))?,
        LabelSource::EstimatedLabels => crate::victim::argmax(probs.row(v)),
    };
    let row: Vec<f64> = probs.row(v).to_vec();
    let c = pick_target_label(&row, own)?;
    plan_with_labels(
        &p.graph,
        &p.victim,
        &p.attacker_labels,
        v,
        c,
        own,
        cfg.k,
        cfg.label_source,
        &cfg.attack_config(mode),
    )
}

fn plan_all(p: &Prepared, cfg: &ExperimentConfig) -> Result<Vec<Result<AttackPlan>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        p.split
            .target_ids
            .par_iter()
            .map(|&v| plan_target(p, cfg, v, cfg.mode))
            .collect()
    }))
}

pub fn rows_for_plan(plan: &AttackPlan, budgets: &[usize]) -> Vec<ResultRow> {
    budgets
        .iter()
        .map(|&b| {
            let o = plan.prefix(b);
            ResultRow {
                target: plan.target,
                target_label: plan.target_label,
                budget: b,
                success: o.success,
                edges_added: o.edges_added,
                edges_removed: o.edges_removed,
                final_margin: o.margin,
                wall_time_ms: plan.wall_time_ms,
                mode: plan.mode,
                label_source: plan.label_source,
            }
        })
        .collect()
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

pub fn summarize_budgets(rows: &[ResultRow], budgets: &[usize]) -> Vec<BudgetSummary> {
    budgets
        .iter()
        .map(|&b| {
            let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.budget == b).collect();
            let n = sel.len();
            let successes = sel.iter().filter(|r| r.success).count();
            let mut times: Vec<f64> = sel.iter().map(|r| r.wall_time_ms).collect();
            let added: usize = sel.iter().map(|r| r.edges_added).sum();
            let edges = added + sel.iter().map(|r| r.edges_removed).sum::<usize>();
            BudgetSummary {
                budget: b,
                targets: n,
                successes,
                success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
                mean_time_ms: if n == 0 { 0.0 } else { times.iter().sum::<f64>() / n as f64 },
                median_time_ms: median(&mut times),
                attack_edges: edges,
                added_edge_fraction: (edges > 0).then(|| added as f64 / edges as f64),
            }
        })
        .collect()
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Runs one full-budget plan per target and reads every budget as a prefix.
/// With `out`, writes `results.csv`, `summary.json` and optionally plans;
/// rows of completed targets are flushed even when another target fails.
pub fn run_sweep(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SweepOutput> {
    let p = prepare(cfg)?;
    run_sweep_prepared(cfg, &p, out)
}

pub fn run_sweep_prepared(cfg: &ExperimentConfig, p: &Prepared, out: Option<&Path>) -> Result<SweepOutput> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    info!(
        "sweep: {} targets on {} (n={}, k={}, mode={})",
        p.split.target_ids.len(),
        p.graph.name(),
        p.graph.num_nodes(),
        cfg.k,
        cfg.mode.as_str()
    );
    let results = plan_all(p, cfg)?;
    let mut plans = Vec::with_capacity(results.len());
    let mut first_err = None;
    for (res, &v) in results.into_iter().zip(&p.split.target_ids) {
        match res {
            Ok(plan) => plans.push(plan),
            Err(e) => {
                warn!("target {v}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let rows: Vec<ResultRow> = plans.iter().flat_map(|pl| rows_for_plan(pl, &cfg.budgets)).collect();

    let unseen: Vec<NodeId> = (0..p.graph.num_nodes())
        .filter(|u| p.split.train_ids.binary_search(u).is_err())
        .collect();
    let pred = p.victim.predict_all();
    let labeled: Vec<NodeId> = (0..p.graph.num_nodes()).filter(|&u| p.graph.label(u).is_some()).collect();
    let agree = labeled.iter().filter(|&&u| p.graph.label(u) == Some(pred[u])).count();
    let summary = SweepSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        dataset: p.graph.name().to_string(),
        num_nodes: p.graph.num_nodes(),
        num_edges: p.graph.num_edges(),
        k: cfg.k,
        mode: cfg.mode,
        label_source: cfg.label_source,
        seed: cfg.seed,
        num_targets: plans.len(),
        victim_train_accuracy: p.victim.accuracy(&p.split.train_ids, p.graph.labels()),
        victim_accuracy_unseen: p.victim.accuracy(&unseen, p.graph.labels()),
        label_agreement: if labeled.is_empty() { 0.0 } else { agree as f64 / labeled.len() as f64 },
        per_budget: summarize_budgets(&rows, &cfg.budgets),
    };

    if let Some(dir) = out {
        write_results_csv(&dir.join("results.csv"), &rows)?;
        let s = serde_json::to_string_pretty(&summary)? + "\n";
        let path = dir.join("summary.json");
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        if cfg.write_plans {
            let pdir = dir.join("plans");
            fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
            for plan in &plans {
                let path = pdir.join(format!("{}.json", plan.target));
                fs::write(&path, serde_json::to_string_pretty(plan)? + "\n")
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(SweepOutput {
        rows,
        summary,
        plans,
        split: p.split.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTarget {
    pub target: NodeId,
    pub approx_ms: f64,
    pub exact_ms: f64,
    pub speedup: f64,
    pub same_first_toggle: bool,
    pub approx_success: bool,
    pub exact_success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub targets: Vec<BenchTarget>,
    pub median_approx_ms: f64,
    pub median_exact_ms: f64,
    pub median_speedup: f64,
    pub min_speedup: f64,
    pub max_speedup: f64,
    pub first_toggle_agreement: f64,
}

/// Times approximate and exact planning on every target, single-threaded.
pub fn bench_influence(cfg: &ExperimentConfig) -> Result<BenchReport> {
    let p = prepare(cfg)?;
    bench_prepared(cfg, &p)
}

pub fn bench_prepared(cfg: &ExperimentConfig, p: &Prepared) -> Result<BenchReport> {
    let mut targets = Vec::new();
    for &v in &p.split.target_ids {
        let t = Instant::now();
        let a = plan_target(p, cfg, v, AttackMode::Approx)?;
        let approx_ms = t.elapsed().as_secs_f64() * 1e3;
        let t = Instant::now();
        let e = plan_target(p, cfg, v, AttackMode::Exact)?;
        let exact_ms = t.elapsed().as_secs_f64() * 1e3;
        targets.push(BenchTarget {
            target: v,
            approx_ms,
            exact_ms,
            speedup: exact_ms / approx_ms.max(1e-9),
            same_first_toggle: a.toggles.first() == e.toggles.first(),
            approx_success: a.success,
            exact_success: e.success,
        });
    }
    let col = |f: fn(&BenchTarget) -> f64| {
        let mut xs: Vec<f64> = targets.iter().map(f).collect();
        median(&mut xs)
    };
    let median_approx_ms = col(|t| t.approx_ms);
    let median_exact_ms = col(|t| t.exact_ms);
    let median_speedup = col(|t| t.speedup);
    let speedups = targets.iter().map(|t| t.speedup);
    let n = targets.len().max(1) as f64;
    Ok(BenchReport {
        median_approx_ms,
        median_exact_ms,
        median_speedup,
        min_speedup: speedups.clone().fold(f64::INFINITY, f64::min),
        max_speedup: speedups.fold(0.0, f64::max),
        first_toggle_agreement: targets.iter().filter(|t| t.same_first_toggle).count() as f64 / n,
        targets,
    })
}
