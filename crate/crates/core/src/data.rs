//! Graph bundles on disk, synthetic graphs, and experiment splits.
//!
//! A bundle is a directory with:
//! - `meta.json`: `{"num_nodes", "num_classes", "num_features", "name"}` and
//!   optionally `"node_names"` (one string per node id);
//! - `edges.tsv`: `u<TAB>v` per undirected edge, `u < v`;
//! - `labels.tsv`: `node<TAB>class`, absent nodes are unlabeled;
//! - `features.tsv` (optional): sparse triplets `node<TAB>dim<TAB>value`;
//! - `splits.json` (optional): an [`ExperimentSplit`].

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClassId, Graph, NodeId, SparseFeatures, Topology};
use crate::victim::NodeClassifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub num_features: usize,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSplit {
    pub train_ids: Vec<NodeId>,
    pub target_ids: Vec<NodeId>,
    pub seed: u64,
}

/// What a load found besides the graph itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub duplicate_edges: usize,
    pub split: Option<ExperimentSplit>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty, non-comment lines split on tabs, with 1-based line numbers.
fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        if l.trim().is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l.split('\t').collect()))
        }
    })
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| malformed(path, line, format!("bad {what} {field:?}")))
}

pub fn load_bundle(dir: &Path) -> Result<Graph> {
    Ok(load_bundle_with_report(dir)?.0)
}

pub fn load_bundle_with_report(dir: &Path) -> Result<(Graph, LoadReport)> {
    let meta_path = dir.join("meta.json");
    if !meta_path.is_file() {
        return Err(Error::Data(format!("{}: missing meta.json", dir.display())));
    }
    let meta: BundleMeta = serde_json::from_str(&read_text(&meta_path)?)?;
    let n = meta.num_nodes;

    let edges_path = dir.join("edges.tsv");
    let edge_text = read_text(&edges_path)?;
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let mut report = LoadReport::default();
    for (line, f) in tsv_rows(&edge_text) {
        if f.len() != 2 {
            return Err(malformed(&edges_path, line, "expected two columns"));
        }
        let u: NodeId = parse_field(&edges_path, line, f[0], "node id")?;
        let w: NodeId = parse_field(&edges_path, line, f[1], "node id")?;
        if u >= n || w >= n {
            return Err(malformed(&edges_path, line, format!("node id out of range (n = {n})")));
        }
        if u == w {
            return Err(malformed(&edges_path, line, "self-loop"));
        }
        if seen.insert((u.min(w), u.max(w))) {
            edges.push((u, w));
        } else {
            report.duplicate_edges += 1;
        }
    }
    if report.duplicate_edges > 0 {
        warn!(
            "{}: dropped {} duplicate or reversed edges",
            edges_path.display(),
            report.duplicate_edges
        );
    }

    let labels_path = dir.join("labels.tsv");
    let mut labels = vec![None; n];
    if labels_path.is_file() {
        for (line, f) in tsv_rows(&read_text(&labels_path)?) {
            if f.len() != 2 {
                return Err(malformed(&labels_path, line, "expected two columns"));
            }
            let u: NodeId = parse_field(&labels_path, line, f[0], "node id")?;
            let c: ClassId = parse_field(&labels_path, line, f[1], "class")?;
            if u >= n {
                return Err(malformed(&labels_path, line, "node id out of range"));
            }
            if c >= meta.num_classes {
                return Err(malformed(&labels_path, line, "class out of range"));
            }
            labels[u] = Some(c);
        }
    }

    let mut graph = Graph::new(n, meta.num_classes, &edges, labels)?.with_name(meta.name.clone());

    let features_path = dir.join("features.tsv");
    if features_path.is_file() {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (line, f) in tsv_rows(&read_text(&features_path)?) {
            if f.len() != 3 {
                return Err(malformed(&features_path, line, "expected three columns"));
            }
            let u: NodeId = parse_field(&features_path, line, f[0], "node id")?;
            let j: usize = parse_field(&features_path, line, f[1], "feature index")?;
            let x: f64 = parse_field(&features_path, line, f[2], "value")?;
            if u >= n {
                return Err(malformed(&features_path, line, "node id out of range"));
            }
            if j >= meta.num_features {
                return Err(malformed(
                    &features_path,
                    line,
                    format!("feature index {j} >= num_features {}", meta.num_features),
                ));
            }
            if !x.is_finite() {
                return Err(malformed(&features_path, line, "non-finite value"));
            }
            rows[u].push((j, x));
        }
        graph = graph.with_features(SparseFeatures::new(meta.num_features, rows)?)?;
    } else if meta.num_features != 0 {
        warn!(
            "{}: meta declares {} features but features.tsv is absent; using identity features",
            dir.display(),
            meta.num_features
        );
    }

    if let Some(names) = meta.node_names {
        graph = graph.with_node_names(names)?;
    }

    let splits_path = dir.join("splits.json");
    if splits_path.is_file() {
        let split: ExperimentSplit = serde_json::from_str(&read_text(&splits_path)?)?;
        if let Some(&u) = split.train_ids.iter().chain(&split.target_ids).find(|&&u| u >= n) {
            return Err(Error::Data(format!(
                "{}: node {u} out of range",
                splits_path.display()
            )));
        }
        report.split = Some(split);
    }
    Ok((graph, report))
}

/// Writes `g` as a bundle with edges, labels and features in canonical order.
pub fn save_bundle(g: &Graph, dir: &Path, split: Option<&ExperimentSplit>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = BundleMeta {
        num_nodes: g.num_nodes(),
        num_classes: g.num_classes(),
        num_features: g.features().map_or(0, SparseFeatures::dim),
        name: g.name().to_string(),
        node_names: g.node_names().map(<[String]>::to_vec),
    };
    write_file(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut edges = String::new();
    for (u, w) in g.edges() {
        edges.push_str(&format!("{u}\t{w}\n"));
    }
    write_file(&dir.join("edges.tsv"), edges)?;

    let mut labels = String::new();
    for (u, l) in g.labels().iter().enumerate() {
        if let Some(c) = l {
            labels.push_str(&format!("{u}\t{c}\n"));
        }
    }
    write_file(&dir.join("labels.tsv"), labels)?;

    if let Some(f) = g.features() {
        let mut out = String::new();
        for (u, row) in f.rows().iter().enumerate() {
            let mut row = row.clone();
            row.sort_by_key(|&(j, _)| j);
            for (j, x) in row {
                out.push_str(&format!("{u}\t{j}\t{x}\n"));
            }
        }
        write_file(&dir.join("features.tsv"), out)?;
    }
    if let Some(s) = split {
        write_file(&dir.join("splits.json"), serde_json::to_string_pretty(s)? + "\n")?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: String) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmParams {
    pub classes: usize,
    pub per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian noise added to class feature bumps.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 250,
            p_in: 0.03,
            p_out: 0.002,
            feature_dim: 16,
            noise: 4.25,
            seed: 0,
        }
    }
}

/// Stochastic block model with class-correlated features. Node `i` belongs
/// to class `i / per_class`. Feature dimension `j` carries a unit bump for
/// class `j % classes`, plus Gaussian noise on every dimension.
pub fn generate_sbm(p: &SbmParams) -> Result<Graph> {
    if p.classes == 0 || p.per_class == 0 {
        return Err(Error::InvalidArgument(
            "SBM needs at least one class and one node per class".into(),
        ));
    }
    for (name, x) in [("p_in", p.p_in), ("p_out", p.p_out)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1]")));
        }
    }
    if p.p_in <= p.p_out {
        return Err(Error::InvalidArgument(
            "SBM requires p_in > p_out (homophily)".into(),
        ));
    }
    if p.feature_dim == 0 || !(p.noise >= 0.0) {
        return Err(Error::InvalidArgument(
            "feature_dim must be positive and noise non-negative".into(),
        ));
    }
    let n = p.classes * p.per_class;
    let class_of = |u: NodeId| u / p.per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for w in (u + 1)..n {
            let prob = if class_of(u) == class_of(w) { p.p_in } else { p.p_out };
            if rng.gen::<f64>() < prob {
                edges.push((u, w));
            }
        }
    }
    let normal = Normal::new(0.0, p.noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rows = (0..n)
        .map(|u| {
            (0..p.feature_dim)
                .map(|j| {
                    let bump = if j % p.classes == class_of(u) { 1.0 } else { 0.0 };
                    let noise = if p.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    (j, bump + noise)
                })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|u| Some(class_of(u))).collect();
    Graph::new(n, p.classes, &edges, labels)?
        .with_name(format!("sbm-{}x{}-s{}", p.classes, p.per_class, p.seed))
        .with_features(SparseFeatures::new(p.feature_dim, rows)?)
}

/// Fraction of edges whose endpoints share a label (over labeled pairs).
pub fn edge_homophily(g: &Graph) -> f64 {
    let (same, total) = g.edges().fold((0usize, 0usize), |(s, t), (u, w)| {
        match (g.label(u), g.label(w)) {
            (Some(a), Some(b)) => (s + usize::from(a == b), t + 1),
            _ => (s, t),
        }
    });
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub per_class: usize,
    pub num_targets: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            per_class: 20,
            num_targets: 100,
        }
    }
}

/// Samples `per_class` training nodes per class, trains a victim on them,
/// then samples targets among correctly classified non-training nodes.
/// Both id lists come back sorted.
pub fn sample_split<M, F>(
    g: &Graph,
    cfg: SplitConfig,
    seed: u64,
    train: F,
) -> Result<(ExperimentSplit, M)>
where
    M: NodeClassifier,
    F: FnOnce(&[NodeId]) -> Result<M>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_ids = Vec::new();
    for c in 0..g.num_classes() {
        let mut members: Vec<NodeId> = (0..g.num_nodes()).filter(|&u| g.label(u) == Some(c)).collect();
        if members.len() < cfg.per_class {
            return Err(Error::Data(format!(
                "class {c} has {} labeled nodes, {} needed for training",
                members.len(),
                cfg.per_class
            )));
        }
        members.shuffle(&mut rng);
        train_ids.extend_from_slice(&members[..cfg.per_class]);
    }
    train_ids.sort_unstable();

    let model = train(&train_ids)?;
    let pred = model.predict_all();
    let in_train: BTreeSet<NodeId> = train_ids.iter().copied().collect();
    let mut pool: Vec<NodeId> = (0..g.num_nodes())
        .filter(|u| !in_train.contains(u) && g.label(*u) == Some(pred[*u]))
        .collect();
    if pool.len() < cfg.num_targets {
        return Err(Error::NotEnoughTargets {
            available: pool.len(),
            requested: cfg.num_targets,
        });
    }
    pool.shuffle(&mut rng);
    let mut target_ids = pool[..cfg.num_targets].to_vec();
    target_ids.sort_unstable();
    Ok((
        ExperimentSplit {
            train_ids,
            target_ids,
            seed,
        },
        model,
    ))
}

/// The most probable class other than `own`; ties go to the lowest class id.
pub fn pick_target_label(probs: &[f64], own: ClassId) -> Result<ClassId> {
    if probs.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two classes to pick a target label".into(),
        ));
    }
    let mut best: Option<ClassId> = None;
    for (c, &p) in probs.iter().enumerate() {
        if c == own {
            continue;
        }
        if best.is_none_or(|b| p > probs[b]) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one other class"))
}

/// The ten-node, two-class worked example.
///
/// Node names follow the figure: `v` is the target, `u1..u9` the rest.
/// Class 0 holds `v`'s own label, class 1 is the target label `c`.
pub mod toy {
    use super::*;

    pub const V: NodeId = 0;
    pub const U1: NodeId = 1;
    pub const U2: NodeId = 2;
    pub const U3: NodeId = 3;
    pub const U4: NodeId = 4;
    pub const U5: NodeId = 5;
    pub const U6: NodeId = 6;
    pub const U7: NodeId = 7;
    pub const U8: NodeId = 8;
    pub const U9: NodeId = 9;

    pub const Y_V: ClassId = 0;
    pub const C: ClassId = 1;

    pub const NAMES: [&str; 10] = ["v", "u1", "u2", "u3", "u4", "u5", "u6", "u7", "u8", "u9"];

    pub const EDGES: [(NodeId, NodeId); 12] = [
        (V, U2),
        (V, U3),
        (V, U5),
        (U1, U2),
        (U2, U3),
        (U2, U7),
        (U3, U4),
        (U3, U5),
        (U5, U6),
        (U5, U7),
        (U7, U8),
        (U7, U9),
    ];

    pub const LABELS: [ClassId; 10] = [Y_V, Y_V, Y_V, Y_V, Y_V, C, C, C, C, Y_V];

    pub fn graph() -> Graph {
        Graph::new(10, 2, &EDGES, LABELS.iter().map(|&c| Some(c)).collect())
            .and_then(|g| g.with_node_names(NAMES.iter().map(|s| s.to_string()).collect()))
            .expect("toy fixture is valid")
            .with_name("toy")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_degrees() {
        let g = toy::graph();
        let deg: Vec<usize> = (0..10).map(|u| g.degree(u)).collect();
        assert_eq!(deg, vec![4, 2, 5, 5, 2, 5, 2, 5, 2, 2]);
        assert_eq!(g.num_edges(), 12);
    }

    #[test]
    fn bundle_round_trip_is_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_sbm(&SbmParams {
            classes: 2,
            per_class: 10,
            p_in: 0.4,
            p_out: 0.05,
            feature_dim: 3,
            noise: 0.5,
            seed: 4,
        })
        .unwrap();
        save_bundle(&g, dir.path(), None).unwrap();
        let first = fs::read(dir.path().join("edges.tsv")).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        assert_eq!(back.labels(), g.labels());
        let dir2 = tempfile::tempdir().unwrap();
        save_bundle(&back, dir2.path(), None).unwrap();
        assert_eq!(fs::read(dir2.path().join("edges.tsv")).unwrap(), first);
    }

    fn write_bundle(dir: &Path, meta: &str, edges: &str, labels: &str) {
        fs::write(dir.join("meta.json"), meta).unwrap();
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("labels.tsv"), labels).unwrap();
    }

    const META3: &str = r#"{"num_nodes": 3, "num_classes": 2, "num_features": 0, "name": "t"}"#;

    #[test]
    fn empty_edges_give_isolated_nodes() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), META3, "", "0\t1\n");
        let g = load_bundle(dir.path()).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert!((0..3).all(|u| g.degree(u) == 1));
        assert_eq!(g.labels(), &[Some(1), None, None]);
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), META3, "0\t1\n1\t0\n1\t2\n", "");
        let (g, rep) = load_bundle_with_report(dir.path()).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(rep.duplicate_edges, 1);
    }

    #[test]
    fn bad_bundles_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Data(_))));
        write_bundle(dir.path(), META3, "0\t3\n", "");
        assert!(matches!(load_bundle(dir.path()), Err(Error::Malformed { line: 1, .. })));
        write_bundle(dir.path(), META3, "0\tx\n", "");
        assert!(matches!(load_bundle(dir.path()), Err(Error::Malformed { .. })));
        write_bundle(dir.path(), META3, "1\t1\n", "");
        assert!(matches!(load_bundle(dir.path()), Err(Error::Malformed { .. })));
        write_bundle(dir.path(), META3, "0\t1\n", "2\t5\n");
        assert!(matches!(load_bundle(dir.path()), Err(Error::Malformed { .. })));
        write_bundle(dir.path(), META3, "0\t1\n", "");
        fs::write(dir.path().join("features.tsv"), "0\t0\t1.0\n").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Malformed { .. })));
    }

    #[test]
    fn sbm_is_deterministic_and_homophilous() {
        let p = SbmParams {
            classes: 2,
            per_class: 100,
            p_in: 0.05,
            p_out: 0.005,
            ..SbmParams::default()
        };
        let a = generate_sbm(&p).unwrap();
        let b = generate_sbm(&p).unwrap();
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        assert!(edge_homophily(&a) > 0.5);
        let c = generate_sbm(&SbmParams { seed: 1, ..p }).unwrap();
        assert_ne!(a.edges().collect::<Vec<_>>(), c.edges().collect::<Vec<_>>());
    }

    #[test]
    fn sbm_without_cross_edges_splits_into_components() {
        let g = generate_sbm(&SbmParams {
            classes: 3,
            per_class: 20,
            p_in: 0.3,
            p_out: 0.0,
            ..SbmParams::default()
        })
        .unwrap();
        assert!(g.edges().all(|(u, w)| g.label(u) == g.label(w)));
    }

    #[test]
    fn sbm_rejects_degenerate_params() {
        let base = SbmParams::default();
        assert!(generate_sbm(&SbmParams { per_class: 0, ..base }).is_err());
        assert!(generate_sbm(&SbmParams { p_in: 0.001, ..base }).is_err());
    }

    #[test]
    fn target_label_rules() {
        assert_eq!(pick_target_label(&[0.7, 0.3], 0).unwrap(), 1);
        assert_eq!(pick_target_label(&[0.25; 4], 0).unwrap(), 1);
        assert_eq!(pick_target_label(&[0.25; 4], 2).unwrap(), 0);
        assert_eq!(pick_target_label(&[0.1, 0.2, 0.6, 0.1], 2).unwrap(), 1);
        assert!(pick_target_label(&[1.0], 0).is_err());
    }

    #[derive(Debug)]
    struct Oracle(Vec<ClassId>);
    impl NodeClassifier for Oracle {
        fn predict_all(&self) -> Vec<ClassId> {
            self.0.clone()
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let g = generate_sbm(&SbmParams {
            classes: 2,
            per_class: 50,
            p_in: 0.1,
            p_out: 0.01,
            ..SbmParams::default()
        })
        .unwrap();
        let truth: Vec<ClassId> = g.labels().iter().map(|l| l.unwrap()).collect();
        let cfg = SplitConfig {
            per_class: 5,
            num_targets: 30,
        };
        let (a, _) = sample_split(&g, cfg, 11, |_| Ok(Oracle(truth.clone()))).unwrap();
        let (b, _) = sample_split(&g, cfg, 11, |_| Ok(Oracle(truth.clone()))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_ids.len(), 10);
        assert_eq!(a.target_ids.len(), 30);
        assert!(a.target_ids.iter().all(|t| !a.train_ids.contains(t)));
        let (c, _) = sample_split(&g, cfg, 12, |_| Ok(Oracle(truth.clone()))).unwrap();
        assert_ne!(a.target_ids, c.target_ids);

        // Only correctly classified nodes may become targets.
        let wrong: Vec<ClassId> = truth.iter().map(|&y| 1 - y).collect();
        let err = sample_split(&g, cfg, 11, |_| Ok(Oracle(wrong))).unwrap_err();
        assert!(matches!(err, Error::NotEnoughTargets { available: 0, requested: 30 }));
    }
}
