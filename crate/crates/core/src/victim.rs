//! Simple graph convolution victim, label propagation, and the
//! feature-label / label influence identity for linear models.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{inv_sqrt, norm_adj_power_row, walk_weights_from, ClassId, Graph, NodeId, Topology};

pub const MODEL_MAGIC: &str = "SGCv1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Standard deviation of the initial weights; zero means zero-init.
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.2,
            epochs: 300,
            l2: 5e-6,
            seed: 0,
            init_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub final_loss: f64,
    /// Loss at the start of every epoch, then the final loss.
    #[serde(skip)]
    pub loss_history: Vec<f64>,
}

/// `K` propagation steps followed by a linear map to class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SgcModel {
    pub depth: usize,
    /// `num_features x num_classes`.
    pub weights: Array2<f64>,
    pub trained: bool,
    pub train_meta: Option<TrainMeta>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    depth: usize,
    num_features: usize,
    num_classes: usize,
    weights: Vec<f64>,
    train_meta: Option<TrainMeta>,
}

impl SgcModel {
    pub fn untrained(depth: usize, num_features: usize, num_classes: usize) -> Self {
        Self {
            depth,
            weights: Array2::zeros((num_features, num_classes)),
            trained: false,
            train_meta: None,
        }
    }

    /// A model with fixed weights, treated as trained.
    pub fn from_weights(depth: usize, weights: Array2<f64>) -> Self {
        Self {
            depth,
            weights,
            trained: true,
            train_meta: None,
        }
    }

    pub fn num_features(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.ncols()
    }

    fn ensure_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::Untrained)
        }
    }

    /// Class probabilities for every row of already-propagated features.
    pub fn predict_proba(&self, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.ensure_trained()?;
        if h.ncols() != self.num_features() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, model expects {}",
                h.ncols(),
                self.num_features()
            )));
        }
        Ok(softmax_rows(h.dot(&self.weights)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            magic: MODEL_MAGIC.to_string(),
            depth: self.depth,
            num_features: self.num_features(),
            num_classes: self.num_classes(),
            weights: self.weights.iter().copied().collect(),
            train_meta: self.train_meta.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.magic != MODEL_MAGIC {
            return Err(Error::Data(format!(
                "{}: expected model magic {MODEL_MAGIC:?}, found {:?}",
                path.display(),
                file.magic
            )));
        }
        let weights = Array2::from_shape_vec((file.num_features, file.num_classes), file.weights)
            .map_err(|e| Error::DimensionMismatch(format!("{}: {e}", path.display())))?;
        Ok(Self {
            depth: file.depth,
            weights,
            trained: true,
            train_meta: file.train_meta,
        })
    }
}

pub fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

/// Dense feature matrix of a graph; one-hot identity features when the
/// graph carries none.
pub fn dense_features(g: &Graph) -> Array2<f64> {
    let n = g.num_nodes();
    match g.features() {
        Some(f) => {
            let mut x = Array2::zeros((n, f.dim()));
            for (u, row) in f.rows().iter().enumerate() {
                for &(j, val) in row {
                    x[[u, j]] += val;
                }
            }
            x
        }
        None => Array2::eye(n),
    }
}

/// `A_hat^depth X` with `A_hat = D^{-1/2}(A+I)D^{-1/2}`, one sparse pass per step.
pub fn sgc_propagate<T: Topology>(g: &T, x: ArrayView2<f64>, depth: usize) -> Result<Array2<f64>> {
    let n = g.num_nodes();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "feature matrix has {} rows for {n} nodes",
            x.nrows()
        )));
    }
    let inv: Vec<f64> = (0..n).map(|u| inv_sqrt(g.degree(u))).collect();
    let mut cur = x.to_owned();
    for _ in 0..depth {
        let mut next = Array2::zeros(cur.raw_dim());
        for (v, mut out) in next.axis_iter_mut(Axis(0)).enumerate() {
            g.for_each_neighbor(v, |u| {
                out.scaled_add(inv[u] * inv[v], &cur.row(u));
            });
        }
        cur = next;
    }
    Ok(cur)
}

/// Propagated features of a single node, touching only its `depth`-hop ball.
pub fn sgc_propagate_row<T: Topology>(
    g: &T,
    x: ArrayView2<f64>,
    v: NodeId,
    depth: usize,
) -> Result<Array1<f64>> {
    if x.nrows() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "feature matrix has {} rows for {} nodes",
            x.nrows(),
            g.num_nodes()
        )));
    }
    Ok(combine_rows(&walk_weights_from(g, v, depth), x))
}

fn combine_rows(weights: &BTreeMap<NodeId, f64>, rows: ArrayView2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(rows.ncols());
    for (&u, &w) in weights {
        out.scaled_add(w, &rows.row(u));
    }
    out
}

fn training_targets(
    train_ids: &[NodeId],
    labels: &[Option<ClassId>],
    num_classes: usize,
) -> Result<Vec<ClassId>> {
    train_ids
        .iter()
        .map(|&u| {
            let y = labels
                .get(u)
                .copied()
                .ok_or(Error::NodeOutOfRange {
                    node: u,
                    num_nodes: labels.len(),
                })?
                .ok_or(Error::MissingLabel(u))?;
            if y >= num_classes {
                return Err(Error::Data(format!("label {y} of node {u} out of range")));
            }
            Ok(y)
        })
        .collect()
}

/// Mean cross-entropy over the training rows plus `l2 * ||W||^2`, and its gradient.
pub fn loss_and_grad(
    h: ArrayView2<f64>,
    train_ids: &[NodeId],
    targets: &[ClassId],
    weights: ArrayView2<f64>,
    l2: f64,
) -> (f64, Array2<f64>) {
    let m = train_ids.len() as f64;
    let ht = h.select(Axis(0), train_ids);
    let probs = softmax_rows(ht.dot(&weights));
    let mut loss = 0.0;
    let mut resid = probs;
    for (i, &y) in targets.iter().enumerate() {
        loss -= resid[[i, y]].max(f64::MIN_POSITIVE).ln();
        resid[[i, y]] -= 1.0;
    }
    loss = loss / m + l2 * weights.iter().map(|w| w * w).sum::<f64>();
    let mut grad = ht.t().dot(&resid) / m;
    grad.scaled_add(2.0 * l2, &weights);
    (loss, grad)
}

/// Full-batch gradient descent on propagated features `h`.
pub fn sgc_train(
    h: ArrayView2<f64>,
    depth: usize,
    train_ids: &[NodeId],
    labels: &[Option<ClassId>],
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<SgcModel> {
    if train_ids.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if num_classes == 0 {
        return Err(Error::InvalidArgument("need at least one class".into()));
    }
    if let Some(&u) = train_ids.iter().find(|&&u| u >= h.nrows()) {
        return Err(Error::NodeOutOfRange {
            node: u,
            num_nodes: h.nrows(),
        });
    }
    let targets = training_targets(train_ids, labels, num_classes)?;
    let d = h.ncols();
    let mut weights = if cfg.init_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.init_std)
            .map_err(|e| Error::InvalidArgument(format!("init_std: {e}")))?;
        Array2::from_shape_simple_fn((d, num_classes), || normal.sample(&mut rng))
    } else {
        Array2::zeros((d, num_classes))
    };

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = loss_and_grad(h, train_ids, &targets, weights.view(), cfg.l2);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "loss became {loss} at epoch {epoch} (lr {}, l2 {})",
                cfg.lr, cfg.l2
            )));
        }
        history.push(loss);
        weights.scaled_add(-cfg.lr, &grad);
    }
    let (final_loss, _) = loss_and_grad(h, train_ids, &targets, weights.view(), cfg.l2);
    if !final_loss.is_finite() {
        return Err(Error::Diverged(format!("final loss {final_loss}")));
    }
    history.push(final_loss);

    Ok(SgcModel {
        depth,
        weights,
        trained: true,
        train_meta: Some(TrainMeta {
            epochs: cfg.epochs,
            final_loss,
            loss_history: history,
        }),
    })
}

/// `f(A)_{v,c} - f(A)_{v,y_v}` from softmax probabilities on `g`.
pub fn attack_margin<T: Topology>(
    model: &SgcModel,
    g: &T,
    x: ArrayView2<f64>,
    v: NodeId,
    c: ClassId,
    own: ClassId,
) -> Result<f64> {
    model.ensure_trained()?;
    let h = sgc_propagate_row(g, x, v, model.depth)?;
    let logits = h.dot(&model.weights);
    Ok(margin_from_logits(logits.view(), c, own))
}

fn margin_from_logits(logits: ArrayView1<f64>, c: ClassId, own: ClassId) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let z: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    ((logits[c] - max).exp() - (logits[own] - max).exp()) / z
}

/// Something that labels every node of its graph.
pub trait NodeClassifier {
    fn predict_all(&self) -> Vec<ClassId>;
}

/// A trained model bound to one graph's features, ready for margin queries.
#[derive(Debug, Clone)]
pub struct Victim {
    pub model: SgcModel,
    /// `X W`, so a margin only needs the target's walk weights.
    projected: Array2<f64>,
    clean_probs: Array2<f64>,
}

impl Victim {
    pub fn new(model: SgcModel, g: &Graph, x: ArrayView2<f64>) -> Result<Self> {
        model.ensure_trained()?;
        if x.ncols() != model.num_features() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, model expects {}",
                x.ncols(),
                model.num_features()
            )));
        }
        let projected = x.dot(&model.weights);
        let clean_probs = softmax_rows(sgc_propagate(g, projected.view(), model.depth)?);
        Ok(Self {
            model,
            projected,
            clean_probs,
        })
    }

    pub fn clean_probabilities(&self) -> &Array2<f64> {
        &self.clean_probs
    }

    pub fn margin<T: Topology>(&self, g: &T, v: NodeId, c: ClassId, own: ClassId) -> f64 {
        let logits = combine_rows(
            &walk_weights_from(g, v, self.model.depth),
            self.projected.view(),
        );
        margin_from_logits(logits.view(), c, own)
    }

    pub fn accuracy(&self, nodes: &[NodeId], labels: &[Option<ClassId>]) -> f64 {
        let pred = self.predict_all();
        let scored: Vec<bool> = nodes
            .iter()
            .filter_map(|&u| labels[u].map(|y| pred[u] == y))
            .collect();
        if scored.is_empty() {
            return 0.0;
        }
        scored.iter().filter(|&&ok| ok).count() as f64 / scored.len() as f64
    }
}

impl NodeClassifier for Victim {
    fn predict_all(&self) -> Vec<ClassId> {
        self.clean_probs.rows().into_iter().map(|r| argmax(r)).collect()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Label propagation scores after `depth` symmetric-normalized steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LpState {
    pub depth: usize,
    /// `n x C`.
    pub scores: Array2<f64>,
    pub seed_mask: Vec<bool>,
}

impl LpState {
    pub fn predictions(&self) -> Vec<ClassId> {
        self.scores.rows().into_iter().map(|r| argmax(r)).collect()
    }
}

pub fn label_propagation<T: Topology>(
    g: &T,
    seeds: &[Option<ClassId>],
    num_classes: usize,
    depth: usize,
) -> Result<LpState> {
    if seeds.len() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} seeds for {} nodes",
            seeds.len(),
            g.num_nodes()
        )));
    }
    if seeds.iter().all(Option::is_none) {
        return Err(Error::InvalidArgument("no labeled seed".into()));
    }
    let mut y0 = Array2::zeros((g.num_nodes(), num_classes));
    for (u, s) in seeds.iter().enumerate() {
        if let Some(c) = *s {
            if c >= num_classes {
                return Err(Error::Data(format!("seed label {c} out of range")));
            }
            y0[[u, c]] = 1.0;
        }
    }
    Ok(LpState {
        depth,
        scores: sgc_propagate(g, y0.view(), depth)?,
        seed_mask: seeds.iter().map(Option::is_some).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceRatioReport {
    pub source: NodeId,
    pub source_label: ClassId,
    /// `(x_u W)_{y_u}`, the predicted ratio.
    pub constant: f64,
    /// `(v, I_fl(v,u) / I_l(v,u))` for every `v` with `I_l > 1e-12`.
    pub ratios: Vec<(NodeId, f64)>,
    pub max_relative_spread: f64,
}

/// Compares feature-label influence of `u` (propagating `u`'s features
/// alone through the model) with its label influence (propagating a single
/// one-hot seed at `u`). For a linear model their ratio is constant in `v`.
pub fn influence_ratio_check<T: Topology>(
    model: &SgcModel,
    g: &T,
    x: ArrayView2<f64>,
    labels: &[Option<ClassId>],
    u: NodeId,
) -> Result<InfluenceRatioReport> {
    model.ensure_trained()?;
    let n = g.num_nodes();
    if u >= n {
        return Err(Error::NodeOutOfRange { node: u, num_nodes: n });
    }
    let y_u = labels[u].ok_or(Error::MissingLabel(u))?;
    let k = model.depth;

    let mut xu = Array2::zeros(x.raw_dim());
    xu.row_mut(u).assign(&x.row(u));
    let feature_influence = sgc_propagate(g, xu.view(), k)?.dot(&model.weights);

    let mut seed = vec![None; n];
    seed[u] = Some(y_u);
    let lp = label_propagation(g, &seed, model.num_classes(), k)?;

    let ratios: Vec<(NodeId, f64)> = (0..n)
        .filter(|&v| lp.scores[[v, y_u]] > 1e-12)
        .map(|v| (v, feature_influence[[v, y_u]] / lp.scores[[v, y_u]]))
        .collect();
    if ratios.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "node {u} has no label influence on any node"
        )));
    }
    let (lo, hi, sum) = ratios.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, 0.0),
        |(lo, hi, s), &(_, r)| (lo.min(r), hi.max(r), s + r),
    );
    let mean = sum / ratios.len() as f64;
    let max_relative_spread = if hi == lo {
        0.0
    } else {
        (hi - lo) / mean.abs().max(f64::MIN_POSITIVE)
    };
    Ok(InfluenceRatioReport {
        source: u,
        source_label: y_u,
        constant: x.row(u).dot(&model.weights.column(y_u)),
        ratios,
        max_relative_spread,
    })
}

/// Largest absolute gap between `h_v = sum_u [A_hat^K]_{vu} x_u W` and the
/// direct propagate-then-project output, over all nodes and classes.
pub fn spanning_identity_error<T: Topology>(
    model: &SgcModel,
    g: &T,
    x: ArrayView2<f64>,
) -> Result<f64> {
    let direct = sgc_propagate(g, x, model.depth)?.dot(&model.weights);
    let per_node = x.dot(&model.weights);
    let mut worst: f64 = 0.0;
    for v in 0..g.num_nodes() {
        let row = norm_adj_power_row(g, v, model.depth)?;
        let mut h = Array1::<f64>::zeros(model.num_classes());
        for (u, &w) in row.iter().enumerate() {
            if w != 0.0 {
                h.scaled_add(w, &per_node.row(u));
            }
        }
        for (a, b) in h.iter().zip(direct.row(v)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}
