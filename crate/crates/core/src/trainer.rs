//! Training loop, multi-seed runs, ablation variants and sweeps.
//!
//! One epoch: encode both views, fuse, cluster the fused embedding, select
//! high-confidence nodes, evaluate the loss and take one Adam step. The
//! first `stage1_epochs` epochs select every node (τ = 1); afterwards the
//! configured τ applies. A final K-means on the trained embedding gives the
//! reported partition.

use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{add_edges, diffuse_features, drop_edges, mask_features, MaskMode};
use crate::clustering::{cluster_means, fuse, kmeans_best_of, ClusterState, KMeansConfig};
use crate::error::{invalid_arg, CcgcError, Result};
use crate::grad::{backward_from_views, Objective};
use crate::graph::{DatasetStats, GraphDataset};
use crate::losses::{NegativeMode, PairMode};
use crate::metrics::{evaluate, MetricReport};
use crate::model::{forward_views, init_params, EncoderParams, ModelSpec};
use crate::optim::{AdamConfig, AdamState};
use crate::smoothing::{build_operator, smooth, DEFAULT_FILTER_LAYERS};
use crate::tensor::DenseMatrix;

/// Model variants compared in the ablation table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// No confidence filtering: every node is a positive, τ is ignored.
    #[value(alias = "wo_dps")]
    WoDps,
    /// Node-pair negatives instead of cluster-center negatives.
    #[value(alias = "wo_rns")]
    WoRns,
    /// Shared encoder; second view from a graph with edges dropped.
    #[value(alias = "drop_edges")]
    DropEdges,
    #[value(alias = "add_edges")]
    AddEdges,
    /// Shared encoder; second view from PPR-diffused features.
    Diffusion,
    #[value(alias = "mask_features")]
    MaskFeatures,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::WoDps,
        Variant::WoRns,
        Variant::DropEdges,
        Variant::AddEdges,
        Variant::Diffusion,
        Variant::MaskFeatures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoDps => "wo_dps",
            Variant::WoRns => "wo_rns",
            Variant::DropEdges => "drop_edges",
            Variant::AddEdges => "add_edges",
            Variant::Diffusion => "diffusion",
            Variant::MaskFeatures => "mask_features",
        }
    }

    /// Column heading in the ablation table.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Ours",
            Variant::WoDps => "(w/o) Positive",
            Variant::WoRns => "(w/o) Negative",
            Variant::DropEdges => "Drop Edges",
            Variant::AddEdges => "Add Edges",
            Variant::Diffusion => "Diffusion",
            Variant::MaskFeatures => "Mask Feature",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| CcgcError::UnknownVariant(s.to_string()))
    }

    pub fn is_augmentation(self) -> bool {
        matches!(
            self,
            Variant::DropEdges | Variant::AddEdges | Variant::Diffusion | Variant::MaskFeatures
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs trained with every node selected; `None` means a quarter of
    /// `epochs`.
    pub stage1_epochs: Option<usize>,
    pub tau: f64,
    pub alpha: f64,
    pub filter_layers: usize,
    pub model: ModelSpec,
    pub adam: AdamConfig,
    /// Number of clusters; `None` takes the dataset's class count.
    pub k: Option<usize>,
    pub seeds: Vec<u64>,
    pub pair_mode: PairMode,
    pub detach_centers: bool,
    /// K-means used inside the training loop.
    pub kmeans: KMeansConfig,
    /// Re-run K-means every this many epochs; in between, pseudo-labels are
    /// kept and centers re-estimated.
    pub kmeans_every: usize,
    /// Restarts of the final K-means that produces the reported partition.
    pub final_restarts: usize,
    pub ablation: Variant,
    pub aug_rate: f64,
    pub teleport: f64,
    pub mask_mode: MaskMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            stage1_epochs: None,
            tau: 0.6,
            alpha: 1.0,
            filter_layers: DEFAULT_FILTER_LAYERS,
            model: ModelSpec::default(),
            adam: AdamConfig::default(),
            k: None,
            seeds: vec![0],
            pair_mode: PairMode::Eq9,
            detach_centers: false,
            kmeans: KMeansConfig::default(),
            kmeans_every: 1,
            final_restarts: 10,
            ablation: Variant::Full,
            aug_rate: 0.2,
            teleport: 0.2,
            mask_mode: MaskMode::Column,
        }
    }
}

impl TrainConfig {
    pub fn stage1(&self) -> usize {
        self.stage1_epochs.unwrap_or(self.epochs / 4)
    }

    /// Copy with every default filled in.
    pub fn resolved(&self, d: &GraphDataset) -> Self {
        Self {
            stage1_epochs: Some(self.stage1()),
            k: Some(self.k.unwrap_or(d.num_classes())),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid_arg("tau", format!("{} is outside (0, 1]", self.tau)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid_arg("alpha", "must be finite and non-negative"));
        }
        if self.stage1() > self.epochs {
            return Err(invalid_arg("stage1_epochs", "cannot exceed epochs"));
        }
        if self.seeds.is_empty() {
            return Err(invalid_arg("seeds", "at least one seed is required"));
        }
        if self.kmeans_every == 0 {
            return Err(invalid_arg("kmeans_every", "must be at least 1"));
        }
        if self.kmeans.max_iter == 0 || self.kmeans.restarts == 0 || self.final_restarts == 0 {
            return Err(invalid_arg("kmeans", "iterations and restarts must be at least 1"));
        }
        if !(self.kmeans.tol >= 0.0) {
            return Err(invalid_arg("kmeans_tol", "must be non-negative"));
        }
        if let Some(k) = self.k {
            if k < 2 {
                return Err(invalid_arg("k", "need at least 2 clusters"));
            }
        }
        if !(0.0..=1.0).contains(&self.aug_rate) {
            return Err(invalid_arg("aug_rate", "must lie in [0, 1]"));
        }
        if !(self.teleport > 0.0 && self.teleport <= 1.0) {
            return Err(invalid_arg("teleport", "must lie in (0, 1]"));
        }
        self.model.validate()?;
        self.adam.validate()
    }
}

/// Parses `3`, `0,2,5` or the inclusive range `0..9`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || invalid_arg("seeds", format!("cannot parse `{s}`; use 3, 0,2,5 or 0..9"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(index.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_AUGMENT: u64 = 1;
const STREAM_KMEANS: u64 = 2;
const STREAM_FINAL: u64 = 3;

/// Per-epoch training traces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub l_pos: Vec<f64>,
    pub l_neg: Vec<f64>,
    pub total: Vec<f64>,
    pub high_conf_size: Vec<usize>,
    pub forced: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Option<MetricReport>,
    pub assignments: Vec<usize>,
    pub final_inertia: f64,
    pub curves: Curves,
    pub wall_clock_secs: f64,
}

/// Output of [`train_one`].
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub params: EncoderParams,
    pub state: ClusterState,
    pub embedding: DenseMatrix,
    pub run: SeedRun,
}

/// The two encoder inputs for a variant.
#[derive(Clone, Debug)]
pub struct ViewInputs {
    pub view1: DenseMatrix,
    pub view2: DenseMatrix,
    pub notes: Vec<String>,
}

/// Smoothed features for both views. For augmentation variants the second
/// view is built from the augmented graph or features.
pub fn prepare_inputs(d: &GraphDataset, cfg: &TrainConfig, seed: u64) -> Result<ViewInputs> {
    let smoothed = smooth(&build_operator(d, cfg.filter_layers), d.features())?;
    let aug_seed = mix(seed, STREAM_AUGMENT, 0);
    let mut notes = Vec::new();
    let view2 = match cfg.ablation {
        Variant::Full | Variant::WoDps | Variant::WoRns => smoothed.clone(),
        Variant::DropEdges => {
            let g = drop_edges(d, cfg.aug_rate, aug_seed)?;
            notes.push(format!("drop_edges kept {} of {} edges", g.edges().len(), d.edges().len()));
            smooth(&build_operator(&g, cfg.filter_layers), g.features())?
        }
        Variant::AddEdges => {
            let g = add_edges(d, cfg.aug_rate, aug_seed)?;
            notes.push(format!("add_edges grew {} to {} edges", d.edges().len(), g.edges().len()));
            smooth(&build_operator(&g, cfg.filter_layers), g.features())?
        }
        Variant::MaskFeatures => {
            let g = mask_features(d, cfg.aug_rate, aug_seed, cfg.mask_mode)?;
            smooth(&build_operator(&g, cfg.filter_layers), g.features())?
        }
        Variant::Diffusion => {
            let (y, tail) = diffuse_features(d, cfg.teleport)?;
            if let Some(t) = tail {
                notes.push(format!("diffusion truncated; relative tail bound {t:.3e}"));
            }
            y
        }
    };
    Ok(ViewInputs {
        view1: smoothed,
        view2,
        notes,
    })
}

fn objective(cfg: &TrainConfig) -> Objective {
    Objective {
        alpha: cfg.alpha,
        pair_mode: if cfg.ablation == Variant::WoDps {
            PairMode::Eq9
        } else {
            cfg.pair_mode
        },
        negatives: if cfg.ablation == Variant::WoRns {
            NegativeMode::NodePairs
        } else {
            NegativeMode::Centers
        },
        detach_centers: cfg.detach_centers,
    }
}

/// τ in force at `epoch`.
pub fn effective_tau(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.ablation == Variant::WoDps || epoch < cfg.stage1() {
        1.0
    } else {
        cfg.tau
    }
}

/// Trains one seed on precomputed inputs.
pub fn train_with_inputs(
    d: &GraphDataset,
    cfg: &TrainConfig,
    inputs: &ViewInputs,
    seed: u64,
) -> Result<TrainedRun> {
    cfg.validate()?;
    let start = Instant::now();
    let k = cfg.k.unwrap_or(d.num_classes());
    if k < 2 || k > d.num_nodes() {
        return Err(invalid_arg("k", format!("{k} clusters for {} nodes", d.num_nodes())));
    }
    let mut params = init_params(seed, d.feature_dim(), &cfg.model)?;
    if cfg.ablation.is_augmentation() {
        params = params.into_shared();
    }
    let shapes: Vec<usize> = params.tensors_mut().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(cfg.adam, &shapes)?;
    let obj = objective(cfg);
    let (x1, x2) = (&inputs.view1, &inputs.view2);

    let mut curves = Curves::default();
    let mut partition: Option<(Vec<usize>, DenseMatrix)> = None;
    for epoch in 0..cfg.epochs {
        let views = forward_views(&params, x1, x2)?;
        let e = fuse(&views.e1, &views.e2)?;
        let (assignments, centers) = match partition.take() {
            Some((a, _)) if epoch % cfg.kmeans_every != 0 => {
                let c = cluster_means(&e, &a, k);
                (a, c)
            }
            _ => {
                let km = kmeans_best_of(&e, k, mix(seed, STREAM_KMEANS, epoch as u64), &cfg.kmeans)?;
                (km.assignments, km.centers)
            }
        };
        let state = ClusterState::from_partition(&e, k, assignments, centers, effective_tau(cfg, epoch))?;
        let (loss, grads) = backward_from_views(&params, x1, x2, &views, &state, &obj)?;
        if !loss.total.is_finite() || !grads.is_finite() {
            log::error!(
                "epoch {epoch}: l_pos={} l_neg={} |h|={} forced={:?}",
                loss.l_pos,
                loss.l_neg,
                state.high_conf.len(),
                state.forced
            );
            return Err(CcgcError::Diverged {
                epoch,
                l_pos: loss.l_pos,
                l_neg: loss.l_neg,
                high_conf: state.high_conf.len(),
            });
        }
        curves.l_pos.push(loss.l_pos);
        curves.l_neg.push(loss.l_neg);
        curves.total.push(loss.total);
        curves.high_conf_size.push(state.high_conf.len());
        curves.forced.push(state.forced.len());
        if epoch % 50 == 0 {
            debug!(
                "seed {seed} epoch {epoch}: loss {:.6} (pos {:.6}, neg {:.6}), |h| {}",
                loss.total,
                loss.l_pos,
                loss.l_neg,
                state.high_conf.len()
            );
        }

        let grad_tensors = grads.tensors();
        adam.step(&mut params.tensors_mut(), &grad_tensors)?;
        partition = Some((state.assignments, state.centers));
    }

    let views = forward_views(&params, x1, x2)?;
    let embedding = fuse(&views.e1, &views.e2)?;
    let final_cfg = KMeansConfig {
        restarts: cfg.final_restarts,
        ..cfg.kmeans.clone()
    };
    let km = kmeans_best_of(&embedding, k, mix(seed, STREAM_FINAL, 0), &final_cfg)?;
    let state = ClusterState::from_partition(&embedding, k, km.assignments, km.centers, cfg.tau)?;
    let metrics = d.labels().map(|truth| evaluate(&state.assignments, truth)).transpose()?;
    if let Some(m) = &metrics {
        info!(
            "seed {seed}: acc {:.4} nmi {:.4} ari {:.4} f1 {:.4}",
            m.acc, m.nmi, m.ari, m.f1
        );
    }
    let run = SeedRun {
        seed,
        metrics,
        assignments: state.assignments.clone(),
        final_inertia: state.inertia,
        curves,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrainedRun {
        params,
        state,
        embedding,
        run,
    })
}

/// Trains one seed from scratch.
pub fn train_one(d: &GraphDataset, cfg: &TrainConfig, seed: u64) -> Result<TrainedRun> {
    cfg.validate()?;
    let inputs = prepare_inputs(d, cfg, seed)?;
    train_with_inputs(d, cfg, &inputs, seed)
}

/// Population mean and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }

    /// `73.88±1.20` style, in percent.
    pub fn percent_cell(&self) -> String {
        format!("{:.2}±{:.2}", self.mean * 100.0, self.std * 100.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub acc: MeanStd,
    pub nmi: MeanStd,
    pub ari: MeanStd,
    pub f1: MeanStd,
}

impl Aggregate {
    pub fn of(metrics: &[&MetricReport]) -> Option<Self> {
        if metrics.is_empty() {
            return None;
        }
        let col = |f: fn(&MetricReport) -> f64| MeanStd::of(&metrics.iter().map(|m| f(m)).collect::<Vec<_>>());
        Some(Self {
            acc: col(|m| m.acc),
            nmi: col(|m| m.nmi),
            ari: col(|m| m.ari),
            f1: col(|m| m.f1),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool: String,
    pub version: String,
    /// Choices the method description leaves open and how they were made.
    pub reconstruction_notes: Vec<String>,
}

impl ReportHeader {
    fn new(cfg: &TrainConfig) -> Self {
        Self {
            tool: "ccgc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            reconstruction_notes: vec![
                format!(
                    "two-stage schedule: epochs 0..{} select every node (tau=1) with center negatives; \
                     later epochs use tau={}",
                    cfg.stage1(),
                    cfg.tau
                ),
                "K-means runs on the fused embedding inside every training epoch; a final \
                 K-means with several restarts yields the reported partition"
                    .into(),
                "positive loss sums same-node squared distances per cluster block and divides by K"
                    .into(),
                "augmentation variants tie both encoders and feed (original, augmented) inputs".into(),
                "a cluster emptied by top-tau selection keeps its most confident node; \
                 curves.forced counts these per epoch"
                    .into(),
                format!(
                    "encoder layers {:?} ({:?}, bias={}, Xavier-uniform init) and Adam lr={} are defaults, \
                     not published per-dataset values",
                    cfg.model.hidden_dims, cfg.model.activation, cfg.model.bias, cfg.adam.lr
                ),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub header: ReportHeader,
    pub variant: Variant,
    pub config: TrainConfig,
    pub dataset: DatasetStats,
    pub runs: Vec<SeedRun>,
    pub aggregate: Option<Aggregate>,
    pub failures: Vec<SeedFailure>,
    pub warnings: Vec<String>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    /// Copy with timing fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_clock_secs = 0.0;
        for run in &mut r.runs {
            run.wall_clock_secs = 0.0;
        }
        r
    }

    pub fn recompute_aggregate(&self) -> Option<Aggregate> {
        let ms: Vec<&MetricReport> = self.runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
        Aggregate::of(&ms)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs every seed (concurrently, results in seed order) and keeps partial
/// results when some seeds fail.
pub fn run_seeds(d: &GraphDataset, cfg: &TrainConfig) -> Result<(RunReport, Vec<(u64, CcgcError)>)> {
    run_seeds_with(d, cfg, |_, _| {})
}

/// [`run_seeds`] with a callback receiving every successful run.
pub fn run_seeds_with<F>(
    d: &GraphDataset,
    cfg: &TrainConfig,
    on_run: F,
) -> Result<(RunReport, Vec<(u64, CcgcError)>)>
where
    F: Fn(u64, &TrainedRun) + Sync,
{
    cfg.validate()?;
    let start = Instant::now();
    let resolved = cfg.resolved(d);
    let mut warnings = Vec::new();
    if cfg.ablation == Variant::WoDps {
        let msg = format!("wo_dps ignores tau={} and selects every node", cfg.tau);
        warn!("{msg}");
        warnings.push(msg);
    }
    if d.labels().is_none() {
        warnings.push("dataset has no labels; metrics omitted".into());
    }

    // seed-independent inputs are shared across runs
    let shared_inputs = match cfg.ablation {
        Variant::Diffusion | Variant::Full | Variant::WoDps | Variant::WoRns => {
            Some(prepare_inputs(d, cfg, 0)?)
        }
        _ => None,
    };
    if let Some(inp) = &shared_inputs {
        warnings.extend(inp.notes.iter().cloned());
    }

    let outcomes: Vec<(u64, Result<TrainedRun>, Vec<String>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let prepared;
            let (inputs, notes) = match &shared_inputs {
                Some(i) => (i, Vec::new()),
                None => match prepare_inputs(d, cfg, seed) {
                    Ok(i) => {
                        prepared = i;
                        let notes = prepared.notes.iter().map(|n| format!("seed {seed}: {n}")).collect();
                        (&prepared, notes)
                    }
                    Err(e) => return (seed, Err(e), Vec::new()),
                },
            };
            let out = train_with_inputs(d, cfg, inputs, seed);
            if let Ok(run) = &out {
                on_run(seed, run);
            }
            (seed, out, notes)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut errors = Vec::new();
    for (seed, out, notes) in outcomes {
        warnings.extend(notes);
        match out {
            Ok(t) => runs.push(t.run),
            Err(e) => {
                failures.push(SeedFailure {
                    seed,
                    error: e.to_string(),
                });
                errors.push((seed, e));
            }
        }
    }
    let mut report = RunReport {
        header: ReportHeader::new(&resolved),
        variant: cfg.ablation,
        config: resolved,
        dataset: d.stats(),
        runs,
        aggregate: None,
        failures,
        warnings,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    report.aggregate = report.recompute_aggregate();
    Ok((report, errors))
}

/// All seeds; any failure is an error.
pub fn train_multi(d: &GraphDataset, cfg: &TrainConfig) -> Result<RunReport> {
    let (report, mut errors) = run_seeds(d, cfg)?;
    match errors.is_empty() {
        true => Ok(report),
        false => Err(errors.remove(0).1),
    }
}

/// [`train_multi`] for one ablation variant.
pub fn run_ablation(d: &GraphDataset, cfg: &TrainConfig, variant: Variant) -> Result<RunReport> {
    let cfg = TrainConfig {
        ablation: variant,
        ..cfg.clone()
    };
    train_multi(d, &cfg)
}

/// Markdown table with one column per variant and `Ours` rightmost.
pub fn ablation_table(reports: &[RunReport]) -> String {
    let mut ordered: Vec<&RunReport> = reports.iter().filter(|r| r.variant != Variant::Full).collect();
    ordered.extend(reports.iter().filter(|r| r.variant == Variant::Full));
    let mut out = String::from("| Metric |");
    for r in &ordered {
        out.push_str(&format!(" {} |", r.variant.label()));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(ordered.len()));
    out.push('\n');
    let rows: [(&str, fn(&Aggregate) -> MeanStd); 4] = [
        ("ACC", |a| a.acc),
        ("NMI", |a| a.nmi),
        ("ARI", |a| a.ari),
        ("F1", |a| a.f1),
    ];
    for (name, get) in rows {
        out.push_str(&format!("| {name} |"));
        for r in &ordered {
            let cell = r.aggregate.as_ref().map_or("n/a".to_string(), |a| get(a).percent_cell());
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Tau,
    Alpha,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Tau => "tau",
            SweepParam::Alpha => "alpha",
        }
    }
}

/// Parses `tau=0.3,0.5` or `alpha=0.5,1,2`.
pub fn parse_sweep(s: &str) -> Result<(SweepParam, Vec<f64>)> {
    let (name, values) = s
        .split_once('=')
        .ok_or_else(|| invalid_arg("sweep", "expected NAME=v1,v2,..."))?;
    let param = match name.trim() {
        "tau" => SweepParam::Tau,
        "alpha" => SweepParam::Alpha,
        other => return Err(invalid_arg("sweep", format!("unknown parameter `{other}`; use tau or alpha"))),
    };
    let values = values
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| v.trim().parse::<f64>().map_err(|_| invalid_arg("sweep", format!("bad value `{v}`"))))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(invalid_arg("sweep", "empty grid"));
    }
    Ok((param, values))
}

/// One report per grid point, in grid order.
pub fn sweep(d: &GraphDataset, cfg: &TrainConfig, param: SweepParam, values: &[f64]) -> Result<Vec<(f64, RunReport)>> {
    if values.is_empty() {
        return Err(invalid_arg("sweep", "empty grid"));
    }
    values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match param {
                SweepParam::Tau => c.tau = v,
                SweepParam::Alpha => c.alpha = v,
            }
            Ok((v, train_multi(d, &c)?))
        })
        .collect()
}

/// CSV with one row per grid point: value and mean/std of every metric.
pub fn sweep_summary_csv(param: SweepParam, points: &[(f64, RunReport)]) -> String {
    let mut out = format!(
        "{},acc_mean,acc_std,nmi_mean,nmi_std,ari_mean,ari_std,f1_mean,f1_std\n",
        param.name()
    );
    for (v, r) in points {
        match &r.aggregate {
            Some(a) => out.push_str(&format!(
                "{v},{},{},{},{},{},{},{},{}\n",
                a.acc.mean, a.acc.std, a.nmi.mean, a.nmi.std, a.ari.mean, a.ari.std, a.f1.mean, a.f1.std
            )),
            None => out.push_str(&format!("{v},,,,,,,,\n")),
        }
    }
    out
}
