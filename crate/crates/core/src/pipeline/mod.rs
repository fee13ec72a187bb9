//! End-to-end orchestration: the selector/extractor/network grid, leave-one-out
//! cross-validation with strict fold hygiene, classification metrics, and the
//! synthetic feature-extractor benchmark.

pub mod bench;
pub mod train;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiViewDataset, ViewTensor};
use crate::error::{Error, Result};
use crate::features::{apply_extractor, fit_extractor, ExtractMethod, ExtractParams};
use crate::nets::NetSpec;
use crate::select::{
    dgb_rank, fisher_combine, jpta_fit, jpta_select, lmm_rank_view, normalize_scores,
    BootstrapPlan, SelectorMethod, VariableScoreTable,
};
use train::{train_deepida_gru, TrainConfig};

pub use bench::{cell_medians, median, synth_benchmark, BenchMethod, BenchRow, BenchSettings};
pub use train::TrainedModel;

/// Deterministic stream derivation (splitmix64 finalizer).
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Variable selection stage of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectorChoice {
    #[default]
    None,
    Lmm,
    Jpta,
    Dgb,
}

impl std::fmt::Display for SelectorChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SelectorChoice::None => "none",
            SelectorChoice::Lmm => "lmm",
            SelectorChoice::Jpta => "jpta",
            SelectorChoice::Dgb => "dgb",
        };
        write!(f, "{s}")
    }
}

/// Cross-validation scheme; the benchmark protocol is leave-one-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CvScheme {
    #[default]
    Loo,
    KFold(usize),
}

/// Settings for the bootstrap-permutation selector stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgbSettings {
    pub replicates: usize,
    /// Networks for the selector stage, which sees raw (pre-extraction)
    /// views; defaults to the experiment networks when unset.
    #[serde(default)]
    pub nets: Option<Vec<NetSpec>>,
    /// Training settings for the selector stage; defaults to the experiment
    /// training settings.
    #[serde(default)]
    pub training: Option<TrainConfig>,
}

impl Default for DgbSettings {
    fn default() -> Self {
        DgbSettings {
            replicates: 20,
            nets: None,
            training: None,
        }
    }
}

/// Settings for the joint trend selector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JptaSettings {
    pub c: f64,
    /// L1 caps; default `max(1, sqrt(p)/2)` per view when unset.
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub c2: Option<f64>,
    pub max_iters: usize,
}

impl Default for JptaSettings {
    fn default() -> Self {
        JptaSettings {
            c: 10.0,
            c1: None,
            c2: None,
            max_iters: 100,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 10_000, 50_000]
}

/// Full experiment description: selector, per-view extractor, per-view
/// network, and the evaluation protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub selector: SelectorChoice,
    /// Variables kept per view when a selector is active.
    #[serde(default)]
    pub keep_counts: Option<Vec<usize>>,
    pub extractors: Vec<ExtractMethod>,
    #[serde(default)]
    pub extract: ExtractParams,
    pub nets: Vec<NetSpec>,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub cv: CvScheme,
    #[serde(default)]
    pub dgb: DgbSettings,
    #[serde(default)]
    pub jpta: JptaSettings,
    /// Z-score extracted features using training-fold statistics.
    #[serde(default)]
    pub standardize_features: bool,
    /// Record per-fold subject usage for hygiene checks.
    #[serde(default)]
    pub record_trace: bool,
}

impl ExperimentConfig {
    pub fn validate(&self, dataset: &MultiViewDataset) -> Result<()> {
        let d = dataset.n_views();
        if self.extractors.len() != d {
            return Err(Error::Config(format!(
                "{} extractors for {d} views",
                self.extractors.len()
            )));
        }
        if self.nets.len() != d {
            return Err(Error::Config(format!("{} nets for {d} views", self.nets.len())));
        }
        for spec in &self.nets {
            spec.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.selector != SelectorChoice::None {
            let counts = self.keep_counts.as_ref().ok_or_else(|| {
                Error::Config("keep_counts is required when a selector is active".into())
            })?;
            if counts.len() != d {
                return Err(Error::Config(format!(
                    "{} keep counts for {d} views",
                    counts.len()
                )));
            }
            if counts.contains(&0) {
                return Err(Error::Config("keep counts must be positive".into()));
            }
        }
        // routing invariant: a longitudinal view without extraction needs a
        // recurrent network; any extractor producing t = 1 needs a dense one
        for (dd, (view, (extractor, net))) in dataset
            .views()
            .iter()
            .zip(self.extractors.iter().zip(&self.nets))
            .enumerate()
        {
            let longitudinal_after = *extractor == ExtractMethod::None && !view.is_cross_sectional();
            match (longitudinal_after, net) {
                (true, NetSpec::Dense { .. }) => {
                    return Err(Error::Config(format!(
                        "view {dd} stays longitudinal but is routed to a dense network"
                    )));
                }
                (false, NetSpec::Gru { .. }) => {
                    return Err(Error::Config(format!(
                        "view {dd} becomes cross-sectional but is routed to a GRU"
                    )));
                }
                _ => {}
            }
        }
        if let CvScheme::KFold(k) = self.cv {
            if k < 2 {
                return Err(Error::Config("k-fold needs k >= 2".into()));
            }
        }
        Ok(())
    }
}

/// Classification metrics with explicit zero-division conventions
/// (0/0 precision, recall, and F1 are all 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    /// `confusion[truth][prediction]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn metrics(predictions: &[usize], truth: &[usize], n_classes: usize) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truth.len()
        )));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::InvalidInput(format!(
                "class code out of range: prediction {p}, truth {t}, K = {n_classes}"
            )));
        }
        confusion[t][p] += 1;
    }
    let total: usize = predictions.len();
    let correct: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
    let accuracy = correct as f64 / total as f64;

    let mut per_class_precision = Vec::with_capacity(n_classes);
    let mut per_class_recall = Vec::with_capacity(n_classes);
    let mut per_class_f1 = Vec::with_capacity(n_classes);
    for k in 0..n_classes {
        let tp = confusion[k][k] as f64;
        let predicted: f64 = (0..n_classes).map(|t| confusion[t][k] as f64).sum();
        let actual: f64 = confusion[k].iter().map(|&c| c as f64).sum();
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class_precision.push(precision);
        per_class_recall.push(recall);
        per_class_f1.push(f1);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(MetricsReport {
        accuracy,
        macro_precision: mean(&per_class_precision),
        macro_recall: mean(&per_class_recall),
        macro_f1: mean(&per_class_f1),
        per_class_precision,
        per_class_recall,
        per_class_f1,
        confusion,
    })
}

/// One held-out prediction.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PredictionRow {
    pub fold: usize,
    pub subject: String,
    pub truth: String,
    pub predicted: String,
}

/// Subject usage per fold, for hygiene assertions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldTrace {
    pub fold: usize,
    pub test_subjects: Vec<String>,
    /// Subjects whose data reached selector fitting.
    pub selector_train_subjects: Vec<String>,
    /// Subjects whose data reached extractor fitting and network training.
    pub model_train_subjects: Vec<String>,
}

/// One full cross-validation pass under a single seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: MetricsReport,
    pub predictions: Vec<PredictionRow>,
    /// Folds whose projection solve hit the sweep cap.
    pub solver_warnings: usize,
}

/// Cross-validation outcome over all seeds.
#[derive(Debug)]
pub struct CvReport {
    pub per_seed: Vec<SeedRun>,
    /// Index into `per_seed` of the best run (highest accuracy, first on
    /// ties); the benchmark protocol reports this one.
    pub best_seed_index: usize,
    /// Combined score tables (per view) from the best seed's folds.
    pub score_tables: Vec<VariableScoreTable>,
    pub traces: Option<Vec<FoldTrace>>,
    pub runtime_seconds: f64,
}

/// Global selection shared by every fold (the joint trend selector is
/// unsupervised and fit once on the entire dataset).
enum GlobalSelection {
    PerFold,
    Fixed {
        kept: Vec<Vec<usize>>,
        tables: Vec<VariableScoreTable>,
    },
}

fn jpta_global_selection(
    dataset: &MultiViewDataset,
    config: &ExperimentConfig,
) -> Result<GlobalSelection> {
    let longitudinal: Vec<usize> = (0..dataset.n_views())
        .filter(|&d| !dataset.view(d).is_cross_sectional())
        .collect();
    if longitudinal.len() < 2 {
        return Err(Error::Config(
            "the joint trend selector needs two longitudinal views".into(),
        ));
    }
    let (a, b) = (longitudinal[0], longitudinal[1]);
    let va = dataset.view(a);
    let vb = dataset.view(b);
    let default_cap = |p: usize| ((p as f64).sqrt() / 2.0).max(1.0);
    let c1 = config.jpta.c1.unwrap_or(default_cap(va.n_variables()));
    let c2 = config.jpta.c2.unwrap_or(default_cap(vb.n_variables()));
    let model = jpta_fit(va, vb, config.jpta.c, c1, c2, config.jpta.max_iters)?;
    let counts = config.keep_counts.as_ref().unwrap();
    let (idx_a, idx_b) = jpta_select(&model, counts[a], counts[b]);

    let mut kept: Vec<Vec<usize>> = (0..dataset.n_views())
        .map(|d| (0..dataset.view(d).n_variables()).collect())
        .collect();
    kept[a] = idx_a;
    kept[b] = idx_b;

    let mut tables = Vec::new();
    for (view_index, loadings) in [(a, &model.u), (b, &model.v)] {
        tables.push(VariableScoreTable {
            view_index,
            variable_names: dataset.view(view_index).variable_names().to_vec(),
            scores: loadings.iter().map(|v| v.abs()).collect(),
            method: SelectorMethod::Jpta,
            flags: vec![None; loadings.len()],
            fold_scores: None,
        });
    }
    Ok(GlobalSelection::Fixed { kept, tables })
}

/// Selection fit on one fold's training subjects.
struct FoldSelection {
    kept: Vec<Vec<usize>>,
    /// Per-view raw scores aligned with the full variable list; `None` for
    /// views the selector does not score.
    scores: Vec<Option<Vec<f64>>>,
}

fn fold_selection(
    train: &MultiViewDataset,
    config: &ExperimentConfig,
    global: &GlobalSelection,
    fold_seed: u64,
) -> Result<FoldSelection> {
    let d = train.n_views();
    match (config.selector, global) {
        (SelectorChoice::None, _) => Ok(FoldSelection {
            kept: (0..d)
                .map(|dd| (0..train.view(dd).n_variables()).collect())
                .collect(),
            scores: vec![None; d],
        }),
        (SelectorChoice::Jpta, GlobalSelection::Fixed { kept, .. }) => Ok(FoldSelection {
            kept: kept.clone(),
            scores: vec![None; d],
        }),
        (SelectorChoice::Lmm, _) => {
            let counts = config.keep_counts.as_ref().unwrap();
            let mut kept = Vec::with_capacity(d);
            let mut scores = Vec::with_capacity(d);
            for dd in 0..d {
                let table = lmm_rank_view(train.view(dd), train.labels(), dd)?;
                kept.push(table.top_indices(counts[dd]));
                scores.push(Some(table.scores));
            }
            Ok(FoldSelection { kept, scores })
        }
        (SelectorChoice::Dgb, _) => {
            let counts = config.keep_counts.as_ref().unwrap();
            let specs = config.dgb.nets.as_ref().unwrap_or(&config.nets);
            let training = config.dgb.training.as_ref().unwrap_or(&config.training);
            let p_dims: Vec<usize> = (0..d).map(|dd| train.view(dd).n_variables()).collect();
            let plan = BootstrapPlan::generate(
                config.dgb.replicates,
                train.n_subjects(),
                &p_dims,
                fold_seed,
            )?;
            let ranking = dgb_rank(train, specs, &plan, training)?;
            let mut kept = Vec::with_capacity(d);
            let mut scores = Vec::with_capacity(d);
            for table in ranking.tables {
                kept.push(table.top_indices(counts[table.view_index]));
                scores.push(Some(table.scores));
            }
            Ok(FoldSelection { kept, scores })
        }
        (SelectorChoice::Jpta, GlobalSelection::PerFold) => unreachable!(),
    }
}

/// Train-fold feature standardization (per variable).
struct Standardizer {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Standardizer {
    fn fit(view: &ViewTensor) -> Self {
        let (n, p, t) = view.values().dim();
        let cells = (n * t) as f64;
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for vi in 0..p {
            let col = view.values().index_axis(ndarray::Axis(1), vi);
            let mean = col.iter().sum::<f64>() / cells;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (cells - 1.0).max(1.0);
            means.push(mean);
            sds.push(var.sqrt().max(1e-12));
        }
        Standardizer { means, sds }
    }

    fn apply(&self, view: &ViewTensor) -> Result<ViewTensor> {
        let (n, p, t) = view.values().dim();
        let mut values = view.values().clone();
        for si in 0..n {
            for vi in 0..p {
                for ti in 0..t {
                    values[(si, vi, ti)] = (values[(si, vi, ti)] - self.means[vi]) / self.sds[vi];
                }
            }
        }
        ViewTensor::new(
            values,
            view.variable_names().to_vec(),
            view.time_labels().to_vec(),
        )
    }
}

struct FoldOutcome {
    predictions: Vec<PredictionRow>,
    selector_scores: Vec<Option<Vec<f64>>>,
    solver_warning: bool,
    trace: FoldTrace,
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    dataset: &MultiViewDataset,
    config: &ExperimentConfig,
    global: &GlobalSelection,
    seed: u64,
    fold: usize,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<FoldOutcome> {
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| dataset.labels()[i]).collect();
    {
        let mut seen = vec![false; dataset.n_classes()];
        for &l in &train_labels {
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::SingleClassFold { fold });
        }
    }
    let train = dataset.select_subjects(train_idx)?;
    let fold_seed = mix_seed(seed, fold as u64);
    let selection = fold_selection(&train, config, global, mix_seed(fold_seed, 1))?;

    // restrict, extract (fit on train only), optionally standardize
    let mut train_views = Vec::with_capacity(dataset.n_views());
    let mut test_views = Vec::with_capacity(dataset.n_views());
    for dd in 0..dataset.n_views() {
        let full_train = train.view(dd).select_variables(&selection.kept[dd])?;
        let full_test = dataset
            .view(dd)
            .select_subjects(test_idx)?
            .select_variables(&selection.kept[dd])?;
        let extractor = fit_extractor(&full_train, config.extractors[dd], &config.extract)?;
        let mut tr = apply_extractor(&extractor, &full_train)?;
        let mut te = apply_extractor(&extractor, &full_test)?;
        if config.standardize_features {
            let std = Standardizer::fit(&tr);
            tr = std.apply(&tr)?;
            te = std.apply(&te)?;
        }
        train_views.push(tr);
        test_views.push(te);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(fold_seed, 2));
    let model = train_deepida_gru(&train_views, &train_labels, &config.nets, &config.training, &mut rng)?;
    let predicted = model.predict(&test_views)?;

    let predictions = test_idx
        .iter()
        .zip(&predicted)
        .map(|(&i, &p)| PredictionRow {
            fold,
            subject: dataset.subject_ids()[i].clone(),
            truth: dataset.class_names()[dataset.labels()[i]].clone(),
            predicted: dataset.class_names()[p].clone(),
        })
        .collect();

    let ids = |idx: &[usize]| -> Vec<String> {
        idx.iter().map(|&i| dataset.subject_ids()[i].clone()).collect()
    };
    let selector_train_subjects = match config.selector {
        // unsupervised global fit sees every subject by design
        SelectorChoice::Jpta => dataset.subject_ids().to_vec(),
        SelectorChoice::None => Vec::new(),
        _ => ids(train_idx),
    };
    Ok(FoldOutcome {
        predictions,
        selector_scores: selection.scores,
        solver_warning: !model.proj.converged,
        trace: FoldTrace {
            fold,
            test_subjects: ids(test_idx),
            selector_train_subjects,
            model_train_subjects: ids(train_idx),
        },
    })
}

/// Fold index sets: leave-one-out, or stratified round-robin k-fold.
fn make_folds(dataset: &MultiViewDataset, scheme: CvScheme) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = dataset.n_subjects();
    match scheme {
        CvScheme::Loo => (0..n)
            .map(|held| {
                let train: Vec<usize> = (0..n).filter(|&i| i != held).collect();
                (train, vec![held])
            })
            .collect(),
        CvScheme::KFold(k) => {
            let mut fold_of = vec![0usize; n];
            for class in 0..dataset.n_classes() {
                for (pos, idx) in (0..n)
                    .filter(|&i| dataset.labels()[i] == class)
                    .enumerate()
                {
                    fold_of[idx] = pos % k;
                }
            }
            (0..k)
                .map(|f| {
                    let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
                    let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
                    (train, test)
                })
                .filter(|(_, test)| !test.is_empty())
                .collect()
        }
    }
}

/// Combine per-fold selector scores into one table per view.
fn combine_tables(
    dataset: &MultiViewDataset,
    config: &ExperimentConfig,
    fold_scores: &[Vec<Option<Vec<f64>>>],
    global: &GlobalSelection,
) -> Result<Vec<VariableScoreTable>> {
    match config.selector {
        SelectorChoice::None => Ok(Vec::new()),
        SelectorChoice::Jpta => match global {
            GlobalSelection::Fixed { tables, .. } => Ok(tables.clone()),
            GlobalSelection::PerFold => Ok(Vec::new()),
        },
        SelectorChoice::Lmm => {
            let mut tables = Vec::new();
            for dd in 0..dataset.n_views() {
                let per_fold: Vec<Vec<f64>> = fold_scores
                    .iter()
                    .filter_map(|f| f[dd].clone())
                    .collect();
                let p = dataset.view(dd).n_variables();
                let mut combined = Vec::with_capacity(p);
                let mut flags = vec![None; p];
                for vi in 0..p {
                    let ps: Vec<f64> = per_fold.iter().map(|f| f[vi]).collect();
                    let fisher = fisher_combine(&ps)?;
                    if fisher.clamped {
                        flags[vi] = Some("zero-pvalue-clamped".to_string());
                    }
                    combined.push(fisher.p_value);
                }
                let scores = normalize_scores(&combined)?;
                tables.push(VariableScoreTable {
                    view_index: dd,
                    variable_names: dataset.view(dd).variable_names().to_vec(),
                    scores,
                    method: SelectorMethod::Lmm,
                    flags,
                    fold_scores: Some(per_fold),
                });
            }
            Ok(tables)
        }
        SelectorChoice::Dgb => {
            let mut tables = Vec::new();
            for dd in 0..dataset.n_views() {
                let per_fold: Vec<Vec<f64>> = fold_scores
                    .iter()
                    .filter_map(|f| f[dd].clone())
                    .collect();
                let p = dataset.view(dd).n_variables();
                let scores: Vec<f64> = (0..p)
                    .map(|vi| {
                        per_fold.iter().map(|f| f[vi]).sum::<f64>() / per_fold.len() as f64
                    })
                    .collect();
                tables.push(VariableScoreTable {
                    view_index: dd,
                    variable_names: dataset.view(dd).variable_names().to_vec(),
                    scores,
                    method: SelectorMethod::Dgb,
                    flags: vec![None; p],
                    fold_scores: Some(per_fold),
                });
            }
            Ok(tables)
        }
    }
}

/// Cross-validate the configured experiment. The full pass runs once per
/// seed; the report carries every seed's metrics and marks the best.
pub fn run_cv(dataset: &MultiViewDataset, config: &ExperimentConfig) -> Result<CvReport> {
    let started = std::time::Instant::now();
    config.validate(dataset)?;
    if dataset.n_subjects() < dataset.n_classes() + 1 {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs at least K + 1 = {} subjects",
            dataset.n_classes() + 1
        )));
    }
    let global = if config.selector == SelectorChoice::Jpta {
        jpta_global_selection(dataset, config)?
    } else {
        GlobalSelection::PerFold
    };
    let folds = make_folds(dataset, config.cv);

    let mut per_seed = Vec::with_capacity(config.seeds.len());
    let mut best_tables: Vec<VariableScoreTable> = Vec::new();
    let mut best_traces: Option<Vec<FoldTrace>> = None;
    let mut best_index = 0usize;
    for (si, &seed) in config.seeds.iter().enumerate() {
        let outcomes: Vec<Result<FoldOutcome>> = folds
            .par_iter()
            .enumerate()
            .map(|(fi, (train_idx, test_idx))| {
                run_fold(dataset, config, &global, seed, fi, train_idx, test_idx)
            })
            .collect();
        let mut predictions = Vec::with_capacity(dataset.n_subjects());
        let mut fold_scores = Vec::with_capacity(folds.len());
        let mut traces = Vec::with_capacity(folds.len());
        let mut solver_warnings = 0usize;
        for outcome in outcomes {
            let outcome = outcome?;
            predictions.extend(outcome.predictions);
            fold_scores.push(outcome.selector_scores);
            solver_warnings += usize::from(outcome.solver_warning);
            traces.push(outcome.trace);
        }
        let name_code = |name: &str| -> usize {
            dataset
                .class_names()
                .iter()
                .position(|c| c == name)
                .expect("prediction names come from class_names")
        };
        let pred_codes: Vec<usize> = predictions.iter().map(|p| name_code(&p.predicted)).collect();
        let truth_codes: Vec<usize> = predictions.iter().map(|p| name_code(&p.truth)).collect();
        let report = metrics(&pred_codes, &truth_codes, dataset.n_classes())?;

        let is_best = per_seed.is_empty()
            || report.accuracy
                > per_seed
                    .iter()
                    .map(|r: &SeedRun| r.metrics.accuracy)
                    .fold(f64::NEG_INFINITY, f64::max);
        if is_best {
            best_index = si;
            best_tables = combine_tables(dataset, config, &fold_scores, &global)?;
            best_traces = config.record_trace.then_some(traces);
        }
        per_seed.push(SeedRun {
            seed,
            metrics: report,
            predictions,
            solver_warnings,
        });
    }

    Ok(CvReport {
        per_seed,
        best_seed_index: best_index,
        score_tables: best_tables,
        traces: best_traces,
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}
