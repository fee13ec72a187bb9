//! Bootstrap-plus-permutation variable ranking driven by the joint model.
//!
//! Each replicate pairs a bootstrap subject multiset with a random 80%
//! variable subset per view, trains the joint model on the pair, and measures
//! out-of-bag accuracy. A variable scores a point whenever permuting its
//! out-of-bag values (a subject's whole time series moves as a block)
//! strictly reduces accuracy. The final score is
//!
//! ```text
//! eff_prop(u) = S_u / #replicates whose variable subset contains u
//! ```
//!
//! Replicates are independent; each owns an RNG stream derived from
//! `seed XOR replicate-index`, so concurrent execution is deterministic.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{MultiViewDataset, ViewTensor};
use crate::error::{Error, Result};
use crate::nets::NetSpec;
use crate::pipeline::train::{train_deepida_gru, TrainConfig};

use super::{SelectorMethod, VariableScoreTable};

/// Pre-drawn bootstrap subject multisets and per-view variable subsets.
#[derive(Debug, Clone)]
pub struct BootstrapPlan {
    pub replicates: usize,
    /// `subject_sets[m]` has exactly N entries drawn with replacement.
    pub subject_sets: Vec<Vec<usize>>,
    /// `variable_sets[m][d]` holds ceil(0.8 p_d) distinct sorted indices.
    pub variable_sets: Vec<Vec<Vec<usize>>>,
    pub seed: u64,
}

impl BootstrapPlan {
    /// Draw a plan for `n` subjects and the given per-view variable counts.
    pub fn generate(replicates: usize, n: usize, p_dims: &[usize], seed: u64) -> Result<Self> {
        if replicates == 0 || n == 0 || p_dims.is_empty() {
            return Err(Error::InvalidInput(
                "bootstrap plan needs replicates, subjects, and views".into(),
            ));
        }
        let mut subject_sets = Vec::with_capacity(replicates);
        let mut variable_sets = Vec::with_capacity(replicates);
        for m in 0..replicates {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ m as u64);
            let subjects: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut views = Vec::with_capacity(p_dims.len());
            for &p in p_dims {
                let keep = (0.8 * p as f64).ceil() as usize;
                let mut indices: Vec<usize> = (0..p).collect();
                indices.shuffle(&mut rng);
                indices.truncate(keep.max(1));
                indices.sort_unstable();
                views.push(indices);
            }
            subject_sets.push(subjects);
            variable_sets.push(views);
        }
        Ok(BootstrapPlan {
            replicates,
            subject_sets,
            variable_sets,
            seed,
        })
    }

    pub fn validate_against(&self, dataset: &MultiViewDataset) -> Result<()> {
        let n = dataset.n_subjects();
        for set in &self.subject_sets {
            if set.len() != n || set.iter().any(|&s| s >= n) {
                return Err(Error::InvalidInput(
                    "bootstrap subject sets do not match the dataset".into(),
                ));
            }
        }
        for views in &self.variable_sets {
            if views.len() != dataset.n_views() {
                return Err(Error::InvalidInput(
                    "bootstrap variable sets do not match the view count".into(),
                ));
            }
            for (d, set) in views.iter().enumerate() {
                if set.iter().any(|&v| v >= dataset.view(d).n_variables()) {
                    return Err(Error::InvalidInput(format!(
                        "bootstrap variable set out of range for view {d}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Copy a view with one variable's rows permuted across subjects; the whole
/// time series of a subject moves together.
fn permute_variable(view: &ViewTensor, variable: usize, perm: &[usize]) -> Result<ViewTensor> {
    let (n, p, t) = view.values().dim();
    let mut values = view.values().clone();
    for si in 0..n {
        let src = perm[si];
        for ti in 0..t {
            values[(si, variable, ti)] = view.values()[(src, variable, ti)];
        }
    }
    debug_assert_eq!(values.dim(), (n, p, t));
    ViewTensor::new(
        values,
        view.variable_names().to_vec(),
        view.time_labels().to_vec(),
    )
}

/// Per-replicate tallies, reduced in replicate order after the parallel map.
struct ReplicateOutcome {
    /// Per view: (variable index, strict decrease observed).
    hits: Vec<Vec<(usize, bool)>>,
    skipped: Option<String>,
}

fn has_all_classes(labels: &[usize], k: usize) -> bool {
    let mut seen = vec![false; k];
    for &l in labels {
        seen[l] = true;
    }
    seen.iter().all(|&s| s)
}

fn run_replicate(
    dataset: &MultiViewDataset,
    specs: &[NetSpec],
    train_config: &TrainConfig,
    plan: &BootstrapPlan,
    m: usize,
) -> Result<ReplicateOutcome> {
    let subjects = &plan.subject_sets[m];
    let in_bag: std::collections::HashSet<usize> = subjects.iter().copied().collect();
    let oob: Vec<usize> = (0..dataset.n_subjects())
        .filter(|s| !in_bag.contains(s))
        .collect();
    if oob.is_empty() {
        return Ok(ReplicateOutcome {
            hits: vec![Vec::new(); dataset.n_views()],
            skipped: Some(format!("replicate {m}: out-of-bag set is empty")),
        });
    }
    let k = dataset.n_classes();
    let train_labels: Vec<usize> = subjects.iter().map(|&s| dataset.labels()[s]).collect();
    if !has_all_classes(&train_labels, k) {
        return Ok(ReplicateOutcome {
            hits: vec![Vec::new(); dataset.n_views()],
            skipped: Some(format!("replicate {m}: bootstrap set lost a class")),
        });
    }

    let variable_sets = &plan.variable_sets[m];
    let train_views: Vec<ViewTensor> = dataset
        .views()
        .iter()
        .zip(variable_sets)
        .map(|(v, vars)| v.select_variables(vars)?.select_subjects(subjects))
        .collect::<Result<Vec<_>>>()?;
    let oob_views: Vec<ViewTensor> = dataset
        .views()
        .iter()
        .zip(variable_sets)
        .map(|(v, vars)| v.select_variables(vars)?.select_subjects(&oob))
        .collect::<Result<Vec<_>>>()?;
    let oob_labels: Vec<usize> = oob.iter().map(|&s| dataset.labels()[s]).collect();

    let mut train_rng =
        ChaCha8Rng::seed_from_u64((plan.seed ^ m as u64).wrapping_add(0x9E37_79B9_7F4A_7C15));
    let model = train_deepida_gru(&train_views, &train_labels, specs, train_config, &mut train_rng)?;
    let baseline = model.accuracy(&oob_views, &oob_labels)?;

    let mut perm_rng =
        ChaCha8Rng::seed_from_u64((plan.seed ^ m as u64).wrapping_add(0x517C_C1B7_2722_0A95));
    let mut hits = Vec::with_capacity(dataset.n_views());
    for (d, vars) in variable_sets.iter().enumerate() {
        let mut view_hits = Vec::with_capacity(vars.len());
        for (local_idx, &var) in vars.iter().enumerate() {
            let mut perm: Vec<usize> = (0..oob.len()).collect();
            perm.shuffle(&mut perm_rng);
            let permuted = permute_variable(&oob_views[d], local_idx, &perm)?;
            let mut probe_views: Vec<ViewTensor> = oob_views.clone();
            probe_views[d] = permuted;
            let acc = model.accuracy(&probe_views, &oob_labels)?;
            view_hits.push((var, acc < baseline));
        }
        hits.push(view_hits);
    }
    Ok(ReplicateOutcome {
        hits,
        skipped: None,
    })
}

/// Outcome of a full ranking run: one table per view plus replicate warnings.
#[derive(Debug)]
pub struct DgbRanking {
    pub tables: Vec<VariableScoreTable>,
    pub warnings: Vec<String>,
}

/// Rank every variable by its bootstrap permutation importance.
pub fn dgb_rank(
    dataset: &MultiViewDataset,
    specs: &[NetSpec],
    plan: &BootstrapPlan,
    train_config: &TrainConfig,
) -> Result<DgbRanking> {
    plan.validate_against(dataset)?;
    if specs.len() != dataset.n_views() {
        return Err(Error::Config(format!(
            "{} network specs for {} views",
            specs.len(),
            dataset.n_views()
        )));
    }

    let outcomes: Vec<Result<ReplicateOutcome>> = (0..plan.replicates)
        .into_par_iter()
        .map(|m| run_replicate(dataset, specs, train_config, plan, m))
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let variable_names: Vec<Vec<String>> = dataset
        .views()
        .iter()
        .map(|v| v.variable_names().to_vec())
        .collect();
    let (tables, warnings) = aggregate_outcomes(outcomes, &variable_names);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DgbRanking { tables, warnings })
}

/// Reduce per-replicate hit records to score tables: a variable's score is
/// the fraction of the replicates that contain it in which permuting it
/// strictly reduced accuracy. Never-sampled variables score 0, flagged.
fn aggregate_outcomes(
    outcomes: Vec<ReplicateOutcome>,
    variable_names: &[Vec<String>],
) -> (Vec<VariableScoreTable>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut scores: Vec<Vec<f64>> = variable_names.iter().map(|n| vec![0.0; n.len()]).collect();
    let mut counts: Vec<Vec<usize>> = variable_names.iter().map(|n| vec![0; n.len()]).collect();
    for outcome in outcomes {
        if let Some(w) = outcome.skipped {
            warnings.push(w);
            continue;
        }
        for (d, view_hits) in outcome.hits.iter().enumerate() {
            for &(var, hit) in view_hits {
                counts[d][var] += 1;
                if hit {
                    scores[d][var] += 1.0;
                }
            }
        }
    }
    let tables = variable_names
        .iter()
        .enumerate()
        .map(|(d, names)| {
            let mut eff = vec![0.0; names.len()];
            let mut flags = vec![None; names.len()];
            for v in 0..names.len() {
                if counts[d][v] > 0 {
                    eff[v] = scores[d][v] / counts[d][v] as f64;
                } else {
                    flags[v] = Some("never-sampled".to_string());
                }
            }
            VariableScoreTable {
                view_index: d,
                variable_names: names.clone(),
                scores: eff,
                method: SelectorMethod::Dgb,
                flags,
                fold_scores: None,
            }
        })
        .collect();
    (tables, warnings)
}
