//! Synthetic benchmark comparing the feature extractors on the two-view
//! ARMA generator: per grid cell and replicate, generate a dataset, split
//! 80/20 stratified, train each method, and record test accuracy.
//!
//! The grid is restricted to single-knob cells: covariance difference only
//! (`epsilon > 0, eta = 0`), dynamics difference only (`epsilon = 0, eta > 0`),
//! or the null cell (`0, 0`).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::features::{apply_extractor, fit_extractor, ExtractMethod, ExtractParams};
use crate::nets::{Activation, NetSpec};
use crate::synth::{generate_dataset, SynthConfig};

use super::train::{train_deepida_gru, TrainConfig};
use super::mix_seed;

/// One benchmarked pipeline variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    /// Euler-characteristic curves into dense networks.
    DeepidaEc,
    /// Functional PC scores into dense networks.
    DeepidaFpc,
    /// Raw longitudinal views into recurrent networks.
    DeepidaGru,
}

impl std::fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BenchMethod::DeepidaEc => "deepida_ec",
            BenchMethod::DeepidaFpc => "deepida_fpc",
            BenchMethod::DeepidaGru => "deepida_gru",
        };
        write!(f, "{s}")
    }
}

/// Benchmark scale and method settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSettings {
    pub n_subjects: usize,
    pub p1: usize,
    pub p2: usize,
    pub t: usize,
    pub replicates: usize,
    pub methods: Vec<BenchMethod>,
    pub seed: u64,
    #[serde(default)]
    pub extract: ExtractParams,
    /// Hidden widths of the dense stacks used after extraction.
    #[serde(default = "default_dense_layers")]
    pub dense_layers: Vec<usize>,
    #[serde(default = "default_gru_hidden")]
    pub gru_hidden: usize,
    #[serde(default = "default_gru_layers")]
    pub gru_layers: usize,
    #[serde(default)]
    pub training: TrainConfig,
}

fn default_dense_layers() -> Vec<usize> {
    vec![32, 16, 8]
}

fn default_gru_hidden() -> usize {
    8
}

fn default_gru_layers() -> usize {
    1
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            n_subjects: 200,
            p1: 20,
            p2: 20,
            t: 20,
            replicates: 20,
            methods: vec![
                BenchMethod::DeepidaEc,
                BenchMethod::DeepidaFpc,
                BenchMethod::DeepidaGru,
            ],
            seed: 0,
            extract: ExtractParams::default(),
            dense_layers: default_dense_layers(),
            gru_hidden: default_gru_hidden(),
            gru_layers: default_gru_layers(),
            training: TrainConfig::default(),
        }
    }
}

/// One benchmark measurement, ready for box-plot aggregation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub epsilon: f64,
    pub eta: f64,
    pub replicate: usize,
    pub accuracy: f64,
}

/// Deterministic stratified 80/20 split: within each class (in subject
/// order), every fifth subject is held out.
fn stratified_split(dataset: &MultiViewDataset) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..dataset.n_classes() {
        for (pos, idx) in (0..dataset.n_subjects())
            .filter(|&i| dataset.labels()[i] == class)
            .enumerate()
        {
            if pos % 5 == 4 {
                test.push(idx);
            } else {
                train.push(idx);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn run_method(
    dataset: &MultiViewDataset,
    method: BenchMethod,
    settings: &BenchSettings,
    train_idx: &[usize],
    test_idx: &[usize],
    rng_seed: u64,
) -> Result<f64> {
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| dataset.labels()[i]).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| dataset.labels()[i]).collect();

    let extract_method = match method {
        BenchMethod::DeepidaEc => ExtractMethod::Ec,
        BenchMethod::DeepidaFpc => ExtractMethod::Fpca,
        BenchMethod::DeepidaGru => ExtractMethod::None,
    };
    let mut train_views = Vec::with_capacity(dataset.n_views());
    let mut test_views = Vec::with_capacity(dataset.n_views());
    for view in dataset.views() {
        let tr_raw = view.select_subjects(train_idx)?;
        let te_raw = view.select_subjects(test_idx)?;
        let extractor = fit_extractor(&tr_raw, extract_method, &settings.extract)?;
        train_views.push(apply_extractor(&extractor, &tr_raw)?);
        test_views.push(apply_extractor(&extractor, &te_raw)?);
    }
    let specs: Vec<NetSpec> = match method {
        BenchMethod::DeepidaGru => vec![
            NetSpec::Gru {
                hidden: settings.gru_hidden,
                layers: settings.gru_layers,
            };
            dataset.n_views()
        ],
        _ => vec![
            NetSpec::Dense {
                layers: settings.dense_layers.clone(),
                activation: Activation::Relu,
            };
            dataset.n_views()
        ],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let model = train_deepida_gru(&train_views, &train_labels, &specs, &settings.training, &mut rng)?;
    model.accuracy(&test_views, &test_labels)
}

/// Run the benchmark over `(epsilon, eta)` cells. Replicates run in parallel
/// with derived seeds; rows come back in (cell, replicate, method) order.
pub fn synth_benchmark(grid: &[(f64, f64)], settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    if grid.is_empty() || settings.replicates == 0 || settings.methods.is_empty() {
        return Err(Error::InvalidInput(
            "benchmark needs grid cells, replicates, and methods".into(),
        ));
    }
    for &(epsilon, eta) in grid {
        if epsilon > 0.0 && eta > 0.0 {
            return Err(Error::InvalidInput(format!(
                "cell ({epsilon}, {eta}) mixes both differences; vary one knob at a time"
            )));
        }
    }
    let mut rows = Vec::new();
    for (cell_idx, &(epsilon, eta)) in grid.iter().enumerate() {
        let cell_rows: Vec<Result<Vec<BenchRow>>> = (0..settings.replicates)
            .into_par_iter()
            .map(|rep| {
                let cell_seed = mix_seed(settings.seed, (cell_idx as u64) << 32 | rep as u64);
                let dataset = generate_dataset(&SynthConfig {
                    n_subjects: settings.n_subjects,
                    p1: settings.p1,
                    p2: settings.p2,
                    t: settings.t,
                    epsilon,
                    eta,
                    seed: cell_seed,
                    burn_in: 0,
                })?;
                let (train_idx, test_idx) = stratified_split(&dataset);
                settings
                    .methods
                    .iter()
                    .map(|&method| {
                        let accuracy = run_method(
                            &dataset,
                            method,
                            settings,
                            &train_idx,
                            &test_idx,
                            mix_seed(cell_seed, method as u64 + 1),
                        )?;
                        Ok(BenchRow {
                            method: method.to_string(),
                            epsilon,
                            eta,
                            replicate: rep,
                            accuracy,
                        })
                    })
                    .collect()
            })
            .collect();
        for r in cell_rows {
            rows.extend(r?);
        }
    }
    Ok(rows)
}

/// Median of a slice (averaged middle pair on even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median accuracy per method for one grid cell.
pub fn cell_medians(rows: &[BenchRow], epsilon: f64, eta: f64) -> Vec<(String, f64)> {
    let mut methods: Vec<String> = rows
        .iter()
        .filter(|r| r.epsilon == epsilon && r.eta == eta)
        .map(|r| r.method.clone())
        .collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|m| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == m && r.epsilon == epsilon && r.eta == eta)
                .map(|r| r.accuracy)
                .collect();
            let med = median(&acc);
            (m, med)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_disjoint() {
        let dataset = generate_dataset(&SynthConfig {
            n_subjects: 50,
            p1: 2,
            p2: 2,
            t: 3,
            epsilon: 0.0,
            eta: 0.0,
            seed: 1,
            burn_in: 0,
        })
        .unwrap();
        let (train, test) = stratified_split(&dataset);
        assert_eq!(train.len() + test.len(), 50);
        for i in &test {
            assert!(!train.contains(i));
        }
        // both classes in both splits
        for split in [&train, &test] {
            let classes: std::collections::HashSet<usize> =
                split.iter().map(|&i| dataset.labels()[i]).collect();
            assert_eq!(classes.len(), 2);
        }
        // roughly 80/20
        assert!(test.len() >= 8 && test.len() <= 12);
    }

    #[test]
    fn mixed_grid_cell_rejected() {
        let settings = BenchSettings {
            replicates: 1,
            ..BenchSettings::default()
        };
        assert!(synth_benchmark(&[(0.5, 0.5)], &settings).is_err());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn tiny_benchmark_runs_end_to_end() {
        let settings = BenchSettings {
            n_subjects: 30,
            p1: 4,
            p2: 4,
            t: 8,
            replicates: 2,
            methods: vec![BenchMethod::DeepidaEc, BenchMethod::DeepidaFpc],
            seed: 3,
            extract: ExtractParams {
                ec_thresholds: 10,
                fpca_components: 2,
                ..ExtractParams::default()
            },
            dense_layers: vec![4, 2],
            training: TrainConfig {
                max_epochs: 5,
                ..TrainConfig::default()
            },
            ..BenchSettings::default()
        };
        let rows = synth_benchmark(&[(1.0, 0.0)], &settings).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.accuracy));
        }
        // deterministic
        let again = synth_benchmark(&[(1.0, 0.0)], &settings).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
        }
    }
}
