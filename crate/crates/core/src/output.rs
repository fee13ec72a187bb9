//! Run output directory layout and the reproducibility manifest.
//!
//! Every CLI run writes `manifest.json` (version, seeds, config hash, wall
//! time) into its output directory. Cross-validation runs add `report.json`,
//! `metrics.csv`, `predictions.csv`, and `scores_view<d>.csv`; benchmark runs
//! add `boxplot.csv`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::{BenchRow, CvReport, ExperimentConfig};
use crate::select::VariableScoreTable;

/// `git describe` when available, the crate version otherwise.
pub fn version_string() -> String {
    let described = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    described.unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

/// SHA-256 of the canonical (serde-serialized) configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).unwrap_or_default();
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub wall_time_seconds: f64,
    pub timestamp_unix: u64,
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    seeds: &[u64],
    config_hash: String,
    wall_time_seconds: f64,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = RunManifest {
        version: version_string(),
        command: command.to_string(),
        seeds: seeds.to_vec(),
        config_hash,
        wall_time_seconds,
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| Error::io(&path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// `scores_view<d>.csv` with columns `view,variable,score,method,flag`.
pub fn write_score_table(dir: &Path, table: &VariableScoreTable) -> Result<PathBuf> {
    let path = dir.join(format!("scores_view{}.csv", table.view_index + 1));
    let mut w = create(&path)?;
    writeln!(w, "view,variable,score,method,flag").map_err(|e| Error::io(&path, e))?;
    for ((name, score), flag) in table
        .variable_names
        .iter()
        .zip(&table.scores)
        .zip(&table.flags)
    {
        writeln!(
            w,
            "{},{name},{score},{},{}",
            table.view_index + 1,
            table.method,
            flag.as_deref().unwrap_or("")
        )
        .map_err(|e| Error::io(&path, e))?;
    }
    Ok(path)
}

#[derive(Serialize)]
struct CvReportJson<'a> {
    config: &'a ExperimentConfig,
    best_seed: u64,
    best_seed_index: usize,
    runtime_seconds: f64,
    per_seed: &'a [crate::pipeline::SeedRun],
    traces: &'a Option<Vec<crate::pipeline::FoldTrace>>,
}

/// Write the full cross-validation output layout into `dir`.
pub fn write_cv_outputs(dir: &Path, report: &CvReport, config: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report_path = dir.join("report.json");
    let json = CvReportJson {
        config,
        best_seed: report.per_seed[report.best_seed_index].seed,
        best_seed_index: report.best_seed_index,
        runtime_seconds: report.runtime_seconds,
        per_seed: &report.per_seed,
        traces: &report.traces,
    };
    std::fs::write(&report_path, serde_json::to_string_pretty(&json).unwrap())
        .map_err(|e| Error::io(&report_path, e))?;

    let metrics_path = dir.join("metrics.csv");
    let mut w = create(&metrics_path)?;
    writeln!(
        w,
        "seed,accuracy,macro_precision,macro_recall,macro_f1,best"
    )
    .map_err(|e| Error::io(&metrics_path, e))?;
    for (i, run) in report.per_seed.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            run.seed,
            run.metrics.accuracy,
            run.metrics.macro_precision,
            run.metrics.macro_recall,
            run.metrics.macro_f1,
            i == report.best_seed_index
        )
        .map_err(|e| Error::io(&metrics_path, e))?;
    }
    drop(w);

    let pred_path = dir.join("predictions.csv");
    let mut w = create(&pred_path)?;
    writeln!(w, "seed,fold,subject,truth,predicted").map_err(|e| Error::io(&pred_path, e))?;
    for run in &report.per_seed {
        for p in &run.predictions {
            writeln!(w, "{},{},{},{},{}", run.seed, p.fold, p.subject, p.truth, p.predicted)
                .map_err(|e| Error::io(&pred_path, e))?;
        }
    }
    drop(w);

    for table in &report.score_tables {
        write_score_table(dir, table)?;
    }
    Ok(())
}

/// `boxplot.csv` with columns `method,epsilon,eta,replicate,accuracy`.
pub fn write_bench_outputs(dir: &Path, rows: &[BenchRow]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("boxplot.csv");
    let mut w = create(&path)?;
    writeln!(w, "method,epsilon,eta,replicate,accuracy").map_err(|e| Error::io(&path, e))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.method, r.epsilon, r.eta, r.replicate, r.accuracy
        )
        .map_err(|e| Error::io(&path, e))?;
    }
    drop(w);

    // cell medians summary alongside the raw rows
    let mut cells: Vec<(f64, f64)> = rows.iter().map(|r| (r.epsilon, r.eta)).collect();
    cells.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cells.dedup();
    let summary: Vec<serde_json::Value> = cells
        .into_iter()
        .map(|(e, h)| {
            let medians: serde_json::Map<String, serde_json::Value> =
                crate::pipeline::cell_medians(rows, e, h)
                    .into_iter()
                    .map(|(m, v)| (m, serde_json::json!(v)))
                    .collect();
            serde_json::json!({"epsilon": e, "eta": h, "median_accuracy": medians})
        })
        .collect();
    let report_path = dir.join("report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&serde_json::json!({ "cells": summary })).unwrap(),
    )
    .map_err(|e| Error::io(&report_path, e))
}
