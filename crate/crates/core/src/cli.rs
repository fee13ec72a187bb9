//! Command-line interface: dataset preprocessing, synthetic generation,
//! feature extraction, variable ranking, cross-validation, the synthetic
//! benchmark, and report display.
//!
//! Exit codes: 0 on success, 1 on runtime failure (structured JSON error on
//! stderr), 2 on usage errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    load_dataset, load_masked_dataset, log_pseudo, save_labels, save_view, variance_filter,
    window_average, zero_fraction_filter, MultiViewDataset, ViewTensor,
};
use crate::error::{Error, Result};
use crate::features::{extract_features, AssociationKind, ExtractMethod, ExtractParams};
use crate::nets::NetSpec;
use crate::output;
use crate::pipeline::train::TrainConfig;
use crate::pipeline::{
    run_cv, synth_benchmark, BenchMethod, BenchSettings, ExperimentConfig, JptaSettings,
};
use crate::select::{
    dgb_rank, jpta_fit, lmm_rank_view, BootstrapPlan, SelectorMethod, VariableScoreTable,
};
use crate::synth::{generate_dataset, SynthConfig};

#[derive(Parser)]
#[command(
    name = "deepida",
    version,
    about = "Integration and classification of mixed cross-sectional/longitudinal multiview data"
)]
struct Cli {
    /// Worker threads for folds and replicates (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply preprocessing transforms to long-format view CSVs.
    Preprocess(PreprocessArgs),
    /// Generate the two-view synthetic ARMA benchmark dataset.
    SynthGen(SynthGenArgs),
    /// Reduce one view to cross-sectional features.
    Extract(ExtractArgs),
    /// Rank variables with one of the selection methods.
    Rank(RankArgs),
    /// Cross-validate a configured experiment.
    Cv(CvArgs),
    /// Compare feature extractors on the synthetic generator.
    SynthBench(SynthBenchArgs),
    /// Print a summary of a previous run's report.
    Report(ReportArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long, required = true, num_args = 1.., value_name = "CSV")]
    views: Vec<PathBuf>,
    #[arg(long, value_name = "CSV")]
    labels: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Per-view settings JSON; overrides the shared flags below.
    #[arg(long, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Weeks per window group (requires --window-groups).
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    window_groups: Option<usize>,
    /// Keep variables with a fraction of zeros strictly below this.
    #[arg(long)]
    max_zero_frac: Option<f64>,
    /// Replace v with ln(v + pseudocount).
    #[arg(long)]
    pseudocount: Option<f64>,
    /// Keep variables with sample variance strictly above this.
    #[arg(long)]
    variance_cutoff: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct WindowSpec {
    pub len: usize,
    pub groups: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct PreprocessViewConfig {
    #[serde(default)]
    pub window: Option<WindowSpec>,
    #[serde(default)]
    pub max_zero_frac: Option<f64>,
    #[serde(default)]
    pub pseudocount: Option<f64>,
    #[serde(default)]
    pub variance_cutoff: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub views: Vec<PreprocessViewConfig>,
}

#[derive(Args)]
struct SynthGenArgs {
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    subjects: usize,
    #[arg(long, default_value_t = 250)]
    p1: usize,
    #[arg(long, default_value_t = 250)]
    p2: usize,
    #[arg(long, default_value_t = 20)]
    timepoints: usize,
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, value_name = "CSV")]
    view: PathBuf,
    #[arg(long, value_name = "CSV")]
    labels: PathBuf,
    #[arg(long, value_enum)]
    method: ExtractMethodArg,
    /// EC threshold count.
    #[arg(long, default_value_t = 100)]
    thresholds: usize,
    /// FPC components per variable.
    #[arg(long, default_value_t = 3)]
    components: usize,
    /// Association matrix kind for EC.
    #[arg(long, value_enum, default_value_t = KindArg::Correlation)]
    kind: KindArg,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ExtractMethodArg {
    None,
    Ec,
    Fpca,
    Mean,
}

impl From<ExtractMethodArg> for ExtractMethod {
    fn from(m: ExtractMethodArg) -> Self {
        match m {
            ExtractMethodArg::None => ExtractMethod::None,
            ExtractMethodArg::Ec => ExtractMethod::Ec,
            ExtractMethodArg::Fpca => ExtractMethod::Fpca,
            ExtractMethodArg::Mean => ExtractMethod::Mean,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum KindArg {
    Covariance,
    Correlation,
    Precision,
}

impl From<KindArg> for AssociationKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Covariance => AssociationKind::Covariance,
            KindArg::Correlation => AssociationKind::Correlation,
            KindArg::Precision => AssociationKind::Precision,
        }
    }
}

#[derive(Args)]
struct RankArgs {
    #[arg(long, required = true, num_args = 1.., value_name = "CSV")]
    views: Vec<PathBuf>,
    #[arg(long, value_name = "CSV")]
    labels: PathBuf,
    #[arg(long, value_enum)]
    method: RankMethodArg,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Bootstrap replicates for the permutation ranking.
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON with `nets`, `training`, and `jpta` overrides.
    #[arg(long, value_name = "JSON")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum RankMethodArg {
    Lmm,
    Jpta,
    Dgb,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RankConfig {
    #[serde(default)]
    pub nets: Option<Vec<NetSpec>>,
    #[serde(default)]
    pub training: Option<TrainConfig>,
    #[serde(default)]
    pub jpta: Option<JptaSettings>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long, required = true, num_args = 1.., value_name = "CSV")]
    views: Vec<PathBuf>,
    #[arg(long, value_name = "CSV")]
    labels: PathBuf,
    /// Experiment configuration JSON.
    #[arg(long, value_name = "JSON")]
    config: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Replace the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthBenchArgs {
    /// Covariance-difference cells (eta fixed at 0).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    epsilon: Vec<f64>,
    /// Dynamics-difference cells (epsilon fixed at 0).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    eta: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long, value_delimiter = ',', num_args = 1..,
          default_values_t = vec![BenchMethodArg::DeepidaEc, BenchMethodArg::DeepidaFpc, BenchMethodArg::DeepidaGru])]
    methods: Vec<BenchMethodArg>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    subjects: usize,
    #[arg(long, default_value_t = 20)]
    p1: usize,
    #[arg(long, default_value_t = 20)]
    p2: usize,
    #[arg(long, default_value_t = 20)]
    timepoints: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum, Debug)]
enum BenchMethodArg {
    DeepidaEc,
    DeepidaFpc,
    DeepidaGru,
}

impl std::fmt::Display for BenchMethodArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BenchMethodArg::DeepidaEc => "deepida-ec",
            BenchMethodArg::DeepidaFpc => "deepida-fpc",
            BenchMethodArg::DeepidaGru => "deepida-gru",
        };
        write!(f, "{s}")
    }
}

impl From<BenchMethodArg> for BenchMethod {
    fn from(m: BenchMethodArg) -> Self {
        match m {
            BenchMethodArg::DeepidaEc => BenchMethod::DeepidaEc,
            BenchMethodArg::DeepidaFpc => BenchMethod::DeepidaFpc,
            BenchMethodArg::DeepidaGru => BenchMethod::DeepidaGru,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous run.
    #[arg(long, value_name = "DIR")]
    dir: PathBuf,
}

/// Parse and run; returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(jobs) = cli.jobs {
        // ignore failure when a pool already exists (repeat calls in-process)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string() })
            );
            1
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(args) => run_preprocess(args),
        Command::SynthGen(args) => run_synth_gen(args),
        Command::Extract(args) => run_extract(args),
        Command::Rank(args) => run_rank(args),
        Command::Cv(args) => run_cv_command(args),
        Command::SynthBench(args) => run_synth_bench(args),
        Command::Report(args) => run_report(args),
    }
}

fn run_preprocess(args: PreprocessArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let shared = PreprocessViewConfig {
        window: match (args.window_len, args.window_groups) {
            (Some(len), Some(groups)) => Some(WindowSpec { len, groups }),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "--window-len and --window-groups must be given together".into(),
                ))
            }
        },
        max_zero_frac: args.max_zero_frac,
        pseudocount: args.pseudocount,
        variance_cutoff: args.variance_cutoff,
    };
    let mut config = match &args.config {
        Some(path) => read_json::<PreprocessConfig>(path)?,
        None => PreprocessConfig {
            views: vec![PreprocessViewConfig::default(); args.views.len()],
        },
    };
    if config.views.len() != args.views.len() {
        return Err(Error::Config(format!(
            "{} view configs for {} view files",
            config.views.len(),
            args.views.len()
        )));
    }
    // flags override the config file, per view
    for vc in &mut config.views {
        if shared.window.is_some() {
            vc.window = shared.window.clone();
        }
        if shared.max_zero_frac.is_some() {
            vc.max_zero_frac = shared.max_zero_frac;
        }
        if shared.pseudocount.is_some() {
            vc.pseudocount = shared.pseudocount;
        }
        if shared.variance_cutoff.is_some() {
            vc.variance_cutoff = shared.variance_cutoff;
        }
    }

    let (masked, labels, subject_ids, class_names) =
        load_masked_dataset(&args.views, &args.labels)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut processed = Vec::with_capacity(masked.len());
    for (d, (view, vc)) in masked.into_iter().zip(&config.views).enumerate() {
        let mut tensor = match &vc.window {
            Some(w) => window_average(&view, &subject_ids, w.len, w.groups)?,
            None => {
                if let Some(missing) = view.present.iter().position(|&p| !p) {
                    let (n, p, t) = view.present.dim();
                    let ti = missing % t;
                    let vi = (missing / t) % p;
                    let si = missing / (p * t);
                    let _ = n;
                    return Err(Error::MissingCell {
                        path: args.views[d].clone(),
                        subject: subject_ids[si].clone(),
                        variable: view.variable_names[vi].clone(),
                        time: view.time_labels[ti],
                    });
                }
                ViewTensor::new(view.values, view.variable_names, view.time_labels)?
            }
        };
        if let Some(frac) = vc.max_zero_frac {
            let (filtered, kept) = zero_fraction_filter(&tensor, frac)?;
            log::info!("view {d}: zero-fraction filter kept {} variables", kept.len());
            tensor = filtered;
        }
        if let Some(pc) = vc.pseudocount {
            tensor = log_pseudo(&tensor, pc)?;
        }
        if let Some(cutoff) = vc.variance_cutoff {
            let (filtered, kept) = variance_filter(&tensor, cutoff)?;
            log::info!("view {d}: variance filter kept {} variables", kept.len());
            tensor = filtered;
        }
        processed.push(tensor);
    }
    let dataset = MultiViewDataset::new(processed, labels, subject_ids, class_names)?;
    for (d, view) in dataset.views().iter().enumerate() {
        save_view(
            view,
            dataset.subject_ids(),
            &args.out.join(format!("view_{}.csv", d + 1)),
        )?;
    }
    save_labels(&dataset, &args.out.join("labels.csv"))?;
    output::write_manifest(
        &args.out,
        "preprocess",
        &[],
        output::config_hash(&config),
        started.elapsed().as_secs_f64(),
    )
}

fn run_synth_gen(args: SynthGenArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let config = SynthConfig {
        n_subjects: args.subjects,
        p1: args.p1,
        p2: args.p2,
        t: args.timepoints,
        epsilon: args.epsilon,
        eta: args.eta,
        seed: args.seed,
        burn_in: args.burn_in,
    };
    let dataset = generate_dataset(&config)?;
    crate::dataset::save_dataset(&dataset, &args.out)?;
    output::write_manifest(
        &args.out,
        "synth-gen",
        &[args.seed],
        output::config_hash(&config),
        started.elapsed().as_secs_f64(),
    )
}

fn run_extract(args: ExtractArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let dataset = load_dataset(std::slice::from_ref(&args.view), &args.labels)?;
    let params = ExtractParams {
        ec_thresholds: args.thresholds,
        ec_kind: args.kind.into(),
        fpca_components: args.components,
    };
    let method: ExtractMethod = args.method.into();
    let extracted = extract_features(dataset.view(0), method, &params)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    save_view(
        &extracted,
        dataset.subject_ids(),
        &args.out.join("view_1.csv"),
    )?;
    save_labels(&dataset, &args.out.join("labels.csv"))?;
    output::write_manifest(
        &args.out,
        "extract",
        &[],
        output::config_hash(&serde_json::json!({
            "method": method,
            "params": params,
        })),
        started.elapsed().as_secs_f64(),
    )
}

fn default_rank_nets(dataset: &MultiViewDataset) -> Vec<NetSpec> {
    dataset
        .views()
        .iter()
        .map(|v| {
            if v.is_cross_sectional() {
                NetSpec::Dense {
                    layers: vec![16, 8],
                    activation: Default::default(),
                }
            } else {
                NetSpec::Gru {
                    hidden: 8,
                    layers: 1,
                }
            }
        })
        .collect()
}

fn run_rank(args: RankArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let dataset = load_dataset(&args.views, &args.labels)?;
    let config = match &args.config {
        Some(path) => read_json::<RankConfig>(path)?,
        None => RankConfig::default(),
    };
    let tables: Vec<VariableScoreTable> = match args.method {
        RankMethodArg::Lmm => (0..dataset.n_views())
            .map(|d| lmm_rank_view(dataset.view(d), dataset.labels(), d))
            .collect::<Result<Vec<_>>>()?,
        RankMethodArg::Jpta => {
            let longitudinal: Vec<usize> = (0..dataset.n_views())
                .filter(|&d| !dataset.view(d).is_cross_sectional())
                .collect();
            if longitudinal.len() < 2 {
                return Err(Error::Config(
                    "jpta ranking needs two longitudinal views".into(),
                ));
            }
            let (a, b) = (longitudinal[0], longitudinal[1]);
            let settings = config.jpta.clone().unwrap_or_default();
            let cap = |p: usize| ((p as f64).sqrt() / 2.0).max(1.0);
            let model = jpta_fit(
                dataset.view(a),
                dataset.view(b),
                settings.c,
                settings.c1.unwrap_or(cap(dataset.view(a).n_variables())),
                settings.c2.unwrap_or(cap(dataset.view(b).n_variables())),
                settings.max_iters,
            )?;
            // selection is a downstream cut; the table carries all loadings
            [(a, &model.u), (b, &model.v)]
                .into_iter()
                .map(|(d, loadings)| VariableScoreTable {
                    view_index: d,
                    variable_names: dataset.view(d).variable_names().to_vec(),
                    scores: loadings.iter().map(|v| v.abs()).collect(),
                    method: SelectorMethod::Jpta,
                    flags: vec![None; loadings.len()],
                    fold_scores: None,
                })
                .collect()
        }
        RankMethodArg::Dgb => {
            let nets = config
                .nets
                .clone()
                .unwrap_or_else(|| default_rank_nets(&dataset));
            let training = config.training.clone().unwrap_or_default();
            let p_dims: Vec<usize> = dataset.views().iter().map(|v| v.n_variables()).collect();
            let plan =
                BootstrapPlan::generate(args.replicates, dataset.n_subjects(), &p_dims, args.seed)?;
            let ranking = dgb_rank(&dataset, &nets, &plan, &training)?;
            for w in &ranking.warnings {
                log::warn!("{w}");
            }
            ranking.tables
        }
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    for table in &tables {
        output::write_score_table(&args.out, table)?;
    }
    output::write_manifest(
        &args.out,
        "rank",
        &[args.seed],
        output::config_hash(&serde_json::json!({
            "method": match args.method {
                RankMethodArg::Lmm => "lmm",
                RankMethodArg::Jpta => "jpta",
                RankMethodArg::Dgb => "dgb",
            },
            "replicates": args.replicates,
            "config": config,
        })),
        started.elapsed().as_secs_f64(),
    )
}

fn run_cv_command(args: CvArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let dataset = load_dataset(&args.views, &args.labels)?;
    let mut config: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    let report = run_cv(&dataset, &config)?;
    output::write_cv_outputs(&args.out, &report, &config)?;
    output::write_manifest(
        &args.out,
        "cv",
        &config.seeds,
        output::config_hash(&config),
        started.elapsed().as_secs_f64(),
    )
}

fn run_synth_bench(args: SynthBenchArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let mut grid: Vec<(f64, f64)> = args.epsilon.iter().map(|&e| (e, 0.0)).collect();
    grid.extend(args.eta.iter().map(|&h| (0.0, h)));
    if grid.is_empty() {
        return Err(Error::Config(
            "give at least one --epsilon or --eta value".into(),
        ));
    }
    let settings = BenchSettings {
        n_subjects: args.subjects,
        p1: args.p1,
        p2: args.p2,
        t: args.timepoints,
        replicates: args.replicates,
        methods: args.methods.iter().map(|&m| m.into()).collect(),
        seed: args.seed,
        ..BenchSettings::default()
    };
    let rows = synth_benchmark(&grid, &settings)?;
    output::write_bench_outputs(&args.out, &rows)?;
    output::write_manifest(
        &args.out,
        "synth-bench",
        &[args.seed],
        output::config_hash(&settings),
        started.elapsed().as_secs_f64(),
    )
}

fn run_report(args: ReportArgs) -> Result<()> {
    let path = args.dir.join("report.json");
    let value: serde_json::Value = read_json(&path)?;
    if let Some(cells) = value.get("cells").and_then(|c| c.as_array()) {
        println!("benchmark cells:");
        for cell in cells {
            println!(
                "  epsilon={} eta={}: {}",
                cell["epsilon"], cell["eta"],
                serde_json::to_string(&cell["median_accuracy"]).unwrap_or_default()
            );
        }
        return Ok(());
    }
    let best = value
        .get("best_seed")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| Error::Config(format!("{} has no best_seed", path.display())))?;
    println!("best seed: {best}");
    if let Some(runs) = value.get("per_seed").and_then(|r| r.as_array()) {
        println!("seed        accuracy  precision  recall    f1");
        for run in runs {
            let m = &run["metrics"];
            println!(
                "{:<10}  {:<8.4}  {:<9.4}  {:<8.4}  {:<8.4}",
                run["seed"],
                m["accuracy"].as_f64().unwrap_or(f64::NAN),
                m["macro_precision"].as_f64().unwrap_or(f64::NAN),
                m["macro_recall"].as_f64().unwrap_or(f64::NAN),
                m["macro_f1"].as_f64().unwrap_or(f64::NAN),
            );
        }
    }
    Ok(())
}
