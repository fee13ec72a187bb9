//! One-dimensional feature extraction from longitudinal views.
//!
//! Three reductions to cross-sectional form are provided:
//!
//! - **Euler-characteristic curves**: each subject's variable-association
//!   matrix is read as an edge-weighted graph and filtered at a sequence of
//!   increasing thresholds; the curve of `#vertices - #edges` values is the
//!   feature vector.
//! - **Functional PCA**: per variable, the N subject curves are projected
//!   onto the top principal modes of their discretized covariance; the scores
//!   of all variables are stacked.
//! - **Time mean**: plain averaging over the time axis.
//!
//! Extractors follow a fit/apply split so cross-validation can fit thresholds
//! and bases on training subjects only.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::dataset::ViewTensor;
use crate::error::{Error, Result};

/// Association matrix flavor used to build the per-subject graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AssociationKind {
    Covariance,
    /// Scale-free default.
    #[default]
    Correlation,
    /// Inverse covariance, ridge-stabilized before inversion.
    Precision,
}

/// Euler characteristics along an increasing threshold sequence.
///
/// `chi[i] = p - #edges(threshold[i])`, so the curve is non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EcCurve {
    pub thresholds: Vec<f64>,
    pub chi: Vec<i64>,
}

/// Per-variable functional principal components on the shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FpcBasis {
    /// `x` orthonormal component vectors of length `t`.
    pub components: Vec<DVector<f64>>,
    pub mean_curve: DVector<f64>,
    /// Non-increasing, one per component.
    pub explained_variance: Vec<f64>,
}

/// Association matrix of a `p x t` series, treating time points as samples.
///
/// The output is symmetrized bit-exactly. Correlation errors on constant
/// variables (named); precision adds a ridge of `1e-3 * trace / p` before
/// inversion and errors if the result is still singular.
pub fn association_matrix(
    series: &DMatrix<f64>,
    kind: AssociationKind,
    variable_names: Option<&[String]>,
) -> Result<DMatrix<f64>> {
    let (p, t) = (series.nrows(), series.ncols());
    if t < 2 {
        return Err(Error::InvalidInput(
            "association matrix needs at least 2 time points".into(),
        ));
    }
    let mut centered = series.clone();
    for i in 0..p {
        let mean = series.row(i).sum() / t as f64;
        for j in 0..t {
            centered[(i, j)] -= mean;
        }
    }
    let mut cov = &centered * centered.transpose() / (t as f64 - 1.0);
    match kind {
        AssociationKind::Covariance => {}
        AssociationKind::Correlation => {
            let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
            if let Some(bad) = sd.iter().position(|&s| s == 0.0 || !s.is_finite()) {
                let name = variable_names
                    .and_then(|n| n.get(bad).cloned())
                    .unwrap_or_else(|| format!("#{}", bad + 1));
                return Err(Error::ConstantVariable { variable: name });
            }
            for i in 0..p {
                for j in 0..p {
                    cov[(i, j)] /= sd[i] * sd[j];
                }
            }
            for i in 0..p {
                cov[(i, i)] = 1.0;
            }
        }
        AssociationKind::Precision => {
            let ridge = 1e-3 * cov.trace() / p as f64;
            for i in 0..p {
                cov[(i, i)] += ridge;
            }
            cov = cov.try_inverse().ok_or(Error::SingularMatrix {
                context: "precision matrix inversion".into(),
            })?;
        }
    }
    // exact symmetry contract
    let mut out = cov.clone();
    for i in 0..p {
        for j in 0..p {
            out[(i, j)] = 0.5 * (cov[(i, j)] + cov[(j, i)]);
        }
    }
    Ok(out)
}

/// Euler characteristic curve of the weighted graph encoded by a symmetric
/// matrix: at threshold `l` the filtered graph keeps edge (i, j) iff
/// `weights[(i, j)] <= l`. The diagonal is ignored.
pub fn ec_curve(weights: &DMatrix<f64>, thresholds: &[f64]) -> Result<EcCurve> {
    let p = weights.nrows();
    if p == 0 || weights.ncols() != p {
        return Err(Error::ShapeMismatch(format!(
            "weights must be square and non-empty, got {p} x {}",
            weights.ncols()
        )));
    }
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("threshold list is empty".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "thresholds must be strictly increasing".into(),
        ));
    }
    let mut edge_weights: Vec<f64> = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            edge_weights.push(weights[(i, j)]);
        }
    }
    edge_weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let chi = thresholds
        .iter()
        .map(|&l| {
            let kept = edge_weights.partition_point(|&w| w <= l);
            p as i64 - kept as i64
        })
        .collect();
    Ok(EcCurve {
        thresholds: thresholds.to_vec(),
        chi,
    })
}

/// `count` equally spaced thresholds spanning the off-diagonal weight range,
/// inclusive. A degenerate range (all off-diagonals equal) collapses to the
/// single repeated value.
pub fn default_thresholds(weights: &DMatrix<f64>, count: usize) -> Result<Vec<f64>> {
    let p = weights.nrows();
    if p < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 variables to have edges".into(),
        ));
    }
    if count < 2 {
        return Err(Error::InvalidInput("threshold count must be >= 2".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..p {
        for j in (i + 1)..p {
            lo = lo.min(weights[(i, j)]);
            hi = hi.max(weights[(i, j)]);
        }
    }
    Ok(linspace(lo, hi, count))
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Discretized FPCA of `N` curves sampled on a shared grid of length `t`.
///
/// Components are the top eigenvectors of the `t x t` sample covariance of the
/// centered curves. Equal eigenvalues are ordered by the index of each
/// vector's largest-magnitude entry; signs are fixed so that entry is
/// positive.
pub fn fpca_fit(curves: &DMatrix<f64>, n_components: usize) -> Result<FpcBasis> {
    let (n, t) = (curves.nrows(), curves.ncols());
    if n_components == 0 {
        return Err(Error::InvalidInput("n_components must be >= 1".into()));
    }
    if n_components > n.min(t) {
        return Err(Error::InvalidInput(format!(
            "n_components = {n_components} exceeds min(N, t) = {}",
            n.min(t)
        )));
    }
    let mean_curve = DVector::from_fn(t, |j, _| curves.column(j).sum() / n as f64);
    let mut centered = curves.clone();
    for i in 0..n {
        for j in 0..t {
            centered[(i, j)] -= mean_curve[j];
        }
    }
    let denom = if n > 1 { n as f64 - 1.0 } else { 1.0 };
    let cov = centered.transpose() * &centered / denom;
    let eig = cov.symmetric_eigen();

    let largest_entry_index = |v: &DVector<f64>| -> usize {
        let mut best = 0;
        for i in 1..v.len() {
            if v[i].abs() > v[best].abs() {
                best = i;
            }
        }
        best
    };
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then_with(|| {
                let va = eig.eigenvectors.column(a).into_owned();
                let vb = eig.eigenvectors.column(b).into_owned();
                largest_entry_index(&va).cmp(&largest_entry_index(&vb))
            })
    });

    let mut components = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &idx in order.iter().take(n_components) {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let pivot = largest_entry_index(&v);
        if v[pivot] < 0.0 {
            v = -v;
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(FpcBasis {
        components,
        mean_curve,
        explained_variance,
    })
}

/// Project centered curves onto the basis: `score[n][i] = <curve_n - mean, f_i>`.
pub fn fpca_scores(basis: &FpcBasis, curves: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = basis.mean_curve.len();
    if curves.ncols() != t {
        return Err(Error::ShapeMismatch(format!(
            "curves have {} points, basis has {t}",
            curves.ncols()
        )));
    }
    let n = curves.nrows();
    let x = basis.components.len();
    let mut scores = DMatrix::<f64>::zeros(n, x);
    for ni in 0..n {
        for (xi, f) in basis.components.iter().enumerate() {
            let mut s = 0.0;
            for j in 0..t {
                s += (curves[(ni, j)] - basis.mean_curve[j]) * f[j];
            }
            scores[(ni, xi)] = s;
        }
    }
    Ok(scores)
}

/// Collapse the time axis by arithmetic mean. `t = 1` input passes through
/// unchanged apart from the time label.
pub fn time_mean(view: &ViewTensor) -> Result<ViewTensor> {
    let (n, p, t) = view.values().dim();
    let mut values = Array3::<f64>::zeros((n, p, 1));
    for si in 0..n {
        for vi in 0..p {
            let mut sum = 0.0;
            for ti in 0..t {
                sum += view.values()[(si, vi, ti)];
            }
            values[(si, vi, 0)] = sum / t as f64;
        }
    }
    ViewTensor::new(values, view.variable_names().to_vec(), vec![1.0])
}

/// Feature extraction method for one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExtractMethod {
    #[default]
    None,
    Ec,
    Fpca,
    Mean,
}

impl std::fmt::Display for ExtractMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExtractMethod::None => "none",
            ExtractMethod::Ec => "ec",
            ExtractMethod::Fpca => "fpca",
            ExtractMethod::Mean => "mean",
        };
        write!(f, "{s}")
    }
}

/// Parameters for the data-dependent extractors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractParams {
    /// Number of EC thresholds (the benchmark default is 100).
    pub ec_thresholds: usize,
    pub ec_kind: AssociationKind,
    /// FPC components per variable.
    pub fpca_components: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            ec_thresholds: 100,
            ec_kind: AssociationKind::Correlation,
            fpca_components: 3,
        }
    }
}

/// A fitted extractor; fitting sees training subjects only, application is
/// per-subject and stateless.
#[derive(Debug, Clone)]
pub enum FittedExtractor {
    None,
    /// Shared threshold grid over the training subjects' weight ranges.
    Ec {
        kind: AssociationKind,
        thresholds: Vec<f64>,
    },
    /// One basis per variable.
    Fpca { bases: Vec<FpcBasis> },
    Mean,
}

fn subject_series(view: &ViewTensor, si: usize) -> DMatrix<f64> {
    let (_, p, t) = view.values().dim();
    DMatrix::from_fn(p, t, |vi, ti| view.values()[(si, vi, ti)])
}

fn variable_curves(view: &ViewTensor, vi: usize) -> DMatrix<f64> {
    let (n, _, t) = view.values().dim();
    DMatrix::from_fn(n, t, |si, ti| view.values()[(si, vi, ti)])
}

/// Fit an extractor on a (training) view.
pub fn fit_extractor(
    view: &ViewTensor,
    method: ExtractMethod,
    params: &ExtractParams,
) -> Result<FittedExtractor> {
    match method {
        ExtractMethod::None => Ok(FittedExtractor::None),
        ExtractMethod::Mean => Ok(FittedExtractor::Mean),
        ExtractMethod::Ec => {
            if view.is_cross_sectional() {
                return Err(Error::InvalidInput(
                    "EC extraction requires a longitudinal view".into(),
                ));
            }
            if view.n_variables() < 2 {
                return Err(Error::InvalidInput(
                    "EC extraction needs at least 2 variables".into(),
                ));
            }
            // global weight range over all training subjects
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for si in 0..view.n_subjects() {
                let w = association_matrix(
                    &subject_series(view, si),
                    params.ec_kind,
                    Some(view.variable_names()),
                )?;
                for i in 0..w.nrows() {
                    for j in (i + 1)..w.ncols() {
                        lo = lo.min(w[(i, j)]);
                        hi = hi.max(w[(i, j)]);
                    }
                }
            }
            Ok(FittedExtractor::Ec {
                kind: params.ec_kind,
                thresholds: linspace(lo, hi, params.ec_thresholds.max(1)),
            })
        }
        ExtractMethod::Fpca => {
            if view.is_cross_sectional() {
                return Err(Error::InvalidInput(
                    "FPCA extraction requires a longitudinal view".into(),
                ));
            }
            let mut bases = Vec::with_capacity(view.n_variables());
            for vi in 0..view.n_variables() {
                bases.push(fpca_fit(&variable_curves(view, vi), params.fpca_components)?);
            }
            Ok(FittedExtractor::Fpca { bases })
        }
    }
}

/// Apply a fitted extractor to a view (training or held-out subjects).
pub fn apply_extractor(extractor: &FittedExtractor, view: &ViewTensor) -> Result<ViewTensor> {
    match extractor {
        FittedExtractor::None => Ok(view.clone()),
        FittedExtractor::Mean => time_mean(view),
        FittedExtractor::Ec { kind, thresholds } => {
            let n = view.n_subjects();
            let x = thresholds.len();
            let mut values = Array3::<f64>::zeros((n, x, 1));
            for si in 0..n {
                let w = association_matrix(
                    &subject_series(view, si),
                    *kind,
                    Some(view.variable_names()),
                )?;
                let curve = ec_curve(&w, thresholds)?;
                for (i, &chi) in curve.chi.iter().enumerate() {
                    values[(si, i, 0)] = chi as f64;
                }
            }
            let names = (1..=x).map(|i| format!("ec_{i:03}")).collect();
            ViewTensor::new(values, names, vec![1.0])
        }
        FittedExtractor::Fpca { bases } => {
            if bases.len() != view.n_variables() {
                return Err(Error::ShapeMismatch(format!(
                    "{} FPCA bases for {} variables",
                    bases.len(),
                    view.n_variables()
                )));
            }
            let n = view.n_subjects();
            let x = bases.first().map_or(0, |b| b.components.len());
            let mut values = Array3::<f64>::zeros((n, view.n_variables() * x, 1));
            let mut names = Vec::with_capacity(view.n_variables() * x);
            for (vi, basis) in bases.iter().enumerate() {
                let scores = fpca_scores(basis, &variable_curves(view, vi))?;
                for c in 0..x {
                    names.push(format!("{}_fpc{}", view.variable_names()[vi], c + 1));
                    for si in 0..n {
                        // variable-major stacking
                        values[(si, vi * x + c, 0)] = scores[(si, c)];
                    }
                }
            }
            ViewTensor::new(values, names, vec![1.0])
        }
    }
}

/// Fit on the view and apply it in one call (no train/test split).
pub fn extract_features(
    view: &ViewTensor,
    method: ExtractMethod,
    params: &ExtractParams,
) -> Result<ViewTensor> {
    let fitted = fit_extractor(view, method, params)?;
    apply_extractor(&fitted, view)
}
