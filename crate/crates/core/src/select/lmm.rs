//! Per-variable random-intercept linear mixed model testing, Fisher
//! combination of fold p-values, and score normalization.
//!
//! For one variable's observations `y` with subject grouping, times, and
//! classes, two nested models are fit by maximum likelihood:
//!
//! ```text
//! null: y ~ 1 + time + covariates + (1 | subject)
//! full: null + class
//! ```
//!
//! and the likelihood-ratio statistic is referred to a chi-squared
//! distribution with `K - 1` degrees of freedom. The random-intercept
//! structure makes `V = sigma^2 (I + gamma Z Z')` block diagonal per subject,
//! so the profile likelihood in `gamma = sigma_b^2 / sigma^2` costs O(n) per
//! evaluation; it is maximized by golden-section search.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Upper tail of the chi-squared distribution with `df` degrees of freedom.
pub fn chi_squared_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df / 2.0, x / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmmResult {
    pub p_value: f64,
    /// Set when the design carries no information (constant response, single
    /// class, or a singular design); the p-value is then 1.
    pub degenerate: bool,
}

/// Observations grouped by subject for the block-diagonal algebra.
struct Grouped {
    /// Row ranges per subject in the row-sorted design.
    group_rows: Vec<Vec<usize>>,
}

fn group_by_subject(subjects: &[usize]) -> Grouped {
    let n_groups = subjects.iter().max().map_or(0, |m| m + 1);
    let mut group_rows = vec![Vec::new(); n_groups];
    for (row, &s) in subjects.iter().enumerate() {
        group_rows[s].push(row);
    }
    group_rows.retain(|rows| !rows.is_empty());
    Grouped { group_rows }
}

/// Minus two times the profile log-likelihood at variance ratio `gamma`,
/// along with the GLS coefficient solve. Returns None for singular designs.
fn neg2_loglik(x: &DMatrix<f64>, y: &DVector<f64>, grouped: &Grouped, gamma: f64) -> Option<f64> {
    let n = y.len();
    let q = x.ncols();
    let mut xtvx = DMatrix::<f64>::zeros(q, q);
    let mut xtvy = DVector::<f64>::zeros(q);
    let mut logdet = 0.0;
    for rows in &grouped.group_rows {
        let ni = rows.len() as f64;
        let c = gamma / (1.0 + gamma * ni);
        logdet += (1.0 + gamma * ni).ln();
        let mut sx = DVector::<f64>::zeros(q);
        let mut sy = 0.0;
        for &r in rows {
            let xr = x.row(r).transpose();
            xtvx += &xr * x.row(r);
            xtvy += &xr * y[r];
            sx += xr;
            sy += y[r];
        }
        xtvx -= &sx * sx.transpose() * c;
        xtvy -= &sx * (sy * c);
    }
    let beta = xtvx.clone().cholesky()?.solve(&xtvy);
    let resid = y - x * &beta;
    let mut rss = 0.0;
    for rows in &grouped.group_rows {
        let ni = rows.len() as f64;
        let c = gamma / (1.0 + gamma * ni);
        let mut sr = 0.0;
        for &r in rows {
            rss += resid[r] * resid[r];
            sr += resid[r];
        }
        rss -= c * sr * sr;
    }
    if rss <= 0.0 {
        return None;
    }
    let sigma2 = rss / n as f64;
    Some(n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() + logdet + n as f64)
}

/// Maximize the profile likelihood over `gamma >= 0`; returns the best
/// -2 log-likelihood. Golden-section over log10(gamma) plus the boundary.
fn fit_ml(x: &DMatrix<f64>, y: &DVector<f64>, grouped: &Grouped) -> Option<f64> {
    let eval = |log_gamma: f64| neg2_loglik(x, y, grouped, 10f64.powf(log_gamma));
    let mut best = neg2_loglik(x, y, grouped, 0.0)?;

    let (mut lo, mut hi) = (-8.0f64, 6.0f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut m1 = hi - phi * (hi - lo);
    let mut m2 = lo + phi * (hi - lo);
    let mut f1 = eval(m1)?;
    let mut f2 = eval(m2)?;
    for _ in 0..80 {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - phi * (hi - lo);
            f1 = eval(m1)?;
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + phi * (hi - lo);
            f2 = eval(m2)?;
        }
    }
    best = best.min(f1).min(f2);
    Some(best)
}

/// Likelihood-ratio p-value for the class effect on one variable.
///
/// `subjects` and `classes` are dense 0-based codes per observation;
/// `covariates` are optional extra fixed-effect columns.
pub fn lmm_pvalue(
    values: &[f64],
    subjects: &[usize],
    times: &[f64],
    classes: &[usize],
    covariates: Option<&DMatrix<f64>>,
) -> Result<LmmResult> {
    let n = values.len();
    if subjects.len() != n || times.len() != n || classes.len() != n {
        return Err(Error::ShapeMismatch(
            "values, subjects, times, and classes must have equal length".into(),
        ));
    }
    if let Some(cov) = covariates {
        if cov.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "covariates have {} rows for {n} observations",
                cov.nrows()
            )));
        }
    }
    if n < 3 {
        return Err(Error::InvalidInput(
            "need at least 3 observations for the likelihood-ratio test".into(),
        ));
    }

    let k = classes.iter().max().map_or(0, |m| m + 1);
    let degenerate = LmmResult {
        p_value: 1.0,
        degenerate: true,
    };
    if k < 2 {
        return Ok(degenerate);
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Ok(degenerate);
    }

    let q_cov = covariates.map_or(0, |c| c.ncols());
    let q_null = 2 + q_cov;
    let mut x_null = DMatrix::<f64>::zeros(n, q_null);
    for r in 0..n {
        x_null[(r, 0)] = 1.0;
        x_null[(r, 1)] = times[r];
        if let Some(cov) = covariates {
            for c in 0..q_cov {
                x_null[(r, 2 + c)] = cov[(r, c)];
            }
        }
    }
    let mut x_full = DMatrix::<f64>::zeros(n, q_null + k - 1);
    x_full.view_mut((0, 0), (n, q_null)).copy_from(&x_null);
    for r in 0..n {
        let cls = classes[r];
        if cls > 0 {
            x_full[(r, q_null + cls - 1)] = 1.0;
        }
    }

    let grouped = group_by_subject(subjects);
    let y = DVector::from_column_slice(values);
    let (Some(null_fit), Some(full_fit)) = (
        fit_ml(&x_null, &y, &grouped),
        fit_ml(&x_full, &y, &grouped),
    ) else {
        return Ok(degenerate);
    };
    let lrt = (null_fit - full_fit).max(0.0);
    Ok(LmmResult {
        p_value: chi_squared_sf(lrt, (k - 1) as f64),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherCombined {
    pub p_value: f64,
    /// True when an exact-zero input was clamped to the smallest positive
    /// normal float before taking logs.
    pub clamped: bool,
}

/// Fisher combination: `X = -2 sum(ln p_i)` referred to chi-squared with
/// `2 len` degrees of freedom.
pub fn fisher_combine(p_values: &[f64]) -> Result<FisherCombined> {
    if p_values.is_empty() {
        return Err(Error::InvalidInput("no p-values to combine".into()));
    }
    let mut clamped = false;
    let mut statistic = 0.0;
    for &p in p_values {
        if p < 0.0 || p > 1.0 {
            return Err(Error::InvalidInput(format!(
                "p-value {p} outside [0, 1]"
            )));
        }
        let p = if p == 0.0 {
            clamped = true;
            f64::MIN_POSITIVE
        } else {
            p
        };
        statistic -= 2.0 * p.ln();
    }
    Ok(FisherCombined {
        p_value: chi_squared_sf(statistic, 2.0 * p_values.len() as f64),
        clamped,
    })
}

/// Normalize Fisher-combined p-values to comparable scores: add the minimum
/// nonzero value to every entry, take negative logs, divide by the maximum.
/// Exact zeros therefore share the top score. A degenerate zero maximum
/// (all entries equal after the shift) maps every variable to 1.
pub fn normalize_scores(fisher_ps: &[f64]) -> Result<Vec<f64>> {
    if fisher_ps.is_empty() {
        return Err(Error::InvalidInput("no scores to normalize".into()));
    }
    if fisher_ps.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidInput(
            "scores must be finite and non-negative".into(),
        ));
    }
    let min_nonzero = fisher_ps
        .iter()
        .copied()
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min_nonzero.is_finite() {
        return Err(Error::InvalidInput(
            "all combined p-values are zero; cannot normalize".into(),
        ));
    }
    let logs: Vec<f64> = fisher_ps.iter().map(|&p| -(p + min_nonzero).ln()).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == 0.0 {
        return Ok(vec![1.0; logs.len()]);
    }
    Ok(logs.iter().map(|&l| l / max).collect())
}
