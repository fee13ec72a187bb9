//! Variable selection and ranking: per-variable mixed-model testing with
//! Fisher combination, the sparse joint trend decomposition, and the
//! bootstrap permutation ranking.

pub mod dgb;
pub mod jpta;
pub mod lmm;

use serde::{Deserialize, Serialize};

use crate::dataset::ViewTensor;
use crate::error::Result;

pub use dgb::{dgb_rank, BootstrapPlan, DgbRanking};
pub use jpta::{jpta_fit, jpta_select, spline_basis, JptaModel};
pub use lmm::{fisher_combine, lmm_pvalue, normalize_scores, FisherCombined, LmmResult};

/// Which ranking method produced a score table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorMethod {
    Lmm,
    Jpta,
    Dgb,
}

impl std::fmt::Display for SelectorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SelectorMethod::Lmm => "lmm",
            SelectorMethod::Jpta => "jpta",
            SelectorMethod::Dgb => "dgb",
        };
        write!(f, "{s}")
    }
}

/// Ranked variables of one view with per-variable scores.
///
/// Scores are p-values for `lmm` (smaller is better), `eff_prop` values for
/// `dgb`, and absolute loadings for `jpta` (larger is better for both).
#[derive(Debug, Clone)]
pub struct VariableScoreTable {
    pub view_index: usize,
    pub variable_names: Vec<String>,
    pub scores: Vec<f64>,
    pub method: SelectorMethod,
    pub flags: Vec<Option<String>>,
    /// Per-fold scores `[fold][variable]` when the selector was refit per
    /// cross-validation fold.
    pub fold_scores: Option<Vec<Vec<f64>>>,
}

impl VariableScoreTable {
    /// Indices of the `k` best variables (method-appropriate order), ties to
    /// the lower index, returned sorted ascending.
    pub fn top_indices(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        match self.method {
            SelectorMethod::Lmm => order.sort_by(|&a, &b| {
                self.scores[a]
                    .partial_cmp(&self.scores[b])
                    .unwrap()
                    .then(a.cmp(&b))
            }),
            SelectorMethod::Jpta | SelectorMethod::Dgb => order.sort_by(|&a, &b| {
                self.scores[b]
                    .partial_cmp(&self.scores[a])
                    .unwrap()
                    .then(a.cmp(&b))
            }),
        }
        let mut chosen: Vec<usize> = order.into_iter().take(k.min(self.scores.len())).collect();
        chosen.sort_unstable();
        chosen
    }
}

/// Per-variable mixed-model p-values for one view.
///
/// Each variable's observations are unrolled over (subject, time); the
/// subject index is the random-effect grouping and the subject's class is the
/// tested fixed effect.
pub fn lmm_rank_view(
    view: &ViewTensor,
    labels: &[usize],
    view_index: usize,
) -> Result<VariableScoreTable> {
    let (n, p, t) = view.values().dim();
    let mut scores = Vec::with_capacity(p);
    let mut flags = Vec::with_capacity(p);
    let mut subjects = Vec::with_capacity(n * t);
    let mut times = Vec::with_capacity(n * t);
    let mut classes = Vec::with_capacity(n * t);
    for si in 0..n {
        for ti in 0..t {
            subjects.push(si);
            times.push(view.time_labels()[ti]);
            classes.push(labels[si]);
        }
    }
    let mut values = Vec::with_capacity(n * t);
    for vi in 0..p {
        values.clear();
        for si in 0..n {
            for ti in 0..t {
                values.push(view.values()[(si, vi, ti)]);
            }
        }
        let r = lmm_pvalue(&values, &subjects, &times, &classes, None)?;
        scores.push(r.p_value);
        flags.push(r.degenerate.then(|| "degenerate".to_string()));
    }
    Ok(VariableScoreTable {
        view_index,
        variable_names: view.variable_names().to_vec(),
        scores,
        method: SelectorMethod::Lmm,
        flags,
        fold_scores: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn top_indices_respects_method_direction() {
        let table = VariableScoreTable {
            view_index: 0,
            variable_names: vec!["a".into(), "b".into(), "c".into()],
            scores: vec![0.5, 0.01, 0.2],
            method: SelectorMethod::Lmm,
            flags: vec![None, None, None],
            fold_scores: None,
        };
        assert_eq!(table.top_indices(2), vec![1, 2]);

        let table = VariableScoreTable {
            method: SelectorMethod::Dgb,
            ..table
        };
        assert_eq!(table.top_indices(2), vec![0, 2]);
    }

    #[test]
    fn top_indices_breaks_ties_to_lower_index() {
        let table = VariableScoreTable {
            view_index: 0,
            variable_names: vec!["a".into(), "b".into(), "c".into()],
            scores: vec![0.7, 0.7, 0.7],
            method: SelectorMethod::Dgb,
            flags: vec![None, None, None],
            fold_scores: None,
        };
        assert_eq!(table.top_indices(2), vec![0, 1]);
    }

    #[test]
    fn lmm_rank_view_flags_degenerate_variables() {
        let n = 12;
        let mut values = Array3::<f64>::zeros((n, 2, 3));
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        for si in 0..n {
            for ti in 0..3 {
                values[(si, 0, ti)] = 5.0; // constant -> degenerate
                values[(si, 1, ti)] =
                    labels[si] as f64 * 4.0 + (si as f64 * 0.37).sin() + ti as f64 * 0.1;
            }
        }
        let view = ViewTensor::new(
            values,
            vec!["flat".into(), "signal".into()],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let table = lmm_rank_view(&view, &labels, 0).unwrap();
        assert_eq!(table.flags[0].as_deref(), Some("degenerate"));
        assert_eq!(table.scores[0], 1.0);
        assert!(table.scores[1] < 0.01);
        assert_eq!(table.top_indices(1), vec![1]);
    }
}
