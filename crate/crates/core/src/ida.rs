//! Integrative discriminant analysis: scatter matrices, the joint
//! separation/association trace objective, projection solving via a system of
//! generalized eigenproblems, the objective gradient with respect to the
//! network outputs, and the nearest-centroid classifier.
//!
//! For view outputs `H_d` (o_d x N) with class partition `k(n)`:
//!
//! ```text
//! mu_{d,k} = class mean of columns,   mu_d = (1/K) sum_k mu_{d,k}
//! B_d  = 1/(N-1) sum_k N_k (mu_{d,k} - mu_d)(mu_{d,k} - mu_d)'
//! T_d  = 1/(N-1) sum_n (h_d(n) - mu_d)(h_d(n) - mu_d)'
//! C_ij = 1/(N-1) sum_n (h_i(n) - mu_i)(h_j(n) - mu_j)'
//! ```
//!
//! Note `mu_d` is the unweighted mean of class means everywhere, including
//! inside `T_d` and `C_ij`; for unbalanced classes this differs from the grand
//! sample mean, and the formulas are followed literally.
//!
//! The objective, maximized subject to `Tr[P_d' T_d P_d] = ell` per view:
//!
//! ```text
//! L = rho/D * sum_d Tr[P_d' B_d P_d]
//!   + 2(1-rho)/(D(D-1)) * sum_i sum_{j != i} Tr[P_i' C_ij P_j P_j' C_ij' P_i]
//! ```

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Scatter matrices of one set of view outputs.
#[derive(Debug, Clone)]
pub struct ScatterSet {
    /// Between-class scatter per view, symmetric PSD.
    pub between: Vec<DMatrix<f64>>,
    /// Total scatter per view, symmetric PSD.
    pub total: Vec<DMatrix<f64>>,
    /// Cross-view scatter for pairs i < j in lexicographic order.
    cross: Vec<DMatrix<f64>>,
    /// Class means `[view][class]`.
    pub class_means: Vec<Vec<DVector<f64>>>,
    /// Unweighted mean of class means, per view.
    pub grand_means: Vec<DVector<f64>>,
    pub class_counts: Vec<usize>,
    pub n_samples: usize,
}

fn pair_index(i: usize, j: usize, d: usize) -> usize {
    debug_assert!(i < j && j < d);
    // lexicographic position of (i, j) among pairs with i < j
    i * d - i * (i + 1) / 2 + (j - i - 1)
}

impl ScatterSet {
    pub fn n_views(&self) -> usize {
        self.between.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.between.iter().map(|m| m.nrows()).collect()
    }

    /// Cross-view scatter `C_ij` for any ordered pair (the stored matrix or
    /// its transpose).
    pub fn cross(&self, i: usize, j: usize) -> DMatrix<f64> {
        let d = self.n_views();
        if i < j {
            self.cross[pair_index(i, j, d)].clone()
        } else {
            self.cross[pair_index(j, i, d)].transpose()
        }
    }

    /// Build scatter matrices directly from parts; intended for tests that
    /// construct small instances by hand.
    pub fn from_parts(
        between: Vec<DMatrix<f64>>,
        total: Vec<DMatrix<f64>>,
        cross_upper: Vec<DMatrix<f64>>,
        class_means: Vec<Vec<DVector<f64>>>,
        grand_means: Vec<DVector<f64>>,
        class_counts: Vec<usize>,
        n_samples: usize,
    ) -> Self {
        ScatterSet {
            between,
            total,
            cross: cross_upper,
            class_means,
            grand_means,
            class_counts,
            n_samples,
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Compute the scatter set of view outputs `H_d` (columns are subjects).
pub fn scatter_matrices(outputs: &[DMatrix<f64>], labels: &[usize]) -> Result<ScatterSet> {
    if outputs.is_empty() {
        return Err(Error::InvalidInput("no view outputs".into()));
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "scatter matrices need at least 2 samples".into(),
        ));
    }
    for (d, h) in outputs.iter().enumerate() {
        if h.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "view {d} has {} columns, labels have {n}",
                h.ncols()
            )));
        }
    }
    let k = labels.iter().max().unwrap() + 1;
    let mut class_counts = vec![0usize; k];
    for &l in labels {
        class_counts[l] += 1;
    }
    if let Some(empty) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class: empty });
    }

    let n_views = outputs.len();
    let mut class_means = Vec::with_capacity(n_views);
    let mut grand_means = Vec::with_capacity(n_views);
    for h in outputs {
        let o = h.nrows();
        let mut means = vec![DVector::<f64>::zeros(o); k];
        for (col, &l) in labels.iter().enumerate() {
            means[l] += h.column(col);
        }
        for (ki, m) in means.iter_mut().enumerate() {
            *m /= class_counts[ki] as f64;
        }
        let grand = means.iter().fold(DVector::zeros(o), |acc, m| acc + m) / k as f64;
        class_means.push(means);
        grand_means.push(grand);
    }

    let denom = (n - 1) as f64;
    let mut between = Vec::with_capacity(n_views);
    let mut total = Vec::with_capacity(n_views);
    for d in 0..n_views {
        let o = outputs[d].nrows();
        let mut b = DMatrix::<f64>::zeros(o, o);
        for ki in 0..k {
            let diff = &class_means[d][ki] - &grand_means[d];
            b += &diff * diff.transpose() * class_counts[ki] as f64;
        }
        b /= denom;
        symmetrize(&mut b);
        between.push(b);

        let mut t = DMatrix::<f64>::zeros(o, o);
        for col in 0..n {
            let diff = outputs[d].column(col) - &grand_means[d];
            t += &diff * diff.transpose();
        }
        t /= denom;
        symmetrize(&mut t);
        total.push(t);
    }

    let mut cross = Vec::new();
    for i in 0..n_views {
        for j in (i + 1)..n_views {
            let mut c = DMatrix::<f64>::zeros(outputs[i].nrows(), outputs[j].nrows());
            for col in 0..n {
                let ci = outputs[i].column(col) - &grand_means[i];
                let cj = outputs[j].column(col) - &grand_means[j];
                c += ci * cj.transpose();
            }
            c /= denom;
            cross.push(c);
        }
    }

    Ok(ScatterSet {
        between,
        total,
        cross,
        class_means,
        grand_means,
        class_counts,
        n_samples: n,
    })
}

/// Per-view projections solved against one scatter set.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    /// `P_d` is o_d x ell.
    pub bases: Vec<DMatrix<f64>>,
    pub ell: usize,
    pub rho: f64,
    /// False when the alternating solve hit the sweep cap before the loss
    /// plateaued; the best iterate is still returned.
    pub converged: bool,
    /// Objective value after each full sweep over the views.
    pub sweep_losses: Vec<f64>,
}

impl ProjectionBasis {
    /// Write `<base>.bin` (flat little-endian f64, column-major per view) and
    /// `<base>.json` (shapes), matching the network checkpoint format.
    pub fn save_checkpoint(&self, base: &std::path::Path) -> Result<()> {
        let bin_path = base.with_extension("bin");
        let mut bytes = Vec::new();
        for p in &self.bases {
            for v in p.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::File::create(&bin_path)
            .and_then(|mut f| std::io::Write::write_all(&mut f, &bytes))
            .map_err(|e| Error::io(&bin_path, e))?;
        let manifest = serde_json::json!({
            "format": "f64-le",
            "ell": self.ell,
            "rho": self.rho,
            "converged": self.converged,
            "shapes": self.bases.iter().map(|p| [p.nrows(), p.ncols()]).collect::<Vec<_>>(),
        });
        let json_path = base.with_extension("json");
        std::fs::write(&json_path, serde_json::to_string_pretty(&manifest).unwrap())
            .map_err(|e| Error::io(&json_path, e))
    }

    /// Read a basis written by [`ProjectionBasis::save_checkpoint`].
    pub fn load_checkpoint(base: &std::path::Path) -> Result<Self> {
        let json_path = base.with_extension("json");
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?,
        )
        .map_err(|e| Error::Config(format!("{}: {e}", json_path.display())))?;
        let shapes: Vec<(usize, usize)> = manifest["shapes"]
            .as_array()
            .ok_or_else(|| Error::Config("checkpoint manifest lacks shapes".into()))?
            .iter()
            .map(|s| {
                (
                    s[0].as_u64().unwrap_or(0) as usize,
                    s[1].as_u64().unwrap_or(0) as usize,
                )
            })
            .collect();
        let bin_path = base.with_extension("bin");
        let bytes = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        let expected: usize = shapes.iter().map(|&(r, c)| r * c).sum::<usize>() * 8;
        if bytes.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint {} has {} bytes, shapes need {expected}",
                bin_path.display(),
                bytes.len()
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let bases = shapes
            .iter()
            .map(|&(r, c)| DMatrix::from_iterator(r, c, values.by_ref().take(r * c)))
            .collect();
        Ok(ProjectionBasis {
            bases,
            ell: manifest["ell"].as_u64().unwrap_or(0) as usize,
            rho: manifest["rho"].as_f64().unwrap_or(0.5),
            converged: manifest["converged"].as_bool().unwrap_or(true),
            sweep_losses: Vec::new(),
        })
    }
}

/// `ell = min(K-1, o_1, ..., o_D)`.
pub fn projection_dim(n_classes: usize, output_dims: &[usize]) -> usize {
    output_dims
        .iter()
        .copied()
        .fold(n_classes.saturating_sub(1), usize::min)
}

/// The maximized objective. For `D = 1` the association term is zero by
/// definition (and `rho < 1` leaves part of the weight vacuous).
pub fn ida_loss(scatter: &ScatterSet, proj: &ProjectionBasis) -> f64 {
    let d = scatter.n_views();
    if d == 1 && proj.rho < 1.0 {
        log::warn!("single view with rho < 1: the association term is vacuous");
    }
    loss_of_bases(scatter, &proj.bases, proj.rho)
}

fn loss_of_bases(scatter: &ScatterSet, bases: &[DMatrix<f64>], rho: f64) -> f64 {
    let d = scatter.n_views();
    let mut separation = 0.0;
    for (vi, p) in bases.iter().enumerate() {
        separation += (p.transpose() * &scatter.between[vi] * p).trace();
    }
    let mut loss = rho / d as f64 * separation;
    if d > 1 {
        let coeff = 2.0 * (1.0 - rho) / (d as f64 * (d - 1) as f64);
        let mut association = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let m = scatter.cross(i, j);
                let projected = bases[i].transpose() * m * &bases[j];
                association += (&projected * projected.transpose()).trace();
            }
        }
        loss += coeff * association;
    }
    loss
}

fn ridged_total(total: &DMatrix<f64>) -> DMatrix<f64> {
    let o = total.nrows();
    let ridge = (1e-6 * total.trace() / o as f64).max(1e-12);
    let mut m = total.clone();
    for i in 0..o {
        m[(i, i)] += ridge;
    }
    m
}

/// Fix eigenvector sign: largest-magnitude entry positive.
fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v = -v.clone();
    }
}

/// Top-`ell` solutions of `A p = lambda M p` with `M = L L'` given through its
/// Cholesky factor; returned columns satisfy `P' M P = I`.
fn generalized_eigen_top(
    a: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
    ell: usize,
) -> Result<DMatrix<f64>> {
    let l = chol.l();
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::SingularMatrix {
            context: "generalized eigenproblem transform".into(),
        })?;
    let b_t = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SingularMatrix {
            context: "generalized eigenproblem transform".into(),
        })?;
    let mut b = b_t.transpose();
    symmetrize(&mut b);
    let eig = b.symmetric_eigen();
    let o = a.nrows();
    let mut order: Vec<usize> = (0..o).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap());
    let lt = l.transpose();
    let mut p = DMatrix::<f64>::zeros(o, ell);
    for (c, &idx) in order.iter().take(ell).enumerate() {
        let yv = eig.eigenvectors.column(idx).into_owned();
        let mut pv = lt
            .solve_upper_triangular(&yv)
            .ok_or_else(|| Error::SingularMatrix {
                context: "generalized eigenvector back-substitution".into(),
            })?;
        fix_sign(&mut pv);
        p.set_column(c, &pv);
    }
    Ok(p)
}

/// Alternating solve of the projection problem.
///
/// Each view update solves the generalized eigenproblem for that view's
/// block-coordinate objective with the other views fixed (the cross term
/// enters twice because the loss's ordered double sum visits each pair from
/// both sides), so the recorded per-sweep loss is non-decreasing. The final
/// bases are rescaled so `Tr[P_d' T_d P_d] = ell` against the raw totals.
pub fn solve_projections(scatter: &ScatterSet, rho: f64, ell: usize) -> Result<ProjectionBasis> {
    let d = scatter.n_views();
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("rho must be in [0,1], got {rho}")));
    }
    let dims = scatter.output_dims();
    if ell == 0 || dims.iter().any(|&o| ell > o) {
        return Err(Error::InvalidInput(format!(
            "ell = {ell} incompatible with output dims {dims:?}"
        )));
    }
    if d == 1 && rho < 1.0 {
        log::warn!("single view with rho < 1: the association term is vacuous");
    }

    let chols: Vec<Cholesky<f64, Dyn>> = scatter
        .total
        .iter()
        .map(|t| {
            Cholesky::new(ridged_total(t)).ok_or_else(|| Error::SingularMatrix {
                context: "total scatter Cholesky".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // warm start from the pure-discriminant problem
    let mut bases = Vec::with_capacity(d);
    for vi in 0..d {
        bases.push(generalized_eigen_top(&scatter.between[vi], &chols[vi], ell)?);
    }

    // The loss's ordered double sum visits each pair from both sides, so the
    // view-d block objective carries twice the loss coefficient.
    let cross_weight = if d > 1 {
        4.0 * (1.0 - rho) / (d as f64 * (d - 1) as f64)
    } else {
        0.0
    };
    let max_sweeps = 100;
    let tol = 1e-8;
    let mut sweep_losses = Vec::new();
    let mut converged = false;
    for _ in 0..max_sweeps {
        for vi in 0..d {
            let mut a = &scatter.between[vi] * (rho / d as f64);
            if d > 1 {
                for vj in 0..d {
                    if vj == vi {
                        continue;
                    }
                    let m = scatter.cross(vi, vj);
                    let mp = &m * &bases[vj];
                    a += &mp * mp.transpose() * cross_weight;
                }
            }
            symmetrize(&mut a);
            bases[vi] = generalized_eigen_top(&a, &chols[vi], ell)?;
        }
        let loss = loss_of_bases(scatter, &bases, rho);
        let improved = sweep_losses
            .last()
            .map_or(true, |prev: &f64| loss - prev >= tol);
        sweep_losses.push(loss);
        if !improved {
            converged = true;
            break;
        }
    }

    // satisfy the trace constraint against the raw (un-ridged) totals
    for vi in 0..d {
        let trace = (bases[vi].transpose() * &scatter.total[vi] * &bases[vi]).trace();
        if trace > 1e-300 {
            bases[vi] *= (ell as f64 / trace).sqrt();
        }
    }

    Ok(ProjectionBasis {
        bases,
        ell,
        rho,
        converged,
        sweep_losses,
    })
}

/// Gradient of the objective with respect to each view output, holding the
/// projections fixed at their solved values (the two-stage rule: solve for P,
/// then differentiate through the scatter matrices only).
pub fn ida_grad(
    outputs: &[DMatrix<f64>],
    labels: &[usize],
    proj: &ProjectionBasis,
    rho: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let d = outputs.len();
    if proj.bases.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "{} projection bases for {d} views",
            proj.bases.len()
        )));
    }
    let scatter = scatter_matrices(outputs, labels)?;
    for vi in 0..d {
        if proj.bases[vi].nrows() != outputs[vi].nrows() {
            return Err(Error::ShapeMismatch(format!(
                "projection for view {vi} is {} x {}, outputs have {} rows",
                proj.bases[vi].nrows(),
                proj.bases[vi].ncols(),
                outputs[vi].nrows()
            )));
        }
    }
    let n = labels.len();
    let k = scatter.n_classes();
    let denom = (n - 1) as f64;

    let gram: Vec<DMatrix<f64>> = proj.bases.iter().map(|p| p * p.transpose()).collect();

    let mut grads: Vec<DMatrix<f64>> = outputs
        .iter()
        .map(|h| DMatrix::zeros(h.nrows(), h.ncols()))
        .collect();

    // separation term
    let sep_coeff = rho / d as f64;
    for vi in 0..d {
        // precompute G (mu_k - mu) per class and their N_k-weighted sum
        let mut g_mu: Vec<DVector<f64>> = Vec::with_capacity(k);
        let mut weighted_sum = DVector::<f64>::zeros(outputs[vi].nrows());
        for ki in 0..k {
            let diff = &scatter.class_means[vi][ki] - &scatter.grand_means[vi];
            let gm = &gram[vi] * diff;
            weighted_sum += &gm * scatter.class_counts[ki] as f64;
            g_mu.push(gm);
        }
        for (col, &l) in labels.iter().enumerate() {
            let nm = scatter.class_counts[l] as f64;
            let grad = (&g_mu[l] - &weighted_sum / (k as f64 * nm)) * (2.0 / denom) * sep_coeff;
            for row in 0..grad.len() {
                grads[vi][(row, col)] += grad[row];
            }
        }
    }

    // association term
    if d > 1 {
        let assoc_coeff = 2.0 * (1.0 - rho) / (d as f64 * (d - 1) as f64);
        for i in 0..d {
            for j in (i + 1)..d {
                let m = scatter.cross(i, j);
                // W = 2 G_i C_ij G_j; dL pair weight = 2 * assoc_coeff
                let w = &gram[i] * &m * &gram[j] * 2.0;
                let centered_i: Vec<DVector<f64>> = (0..n)
                    .map(|c| outputs[i].column(c) - &scatter.grand_means[i])
                    .collect();
                let centered_j: Vec<DVector<f64>> = (0..n)
                    .map(|c| outputs[j].column(c) - &scatter.grand_means[j])
                    .collect();
                let sum_i = centered_i
                    .iter()
                    .fold(DVector::zeros(outputs[i].nrows()), |acc, v| acc + v);
                let sum_j = centered_j
                    .iter()
                    .fold(DVector::zeros(outputs[j].nrows()), |acc, v| acc + v);
                let w_sj = &w * &sum_j;
                let wt_si = w.transpose() * &sum_i;
                for (col, &l) in labels.iter().enumerate() {
                    let nm = scatter.class_counts[l] as f64;
                    let gi = (&w * &centered_j[col] - &w_sj / (k as f64 * nm))
                        * (2.0 * assoc_coeff / denom);
                    let gj = (w.transpose() * &centered_i[col] - &wt_si / (k as f64 * nm))
                        * (2.0 * assoc_coeff / denom);
                    for row in 0..gi.len() {
                        grads[i][(row, col)] += gi[row];
                    }
                    for row in 0..gj.len() {
                        grads[j][(row, col)] += gj[row];
                    }
                }
            }
        }
    }

    Ok(grads)
}

/// Stack per-view projections `P_d' H_d` into one (D * ell) x N matrix.
pub fn project_stack(proj: &ProjectionBasis, outputs: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if proj.bases.len() != outputs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} bases for {} outputs",
            proj.bases.len(),
            outputs.len()
        )));
    }
    let n = outputs.first().map_or(0, |h| h.ncols());
    let mut rows = Vec::new();
    for (p, h) in proj.bases.iter().zip(outputs) {
        if h.ncols() != n {
            return Err(Error::ShapeMismatch("column counts differ across views".into()));
        }
        rows.push(p.transpose() * h);
    }
    let total_rows: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut stacked = DMatrix::<f64>::zeros(total_rows, n);
    let mut offset = 0;
    for r in rows {
        stacked.view_mut((offset, 0), (r.nrows(), n)).copy_from(&r);
        offset += r.nrows();
    }
    Ok(stacked)
}

/// Per-class means of stacked projected columns.
pub fn centroid_fit(projected: &DMatrix<f64>, labels: &[usize]) -> Result<Vec<DVector<f64>>> {
    if projected.ncols() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} columns vs {} labels",
            projected.ncols(),
            labels.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    let mut centroids = vec![DVector::<f64>::zeros(projected.nrows()); k];
    for (col, &l) in labels.iter().enumerate() {
        centroids[l] += projected.column(col);
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class: empty });
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        *c /= *n as f64;
    }
    Ok(centroids)
}

/// Nearest centroid by Euclidean distance; ties break to the lowest class
/// index.
pub fn centroid_predict(centroids: &[DVector<f64>], projected: &DMatrix<f64>) -> Vec<usize> {
    (0..projected.ncols())
        .map(|col| {
            let x = projected.column(col);
            let mut best = 0usize;
            let mut best_dist = f64::INFINITY;
            for (k, c) in centroids.iter().enumerate() {
                let dist = (x - c).norm_squared();
                if dist < best_dist {
                    best_dist = dist;
                    best = k;
                }
            }
            best
        })
        .collect()
}
