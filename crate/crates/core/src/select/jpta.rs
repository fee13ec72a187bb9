//! Joint principal trend analysis: a rank-1 joint decomposition of two
//! longitudinal views into sparse variable loadings `u`, `v` and a shared
//! smooth trend `theta B'` expressed in a cubic B-spline basis.
//!
//! The alternating solver minimizes
//!
//! ```text
//! sum_n ||X1(n) - u theta B'||_F^2 + ||X2(n) - v theta B'||_F^2
//! s.t.  theta H theta' <= c,  ||u||_1 <= c1,  ||v||_1 <= c2,
//!       ||u||_2 <= 1,  ||v||_2 <= 1
//! ```
//!
//! where `H` integrates products of second derivatives of the basis
//! functions. Each sub-step is an exact constrained minimization (a
//! Lagrange-multiplier ridge solve for `theta`, Euclidean projection onto the
//! L1/L2 intersection for `u` and `v`), so the objective is non-increasing.

use nalgebra::{DMatrix, DVector};

use crate::dataset::ViewTensor;
use crate::error::{Error, Result};

/// Cubic B-spline basis on knots at the integer time points `1..=t` (order 4,
/// `t + 2` basis functions) and the roughness penalty
/// `H[i][j] = integral of B_i''(x) B_j''(x)`.
pub fn spline_basis(t: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if t < 4 {
        return Err(Error::InvalidInput(format!(
            "spline basis needs at least 4 time points, got {t}"
        )));
    }
    let n_basis = t + 2;
    // clamped knot vector: 1,1,1,1, 2, ..., t-1, t,t,t,t
    let mut knots = vec![1.0; 4];
    for k in 2..t {
        knots.push(k as f64);
    }
    knots.extend_from_slice(&[t as f64; 4]);
    debug_assert_eq!(knots.len(), n_basis + 4);

    let b = DMatrix::from_fn(t, n_basis, |row, col| {
        bspline_value(&knots, col, 4, (row + 1) as f64)
    });

    // B'' is piecewise linear, so 2-point Gauss-Legendre per knot span is
    // exact for the quadratic integrand.
    let mut h = DMatrix::<f64>::zeros(n_basis, n_basis);
    let gauss = [-(1.0 / 3f64.sqrt()), 1.0 / 3f64.sqrt()];
    for span in 1..t {
        let (a, bnd) = (span as f64, span as f64 + 1.0);
        let half = (bnd - a) / 2.0;
        let mid = (a + bnd) / 2.0;
        for &g in &gauss {
            let x = mid + half * g;
            let d2: Vec<f64> = (0..n_basis)
                .map(|i| bspline_second_derivative(&knots, i, x))
                .collect();
            for i in 0..n_basis {
                if d2[i] == 0.0 {
                    continue;
                }
                for j in 0..n_basis {
                    h[(i, j)] += half * d2[i] * d2[j];
                }
            }
        }
    }
    // exact symmetry
    for i in 0..n_basis {
        for j in (i + 1)..n_basis {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok((b, h))
}

/// Value of B-spline `i` of the given order at `x` (Cox-de Boor recursion).
fn bspline_value(knots: &[f64], i: usize, order: usize, x: f64) -> f64 {
    if order == 1 {
        let last_interior = knots[i + 1] == knots[knots.len() - 1];
        if (knots[i] <= x && x < knots[i + 1]) || (last_interior && x == knots[i + 1] && knots[i] < knots[i + 1])
        {
            return 1.0;
        }
        return 0.0;
    }
    let mut value = 0.0;
    let d1 = knots[i + order - 1] - knots[i];
    if d1 > 0.0 {
        value += (x - knots[i]) / d1 * bspline_value(knots, i, order - 1, x);
    }
    let d2 = knots[i + order] - knots[i + 1];
    if d2 > 0.0 {
        value += (knots[i + order] - x) / d2 * bspline_value(knots, i + 1, order - 1, x);
    }
    value
}

/// First derivative of B-spline `i` of the given order at `x`.
fn bspline_derivative(knots: &[f64], i: usize, order: usize, x: f64) -> f64 {
    let k = (order - 1) as f64;
    let mut value = 0.0;
    let d1 = knots[i + order - 1] - knots[i];
    if d1 > 0.0 {
        value += k / d1 * bspline_value(knots, i, order - 1, x);
    }
    let d2 = knots[i + order] - knots[i + 1];
    if d2 > 0.0 {
        value -= k / d2 * bspline_value(knots, i + 1, order - 1, x);
    }
    value
}

/// Second derivative of cubic B-spline `i` at `x`.
fn bspline_second_derivative(knots: &[f64], i: usize, x: f64) -> f64 {
    let mut value = 0.0;
    let d1 = knots[i + 3] - knots[i];
    if d1 > 0.0 {
        value += 3.0 / d1 * bspline_derivative(knots, i, 3, x);
    }
    let d2 = knots[i + 4] - knots[i + 1];
    if d2 > 0.0 {
        value -= 3.0 / d2 * bspline_derivative(knots, i + 1, 3, x);
    }
    value
}

/// Elementwise soft threshold.
fn soft_threshold(w: &DVector<f64>, delta: f64) -> DVector<f64> {
    w.map(|v| {
        let m = v.abs() - delta;
        if m > 0.0 {
            v.signum() * m
        } else {
            0.0
        }
    })
}

/// Euclidean projection onto `{ ||u||_1 <= c, ||u||_2 <= 1 }` via
/// soft-thresholding with bisection on the threshold.
///
/// Requires `c >= 1`: the L1/L2 ratio of any nonzero vector is at least 1, so
/// smaller caps are infeasible together with a unit L2 cap.
fn project_l1_l2(w: &DVector<f64>, c: f64) -> DVector<f64> {
    let l1 = w.iter().map(|v| v.abs()).sum::<f64>();
    let l2 = w.norm();
    if l2 == 0.0 {
        return w.clone();
    }
    if l1 <= c && l2 <= 1.0 {
        return w.clone();
    }
    // L2 cap alone
    let scaled = w / l2.max(1.0);
    if scaled.iter().map(|v| v.abs()).sum::<f64>() <= c + 1e-12 {
        return scaled;
    }
    // L1 cap alone: bisect delta so ||S(w, delta)||_1 = c
    let max_abs = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut lo, mut hi) = (0.0, max_abs);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if soft_threshold(w, mid).iter().map(|v| v.abs()).sum::<f64>() > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l1_only = soft_threshold(w, hi);
    if l1_only.norm() <= 1.0 + 1e-12 {
        return l1_only;
    }
    // both caps active: bisect delta so the normalized ratio hits c
    let (mut lo, mut hi) = (0.0, max_abs);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = soft_threshold(w, mid);
        let norm = s.norm();
        let ratio = if norm > 0.0 {
            s.iter().map(|v| v.abs()).sum::<f64>() / norm
        } else {
            1.0
        };
        if ratio > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = soft_threshold(w, hi);
    let norm = s.norm();
    if norm > 0.0 {
        s / norm
    } else {
        s
    }
}

/// Fitted joint trend model.
#[derive(Debug, Clone)]
pub struct JptaModel {
    /// View-1 loadings (length p1).
    pub u: DVector<f64>,
    /// View-2 loadings (length p2).
    pub v: DVector<f64>,
    /// Spline coefficients (length T + 2).
    pub theta: DVector<f64>,
    /// Basis matrix (T x (T + 2)).
    pub basis: DMatrix<f64>,
    /// Roughness penalty ((T + 2) x (T + 2)).
    pub penalty: DMatrix<f64>,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    /// Objective value after each iteration.
    pub objective: Vec<f64>,
    /// Constraint residuals after each iteration:
    /// `[||u||_2, ||u||_1, ||v||_2, ||v||_1, theta H theta']`.
    pub constraint_history: Vec<[f64; 5]>,
    pub iterations: usize,
    pub converged: bool,
}

impl JptaModel {
    /// The fitted common trend `B theta`, evaluated on the time grid.
    pub fn trend(&self) -> DVector<f64> {
        &self.basis * &self.theta
    }
}

/// Sum over subjects of each view's data, as a p x T matrix, plus the total
/// sum of squares.
fn view_summaries(view: &ViewTensor) -> (DMatrix<f64>, f64) {
    let (n, p, t) = view.values().dim();
    let mut z = DMatrix::<f64>::zeros(p, t);
    let mut ss = 0.0;
    for si in 0..n {
        for vi in 0..p {
            for ti in 0..t {
                let val = view.values()[(si, vi, ti)];
                z[(vi, ti)] += val;
                ss += val * val;
            }
        }
    }
    (z, ss)
}

/// Power iteration for the dominant left singular vector of `z`.
fn dominant_left_singular(z: &DMatrix<f64>) -> DVector<f64> {
    let p = z.nrows();
    let mut u = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    for _ in 0..50 {
        let next = z * (z.transpose() * &u);
        let norm = next.norm();
        if norm == 0.0 {
            return u;
        }
        u = next / norm;
    }
    u
}

/// Exact theta step: minimize `theta' Q theta - 2 a' theta` subject to
/// `theta' H theta <= c` by bisection on the Lagrange multiplier.
fn theta_step(
    q: &DMatrix<f64>,
    a: &DVector<f64>,
    h: &DMatrix<f64>,
    c: f64,
) -> Result<DVector<f64>> {
    let dim = q.nrows();
    let solve = |lambda: f64| -> Option<DVector<f64>> {
        let m = q + h * lambda;
        m.clone()
            .cholesky()
            .map(|ch| ch.solve(a))
            .or_else(|| m.lu().solve(a))
    };
    let roughness = |theta: &DVector<f64>| (theta.transpose() * h * theta)[(0, 0)];

    let scale = (q.trace() / dim as f64).max(1e-300);
    let h_scale = (h.trace() / dim as f64).max(1e-300);
    let mut lambda_lo = 1e-12 * scale / h_scale;
    // Q has the spline null space, so a strictly positive multiplier is
    // always used; grow it until the solve succeeds.
    let theta_lo = loop {
        match solve(lambda_lo) {
            Some(theta) if theta.iter().all(|v| v.is_finite()) => break theta,
            _ => {
                lambda_lo *= 10.0;
                if lambda_lo > 1e12 * scale / h_scale {
                    return Err(Error::SingularMatrix {
                        context: "joint trend coefficient solve".into(),
                    });
                }
            }
        }
    };
    if roughness(&theta_lo) <= c {
        return Ok(theta_lo);
    }
    let mut lambda_hi = lambda_lo.max(1e-6);
    for _ in 0..200 {
        match solve(lambda_hi) {
            Some(theta) if roughness(&theta) <= c => break,
            _ => lambda_hi *= 4.0,
        }
    }
    let mut lo = lambda_lo;
    let mut hi = lambda_hi;
    let mut best = solve(hi).ok_or_else(|| Error::SingularMatrix {
        context: "joint trend coefficient solve".into(),
    })?;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        match solve(mid) {
            Some(theta) => {
                if roughness(&theta) > c {
                    lo = mid;
                } else {
                    best = theta;
                    hi = mid;
                }
            }
            None => lo = mid,
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Ok(best)
}

/// Alternating fit of the joint trend model on two longitudinal views with a
/// shared time grid.
pub fn jpta_fit(
    view1: &ViewTensor,
    view2: &ViewTensor,
    c: f64,
    c1: f64,
    c2: f64,
    max_iters: usize,
) -> Result<JptaModel> {
    let (n1, _, t1) = view1.values().dim();
    let (n2, _, t2) = view2.values().dim();
    if t1 != t2 {
        return Err(Error::InvalidInput(format!(
            "views must share the time grid, got t = {t1} and {t2}"
        )));
    }
    if n1 != n2 {
        return Err(Error::ShapeMismatch(format!(
            "views have {n1} and {n2} subjects"
        )));
    }
    if c <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "roughness budget c must be positive, got {c}"
        )));
    }
    if c1 < 1.0 || c2 < 1.0 {
        return Err(Error::InvalidInput(format!(
            "L1 caps below 1 are infeasible with the unit L2 cap (c1 = {c1}, c2 = {c2})"
        )));
    }
    let (basis, penalty) = spline_basis(t1)?;
    let n = n1 as f64;
    let (z1, ss1) = view_summaries(view1);
    let (z2, ss2) = view_summaries(view2);
    let ss_total = ss1 + ss2;
    let btb = basis.transpose() * &basis;

    let mut u = project_l1_l2(&dominant_left_singular(&z1), c1);
    let mut v = project_l1_l2(&dominant_left_singular(&z2), c2);
    let mut theta = DVector::<f64>::zeros(t1 + 2);

    let objective = |u: &DVector<f64>, v: &DVector<f64>, theta: &DVector<f64>| -> f64 {
        let g = &basis * theta;
        let fit = (u.transpose() * &z1 * &g)[(0, 0)] + (v.transpose() * &z2 * &g)[(0, 0)];
        ss_total - 2.0 * fit + n * (u.norm_squared() + v.norm_squared()) * g.norm_squared()
    };

    let mut history = Vec::with_capacity(max_iters);
    let mut constraint_history = Vec::with_capacity(max_iters);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..max_iters {
        iterations = iter + 1;
        // theta step
        let weight = n * (u.norm_squared() + v.norm_squared());
        if weight > 1e-300 {
            let a = basis.transpose() * (z1.transpose() * &u + z2.transpose() * &v);
            let q = &btb * weight;
            theta = theta_step(&q, &a, &penalty, c)?;
        }
        // loading steps
        let g = &basis * &theta;
        let g2 = g.norm_squared();
        if g2 > 1e-300 {
            u = project_l1_l2(&(&z1 * &g / (n * g2)), c1);
            v = project_l1_l2(&(&z2 * &g / (n * g2)), c2);
        }
        let value = objective(&u, &v, &theta);
        constraint_history.push([
            u.norm(),
            u.iter().map(|x| x.abs()).sum(),
            v.norm(),
            v.iter().map(|x| x.abs()).sum(),
            (theta.transpose() * &penalty * &theta)[(0, 0)],
        ]);
        let done = history
            .last()
            .is_some_and(|prev: &f64| {
                (prev - value).abs() <= 1e-7 * prev.abs().max(1.0)
            });
        history.push(value);
        if done {
            converged = true;
            break;
        }
    }

    Ok(JptaModel {
        u,
        v,
        theta,
        basis,
        penalty,
        c,
        c1,
        c2,
        objective: history,
        constraint_history,
        iterations,
        converged,
    })
}

/// Indices of the `k` largest |loadings| per view, ties to the lower index.
/// The returned lists are sorted ascending; selected variables carry no
/// ranking among themselves.
pub fn jpta_select(model: &JptaModel, k1: usize, k2: usize) -> (Vec<usize>, Vec<usize>) {
    let top = |loadings: &DVector<f64>, k: usize| -> Vec<usize> {
        let mut order: Vec<usize> = (0..loadings.len()).collect();
        order.sort_by(|&a, &b| {
            loadings[b]
                .abs()
                .partial_cmp(&loadings[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut chosen: Vec<usize> = order.into_iter().take(k.min(loadings.len())).collect();
        chosen.sort_unstable();
        chosen
    };
    (top(&model.u, k1), top(&model.v, k2))
}
