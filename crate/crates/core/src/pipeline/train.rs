//! End-to-end training of the joint integration model: forward all per-view
//! networks, solve the projection problem on their outputs, push the objective
//! gradient (projections frozen) back through each network, and take a
//! full-batch gradient-ascent step.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ViewTensor;
use crate::error::{Error, Result};
use crate::ida::{
    centroid_fit, centroid_predict, ida_grad, ida_loss, project_stack, projection_dim,
    scatter_matrices, solve_projections, ProjectionBasis,
};
use crate::nets::{init_network, NetSpec, Network};

/// Optimization settings for the full-batch ascent loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop when the objective improved by less than `min_improvement` over
    /// the last `patience` epochs.
    pub patience: usize,
    pub min_improvement: f64,
    /// Weight between class separation and view association in the objective.
    pub rho: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 10,
            min_improvement: 1e-6,
            rho: 0.5,
        }
    }
}

/// A trained joint model: per-view networks, solved projections, and the
/// class centroids in the stacked projected space.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub nets: Vec<Network>,
    pub proj: ProjectionBasis,
    pub centroids: Vec<DVector<f64>>,
    pub epochs_run: usize,
    pub final_loss: f64,
}

fn forward_all(nets: &[Network], views: &[ViewTensor]) -> Result<Vec<crate::nets::NetOutput>> {
    nets.iter()
        .zip(views)
        .map(|(net, view)| net.forward_view(view))
        .collect()
}

fn output_values(outputs: &[crate::nets::NetOutput]) -> Vec<DMatrix<f64>> {
    outputs.iter().map(|o| o.values.clone()).collect()
}

/// Train the joint model on complete training views.
///
/// Every class must appear in `labels`. A zero epoch budget skips the ascent
/// loop but still solves projections and fits centroids at the initial
/// parameters, so prediction stays total.
pub fn train_deepida_gru(
    views: &[ViewTensor],
    labels: &[usize],
    specs: &[NetSpec],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainedModel> {
    if views.is_empty() || views.len() != specs.len() {
        return Err(Error::Config(format!(
            "{} views for {} network specs",
            views.len(),
            specs.len()
        )));
    }
    let n = labels.len();
    for (d, view) in views.iter().enumerate() {
        if view.n_subjects() != n {
            return Err(Error::ShapeMismatch(format!(
                "view {d} has {} subjects, labels have {n}",
                view.n_subjects()
            )));
        }
        match specs[d] {
            NetSpec::Dense { .. } if !view.is_cross_sectional() => {
                return Err(Error::Config(format!(
                    "view {d} is longitudinal but routed to a dense network"
                )));
            }
            _ => {}
        }
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::InvalidInput("training needs at least 2 classes".into()));
    }

    let mut nets = Vec::with_capacity(views.len());
    for (view, spec) in views.iter().zip(specs) {
        nets.push(init_network(spec, view.n_variables(), rng)?);
    }
    let dims: Vec<usize> = nets.iter().map(|n| n.output_dim()).collect();
    let ell = projection_dim(k, &dims);

    let mut history: Vec<f64> = Vec::with_capacity(config.max_epochs);
    let mut epochs_run = 0;
    for epoch in 0..config.max_epochs {
        let outputs = forward_all(&nets, views)?;
        let values = output_values(&outputs);
        let scatter = scatter_matrices(&values, labels)?;
        let proj = solve_projections(&scatter, config.rho, ell)?;
        let loss = ida_loss(&scatter, &proj);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if epoch >= config.patience
            && loss - history[epoch - config.patience] < config.min_improvement
        {
            break;
        }
        history.push(loss);
        epochs_run = epoch + 1;

        let grads = ida_grad(&values, labels, &proj, config.rho)?;
        for (d, net) in nets.iter_mut().enumerate() {
            let (param_grads, _) = net.backward(&outputs[d].cache, &grads[d])?;
            net.ascend(&param_grads, config.learning_rate)?;
        }
    }

    // final solve and centroids at the trained parameters
    let outputs = forward_all(&nets, views)?;
    let values = output_values(&outputs);
    let scatter = scatter_matrices(&values, labels)?;
    let proj = solve_projections(&scatter, config.rho, ell)?;
    let final_loss = ida_loss(&scatter, &proj);
    if !final_loss.is_finite() {
        return Err(Error::Divergence { epoch: epochs_run });
    }
    let stacked = project_stack(&proj, &values)?;
    let centroids = centroid_fit(&stacked, labels)?;
    Ok(TrainedModel {
        nets,
        proj,
        centroids,
        epochs_run,
        final_loss,
    })
}

impl TrainedModel {
    /// Predict class codes for (possibly held-out) subjects.
    pub fn predict(&self, views: &[ViewTensor]) -> Result<Vec<usize>> {
        let outputs = forward_all(&self.nets, views)?;
        let values = output_values(&outputs);
        let stacked = project_stack(&self.proj, &values)?;
        Ok(centroid_predict(&self.centroids, &stacked))
    }

    /// Fraction of correct predictions on labelled views.
    pub fn accuracy(&self, views: &[ViewTensor], labels: &[usize]) -> Result<f64> {
        let pred = self.predict(views)?;
        if pred.len() != labels.len() {
            return Err(Error::ShapeMismatch("prediction/label length".into()));
        }
        let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(correct as f64 / labels.len() as f64)
    }
}
