//! Two-view synthetic ARMA(1,1) benchmark generator.
//!
//! Classes differ through two independently controlled knobs: `epsilon` moves
//! the joint noise covariance of class 2 away from class 1, and `eta` moves
//! class 2's AR/MA parameters away from class 1's. Subjects evolve as
//!
//! ```text
//! x(t) = phi .* x(t-1) + w(t) + delta .* w(t-1),   w(t) ~ N(0, C_class)
//! ```
//!
//! with the elementwise factors applied per view, noise drawn jointly across
//! both views, and zero initial conditions.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiViewDataset, ViewTensor};
use crate::error::{Error, Result};
use ndarray::Array3;

/// Generator configuration. The benchmark default is 500 subjects with
/// 250 variables per view and 20 time points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub p1: usize,
    pub p2: usize,
    pub t: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub seed: u64,
    /// Extra leading steps discarded before recording, to approach
    /// stationarity. Zero keeps the plain zero-start recursion.
    #[serde(default)]
    pub burn_in: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.p1 == 0 || self.p2 == 0 || self.t == 0 {
            return Err(Error::InvalidInput(
                "synthetic dimensions must all be >= 1".into(),
            ));
        }
        for (name, v) in [("epsilon", self.epsilon), ("eta", self.eta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be in [0,1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// AR and MA factors indexed by (view, class), both in {1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaParams {
    /// `phi[d][k]` for view d+1, class k+1.
    pub phi: [[f64; 2]; 2],
    /// `delta[d][k]` likewise.
    pub delta: [[f64; 2]; 2],
}

impl ArmaParams {
    pub fn new(phi: [[f64; 2]; 2], delta: [[f64; 2]; 2]) -> Result<Self> {
        for row in &phi {
            for &v in row {
                if v.abs() >= 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "AR factor {v} violates |phi| < 1 stationarity"
                    )));
                }
            }
        }
        Ok(ArmaParams { phi, delta })
    }
}

/// Class-1 factors are fixed; class-2 factors are shifted down by `eta`.
pub fn make_arma_params(eta: f64) -> Result<ArmaParams> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidInput(format!("eta must be in [0,1], got {eta}")));
    }
    ArmaParams::new(
        [[0.5, 0.5 - eta], [0.7, 0.7 - eta]],
        [[0.4, 0.4 - eta], [0.6, 0.6 - eta]],
    )
}

fn gram_of_random(p: usize, rng: &mut impl Rng, draw: impl Fn(&mut dyn FnMut() -> f64) -> f64) -> DMatrix<f64> {
    let mut uniform = || rng.gen::<f64>();
    let raw = DMatrix::from_fn(p, p, |_, _| draw(&mut uniform));
    raw.transpose() * raw
}

/// Joint noise covariances for the two classes.
///
/// `C1` is the Gram matrix of a p x p matrix with i.i.d. Uniform(0,1) entries;
/// `C2 = (1 - epsilon) C1 + epsilon G` where `G` is the Gram matrix of i.i.d.
/// Power(10) entries (density `10 x^9` on the unit interval, sampled as
/// `u^(1/10)`).
pub fn make_covariances(
    p_total: usize,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if p_total == 0 {
        return Err(Error::InvalidInput("p_total must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be in [0,1], got {epsilon}"
        )));
    }
    let c1 = gram_of_random(p_total, rng, |u| u());
    let power = gram_of_random(p_total, rng, |u| u().powf(0.1));
    let c2 = &c1 * (1.0 - epsilon) + power * epsilon;
    Ok((c1, c2))
}

/// Cholesky factor with a tiny diagonal bump as fallback for borderline
/// positive semidefinite inputs.
fn cholesky_or_jitter(c: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(ch) = Cholesky::new(c.clone()) {
        return Ok(ch);
    }
    let p = c.nrows();
    let jitter = 1e-10 * c.trace().abs().max(1.0) / p as f64;
    let bumped = c + DMatrix::identity(p, p) * jitter;
    Cholesky::new(bumped).ok_or_else(|| Error::SingularMatrix {
        context: context.into(),
    })
}

/// Generate a dataset drawing covariances, ARMA factors, and class labels
/// from the seeded stream.
pub fn generate_dataset(config: &SynthConfig) -> Result<MultiViewDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (c1, c2) = make_covariances(config.p1 + config.p2, config.epsilon, &mut rng)?;
    let arma = make_arma_params(config.eta)?;
    generate_with_rng(config, &arma, &c1, &c2, &mut rng)
}

/// Generate from explicit parts; the stream is used for class assignment and
/// noise only. Exposed so tests can pin covariances or zero out the ARMA
/// factors.
pub fn generate_from_parts(
    config: &SynthConfig,
    arma: &ArmaParams,
    c1: &DMatrix<f64>,
    c2: &DMatrix<f64>,
) -> Result<MultiViewDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    generate_with_rng(config, arma, c1, c2, &mut rng)
}

fn generate_with_rng(
    config: &SynthConfig,
    arma: &ArmaParams,
    c1: &DMatrix<f64>,
    c2: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<MultiViewDataset> {
    let p_total = config.p1 + config.p2;
    if c1.nrows() != p_total || c1.ncols() != p_total || c2.nrows() != p_total || c2.ncols() != p_total
    {
        return Err(Error::ShapeMismatch(format!(
            "covariances must be {p_total} x {p_total}"
        )));
    }
    let chol = [
        cholesky_or_jitter(c1, "class 1 noise covariance")?,
        cholesky_or_jitter(c2, "class 2 noise covariance")?,
    ];

    // Fair coin per subject.
    let classes: Vec<usize> = (0..config.n_subjects)
        .map(|_| usize::from(rng.gen::<bool>()))
        .collect();

    let mut view1 = Array3::<f64>::zeros((config.n_subjects, config.p1, config.t));
    let mut view2 = Array3::<f64>::zeros((config.n_subjects, config.p2, config.t));
    let total_steps = config.burn_in + config.t;
    for (n, &k) in classes.iter().enumerate() {
        let phi = [arma.phi[0][k], arma.phi[1][k]];
        let delta = [arma.delta[0][k], arma.delta[1][k]];
        let mut x = DVector::<f64>::zeros(p_total);
        let mut w_prev = DVector::<f64>::zeros(p_total);
        for step in 0..total_steps {
            let z = DVector::from_fn(p_total, |_, _| rng.sample::<f64, _>(StandardNormal));
            let w = chol[k].l() * z;
            let mut next = DVector::<f64>::zeros(p_total);
            for i in 0..p_total {
                let d = usize::from(i >= config.p1);
                next[i] = phi[d] * x[i] + w[i] + delta[d] * w_prev[i];
            }
            x = next;
            w_prev = w;
            if step >= config.burn_in {
                let t = step - config.burn_in;
                for i in 0..config.p1 {
                    view1[(n, i, t)] = x[i];
                }
                for i in 0..config.p2 {
                    view2[(n, i, t)] = x[config.p1 + i];
                }
            }
        }
    }

    let time_labels: Vec<f64> = (1..=config.t).map(|t| t as f64).collect();
    let names = |prefix: &str, p: usize| -> Vec<String> {
        (1..=p).map(|i| format!("{prefix}_{i:03}")).collect()
    };
    let v1 = ViewTensor::new(view1, names("v1", config.p1), time_labels.clone())?;
    let v2 = ViewTensor::new(view2, names("v2", config.p2), time_labels)?;
    let subject_ids = (1..=config.n_subjects)
        .map(|i| format!("s{i:04}"))
        .collect();
    // The coin can come up all heads on tiny n; resampling would break
    // determinism, so surface it instead.
    MultiViewDataset::new(
        vec![v1, v2],
        classes,
        subject_ids,
        vec!["1".into(), "2".into()],
    )
    .map_err(|e| match e {
        Error::EmptyClass { class } => Error::InvalidInput(format!(
            "seed {} produced no subjects in class {}; use another seed or more subjects",
            config.seed,
            class + 1
        )),
        other => other,
    })
}
