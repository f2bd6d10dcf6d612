//! Differentiation engine for small dense networks.
//!
//! Supports exact first- and second-order spatial derivatives, time
//! partials, and parameter gradients of losses that themselves contain
//! second derivatives. Three evaluation paths share the same layerwise
//! recurrences:
//!
//! * [`batched`] — plain `f64` matrix arithmetic over whole ensembles,
//!   used by samplers and loss values;
//! * [`vtape`]/[`graph`] — the reverse-mode tape, used for parameter
//!   gradients;
//! * the single-point API below, a thin wrapper over the batched path.
//!
//! All paths are deterministic: identical inputs give bitwise-identical
//! outputs, and batch reductions happen in a fixed order.

pub mod act;
pub mod batched;
pub mod graph;
pub mod vtape;

pub use act::Activation;
pub use graph::{value_and_grad, BatchLossBuilder, TapeJets, TapeNet};
pub use vtape::{NodeId, VTape};

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Parameters of a dense multilayer perceptron mapping `(state, time)` to a
/// vector. Input dimension is `d + 1` (state concatenated with raw time);
/// output dimension is `d` for score networks or `1` for potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// Per-layer weight matrices, shape `(fan_out, fan_in)`.
    pub weights: Vec<Array2<f64>>,
    /// Per-layer bias vectors.
    pub biases: Vec<Array1<f64>>,
    pub act: Activation,
    /// Seed the parameters were created from (checkpoint header metadata).
    pub seed: u64,
}

impl MlpParams {
    /// Fresh network with layer sizes `[d_in, hidden.., d_out]` and
    /// per-layer uniform `±1/sqrt(fan_in)` initialization.
    pub fn new_random(layer_sizes: &[usize], act: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "invalid layer sizes {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(&mut rng));
            let b = Array1::from_shape_fn(fan_out, |_| dist.sample(&mut rng));
            weights.push(w);
            biases.push(b);
        }
        Ok(Self {
            weights,
            biases,
            act,
            seed,
        })
    }

    pub fn zeros(layer_sizes: &[usize], act: Activation) -> Result<Self> {
        let mut p = Self::new_random(layer_sizes, act, 0)?;
        for w in &mut p.weights {
            w.fill(0.0);
        }
        for b in &mut p.biases {
            b.fill(0.0);
        }
        Ok(p)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = vec![self.weights[0].ncols()];
        s.extend(self.weights.iter().map(|w| w.nrows()));
        s
    }

    pub fn d_in(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weights.last().unwrap().nrows()
    }

    /// Spatial dimension: the input is `(x, t)`, so `d = d_in - 1`.
    pub fn spatial_dim(&self) -> usize {
        self.d_in() - 1
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Consecutive layer shapes must compose and all entries be finite.
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.biases.len() {
            return Err(Error::Shape("weight/bias layer count mismatch".into()));
        }
        for l in 0..self.weights.len() {
            if self.biases[l].len() != self.weights[l].nrows() {
                return Err(Error::Shape(format!("layer {l}: bias length mismatch")));
            }
            if l + 1 < self.weights.len() && self.weights[l + 1].ncols() != self.weights[l].nrows()
            {
                return Err(Error::Shape(format!("layers {l}->{} do not compose", l + 1)));
            }
        }
        let finite = self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Domain("non-finite network parameter".into()));
        }
        Ok(())
    }
}

/// Gradient (or any tensor) with the same shape as [`MlpParams`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGrad {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: p.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGrad, c: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(c, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(c, b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.weights {
            *a *= c;
        }
        for a in &mut self.biases {
            *a *= c;
        }
    }

    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for a in &self.weights {
            s += a.iter().map(|v| v * v).sum::<f64>();
        }
        for a in &self.biases {
            s += a.iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    }
}

/// Requested derivative depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

/// Exact derivatives of a network at one point.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub value: Array1<f64>,
    /// `(d_out, d)`; entry `(j, i)` is the derivative of output `j` with
    /// respect to spatial coordinate `i`.
    pub jacobian_x: Array2<f64>,
    /// Derivative of each output with respect to the raw time input.
    pub time_partial: Array1<f64>,
    /// `sum_i d^2/dx_i^2` of each output; present for `Order::Second`.
    pub component_laplacians: Option<Array1<f64>>,
}

fn check_point(net: &MlpParams, x: ArrayView1<f64>, t: f64) -> Result<()> {
    if x.len() + 1 != net.d_in() {
        return Err(Error::Config(format!(
            "state dimension {} does not match network input {} (= d + 1)",
            x.len(),
            net.d_in()
        )));
    }
    if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite evaluation point".into()));
    }
    Ok(())
}

/// Evaluate the network at `(x, t)`.
pub fn forward(net: &MlpParams, x: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
    check_point(net, x, t)?;
    let inputs = batched::stack_time(&x.insert_axis(ndarray::Axis(0)).to_owned(), &[t]);
    let out = batched::forward_batch(net, &inputs);
    Ok(out.row(0).to_owned())
}

/// Exact derivatives at `(x, t)` via the layerwise jet recurrences.
pub fn derivatives(
    net: &MlpParams,
    x: ArrayView1<f64>,
    t: f64,
    order: Order,
) -> Result<DerivativeBundle> {
    check_point(net, x, t)?;
    let d = net.spatial_dim();
    let inputs = batched::stack_time(&x.insert_axis(ndarray::Axis(0)).to_owned(), &[t]);
    let dirs = batched::axis_directions(net.d_in(), d + 1);
    let jets = batched::jets_batch(net, &inputs, &dirs, matches!(order, Order::Second));
    let d_out = net.d_out();
    let mut jac = Array2::zeros((d_out, d));
    for i in 0..d {
        jac.column_mut(i).assign(&jets.first[i].row(0));
    }
    let time_partial = jets.first[d].row(0).to_owned();
    let component_laplacians = jets.second.as_ref().map(|sec| {
        let mut lap = Array1::zeros(d_out);
        for i in 0..d {
            lap += &sec[i].row(0);
        }
        lap
    });
    Ok(DerivativeBundle {
        value: jets.value.row(0).to_owned(),
        jacobian_x: jac,
        time_partial,
        component_laplacians,
    })
}

/// Exact divergence `sum_i ds_i/dx_i`; requires `d_out == d`.
pub fn divergence(net: &MlpParams, x: ArrayView1<f64>, t: f64) -> Result<f64> {
    if net.d_out() != net.spatial_dim() {
        return Err(Error::Shape(format!(
            "divergence needs d_out == d, got {} and {}",
            net.d_out(),
            net.spatial_dim()
        )));
    }
    let b = derivatives(net, x, t, Order::First)?;
    Ok(b.jacobian_x.diag().sum())
}

/// Hutchinson trace estimate of the divergence with Rademacher probes.
/// Intended for `d > 3`; the exact trace is always used in tests.
pub fn divergence_hutchinson(
    net: &MlpParams,
    x: ArrayView1<f64>,
    t: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if net.d_out() != net.spatial_dim() {
        return Err(Error::Shape("divergence needs d_out == d".into()));
    }
    if probes == 0 {
        return Err(Error::Config("need at least one probe".into()));
    }
    check_point(net, x, t)?;
    let d = net.spatial_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Array2::zeros((probes, net.d_in()));
    for mut row in dirs.rows_mut() {
        for i in 0..d {
            row[i] = if rand::Rng::gen::<bool>(&mut rng) { 1.0 } else { -1.0 };
        }
    }
    let inputs = batched::stack_time(&x.insert_axis(ndarray::Axis(0)).to_owned(), &[t]);
    let jets = batched::jets_batch(net, &inputs, &dirs, false);
    let mut acc = 0.0;
    for (k, jv) in jets.first.iter().enumerate() {
        // eps^T J eps with J the spatial Jacobian
        let eps = dirs.row(k);
        acc += jv
            .row(0)
            .iter()
            .zip(eps.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
    Ok(acc / probes as f64)
}

const CHECKPOINT_FORMAT: &str = "mlp-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    layer_sizes: Vec<usize>,
    activation: Activation,
    seed: u64,
    /// Row-major weight entries per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    train_state: Option<serde_json::Value>,
}

/// Serialize parameters (plus optional opaque training state). The float
/// encoding round-trips exactly.
pub fn save_checkpoint(
    path: &Path,
    params: &MlpParams,
    train_state: Option<serde_json::Value>,
) -> Result<()> {
    params.validate()?;
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        layer_sizes: params.layer_sizes(),
        activation: params.act,
        seed: params.seed,
        weights: params
            .weights
            .iter()
            .map(|w| w.iter().copied().collect())
            .collect(),
        biases: params.biases.iter().map(|b| b.to_vec()).collect(),
        train_state,
    };
    let bytes = serde_json::to_vec(&file)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, Option<serde_json::Value>)> {
    let bytes = std::fs::read(path)?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!(
            "unknown checkpoint format {:?}",
            file.format
        )));
    }
    let sizes = &file.layer_sizes;
    if sizes.len() < 2 || file.weights.len() != sizes.len() - 1 {
        return Err(Error::Config("checkpoint header/layer mismatch".into()));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..sizes.len() - 1 {
        let (rows, cols) = (sizes[l + 1], sizes[l]);
        let w = Array2::from_shape_vec((rows, cols), file.weights[l].clone())
            .map_err(|e| Error::Config(format!("checkpoint layer {l}: {e}")))?;
        if file.biases[l].len() != rows {
            return Err(Error::Config(format!("checkpoint layer {l}: bias length")));
        }
        weights.push(w);
        biases.push(Array1::from_vec(file.biases[l].clone()));
    }
    let params = MlpParams {
        weights,
        biases,
        act: file.activation,
        seed: file.seed,
    };
    params.validate()?;
    Ok((params, file.train_state))
}
