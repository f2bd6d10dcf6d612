//! Batched `f64` evaluation of networks and their input-derivative jets.
//!
//! The jet recurrence per layer `z = W h + b`, `h' = act(z)` is
//!
//! ```text
//! zdot_k  = W u_k            u_k' = act'(z) . zdot_k
//! zddot_k = W a_k            a_k' = act''(z) . zdot_k^2 + act'(z) . zddot_k
//! ```
//!
//! with `u_k`/`a_k` the first/second directional derivatives along
//! direction `k`. Directions are arbitrary input-space vectors; axis
//! directions recover Jacobian columns, time partials and Laplacians.

use super::MlpParams;
use ndarray::{Array1, Array2, Axis};

/// Append a time column to a batch of states.
pub fn stack_time(states: &Array2<f64>, times: &[f64]) -> Array2<f64> {
    let (n, d) = states.dim();
    assert_eq!(times.len(), n, "one time per row");
    let mut out = Array2::zeros((n, d + 1));
    out.slice_mut(ndarray::s![.., ..d]).assign(states);
    for (i, &t) in times.iter().enumerate() {
        out[[i, d]] = t;
    }
    out
}

/// Same time for every row.
pub fn stack_time_const(states: &Array2<f64>, t: f64) -> Array2<f64> {
    stack_time(states, &vec![t; states.nrows()])
}

/// First `n_dirs` coordinate directions of a `d_in`-dimensional input.
pub fn axis_directions(d_in: usize, n_dirs: usize) -> Array2<f64> {
    let mut dirs = Array2::zeros((n_dirs, d_in));
    for k in 0..n_dirs {
        dirs[[k, k]] = 1.0;
    }
    dirs
}

fn affine(h: &Array2<f64>, w: &Array2<f64>, b: Option<&Array1<f64>>) -> Array2<f64> {
    let mut z = h.dot(&w.t());
    if let Some(b) = b {
        z += &b.view().insert_axis(Axis(0));
    }
    z
}

/// Network values for a batch of inputs `(n, d_in)`.
pub fn forward_batch(p: &MlpParams, inputs: &Array2<f64>) -> Array2<f64> {
    assert_eq!(inputs.ncols(), p.d_in(), "forward_batch: input width");
    let last = p.weights.len() - 1;
    let mut h = inputs.to_owned();
    for (l, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
        let z = affine(&h, w, Some(b));
        h = if l == last { z } else { z.mapv(|v| p.act.eval(v, 0)) };
    }
    h
}

pub struct BatchedJets {
    /// `(n, d_out)`
    pub value: Array2<f64>,
    /// Per direction: `(n, d_out)` first directional derivatives.
    pub first: Vec<Array2<f64>>,
    /// Per direction: `(n, d_out)` second directional derivatives.
    pub second: Option<Vec<Array2<f64>>>,
}

/// Values with first (and optionally second) directional derivatives along
/// each row of `dirs`, exact to machine precision of the recurrence.
pub fn jets_batch(
    p: &MlpParams,
    inputs: &Array2<f64>,
    dirs: &Array2<f64>,
    second: bool,
) -> BatchedJets {
    assert_eq!(inputs.ncols(), p.d_in(), "jets_batch: input width");
    assert_eq!(dirs.ncols(), p.d_in(), "jets_batch: direction width");
    let n = inputs.nrows();
    let n_dirs = dirs.nrows();
    let last = p.weights.len() - 1;

    let mut h = inputs.to_owned();
    let mut u: Vec<Array2<f64>> = (0..n_dirs)
        .map(|k| {
            let mut m = Array2::zeros((n, p.d_in()));
            for mut row in m.rows_mut() {
                row.assign(&dirs.row(k));
            }
            m
        })
        .collect();
    // Second directional derivatives start identically zero.
    let mut a: Vec<Option<Array2<f64>>> = vec![None; n_dirs];

    for (l, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
        let z = affine(&h, w, Some(b));
        let zdot: Vec<Array2<f64>> = u.iter().map(|uk| affine(uk, w, None)).collect();
        let zddot: Vec<Option<Array2<f64>>> = a
            .iter()
            .map(|ak| ak.as_ref().map(|m| affine(m, w, None)))
            .collect();
        if l == last {
            h = z;
            u = zdot;
            a = zddot;
        } else {
            let act1 = z.mapv(|v| p.act.eval(v, 1));
            h = z.mapv(|v| p.act.eval(v, 0));
            if second {
                let act2 = z.mapv(|v| p.act.eval(v, 2));
                a = zdot
                    .iter()
                    .zip(&zddot)
                    .map(|(zd, zdd)| {
                        let mut ak = &act2 * zd * zd;
                        if let Some(zdd) = zdd {
                            ak = ak + &act1 * zdd;
                        }
                        Some(ak)
                    })
                    .collect();
            }
            u = zdot.into_iter().map(|zd| zd * &act1).collect();
        }
    }

    let d_out = p.d_out();
    let second_out = if second {
        Some(
            a.into_iter()
                .map(|ak| ak.unwrap_or_else(|| Array2::zeros((n, d_out))))
                .collect(),
        )
    } else {
        None
    };
    BatchedJets {
        value: h,
        first: u,
        second: second_out,
    }
}

/// Score-network evaluation: `s(y, s_time)` for an ensemble, one noising
/// time per row.
pub fn net_values(p: &MlpParams, states: &Array2<f64>, times: &[f64]) -> Array2<f64> {
    forward_batch(p, &stack_time(states, times))
}

/// Spatial gradient of a scalar-output network for an ensemble: `(n, d)`.
pub fn potential_gradient(p: &MlpParams, states: &Array2<f64>, times: &[f64]) -> Array2<f64> {
    assert_eq!(p.d_out(), 1, "potential_gradient: needs scalar output");
    let d = p.spatial_dim();
    let inputs = stack_time(states, times);
    let dirs = axis_directions(p.d_in(), d);
    let jets = jets_batch(p, &inputs, &dirs, false);
    let n = states.nrows();
    let mut g = Array2::zeros((n, d));
    for (k, jk) in jets.first.iter().enumerate() {
        g.column_mut(k).assign(&jk.column(0));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, MlpParams};
    use ndarray::array;

    #[test]
    fn zero_weight_net_returns_last_bias() {
        let mut p = MlpParams::zeros(&[3, 4, 2], Activation::Gelu).unwrap();
        p.biases[1] = array![0.7, -1.2];
        let out = forward_batch(&p, &stack_time_const(&array![[5.0, -3.0]], 9.0));
        assert_eq!(out.row(0).to_vec(), vec![0.7, -1.2]);
    }

    #[test]
    fn single_linear_layer_is_matrix_product() {
        let mut p = MlpParams::zeros(&[3, 2], Activation::Tanh).unwrap();
        p.weights[0] = array![[1.0, 2.0, 0.0], [-1.0, 0.5, 0.0]];
        let out = forward_batch(&p, &stack_time_const(&array![[3.0, -1.0]], 0.0));
        assert_eq!(out.row(0).to_vec(), vec![1.0, -3.5]);
    }
}
