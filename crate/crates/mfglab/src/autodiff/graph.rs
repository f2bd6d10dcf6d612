//! Networks lifted onto the tape, and the batch gradient driver.
//!
//! Losses implement [`BatchLossBuilder`]: given a tape and the lifted
//! network they emit one scalar node per sample. [`value_and_grad`] averages
//! terms and parameter adjoints over the batch. Samples are processed in
//! parallel but reduced in a fixed order, so results are independent of the
//! thread count.

use super::vtape::{NodeId, VTape};
use super::{Activation, MlpGrad, MlpParams};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// A network whose parameters are tape leaves.
pub struct TapeNet {
    pub w: Vec<NodeId>,
    pub b: Vec<NodeId>,
    /// `(rows, cols)` per layer.
    dims: Vec<(usize, usize)>,
    act: Activation,
}

/// Value and directional-derivative nodes produced by [`TapeNet::jets_axis`].
pub struct TapeJets {
    pub value: NodeId,
    /// First directional derivative per direction, each of length `d_out`.
    pub first: Vec<NodeId>,
    /// Second directional derivative per direction (absent for first order).
    pub second: Option<Vec<NodeId>>,
}

impl TapeNet {
    /// Push all parameters as leaves, weights row-major then bias per layer.
    pub fn lift(tape: &mut VTape, p: &MlpParams) -> Self {
        let mut w = Vec::new();
        let mut b = Vec::new();
        let mut dims = Vec::new();
        for (wl, bl) in p.weights.iter().zip(&p.biases) {
            let flat: Vec<f64> = wl.iter().copied().collect();
            w.push(tape.leaf(&flat));
            b.push(tape.leaf(bl.as_slice().unwrap()));
            dims.push((wl.nrows(), wl.ncols()));
        }
        Self {
            w,
            b,
            dims,
            act: p.act,
        }
    }

    pub fn d_in(&self) -> usize {
        self.dims[0].1
    }

    pub fn d_out(&self) -> usize {
        self.dims.last().unwrap().0
    }

    pub fn forward(&self, tape: &mut VTape, input: NodeId) -> NodeId {
        let last = self.dims.len() - 1;
        let mut h = input;
        for l in 0..self.dims.len() {
            let (rows, cols) = self.dims[l];
            let z0 = tape.matvec(self.w[l], rows, cols, h);
            let z = tape.add(z0, self.b[l]);
            h = if l == last { z } else { tape.act(z, self.act, 0) };
        }
        h
    }

    /// Value plus exact first (and optionally second) derivatives with
    /// respect to the first `n_dirs` input coordinates. The derivative of
    /// everything here with respect to the parameters — and, through
    /// `input`, with respect to upstream nodes — flows through the tape.
    pub fn jets_axis(
        &self,
        tape: &mut VTape,
        input: NodeId,
        n_dirs: usize,
        second: bool,
    ) -> TapeJets {
        let last = self.dims.len() - 1;
        let mut h = input;
        let mut u: Vec<Option<NodeId>> = vec![None; n_dirs]; // None = axis seed not yet mixed
        let mut a: Vec<Option<NodeId>> = vec![None; n_dirs]; // None = identically zero

        for l in 0..self.dims.len() {
            let (rows, cols) = self.dims[l];
            let z0 = tape.matvec(self.w[l], rows, cols, h);
            let z = tape.add(z0, self.b[l]);
            let zdot: Vec<NodeId> = (0..n_dirs)
                .map(|k| match u[k] {
                    // W e_k is just column k of W
                    None => tape.mat_col(self.w[l], rows, cols, k),
                    Some(uk) => tape.matvec(self.w[l], rows, cols, uk),
                })
                .collect();
            let zddot: Vec<Option<NodeId>> = a
                .iter()
                .map(|ak| ak.map(|ak| tape.matvec(self.w[l], rows, cols, ak)))
                .collect();
            if l == last {
                h = z;
                u = zdot.into_iter().map(Some).collect();
                a = zddot;
            } else {
                let act1 = tape.act(z, self.act, 1);
                if second {
                    let act2 = tape.act(z, self.act, 2);
                    a = zdot
                        .iter()
                        .zip(&zddot)
                        .map(|(&zd, zdd)| {
                            let zd2 = tape.mul(zd, zd);
                            let t2 = tape.mul(act2, zd2);
                            Some(match zdd {
                                Some(zdd) => {
                                    let t1 = tape.mul(act1, *zdd);
                                    tape.add(t2, t1)
                                }
                                None => t2,
                            })
                        })
                        .collect();
                }
                u = zdot.into_iter().map(|zd| Some(tape.mul(act1, zd))).collect();
                h = tape.act(z, self.act, 0);
            }
        }

        let d_out = self.d_out();
        let zero = || vec![0.0; d_out];
        let first = u
            .into_iter()
            .map(|uk| uk.expect("jets: at least one layer"))
            .collect();
        let second_out = if second {
            Some(
                a.into_iter()
                    .map(|ak| ak.unwrap_or_else(|| tape.leaf(&zero())))
                    .collect(),
            )
        } else {
            None
        };
        TapeJets {
            value: h,
            first,
            second: second_out,
        }
    }
}

/// Per-sample loss terms built on the tape. The reported loss is the mean
/// of the terms.
pub trait BatchLossBuilder: Sync {
    fn n_samples(&self) -> usize;
    fn sample_term(&self, tape: &mut VTape, net: &TapeNet, i: usize) -> NodeId;
}

fn read_grad(tape: &VTape, net: &TapeNet, p: &MlpParams, into: &mut MlpGrad) {
    for (l, (wid, bid)) in net.w.iter().zip(&net.b).enumerate() {
        let wadj = tape.adjoint(*wid);
        let ws = into.weights[l].as_slice_mut().unwrap();
        for (dst, src) in ws.iter_mut().zip(wadj) {
            *dst += src;
        }
        let badj = tape.adjoint(*bid);
        let bs = into.biases[l].as_slice_mut().unwrap();
        for (dst, src) in bs.iter_mut().zip(badj) {
            *dst += src;
        }
    }
    let _ = p;
}

/// Mean loss and its exact parameter gradient.
///
/// Fixed-size chunks of samples are evaluated in parallel and reduced in
/// chunk order, so the result is bitwise-reproducible.
pub fn value_and_grad(p: &MlpParams, builder: &impl BatchLossBuilder) -> Result<(f64, MlpGrad)> {
    let n = builder.n_samples();
    if n == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    const CHUNK: usize = 8;
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n)))
        .collect();
    let partials: Vec<(f64, MlpGrad)> = chunks
        .par_iter()
        .map_init(VTape::new, |tape, &(s, e)| {
            let mut acc = MlpGrad::zeros_like(p);
            let mut val = 0.0;
            for i in s..e {
                tape.reset();
                let net = TapeNet::lift(tape, p);
                let term = builder.sample_term(tape, &net, i);
                val += tape.scalar_value(term);
                tape.backward(term);
                read_grad(tape, &net, p, &mut acc);
            }
            (val, acc)
        })
        .collect();

    let mut grad = MlpGrad::zeros_like(p);
    let mut value = 0.0;
    for (v, g) in &partials {
        value += v;
        grad.add_scaled(g, 1.0);
    }
    let inv = 1.0 / n as f64;
    grad.scale(inv);
    Ok((value * inv, grad))
}

/// Mean of the per-sample terms only (no backward sweep).
pub fn value_only(p: &MlpParams, builder: &impl BatchLossBuilder) -> Result<f64> {
    let n = builder.n_samples();
    if n == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    const CHUNK: usize = 16;
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n)))
        .collect();
    let partials: Vec<f64> = chunks
        .par_iter()
        .map_init(VTape::new, |tape, &(s, e)| {
            let mut val = 0.0;
            for i in s..e {
                tape.reset();
                let net = TapeNet::lift(tape, p);
                let term = builder.sample_term(tape, &net, i);
                val += tape.scalar_value(term);
            }
            val
        })
        .collect();
    Ok(partials.iter().sum::<f64>() / n as f64)
}
