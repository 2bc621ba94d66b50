//! Small dense networks with a branch-per-input-block layout, batched
//! forward/backward passes in f64 and RMSProp.

use std::collections::HashMap;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::encoding::{FeatureKey, Field};
use crate::error::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    /// Row-wise softmax.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
    /// `y = x + act(Wx + b)`; needs `in == out`.
    pub residual: bool,
    pub trainable: bool,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(input: usize, output: usize, act: Activation, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (input + output).max(1) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((output, input), || rng.random_range(-limit..=limit));
        Dense { w, b: Array1::zeros(output), act, residual: false, trainable: true }
    }

    pub fn residual(width: usize, act: Activation, rng: &mut ChaCha8Rng) -> Self {
        Dense { residual: true, ..Dense::new(width, width, act, rng) }
    }

    pub fn input_len(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_len(&self) -> usize {
        self.w.nrows()
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let mut z = x.dot(&self.w.t());
        z += &self.b;
        let mut a = z.clone();
        match self.act {
            Activation::Identity => {}
            Activation::Relu => a.mapv_inplace(|v| v.max(0.0)),
            Activation::Softmax => {
                for mut row in a.rows_mut() {
                    let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - m).exp());
                    let sum = row.sum();
                    row /= sum;
                }
            }
        }
        if self.residual {
            a += &x;
        }
        (z, a)
    }

    /// Returns `(dW, db, dx)` given the upstream gradient on the output.
    fn backward(&self, x: ArrayView2<'_, f64>, z: &Array2<f64>, a: &Array2<f64>, da: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
        let dz = match self.act {
            Activation::Identity => da.clone(),
            Activation::Relu => {
                let mut d = da.clone();
                d.zip_mut_with(z, |g, &zz| {
                    if zz <= 0.0 {
                        *g = 0.0
                    }
                });
                d
            }
            Activation::Softmax => {
                // a is the softmax output (never residual)
                let mut d = Array2::zeros(da.raw_dim());
                for ((mut dr, pr), gr) in d.rows_mut().into_iter().zip(a.rows()).zip(da.rows()) {
                    let dot = pr.dot(&gr);
                    dr.assign(&(&pr * &(&gr - dot)));
                }
                d
            }
        };
        let dw = dz.t().dot(&x);
        let db = dz.sum_axis(Axis(0));
        let mut dx = dz.dot(&self.w);
        if self.residual {
            dx += da;
        }
        (dw, db, dx)
    }
}

/// One input block and the layers applied to it (none: passthrough).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub start: usize,
    pub len: usize,
    pub layers: Vec<Dense>,
}

impl Branch {
    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(self.len, Dense::output_len)
    }
}

/// Sizes of the input blocks and the output of a [`BranchNet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    /// Own observation (passed through unchanged).
    pub self_len: usize,
    pub other_len: usize,
    pub sn_len: usize,
    /// Critic only: own action (passed through).
    pub action_len: usize,
    /// Critic only: results of the other agents.
    pub results_len: usize,
    pub output_len: usize,
    pub softmax: bool,
}

impl NetShape {
    pub fn input_len(&self) -> usize {
        self.self_len + self.other_len + self.sn_len + self.action_len + self.results_len
    }
}

pub const OTHER_WIDTH: usize = 16;
pub const SN_WIDTH: [usize; 2] = [64, 32];
pub const RESULTS_WIDTH: usize = 16;
pub const TRUNK_WIDTH: usize = 64;

/// Branch sub-networks per input block, concatenated into a dense trunk
/// `64 → residual 64 → output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchNet {
    pub shape: NetShape,
    pub branches: Vec<Branch>,
    pub trunk: Vec<Dense>,
}

/// Per-layer gradients in [`BranchNet::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<(Array2<f64>, Array1<f64>)>);

/// Activations kept for the backward pass.
pub struct Tape {
    input: Array2<f64>,
    /// `(z, a)` per branch layer.
    branch: Vec<Vec<(Array2<f64>, Array2<f64>)>>,
    trunk_in: Array2<f64>,
    trunk: Vec<(Array2<f64>, Array2<f64>)>,
}

impl BranchNet {
    pub fn new(shape: NetShape, rng: &mut ChaCha8Rng) -> Self {
        let mut branches = Vec::new();
        let mut at = 0;
        let mut add = |len: usize, widths: &[usize], rng: &mut ChaCha8Rng| {
            let mut layers = Vec::new();
            let mut input = len;
            for &w in widths {
                layers.push(Dense::new(input, w, Activation::Relu, rng));
                input = w;
            }
            branches.push(Branch { start: at, len, layers });
            at += len;
        };
        add(shape.self_len, &[], rng);
        if shape.other_len > 0 {
            add(shape.other_len, &[OTHER_WIDTH], rng);
        }
        add(shape.sn_len, &SN_WIDTH, rng);
        if shape.action_len > 0 {
            add(shape.action_len, &[], rng);
        }
        if shape.results_len > 0 {
            add(shape.results_len, &[RESULTS_WIDTH], rng);
        }
        let trunk_in: usize = branches.iter().map(Branch::output_len).sum();
        let head = if shape.softmax { Activation::Softmax } else { Activation::Identity };
        let trunk = vec![
            Dense::new(trunk_in, TRUNK_WIDTH, Activation::Relu, rng),
            Dense::residual(TRUNK_WIDTH, Activation::Relu, rng),
            Dense::new(TRUNK_WIDTH, shape.output_len, head, rng),
        ];
        BranchNet { shape, branches, trunk }
    }

    pub fn input_len(&self) -> usize {
        self.shape.input_len()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.branches.iter().flat_map(|b| b.layers.iter()).chain(self.trunk.iter())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.branches.iter_mut().flat_map(|b| b.layers.iter_mut()).chain(self.trunk.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Layers whose shape depends on the node count: each branch's first
    /// layer, the trunk's first layer and the output layer.
    pub fn reconfigurable(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for b in &self.branches {
            out.extend((0..b.layers.len()).map(|i| i == 0));
        }
        let t = self.trunk.len();
        out.extend((0..t).map(|i| i == 0 || i + 1 == t));
        out
    }

    pub fn set_trainable(&mut self, mask: &[bool]) {
        for (l, &m) in self.layers_mut().zip(mask) {
            l.trainable = m;
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<(), NetError> {
        if x.ncols() != self.input_len() {
            return Err(NetError::InputDim { expected: self.input_len(), got: x.ncols() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>, NetError> {
        Ok(self.forward_tape(x)?.0)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        let m = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        Ok(self.forward(&m)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_tape(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Tape), NetError> {
        self.check_input(x)?;
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut branch_tape = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let mut h = x.slice(s![.., b.start..b.start + b.len]).to_owned();
            let mut tape = Vec::with_capacity(b.layers.len());
            for l in &b.layers {
                let (z, a) = l.forward(h.view());
                h = a.clone();
                tape.push((z, a));
            }
            outs.push(h);
            branch_tape.push(tape);
        }
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let trunk_in = concatenate(Axis(1), &views).expect("same batch size");
        let mut h = trunk_in.clone();
        let mut trunk_tape = Vec::with_capacity(self.trunk.len());
        for l in &self.trunk {
            let (z, a) = l.forward(h.view());
            h = a.clone();
            trunk_tape.push((z, a));
        }
        Ok((h, Tape { input: x.clone(), branch: branch_tape, trunk_in, trunk: trunk_tape }))
    }

    /// Gradients of `sum(d_out ⊙ output)` with respect to the parameters and
    /// the input.
    pub fn backward(&self, tape: &Tape, d_out: &Array2<f64>) -> (Grads, Array2<f64>) {
        let mut trunk_grads = Vec::with_capacity(self.trunk.len());
        let mut g = d_out.clone();
        for (i, l) in self.trunk.iter().enumerate().rev() {
            let x = if i == 0 { tape.trunk_in.view() } else { tape.trunk[i - 1].1.view() };
            let (z, a) = &tape.trunk[i];
            let (dw, db, dx) = l.backward(x, z, a, &g);
            trunk_grads.push((dw, db));
            g = dx;
        }
        trunk_grads.reverse();

        let mut d_input = Array2::zeros(tape.input.raw_dim());
        let mut branch_grads = Vec::new();
        let mut col = 0;
        for (b, bt) in self.branches.iter().zip(&tape.branch) {
            let w = b.output_len();
            let mut gb = g.slice(s![.., col..col + w]).to_owned();
            col += w;
            let mut local = Vec::with_capacity(b.layers.len());
            for (i, l) in b.layers.iter().enumerate().rev() {
                let x = if i == 0 { tape.input.slice(s![.., b.start..b.start + b.len]) } else { bt[i - 1].1.view() };
                let (z, a) = &bt[i];
                let (dw, db, dx) = l.backward(x, z, a, &gb);
                local.push((dw, db));
                gb = dx;
            }
            local.reverse();
            branch_grads.extend(local);
            d_input.slice_mut(s![.., b.start..b.start + b.len]).assign(&gb);
        }
        branch_grads.extend(trunk_grads);
        (Grads(branch_grads), d_input)
    }

    /// `self ← τ·src + (1 − τ)·self`.
    pub fn soft_update(&mut self, src: &BranchNet, tau: f64) {
        for (t, s) in self.layers_mut().zip(src.layers()) {
            t.w.zip_mut_with(&s.w, |a, &b| *a = tau * b + (1.0 - tau) * *a);
            t.b.zip_mut_with(&s.b, |a, &b| *a = tau * b + (1.0 - tau) * *a);
        }
    }

    /// Input and output keys of every layer, given the keys of the network
    /// input and output.
    fn layer_keys(&self, input: &[FeatureKey], output: &[FeatureKey]) -> Vec<(Vec<FeatureKey>, Vec<FeatureKey>)> {
        let hidden = |block: usize, layer: usize, width: usize| {
            (0..width).map(|u| FeatureKey::new(Field::Hidden, block, layer, u)).collect::<Vec<_>>()
        };
        let mut out = Vec::new();
        let mut trunk_in = Vec::new();
        for (bi, b) in self.branches.iter().enumerate() {
            let mut keys = input[b.start..b.start + b.len].to_vec();
            for (li, l) in b.layers.iter().enumerate() {
                let next = if li + 1 == b.layers.len() {
                    (0..l.output_len()).map(|u| FeatureKey::new(Field::BranchOutput, bi, li, u)).collect()
                } else {
                    hidden(bi, li, l.output_len())
                };
                out.push((keys, next.clone()));
                keys = next;
            }
            trunk_in.extend(keys);
        }
        let mut keys = trunk_in;
        let t = self.trunk.len();
        for (li, l) in self.trunk.iter().enumerate() {
            let next = if li + 1 == t { output.to_vec() } else { hidden(usize::from(u16::MAX), li, l.output_len()) };
            out.push((keys, next.clone()));
            keys = next;
        }
        out
    }

    /// Copies every weight of `old` whose input and output keys both exist
    /// in `self`; everything else keeps its current (fresh) value. Returns the
    /// number of copied parameters.
    pub fn transfer_from(
        &mut self,
        old: &BranchNet,
        old_keys: (&[FeatureKey], &[FeatureKey]),
        new_keys: (&[FeatureKey], &[FeatureKey]),
    ) -> Result<usize, NetError> {
        if old.branches.len() != self.branches.len() || old.trunk.len() != self.trunk.len() {
            return Err(NetError::LayerChain { layer: 0, expected: old.branches.len(), got: self.branches.len() });
        }
        if old_keys.0.len() != old.input_len() || new_keys.0.len() != self.input_len() {
            return Err(NetError::InputDim { expected: self.input_len(), got: new_keys.0.len() });
        }
        let ok = old.layer_keys(old_keys.0, old_keys.1);
        let nk = self.layer_keys(new_keys.0, new_keys.1);
        let mut copied = 0;
        for ((nl, ol), ((n_in, n_out), (o_in, o_out))) in
            self.layers_mut().zip(old.layers()).zip(nk.iter().zip(&ok))
        {
            let o_in: HashMap<_, _> = o_in.iter().enumerate().map(|(i, k)| (*k, i)).collect();
            let o_out: HashMap<_, _> = o_out.iter().enumerate().map(|(i, k)| (*k, i)).collect();
            let in_map: Vec<Option<usize>> = n_in.iter().map(|k| o_in.get(k).copied()).collect();
            for (r, key) in n_out.iter().enumerate() {
                let Some(&or) = o_out.get(key) else { continue };
                nl.b[r] = ol.b[or];
                copied += 1;
                for (c, oc) in in_map.iter().enumerate() {
                    if let Some(oc) = *oc {
                        nl.w[[r, c]] = ol.w[[or, oc]];
                        copied += 1;
                    }
                }
            }
        }
        Ok(copied)
    }
}

/// RMSProp with a per-layer cache; frozen layers are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    cache: Vec<(Array2<f64>, Array1<f64>)>,
}

impl RmsProp {
    pub fn new(net: &BranchNet, lr: f64) -> Self {
        let cache = net.layers().map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim()))).collect();
        RmsProp { lr, decay: 0.99, eps: 1e-8, cache }
    }

    pub fn step(&mut self, net: &mut BranchNet, grads: &Grads) {
        let (lr, decay, eps) = (self.lr, self.decay, self.eps);
        for ((layer, (gw, gb)), (cw, cb)) in net.layers_mut().zip(&grads.0).zip(self.cache.iter_mut()) {
            if !layer.trainable {
                continue;
            }
            let upd = |p: &mut f64, c: &mut f64, g: f64| {
                *c = decay * *c + (1.0 - decay) * g * g;
                *p -= lr * g / (c.sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.w).and(cw).and(gw).for_each(|p, c, &g| upd(p, c, g));
            ndarray::Zip::from(&mut layer.b).and(cb).and(gb).for_each(|p, c, &g| upd(p, c, g));
        }
    }
}

/// Stacks row vectors into a batch matrix.
pub fn batch(rows: &[&[f64]]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((rows.len(), cols));
    for (mut dst, src) in m.rows_mut().into_iter().zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(*src));
    }
    m
}
