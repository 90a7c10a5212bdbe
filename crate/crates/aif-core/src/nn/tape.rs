//! Reverse-mode autodiff on a tape of vector-valued nodes.
//!
//! Ops are coarse (whole layers, whole distribution quantities) rather than
//! scalar, which keeps tapes short and backward passes cache-friendly. The
//! objective graphs built on this tape end in a single scalar node;
//! `backward` runs one reverse sweep and returns per-node adjoints, so two
//! different losses on one tape cost two sweeps over shared forwards.
//!
//! Leaves come in two flavors: trainable (`leaf`) and constant
//! (`leaf_const`). Constant leaves never accumulate adjoints, which is how
//! frozen networks (e.g. the generative model inside the policy objective)
//! stay cheap.
//!
//! Every backward rule here is pinned against central finite differences in
//! the tests below and again, at scale, in the acceptance suite.

use rand::Rng;

use crate::nn::mlp::{apply_activation, matvec_into, sigmoid, Activation, GaussianNet, Layer, Mlp};
use crate::nn::tensor::Tensor;
use crate::rng::Stream;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// y = W·x, W row-major [rows × cols] stored in node `w`.
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Add { a: NodeId, b: NodeId },
    AddN { parts: Vec<NodeId> },
    Scale { x: NodeId, k: f64 },
    MulElem { a: NodeId, b: NodeId },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    Sigmoid { x: NodeId },
    /// y = floor + scale·sigmoid(x).
    ScaledSigmoid { x: NodeId, scale: f64, floor: f64 },
    Softmax { x: NodeId },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Ln { x: NodeId },
    Sqrt { x: NodeId },
    /// y = x ⊙ mask; mask entries are 0 or 1/(1−p) (inverted dropout).
    Dropout { x: NodeId, mask: Vec<f64> },
    Concat { parts: Vec<NodeId> },
    Slice { x: NodeId, start: usize, len: usize },
    Sum { x: NodeId },
    /// Scalar KL(q‖p) between diagonal Gaussians given as four vectors.
    GaussKl { qm: NodeId, qv: NodeId, pm: NodeId, pv: NodeId },
    /// Scalar 0.5 Σ ln(2πe·var).
    GaussEntropy { var: NodeId },
    /// Scalar Σ −p ln p − (1−p) ln(1−p). Inputs must already be in (0,1).
    BernEntropy { p: NodeId },
    /// Scalar −(1/n) Σ [t ln p + (1−t) ln(1−p)]. Inputs must be in (0,1).
    BceMean { p: NodeId, target: Vec<f64> },
    /// Scalar −ln(1 − MAE(p, t) + eps).
    PrefLoss { p: NodeId, target: Vec<f64>, eps: f64 },
}

/// Gradients from one backward sweep: an adjoint vector per reached node.
pub struct Grads {
    g: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Adjoint of `id`, if the node was reached by the sweep.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.g[id.0].as_deref()
    }

    /// Adjoint of `id`, or zeros of length `len` if unreached.
    pub fn get_or_zeros(&self, id: NodeId, len: usize) -> Vec<f64> {
        match &self.g[id.0] {
            Some(v) => v.clone(),
            None => vec![0.0; len],
        }
    }
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Vec<f64>>,
    ops: Vec<Op>,
    wants_grad: Vec<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.values[id.0]
    }

    /// Scalar value of a length-1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.values[id.0].len(), 1);
        self.values[id.0][0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.wants_grad.push(true);
        NodeId(self.ops.len() - 1)
    }

    /// Trainable leaf: adjoints are accumulated for it.
    pub fn leaf(&mut self, value: &[f64]) -> NodeId {
        self.push(value.to_vec(), Op::Leaf)
    }

    /// Constant leaf: backward never accumulates into it.
    pub fn leaf_const(&mut self, value: &[f64]) -> NodeId {
        let id = self.push(value.to_vec(), Op::Leaf);
        self.wants_grad[id.0] = false;
        id
    }

    // ------------------------------------------------------------------
    // Op constructors (forward values computed eagerly)
    // ------------------------------------------------------------------

    pub fn matvec(&mut self, w: NodeId, rows: usize, cols: usize, x: NodeId) -> NodeId {
        assert_eq!(self.values[w.0].len(), rows * cols, "matvec: weight size");
        assert_eq!(self.values[x.0].len(), cols, "matvec: input size");
        let mut out = vec![0.0; rows];
        matvec_into(&self.values[w.0], rows, cols, &self.values[x.0], &mut out);
        self.push(out, Op::MatVec { w, x, rows, cols })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.values[a.0].len(), self.values[b.0].len(), "add: lengths");
        let v: Vec<f64> =
            self.values[a.0].iter().zip(self.values[b.0].iter()).map(|(x, y)| x + y).collect();
        self.push(v, Op::Add { a, b })
    }

    pub fn add_n(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "add_n: empty");
        let n = self.values[parts[0].0].len();
        let mut v = vec![0.0; n];
        for &p in parts {
            assert_eq!(self.values[p.0].len(), n, "add_n: lengths");
            for (o, x) in v.iter_mut().zip(self.values[p.0].iter()) {
                *o += x;
            }
        }
        self.push(v, Op::AddN { parts: parts.to_vec() })
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let v: Vec<f64> = self.values[x.0].iter().map(|a| a * k).collect();
        self.push(v, Op::Scale { x, k })
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.values[a.0].len(), self.values[b.0].len(), "mul: lengths");
        let v: Vec<f64> =
            self.values[a.0].iter().zip(self.values[b.0].iter()).map(|(x, y)| x * y).collect();
        self.push(v, Op::MulElem { a, b })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.values[x.0].iter().map(|a| a.tanh()).collect();
        self.push(v, Op::Tanh { x })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.values[x.0].iter().map(|a| a.max(0.0)).collect();
        self.push(v, Op::Relu { x })
    }

    pub fn sigmoid_node(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.values[x.0].iter().map(|&a| sigmoid(a)).collect();
        self.push(v, Op::Sigmoid { x })
    }

    pub fn scaled_sigmoid(&mut self, x: NodeId, scale: f64, floor: f64) -> NodeId {
        let v: Vec<f64> =
            self.values[x.0].iter().map(|&a| floor + scale * sigmoid(a)).collect();
        self.push(v, Op::ScaledSigmoid { x, scale, floor })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let mut v = self.values[x.0].clone();
        apply_activation(Activation::Softmax, &mut v);
        self.push(v, Op::Softmax { x })
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let v: Vec<f64> = self.values[x.0].iter().map(|a| a.clamp(lo, hi)).collect();
        self.push(v, Op::Clamp { x, lo, hi })
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.values[x.0].iter().map(|a| a.ln()).collect();
        self.push(v, Op::Ln { x })
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.values[x.0].iter().map(|a| a.sqrt()).collect();
        self.push(v, Op::Sqrt { x })
    }

    /// Inverted dropout with drop probability `p`: units are zeroed with
    /// probability p, survivors scaled by 1/(1−p). `p = 0` is the identity
    /// (no node is created).
    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut Stream) -> NodeId {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0,1)");
        if p == 0.0 {
            return x;
        }
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.values[x.0].len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep_scale })
            .collect();
        let v: Vec<f64> =
            self.values[x.0].iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
        self.push(v, Op::Dropout { x, mask })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::new();
        for &p in parts {
            v.extend_from_slice(&self.values[p.0]);
        }
        self.push(v, Op::Concat { parts: parts.to_vec() })
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        assert!(start + len <= self.values[x.0].len(), "slice out of range");
        let v = self.values[x.0][start..start + len].to_vec();
        self.push(v, Op::Slice { x, start, len })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.values[x.0].iter().sum();
        self.push(vec![s], Op::Sum { x })
    }

    pub fn gauss_kl(&mut self, qm: NodeId, qv: NodeId, pm: NodeId, pv: NodeId) -> NodeId {
        let d = self.values[qm.0].len();
        assert!(
            self.values[qv.0].len() == d
                && self.values[pm.0].len() == d
                && self.values[pv.0].len() == d,
            "gauss_kl: dims"
        );
        let mut kl = 0.0;
        for i in 0..d {
            let (a, b) = (self.values[qm.0][i], self.values[qv.0][i]);
            let (c, e) = (self.values[pm.0][i], self.values[pv.0][i]);
            let dm = a - c;
            kl += 0.5 * ((e / b).ln() + (b + dm * dm) / e - 1.0);
        }
        self.push(vec![kl], Op::GaussKl { qm, qv, pm, pv })
    }

    pub fn gauss_entropy(&mut self, var: NodeId) -> NodeId {
        const LN_2PI_E: f64 = 2.837877066409345;
        let h: f64 = self.values[var.0].iter().map(|v| 0.5 * (LN_2PI_E + v.ln())).sum();
        self.push(vec![h], Op::GaussEntropy { var })
    }

    pub fn bern_entropy(&mut self, p: NodeId) -> NodeId {
        let h: f64 = self.values[p.0]
            .iter()
            .map(|&q| -q * q.ln() - (1.0 - q) * (1.0 - q).ln())
            .sum();
        self.push(vec![h], Op::BernEntropy { p })
    }

    pub fn bce_mean(&mut self, p: NodeId, target: &[f64]) -> NodeId {
        let probs = &self.values[p.0];
        assert_eq!(probs.len(), target.len(), "bce_mean: lengths");
        let n = probs.len() as f64;
        let bce: f64 = probs
            .iter()
            .zip(target.iter())
            .map(|(&q, &t)| -(t * q.ln() + (1.0 - t) * (1.0 - q).ln()))
            .sum::<f64>()
            / n;
        self.push(vec![bce], Op::BceMean { p, target: target.to_vec() })
    }

    pub fn pref_loss(&mut self, p: NodeId, target: &[f64], eps: f64) -> NodeId {
        let probs = &self.values[p.0];
        assert_eq!(probs.len(), target.len(), "pref_loss: lengths");
        let n = probs.len() as f64;
        let mae: f64 =
            probs.iter().zip(target.iter()).map(|(&q, &t)| (q - t).abs()).sum::<f64>() / n;
        let loss = -(1.0 - mae + eps).ln();
        self.push(vec![loss], Op::PrefLoss { p, target: target.to_vec(), eps })
    }

    // ------------------------------------------------------------------
    // Backward
    // ------------------------------------------------------------------

    /// Reverse sweep from a scalar `output`. Returns an adjoint per node;
    /// constant leaves and unreached nodes have none.
    pub fn backward(&self, output: NodeId) -> Grads {
        assert_eq!(self.values[output.0].len(), 1, "backward needs a scalar output");
        let mut g: Vec<Option<Vec<f64>>> = vec![None; self.ops.len()];
        g[output.0] = Some(vec![1.0]);

        // Local helper: add `delta` into the adjoint of `id` unless the node
        // opts out of gradients (constant leaf).
        macro_rules! accum {
            ($g:ident, $id:expr, $len:expr, $write:expr) => {{
                let idx = ($id).0;
                if self.wants_grad[idx] {
                    let slot = $g[idx].get_or_insert_with(|| vec![0.0; $len]);
                    #[allow(clippy::redundant_closure_call)]
                    ($write)(slot);
                }
            }};
        }

        for id in (0..self.ops.len()).rev() {
            let Some(gout) = g[id].take() else { continue };
            // Nodes the sweep reaches but that opt out still relay nothing;
            // put the adjoint back for callers who extract leaf grads.
            match &self.ops[id] {
                Op::Leaf => {
                    g[id] = Some(gout);
                    continue;
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    let wv = &self.values[w.0];
                    let xv = &self.values[x.0];
                    accum!(g, *w, rows * cols, |slot: &mut Vec<f64>| {
                        for r in 0..rows {
                            let gr = gout[r];
                            if gr != 0.0 {
                                let row = &mut slot[r * cols..(r + 1) * cols];
                                for (s, xc) in row.iter_mut().zip(xv.iter()) {
                                    *s += gr * xc;
                                }
                            }
                        }
                    });
                    accum!(g, *x, cols, |slot: &mut Vec<f64>| {
                        for r in 0..rows {
                            let gr = gout[r];
                            if gr != 0.0 {
                                let row = &wv[r * cols..(r + 1) * cols];
                                for (s, wc) in slot.iter_mut().zip(row.iter()) {
                                    *s += gr * wc;
                                }
                            }
                        }
                    });
                }
                Op::Add { a, b } => {
                    let n = gout.len();
                    accum!(g, *a, n, |slot: &mut Vec<f64>| {
                        for (s, go) in slot.iter_mut().zip(gout.iter()) {
                            *s += go;
                        }
                    });
                    accum!(g, *b, n, |slot: &mut Vec<f64>| {
                        for (s, go) in slot.iter_mut().zip(gout.iter()) {
                            *s += go;
                        }
                    });
                }
                Op::AddN { parts } => {
                    let n = gout.len();
                    for &p in parts {
                        accum!(g, p, n, |slot: &mut Vec<f64>| {
                            for (s, go) in slot.iter_mut().zip(gout.iter()) {
                                *s += go;
                            }
                        });
                    }
                }
                Op::Scale { x, k } => {
                    let (n, k) = (gout.len(), *k);
                    accum!(g, *x, n, |slot: &mut Vec<f64>| {
                        for (s, go) in slot.iter_mut().zip(gout.iter()) {
                            *s += k * go;
                        }
                    });
                }
                Op::MulElem { a, b } => {
                    let n = gout.len();
                    let av = &self.values[a.0];
                    let bv = &self.values[b.0];
                    accum!(g, *a, n, |slot: &mut Vec<f64>| {
                        for i in 0..n {
                            slot[i] += gout[i] * bv[i];
                        }
                    });
                    accum!(g, *b, n, |slot: &mut Vec<f64>| {
                        for i in 0..n {
                            slot[i] += gout[i] * av[i];
                        }
                    });
                }
                Op::Tanh { x } => {
                    let y = &self.values[id];
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            slot[i] += gout[i] * (1.0 - y[i] * y[i]);
                        }
                    });
                }
                Op::Relu { x } => {
                    let y = &self.values[id];
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            if y[i] > 0.0 {
                                slot[i] += gout[i];
                            }
                        }
                    });
                }
                Op::Sigmoid { x } => {
                    let y = &self.values[id];
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            slot[i] += gout[i] * y[i] * (1.0 - y[i]);
                        }
                    });
                }
                Op::ScaledSigmoid { x, scale, floor } => {
                    let y = &self.values[id];
                    let (scale, floor) = (*scale, *floor);
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            // sigmoid value recovered from y = floor + scale·σ.
                            let s = (y[i] - floor) / scale;
                            slot[i] += gout[i] * scale * s * (1.0 - s);
                        }
                    });
                }
                Op::Softmax { x } => {
                    let y = &self.values[id];
                    let dot: f64 = gout.iter().zip(y.iter()).map(|(go, yi)| go * yi).sum();
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            slot[i] += y[i] * (gout[i] - dot);
                        }
                    });
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &self.values[x.0];
                    let (lo, hi) = (*lo, *hi);
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            if xv[i] > lo && xv[i] < hi {
                                slot[i] += gout[i];
                            }
                        }
                    });
                }
                Op::Ln { x } => {
                    let xv = &self.values[x.0];
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            slot[i] += gout[i] / xv[i];
                        }
                    });
                }
                Op::Sqrt { x } => {
                    let y = &self.values[id];
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            slot[i] += gout[i] * 0.5 / y[i];
                        }
                    });
                }
                Op::Dropout { x, mask } => {
                    accum!(g, *x, gout.len(), |slot: &mut Vec<f64>| {
                        for i in 0..gout.len() {
                            slot[i] += gout[i] * mask[i];
                        }
                    });
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.values[p.0].len();
                        let seg = &gout[off..off + n];
                        accum!(g, p, n, |slot: &mut Vec<f64>| {
                            for (s, go) in slot.iter_mut().zip(seg.iter()) {
                                *s += go;
                            }
                        });
                        off += n;
                    }
                }
                Op::Slice { x, start, len } => {
                    let n = self.values[x.0].len();
                    let (start, len) = (*start, *len);
                    accum!(g, *x, n, |slot: &mut Vec<f64>| {
                        for i in 0..len {
                            slot[start + i] += gout[i];
                        }
                    });
                }
                Op::Sum { x } => {
                    let n = self.values[x.0].len();
                    let go = gout[0];
                    accum!(g, *x, n, |slot: &mut Vec<f64>| {
                        for s in slot.iter_mut() {
                            *s += go;
                        }
                    });
                }
                Op::GaussKl { qm, qv, pm, pv } => {
                    let go = gout[0];
                    let d = self.values[qm.0].len();
                    let (qmv, qvv) = (&self.values[qm.0], &self.values[qv.0]);
                    let (pmv, pvv) = (&self.values[pm.0], &self.values[pv.0]);
                    accum!(g, *qm, d, |slot: &mut Vec<f64>| {
                        for i in 0..d {
                            slot[i] += go * (qmv[i] - pmv[i]) / pvv[i];
                        }
                    });
                    accum!(g, *qv, d, |slot: &mut Vec<f64>| {
                        for i in 0..d {
                            slot[i] += go * 0.5 * (1.0 / pvv[i] - 1.0 / qvv[i]);
                        }
                    });
                    accum!(g, *pm, d, |slot: &mut Vec<f64>| {
                        for i in 0..d {
                            slot[i] += go * (pmv[i] - qmv[i]) / pvv[i];
                        }
                    });
                    accum!(g, *pv, d, |slot: &mut Vec<f64>| {
                        for i in 0..d {
                            let dm = qmv[i] - pmv[i];
                            slot[i] += go
                                * 0.5
                                * (1.0 / pvv[i] - (qvv[i] + dm * dm) / (pvv[i] * pvv[i]));
                        }
                    });
                }
                Op::GaussEntropy { var } => {
                    let go = gout[0];
                    let vv = &self.values[var.0];
                    accum!(g, *var, vv.len(), |slot: &mut Vec<f64>| {
                        for i in 0..vv.len() {
                            slot[i] += go * 0.5 / vv[i];
                        }
                    });
                }
                Op::BernEntropy { p } => {
                    let go = gout[0];
                    let pv = &self.values[p.0];
                    accum!(g, *p, pv.len(), |slot: &mut Vec<f64>| {
                        for i in 0..pv.len() {
                            slot[i] += go * ((1.0 - pv[i]) / pv[i]).ln();
                        }
                    });
                }
                Op::BceMean { p, target } => {
                    let go = gout[0];
                    let pv = &self.values[p.0];
                    let n = pv.len() as f64;
                    accum!(g, *p, pv.len(), |slot: &mut Vec<f64>| {
                        for i in 0..pv.len() {
                            slot[i] +=
                                go * (pv[i] - target[i]) / (pv[i] * (1.0 - pv[i]) * n);
                        }
                    });
                }
                Op::PrefLoss { p, target, eps } => {
                    let go = gout[0];
                    let pv = &self.values[p.0];
                    let n = pv.len() as f64;
                    let mae: f64 = pv
                        .iter()
                        .zip(target.iter())
                        .map(|(&q, &t)| (q - t).abs())
                        .sum::<f64>()
                        / n;
                    let denom = 1.0 - mae + eps;
                    accum!(g, *p, pv.len(), |slot: &mut Vec<f64>| {
                        for i in 0..pv.len() {
                            let s = (pv[i] - target[i]).signum();
                            let s = if pv[i] == target[i] { 0.0 } else { s };
                            slot[i] += go * s / (n * denom);
                        }
                    });
                }
            }
        }
        Grads { g }
    }

    // ------------------------------------------------------------------
    // Network bindings: put a network's parameters on the tape and run its
    // forward as tape ops, mirroring the plain forward bit for bit.
    // ------------------------------------------------------------------

    /// Bind one layer's parameters as leaves.
    pub fn bind_layer(&mut self, layer: &Layer, trainable: bool) -> BoundLayer {
        let w = if trainable {
            self.leaf(&layer.weight.data)
        } else {
            self.leaf_const(&layer.weight.data)
        };
        let b = if trainable {
            self.leaf(&layer.bias.data)
        } else {
            self.leaf_const(&layer.bias.data)
        };
        BoundLayer { w, b }
    }

    pub fn bind_mlp(&mut self, mlp: &Mlp, trainable: bool) -> BoundMlp {
        BoundMlp { layers: mlp.layers.iter().map(|l| self.bind_layer(l, trainable)).collect() }
    }

    pub fn bind_gauss(&mut self, net: &GaussianNet, trainable: bool) -> BoundGauss {
        BoundGauss {
            trunk: self.bind_mlp(&net.trunk, trainable),
            mean: self.bind_layer(&net.mean_head, trainable),
            var: self.bind_layer(&net.var_head, trainable),
        }
    }

    /// One layer forward on the tape. Dropout fires only when `dropout_on`
    /// and the layer has p > 0 (masks drawn from `rng`).
    fn layer_forward(
        &mut self,
        layer: &Layer,
        bound: &BoundLayer,
        x: NodeId,
        dropout_on: bool,
        rng: &mut Option<&mut Stream>,
    ) -> NodeId {
        let z = self.matvec(bound.w, layer.out_dim(), layer.in_dim(), x);
        let z = self.add(z, bound.b);
        let y = match layer.activation {
            Activation::Linear => z,
            Activation::Tanh => self.tanh(z),
            Activation::Relu => self.relu(z),
            Activation::SigmoidClamped { eps } => {
                let s = self.sigmoid_node(z);
                self.clamp(s, eps, 1.0 - eps)
            }
            Activation::ScaledSigmoid { scale, floor } => self.scaled_sigmoid(z, scale, floor),
            Activation::Softmax => self.softmax(z),
        };
        if dropout_on && layer.dropout > 0.0 {
            let r = rng.as_mut().expect("dropout requires an RNG stream");
            self.dropout(y, layer.dropout, r)
        } else {
            y
        }
    }

    /// MLP forward on the tape. Returns the output node and every layer's
    /// post-activation (post-dropout) node.
    pub fn forward_mlp(
        &mut self,
        mlp: &Mlp,
        bound: &BoundMlp,
        x: NodeId,
        dropout_on: bool,
        mut rng: Option<&mut Stream>,
    ) -> (NodeId, Vec<NodeId>) {
        assert_eq!(mlp.layers.len(), bound.layers.len(), "binding mismatch");
        let mut h = x;
        let mut outs = Vec::with_capacity(mlp.layers.len());
        for (layer, b) in mlp.layers.iter().zip(bound.layers.iter()) {
            h = self.layer_forward(layer, b, h, dropout_on, &mut rng);
            outs.push(h);
        }
        (h, outs)
    }

    /// Gaussian-net forward on the tape: (mean node, var node).
    pub fn forward_gauss(
        &mut self,
        net: &GaussianNet,
        bound: &BoundGauss,
        x: NodeId,
        dropout_on: bool,
        mut rng: Option<&mut Stream>,
    ) -> (NodeId, NodeId) {
        let (h, _) = self.forward_mlp(&net.trunk, &bound.trunk, x, dropout_on, rng.as_deref_mut());
        let mean = self.layer_forward(&net.mean_head, &bound.mean, h, dropout_on, &mut rng);
        let var = self.layer_forward(&net.var_head, &bound.var, h, dropout_on, &mut rng);
        (mean, var)
    }

    /// Reparameterized sample `mean + sqrt(var) ⊙ eps` with `eps` drawn from
    /// `rng`; gradients flow into mean and var.
    pub fn reparam_sample(&mut self, mean: NodeId, var: NodeId, rng: &mut Stream) -> NodeId {
        use rand_distr::{Distribution, StandardNormal};
        let d = self.values[mean.0].len();
        assert_eq!(self.values[var.0].len(), d, "reparam: dims");
        let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let eps = self.leaf_const(&eps);
        let sigma = self.sqrt(var);
        let scaled = self.mul_elem(sigma, eps);
        self.add(mean, scaled)
    }
}

/// Tape handles for one bound layer.
#[derive(Debug, Clone, Copy)]
pub struct BoundLayer {
    pub w: NodeId,
    pub b: NodeId,
}

/// Tape handles for a bound MLP.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub layers: Vec<BoundLayer>,
}

/// Tape handles for a bound Gaussian net.
#[derive(Debug, Clone)]
pub struct BoundGauss {
    pub trunk: BoundMlp,
    pub mean: BoundLayer,
    pub var: BoundLayer,
}

/// Collect an MLP's parameter gradients in `tensors()` order.
pub fn mlp_grads(tape: &Tape, grads: &Grads, mlp: &Mlp, bound: &BoundMlp) -> Vec<Tensor> {
    let mut out = Vec::new();
    for (layer, b) in mlp.layers.iter().zip(bound.layers.iter()) {
        let gw = grads.get_or_zeros(b.w, layer.weight.numel());
        let gb = grads.get_or_zeros(b.b, layer.bias.numel());
        let _ = tape; // values not needed; kept for signature symmetry
        out.push(Tensor { shape: layer.weight.shape.clone(), data: gw });
        out.push(Tensor { shape: layer.bias.shape.clone(), data: gb });
    }
    out
}

/// Collect a Gaussian net's parameter gradients in `tensors()` order.
pub fn gauss_grads(tape: &Tape, grads: &Grads, net: &GaussianNet, bound: &BoundGauss) -> Vec<Tensor> {
    let mut out = mlp_grads(tape, grads, &net.trunk, &bound.trunk);
    for (layer, b) in [(&net.mean_head, &bound.mean), (&net.var_head, &bound.var)] {
        out.push(Tensor {
            shape: layer.weight.shape.clone(),
            data: grads.get_or_zeros(b.w, layer.weight.numel()),
        });
        out.push(Tensor {
            shape: layer.bias.shape.clone(),
            data: grads.get_or_zeros(b.b, layer.bias.numel()),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::WeightInit;
    use crate::rng::stream;

    /// Central finite-difference check: `build` constructs a scalar output
    /// from leaves created out of `inputs`; analytic grads must match FD.
    fn fd_check(inputs: &[Vec<f64>], build: impl Fn(&mut Tape, &[NodeId]) -> NodeId, tol: f64) {
        let eval = |xs: &[Vec<f64>]| -> f64 {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = xs.iter().map(|v| tape.leaf(v)).collect();
            let out = build(&mut tape, &ids);
            tape.scalar(out)
        };
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|v| tape.leaf(v)).collect();
        let out = build(&mut tape, &ids);
        let grads = tape.backward(out);
        let h = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            let got = grads.get_or_zeros(ids[k], input.len());
            for i in 0..input.len() {
                let mut plus = inputs.to_vec();
                plus[k][i] += h;
                let mut minus = inputs.to_vec();
                minus[k][i] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                assert!(
                    (got[i] - fd).abs() < tol,
                    "input {k}[{i}]: analytic {} vs fd {fd}",
                    got[i]
                );
            }
        }
    }

    #[test]
    fn fd_matvec_add_tanh() {
        fd_check(
            &[vec![0.3, -0.5, 0.2, 0.9, -0.1, 0.7], vec![0.5, -0.3], vec![0.1, 0.2]],
            |t, ids| {
                let y = t.matvec(ids[0], 3, 2, ids[1]);
                let b = t.slice(ids[2], 0, 2);
                let b3 = t.concat(&[b, ids[2]]);
                let b3 = t.slice(b3, 0, 3);
                let z = t.add(y, b3);
                let a = t.tanh(z);
                t.sum(a)
            },
            1e-6,
        );
    }

    #[test]
    fn fd_sigmoid_softmax_relu() {
        fd_check(
            &[vec![0.2, -0.4, 0.6, 1.2]],
            |t, ids| {
                let s = t.sigmoid_node(ids[0]);
                let sm = t.softmax(s);
                let r = t.relu(ids[0]);
                let m = t.mul_elem(sm, r);
                t.sum(m)
            },
            1e-6,
        );
    }

    #[test]
    fn fd_scaled_sigmoid_sqrt_ln() {
        fd_check(
            &[vec![0.4, -1.1, 2.0]],
            |t, ids| {
                let v = t.scaled_sigmoid(ids[0], 1.5, 1e-4);
                let s = t.sqrt(v);
                let l = t.ln(s);
                t.sum(l)
            },
            1e-6,
        );
    }

    #[test]
    fn fd_fused_gaussian_ops() {
        fd_check(
            &[
                vec![0.3, -0.2],
                vec![0.8, 1.4],
                vec![0.0, 0.5],
                vec![1.0, 0.6],
            ],
            |t, ids| {
                let kl = t.gauss_kl(ids[0], ids[1], ids[2], ids[3]);
                let hq = t.gauss_entropy(ids[1]);
                let hp = t.gauss_entropy(ids[3]);
                let nhp = t.scale(hp, -1.0);
                t.add_n(&[kl, hq, nhp])
            },
            1e-6,
        );
    }

    #[test]
    fn fd_bernoulli_family() {
        fd_check(
            &[vec![0.2, 0.7, 0.45, 0.9]],
            |t, ids| {
                let h = t.bern_entropy(ids[0]);
                let bce = t.bce_mean(ids[0], &[1.0, 0.0, 1.0, 0.0]);
                let pref = t.pref_loss(ids[0], &[0.5, 0.5, 0.1, 0.95], 1e-6);
                t.add_n(&[h, bce, pref])
            },
            1e-6,
        );
    }

    #[test]
    fn fd_reparam_composition() {
        // sample = mean + sqrt(var)·eps with fixed eps as a const leaf.
        fd_check(
            &[vec![0.1, -0.6], vec![0.9, 0.25]],
            |t, ids| {
                let eps = t.leaf_const(&[0.7, -1.3]);
                let sig = t.sqrt(ids[1]);
                let sc = t.mul_elem(sig, eps);
                let s = t.add(ids[0], sc);
                let sq = t.mul_elem(s, s);
                t.sum(sq)
            },
            1e-6,
        );
    }

    #[test]
    fn fd_clamp_passes_interior_blocks_exterior() {
        let inputs = vec![vec![0.5, 2.0, -3.0]];
        let mut tape = Tape::new();
        let x = tape.leaf(&inputs[0]);
        let c = tape.clamp(x, 0.0, 1.0);
        let out = tape.sum(c);
        let g = tape.backward(out);
        assert_eq!(g.get_or_zeros(x, 3), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn fd_whole_mlp_through_tape() {
        let mut rng = stream(21, "fd-mlp");
        let mlp = Mlp {
            layers: vec![
                Layer::new(4, 6, Activation::Tanh, 0.0, WeightInit::Xavier, &mut rng),
                Layer::new(6, 3, Activation::SigmoidClamped { eps: 1e-6 }, 0.0, WeightInit::Xavier, &mut rng),
            ],
        };
        let x = vec![0.2, -0.7, 0.4, 0.9];
        let target = vec![1.0, 0.0, 1.0];
        // Analytic grads w.r.t. all parameters.
        let mut tape = Tape::new();
        let bound = tape.bind_mlp(&mlp, true);
        let xid = tape.leaf_const(&x);
        let (out, _) = tape.forward_mlp(&mlp, &bound, xid, false, None);
        let loss = tape.bce_mean(out, &target);
        let grads = tape.backward(loss);
        let analytic = mlp_grads(&tape, &grads, &mlp, &bound);

        // FD over every parameter.
        let h = 1e-5;
        let eval = |m: &Mlp| -> f64 {
            let mut t = Tape::new();
            let b = t.bind_mlp(m, true);
            let xi = t.leaf_const(&x);
            let (o, _) = t.forward_mlp(m, &b, xi, false, None);
            let l = t.bce_mean(o, &target);
            t.scalar(l)
        };
        let mut worst: f64 = 0.0;
        for ti in 0..analytic.len() {
            for ei in 0..analytic[ti].numel() {
                let mut mp = mlp.clone();
                mp.tensors_mut()[ti].data[ei] += h;
                let mut mm = mlp.clone();
                mm.tensors_mut()[ti].data[ei] -= h;
                let fd = (eval(&mp) - eval(&mm)) / (2.0 * h);
                worst = worst.max((analytic[ti].data[ei] - fd).abs());
            }
        }
        assert!(worst < 1e-6, "worst param-grad FD mismatch {worst}");
    }

    #[test]
    fn tape_forward_matches_plain_forward_bit_for_bit() {
        let mut rng = stream(23, "match");
        let mlp = Mlp {
            layers: vec![
                Layer::new(5, 8, Activation::Tanh, 0.1, WeightInit::Xavier, &mut rng),
                Layer::new(8, 4, Activation::Softmax, 0.0, WeightInit::Xavier, &mut rng),
            ],
        };
        let x = vec![0.1, 0.9, -0.4, 0.0, 0.55];
        let plain = mlp.forward(&x).unwrap();
        let mut tape = Tape::new();
        let bound = tape.bind_mlp(&mlp, false);
        let xid = tape.leaf_const(&x);
        // Dropout OFF path must equal the plain forward exactly.
        let (out, _) = tape.forward_mlp(&mlp, &bound, xid, false, None);
        assert_eq!(tape.value(out), plain.as_slice());
    }

    #[test]
    fn dropout_masks_scale_survivors_and_zero_dropped() {
        let mut rng = stream(29, "dropout");
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0; 1000]);
        let d = tape.dropout(x, 0.25, &mut rng);
        let vals = tape.value(d).to_vec();
        let dropped = vals.iter().filter(|&&v| v == 0.0).count();
        let kept = vals.iter().filter(|&&v| (v - 1.0 / 0.75).abs() < 1e-12).count();
        assert_eq!(dropped + kept, 1000);
        // ~250 dropped, generous window.
        assert!((150..=350).contains(&dropped), "dropped {dropped}");
        // Backward routes through the same mask.
        let s = tape.sum(d);
        let g = tape.backward(s);
        let gx = g.get_or_zeros(x, 1000);
        for (gv, v) in gx.iter().zip(vals.iter()) {
            assert_eq!(*gv, *v);
        }
    }

    #[test]
    fn zero_dropout_is_identity_node() {
        let mut rng = stream(31, "dropout0");
        let mut tape = Tape::new();
        let x = tape.leaf(&[0.5, 0.6]);
        let d = tape.dropout(x, 0.0, &mut rng);
        assert_eq!(d, x, "p=0 must not create a node");
    }

    #[test]
    fn const_leaves_receive_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(&[2.0]);
        let b = tape.leaf_const(&[3.0]);
        let m = tape.mul_elem(a, b);
        let s = tape.sum(m);
        let g = tape.backward(s);
        assert_eq!(g.get_or_zeros(a, 1), vec![3.0]);
        assert!(g.get(b).is_none());
    }

    #[test]
    fn two_backwards_on_one_tape_are_independent() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[0.4, 0.6]);
        let s1 = tape.sum(x);
        let sq = tape.mul_elem(x, x);
        let s2 = tape.sum(sq);
        let g1 = tape.backward(s1);
        let g2 = tape.backward(s2);
        assert_eq!(g1.get_or_zeros(x, 2), vec![1.0, 1.0]);
        assert_eq!(g2.get_or_zeros(x, 2), vec![0.8, 1.2]);
        // Rerunning the first sweep still gives the same result.
        let g1b = tape.backward(s1);
        assert_eq!(g1b.get_or_zeros(x, 2), vec![1.0, 1.0]);
    }
}
