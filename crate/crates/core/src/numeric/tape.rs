//! Vector-level reverse-mode tape.
//!
//! A [`Tape`] records the forward computation of one loss over a borrowed
//! [`ParamStore`]. Every node holds its value; [`Tape::backward`] walks the
//! nodes in reverse and returns gradients for every parameter (flat, same
//! layout as the store) and every node.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::params::{ParamStore, SegmentId};
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(SegmentId),
    Linear {
        w: SegmentId,
        b: Option<SegmentId>,
        x: NodeId,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Mul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
    },
    Mean(Vec<NodeId>),
    Mask {
        x: NodeId,
        mask: Vec<f64>,
    },
    SoftmaxCe {
        logits: NodeId,
        gold: usize,
        probs: Vec<f64>,
    },
    Sum {
        xs: Vec<NodeId>,
        scale: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Same layout as [`ParamStore::flat`]; untouched parameters are exactly zero.
    pub params: Vec<f64>,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a node, `None` if it did not influence the output.
    pub fn wrt(&self, node: NodeId) -> Option<&[f64]> {
        self.nodes[node.0].as_deref()
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// For a scalar node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    /// Softmax probabilities stored by a cross-entropy node.
    pub fn probs(&self, id: NodeId) -> Option<&[f64]> {
        match &self.nodes[id.0].op {
            Op::SoftmaxCe { probs, .. } => Some(probs),
            _ => None,
        }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant input; receives a gradient but is not a parameter.
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.leaf(vec![0.0; len])
    }

    pub fn param(&mut self, seg: SegmentId) -> NodeId {
        let value = self.params.get(seg).to_vec();
        self.push(value, Op::Param(seg))
    }

    /// `W x (+ b)` with `W`, `b` taken from the parameter store.
    pub fn linear(&mut self, w: SegmentId, b: Option<SegmentId>, x: NodeId) -> Result<NodeId> {
        let wm = self.params.matrix(w);
        let xv = &self.nodes[x.0].value;
        let value = match b {
            Some(b) => ops::linear(wm, self.params.get(b), xv)?,
            None => ops::matvec(wm, xv)?,
        };
        Ok(self.push(value, Op::Linear { w, b, x }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = ops::relu(&self.nodes[x.0].value);
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = ops::sigmoid(&self.nodes[x.0].value);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = ops::tanh(&self.nodes[x.0].value);
        self.push(value, Op::Tanh(x))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = ops::hadamard(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = ops::add(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let refs: Vec<&[f64]> = parts.iter().map(|p| self.nodes[p.0].value.as_slice()).collect();
        let value = ops::concat(&refs)?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let src = &self.nodes[x.0].value;
        if start + len > src.len() {
            return Err(Error::dim("slice end", src.len(), start + len));
        }
        let value = src[start..start + len].to_vec();
        Ok(self.push(value, Op::Slice { x, start }))
    }

    pub fn mean(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let refs: Vec<&[f64]> = xs.iter().map(|p| self.nodes[p.0].value.as_slice()).collect();
        let value = ops::mean_reduce(&refs)?;
        Ok(self.push(value, Op::Mean(xs.to_vec())))
    }

    /// Inverted dropout; the identity when `rng` is `None` or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, p: f64, rng: Option<&mut R>) -> Result<NodeId> {
        match rng {
            Some(rng) if p > 0.0 => {
                let (value, mask) = ops::dropout(&self.nodes[x.0].value, p, rng, true)?;
                Ok(self.push(value, Op::Mask { x, mask }))
            }
            _ => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::Argument(format!("dropout rate {p} outside [0, 1)")));
                }
                Ok(x)
            }
        }
    }

    /// Scalar cross-entropy node; the probabilities are kept for [`Tape::probs`].
    pub fn softmax_ce(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let (loss, probs) = ops::softmax_cross_entropy(&self.nodes[logits.0].value, gold)?;
        Ok(self.push(vec![loss], Op::SoftmaxCe { logits, gold, probs }))
    }

    /// `scale · Σ xs` for scalar nodes.
    pub fn sum(&mut self, xs: &[NodeId], scale: f64) -> Result<NodeId> {
        let mut total = 0.0;
        for x in xs {
            let v = &self.nodes[x.0].value;
            ensure_len("scalar sum", 1, v.len())?;
            total += v[0];
        }
        Ok(self.push(vec![total * scale], Op::Sum { xs: xs.to_vec(), scale }))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        ensure_len("backward output", 1, self.nodes[output.0].value.len())?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut pgrad = vec![0.0; self.params.len()];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(seg) => {
                    let range = self.params.segment(*seg).range();
                    for (g, d) in pgrad[range].iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::Linear { w, b, x } => {
                    let wm = self.params.matrix(*w);
                    let lg = ops::linear_backward(wm, &self.nodes[x.0].value, &dy)?;
                    let wr = self.params.segment(*w).range();
                    for (g, d) in pgrad[wr].iter_mut().zip(&lg.dw) {
                        *g += d;
                    }
                    if let Some(b) = b {
                        let br = self.params.segment(*b).range();
                        for (g, d) in pgrad[br].iter_mut().zip(&lg.db) {
                            *g += d;
                        }
                    }
                    accumulate(&mut grads, *x, &lg.dx);
                }
                Op::Relu(x) => {
                    let dx = ops::relu_backward(&self.nodes[x.0].value, &dy);
                    accumulate(&mut grads, *x, &dx);
                }
                Op::Sigmoid(x) => {
                    let dx = ops::sigmoid_backward(&node.value, &dy);
                    accumulate(&mut grads, *x, &dx);
                }
                Op::Tanh(x) => {
                    let dx = ops::tanh_backward(&node.value, &dy);
                    accumulate(&mut grads, *x, &dx);
                }
                Op::Mul(a, b) => {
                    let da = ops::hadamard(&dy, &self.nodes[b.0].value)?;
                    let db = ops::hadamard(&dy, &self.nodes[a.0].value)?;
                    accumulate(&mut grads, *a, &da);
                    accumulate(&mut grads, *b, &db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &dy);
                    accumulate(&mut grads, *b, &dy);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        accumulate(&mut grads, *p, &dy[start..start + len]);
                        start += len;
                    }
                }
                Op::Slice { x, start } => {
                    let len = self.nodes[x.0].value.len();
                    let slot = grads[x.0].get_or_insert_with(|| vec![0.0; len]);
                    for (g, d) in slot[*start..].iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::Mean(xs) => {
                    let dx = ops::mean_reduce_backward(xs.len(), &dy);
                    for x in xs {
                        accumulate(&mut grads, *x, &dx);
                    }
                }
                Op::Mask { x, mask } => {
                    let dx = ops::hadamard(&dy, mask)?;
                    accumulate(&mut grads, *x, &dx);
                }
                Op::SoftmaxCe { logits, gold, probs } => {
                    let dx = ops::softmax_cross_entropy_backward(probs, *gold, dy[0]);
                    accumulate(&mut grads, *logits, &dx);
                }
                Op::Sum { xs, scale } => {
                    for x in xs {
                        accumulate(&mut grads, *x, &[dy[0] * scale]);
                    }
                }
            }
            grads[idx] = Some(dy);
        }

        Ok(Gradients {
            params: pgrad,
            nodes: grads,
        })
    }
}

/// Dropout policy for one forward pass. Training passes own a seeded RNG so
/// masks are reproducible; evaluation passes are the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn disabled() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn training(p: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Argument(format!("dropout rate {p} outside [0, 1)")));
        }
        Ok(Self { p, rng: Some(rng) })
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some() && self.p > 0.0
    }

    pub fn apply(&mut self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId> {
        tape.dropout(x, self.p, self.rng.as_mut())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], node: NodeId, d: &[f64]) {
    match &mut grads[node.0] {
        Some(g) => {
            for (gi, di) in g.iter_mut().zip(d) {
                *gi += di;
            }
        }
        slot @ None => *slot = Some(d.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> (ParamStore, SegmentId, SegmentId) {
        let mut s = ParamStore::new();
        let w = s.add("w", 2, 3);
        let b = s.add("b", 2, 1);
        s.flat_mut()
            .copy_from_slice(&[0.5, -1.0, 2.0, 0.1, 0.3, -0.7, 0.2, -0.4]);
        (s, w, b)
    }

    fn loss_of(s: &ParamStore, w: SegmentId, b: SegmentId, x: &[f64]) -> (f64, Gradients, NodeId) {
        let mut t = Tape::new(s);
        let xin = t.leaf(x.to_vec());
        let h = t.linear(w, Some(b), xin).unwrap();
        let a = t.tanh(h);
        let bp = t.param(b);
        let m = t.mul(a, bp).unwrap();
        let s2 = t.sigmoid(m);
        let both = t.concat(&[s2, a]).unwrap();
        let mid = t.slice(both, 1, 3).unwrap();
        let r = t.relu(mid);
        let l = t.softmax_ce(r, 1).unwrap();
        let total = t.sum(&[l], 0.5).unwrap();
        let g = t.backward(total).unwrap();
        (t.scalar(total), g, xin)
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let (s, w, b) = store();
        let x = [0.3, -0.2, 0.9];
        let (_, g, xin) = loss_of(&s, w, b, &x);
        let eps = 1e-6;
        for i in 0..s.len() {
            let mut up = s.clone();
            up.flat_mut()[i] += eps;
            let mut down = s.clone();
            down.flat_mut()[i] -= eps;
            let n = (loss_of(&up, w, b, &x).0 - loss_of(&down, w, b, &x).0) / (2.0 * eps);
            assert!((n - g.params[i]).abs() < 1e-8, "param {i}: {n} vs {}", g.params[i]);
        }
        let gx = g.wrt(xin).unwrap();
        for i in 0..3 {
            let mut xu = x;
            xu[i] += eps;
            let mut xd = x;
            xd[i] -= eps;
            let n = (loss_of(&s, w, b, &xu).0 - loss_of(&s, w, b, &xd).0) / (2.0 * eps);
            assert!((n - gx[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn unused_parameters_get_exact_zero() {
        let mut s = ParamStore::new();
        let used = s.add("used", 1, 2);
        let unused = s.add("unused", 3, 1);
        s.flat_mut().copy_from_slice(&[1.0, 2.0, 9.0, 9.0, 9.0]);
        let mut t = Tape::new(&s);
        let x = t.leaf(vec![1.0, 1.0]);
        let y = t.linear(used, None, x).unwrap();
        let l = t.sum(&[y], 1.0).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.params.len(), s.len());
        assert_eq!(&g.params[s.segment(unused).range()], &[0.0, 0.0, 0.0]);
        assert_eq!(&g.params[..2], &[1.0, 1.0]);
    }

    #[test]
    fn mean_and_dropout_gradients() {
        let s = ParamStore::new();
        let mut t = Tape::new(&s);
        let a = t.leaf(vec![1.0, 2.0]);
        let b = t.leaf(vec![3.0, -2.0]);
        let m = t.mean(&[a, b, a]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = t.dropout(m, 0.5, Some(&mut rng)).unwrap();
        let x0 = t.slice(d, 0, 1).unwrap();
        let x1 = t.slice(d, 1, 1).unwrap();
        let l = t.sum(&[x0, x1], 1.0).unwrap();
        let g = t.backward(l).unwrap();
        let mask: Vec<f64> = t
            .value(d)
            .iter()
            .zip(t.value(m))
            .map(|(o, i)| if *i == 0.0 { 0.0 } else { o / i })
            .collect();
        let ga = g.wrt(a).unwrap();
        let gb = g.wrt(b).unwrap();
        for k in 0..2 {
            assert!((ga[k] - 2.0 / 3.0 * mask[k]).abs() < 1e-15);
            assert!((gb[k] - 1.0 / 3.0 * mask[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_without_rng_is_identity() {
        let s = ParamStore::new();
        let mut t = Tape::new(&s);
        let a = t.leaf(vec![1.0, 2.0]);
        let d = t.dropout::<ChaCha8Rng>(a, 0.5, None).unwrap();
        assert_eq!(a, d);
        assert!(t.dropout::<ChaCha8Rng>(a, 1.5, None).is_err());
    }
}
