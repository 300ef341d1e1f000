//! Per-modality bidirectional LSTM producing context-aware utterance
//! embeddings of length `2h` (forward state ‖ backward state).

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::init::xavier_uniform;
use crate::numeric::{NodeId, ParamStore, SegmentId, Tape};

/// One LSTM direction. Gates are stacked `[input, forget, candidate, output]`
/// in a single `4h × (d_in + h)` matrix acting on `x ‖ h_prev`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub w: SegmentId,
    pub b: SegmentId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize) -> Self {
        let w = store.add(format!("{prefix}.w"), 4 * hidden, input_dim + hidden);
        let b = store.add(format!("{prefix}.b"), 4 * hidden, 1);
        Self { w, b, input_dim, hidden }
    }

    /// Xavier weights per gate block; forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let h = self.hidden;
        xavier_uniform(store.get_mut(self.w), self.input_dim + h, h, rng);
        let b = store.get_mut(self.b);
        b.fill(0.0);
        b[h..2 * h].fill(1.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn register(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize) -> Self {
        Self {
            forward: LstmParams::register(store, &format!("{prefix}.fwd"), input_dim, hidden),
            backward: LstmParams::register(store, &format!("{prefix}.bwd"), input_dim, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        self.forward.init(store, rng);
        self.backward.init(store, rng);
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell(tape: &mut Tape<'_>, x: NodeId, h_prev: NodeId, c_prev: NodeId, p: &LstmParams) -> Result<(NodeId, NodeId)> {
    let h = p.hidden;
    if tape.value(x).len() != p.input_dim {
        return Err(Error::dim("lstm input", p.input_dim, tape.value(x).len()));
    }
    if tape.value(h_prev).len() != h || tape.value(c_prev).len() != h {
        return Err(Error::dim("lstm state", h, tape.value(h_prev).len()));
    }
    let xh = tape.concat(&[x, h_prev])?;
    let z = tape.linear(p.w, Some(p.b), xh)?;
    let zi = tape.slice(z, 0, h)?;
    let zf = tape.slice(z, h, h)?;
    let zg = tape.slice(z, 2 * h, h)?;
    let zo = tape.slice(z, 3 * h, h)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h_t = tape.mul(o, tc)?;
    Ok((h_t, c))
}

fn run_direction(tape: &mut Tape<'_>, seq: &[NodeId], p: &LstmParams, reverse: bool) -> Result<Vec<NodeId>> {
    let mut h = tape.zeros(p.hidden);
    let mut c = tape.zeros(p.hidden);
    let mut out = vec![h; seq.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..seq.len()).rev())
    } else {
        Box::new(0..seq.len())
    };
    for t in order {
        (h, c) = lstm_cell(tape, seq[t], h, c, p)?;
        out[t] = h;
    }
    Ok(out)
}

/// Encodes one modality's sequence; position `i` of the result is the
/// forward state at `i` concatenated with the backward state at `i`.
pub fn bilstm_encode(tape: &mut Tape<'_>, seq: &[NodeId], p: &BiLstmParams) -> Result<Vec<NodeId>> {
    if seq.is_empty() {
        return Err(Error::Argument("cannot encode an empty sequence".into()));
    }
    let fwd = run_direction(tape, seq, &p.forward, false)?;
    let bwd = run_direction(tape, seq, &p.backward, true)?;
    fwd.into_iter()
        .zip(bwd)
        .map(|(f, b)| tape.concat(&[f, b]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar-by-scalar LSTM step read straight from the flat weights.
    fn oracle_cell(store: &ParamStore, p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w = store.get(p.w);
        let b = store.get(p.b);
        let hd = p.hidden;
        let cols = p.input_dim + hd;
        let pre = |gate: usize, k: usize| {
            let row = gate * hd + k;
            let mut acc = b[row];
            for j in 0..p.input_dim {
                acc += w[row * cols + j] * x[j];
            }
            for j in 0..hd {
                acc += w[row * cols + p.input_dim + j] * h[j];
            }
            acc
        };
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for k in 0..hd {
            let i = sig(pre(0, k));
            let f = sig(pre(1, k));
            let g = pre(2, k).tanh();
            let o = sig(pre(3, k));
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    fn oracle_bilstm(store: &ParamStore, p: &BiLstmParams, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let hd = p.forward.hidden;
        let mut fwd = Vec::new();
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        for x in seq {
            (h, c) = oracle_cell(store, &p.forward, x, &h, &c);
            fwd.push(h.clone());
        }
        let mut bwd = vec![Vec::new(); seq.len()];
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        for t in (0..seq.len()).rev() {
            (h, c) = oracle_cell(store, &p.backward, &seq[t], &h, &c);
            bwd[t] = h.clone();
        }
        fwd.into_iter().zip(bwd).map(|(f, b)| [f, b].concat()).collect()
    }

    fn setup(input_dim: usize, hidden: usize, seed: u64) -> (ParamStore, BiLstmParams) {
        let mut store = ParamStore::new();
        let p = BiLstmParams::register(&mut store, "enc", input_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.init(&mut store, &mut rng);
        // perturb biases so every gate is exercised
        for b in [p.forward.b, p.backward.b] {
            for v in store.get_mut(b) {
                *v += rng.random_range(-0.5..0.5);
            }
        }
        (store, p)
    }

    fn random_seq(len: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
    }

    fn encode(store: &ParamStore, p: &BiLstmParams, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut tape = Tape::new(store);
        let nodes: Vec<NodeId> = seq.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = bilstm_encode(&mut tape, &nodes, p).unwrap();
        out.iter().map(|&n| tape.value(n).to_vec()).collect()
    }

    #[test]
    fn zero_params_give_zero_state() {
        let mut store = ParamStore::new();
        let p = LstmParams::register(&mut store, "l", 2, 3);
        let mut tape = Tape::new(&store);
        let x = tape.leaf(vec![0.7, -0.2]);
        let h0 = tape.zeros(3);
        let c0 = tape.zeros(3);
        let (h, c) = lstm_cell(&mut tape, x, h0, c0, &p).unwrap();
        assert_eq!(tape.value(h), &[0.0; 3]);
        assert_eq!(tape.value(c), &[0.0; 3]);
    }

    #[test]
    fn forget_bias_alone_retains_nothing_from_zero_state() {
        let mut store = ParamStore::new();
        let p = LstmParams::register(&mut store, "l", 2, 2);
        store.get_mut(p.b)[2..4].fill(1.0);
        let mut tape = Tape::new(&store);
        let x = tape.zeros(2);
        let h0 = tape.zeros(2);
        let c0 = tape.zeros(2);
        let (_, c) = lstm_cell(&mut tape, x, h0, c0, &p).unwrap();
        assert_eq!(tape.value(c), &[0.0, 0.0]);
    }

    #[test]
    fn cell_matches_scalar_oracle() {
        let (store, p) = setup(2, 2, 7);
        let x = [0.4, -1.1];
        let h = [0.2, -0.3];
        let c = [0.5, 0.1];
        let mut tape = Tape::new(&store);
        let xn = tape.leaf(x.to_vec());
        let hn = tape.leaf(h.to_vec());
        let cn = tape.leaf(c.to_vec());
        let (ht, ct) = lstm_cell(&mut tape, xn, hn, cn, &p.forward).unwrap();
        let (eh, ec) = oracle_cell(&store, &p.forward, &x, &h, &c);
        for (a, b) in tape.value(ht).iter().zip(&eh).chain(tape.value(ct).iter().zip(&ec)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bilstm_matches_unrolled_oracle() {
        let (store, p) = setup(3, 4, 21);
        let seq = random_seq(3, 3, 5);
        let got = encode(&store, &p, &seq);
        let want = oracle_bilstm(&store, &p, &seq);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.len(), 8);
            for (a, b) in g.iter().zip(w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_step_sequence() {
        let (store, p) = setup(2, 3, 4);
        let seq = random_seq(1, 2, 1);
        let got = encode(&store, &p, &seq);
        let want = oracle_bilstm(&store, &p, &seq);
        assert_eq!(got.len(), 1);
        for (a, b) in got[0].iter().zip(&want[0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn reversal_swaps_halves_with_swapped_directions() {
        let (store, p) = setup(2, 3, 9);
        let swapped = BiLstmParams {
            forward: p.backward,
            backward: p.forward,
        };
        let seq = random_seq(5, 2, 3);
        let mut rev = seq.clone();
        rev.reverse();
        let a = encode(&store, &p, &seq);
        let b = encode(&store, &swapped, &rev);
        for i in 0..5 {
            let j = 4 - i;
            assert_eq!(a[i][..3], b[j][3..]);
            assert_eq!(a[i][3..], b[j][..3]);
        }
    }

    #[test]
    fn every_position_sees_the_whole_sequence() {
        let (store, p) = setup(2, 3, 13);
        let seq = random_seq(5, 2, 8);
        let base = encode(&store, &p, &seq);
        for j in 0..5 {
            let mut pert = seq.clone();
            pert[j][0] += 0.1;
            let out = encode(&store, &p, &pert);
            for i in 0..5 {
                if i != j {
                    let moved = base[i].iter().zip(&out[i]).any(|(a, b)| (a - b).abs() > 1e-9);
                    assert!(moved, "g_{i} ignored position {j}");
                }
            }
        }
    }

    #[test]
    fn gradients_pass_grad_check() {
        let (store, p) = setup(2, 3, 17);
        let seq = random_seq(4, 2, 6);
        let target: Vec<f64> = random_seq(1, 6, 99).remove(0);
        let loss = |s: &ParamStore| -> (f64, Vec<f64>) {
            let mut tape = Tape::new(s);
            let nodes: Vec<NodeId> = seq.iter().map(|x| tape.leaf(x.clone())).collect();
            let out = bilstm_encode(&mut tape, &nodes, &p).unwrap();
            let mut terms = Vec::new();
            for n in out {
                let w = tape.leaf(target.clone());
                let prod = tape.mul(n, w).unwrap();
                let parts: Vec<NodeId> = (0..6).map(|k| tape.slice(prod, k, 1).unwrap()).collect();
                terms.push(tape.sum(&parts, 1.0).unwrap());
            }
            let l = tape.sum(&terms, 1.0).unwrap();
            (tape.scalar(l), tape.backward(l).unwrap().params)
        };
        let (_, analytic) = loss(&store);
        let report = grad_check(
            |flat| {
                let mut s = store.clone();
                s.set_flat(flat)?;
                Ok(loss(&s).0)
            },
            store.flat(),
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{}", report.max_rel_error);
    }

    #[test]
    fn errors() {
        let (store, p) = setup(2, 3, 1);
        let mut tape = Tape::new(&store);
        assert!(bilstm_encode(&mut tape, &[], &p).is_err());
        let bad = tape.leaf(vec![1.0; 3]);
        assert!(matches!(bilstm_encode(&mut tape, &[bad], &p), Err(Error::Dimension { .. })));
    }
}
