//! Shared building blocks: embeddings, affine maps, recurrent encoders and
//! the (deep) biaffine scorer.

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Tensor, Var};
use super::params::{Init, ParamId, ParamStore};
use super::vocab::{Vocab, UNK_ID};

/// Affine map `x W + b` on row vectors.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, output: usize) -> Self {
        Linear {
            w: store.get_or_init(&format!("{}.w", name), (input, output), Init::FanIn, rng),
            b: store.get_or_init(&format!("{}.b", name), (1, output), Init::Zeros, rng),
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

/// `|V|×d` lookup table over a [`Vocab`].
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub vocab: Vocab,
    pub table: ParamId,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, vocab: Vocab, dim: usize) -> Self {
        let table = store.get_or_init(name, (vocab.len(), dim), Init::Uniform(0.1), rng);
        EmbeddingTable { vocab, table, dim }
    }

    /// A frozen table with the given rows.
    pub fn frozen(store: &mut ParamStore, name: &str, vocab: Vocab, matrix: Tensor) -> Self {
        assert_eq!(vocab.len(), matrix.nrows());
        let dim = matrix.ncols();
        let table = match store.id(name) {
            Some(id) => id,
            None => store.insert(name, matrix, false),
        };
        store.set_trainable(table, false);
        EmbeddingTable { vocab, table, dim }
    }

    pub fn indices<S: AsRef<str>>(&self, symbols: &[S]) -> Vec<usize> {
        symbols.iter().map(|s| self.vocab.index_or_unk(s.as_ref())).collect()
    }

    pub fn lookup(&self, g: &mut Graph, indices: &[usize]) -> Var {
        let t = g.param(self.table);
        g.gather(t, indices)
    }
}

/// Replaces each symbol by `drop` with probability `p`.
pub fn word_dropout_replace(symbols: &[usize], p: f64, drop: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    symbols
        .iter()
        .map(|&s| if p > 0.0 && rng.gen::<f64>() < p { drop } else { s })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Hidden and cell state, each `rows × hidden`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

pub struct LstmRun {
    /// Hidden states in input order, `n × hidden`.
    pub states: Var,
    /// State after the last processed step (position 0 when run in reverse).
    pub last: LstmState,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize) -> Self {
        Lstm {
            wx: store.get_or_init(&format!("{}.wx", name), (input, 4 * hidden), Init::FanIn, rng),
            wh: store.get_or_init(&format!("{}.wh", name), (hidden, 4 * hidden), Init::Orthogonal, rng),
            b: store.get_or_init(&format!("{}.b", name), (1, 4 * hidden), Init::Zeros, rng),
            input,
            hidden,
        }
    }

    pub fn zero_state(&self, g: &mut Graph, rows: usize) -> LstmState {
        LstmState {
            h: g.zeros(rows, self.hidden),
            c: g.zeros(rows, self.hidden),
        }
    }

    /// One step on pre-projected input `xw` (`rows × 4h`, bias included).
    fn step_projected(&self, g: &mut Graph, xw: Var, state: LstmState, h_mask: Option<&Tensor>) -> LstmState {
        let wh = g.param(self.wh);
        let h_in = match h_mask {
            Some(m) => g.mul_const(state.h, m.clone()),
            None => state.h,
        };
        let rec = g.matmul(h_in, wh);
        let z = g.add(xw, rec);
        let hc = g.lstm_cell(z, state.c);
        LstmState {
            h: g.slice_cols(hc, 0, self.hidden),
            c: g.slice_cols(hc, self.hidden, self.hidden),
        }
    }

    pub fn project(&self, g: &mut Graph, x: Var) -> Var {
        let wx = g.param(self.wx);
        let b = g.param(self.b);
        let xw = g.matmul(x, wx);
        g.add_row(xw, b)
    }

    /// Single step on input rows `x` (`rows × input`).
    pub fn step(&self, g: &mut Graph, x: Var, state: LstmState) -> LstmState {
        let xw = self.project(g, x);
        self.step_projected(g, xw, state, None)
    }

    /// Runs over the rows of `x`. Recurrent dropout uses one mask for all
    /// time steps.
    pub fn run(&self, g: &mut Graph, x: Var, reverse: bool, init: Option<LstmState>, rec_dropout: f64) -> LstmRun {
        let n = g.shape(x).0;
        assert!(n > 0, "LSTM over an empty sequence");
        let xw = self.project(g, x);
        let mut state = init.unwrap_or_else(|| self.zero_state(g, 1));
        let mask = if rec_dropout > 0.0 && g.is_training() {
            Some(g.dropout_mask(1, self.hidden, rec_dropout))
        } else {
            None
        };
        let mut hs = Vec::with_capacity(n);
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let xt = g.row(xw, t);
            state = self.step_projected(g, xt, state, mask.as_ref());
            hs.push(state.h);
        }
        if reverse {
            hs.reverse();
        }
        LstmRun {
            states: g.concat_rows(&hs),
            last: state,
        }
    }

    /// Batched run over sequences of different lengths. `steps[t]` holds the
    /// inputs of time step `t` for every sequence (`batch × input`) and
    /// `lengths[b]` the length of sequence `b`; finished sequences keep
    /// their state. Returns the final hidden states, `batch × hidden`.
    pub fn run_masked(&self, g: &mut Graph, steps: &[Var], lengths: &[usize]) -> Var {
        let batch = lengths.len();
        let mut state = self.zero_state(g, batch);
        for (t, &x) in steps.iter().enumerate() {
            let xw = self.project(g, x);
            let next = self.step_projected(g, xw, state, None);
            if lengths.iter().all(|&l| l > t) {
                state = next;
                continue;
            }
            let keep = Tensor::from_shape_fn((batch, self.hidden), |(b, _)| if lengths[b] > t { 1.0 } else { 0.0 });
            let hold = keep.mapv(|k| 1.0 - k);
            let h_new = g.mul_const(next.h, keep.clone());
            let h_old = g.mul_const(state.h, hold.clone());
            let c_new = g.mul_const(next.c, keep);
            let c_old = g.mul_const(state.c, hold);
            state = LstmState {
                h: g.add(h_new, h_old),
                c: g.add(c_new, c_old),
            };
        }
        state.h
    }
}

#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

pub struct BiLstmRun {
    /// `n × 2h`, forward states then backward states.
    pub states: Var,
    pub last_fwd: LstmState,
    /// Backward state at position 0, i.e. after reading the whole sequence.
    pub last_bwd: LstmState,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize) -> Self {
        BiLstm {
            fwd: Lstm::new(store, rng, &format!("{}.fwd", name), input, hidden),
            bwd: Lstm::new(store, rng, &format!("{}.bwd", name), input, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn run(&self, g: &mut Graph, x: Var, rec_dropout: f64) -> BiLstmRun {
        let f = self.fwd.run(g, x, false, None, rec_dropout);
        let b = self.bwd.run(g, x, true, None, rec_dropout);
        BiLstmRun {
            states: g.concat_cols(&[f.states, b.states]),
            last_fwd: f.last,
            last_bwd: b.last,
        }
    }
}

/// Stacked BiLSTM whose layers are gated against a projection of their input:
/// `out = t ⊙ BiLSTM(x) + (1 − t) ⊙ P x` with `t = σ(G x)`.
#[derive(Clone, Debug)]
pub struct HighwayBiLstm {
    pub layers: Vec<HighwayLayer>,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct HighwayLayer {
    pub lstm: BiLstm,
    pub gate: Linear,
    pub proj: Linear,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct DropoutSpec {
    /// Between layers and on outputs.
    pub feedforward: f64,
    /// Variational mask on recurrent connections.
    pub recurrent: f64,
}

impl HighwayBiLstm {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize, layers: usize) -> Self {
        assert!(layers >= 1, "highway BiLSTM needs at least one layer");
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * hidden };
                HighwayLayer {
                    lstm: BiLstm::new(store, rng, &format!("{}.{}.lstm", name, l), inp, hidden),
                    gate: Linear::new(store, rng, &format!("{}.{}.gate", name, l), inp, 2 * hidden),
                    proj: Linear::new(store, rng, &format!("{}.{}.proj", name, l), inp, 2 * hidden),
                }
            })
            .collect();
        HighwayBiLstm { layers, hidden }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn forward(&self, g: &mut Graph, x: Var, dropout: DropoutSpec) -> Var {
        let mut h = x;
        for layer in &self.layers {
            let run = layer.lstm.run(g, h, dropout.recurrent);
            let gz = layer.gate.forward(g, h);
            let t = g.sigmoid(gz);
            let p = layer.proj.forward(g, h);
            let carried = g.mul(t, run.states);
            let neg = g.neg(t);
            let one_minus = g.shift(neg, 1.0);
            let skipped = g.mul(one_minus, p);
            let out = g.add(carried, skipped);
            h = g.dropout(out, dropout.feedforward);
        }
        h
    }
}

/// Unidirectional character LSTM; a word is represented by its final hidden state.
#[derive(Clone, Debug)]
pub struct CharLstm {
    pub chars: EmbeddingTable,
    pub lstm: Lstm,
}

impl CharLstm {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, vocab: Vocab, char_dim: usize, hidden: usize) -> Self {
        CharLstm {
            chars: EmbeddingTable::new(store, rng, &format!("{}.emb", name), vocab, char_dim),
            lstm: Lstm::new(store, rng, &format!("{}.lstm", name), char_dim, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    /// Character indices of a word; the empty word is a single unknown character.
    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        let ids: Vec<usize> = word
            .chars()
            .map(|c| self.chars.vocab.index_or_unk(c.encode_utf8(&mut [0; 4])))
            .collect();
        if ids.is_empty() {
            vec![UNK_ID]
        } else {
            ids
        }
    }

    /// Embeds every word at once, `words × hidden`.
    pub fn embed_words<S: AsRef<str>>(&self, g: &mut Graph, words: &[S], dropout: f64) -> Var {
        let ids: Vec<Vec<usize>> = words.iter().map(|w| self.char_ids(w.as_ref())).collect();
        self.embed_ids(g, &ids, dropout)
    }

    pub fn embed_ids(&self, g: &mut Graph, ids: &[Vec<usize>], dropout: f64) -> Var {
        let lengths: Vec<usize> = ids.iter().map(Vec::len).collect();
        let max_len = lengths.iter().copied().max().unwrap_or(0);
        let mut steps = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let col: Vec<usize> = ids.iter().map(|w| w.get(t).copied().unwrap_or(0)).collect();
            let x = self.chars.lookup(g, &col);
            steps.push(g.dropout(x, dropout));
        }
        self.lstm.run_masked(g, &steps, &lengths)
    }
}

/// Bilinear-plus-bias scorer `[r, 1]ᵀ U_k [l, 1]` for `k` in `0..out`.
///
/// `U_k` has one row per right-hand dimension (plus bias) and one column
/// per left-hand dimension (plus bias).
#[derive(Clone, Debug)]
pub struct Biaffine {
    pub w: ParamId,
    pub left: usize,
    pub right: usize,
    pub out: usize,
}

impl Biaffine {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, left: usize, right: usize, out: usize) -> Self {
        assert!(out >= 1, "biaffine output arity must be at least 1");
        Biaffine {
            w: store.get_or_init(name, (left + 1, out * (right + 1)), Init::Zeros, rng),
            left,
            right,
            out,
        }
    }

    /// Entry `U_k[a][b]`: `a` indexes the right input (`a == right` is its
    /// bias), `b` the left input.
    pub fn u(&self, store: &ParamStore, k: usize, a: usize, b: usize) -> f64 {
        store.value(self.w)[[b, k * (self.right + 1) + a]]
    }

    pub fn set_u(&self, store: &mut ParamStore, k: usize, a: usize, b: usize, value: f64) {
        store.value_mut(self.w)[[b, k * (self.right + 1) + a]] = value;
    }

    fn with_bias(g: &mut Graph, x: Var) -> Var {
        let n = g.shape(x).0;
        let ones = g.input(Tensor::ones((n, 1)));
        g.concat_cols(&[x, ones])
    }

    fn left_product(&self, g: &mut Graph, left: Var) -> Var {
        assert_eq!(g.shape(left).1, self.left, "biaffine left dimension mismatch");
        let l1 = Self::with_bias(g, left);
        let w = g.param(self.w);
        g.matmul(l1, w)
    }

    /// All pairs: element `k` of the result is the `n_left × n_right` matrix
    /// of scores for output `k`.
    pub fn pairwise(&self, g: &mut Graph, left: Var, right: Var) -> Vec<Var> {
        assert_eq!(g.shape(right).1, self.right, "biaffine right dimension mismatch");
        let lu = self.left_product(g, left);
        let r1 = Self::with_bias(g, right);
        let r1t = g.transpose(r1);
        (0..self.out)
            .map(|k| {
                let block = g.slice_cols(lu, k * (self.right + 1), self.right + 1);
                g.matmul(block, r1t)
            })
            .collect()
    }

    /// Row-aligned pairs (left row `i` with right row `i`), `n × out`.
    pub fn aligned(&self, g: &mut Graph, left: Var, right: Var) -> Var {
        assert_eq!(g.shape(right).1, self.right, "biaffine right dimension mismatch");
        assert_eq!(g.shape(left).0, g.shape(right).0, "aligned biaffine needs equal row counts");
        let lu = self.left_product(g, left);
        let r1 = Self::with_bias(g, right);
        let tiled: Vec<Var> = (0..self.out).map(|_| r1).collect();
        let tiled = g.concat_cols(&tiled);
        let prod = g.mul(lu, tiled);
        let width = self.right + 1;
        let blocks = g.input(Tensor::from_shape_fn((self.out * width, self.out), |(r, k)| {
            if r / width == k {
                1.0
            } else {
                0.0
            }
        }));
        g.matmul(prod, blocks)
    }
}

/// Two ReLU feed-forward maps followed by a [`Biaffine`] scorer.
#[derive(Clone, Debug)]
pub struct DeepBiaffine {
    pub fc_left: Linear,
    pub fc_right: Linear,
    pub biaffine: Biaffine,
}

impl DeepBiaffine {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize, out: usize) -> Self {
        DeepBiaffine {
            fc_left: Linear::new(store, rng, &format!("{}.left", name), input, hidden),
            fc_right: Linear::new(store, rng, &format!("{}.right", name), input, hidden),
            biaffine: Biaffine::new(store, rng, &format!("{}.u", name), hidden, hidden, out),
        }
    }

    fn transform(&self, g: &mut Graph, left: Var, right: Var, dropout: f64) -> (Var, Var) {
        let l = self.fc_left.forward(g, left);
        let l = g.relu(l);
        let l = g.dropout(l, dropout);
        let r = self.fc_right.forward(g, right);
        let r = g.relu(r);
        let r = g.dropout(r, dropout);
        (l, r)
    }

    pub fn pairwise(&self, g: &mut Graph, left: Var, right: Var, dropout: f64) -> Vec<Var> {
        let (l, r) = self.transform(g, left, right, dropout);
        self.biaffine.pairwise(g, l, r)
    }

    pub fn aligned(&self, g: &mut Graph, left: Var, right: Var, dropout: f64) -> Var {
        let (l, r) = self.transform(g, left, right, dropout);
        self.biaffine.aligned(g, l, r)
    }
}

/// Dense `n_left × n_right × out` scores from a deep biaffine scorer.
pub fn deep_biaffine(store: &ParamStore, params: &DeepBiaffine, left: &Tensor, right: &Tensor) -> Array3<f64> {
    let mut g = Graph::new(store);
    let l = g.input(left.clone());
    let r = g.input(right.clone());
    let scores = params.pairwise(&mut g, l, r, 0.0);
    let mut out = Array3::zeros((left.nrows(), right.nrows(), params.biaffine.out));
    for (k, s) in scores.iter().enumerate() {
        let v = g.value(*s);
        for i in 0..left.nrows() {
            for j in 0..right.nrows() {
                out[[i, j, k]] = v[[i, j]];
            }
        }
    }
    out
}
