//! Positional encoding, multi-head attention, character gating, windowed
//! convolution, layer normalization and the feed-forward sublayer.

use ndarray::Array2;

use crate::params::{Init, Mat, ParamId, ParamStore};
use crate::tape::{Tape, Var};

pub const LN_EPS: f64 = 1e-6;

/// Sinusoidal encoding of position `i` in block `b`: entry `2j` is
/// `sin((i + b) / 10000^(2j/d))` and entry `2j + 1` the matching cosine.
pub fn positional_encoding(b: usize, i: usize, d: usize) -> Vec<f64> {
    let pos = (i + b) as f64;
    (0..d)
        .map(|e| {
            let j = e / 2;
            let angle = pos / 10000f64.powf(2.0 * j as f64 / d as f64);
            if e % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Rows `0..len` of the block-`b` encoding.
pub fn positional_matrix(b: usize, len: usize, d: usize) -> Mat {
    let mut m = Mat::zeros((len, d));
    for i in 0..len {
        for (e, v) in positional_encoding(b, i, d).into_iter().enumerate() {
            m[[i, e]] = v;
        }
    }
    m
}

/// `allowed[i][j]` is true iff `j <= i`.
pub fn causal_mask(len: usize) -> Array2<bool> {
    Array2::from_shape_fn((len, len), |(i, j)| j <= i)
}

/// Queries may only see keys that are valid.
pub fn key_mask(queries: usize, valid: &[bool]) -> Array2<bool> {
    Array2::from_shape_fn((queries, valid.len()), |(_, j)| valid[j])
}

fn pname(prefix: &str, name: &str) -> String {
    format!("{prefix}.{name}")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, prefix: &str, inp: usize, out: usize, bias: bool, seed: u64) -> Self {
        let w = store.add(&pname(prefix, "w"), inp, out, Init::Uniform, seed);
        let b = bias.then(|| store.add(&pname(prefix, "b"), 1, out, Init::Zeros, seed));
        Linear { w, b }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.w);
        let y = t.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = t.param(b);
                t.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, seed: u64) -> Self {
        let gain = store.add(&pname(prefix, "gain"), 1, d, Init::Ones, seed);
        let bias = store.add(&pname(prefix, "bias"), 1, d, Init::Zeros, seed);
        LayerNorm { gain, bias }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let n = t.layer_norm(x, LN_EPS);
        let g = t.param(self.gain);
        let b = t.param(self.bias);
        let y = t.mul_row(n, g);
        t.add_row(y, b)
    }
}

/// `x + dropout(f(norm(x)))`
pub fn residual(t: &mut Tape, x: Var, norm: &LayerNorm, f: impl FnOnce(&mut Tape, Var) -> Var) -> Var {
    let n = norm.forward(t, x);
    let y = f(t, n);
    let y = t.dropout(y);
    t.add(x, y)
}

/// Result of an attention layer; `weights` holds one `Lq × Lk` matrix per
/// head.
pub struct Attended {
    pub out: Var,
    pub weights: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct Attention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wh: ParamId,
    pub heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, heads: usize, seed: u64) -> Self {
        Attention {
            wq: store.add(&pname(prefix, "wq"), d, d, Init::Uniform, seed),
            wk: store.add(&pname(prefix, "wk"), d, d, Init::Uniform, seed),
            wv: store.add(&pname(prefix, "wv"), d, d, Init::Uniform, seed),
            wh: store.add(&pname(prefix, "wh"), d, d, Init::Uniform, seed),
            heads,
        }
    }

    /// Each head computes `softmax(Q Kᵀ / sqrt(d_k)) V` over its slice of the
    /// projections; heads are concatenated and projected by `W_h`.
    /// `allowed` masks query/key pairs.
    pub fn forward(&self, t: &mut Tape, q_in: Var, kv_in: Var, allowed: Option<&Array2<bool>>) -> Attended {
        let d = t.shape(q_in).1;
        let dk = d / self.heads;
        let (wq, wk, wv, wh) = (t.param(self.wq), t.param(self.wk), t.param(self.wv), t.param(self.wh));
        let q = t.matmul(q_in, wq);
        let k = t.matmul(kv_in, wk);
        let v = t.matmul(kv_in, wv);
        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * dk, (h + 1) * dk);
            let qh = t.cols(q, a, b);
            let kh = t.cols(k, a, b);
            let vh = t.cols(v, a, b);
            let scores = t.matmul_t(qh, kh);
            let scores = t.scale(scores, 1.0 / (dk as f64).sqrt());
            let w = t.softmax(scores, allowed);
            heads.push(t.matmul(w, vh));
            weights.push(w);
        }
        let cat = if heads.len() == 1 { heads[0] } else { t.concat_cols(&heads) };
        Attended { out: t.matmul(cat, wh), weights }
    }
}

/// Output of the gating layer. `alpha_y` is `L × H` and holds the weight of
/// the word feature per token and head; the character weight is `1 - alpha_y`.
pub struct Gated {
    pub out: Var,
    pub alpha_y: Var,
    pub alpha_c: Var,
}

#[derive(Debug, Clone)]
pub struct Gating {
    /// Character block projection `W^(c)`.
    pub wc: ParamId,
    pub w: [ParamId; 5],
    pub wh: ParamId,
    pub heads: usize,
}

impl Gating {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, char_width: usize, heads: usize, seed: u64) -> Self {
        let w = [1, 2, 3, 4, 5].map(|i| store.add(&pname(prefix, &format!("w{i}")), d, d, Init::Uniform, seed));
        Gating {
            wc: store.add(&pname(prefix, "wc"), char_width, d, Init::Uniform, seed),
            w,
            wh: store.add(&pname(prefix, "wh"), d, d, Init::Uniform, seed),
            heads,
        }
    }

    /// `y` is `L × d`; `chars` is `L × (S_max · char_dim)`, the concatenated
    /// character embeddings of each token.
    pub fn forward(&self, t: &mut Tape, y: Var, chars: Var) -> Gated {
        let d = t.shape(y).1;
        let dk = d / self.heads;
        let wc = t.param(self.wc);
        let n = t.matmul(chars, wc);
        let [w1, w2, w3, w4, w5] = self.w.map(|p| t.param(p));
        let q = t.matmul(y, w1);
        let ky = t.matmul(y, w2);
        let kc = t.matmul(n, w3);
        let vy = t.matmul(y, w4);
        let vc = t.matmul(n, w5);
        // Column c of `per_head` sums the dimensions of head c.
        let per_head = t.constant(Mat::from_shape_fn((d, self.heads), |(i, h)| if i / dk == h { 1.0 } else { 0.0 }));
        let spread = t.constant(Mat::from_shape_fn((self.heads, d), |(h, i)| if i / dk == h { 1.0 } else { 0.0 }));
        let qy = t.mul(q, ky);
        let sy = t.matmul(qy, per_head);
        let qc = t.mul(q, kc);
        let sc = t.matmul(qc, per_head);
        // Two-way softmax: alpha_y = e^sy / (e^sy + e^sc).
        let diff = t.sub(sy, sc);
        let alpha_y = t.sigmoid(diff);
        let alpha_c = t.affine(alpha_y, -1.0, 1.0);
        let ay = t.matmul(alpha_y, spread);
        let ac = t.matmul(alpha_c, spread);
        let hy = t.mul(ay, vy);
        let hc = t.mul(ac, vc);
        let h = t.add(hy, hc);
        let wh = t.param(self.wh);
        Gated { out: t.matmul(h, wh), alpha_y, alpha_c }
    }
}

/// `y_i = W [y_{i-w}; ...; y_{i+w}]` with zero rows outside the sequence.
/// A causal layer reads `y_{i-k+1} .. y_i` instead.
#[derive(Debug, Clone)]
pub struct Conv {
    pub w: ParamId,
    pub k: usize,
    pub causal: bool,
}

impl Conv {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, k: usize, causal: bool, seed: u64) -> Self {
        Conv { w: store.add(&pname(prefix, "w"), k * d, d, Init::Uniform, seed), k, causal }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let offset = if self.causal { -(self.k as isize - 1) } else { -((self.k as isize - 1) / 2) };
        let win = t.window(x, offset, self.k);
        let w = t.param(self.w);
        t.matmul(win, w)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub first: Linear,
    pub second: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, hidden: usize, seed: u64) -> Self {
        FeedForward {
            first: Linear::new(store, &pname(prefix, "ff1"), d, hidden, true, seed),
            second: Linear::new(store, &pname(prefix, "ff2"), hidden, d, true, seed),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let h = self.first.forward(t, x);
        let h = t.relu(h);
        let h = t.dropout(h);
        self.second.forward(t, h)
    }
}
