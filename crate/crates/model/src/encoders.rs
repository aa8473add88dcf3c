//! NL Reader, AST Reader, Test-Info Encoder and Code Encoder.

use ndarray::Array2;

use crate::config::ModelConfig;
use crate::layers::{key_mask, positional_matrix, residual, Attention, Conv, Gating, LayerNorm};
use crate::params::{Init, Mat, ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// An `L × d` encoding and the validity of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSequence {
    pub values: Mat,
    pub valid: Vec<bool>,
}

impl HiddenSequence {
    pub fn empty(d: usize) -> Self {
        HiddenSequence { values: Mat::zeros((0, d)), valid: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }
}

/// Token ids, per-token character ids and validity for one text input.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextInput {
    pub ids: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    pub valid: Vec<bool>,
}

impl TextInput {
    pub fn new(ids: Vec<usize>, chars: Vec<Vec<usize>>) -> Self {
        let valid = vec![true; ids.len()];
        TextInput { ids, chars, valid }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn truncated(mut self, l_max: usize) -> Self {
        self.ids.truncate(l_max);
        self.chars.truncate(l_max);
        self.valid.truncate(l_max);
        self
    }
}

/// Embedding tables shared by the encoders and the decoder.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub words: ParamId,
    pub chars: ParamId,
    /// Grammar rules followed by terminal tokens.
    pub actions: ParamId,
}

impl Embeddings {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, n_words: usize, n_chars: usize, n_actions: usize, seed: u64) -> Self {
        Embeddings {
            words: store.add("emb.words", n_words, cfg.d, Init::Uniform, seed),
            chars: store.add("emb.chars", n_chars, cfg.char_dim, Init::Uniform, seed),
            actions: store.add("emb.actions", n_actions, cfg.d, Init::Uniform, seed),
        }
    }

    pub fn words(&self, t: &mut Tape, ids: &[usize]) -> Var {
        let table = t.param(self.words);
        t.gather(table, ids)
    }

    pub fn actions(&self, t: &mut Tape, ids: &[usize]) -> Var {
        let table = t.param(self.actions);
        t.gather(table, ids)
    }

    /// `L × (s_max · char_dim)`: each token's character embeddings
    /// concatenated, zero beyond the token's last character.
    pub fn chars(&self, t: &mut Tape, chars: &[Vec<usize>], s_max: usize) -> Var {
        let cd = t.store().value(self.chars).ncols();
        let l = chars.len();
        let mut flat = Vec::with_capacity(l * s_max);
        let mut present = Mat::zeros((l * s_max, 1));
        for (i, cs) in chars.iter().enumerate() {
            for s in 0..s_max {
                match cs.get(s) {
                    Some(&c) => {
                        flat.push(c);
                        present[[i * s_max + s, 0]] = 1.0;
                    }
                    None => flat.push(0),
                }
            }
        }
        let table = t.param(self.chars);
        let rows = t.gather(table, &flat);
        let keep = t.constant(present);
        let rows = t.mul_col(rows, keep);
        t.reshape(rows, l, s_max * cd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Nl,
    Ast,
    TestInfo,
    Code,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Nl => "nl",
            EncoderKind::Ast => "ast",
            EncoderKind::TestInfo => "test_info",
            EncoderKind::Code => "code",
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    attn_norm: LayerNorm,
    attn: Attention,
    gate: Option<(LayerNorm, Gating)>,
    cross: Option<(LayerNorm, Attention)>,
    convs: Vec<(LayerNorm, Conv)>,
}

/// A stack of blocks: self-attention, then character gating (text encoders)
/// or attention over the test-information encoding (code encoder), then
/// convolution; each sublayer is a pre-norm residual.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub kind: EncoderKind,
    blocks: Vec<Block>,
    final_norm: LayerNorm,
    heads: usize,
    s_max: usize,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, kind: EncoderKind, seed: u64) -> Self {
        let n = match kind {
            EncoderKind::Nl => cfg.blocks.nl,
            EncoderKind::Ast => cfg.blocks.ast,
            EncoderKind::TestInfo => cfg.blocks.test_info,
            EncoderKind::Code => cfg.blocks.code,
        };
        let d = cfg.d;
        let causal = kind == EncoderKind::Ast;
        let blocks = (0..n)
            .map(|b| {
                let p = format!("{}.{b}", kind.name());
                let gate = matches!(kind, EncoderKind::Nl | EncoderKind::TestInfo).then(|| {
                    (
                        LayerNorm::new(store, &format!("{p}.gate.norm"), d, seed),
                        Gating::new(store, &format!("{p}.gate"), d, cfg.s_max * cfg.char_dim, cfg.heads, seed),
                    )
                });
                let cross = (kind == EncoderKind::Code).then(|| {
                    (
                        LayerNorm::new(store, &format!("{p}.test_attn.norm"), d, seed),
                        Attention::new(store, &format!("{p}.test_attn"), d, cfg.heads, seed),
                    )
                });
                let convs = (0..cfg.conv_layers)
                    .map(|l| {
                        (
                            LayerNorm::new(store, &format!("{p}.conv{l}.norm"), d, seed),
                            Conv::new(store, &format!("{p}.conv{l}"), d, cfg.k_window, causal, seed),
                        )
                    })
                    .collect();
                Block {
                    attn_norm: LayerNorm::new(store, &format!("{p}.self_attn.norm"), d, seed),
                    attn: Attention::new(store, &format!("{p}.self_attn"), d, cfg.heads, seed),
                    gate,
                    cross,
                    convs,
                }
            })
            .collect();
        Encoder {
            kind,
            blocks,
            final_norm: LayerNorm::new(store, &format!("{}.final_norm", kind.name()), d, seed),
            heads: cfg.heads,
            s_max: cfg.s_max,
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Encodes embedded inputs `x` (`L × d`, `L ≥ 1`). `chars` is required by
    /// the text encoders; `memory` is the test-information encoding read by
    /// the code encoder, skipped when absent.
    pub fn forward(&self, t: &mut Tape, x: Var, chars: Option<Var>, memory: Option<(Var, &[bool])>, valid: &[bool]) -> Var {
        let (l, d) = t.shape(x);
        debug_assert_eq!(l, valid.len());
        let mut allowed = key_mask(l, valid);
        if self.kind == EncoderKind::Ast {
            allowed.zip_mut_with(&crate::layers::causal_mask(l), |a, &c| *a = *a && c);
        }
        let row_keep = t.constant(Mat::from_shape_fn((l, 1), |(i, _)| if valid[i] { 1.0 } else { 0.0 }));
        let cross_mask = memory.map(|(m, mv)| (m, key_mask(l, mv)));
        let mut x = x;
        for (b, block) in self.blocks.iter().enumerate() {
            let pe = t.constant(positional_matrix(b, l, d));
            x = t.add(x, pe);
            x = residual(t, x, &block.attn_norm, |t, n| block.attn.forward(t, n, n, Some(&allowed)).out);
            if let Some((norm, gate)) = &block.gate {
                let c = chars.expect("text encoders need character inputs");
                x = residual(t, x, norm, |t, n| gate.forward(t, n, c).out);
            }
            if let (Some((norm, att)), Some((m, mask))) = (&block.cross, &cross_mask) {
                x = residual(t, x, norm, |t, n| att.forward(t, n, *m, Some(mask)).out);
            }
            for (norm, conv) in &block.convs {
                x = residual(t, x, norm, |t, n| {
                    let n = t.mul_col(n, row_keep);
                    conv.forward(t, n)
                });
            }
        }
        self.final_norm.forward(t, x)
    }

    /// Encodes a text input; zero-length input gives a zero-length output.
    pub fn encode_text(&self, t: &mut Tape, emb: &Embeddings, input: &TextInput) -> Option<Var> {
        if input.is_empty() {
            return None;
        }
        let x = emb.words(t, &input.ids);
        let c = emb.chars(t, &input.chars, self.s_max);
        Some(self.forward(t, x, Some(c), None, &input.valid))
    }

    /// Encodes an action-id sequence, optionally attending to a memory.
    pub fn encode_actions(&self, t: &mut Tape, emb: &Embeddings, ids: &[usize], memory: Option<(Var, &[bool])>) -> Option<Var> {
        if ids.is_empty() {
            return None;
        }
        let x = emb.actions(t, ids);
        let valid = vec![true; ids.len()];
        Some(self.forward(t, x, None, memory, &valid))
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Attention over the memory in block `b`; code encoder only.
    pub fn cross_attention(&self, b: usize) -> Option<&Attention> {
        self.blocks.get(b)?.cross.as_ref().map(|(_, a)| a)
    }
}

/// Validity mask for `queries × keys` where query `t` may read keys `< t`.
pub fn strictly_causal(queries: usize, keys: usize) -> Array2<bool> {
    Array2::from_shape_fn((queries, keys), |(q, k)| k < q)
}
