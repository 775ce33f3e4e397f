//! LSTM encoder-decoder with optional bidirectional encoder and three
//! attention modes.
//!
//! Parameters live in a [`Seq2Seq`] as named dense arrays. A forward pass
//! copies them onto a [`Tape`] through [`Seq2Seq::bind`], which returns a
//! [`Bound`] view whose methods build the encoder, attention and decoder
//! step on that tape.
//!
//! One decoder step, given the fed input embedding `x` and previous state
//! `(h, c)`:
//!
//! ```text
//! ctx        = attend(h, encoder states)          (empty when mode = none)
//! (h', c')   = lstm([x ⊕ ctx], h, c)
//! scores     = W_out [h' ⊕ ctx] + b_out
//! ```
//!
//! The decoder starts from the final forward-direction encoder state.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

use rand::Rng;
use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result, Shape};
use crate::scalar::{lit, Scalar};

/// Start-of-sequence token id.
pub const SOS: usize = 0;
/// End-of-sequence token id.
pub const EOS: usize = 1;
/// Unknown-token id.
pub const UNK: usize = 2;

/// Half-width of the uniform initializer.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionMode {
    /// `softmax(vᵀ tanh(W_q h + W_k enc_j))`-weighted average of encoder states.
    LearnedAdditive,
    /// Step `i` reads encoder state `i` verbatim.
    FixedPositional,
    None,
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionMode::LearnedAdditive => "learned",
            AttentionMode::FixedPositional => "fixed",
            AttentionMode::None => "none",
        })
    }
}

impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" | "learned-additive" | "additive" => Ok(AttentionMode::LearnedAdditive),
            "fixed" | "fixed-positional" | "positional" => Ok(AttentionMode::FixedPositional),
            "none" => Ok(AttentionMode::None),
            other => Err(Error::invalid(format!("unknown attention mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub attention: AttentionMode,
    pub bidirectional: bool,
}

impl ModelConfig {
    /// Desk-scale defaults: 16-dim embeddings, 32 hidden units.
    pub fn new(src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelConfig {
            src_vocab,
            tgt_vocab,
            embed: 16,
            hidden: 32,
            attention: AttentionMode::LearnedAdditive,
            bidirectional: true,
        }
    }

    pub fn encoder_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    pub fn context_dim(&self) -> usize {
        match self.attention {
            AttentionMode::None => 0,
            _ => self.encoder_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.src_vocab <= UNK || self.tgt_vocab <= UNK {
            return Err(Error::invalid("vocabularies must extend past the reserved ids 0..=2"));
        }
        if self.embed == 0 || self.hidden == 0 {
            return Err(Error::invalid("embedding and hidden sizes must be positive"));
        }
        Ok(())
    }
}

/// A named dense parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Shape,
    pub data: Vec<T>,
}

/// Token-id to vector map; row `y` is the embedding of token `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(rows: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::ShapeMismatch {
                op: "embedding_table",
                left: Shape::matrix(rows, dim),
                right: Shape::vector(data.len()),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: "embedding_table" });
        }
        Ok(EmbeddingTable { dim, data })
    }

    pub fn vocab_size(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.dim..(y + 1) * self.dim]
    }

    pub fn shape(&self) -> Shape {
        Shape::matrix(self.vocab_size(), self.dim)
    }

    /// Places the table on a tape as a trainable matrix.
    pub fn bind(&self, tape: &mut Tape<T>) -> Result<Var> {
        tape.param(self.shape(), self.data.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LstmIds {
    weights: usize,
    bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct AttentionIds {
    query: usize,
    key: usize,
    score: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layout {
    src_embed: usize,
    tgt_embed: usize,
    enc_fwd: LstmIds,
    enc_bwd: Option<LstmIds>,
    dec: LstmIds,
    attention: Option<AttentionIds>,
    out_w: usize,
    out_b: usize,
}

/// Parameter names and shapes for a configuration, in storage order.
fn param_specs(config: &ModelConfig) -> Vec<(String, Shape)> {
    let h = config.hidden;
    let e = config.embed;
    let ctx = config.context_dim();
    let enc = config.encoder_dim();
    let mut specs = vec![
        ("src_embed".to_string(), Shape::matrix(config.src_vocab, e)),
        ("tgt_embed".to_string(), Shape::matrix(config.tgt_vocab, e)),
        ("enc_fwd.w".to_string(), Shape::matrix(4 * h, e + h)),
        ("enc_fwd.b".to_string(), Shape::vector(4 * h)),
    ];
    if config.bidirectional {
        specs.push(("enc_bwd.w".to_string(), Shape::matrix(4 * h, e + h)));
        specs.push(("enc_bwd.b".to_string(), Shape::vector(4 * h)));
    }
    specs.push(("dec.w".to_string(), Shape::matrix(4 * h, e + ctx + h)));
    specs.push(("dec.b".to_string(), Shape::vector(4 * h)));
    if config.attention == AttentionMode::LearnedAdditive {
        specs.push(("att.w_query".to_string(), Shape::matrix(h, h)));
        specs.push(("att.w_key".to_string(), Shape::matrix(h, enc)));
        specs.push(("att.v".to_string(), Shape::vector(h)));
    }
    specs.push(("out.w".to_string(), Shape::matrix(config.tgt_vocab, h + ctx)));
    specs.push(("out.b".to_string(), Shape::vector(config.tgt_vocab)));
    specs
}

fn layout(config: &ModelConfig) -> Layout {
    let names: Vec<String> = param_specs(config).into_iter().map(|(n, _)| n).collect();
    let id = |name: &str| names.iter().position(|n| n == name);
    let lstm = |prefix: &str| {
        Some(LstmIds {
            weights: id(&format!("{prefix}.w"))?,
            bias: id(&format!("{prefix}.b"))?,
        })
    };
    Layout {
        src_embed: id("src_embed").unwrap(),
        tgt_embed: id("tgt_embed").unwrap(),
        enc_fwd: lstm("enc_fwd").unwrap(),
        enc_bwd: lstm("enc_bwd"),
        dec: lstm("dec").unwrap(),
        attention: id("att.w_query").map(|query| AttentionIds {
            query,
            key: id("att.w_key").unwrap(),
            score: id("att.v").unwrap(),
        }),
        out_w: id("out.w").unwrap(),
        out_b: id("out.b").unwrap(),
    }
}

/// Encoder-decoder parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2Seq<T> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    layout: Layout,
}

impl<T: Scalar> Seq2Seq<T> {
    /// Uniform(−0.08, 0.08) initialization.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        Self::with_init(config, |_| lit(rng.gen_range(-INIT_RANGE..INIT_RANGE)))
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        Self::with_init(config, |_| T::zero())
    }

    fn with_init(config: ModelConfig, mut init: impl FnMut(&str) -> T) -> Result<Self> {
        config.validate()?;
        let params = param_specs(&config)
            .into_iter()
            .map(|(name, shape)| {
                let data = (0..shape.len()).map(|_| init(&name)).collect();
                Param { name, shape, data }
            })
            .collect();
        Ok(Seq2Seq {
            layout: layout(&config),
            config,
            params,
        })
    }

    /// Rebuilds a model from named arrays, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: Vec<Param<T>>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter arrays, got {}",
                specs.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in specs.iter().zip(&params) {
            if *name != p.name || *shape != p.shape || p.data.len() != shape.len() {
                return Err(Error::invalid(format!(
                    "parameter `{}` {} does not match expected `{name}` {shape}",
                    p.name, p.shape
                )));
            }
        }
        Ok(Seq2Seq {
            layout: layout(&config),
            config,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// All parameters concatenated in storage order.
    pub fn flat(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_scalars() {
            return Err(Error::ShapeMismatch {
                op: "set_flat",
                left: Shape::vector(self.num_scalars()),
                right: Shape::vector(values.len()),
            });
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.data.len();
            p.data.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Flat offset of `name[index]`.
    pub fn flat_index(&self, name: &str, index: usize) -> Result<usize> {
        let mut offset = 0;
        for p in &self.params {
            if p.name == name {
                if index >= p.data.len() {
                    return Err(Error::IndexOutOfRange {
                        op: "flat_index",
                        index,
                        len: p.data.len(),
                    });
                }
                return Ok(offset + index);
            }
            offset += p.data.len();
        }
        Err(Error::invalid(format!("unknown parameter `{name}`")))
    }

    pub fn target_embeddings(&self) -> EmbeddingTable<T> {
        let p = &self.params[self.layout.tgt_embed];
        EmbeddingTable {
            dim: p.shape.cols,
            data: p.data.clone(),
        }
    }

    /// Copies every parameter onto `tape`; `trainable = false` binds them as
    /// constants for forward-only evaluation.
    pub fn bind<'m>(&'m self, tape: &mut Tape<T>, trainable: bool) -> Result<Bound<'m, T>> {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.shape, p.data.clone())
                } else {
                    tape.constant(p.shape, p.data.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Bound { model: self, vars })
    }
}

/// Encoder output for one source sequence.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// One state per source position; forward ⊕ backward when bidirectional.
    pub states: Vec<Var>,
    /// Final forward-direction `(h, c)`, the decoder's initial state.
    pub final_state: (Var, Var),
    memory: Option<Var>,
    keys: Vec<Var>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Per-step decoder output.
#[derive(Clone, Copy, Debug)]
pub struct DecoderStepOutput {
    pub h: Var,
    pub c: Var,
    pub scores: Var,
    /// `None` when attention is disabled.
    pub context: Option<Var>,
}

/// Parameters of one LSTM cell as tape nodes. Rows of `weights` and `bias`
/// are stacked in gate order input, forget, candidate, output; columns of
/// `weights` are `[x ⊕ h_prev]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmCellParams {
    pub weights: Var,
    pub bias: Var,
}

/// One LSTM step:
///
/// ```text
/// [i f g o] = W [x ⊕ h_prev] + b
/// c = σ(f) ⊙ c_prev + σ(i) ⊙ tanh(g)
/// h = σ(o) ⊙ tanh(c)
/// ```
pub fn lstm_cell<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    params: LstmCellParams,
) -> Result<(Var, Var)> {
    let hidden = tape.shape(h_prev).rows;
    let ws = tape.shape(params.weights);
    if ws.rows != 4 * hidden || tape.shape(c_prev) != Shape::vector(hidden) {
        return Err(Error::ShapeMismatch {
            op: "lstm_cell",
            left: ws,
            right: Shape::vector(hidden),
        });
    }
    let xh = tape.concat(&[x, h_prev])?;
    let wx = tape.matvec(params.weights, xh)?;
    let pre = tape.add(wx, params.bias)?;
    let gate = |tape: &mut Tape<T>, k: usize| tape.slice(pre, k * hidden, hidden);
    let (i, f, g, o) = (gate(tape, 0)?, gate(tape, 1)?, gate(tape, 2)?, gate(tape, 3)?);
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}

/// Learned-attention parameters as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub query: Var,
    pub key: Var,
    pub score: Var,
}

/// Model parameters placed on a tape.
pub struct Bound<'m, T> {
    model: &'m Seq2Seq<T>,
    vars: Vec<Var>,
}

impl<'m, T: Scalar> Bound<'m, T> {
    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    /// Tape nodes of every parameter, in storage order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        let i = self.model.params.iter().position(|p| p.name == name)?;
        Some(self.vars[i])
    }

    pub fn target_table(&self) -> Var {
        self.vars[self.model.layout.tgt_embed]
    }

    fn lstm(&self, ids: LstmIds) -> LstmCellParams {
        LstmCellParams {
            weights: self.vars[ids.weights],
            bias: self.vars[ids.bias],
        }
    }

    pub fn attention_params(&self) -> Option<AttentionParams> {
        self.model.layout.attention.map(|a| AttentionParams {
            query: self.vars[a.query],
            key: self.vars[a.key],
            score: self.vars[a.score],
        })
    }

    /// Embedding of target token `id`.
    pub fn target_embedding(&self, tape: &mut Tape<T>, id: usize) -> Result<Var> {
        tape.row(self.target_table(), id)
            .map_err(|_| unknown_token(id, self.model.config.tgt_vocab))
    }

    fn zero_state(&self, tape: &mut Tape<T>) -> Result<(Var, Var)> {
        let h = self.model.config.hidden;
        Ok((
            tape.constant_vector(vec![T::zero(); h])?,
            tape.constant_vector(vec![T::zero(); h])?,
        ))
    }

    fn run_direction(
        &self,
        tape: &mut Tape<T>,
        inputs: &[Var],
        cell: LstmCellParams,
    ) -> Result<(Vec<Var>, (Var, Var))> {
        let mut state = self.zero_state(tape)?;
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            state = lstm_cell(tape, x, state.0, state.1, cell)?;
            out.push(state.0);
        }
        Ok((out, state))
    }

    /// Encodes exactly the given ids.
    pub fn encode(&self, tape: &mut Tape<T>, source: &[usize]) -> Result<Encoded> {
        if source.is_empty() {
            return Err(Error::Empty("encode"));
        }
        let cfg = &self.model.config;
        let table = self.vars[self.model.layout.src_embed];
        let inputs = source
            .iter()
            .map(|&id| tape.row(table, id).map_err(|_| unknown_token(id, cfg.src_vocab)))
            .collect::<Result<Vec<_>>>()?;
        let (forward, final_state) = self.run_direction(tape, &inputs, self.lstm(self.model.layout.enc_fwd))?;
        let states = match self.model.layout.enc_bwd {
            Some(ids) => {
                let reversed: Vec<Var> = inputs.iter().rev().copied().collect();
                let (mut backward, _) = self.run_direction(tape, &reversed, self.lstm(ids))?;
                backward.reverse();
                forward
                    .iter()
                    .zip(&backward)
                    .map(|(&f, &b)| tape.concat(&[f, b]))
                    .collect::<Result<Vec<_>>>()?
            }
            None => forward,
        };
        let (memory, keys) = match self.attention_params() {
            Some(att) if cfg.attention == AttentionMode::LearnedAdditive => {
                let memory = tape.stack(&states)?;
                let keys = states
                    .iter()
                    .map(|&s| tape.matvec(att.key, s))
                    .collect::<Result<Vec<_>>>()?;
                (Some(memory), keys)
            }
            _ => (None, Vec::new()),
        };
        Ok(Encoded {
            states,
            final_state,
            memory,
            keys,
        })
    }

    /// Context vector for decoder step `step` given the previous decoder
    /// hidden state.
    pub fn attend(&self, tape: &mut Tape<T>, h: Var, encoded: &Encoded, step: usize) -> Result<Option<Var>> {
        match self.model.config.attention {
            AttentionMode::None => Ok(None),
            AttentionMode::FixedPositional => {
                let state = encoded.states.get(step).ok_or(Error::IndexOutOfRange {
                    op: "attend",
                    index: step,
                    len: encoded.states.len(),
                })?;
                Ok(Some(*state))
            }
            AttentionMode::LearnedAdditive => {
                let att = self.attention_params().expect("learned attention has parameters");
                let weights = attention_weights(tape, h, &encoded.keys, att)?;
                let memory = encoded.memory.ok_or(Error::Empty("attend"))?;
                Ok(Some(tape.mat_t_vec(memory, weights)?))
            }
        }
    }

    /// Attention, one LSTM step on `[input ⊕ context]`, projection of
    /// `[h ⊕ context]` to vocabulary scores.
    pub fn decode_step(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        h_prev: Var,
        c_prev: Var,
        encoded: &Encoded,
        step: usize,
    ) -> Result<DecoderStepOutput> {
        let context = self.attend(tape, h_prev, encoded, step)?;
        let x = match context {
            Some(ctx) => tape.concat(&[input, ctx])?,
            None => input,
        };
        let (h, c) = lstm_cell(tape, x, h_prev, c_prev, self.lstm(self.model.layout.dec))?;
        let features = match context {
            Some(ctx) => tape.concat(&[h, ctx])?,
            None => h,
        };
        let projected = tape.matvec(self.vars[self.model.layout.out_w], features)?;
        let scores = tape.add(projected, self.vars[self.model.layout.out_b])?;
        Ok(DecoderStepOutput { h, c, scores, context })
    }
}

/// `softmax_j(vᵀ tanh(W_q h + key_j))`.
pub fn attention_weights<T: Scalar>(tape: &mut Tape<T>, h: Var, keys: &[Var], att: AttentionParams) -> Result<Var> {
    if keys.is_empty() {
        return Err(Error::Empty("attend"));
    }
    let query = tape.matvec(att.query, h)?;
    let energies = keys
        .iter()
        .map(|&k| {
            let pre = tape.add(query, k)?;
            let act = tape.tanh(pre)?;
            tape.dot(act, att.score)
        })
        .collect::<Result<Vec<_>>>()?;
    let energies = tape.concat(&energies)?;
    tape.softmax(energies)
}

fn unknown_token(id: usize, vocab: usize) -> Error {
    Error::invalid(format!("unknown token id {id} (vocabulary size {vocab})"))
}
