//! Pointer-network model: parameters, forward graphs, training, decoding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tape::{NodeId, ShapeMismatch, Tape};
use crate::align::{EmbeddingStore, SupervisionExample};
use crate::decomp::{DecompositionProgram, TokenizedQuestion};

pub const MODEL_FILE_VERSION: u32 = 1;

/// Fallback vocab entry for tokens unseen at training time.
const UNK_TOKEN: &str = "<unk>";
/// Operator tokens appended to every question.
const OP_TOKENS: [&str; 2] = ["Comp", "Conj"];

const ADAGRAD_EPS: f64 = 1e-8;
const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Error)]
pub enum PtrNetError {
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("empty question")]
    EmptyQuestion,
    #[error("invalid label {label} for question of {len} tokens")]
    InvalidLabel { label: String, len: usize },
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },
    #[error("empty training set")]
    EmptyData,
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 64,
            embed_dim: 50,
            dropout: 0.25,
            learning_rate: 0.01,
            l2: 1e-4,
            epochs: 300,
            seed: 13,
        }
    }
}

/// How a vocab token is embedded: a frozen pre-trained vector, or a row of
/// the learned unknown-embedding matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TokenEmbedding {
    Known(Vec<f64>),
    Unknown(usize),
}

/// Token table splitting pre-trained (frozen) from learned embeddings. The
/// operator tokens `Comp`, `Conj` and the `<unk>` fallback are always
/// present as learned entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    embeddings: Vec<TokenEmbedding>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    n_unknown: usize,
}

impl Vocab {
    /// Build from the tokens of a training corpus. Tokens found in the
    /// store are frozen to their vectors; the rest get learned rows.
    pub fn build<'a>(
        corpus_tokens: impl Iterator<Item = &'a str>,
        store: &EmbeddingStore,
    ) -> Vocab {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            embeddings: Vec::new(),
            index: HashMap::new(),
            n_unknown: 0,
        };
        for op in OP_TOKENS {
            vocab.push_unknown(op.to_string());
        }
        vocab.push_unknown(UNK_TOKEN.to_string());
        for token in corpus_tokens {
            let key = Vocab::canon(token);
            if vocab.index.contains_key(&key) {
                continue;
            }
            match store.get(&key) {
                Some(v) => {
                    let id = vocab.tokens.len();
                    vocab.index.insert(key.clone(), id);
                    vocab.tokens.push(key);
                    vocab.embeddings.push(TokenEmbedding::Known(v.to_vec()));
                }
                None => vocab.push_unknown(key),
            }
        }
        vocab
    }

    fn canon(token: &str) -> String {
        if OP_TOKENS.contains(&token) || token == UNK_TOKEN {
            token.to_string()
        } else {
            token.to_lowercase()
        }
    }

    fn push_unknown(&mut self, key: String) {
        let id = self.tokens.len();
        self.index.insert(key.clone(), id);
        self.tokens.push(key);
        self.embeddings.push(TokenEmbedding::Unknown(self.n_unknown));
        self.n_unknown += 1;
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    fn lookup(&self, token: &str) -> usize {
        let key = Vocab::canon(token);
        *self
            .index
            .get(&key)
            .unwrap_or_else(|| &self.index[UNK_TOKEN])
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_unknown(&self) -> usize {
        self.n_unknown
    }
}

/// The question with `Comp Conj` appended; positions `|base|` and
/// `|base|+1` are the operator tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedQuestion {
    pub base: TokenizedQuestion,
    pub tokens: Vec<String>,
}

impl AugmentedQuestion {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn comp_position(&self) -> usize {
        self.base.len()
    }

    pub fn conj_position(&self) -> usize {
        self.base.len() + 1
    }
}

pub fn augment(q: &TokenizedQuestion) -> Result<AugmentedQuestion, PtrNetError> {
    if q.is_empty() {
        return Err(PtrNetError::EmptyQuestion);
    }
    let mut tokens = q.tokens.clone();
    tokens.extend(OP_TOKENS.iter().map(|s| s.to_string()));
    Ok(AugmentedQuestion {
        base: q.clone(),
        tokens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Seg {
    off: usize,
    rows: usize,
    cols: usize,
}

impl Seg {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GruLayout {
    wz: Seg,
    uz: Seg,
    bz: Seg,
    wr: Seg,
    ur: Seg,
    br: Seg,
    wh: Seg,
    uh: Seg,
    bh: Seg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    enc: GruLayout,
    dec: GruLayout,
    att: Seg,
    start: Seg,
    unk: Seg,
    total: usize,
}

impl Layout {
    fn new(hidden: usize, embed: usize, n_unknown: usize) -> Layout {
        let mut off = 0;
        let mut alloc = |rows: usize, cols: usize| {
            let seg = Seg { off, rows, cols };
            off += rows * cols;
            seg
        };
        let gru = |input_dim: usize, alloc: &mut dyn FnMut(usize, usize) -> Seg| GruLayout {
            wz: alloc(hidden, input_dim),
            uz: alloc(hidden, hidden),
            bz: alloc(hidden, 1),
            wr: alloc(hidden, input_dim),
            ur: alloc(hidden, hidden),
            br: alloc(hidden, 1),
            wh: alloc(hidden, input_dim),
            uh: alloc(hidden, hidden),
            bh: alloc(hidden, 1),
        };
        let enc = gru(embed, &mut alloc);
        let dec = gru(embed, &mut alloc);
        let att = alloc(hidden, hidden);
        let start = alloc(embed, 1);
        let unk = alloc(n_unknown, embed);
        Layout {
            enc,
            dec,
            att,
            start,
            unk,
            total: off,
        }
    }

}

/// All trainable parameters plus the frozen vocab, serializable to a
/// versioned model file.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub config: ModelConfig,
    pub vocab: Vocab,
    flat: Vec<f64>,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    config: ModelConfig,
    vocab: Vocab,
    flat: Vec<f64>,
}

impl GruParams {
    /// Fresh parameters initialized uniformly in [-0.08, 0.08] from the
    /// config seed.
    pub fn init(config: ModelConfig, vocab: Vocab) -> GruParams {
        let layout = Layout::new(config.hidden_dim, config.embed_dim, vocab.n_unknown());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let flat = (0..layout.total)
            .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        GruParams {
            config,
            vocab,
            flat,
            layout,
        }
    }

    /// Zero parameters, used by closed-form tests.
    pub fn zeros(config: ModelConfig, vocab: Vocab) -> GruParams {
        let layout = Layout::new(config.hidden_dim, config.embed_dim, vocab.n_unknown());
        GruParams {
            config,
            vocab,
            flat: vec![0.0; layout.total],
            layout,
        }
    }

    pub fn n_params(&self) -> usize {
        self.flat.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn save(&self, path: &Path) -> Result<(), PtrNetError> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            flat: self.flat.clone(),
        };
        fs::write(path, serde_json::to_string(&file).unwrap())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GruParams, PtrNetError> {
        let text = fs::read_to_string(path)?;
        let mut file: ModelFile =
            serde_json::from_str(&text).map_err(|e| PtrNetError::ModelFile(e.to_string()))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(PtrNetError::ModelFile(format!(
                "unsupported model file version {} (expected {})",
                file.version, MODEL_FILE_VERSION
            )));
        }
        file.vocab.rebuild_index();
        let layout = Layout::new(
            file.config.hidden_dim,
            file.config.embed_dim,
            file.vocab.n_unknown(),
        );
        if file.flat.len() != layout.total {
            return Err(PtrNetError::ModelFile(format!(
                "parameter count {} does not match config ({})",
                file.flat.len(),
                layout.total
            )));
        }
        Ok(GruParams {
            config: file.config,
            vocab: file.vocab,
            flat: file.flat,
            layout,
        })
    }
}

struct GruNodes {
    wz: NodeId,
    uz: NodeId,
    bz: NodeId,
    wr: NodeId,
    ur: NodeId,
    br: NodeId,
    wh: NodeId,
    uh: NodeId,
    bh: NodeId,
}

/// One forward graph over the tape, with the parameter segments registered
/// as leaves so their gradients can be gathered back into the flat vector.
struct Graph<'a> {
    tape: Tape,
    params: &'a GruParams,
    enc: GruNodes,
    dec: GruNodes,
    att: NodeId,
    start: NodeId,
    unk: NodeId,
    seg_nodes: Vec<(Seg, NodeId)>,
}

impl<'a> Graph<'a> {
    fn new(params: &'a GruParams) -> Graph<'a> {
        let mut tape = Tape::new();
        let mut seg_nodes = Vec::new();
        let mut reg = |seg: Seg, tape: &mut Tape, seg_nodes: &mut Vec<(Seg, NodeId)>| {
            let values = params.flat[seg.off..seg.off + seg.len()].to_vec();
            let id = tape.matrix(seg.rows, seg.cols, values);
            seg_nodes.push((seg, id));
            id
        };
        let gru = |layout: &GruLayout,
                   tape: &mut Tape,
                   seg_nodes: &mut Vec<(Seg, NodeId)>,
                   reg: &mut dyn FnMut(Seg, &mut Tape, &mut Vec<(Seg, NodeId)>) -> NodeId| {
            GruNodes {
                wz: reg(layout.wz, tape, seg_nodes),
                uz: reg(layout.uz, tape, seg_nodes),
                bz: reg(layout.bz, tape, seg_nodes),
                wr: reg(layout.wr, tape, seg_nodes),
                ur: reg(layout.ur, tape, seg_nodes),
                br: reg(layout.br, tape, seg_nodes),
                wh: reg(layout.wh, tape, seg_nodes),
                uh: reg(layout.uh, tape, seg_nodes),
                bh: reg(layout.bh, tape, seg_nodes),
            }
        };
        let enc = gru(&params.layout.enc, &mut tape, &mut seg_nodes, &mut reg);
        let dec = gru(&params.layout.dec, &mut tape, &mut seg_nodes, &mut reg);
        let att = reg(params.layout.att, &mut tape, &mut seg_nodes);
        let start = reg(params.layout.start, &mut tape, &mut seg_nodes);
        let unk = reg(params.layout.unk, &mut tape, &mut seg_nodes);
        Graph {
            tape,
            params,
            enc,
            dec,
            att,
            start,
            unk,
            seg_nodes,
        }
    }

    /// Embedding of one vocab token: a frozen constant or a learned row of
    /// the unknown matrix.
    fn embed(&mut self, token: &str) -> Result<NodeId, PtrNetError> {
        let id = self.params.vocab.lookup(token);
        match &self.params.vocab.embeddings[id] {
            TokenEmbedding::Known(v) => Ok(self.tape.vector(v.clone())),
            TokenEmbedding::Unknown(row) => {
                let mut onehot = vec![0.0; self.params.vocab.n_unknown()];
                onehot[*row] = 1.0;
                let oh = self.tape.vector(onehot);
                Ok(self.tape.vecmat(oh, self.unk)?)
            }
        }
    }

    /// Inverted dropout on an embedding when training.
    fn dropped(
        &mut self,
        x: NodeId,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId, PtrNetError> {
        let p = self.params.config.dropout;
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.params.config.embed_dim)
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mask = self.tape.vector(mask);
        Ok(self.tape.mul(x, mask)?)
    }

    /// One GRU step: z = sigma(Wz x + Uz h + bz), r = sigma(Wr x + Ur h +
    /// br), cand = tanh(Wh x + Uh (r*h) + bh), h' = (1-z)*h + z*cand.
    fn gru_step(&mut self, which: Gru, h: NodeId, x: NodeId) -> Result<NodeId, PtrNetError> {
        let g = match which {
            Gru::Encoder => &self.enc,
            Gru::Decoder => &self.dec,
        };
        let (wz, uz, bz) = (g.wz, g.uz, g.bz);
        let (wr, ur, br) = (g.wr, g.ur, g.br);
        let (wh, uh, bh) = (g.wh, g.uh, g.bh);
        let t = &mut self.tape;
        let zx = t.matvec(wz, x)?;
        let zh = t.matvec(uz, h)?;
        let zs = t.add(zx, zh)?;
        let zs = t.add(zs, bz)?;
        let z = t.sigmoid(zs);
        let rx = t.matvec(wr, x)?;
        let rh = t.matvec(ur, h)?;
        let rs = t.add(rx, rh)?;
        let rs = t.add(rs, br)?;
        let r = t.sigmoid(rs);
        let gated = t.mul(r, h)?;
        let cx = t.matvec(wh, x)?;
        let ch = t.matvec(uh, gated)?;
        let cs = t.add(cx, ch)?;
        let cs = t.add(cs, bh)?;
        let cand = t.tanh(cs);
        let delta = t.sub(cand, h)?;
        let step = t.mul(z, delta)?;
        Ok(t.add(h, step)?)
    }

    /// Encode the augmented question into per-position hidden states.
    fn encode(
        &mut self,
        q: &AugmentedQuestion,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<NodeId>, PtrNetError> {
        let mut h = self.tape.vector(vec![0.0; self.params.config.hidden_dim]);
        let mut states = Vec::with_capacity(q.len());
        for token in &q.tokens {
            let x = self.embed(token)?;
            let x = self.dropped(x, training, rng)?;
            h = self.gru_step(Gru::Encoder, h, x)?;
            states.push(h);
        }
        Ok(states)
    }

    /// Attention distribution over encoder positions for one decoder state:
    /// bilinear scores followed by softmax.
    fn decode_distribution(
        &mut self,
        states: &[NodeId],
        h_dec: NodeId,
    ) -> Result<NodeId, PtrNetError> {
        let v = self.tape.vecmat(h_dec, self.att)?;
        let scores: Vec<NodeId> = states
            .iter()
            .map(|s| self.tape.dot(v, *s))
            .collect::<Result<_, _>>()?;
        let stacked = self.tape.stack(scores);
        Ok(self.tape.softmax(stacked))
    }
}

#[derive(Clone, Copy)]
enum Gru {
    Encoder,
    Decoder,
}

/// The 3-token pointer targets for a label, in augmented-question
/// positions. A `Conj` with no copy targets the `Conj` operator position
/// itself.
fn targets(
    label: &DecompositionProgram,
    q: &AugmentedQuestion,
) -> Result<[usize; 3], PtrNetError> {
    let invalid = || PtrNetError::InvalidLabel {
        label: label.to_string(),
        len: q.base.len(),
    };
    label.validate(q.base.len()).map_err(|_| invalid())?;
    match *label {
        DecompositionProgram::Comp { i, j } => Ok([q.comp_position(), i, j]),
        DecompositionProgram::Conj { i, copy } => Ok([
            q.conj_position(),
            i,
            copy.unwrap_or_else(|| q.conj_position()),
        ]),
        DecompositionProgram::SimpQa => Err(invalid()),
    }
}

/// Run one example through the model; returns the three step
/// distributions' NLL sum as a tape node.
fn example_nll(
    graph: &mut Graph<'_>,
    example: &SupervisionExample,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId, PtrNetError> {
    let q = augment(&example.nl)?;
    let tgt = targets(&example.label, &q)?;
    let states = graph.encode(&q, training, rng)?;
    let mut h = *states.last().unwrap();
    let mut x = graph.start;
    let mut total: Option<NodeId> = None;
    for target in tgt {
        let x_in = graph.dropped(x, training, rng)?;
        h = graph.gru_step(Gru::Decoder, h, x_in)?;
        let dist = graph.decode_distribution(&states, h)?;
        let nll = graph.tape.neg_log_pick(dist, target);
        total = Some(match total {
            Some(t) => graph.tape.add(t, nll)?,
            None => nll,
        });
        x = graph.embed(&q.tokens[target])?;
    }
    Ok(total.unwrap())
}

/// Mean NLL over the batch plus `l2 * ||theta||^2`, with the gradient
/// gathered into a flat vector. Dropout is active only when `training`.
pub fn loss_batch(
    params: &GruParams,
    batch: &[SupervisionExample],
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>), PtrNetError> {
    if batch.is_empty() {
        return Err(PtrNetError::EmptyData);
    }
    let mut graph = Graph::new(params);
    let mut total: Option<NodeId> = None;
    for example in batch {
        let nll = example_nll(&mut graph, example, training, rng)?;
        total = Some(match total {
            Some(t) => graph.tape.add(t, nll)?,
            None => nll,
        });
    }
    let mean = graph.tape.scale(total.unwrap(), 1.0 / batch.len() as f64);
    let mut loss = mean;
    if params.config.l2 > 0.0 {
        let mut reg: Option<NodeId> = None;
        let seg_nodes = graph.seg_nodes.clone();
        for (_, node) in &seg_nodes {
            let sq = graph.tape.sum_squares(*node);
            reg = Some(match reg {
                Some(r) => graph.tape.add(r, sq)?,
                None => sq,
            });
        }
        let reg = graph.tape.scale(reg.unwrap(), params.config.l2);
        loss = graph.tape.add(loss, reg)?;
    }
    graph.tape.backward(loss);
    let mut grad = vec![0.0; params.flat.len()];
    for (seg, node) in &graph.seg_nodes {
        grad[seg.off..seg.off + seg.len()].copy_from_slice(graph.tape.grad(*node));
    }
    Ok((graph.tape.scalar(loss), grad))
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

/// Train with per-example Adagrad updates; deterministic given the config
/// seed. Returns the trained parameters and the per-epoch loss log.
pub fn train(
    data: &[SupervisionExample],
    config: ModelConfig,
    store: &EmbeddingStore,
) -> Result<(GruParams, TrainLog), PtrNetError> {
    if data.is_empty() {
        return Err(PtrNetError::EmptyData);
    }
    let vocab = Vocab::build(
        data.iter()
            .flat_map(|ex| ex.nl.tokens.iter().map(String::as_str)),
        store,
    );
    let mut params = GruParams::init(config.clone(), vocab);
    let mut accumulator = vec![0.0; params.flat.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut log = TrainLog {
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for &idx in &order {
            let (loss, grad) = loss_batch(
                &params,
                std::slice::from_ref(&data[idx]),
                true,
                &mut dropout_rng,
            )?;
            if !loss.is_finite() {
                return Err(PtrNetError::Divergence { epoch });
            }
            epoch_loss += loss;
            if config.learning_rate > 0.0 {
                for (k, g) in grad.iter().enumerate() {
                    accumulator[k] += g * g;
                    params.flat[k] -=
                        config.learning_rate * g / (accumulator[k] + ADAGRAD_EPS).sqrt();
                }
            }
        }
        log.epoch_losses.push(epoch_loss / data.len() as f64);
    }
    Ok((params, log))
}

/// Greedy decode under validity masks: step 1 picks an operator position,
/// steps 2 and 3 pick indices satisfying the program invariants for that
/// operator. The output is always a valid program.
pub fn predict(
    q: &TokenizedQuestion,
    params: &GruParams,
) -> Result<DecompositionProgram, PtrNetError> {
    let aug = augment(q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut graph = Graph::new(params);
    let states = graph.encode(&aug, false, &mut rng)?;
    let mut h = *states.last().unwrap();
    let mut x = graph.start;

    let step = |graph: &mut Graph<'_>,
                    h: &mut NodeId,
                    x: &mut NodeId,
                    allowed: &[usize]|
     -> Result<usize, PtrNetError> {
        *h = graph.gru_step(Gru::Decoder, *h, *x)?;
        let dist = graph.decode_distribution(&states, *h)?;
        let probs = graph.tape.values(dist).to_vec();
        let choice = allowed
            .iter()
            .copied()
            .max_by(|a, b| probs[*a].partial_cmp(&probs[*b]).unwrap())
            .expect("mask is never empty");
        *x = graph.embed(&aug.tokens[choice])?;
        Ok(choice)
    };

    let n = q.len();
    // Conj needs at least two base tokens; a one-token question can only
    // be decomposed as Comp.
    let op_allowed: Vec<usize> = if n >= 2 {
        vec![aug.comp_position(), aug.conj_position()]
    } else {
        vec![aug.comp_position()]
    };
    let op_pos = step(&mut graph, &mut h, &mut x, &op_allowed)?;
    if op_pos == aug.comp_position() {
        let i_allowed: Vec<usize> = (0..n).collect();
        let i = step(&mut graph, &mut h, &mut x, &i_allowed)?;
        let j_allowed: Vec<usize> = (i..n).collect();
        let j = step(&mut graph, &mut h, &mut x, &j_allowed)?;
        Ok(DecompositionProgram::Comp { i, j })
    } else {
        let i_allowed: Vec<usize> = (1..n).collect();
        let i = step(&mut graph, &mut h, &mut x, &i_allowed)?;
        let mut j_allowed: Vec<usize> = (0..i).collect();
        j_allowed.push(aug.conj_position());
        let j = step(&mut graph, &mut h, &mut x, &j_allowed)?;
        let copy = if j == aug.conj_position() {
            None
        } else {
            Some(j)
        };
        Ok(DecompositionProgram::Conj { i, copy })
    }
}

/// Compare the reverse-mode gradient of the batch loss against central
/// finite differences on a random sample of coordinates. Returns the
/// maximum relative error.
pub fn grad_check(
    params: &GruParams,
    batch: &[SupervisionExample],
    epsilon: f64,
    n_coords: usize,
    seed: u64,
) -> Result<f64, PtrNetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(0);
    let (_, analytic) = loss_batch(params, batch, false, &mut dropout_rng)?;
    let mut coords: Vec<usize> = (0..params.flat.len()).collect();
    coords.shuffle(&mut rng);
    coords.truncate(n_coords);
    let mut worst: f64 = 0.0;
    let mut perturbed = params.clone();
    for &k in &coords {
        let original = perturbed.flat[k];
        perturbed.flat[k] = original + epsilon;
        let (plus, _) = loss_batch(&perturbed, batch, false, &mut dropout_rng)?;
        perturbed.flat[k] = original - epsilon;
        let (minus, _) = loss_batch(&perturbed, batch, false, &mut dropout_rng)?;
        perturbed.flat[k] = original;
        let fd = (plus - minus) / (2.0 * epsilon);
        let g = analytic[k];
        let rel = (g - fd).abs() / f64::max(1e-8, g.abs() + fd.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Convenience forward passes used by tests and the public contract.
pub mod forward {
    use super::*;

    /// One encoder GRU step on plain vectors.
    pub fn gru_step_encoder(
        params: &GruParams,
        h: &[f64],
        x: &[f64],
    ) -> Result<Vec<f64>, PtrNetError> {
        let mut graph = Graph::new(params);
        let h = graph.tape.vector(h.to_vec());
        let x = graph.tape.vector(x.to_vec());
        let out = graph.gru_step(Gru::Encoder, h, x)?;
        Ok(graph.tape.values(out).to_vec())
    }

    /// Per-position encoder states for an augmented question.
    pub fn encode(
        params: &GruParams,
        q: &AugmentedQuestion,
        training: bool,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, PtrNetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut graph = Graph::new(params);
        let states = graph.encode(q, training, &mut rng)?;
        Ok(states
            .iter()
            .map(|s| graph.tape.values(*s).to_vec())
            .collect())
    }

    /// First-step pointer distribution over augmented-question positions.
    pub fn first_step_distribution(
        params: &GruParams,
        q: &AugmentedQuestion,
    ) -> Result<Vec<f64>, PtrNetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut graph = Graph::new(params);
        let states = graph.encode(q, false, &mut rng)?;
        let h0 = *states.last().unwrap();
        let h = graph.gru_step(Gru::Decoder, h0, graph.start)?;
        let dist = graph.decode_distribution(&states, h)?;
        Ok(graph.tape.values(dist).to_vec())
    }
}
