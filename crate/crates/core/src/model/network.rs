//! The edit classifier: BiLSTM encoder, multi-head edge attention and an
//! MLP (optionally bilinear) output layer, built on the tape.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::text_seed;
use crate::error::{Error, Result};
use crate::numerics::{run_lstm, LstmParams, NodeId, ParamId, ParamStore, Scalar, Tape, Tensor};
use crate::wrg::{RelationVocabulary, WrgGraph};

/// Number of edit classes.
pub const CLASSES: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Mlp,
    /// MLP plus four bilinear channels over the endpoint states.
    Bilinear,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ClassifierKind::Mlp),
            "bilinear" => Ok(ClassifierKind::Bilinear),
            _ => Err(Error::Config(format!("unknown classifier {s:?} (expected mlp or bilinear)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    /// Encoder width M, split evenly between the two directions.
    pub hidden: usize,
    pub dropout: f64,
    pub positional_encoding: bool,
    pub heads: usize,
    /// Width of the MLP hidden layer; defaults to `hidden`.
    pub mlp_hidden: Option<usize>,
    pub classifier: ClassifierKind,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 100,
            hidden: 800,
            dropout: 0.2,
            positional_encoding: true,
            heads: 4,
            mlp_hidden: None,
            classifier: ClassifierKind::Mlp,
            leaky_slope: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.hidden % 2 != 0 {
            return Err(Error::Config(format!("hidden size must be even and positive, got {}", self.hidden)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.embedding_dim == 0 || self.heads == 0 || self.mlp_hidden == Some(0) {
            return Err(Error::Config("embedding size, heads and MLP width must be positive".into()));
        }
        Ok(())
    }

    pub fn mlp_width(&self) -> usize {
        self.mlp_hidden.unwrap_or(self.hidden)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadParams {
    pub v: ParamId,
    pub k: ParamId,
    pub q: ParamId,
    pub we: ParamId,
}

#[derive(Clone, Debug)]
pub struct BilinearParams {
    pub channels: Vec<ParamId>,
    pub bias: ParamId,
}

/// Handles to every parameter of a [`Model`].
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub embedding: ParamId,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub heads: Vec<HeadParams>,
    pub mix: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub bilinear: Option<BilinearParams>,
}

/// Parameter names and shapes for a configuration.
fn layout(config: &ModelConfig, vocab: usize, relations: usize) -> Vec<(String, [usize; 2])> {
    let e = config.embedding_dim;
    let m = config.hidden;
    let h = m / 2;
    let n = relations;
    let mut out = vec![("embedding".to_string(), [vocab, e])];
    for dir in ["fwd", "bwd"] {
        out.push((format!("lstm.{dir}.w_ih"), [e, 4 * h]));
        out.push((format!("lstm.{dir}.w_hh"), [h, 4 * h]));
        out.push((format!("lstm.{dir}.bias"), [1, 4 * h]));
    }
    for k in 0..config.heads {
        out.push((format!("attn.{k}.v"), [m, m]));
        out.push((format!("attn.{k}.k"), [m, m]));
        out.push((format!("attn.{k}.q"), [n, n]));
        out.push((format!("attn.{k}.we"), [2 * m + n, 1]));
    }
    out.push(("attn.mix".into(), [config.heads, 1]));
    let hidden = config.mlp_width();
    out.push(("mlp.w1".into(), [2 * m + n, hidden]));
    out.push(("mlp.b1".into(), [1, hidden]));
    out.push(("mlp.w2".into(), [hidden, CLASSES]));
    out.push(("mlp.b2".into(), [1, CLASSES]));
    if config.classifier == ClassifierKind::Bilinear {
        for c in 0..CLASSES {
            out.push((format!("bilinear.w.{c}"), [m, m]));
        }
        out.push(("bilinear.bias".into(), [1, CLASSES]));
    }
    out
}

fn initial_values(name: &str, [rows, cols]: [usize; 2], hidden: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(text_seed(name, seed));
    let mut uniform = |bound: f64| -> Vec<f64> { (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect() };
    let xavier = (6.0 / (rows + cols) as f64).sqrt();
    if name == "attn.mix" {
        vec![1.0; rows * cols]
    } else if name.ends_with(".bias") && name.starts_with("lstm.") {
        // Forget-gate block starts at 1 so early gradients flow through time.
        let h = cols / 4;
        (0..cols).map(|j| if (h..2 * h).contains(&j) { 1.0 } else { 0.0 }).collect()
    } else if name.starts_with("lstm.") {
        uniform(1.0 / ((hidden / 2) as f64).sqrt())
    } else if name.starts_with("mlp.b") || name == "bilinear.bias" {
        vec![0.0; rows * cols]
    } else {
        uniform(xavier)
    }
}

/// The classifier: configuration plus parameters.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub ids: ModelParams,
    relations: usize,
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters; the embedding table is copied from `embeddings`.
    /// Every other tensor is seeded by its own name, so adding or removing
    /// a component leaves the rest unchanged.
    pub fn new(config: ModelConfig, embeddings: &Tensor<f32>, relations: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let (vocab, dim) = embeddings.dims2();
        if dim != config.embedding_dim {
            return Err(Error::Config(format!(
                "embedding table has width {dim}, configuration says {}",
                config.embedding_dim
            )));
        }
        let mut store = ParamStore::new();
        for (name, shape) in layout(&config, vocab, relations) {
            let tensor = if name == "embedding" {
                embeddings.cast()
            } else {
                let values = initial_values(&name, shape, config.hidden, seed);
                Tensor::new(shape.to_vec(), values.into_iter().map(T::of).collect())?
            };
            store.insert(name, tensor);
        }
        Self::from_store(config, relations, store)
    }

    /// Wraps existing parameters, checking every name and shape.
    pub fn from_store(config: ModelConfig, relations: usize, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let id = |name: &str| params.id(name).ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")));
        let vocab = params.get(id("embedding")?).dims2().0;
        let expected = layout(&config, vocab, relations);
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let t = params.get(id(name)?);
            if t.shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let lstm = |dir: &str| -> Result<LstmParams> {
            Ok(LstmParams {
                w_ih: id(&format!("lstm.{dir}.w_ih"))?,
                w_hh: id(&format!("lstm.{dir}.w_hh"))?,
                bias: id(&format!("lstm.{dir}.bias"))?,
            })
        };
        let heads = (0..config.heads)
            .map(|k| {
                Ok(HeadParams {
                    v: id(&format!("attn.{k}.v"))?,
                    k: id(&format!("attn.{k}.k"))?,
                    q: id(&format!("attn.{k}.q"))?,
                    we: id(&format!("attn.{k}.we"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let bilinear = match config.classifier {
            ClassifierKind::Mlp => None,
            ClassifierKind::Bilinear => Some(BilinearParams {
                channels: (0..CLASSES)
                    .map(|c| id(&format!("bilinear.w.{c}")))
                    .collect::<Result<_>>()?,
                bias: id("bilinear.bias")?,
            }),
        };
        let ids = ModelParams {
            embedding: id("embedding")?,
            fwd: lstm("fwd")?,
            bwd: lstm("bwd")?,
            heads,
            mix: id("attn.mix")?,
            w1: id("mlp.w1")?,
            b1: id("mlp.b1")?,
            w2: id("mlp.w2")?,
            b2: id("mlp.b2")?,
            bilinear,
        };
        Ok(Model {
            config,
            params,
            ids,
            relations,
        })
    }

    /// Width N of the relation multi-hot vectors.
    pub fn relation_count(&self) -> usize {
        self.relations
    }

    pub fn vocab_size(&self) -> usize {
        self.params.get(self.ids.embedding).dims2().0
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model::from_store(self.config.clone(), self.relations, self.params.cast()).expect("same layout")
    }
}

/// Dropout is applied only in training mode.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

/// Per-triple model inputs for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeInputs {
    /// Zero-based source and target positions.
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
    /// Relation positions per triple (multi-hot support).
    pub relations: Vec<Vec<usize>>,
}

impl EdgeInputs {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn multi_hot<T: Scalar>(&self, width: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.len() * width];
        for (i, rels) in self.relations.iter().enumerate() {
            for &r in rels {
                out[i * width + r] += T::one();
            }
        }
        out
    }
}

pub fn edge_inputs(graph: &WrgGraph, relations: &RelationVocabulary) -> Result<EdgeInputs> {
    let n = graph.len();
    let mut out = EdgeInputs {
        src: Vec::with_capacity(graph.triples.len()),
        tgt: Vec::with_capacity(graph.triples.len()),
        relations: Vec::with_capacity(graph.triples.len()),
    };
    for t in &graph.triples {
        if t.src == 0 || t.tgt == 0 || t.src > n || t.tgt > n {
            return Err(Error::Graph(format!(
                "triple {}→{} outside a {n}-token sentence",
                t.src, t.tgt
            )));
        }
        out.src.push(t.src - 1);
        out.tgt.push(t.tgt - 1);
        out.relations.push(t.labels.iter().map(|l| relations.position(l.tag())).collect());
    }
    Ok(out)
}

/// Sinusoidal position table, `len × dim`.
pub fn positional_encoding<T: Scalar>(len: usize, dim: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(len * dim);
    for pos in 0..len {
        for j in 0..dim {
            let rate = 10000f64.powf((2 * (j / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            out.push(T::of(if j % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    out
}

/// Encoder input rows (embedding + position, before dropout), `l × E`.
pub fn embed<T: Scalar>(tape: &mut Tape<'_, T>, model: &Model<T>, tokens: &[usize]) -> Result<NodeId> {
    let table = tape.param(model.ids.embedding);
    let x = tape.gather_rows(table, tokens)?;
    if !model.config.positional_encoding {
        return Ok(x);
    }
    let dim = model.config.embedding_dim;
    let pe = tape.constant(tokens.len(), dim, positional_encoding(tokens.len(), dim))?;
    tape.add(x, pe)
}

/// Per-token hidden states, `l × M`: forward and backward states
/// concatenated.
pub fn encode<T: Scalar>(tape: &mut Tape<'_, T>, model: &Model<T>, tokens: &[usize], mode: Mode<'_>) -> Result<NodeId> {
    if tokens.is_empty() {
        return Err(Error::Invalid("cannot encode an empty sentence".into()));
    }
    let mut x = embed(tape, model, tokens)?;
    let p = model.config.dropout;
    if let Mode::Train(rng) = mode {
        if p > 0.0 {
            let keep = T::of(1.0 / (1.0 - p));
            let (rows, cols) = tape.shape(x);
            let mask = (0..rows * cols)
                .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
                .collect();
            let mask = tape.constant(rows, cols, mask)?;
            x = tape.mul(x, mask)?;
        }
    }
    let fwd = run_lstm(tape, x, &model.ids.fwd, false)?;
    let bwd = run_lstm(tape, x, &model.ids.bwd, true)?;
    tape.concat_cols(&[fwd, bwd])
}

/// The three per-triple feature matrices.
#[derive(Clone, Copy, Debug)]
pub struct EdgeFeatures {
    pub h_src: NodeId,
    pub h_tgt: NodeId,
    pub d_rel: NodeId,
}

pub fn gather_edge_features<T: Scalar>(
    tape: &mut Tape<'_, T>,
    encoding: NodeId,
    inputs: &EdgeInputs,
    relation_count: usize,
) -> Result<EdgeFeatures> {
    let h_src = tape.gather_rows(encoding, &inputs.src)?;
    let h_tgt = tape.gather_rows(encoding, &inputs.tgt)?;
    if let Some(&bad) = inputs.relations.iter().flatten().find(|&&r| r >= relation_count) {
        return Err(Error::Invalid(format!("relation position {bad} outside 0..{relation_count}")));
    }
    let d_rel = tape.constant(inputs.len(), relation_count, inputs.multi_hot(relation_count))?;
    Ok(EdgeFeatures { h_src, h_tgt, d_rel })
}

/// Attention weight per triple (`m × 1`) and each head's normalized scores.
pub fn edge_attention<T: Scalar>(
    tape: &mut Tape<'_, T>,
    model: &Model<T>,
    f: &EdgeFeatures,
) -> Result<(NodeId, Vec<NodeId>)> {
    let slope = T::of(model.config.leaky_slope);
    let mut heads = Vec::with_capacity(model.ids.heads.len());
    for head in &model.ids.heads {
        let (v, k, q, we) = (tape.param(head.v), tape.param(head.k), tape.param(head.q), tape.param(head.we));
        let a = tape.matmul(f.h_src, v)?;
        let b = tape.matmul(f.h_tgt, k)?;
        let c = tape.matmul(f.d_rel, q)?;
        let joined = tape.concat_cols(&[a, b, c])?;
        let e = tape.matmul(joined, we)?;
        let e = tape.leaky_relu(e, slope);
        // Normalize over the sentence's triples (the column).
        let row = tape.transpose(e);
        let scores = tape.softmax_rows(row);
        heads.push(tape.transpose(scores));
    }
    let all = tape.concat_cols(&heads)?;
    let mix = tape.param(model.ids.mix);
    let alpha = tape.matmul(all, mix)?;
    Ok((alpha, heads))
}

/// Unnormalized class scores, `m × 4`.
pub fn classify_logits<T: Scalar>(
    tape: &mut Tape<'_, T>,
    model: &Model<T>,
    f: &EdgeFeatures,
    alpha: NodeId,
) -> Result<NodeId> {
    let slope = T::of(model.config.leaky_slope);
    let joined = tape.concat_cols(&[f.h_src, f.h_tgt, f.d_rel])?;
    let scaled = tape.row_scale(joined, alpha)?;
    let (w1, b1, w2, b2) = (
        tape.param(model.ids.w1),
        tape.param(model.ids.b1),
        tape.param(model.ids.w2),
        tape.param(model.ids.b2),
    );
    let hidden = tape.matmul(scaled, w1)?;
    let hidden = tape.add_row(hidden, b1)?;
    let hidden = tape.leaky_relu(hidden, slope);
    let out = tape.matmul(hidden, w2)?;
    let mut logits = tape.add_row(out, b2)?;
    if let Some(bilinear) = &model.ids.bilinear {
        let mut channels = Vec::with_capacity(CLASSES);
        for &w in &bilinear.channels {
            let w = tape.param(w);
            let projected = tape.matmul(f.h_src, w)?;
            let product = tape.mul(projected, f.h_tgt)?;
            channels.push(tape.row_sum(product));
        }
        let stacked = tape.concat_cols(&channels)?;
        let bias = tape.param(bilinear.bias);
        let bilinear_out = tape.add_row(stacked, bias)?;
        logits = tape.add(logits, bilinear_out)?;
    }
    Ok(logits)
}

/// Nodes produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub encoding: NodeId,
    pub alpha: NodeId,
    pub heads: Vec<NodeId>,
    pub logits: NodeId,
    /// Row-wise class probabilities, `m × 4`.
    pub probs: NodeId,
}

pub fn forward<T: Scalar>(
    tape: &mut Tape<'_, T>,
    model: &Model<T>,
    tokens: &[usize],
    inputs: &EdgeInputs,
    mode: Mode<'_>,
) -> Result<Forward> {
    if inputs.is_empty() {
        return Err(Error::Invalid("sentence has no edge triples".into()));
    }
    let encoding = encode(tape, model, tokens, mode)?;
    let features = gather_edge_features(tape, encoding, inputs, model.relation_count())?;
    let (alpha, heads) = edge_attention(tape, model, &features)?;
    let logits = classify_logits(tape, model, &features, alpha)?;
    let probs = tape.softmax_rows(logits);
    Ok(Forward {
        encoding,
        alpha,
        heads,
        logits,
        probs,
    })
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::sokuhi;
    use crate::wrg::build_graph;
    use proptest::prelude::*;

    pub(crate) fn small_config(classifier: ClassifierKind) -> ModelConfig {
        ModelConfig {
            embedding_dim: 6,
            hidden: 8,
            dropout: 0.0,
            heads: 4,
            mlp_hidden: Some(5),
            classifier,
            ..Default::default()
        }
    }

    fn table(vocab: usize, dim: usize) -> Tensor<f32> {
        let data = (0..vocab * dim).map(|i| ((i * 37 % 17) as f32 - 8.0) / 10.0).collect();
        Tensor::new(vec![vocab, dim], data).unwrap()
    }

    fn sokuhi_inputs() -> (Vec<usize>, EdgeInputs, usize) {
        let (tokens, parse) = sokuhi();
        let g = build_graph(&tokens, &parse).unwrap();
        let rel = crate::wrg::relation_vocab([&g]);
        // Same id for both occurrences of "was".
        let ids = vec![0, 1, 2, 3, 4, 5, 1, 6, 7, 8, 9];
        (ids, edge_inputs(&g, &rel).unwrap(), rel.len())
    }

    fn model(classifier: ClassifierKind, relations: usize) -> Model<f64> {
        Model::new(small_config(classifier), &table(12, 6), relations, 3).unwrap()
    }

    #[test]
    fn shapes_follow_the_configuration() {
        let (ids, inputs, n) = sokuhi_inputs();
        let m = model(ClassifierKind::Bilinear, n);
        let mut tape = Tape::new(&m.params);
        let out = forward(&mut tape, &m, &ids, &inputs, Mode::Eval).unwrap();
        assert_eq!(tape.shape(out.encoding), (11, 8));
        assert_eq!(tape.shape(out.probs), (17, 4));
        assert_eq!(tape.shape(out.alpha), (17, 1));
        for row in tape.to_rows(out.probs) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for &h in &out.heads {
            assert!((tape.value(h).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn merged_edge_has_two_relation_bits() {
        let (_, inputs, n) = sokuhi_inputs();
        let hot: Vec<f64> = inputs.multi_hot(n);
        let row = |i: usize| &hot[i * n..(i + 1) * n];
        // Triple 2→3 carries {ngbh, aux}.
        let i = (0..inputs.len()).find(|&i| inputs.src[i] == 1 && inputs.tgt[i] == 2).unwrap();
        assert_eq!(row(i).iter().sum::<f64>(), 2.0);
        assert!(row(i).iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn positional_encoding_separates_repeated_words() {
        let (ids, _, n) = sokuhi_inputs();
        for (pe, distinct) in [(true, true), (false, false)] {
            let mut m = model(ClassifierKind::Mlp, n);
            m.config.positional_encoding = pe;
            let mut tape = Tape::new(&m.params);
            let x = embed(&mut tape, &m, &ids).unwrap();
            let rows = tape.to_rows(x);
            assert_eq!(rows[1] != rows[6], distinct);
            let h = encode(&mut tape, &m, &ids, Mode::Eval).unwrap();
            let rows = tape.to_rows(h);
            assert_ne!(rows[1], rows[6]);
        }
    }

    #[test]
    fn eval_mode_is_deterministic_and_training_mode_drops() {
        let (ids, inputs, n) = sokuhi_inputs();
        let mut m = model(ClassifierKind::Mlp, n);
        m.config.dropout = 0.5;
        let run = |mode: Mode<'_>| {
            let mut tape = Tape::new(&m.params);
            let out = forward(&mut tape, &m, &ids, &inputs, mode).unwrap();
            tape.value(out.probs).to_vec()
        };
        assert_eq!(run(Mode::Eval), run(Mode::Eval));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_ne!(run(Mode::Eval), run(Mode::Train(&mut rng)));
    }

    #[test]
    fn single_triple_attention() {
        let m = model(ClassifierKind::Mlp, 3);
        let inputs = EdgeInputs {
            src: vec![0],
            tgt: vec![1],
            relations: vec![vec![0]],
        };
        let mut tape = Tape::new(&m.params);
        let out = forward(&mut tape, &m, &[0, 1], &inputs, Mode::Eval).unwrap();
        for &h in &out.heads {
            assert_eq!(tape.scalar(h), 1.0);
        }
        assert!((tape.scalar(out.alpha) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_get_uniform_scores() {
        let m = model(ClassifierKind::Mlp, 3);
        let inputs = EdgeInputs {
            src: vec![0, 0, 0],
            tgt: vec![1, 1, 1],
            relations: vec![vec![2]; 3],
        };
        let mut tape = Tape::new(&m.params);
        let out = forward(&mut tape, &m, &[0, 1], &inputs, Mode::Eval).unwrap();
        for &h in &out.heads {
            assert!(tape.value(h).iter().all(|&s| (s - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_output_layer_gives_uniform_rows() {
        let (ids, inputs, n) = sokuhi_inputs();
        let mut m = model(ClassifierKind::Mlp, n);
        for name in ["mlp.w2", "mlp.b2"] {
            let id = m.params.id(name).unwrap();
            m.params.get_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new(&m.params);
        let out = forward(&mut tape, &m, &ids, &inputs, Mode::Eval).unwrap();
        assert!(tape.value(out.probs).iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn zero_bilinear_matches_mlp() {
        let (ids, inputs, n) = sokuhi_inputs();
        let mlp = model(ClassifierKind::Mlp, n);
        let mut bil = model(ClassifierKind::Bilinear, n);
        let names: Vec<String> = bil.params.iter().map(|(_, n, _)| n.to_string()).collect();
        for name in names.iter().filter(|n| n.starts_with("bilinear")) {
            let id = bil.params.id(name).unwrap();
            bil.params.get_mut(id).data_mut().fill(0.0);
        }
        let probs = |m: &Model<f64>| {
            let mut tape = Tape::new(&m.params);
            let out = forward(&mut tape, m, &ids, &inputs, Mode::Eval).unwrap();
            tape.value(out.probs).to_vec()
        };
        assert_eq!(probs(&mlp), probs(&bil));
    }

    #[test]
    fn from_store_rejects_wrong_layouts() {
        let m = model(ClassifierKind::Mlp, 5);
        assert!(Model::from_store(m.config.clone(), 6, m.params.clone()).is_err());
        let bil = ModelConfig {
            classifier: ClassifierKind::Bilinear,
            ..m.config.clone()
        };
        assert!(Model::from_store(bil, 5, m.params.clone()).is_err());
        assert!(Model::<f64>::new(small_config(ClassifierKind::Mlp), &table(4, 7), 5, 0).is_err());
        let odd = ModelConfig {
            hidden: 7,
            ..small_config(ClassifierKind::Mlp)
        };
        assert!(odd.validate().is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
        assert_eq!(argmax(&[0.1, 0.2, 0.3, 0.4]), 3);
    }

    proptest! {
        #[test]
        fn argmax_ignores_positive_scaling(row in proptest::collection::vec(0.0f64..1.0, 4), s in 0.01f64..100.0) {
            let scaled: Vec<f64> = row.iter().map(|x| x * s).collect();
            prop_assert_eq!(argmax(&row), argmax(&scaled));
        }
    }
}
