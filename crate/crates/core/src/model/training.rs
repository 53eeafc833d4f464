//! Mini-batch training with weighted cross entropy, Adam and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::edit_f1;
use crate::model::network::{argmax, edge_inputs, forward, EdgeInputs, Mode, Model, CLASSES};
use crate::numerics::{adam_step, AdamConfig, AdamState, ParamGrads, Scalar, Tape};
use crate::supervision::{EditLabel, LabelCounts, LabeledGraph};
use crate::corpus::Vocabulary;
use crate::wrg::RelationVocabulary;

/// `w_c = (1/f_c) / Σ_k (1/f_k)` over classes that occur; absent classes
/// get weight 0.
pub fn inverse_class_weights(frequencies: [f64; CLASSES]) -> [f64; CLASSES] {
    let inv = frequencies.map(|f| if f > 0.0 { 1.0 / f } else { 0.0 });
    let total: f64 = inv.iter().sum();
    if total == 0.0 {
        return [0.0; CLASSES];
    }
    inv.map(|x| x / total)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Inverse,
    Uniform,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(WeightMode::Inverse),
            "uniform" => Ok(WeightMode::Uniform),
            _ => Err(Error::Config(format!("unknown class-weight mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: WeightMode,
    pub weights: [f64; CLASSES],
}

impl LossConfig {
    pub fn from_counts(mode: WeightMode, counts: &LabelCounts) -> Self {
        let weights = match mode {
            WeightMode::Inverse => inverse_class_weights(counts.0.map(|c| c as f64)),
            WeightMode::Uniform => [1.0; CLASSES],
        };
        LossConfig { mode, weights }
    }

    pub fn uniform() -> Self {
        LossConfig {
            mode: WeightMode::Uniform,
            weights: [1.0; CLASSES],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev-loss improvement before stopping.
    pub patience: usize,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    /// L2 coefficient added to gradients; 0 disables it.
    pub l2: f64,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 100,
            patience: 5,
            lr_decay: 0.99,
            l2: 0.0,
            dev_fraction: 0.1,
            seed: 13,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.lr_decay > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "learning rate, decay, batch size and epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) || self.l2 < 0.0 {
            return Err(Error::Config("dev fraction must be in [0, 1) and l2 non-negative".into()));
        }
        Ok(())
    }
}

/// One sentence ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub id: String,
    pub tokens: Vec<usize>,
    pub inputs: EdgeInputs,
    pub gold: Vec<usize>,
}

/// Converts a labeled graph; returns `None` for sentences without triples.
pub fn encode_example(
    id: &str,
    labeled: &LabeledGraph,
    vocab: &Vocabulary,
    relations: &RelationVocabulary,
) -> Result<Option<EncodedExample>> {
    if labeled.graph.triples.is_empty() {
        return Ok(None);
    }
    Ok(Some(EncodedExample {
        id: id.to_string(),
        tokens: vocab.encode(labeled.graph.vertices.iter().map(|t| t.surface.as_str())),
        inputs: edge_inputs(&labeled.graph, relations)?,
        gold: labeled.labels.iter().map(|l| l.index()).collect(),
    }))
}

/// Seeded shuffle, then the first `fraction` of examples become dev.
pub fn split_dev<E: Clone>(examples: &[E], fraction: f64, seed: u64) -> (Vec<E>, Vec<E>) {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let dev_len = ((examples.len() as f64) * fraction).round() as usize;
    let dev_len = dev_len.min(examples.len().saturating_sub(1));
    let dev = order[..dev_len].iter().map(|&i| examples[i].clone()).collect();
    let train = order[dev_len..].iter().map(|&i| examples[i].clone()).collect();
    (train, dev)
}

/// Loss of one sentence and its predicted labels, in evaluation mode.
pub fn evaluate_example<T: Scalar>(model: &Model<T>, ex: &EncodedExample, weights: &[T]) -> Result<(f64, Vec<usize>)> {
    let mut tape = Tape::new(&model.params);
    let out = forward(&mut tape, model, &ex.tokens, &ex.inputs, Mode::Eval)?;
    let loss = tape.weighted_cross_entropy(out.probs, &ex.gold, weights)?;
    let preds = tape.to_rows(out.probs).iter().map(|r| argmax(r)).collect();
    Ok((tape.scalar(loss).as_f64(), preds))
}

/// Dev-set summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub gold: Vec<EditLabel>,
    pub predicted: Vec<EditLabel>,
}

impl Evaluation {
    pub fn class_f1(&self) -> [f64; CLASSES] {
        match edit_f1(&self.gold, &self.predicted) {
            Ok(r) => r.classes.map(|c| c.f1),
            Err(_) => [0.0; CLASSES],
        }
    }
}

/// Mean per-sentence loss and flattened predictions; runs in parallel.
pub fn evaluate<T: Scalar>(model: &Model<T>, examples: &[EncodedExample], weights: &[f64; CLASSES]) -> Result<Evaluation> {
    let w: Vec<T> = weights.iter().map(|&x| T::of(x)).collect();
    let results = examples
        .par_iter()
        .map(|ex| evaluate_example(model, ex, &w))
        .collect::<Result<Vec<_>>>()?;
    let mut eval = Evaluation {
        loss: 0.0,
        gold: Vec::new(),
        predicted: Vec::new(),
    };
    for (ex, (loss, preds)) in examples.iter().zip(results) {
        eval.loss += loss;
        eval.gold.extend(ex.gold.iter().map(|&g| EditLabel::ALL[g]));
        eval.predicted.extend(preds.into_iter().map(|p| EditLabel::ALL[p]));
    }
    eval.loss /= examples.len().max(1) as f64;
    Ok(eval)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    pub dev_f1: Option<[f64; CLASSES]>,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Trains in place. With a non-empty `dev` set, the parameters of the
/// epoch with the lowest dev loss are restored at the end; otherwise the
/// final parameters are kept. `on_epoch` sees each log record as it is
/// produced.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train_set: &[EncodedExample],
    dev: &[EncodedExample],
    loss: &LossConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Invalid("no training examples with edge triples".into()));
    }
    let weights: Vec<T> = loss.weights.iter().map(|&w| T::of(w)).collect();
    let mut adam = AdamState::new(&model.params);
    let mut adam_cfg = AdamConfig {
        lr: config.learning_rate,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = ParamGrads::for_store(&model.params);
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best: Option<(f64, crate::numerics::ParamStore<T>)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            grads.zero();
            let scale = T::of(1.0 / batch.len() as f64);
            for &i in batch {
                let ex = &train_set[i];
                let mut tape = Tape::new(&model.params);
                let out = forward(&mut tape, model, &ex.tokens, &ex.inputs, Mode::Train(&mut rng))?;
                let l = tape.weighted_cross_entropy(out.probs, &ex.gold, &weights)?;
                let value = tape.scalar(l).as_f64();
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_no + 1,
                    });
                }
                total += value;
                tape.backward_scaled(l, scale, &mut grads)?;
            }
            if config.l2 > 0.0 {
                grads.add_l2(&model.params, T::of(config.l2));
            }
            if !grads.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no + 1,
                });
            }
            adam_step(&mut model.params, &grads, &mut adam, &adam_cfg);
        }
        let mut log = EpochLog {
            epoch,
            train_loss: total / train_set.len() as f64,
            dev_loss: None,
            dev_f1: None,
            learning_rate: adam_cfg.lr,
        };
        adam_cfg.lr *= config.lr_decay;

        if dev.is_empty() {
            report.best_epoch = epoch;
        } else {
            let eval = evaluate(model, dev, &loss.weights)?;
            if !eval.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: 0 });
            }
            log.dev_loss = Some(eval.loss);
            log.dev_f1 = Some(eval.class_f1());
            if best.as_ref().is_none_or(|(b, _)| eval.loss < *b) {
                best = Some((eval.loss, model.params.clone()));
                report.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        log::info!(
            "epoch {epoch}: train loss {:.5}, dev loss {}",
            log.train_loss,
            log.dev_loss.map_or("n/a".to_string(), |l| format!("{l:.5}"))
        );
        on_epoch(&log);
        report.epochs.push(log);
        if !dev.is_empty() && since_best >= config.patience {
            report.stopped_early = true;
            break;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(report)
}

/// Argmax label per triple.
pub fn predict_labels<T: Scalar>(model: &Model<T>, tokens: &[usize], inputs: &EdgeInputs) -> Result<Vec<EditLabel>> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new(&model.params);
    let out = forward(&mut tape, model, tokens, inputs, Mode::Eval)?;
    Ok(tape
        .to_rows(out.probs)
        .iter()
        .map(|r| EditLabel::ALL[argmax(r)])
        .collect())
}
