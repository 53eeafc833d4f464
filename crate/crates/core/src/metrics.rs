//! Evaluation: edit-label F1 and confusion, sentence-count match, aligned
//! BLEU-4 and length statistics.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::supervision::EditLabel;

/// Smoothing count for n-gram orders with no match.
pub const BLEU_EPSILON: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
    /// False when the class occurs neither in gold nor in predictions.
    pub defined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EditReport {
    pub classes: [ClassScore; 4],
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Row = gold class, column = predicted class, in percent.
    pub confusion: [[f64; 4]; 4],
    /// Gold classes with no occurrences (their confusion row is all zero).
    pub empty_rows: Vec<EditLabel>,
}

impl EditReport {
    pub fn f1(&self, label: EditLabel) -> f64 {
        self.classes[label.index()].f1
    }
}

fn counts(gold: &[EditLabel], pred: &[EditLabel]) -> Result<[[u64; 4]; 4]> {
    if gold.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "label length mismatch: {} gold vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Invalid("no labels to score".into()));
    }
    let mut m = [[0u64; 4]; 4];
    for (g, p) in gold.iter().zip(pred) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

/// Row-normalized confusion matrix in percent, plus the gold classes that
/// never occur.
pub fn confusion(gold: &[EditLabel], pred: &[EditLabel]) -> Result<([[f64; 4]; 4], Vec<EditLabel>)> {
    let m = counts(gold, pred)?;
    let mut out = [[0.0; 4]; 4];
    let mut empty = Vec::new();
    for (g, row) in m.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            empty.push(EditLabel::ALL[g]);
            continue;
        }
        for p in 0..4 {
            out[g][p] = 100.0 * row[p] as f64 / total as f64;
        }
    }
    Ok((out, empty))
}

pub fn edit_f1(gold: &[EditLabel], pred: &[EditLabel]) -> Result<EditReport> {
    let m = counts(gold, pred)?;
    let mut classes = [ClassScore::default(); 4];
    for (c, score) in classes.iter_mut().enumerate() {
        let tp = m[c][c];
        let support: u64 = m[c].iter().sum();
        let predicted: u64 = m.iter().map(|row| row[c]).sum();
        let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let recall = if support > 0 { tp as f64 / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        *score = ClassScore {
            precision,
            recall,
            f1,
            support,
            predicted,
            defined: support + predicted > 0,
        };
    }
    let correct: u64 = (0..4).map(|c| m[c][c]).sum();
    let accuracy = correct as f64 / gold.len() as f64;
    let defined: Vec<f64> = classes.iter().filter(|c| c.defined).map(|c| c.f1).collect();
    let macro_f1 = defined.iter().sum::<f64>() / defined.len() as f64;
    let (confusion, empty_rows) = confusion(gold, pred)?;
    Ok(EditReport {
        classes,
        micro_f1: accuracy,
        macro_f1,
        accuracy,
        confusion,
        empty_rows,
    })
}

/// True iff both sides have the same number of sentences.
pub fn match_ss<A, B>(gold: &[A], pred: &[B]) -> bool {
    gold.len() == pred.len()
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Sentence-level BLEU-4 with clipped n-gram precisions. An order with
/// candidate n-grams but no match scores `BLEU_EPSILON / total`; an order
/// where neither side has n-grams (very short sentences) is left out of
/// the geometric mean. An empty candidate scores 0.
pub fn bleu4<S: AsRef<str>, R: AsRef<str>>(candidate: &[S], reference: &[R]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=4 {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let total: usize = cand.values().sum();
        if total == 0 && refs.is_empty() {
            continue;
        }
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched == 0 {
            BLEU_EPSILON / total.max(1) as f64
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
        orders += 1;
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / orders as f64).exp()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Pairs taken in descending BLEU order.
    #[default]
    Greedy,
    /// Maximum total BLEU over one-to-one matchings.
    Optimal,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Alignment::Greedy),
            "optimal" => Ok(Alignment::Optimal),
            _ => Err(Error::Config(format!("unknown alignment {s:?} (expected greedy or optimal)"))),
        }
    }
}

/// Largest side for which the optimal matching is computed exactly.
const OPTIMAL_LIMIT: usize = 16;

/// Mean BLEU over aligned sentence pairs, where each unmatched sentence on
/// either side adds 0 to the sum and 1 to the count.
pub fn example_score<S: AsRef<str>, R: AsRef<str>>(gold: &[Vec<R>], pred: &[Vec<S>], alignment: Alignment) -> f64 {
    let denom = gold.len().max(pred.len());
    if denom == 0 {
        return 1.0;
    }
    let scores: Vec<Vec<f64>> = gold.iter().map(|g| pred.iter().map(|p| bleu4(p, g)).collect()).collect();
    let total = match alignment {
        Alignment::Optimal if gold.len().min(pred.len()) <= OPTIMAL_LIMIT => optimal_total(&scores),
        _ => greedy_total(&scores),
    };
    total / denom as f64
}

fn greedy_total(scores: &[Vec<f64>]) -> f64 {
    let mut pairs: Vec<(usize, usize)> = (0..scores.len())
        .flat_map(|g| (0..scores[g].len()).map(move |p| (g, p)))
        .collect();
    // Stable sort keeps (gold, pred) order among ties.
    pairs.sort_by(|a, b| scores[b.0][b.1].total_cmp(&scores[a.0][a.1]));
    let mut used_g = vec![false; scores.len()];
    let mut used_p = vec![false; scores.first().map_or(0, Vec::len)];
    let mut total = 0.0;
    for (g, p) in pairs {
        if !used_g[g] && !used_p[p] {
            used_g[g] = true;
            used_p[p] = true;
            total += scores[g][p];
        }
    }
    total
}

fn optimal_total(scores: &[Vec<f64>]) -> f64 {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    // Bitmask over the smaller side.
    let (small, large, at): (usize, usize, Box<dyn Fn(usize, usize) -> f64>) = if rows <= cols {
        (rows, cols, Box::new(|s, l| scores[s][l]))
    } else {
        (cols, rows, Box::new(|s, l| scores[l][s]))
    };
    let full = 1usize << small;
    let mut best = vec![f64::NEG_INFINITY; full];
    best[0] = 0.0;
    for l in 0..large {
        let prev = best.clone();
        for mask in 0..full {
            if prev[mask] == f64::NEG_INFINITY {
                continue;
            }
            for s in 0..small {
                if mask & (1 << s) == 0 {
                    let next = mask | (1 << s);
                    best[next] = best[next].max(prev[mask] + at(s, l));
                }
            }
        }
    }
    best.into_iter().fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleScore {
    pub id: String,
    pub gold_sentences: usize,
    pub predicted_sentences: usize,
    pub matched_count: bool,
    pub bleu: f64,
    pub empty_prediction: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub examples: usize,
    /// Percentage of examples with the gold number of sentences.
    pub match_ss: f64,
    /// Mean tokens per predicted sentence.
    pub tokens_per_sentence: f64,
    pub gold_tokens_per_sentence: f64,
    /// Mean example score in [0, 1].
    pub bleu: f64,
    /// Placeholder for externally computed BERTScore.
    pub bertscore: Option<f64>,
    pub alignment: Alignment,
    pub per_example: Vec<ExampleScore>,
}

/// One scored item: id, gold sentences, predicted sentences (tokenized).
pub struct ScoredPair<'a> {
    pub id: &'a str,
    pub gold: &'a [Vec<String>],
    pub pred: &'a [Vec<String>],
}

pub fn tokens_per_sentence<'a>(outputs: impl IntoIterator<Item = &'a [Vec<String>]>) -> f64 {
    let (tokens, sentences) = outputs.into_iter().fold((0usize, 0usize), |(t, s), out| {
        (t + out.iter().map(Vec::len).sum::<usize>(), s + out.len())
    });
    if sentences == 0 {
        0.0
    } else {
        tokens as f64 / sentences as f64
    }
}

pub fn corpus_report(pairs: &[ScoredPair<'_>], alignment: Alignment) -> DecompositionReport {
    let per_example: Vec<ExampleScore> = pairs
        .par_iter()
        .map(|p| ExampleScore {
            id: p.id.to_string(),
            gold_sentences: p.gold.len(),
            predicted_sentences: p.pred.len(),
            matched_count: match_ss(p.gold, p.pred),
            bleu: example_score(p.gold, p.pred, alignment),
            empty_prediction: p.pred.iter().all(Vec::is_empty),
        })
        .collect();
    let n = per_example.len().max(1) as f64;
    DecompositionReport {
        examples: per_example.len(),
        match_ss: 100.0 * per_example.iter().filter(|e| e.matched_count).count() as f64 / n,
        tokens_per_sentence: tokens_per_sentence(pairs.iter().map(|p| p.pred)),
        gold_tokens_per_sentence: tokens_per_sentence(pairs.iter().map(|p| p.gold)),
        bleu: per_example.iter().map(|e| e.bleu).sum::<f64>() / n,
        bertscore: None,
        alignment,
        per_example,
    }
}

pub fn write_edit_report(report: &EditReport, mut w: impl Write) -> std::io::Result<()> {
    for label in EditLabel::ALL {
        let c = &report.classes[label.index()];
        let note = if c.defined { "" } else { " (undefined)" };
        writeln!(
            w,
            "f1.{label}: {:.4}{note}\nprecision.{label}: {:.4}\nrecall.{label}: {:.4}\nsupport.{label}: {}",
            c.f1, c.precision, c.recall, c.support
        )?;
    }
    writeln!(w, "f1.micro: {:.4}\nf1.macro: {:.4}", report.micro_f1, report.macro_f1)?;
    for label in EditLabel::ALL {
        let row = report.confusion[label.index()];
        let note = if report.empty_rows.contains(&label) { " (empty)" } else { "" };
        writeln!(
            w,
            "confusion.{label}: {:.2} {:.2} {:.2} {:.2}{note}",
            row[0], row[1], row[2], row[3]
        )?;
    }
    Ok(())
}

pub fn write_decomposition_report(report: &DecompositionReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "examples: {}", report.examples)?;
    writeln!(w, "match_ss: {:.2}", report.match_ss)?;
    writeln!(w, "tokens_per_sentence: {:.2}", report.tokens_per_sentence)?;
    writeln!(w, "gold_tokens_per_sentence: {:.2}", report.gold_tokens_per_sentence)?;
    writeln!(w, "bleu4: {:.2}", 100.0 * report.bleu)?;
    match report.bertscore {
        Some(b) => writeln!(w, "bertscore: {b:.2}")?,
        None => writeln!(w, "bertscore: n/a")?,
    }
    Ok(())
}

/// One JSON object per example.
pub fn write_example_records(report: &DecompositionReport, mut w: impl Write) -> std::io::Result<()> {
    for e in &report.per_example {
        serde_json::to_writer(&mut w, e)?;
        writeln!(w)?;
    }
    Ok(())
}
