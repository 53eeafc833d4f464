//! Distant supervision: aligns source tokens with gold simple sentences and
//! derives an edit label for every edge triple.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, Example, Token};
use crate::error::{Error, Result};
use crate::wrg::{build_graph, EdgeLabel, WrgGraph};

/// Edit operation on one edge triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditLabel {
    /// Keep the edge.
    Accept,
    /// Remove the edge.
    Break,
    /// Remove the edge and copy the source word into the target's component.
    Copy,
    /// Remove the edge and drop the target word.
    Drop,
}

impl EditLabel {
    pub const ALL: [EditLabel; 4] = [EditLabel::Accept, EditLabel::Break, EditLabel::Copy, EditLabel::Drop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        ['A', 'B', 'C', 'D'][self.index()]
    }
}

impl fmt::Display for EditLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for EditLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(EditLabel::Accept),
            "B" => Ok(EditLabel::Break),
            "C" => Ok(EditLabel::Copy),
            "D" => Ok(EditLabel::Drop),
            _ => Err(Error::Invalid(format!("unknown edit label {s:?}"))),
        }
    }
}

/// Where each source token went in the gold output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenAlignment {
    /// `targets[i - 1]`: gold sentence ids that source token `i` aligns into.
    targets: Vec<BTreeSet<usize>>,
    /// Per gold sentence and output position, the aligned source index.
    output_sources: Vec<Vec<Option<usize>>>,
    /// Per gold sentence, output positions with no source token.
    insertions: Vec<Vec<usize>>,
    terminal_punct: Vec<bool>,
}

impl TokenAlignment {
    pub fn source_len(&self) -> usize {
        self.targets.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.output_sources.len()
    }

    pub fn targets(&self, index: usize) -> &BTreeSet<usize> {
        &self.targets[index - 1]
    }

    /// The lowest-id gold sentence containing the token.
    pub fn home(&self, index: usize) -> Option<usize> {
        self.targets[index - 1].first().copied()
    }

    pub fn is_dropped(&self, index: usize) -> bool {
        self.targets[index - 1].is_empty()
    }

    pub fn dropped(&self) -> BTreeSet<usize> {
        (1..=self.targets.len()).filter(|&i| self.is_dropped(i)).collect()
    }

    /// Source indices aligned into gold sentence `s`, ascending.
    pub fn aligned(&self, s: usize) -> Vec<usize> {
        self.output_sources[s].iter().flatten().copied().collect()
    }

    pub fn output_sources(&self, s: usize) -> &[Option<usize>] {
        &self.output_sources[s]
    }

    pub fn insertions(&self, s: usize) -> &[usize] {
        &self.insertions[s]
    }
}

fn same_word(a: &str, b: &str) -> bool {
    a == b || a.to_lowercase() == b.to_lowercase()
}

/// Longest common subsequence of `gold` within `source`, preferring the
/// rightmost source position for each matched gold token. Returns the
/// source index (0-based) for each gold position.
fn lcs_rightmost(source: &[&str], gold: &[&str]) -> Vec<Option<usize>> {
    let n = source.len();
    let m = gold.len();
    let mut dp = vec![vec![0u32; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            dp[i][j] = if same_word(source[i - 1], gold[j - 1]) {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    let mut out = vec![None; m];
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if same_word(source[i - 1], gold[j - 1]) && dp[i][j] == dp[i - 1][j - 1] + 1 {
            out[j - 1] = Some(i - 1);
            i -= 1;
            j -= 1;
        } else if dp[i - 1][j] == dp[i][j] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out
}

/// Aligns every gold sentence independently against the full source.
pub fn align_tokens(source: &[Token], gold_outputs: &[Vec<String>]) -> TokenAlignment {
    let src: Vec<&str> = source.iter().map(|t| t.surface.as_str()).collect();
    let mut targets = vec![BTreeSet::new(); src.len()];
    let mut output_sources = Vec::with_capacity(gold_outputs.len());
    let mut insertions = Vec::with_capacity(gold_outputs.len());
    let mut terminal_punct = Vec::with_capacity(gold_outputs.len());
    for (s, sentence) in gold_outputs.iter().enumerate() {
        let gold: Vec<&str> = sentence.iter().map(String::as_str).collect();
        let matched = lcs_rightmost(&src, &gold);
        let mut ins = Vec::new();
        let mut sources = Vec::with_capacity(matched.len());
        for (pos, m) in matched.iter().enumerate() {
            match m {
                Some(i) => {
                    targets[*i].insert(s);
                    sources.push(Some(i + 1));
                }
                None => {
                    ins.push(pos);
                    sources.push(None);
                }
            }
        }
        output_sources.push(sources);
        insertions.push(ins);
        terminal_punct.push(gold.last().is_some_and(|t| is_punctuation(t)));
    }
    TokenAlignment {
        targets,
        output_sources,
        insertions,
        terminal_punct,
    }
}

/// True iff every gold token, except a sentence-final punctuation mark,
/// has a source alignment.
pub fn is_reconstructible(alignment: &TokenAlignment) -> bool {
    (0..alignment.sentence_count()).all(|s| {
        let last = alignment.output_sources[s].len().checked_sub(1);
        alignment.insertions[s]
            .iter()
            .all(|&pos| Some(pos) == last && alignment.terminal_punct[s])
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelMode {
    /// Copy only when the source token is duplicated into the target's clause.
    #[default]
    Default,
    /// Every same-sentence dependency-only pair is a Copy.
    Literal,
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(LabelMode::Default),
            "literal" => Ok(LabelMode::Literal),
            _ => Err(Error::Config(format!("unknown label mode {s:?}"))),
        }
    }
}

/// A graph with one edit label per triple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    pub graph: WrgGraph,
    pub labels: Vec<EditLabel>,
    /// Vertices removed regardless of edge labels (gold-aligned drops).
    pub drop_set: BTreeSet<usize>,
}

impl LabeledGraph {
    pub fn label_of(&self, src: usize, tgt: usize) -> Option<EditLabel> {
        self.graph
            .triples
            .iter()
            .position(|t| t.src == src && t.tgt == tgt)
            .map(|i| self.labels[i])
    }

    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for &l in &self.labels {
            c.add(l);
        }
        c
    }
}

pub fn create_labels(graph: &WrgGraph, alignment: &TokenAlignment, mode: LabelMode) -> LabeledGraph {
    let labels = graph
        .triples
        .iter()
        .map(|t| {
            if alignment.is_dropped(t.tgt) {
                return EditLabel::Drop;
            }
            if alignment.is_dropped(t.src) {
                return EditLabel::Break;
            }
            match mode {
                LabelMode::Default => {
                    let (hs, ht) = (alignment.home(t.src), alignment.home(t.tgt));
                    if hs == ht {
                        EditLabel::Accept
                    } else if t.is_dependency_only()
                        && ht.is_some_and(|h| alignment.targets(t.src).contains(&h))
                    {
                        EditLabel::Copy
                    } else {
                        EditLabel::Break
                    }
                }
                LabelMode::Literal => {
                    let shared = !alignment.targets(t.src).is_disjoint(alignment.targets(t.tgt));
                    match (shared, t.has_neighbor()) {
                        (true, true) => EditLabel::Accept,
                        (true, false) => EditLabel::Copy,
                        (false, _) => EditLabel::Break,
                    }
                }
            }
        })
        .collect();
    LabeledGraph {
        graph: graph.clone(),
        labels,
        drop_set: alignment.dropped(),
    }
}

/// Per-class label totals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelCounts(pub [u64; 4]);

impl LabelCounts {
    pub fn add(&mut self, label: EditLabel) {
        self.0[label.index()] += 1;
    }

    pub fn merge(&mut self, other: &LabelCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Class shares in percent.
    pub fn percentages(&self) -> [f64; 4] {
        let total = self.total().max(1) as f64;
        self.0.map(|c| 100.0 * c as f64 / total)
    }
}

/// One line of the label cache.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRecord {
    pub example_id: String,
    pub src: usize,
    pub tgt: usize,
    pub labels: Vec<EdgeLabel>,
    pub edit: EditLabel,
}

pub fn label_records(example_id: &str, labeled: &LabeledGraph) -> Vec<LabelRecord> {
    labeled
        .graph
        .triples
        .iter()
        .zip(&labeled.labels)
        .map(|(t, &edit)| LabelRecord {
            example_id: example_id.to_string(),
            src: t.src,
            tgt: t.tgt,
            labels: t.labels.clone(),
            edit,
        })
        .collect()
}

/// Writes `example_id \t src \t tgt \t labelset \t edit` lines.
pub fn write_label_cache<'a>(records: impl IntoIterator<Item = &'a LabelRecord>, mut w: impl Write) -> std::io::Result<()> {
    for r in records {
        let set: Vec<&str> = r.labels.iter().map(EdgeLabel::tag).collect();
        writeln!(w, "{}\t{}\t{}\t{}\t{}", r.example_id, r.src, r.tgt, set.join(","), r.edit)?;
    }
    Ok(())
}

pub fn parse_label_cache(text: &str) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Format {
            path: "label cache".into(),
            line: n + 1,
            message: msg.to_string(),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad("expected 5 tab-separated columns"));
        }
        let src = cols[1].parse().map_err(|_| bad("bad src index"))?;
        let tgt = cols[2].parse().map_err(|_| bad("bad tgt index"))?;
        let labels = cols[3]
            .split(',')
            .map(EdgeLabel::from_str)
            .collect::<Result<Vec<_>>>()
            .map_err(|_| bad("bad label set"))?;
        let edit = cols[4].parse().map_err(|_| bad("bad edit label"))?;
        out.push(LabelRecord {
            example_id: cols[0].to_string(),
            src,
            tgt,
            labels,
            edit,
        });
    }
    Ok(out)
}

/// A labeled corpus example.
#[derive(Clone, Debug)]
pub struct LabeledExample {
    pub id: String,
    pub labeled: LabeledGraph,
    pub reconstructible: bool,
}

/// Labels every example that has a parse; the rest are reported with a
/// reason.
#[derive(Clone, Debug, Default)]
pub struct LabeledCorpus {
    pub items: Vec<LabeledExample>,
    pub skipped: Vec<(String, String)>,
}

impl LabeledCorpus {
    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for item in &self.items {
            c.merge(&item.labeled.counts());
        }
        c
    }
}

pub fn label_corpus(examples: &[Example], mode: LabelMode) -> LabeledCorpus {
    let mut out = LabeledCorpus::default();
    for ex in examples {
        let Some(parse) = &ex.parse else {
            out.skipped.push((ex.id.clone(), "no parse".into()));
            continue;
        };
        match build_graph(&ex.source, parse) {
            Ok(graph) => {
                let alignment = align_tokens(&ex.source, &ex.gold_outputs);
                out.items.push(LabeledExample {
                    id: ex.id.clone(),
                    labeled: create_labels(&graph, &alignment, mode),
                    reconstructible: is_reconstructible(&alignment),
                });
            }
            Err(e) => out.skipped.push((ex.id.clone(), e.to_string())),
        }
    }
    out
}
