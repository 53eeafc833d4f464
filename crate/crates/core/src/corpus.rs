//! Parallel corpora, CoNLL-U parses and word vectors.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Target-sentence separator used by WikiSplit-derived corpora.
pub const DEFAULT_SEPARATOR: &str = "<::::>";

/// A word with its 1-based position in the sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub index: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, index: usize) -> Self {
        Token {
            surface: surface.into(),
            index,
        }
    }
}

/// Splits pre-tokenized text on whitespace and numbers the tokens from 1.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .enumerate()
        .map(|(i, s)| Token::new(s, i + 1))
        .collect()
}

/// True for tokens made only of punctuation characters.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty()
        && token.chars().all(|c| {
            c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '—' | '–' | '…' | '«' | '»')
        })
}

/// Dependency arc `head → dependent`; `head == 0` is the root.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Arc {
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
    /// The arc comes only from the DEPS column.
    pub enhanced: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DependencyParse {
    pub arcs: Vec<Arc>,
    pub pos_tags: Vec<String>,
    /// Per token `key=value` features; empty when FEATS is `_`.
    pub morph_features: Vec<Vec<(String, String)>>,
}

impl DependencyParse {
    pub fn len(&self) -> usize {
        self.pos_tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos_tags.is_empty()
    }

    pub fn has_features(&self) -> bool {
        self.morph_features.iter().any(|f| !f.is_empty())
    }

    pub fn feature(&self, index: usize, key: &str) -> Option<&str> {
        self.morph_features
            .get(index.checked_sub(1)?)?
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// One training or evaluation record.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub source: Vec<Token>,
    pub parse: Option<DependencyParse>,
    pub gold_outputs: Vec<Vec<String>>,
}

impl Example {
    pub fn surfaces(&self) -> Vec<&str> {
        self.source.iter().map(|t| t.surface.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

/// Result of reading a parallel corpus: good lines and per-line errors.
#[derive(Clone, Debug, Default)]
pub struct ParallelCorpus {
    pub examples: Vec<Example>,
    pub errors: Vec<FormatError>,
}

/// Parses `source<TAB>target1 <sep> target2 …` lines. Example ids are the
/// 1-based physical line numbers, matching the `sent_id`s of the CoNLL-U
/// companion file.
pub fn parse_parallel_corpus(text: &str, separator: &str) -> ParallelCorpus {
    let mut corpus = ParallelCorpus::default();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let Some((source, targets)) = line.split_once('\t') else {
            corpus.errors.push(FormatError {
                line: line_no,
                message: "missing TAB between source and targets".into(),
            });
            continue;
        };
        let gold_outputs: Vec<Vec<String>> = targets
            .split(separator)
            .map(|t| t.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|t| !t.is_empty())
            .collect();
        if gold_outputs.is_empty() {
            corpus.errors.push(FormatError {
                line: line_no,
                message: "empty target list".into(),
            });
            continue;
        }
        let source = tokenize(source);
        if source.is_empty() {
            corpus.errors.push(FormatError {
                line: line_no,
                message: "empty source sentence".into(),
            });
            continue;
        }
        corpus.examples.push(Example {
            id: line_no.to_string(),
            source,
            parse: None,
            gold_outputs,
        });
    }
    corpus
}

pub fn read_parallel_corpus(path: &Path, separator: &str) -> Result<ParallelCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_parallel_corpus(&text, separator))
}

/// Renders one corpus line (without newline).
pub fn format_corpus_line(source: &[Token], targets: &[Vec<String>], separator: &str) -> String {
    let src: Vec<&str> = source.iter().map(|t| t.surface.as_str()).collect();
    let tgt: Vec<String> = targets.iter().map(|t| t.join(" ")).collect();
    format!("{}\t{}", src.join(" "), tgt.join(&format!(" {separator} ")))
}

pub fn write_parallel_corpus(examples: &[Example], separator: &str, mut w: impl Write) -> std::io::Result<()> {
    for ex in examples {
        writeln!(w, "{}", format_corpus_line(&ex.source, &ex.gold_outputs, separator))?;
    }
    Ok(())
}

/// A sentence read from CoNLL-U: id, word forms and parse.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub parse: DependencyParse,
}

fn parse_feats(field: &str) -> Vec<(String, String)> {
    if field == "_" {
        return Vec::new();
    }
    field
        .split('|')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

struct PendingSentence {
    id: Option<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn finish_sentence(path: &Path, pending: PendingSentence, ordinal: usize) -> Result<ParsedSentence> {
    let len = pending.rows.len();
    let mut tokens = Vec::with_capacity(len);
    let mut parse = DependencyParse::default();
    let mut seen = HashSet::new();
    for (expected, (line, cols)) in pending.rows.iter().enumerate() {
        let index: usize = cols[0]
            .parse()
            .map_err(|_| Error::format(path, *line, format!("bad token id {:?}", cols[0])))?;
        if index != expected + 1 {
            return Err(Error::format(path, *line, format!("token id {index} out of sequence")));
        }
        tokens.push(Token::new(cols[1].clone(), index));
        parse.pos_tags.push(cols[3].clone());
        parse.morph_features.push(parse_feats(&cols[5]));

        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::format(path, *line, format!("bad head {:?}", cols[6])))?;
        if head > len {
            return Err(Error::format(
                path,
                *line,
                format!("head index {head} out of range for {len} tokens"),
            ));
        }
        let basic = Arc {
            head,
            dependent: index,
            relation: cols[7].clone(),
            enhanced: false,
        };
        seen.insert((basic.head, basic.dependent, basic.relation.clone()));
        parse.arcs.push(basic);
    }
    // Enhanced arcs after all basic ones, so `enhanced` marks DEPS-only arcs.
    for (line, cols) in &pending.rows {
        if cols[8] == "_" {
            continue;
        }
        let dependent: usize = cols[0].parse().unwrap();
        for dep in cols[8].split('|') {
            let Some((head, rel)) = dep.split_once(':') else {
                return Err(Error::format(path, *line, format!("bad DEPS entry {dep:?}")));
            };
            // Arcs to empty nodes (decimal ids) are not representable here.
            if head.contains('.') {
                continue;
            }
            let head: usize = head
                .parse()
                .map_err(|_| Error::format(path, *line, format!("bad DEPS head {head:?}")))?;
            if head > len {
                return Err(Error::format(
                    path,
                    *line,
                    format!("DEPS head {head} out of range for {len} tokens"),
                ));
            }
            if seen.insert((head, dependent, rel.to_string())) {
                parse.arcs.push(Arc {
                    head,
                    dependent,
                    relation: rel.to_string(),
                    enhanced: true,
                });
            }
        }
    }
    Ok(ParsedSentence {
        id: pending.id.unwrap_or_else(|| ordinal.to_string()),
        tokens,
        parse,
    })
}

/// Reads a CoNLL-U document. Multiword-token ranges and empty nodes are
/// skipped; sentences without `# sent_id` get their 1-based ordinal.
pub fn parse_conllu(text: &str, path: &Path) -> Result<Vec<ParsedSentence>> {
    let mut out = Vec::new();
    let mut pending: Option<PendingSentence> = None;
    let new_pending = || PendingSentence {
        id: None,
        rows: Vec::new(),
    };
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if let Some(p) = pending.take() {
                if !p.rows.is_empty() {
                    let ordinal = out.len() + 1;
                    out.push(finish_sentence(path, p, ordinal)?);
                }
            }
            continue;
        }
        let p = pending.get_or_insert_with(new_pending);
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    p.id = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cols.len() != 10 {
            return Err(Error::format(
                path,
                line_no,
                format!("expected 10 columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        p.rows.push((line_no, cols));
    }
    if let Some(p) = pending.take() {
        if !p.rows.is_empty() {
            let ordinal = out.len() + 1;
            out.push(finish_sentence(path, p, ordinal)?);
        }
    }
    Ok(out)
}

pub fn read_conllu(path: &Path) -> Result<Vec<ParsedSentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text, path)
}

/// Indexes parsed sentences by id, rejecting duplicates.
pub fn index_parses(parses: Vec<ParsedSentence>) -> Result<HashMap<String, ParsedSentence>> {
    let mut map = HashMap::with_capacity(parses.len());
    for p in parses {
        if map.contains_key(&p.id) {
            return Err(Error::DuplicateParseId(p.id));
        }
        map.insert(p.id.clone(), p);
    }
    Ok(map)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExclusionReason {
    MissingParse,
    LengthMismatch { parse: usize, source: usize },
}

impl std::fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExclusionReason::MissingParse => write!(f, "missing parse"),
            ExclusionReason::LengthMismatch { parse, source } => {
                write!(f, "length mismatch (parse {parse}, source {source})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exclusion {
    pub id: String,
    pub reason: ExclusionReason,
}

#[derive(Clone, Debug, Default)]
pub struct Joined {
    pub examples: Vec<Example>,
    pub excluded: Vec<Exclusion>,
}

/// Joins examples with their parses by id.
pub fn attach_parses(examples: Vec<Example>, parses: Vec<ParsedSentence>) -> Result<Joined> {
    let index = index_parses(parses)?;
    let mut joined = Joined::default();
    for mut ex in examples {
        match index.get(&ex.id) {
            None => joined.excluded.push(Exclusion {
                id: ex.id,
                reason: ExclusionReason::MissingParse,
            }),
            Some(p) if p.tokens.len() != ex.source.len() => joined.excluded.push(Exclusion {
                id: ex.id,
                reason: ExclusionReason::LengthMismatch {
                    parse: p.tokens.len(),
                    source: ex.source.len(),
                },
            }),
            Some(p) => {
                ex.parse = Some(p.parse.clone());
                joined.examples.push(ex);
            }
        }
    }
    Ok(joined)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Reject,
    /// No morphological features were available; kept unchecked.
    KeepUnverified,
}

/// Number of tokens carrying `VerbForm=Fin`.
pub fn count_finite_verbs(parse: &DependencyParse) -> usize {
    (1..=parse.len())
        .filter(|&i| parse.feature(i, "VerbForm") == Some("Fin"))
        .count()
}

/// Keeps an example iff its finite-verb count equals its gold sentence count.
pub fn filter_tensed_match(example: &Example) -> FilterDecision {
    match &example.parse {
        Some(parse) if parse.has_features() => {
            if count_finite_verbs(parse) == example.gold_outputs.len() {
                FilterDecision::Keep
            } else {
                FilterDecision::Reject
            }
        }
        _ => {
            log::warn!("example {}: no FEATS, tensed-clause filter skipped", example.id);
            FilterDecision::KeepUnverified
        }
    }
}

/// Token ids plus an `|V|×E` embedding table. Real tokens come first in
/// order of first appearance, then UNKNOWN, then PADDING.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    embeddings: Tensor<f32>,
}

impl Vocabulary {
    pub const UNKNOWN: &'static str = "<unk>";
    pub const PADDING: &'static str = "<pad>";

    /// Rebuilds a vocabulary from its token list (UNKNOWN and PADDING
    /// excluded) and an embedding table.
    pub fn from_parts(tokens: Vec<String>, embeddings: Tensor<f32>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            ids.insert(t.clone(), i);
        }
        if embeddings.dims2().0 != tokens.len() + 2 {
            return Err(Error::Invalid(format!(
                "embedding table has {} rows for {} tokens",
                embeddings.dims2().0,
                tokens.len() + 2
            )));
        }
        Ok(Vocabulary {
            tokens,
            ids,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unknown_id(&self) -> usize {
        self.tokens.len()
    }

    pub fn padding_id(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(self.unknown_id())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        if id < self.tokens.len() {
            &self.tokens[id]
        } else if id == self.unknown_id() {
            Self::UNKNOWN
        } else {
            Self::PADDING
        }
    }

    /// Real tokens, excluding UNKNOWN and PADDING.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dims2().1
    }

    pub fn embeddings(&self) -> &Tensor<f32> {
        &self.embeddings
    }

    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.id(t)).collect()
    }
}

/// Word vectors read from a `token v1 … vE` text file.
#[derive(Clone, Debug, Default)]
pub struct WordVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f32>>,
}

pub fn parse_word_vectors(text: &str, path: &Path) -> Result<WordVectors> {
    let mut out = WordVectors::default();
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, n + 1, format!("bad vector value: {e}")))?;
        if out.dim == 0 {
            out.dim = values.len();
        }
        if values.len() != out.dim || values.is_empty() {
            return Err(Error::format(
                path,
                n + 1,
                format!("vector width {} differs from {}", values.len(), out.dim),
            ));
        }
        out.vectors.entry(token.to_string()).or_insert(values);
    }
    Ok(out)
}

pub fn read_word_vectors(path: &Path) -> Result<WordVectors> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_word_vectors(&text, path)
}

// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub(crate) fn text_seed(text: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Pseudo-random vector determined by the token text and `seed`.
pub fn seeded_vector(token: &str, dim: usize, seed: u64, scale: f32) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(text_seed(token, seed));
    (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Scale of pseudo-random vectors for tokens without a pretrained vector.
pub const OOV_SCALE: f32 = 0.5;

/// Builds the vocabulary over all source tokens. Tokens found in `vectors`
/// (exactly, or lowercased) copy that row; others get a seeded vector.
/// UNKNOWN is the mean of loaded rows (seeded when none load); PADDING is
/// zero. `dim` is used only when `vectors` is absent.
pub fn build_vocab(examples: &[Example], vectors: Option<&WordVectors>, dim: usize, seed: u64) -> Vocabulary {
    let mut tokens = Vec::new();
    let mut ids = HashMap::new();
    for ex in examples {
        for t in &ex.source {
            if !ids.contains_key(&t.surface) {
                ids.insert(t.surface.clone(), tokens.len());
                tokens.push(t.surface.clone());
            }
        }
    }
    let dim = vectors.map_or(dim, |v| v.dim);
    let mut data = Vec::with_capacity((tokens.len() + 2) * dim);
    let mut loaded = 0usize;
    let mut sum = vec![0f64; dim];
    for t in &tokens {
        let found = vectors.and_then(|v| v.vectors.get(t).or_else(|| v.vectors.get(&t.to_lowercase())));
        match found {
            Some(row) => {
                loaded += 1;
                for (s, &x) in sum.iter_mut().zip(row) {
                    *s += x as f64;
                }
                data.extend_from_slice(row);
            }
            None => data.extend(seeded_vector(t, dim, seed, OOV_SCALE)),
        }
    }
    if loaded > 0 {
        data.extend(sum.iter().map(|s| (s / loaded as f64) as f32));
    } else {
        data.extend(seeded_vector(Vocabulary::UNKNOWN, dim, seed, OOV_SCALE));
    }
    data.extend(std::iter::repeat(0f32).take(dim));
    let embeddings = Tensor::new(vec![tokens.len() + 2, dim], data).expect("consistent table");
    Vocabulary {
        tokens,
        ids,
        embeddings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SOKUHI: &str = "Sokuhi was born in Fujian and was ordained at 17 .\tSokuhi was born in Fujian . <::::> Sokuhi was ordained at 17 .";

    fn p() -> &'static Path {
        Path::new("test.conllu")
    }

    #[test]
    fn reads_simple_and_figure_lines() {
        let c = parse_parallel_corpus(&format!("A , and B . \t A . <::::> B .\n{SOKUHI}\n"), DEFAULT_SEPARATOR);
        assert!(c.errors.is_empty());
        assert_eq!(c.examples[0].source.len(), 5);
        assert_eq!(c.examples[0].gold_outputs.len(), 2);
        assert_eq!(c.examples[1].source.len(), 11);
        assert_eq!(c.examples[1].gold_outputs[1], vec!["Sokuhi", "was", "ordained", "at", "17", "."]);
        assert_eq!(c.examples[1].id, "2");
        assert_eq!(c.examples[1].source[10], Token::new(".", 11));
    }

    #[test]
    fn missing_tab_and_empty_targets_are_line_errors() {
        let c = parse_parallel_corpus("no tab here\nok .\tok .\nx .\t <::::> \n", DEFAULT_SEPARATOR);
        assert_eq!(c.examples.len(), 1);
        assert_eq!(c.errors.len(), 2);
        assert_eq!(c.errors[0].line, 1);
        assert_eq!(c.errors[1].line, 3);
        assert_eq!(c.errors[1].message, "empty target list");
    }

    #[test]
    fn custom_separator() {
        let c = parse_parallel_corpus("a b .\ta . || b .", "||");
        assert_eq!(c.examples[0].gold_outputs.len(), 2);
    }

    proptest! {
        #[test]
        fn corpus_roundtrip_is_byte_exact(
            lines in prop::collection::vec(
                (prop::collection::vec("[a-zA-Z.,]{1,6}", 1..8),
                 prop::collection::vec(prop::collection::vec("[a-z.]{1,5}", 1..5), 1..4)),
                1..10)
        ) {
            let mut text = String::new();
            for (src, tgts) in &lines {
                let tgts: Vec<String> = tgts.iter().map(|t| t.join(" ")).collect();
                text.push_str(&format!("{}\t{}\n", src.join(" "), tgts.join(" <::::> ")));
            }
            let c = parse_parallel_corpus(&text, DEFAULT_SEPARATOR);
            prop_assert!(c.errors.is_empty());
            let mut out = Vec::new();
            write_parallel_corpus(&c.examples, DEFAULT_SEPARATOR, &mut out).unwrap();
            prop_assert_eq!(String::from_utf8(out).unwrap(), text.clone());
            // CRLF input normalizes to the same examples.
            let crlf = text.replace('\n', "\r\n");
            prop_assert_eq!(parse_parallel_corpus(&crlf, DEFAULT_SEPARATOR).examples, c.examples);
        }
    }

    const TWO_TOKENS: &str = "# sent_id = s1\n1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\tleft\tleave\tVERB\t_\tVerbForm=Fin\t0\troot\t_\t_\n\n";

    #[test]
    fn conllu_direct_column_mapping() {
        let s = parse_conllu(TWO_TOKENS, p()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].id, "s1");
        let arcs: Vec<_> = s[0].parse.arcs.iter().map(|a| (a.head, a.dependent, a.relation.as_str())).collect();
        assert_eq!(arcs, vec![(2, 1, "nsubj"), (0, 2, "root")]);
        // DEPS all "_": no enhanced arcs beyond the basic set.
        assert!(s[0].parse.arcs.iter().all(|a| !a.enhanced));
        assert_eq!(s[0].parse.feature(2, "VerbForm"), Some("Fin"));
        assert_eq!(s[0].parse.pos_tags, vec!["PRON", "VERB"]);
    }

    #[test]
    fn conllu_merges_enhanced_arcs() {
        let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/figure1.conllu")).unwrap();
        let s = parse_conllu(&text, p()).unwrap();
        let parse = &s[0].parse;
        assert_eq!(parse.arcs.iter().filter(|a| !a.enhanced).count(), 11);
        let enhanced: Vec<_> = parse.arcs.iter().filter(|a| a.enhanced).collect();
        assert_eq!(enhanced.len(), 1);
        assert_eq!((enhanced[0].head, enhanced[0].dependent, enhanced[0].relation.as_str()), (8, 1, "nsubj"));
    }

    #[test]
    fn conllu_errors_carry_line_numbers() {
        let bad_cols = "# sent_id = 1\n1\tHe\the\tPRON\t_\t_\t0\troot\t_\n";
        match parse_conllu(bad_cols, p()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let bad_head = "# sent_id = 1\n1\tHe\the\tPRON\t_\t_\t0\troot\t_\t_\n2\tleft\tleave\tVERB\t_\t_\t7\tdep\t_\t_\n";
        match parse_conllu(bad_head, p()) {
            Err(Error::Format { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("out of range"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conllu_skips_multiword_ranges() {
        let text = "# sent_id = 9\n1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_\n2\tn't\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n";
        let s = parse_conllu(text, p()).unwrap();
        assert_eq!(s[0].tokens.len(), 2);
    }

    fn ex(id: &str, n: usize) -> Example {
        Example {
            id: id.into(),
            source: (1..=n).map(|i| Token::new(format!("w{i}"), i)).collect(),
            parse: None,
            gold_outputs: vec![vec!["w1".into()]],
        }
    }

    fn ps(id: &str, n: usize) -> ParsedSentence {
        ParsedSentence {
            id: id.into(),
            tokens: (1..=n).map(|i| Token::new(format!("w{i}"), i)).collect(),
            parse: DependencyParse {
                arcs: vec![],
                pos_tags: vec!["X".into(); n],
                morph_features: vec![vec![]; n],
            },
        }
    }

    #[test]
    fn attach_all_matching() {
        let j = attach_parses(vec![ex("1", 2), ex("2", 3), ex("3", 1)], vec![ps("3", 1), ps("1", 2), ps("2", 3)]).unwrap();
        assert_eq!(j.examples.len(), 3);
        assert!(j.excluded.is_empty());
        assert!(j.examples.iter().all(|e| e.parse.is_some()));
    }

    #[test]
    fn attach_reports_mismatch_and_missing() {
        let j = attach_parses(vec![ex("1", 11), ex("2", 3)], vec![ps("1", 10)]).unwrap();
        assert_eq!(j.examples.len(), 0);
        assert_eq!(j.excluded.len(), 2);
        assert_eq!(j.excluded[0].reason.to_string(), "length mismatch (parse 10, source 11)");
        assert_eq!(j.excluded[1].reason, ExclusionReason::MissingParse);
    }

    #[test]
    fn attach_rejects_duplicate_ids() {
        let err = attach_parses(vec![ex("1", 1)], vec![ps("1", 1), ps("1", 1)]).unwrap_err();
        assert_eq!(err.to_string(), "duplicate parse id: 1");
    }

    proptest! {
        #[test]
        fn attach_never_drops_records(lens in prop::collection::vec((1usize..6, 0usize..7), 0..20)) {
            let examples: Vec<_> = lens.iter().enumerate().map(|(i, &(n, _))| ex(&i.to_string(), n)).collect();
            let parses: Vec<_> = lens.iter().enumerate().filter(|(_, &(_, m))| m > 0).map(|(i, &(_, m))| ps(&i.to_string(), m)).collect();
            let j = attach_parses(examples, parses).unwrap();
            prop_assert_eq!(j.examples.len() + j.excluded.len(), lens.len());
        }
    }

    #[test]
    fn vocab_construction_rule() {
        let examples = vec![Example {
            id: "1".into(),
            source: tokenize("a b a"),
            parse: None,
            gold_outputs: vec![],
        }];
        let vectors = parse_word_vectors("a 0.1 0.2\nzzz 0.3 0.4\n", p()).unwrap();
        let v = build_vocab(&examples, Some(&vectors), 0, 7);
        assert_eq!(v.len(), 4);
        assert_eq!(v.tokens(), &["a", "b"]);
        assert_eq!(v.embeddings().row(v.id("a")), &[0.1, 0.2]);
        assert_eq!(v.embeddings().row(v.id("b")), &seeded_vector("b", 2, 7, OOV_SCALE)[..]);
        assert_eq!(v.embeddings().row(v.unknown_id()), &[0.1, 0.2]);
        assert_eq!(v.embeddings().row(v.padding_id()), &[0.0, 0.0]);
        assert_eq!(v.id("never-seen"), v.unknown_id());
        assert_ne!(v.unknown_id(), v.id("a"));

        let again = build_vocab(&examples, Some(&vectors), 0, 7);
        let bits = |v: &Vocabulary| v.embeddings().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&v), bits(&again));
    }

    #[test]
    fn vector_width_errors_name_the_line() {
        let err = parse_word_vectors("the 0.1 0.2\nof 0.3\n", p()).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let ok = parse_word_vectors("the 0.1 0.2\n", p()).unwrap();
        assert_eq!(ok.vectors["the"], vec![0.1, 0.2]);
    }

    fn with_feats(fin: usize, golds: usize, feats: bool) -> Example {
        let n = 4;
        let morph = (0..n)
            .map(|i| {
                if !feats {
                    vec![]
                } else if i < fin {
                    vec![("VerbForm".to_string(), "Fin".to_string())]
                } else {
                    vec![("VerbForm".to_string(), "Inf".to_string())]
                }
            })
            .collect();
        Example {
            id: "x".into(),
            source: tokenize("I like to run"),
            parse: Some(DependencyParse {
                arcs: vec![],
                pos_tags: vec!["X".into(); n],
                morph_features: morph,
            }),
            gold_outputs: vec![vec!["x".into()]; golds],
        }
    }

    #[test]
    fn tensed_filter() {
        assert_eq!(filter_tensed_match(&with_feats(1, 2, true)), FilterDecision::Reject);
        assert_eq!(filter_tensed_match(&with_feats(0, 1, true)), FilterDecision::Reject);
        assert_eq!(filter_tensed_match(&with_feats(2, 2, true)), FilterDecision::Keep);
        assert_eq!(filter_tensed_match(&with_feats(0, 2, false)), FilterDecision::KeepUnverified);
    }
}
