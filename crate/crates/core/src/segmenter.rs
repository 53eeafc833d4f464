//! Executes edits on a word relation graph, splits it into connected
//! components and renders one simple sentence per component.

use std::collections::BTreeSet;
use std::io::Write;

use crate::corpus::{is_punctuation, Token};
use crate::supervision::{EditLabel, LabeledGraph};
use crate::wrg::WrgGraph;

/// A graph after edits: surviving undirected edges, pending copies and
/// dropped vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditedGraph {
    pub vertex_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub copies: Vec<(usize, usize)>,
    pub dropped: BTreeSet<usize>,
}

pub fn apply_edits(graph: &WrgGraph, labels: &[EditLabel], drop_set: &BTreeSet<usize>) -> EditedGraph {
    assert_eq!(graph.triples.len(), labels.len(), "one label per triple");
    let mut dropped = drop_set.clone();
    let mut copies = Vec::new();
    let mut kept = Vec::new();
    for (t, &label) in graph.triples.iter().zip(labels) {
        match label {
            EditLabel::Accept => kept.push((t.src, t.tgt)),
            EditLabel::Break => {}
            EditLabel::Copy => copies.push((t.src, t.tgt)),
            EditLabel::Drop => {
                dropped.insert(t.tgt);
            }
        }
    }
    kept.retain(|(a, b)| !dropped.contains(a) && !dropped.contains(b));
    EditedGraph {
        vertex_count: graph.len(),
        edges: kept,
        copies,
        dropped,
    }
}

/// Connected components over undirected edges, skipping dropped vertices.
/// Components are sorted internally and ordered by their minimum index.
pub fn find_components(vertex_count: usize, edges: &[(usize, usize)], dropped: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    assert!(vertex_count < (u32::MAX - 1) as usize, "graph too large");
    // CSR adjacency over 1-based vertex ids, u32 to halve the working set.
    // Counts are summed into end offsets, then decremented while filling,
    // leaving offsets[v]..offsets[v + 1] as v's neighbor range.
    let mut offsets = vec![0u32; vertex_count + 2];
    for &(a, b) in edges {
        offsets[a] += 1;
        offsets[b] += 1;
    }
    for i in 1..offsets.len() {
        offsets[i] += offsets[i - 1];
    }
    let mut adjacency = vec![0u32; 2 * edges.len()];
    for &(a, b) in edges {
        offsets[a] -= 1;
        adjacency[offsets[a] as usize] = b as u32;
        offsets[b] -= 1;
        adjacency[offsets[b] as usize] = a as u32;
    }

    const UNSEEN: u32 = u32::MAX;
    const DROPPED: u32 = u32::MAX - 1;
    let mut component_of = vec![UNSEEN; vertex_count + 1];
    for &d in dropped {
        if d <= vertex_count {
            component_of[d] = DROPPED;
        }
    }
    let mut count = 0u32;
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack: Vec<u32> = Vec::new();
    for start in 1..=vertex_count {
        if component_of[start] != UNSEEN {
            continue;
        }
        component_of[start] = count;
        stack.push(start as u32);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            let v = v as usize;
            for &w in &adjacency[offsets[v] as usize..offsets[v + 1] as usize] {
                if component_of[w as usize] == UNSEEN {
                    component_of[w as usize] = count;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
        count += 1;
    }
    // Bucketing in vertex order yields sorted components without a sort;
    // ids were assigned in order of each component's smallest vertex.
    let mut components: Vec<Vec<usize>> = sizes.into_iter().map(Vec::with_capacity).collect();
    for v in 1..=vertex_count {
        if component_of[v] < DROPPED {
            components[component_of[v] as usize].push(v);
        }
    }
    components
}

/// Why a component or copy was not used as-is.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SegmentFlag {
    CopyTargetDropped { src: usize, tgt: usize },
    CopySourceDropped { src: usize, tgt: usize },
    PunctuationDiscarded(Vec<usize>),
    PeriodAppended { sentence: usize },
    /// Nothing survived; the source sentence is emitted unchanged.
    EmptyFallback,
}

/// Inserts each copy source into its target's component. Components keep
/// their position, so output order follows the pre-copy minimum index.
pub fn apply_copies(
    components: &mut [Vec<usize>],
    copies: &[(usize, usize)],
    dropped: &BTreeSet<usize>,
    flags: &mut Vec<SegmentFlag>,
) {
    for &(src, tgt) in copies {
        if dropped.contains(&tgt) {
            flags.push(SegmentFlag::CopyTargetDropped { src, tgt });
            continue;
        }
        if dropped.contains(&src) {
            flags.push(SegmentFlag::CopySourceDropped { src, tgt });
            continue;
        }
        if let Some(c) = components.iter_mut().find(|c| c.binary_search(&tgt).is_ok()) {
            if let Err(pos) = c.binary_search(&src) {
                c.insert(pos, src);
            }
        }
    }
}

/// Decomposed output for one input sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecompositionResult {
    pub sentences: Vec<String>,
    /// Source indices behind each sentence, ascending.
    pub provenance: Vec<Vec<usize>>,
    pub flags: Vec<SegmentFlag>,
}

impl DecompositionResult {
    pub fn tokenized(&self) -> Vec<Vec<String>> {
        self.sentences
            .iter()
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .collect()
    }
}

/// Renders components (already in output order) as sentences.
pub fn render_sentences(components: &[Vec<usize>], tokens: &[Token], flags: Vec<SegmentFlag>) -> DecompositionResult {
    let mut out = DecompositionResult {
        flags,
        ..Default::default()
    };
    for component in components {
        let mut indices = component.clone();
        indices.sort_unstable();
        indices.dedup();
        let words: Vec<&str> = indices.iter().map(|&i| tokens[i - 1].surface.as_str()).collect();
        if words.iter().all(|w| is_punctuation(w)) {
            out.flags.push(SegmentFlag::PunctuationDiscarded(indices));
            continue;
        }
        let mut sentence = words.join(" ");
        if !words.last().is_some_and(|w| is_terminal(w)) {
            sentence.push_str(" .");
            out.flags.push(SegmentFlag::PeriodAppended {
                sentence: out.sentences.len(),
            });
        }
        out.sentences.push(sentence);
        out.provenance.push(indices);
    }
    out
}

fn is_terminal(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

/// Applies `labels` to `graph` and renders the resulting simple sentences.
pub fn segment(graph: &WrgGraph, labels: &[EditLabel], drop_set: &BTreeSet<usize>) -> DecompositionResult {
    let edited = apply_edits(graph, labels, drop_set);
    let mut components = find_components(edited.vertex_count, &edited.edges, &edited.dropped);
    let mut flags = Vec::new();
    apply_copies(&mut components, &edited.copies, &edited.dropped, &mut flags);
    let mut result = render_sentences(&components, &graph.vertices, flags);
    if result.sentences.is_empty() {
        let all: Vec<usize> = (1..=graph.len()).collect();
        let mut fallback = render_sentences(&[all], &graph.vertices, Vec::new());
        if !fallback.sentences.is_empty() {
            result.sentences = fallback.sentences;
            result.provenance = fallback.provenance;
            result.flags.append(&mut fallback.flags);
            result.flags.push(SegmentFlag::EmptyFallback);
        }
    }
    result
}

pub fn segment_labeled(labeled: &LabeledGraph) -> DecompositionResult {
    segment(&labeled.graph, &labeled.labels, &labeled.drop_set)
}

/// Token-exact comparison with gold outputs; a terminal period on either
/// side is not significant.
pub fn matches_gold(result: &DecompositionResult, gold: &[Vec<String>]) -> bool {
    fn strip(tokens: &[String]) -> &[String] {
        match tokens.split_last() {
            Some((last, rest)) if is_terminal(last) => rest,
            _ => tokens,
        }
    }
    let predicted = result.tokenized();
    predicted.len() == gold.len() && predicted.iter().zip(gold).all(|(p, g)| strip(p) == strip(g))
}

/// One line per input: sentences joined by ` <sep> `.
pub fn write_decompositions<'a>(
    results: impl IntoIterator<Item = &'a DecompositionResult>,
    separator: &str,
    mut w: impl Write,
) -> std::io::Result<()> {
    let joiner = format!(" {separator} ");
    for r in results {
        writeln!(w, "{}", r.sentences.join(&joiner))?;
    }
    Ok(())
}

/// Side file: per input line, each sentence's source indices as
/// comma-separated lists joined by `|`.
pub fn write_provenance<'a>(
    results: impl IntoIterator<Item = &'a DecompositionResult>,
    mut w: impl Write,
) -> std::io::Result<()> {
    for r in results {
        let parts: Vec<String> = r
            .provenance
            .iter()
            .map(|p| p.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
            .collect();
        writeln!(w, "{}", parts.join("|"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::supervision::{align_tokens, create_labels, LabelMode};
    use crate::testutil::{bare_parse, sokuhi, sokuhi_gold};
    use crate::wrg::build_graph;
    use proptest::prelude::*;

    fn sokuhi_labeled() -> LabeledGraph {
        let (tokens, parse) = sokuhi();
        let g = build_graph(&tokens, &parse).unwrap();
        create_labels(&g, &align_tokens(&tokens, &sokuhi_gold()), LabelMode::Default)
    }

    #[test]
    fn sokuhi_edits() {
        let l = sokuhi_labeled();
        let e = apply_edits(&l.graph, &l.labels, &l.drop_set);
        assert_eq!(e.dropped, BTreeSet::from([6]));
        assert_eq!(e.copies, vec![(1, 8)]);
        assert_eq!(e.edges.len(), 11);
        let c = find_components(e.vertex_count, &e.edges, &e.dropped);
        assert_eq!(c, vec![vec![1, 2, 3, 4, 5, 11], vec![7, 8, 9, 10]]);
    }

    #[test]
    fn sokuhi_renders_gold() {
        let r = segment_labeled(&sokuhi_labeled());
        assert_eq!(r.sentences, vec!["Sokuhi was born in Fujian .", "Sokuhi was ordained at 17 ."]);
        assert_eq!(r.provenance[1], vec![1, 7, 8, 9, 10]);
        assert_eq!(r.flags, vec![SegmentFlag::PeriodAppended { sentence: 1 }]);
        assert!(matches_gold(&r, &sokuhi_gold()));
    }

    #[test]
    fn all_accept_keeps_the_sentence() {
        let l = sokuhi_labeled();
        let labels = vec![EditLabel::Accept; l.labels.len()];
        let r = segment(&l.graph, &labels, &BTreeSet::new());
        assert_eq!(r.sentences, vec!["Sokuhi was born in Fujian and was ordained at 17 ."]);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn all_drop_keeps_only_pure_sources() {
        // Vertex 1 is never a triple target, so it alone survives.
        let l = sokuhi_labeled();
        let labels = vec![EditLabel::Drop; l.labels.len()];
        let e = apply_edits(&l.graph, &labels, &BTreeSet::new());
        assert_eq!(e.dropped.len(), 10);
        assert_eq!(find_components(e.vertex_count, &e.edges, &e.dropped), vec![vec![1]]);
    }

    #[test]
    fn empty_output_falls_back_to_source() {
        let tokens = tokenize("wow !");
        let g = build_graph(&tokens, &bare_parse(2, vec![])).unwrap();
        let r = segment(&g, &[EditLabel::Drop], &BTreeSet::from([1]));
        assert_eq!(r.sentences, vec!["wow !"]);
        assert!(r.flags.contains(&SegmentFlag::EmptyFallback));
    }

    #[test]
    fn chain_components() {
        assert_eq!(find_components(3, &[(1, 2)], &BTreeSet::new()), vec![vec![1, 2], vec![3]]);
        assert_eq!(find_components(1, &[], &BTreeSet::new()), vec![vec![1]]);
    }

    #[test]
    fn copies_are_idempotent_and_skip_dropped_targets() {
        let mut c = vec![vec![1, 2, 3], vec![4, 5]];
        let mut flags = Vec::new();
        apply_copies(&mut c, &[(1, 3)], &BTreeSet::new(), &mut flags);
        assert_eq!(c, vec![vec![1, 2, 3], vec![4, 5]]);
        apply_copies(&mut c, &[(1, 5), (1, 5)], &BTreeSet::new(), &mut flags);
        assert_eq!(c[1], vec![1, 4, 5]);
        apply_copies(&mut c, &[(2, 6)], &BTreeSet::from([6]), &mut flags);
        assert_eq!(flags, vec![SegmentFlag::CopyTargetDropped { src: 2, tgt: 6 }]);
    }

    #[test]
    fn render_sorts_and_discards_punctuation() {
        let tokens = tokenize("a b c , d");
        let r = render_sentences(&[vec![3, 1, 2], vec![4], vec![5]], &tokens, Vec::new());
        assert_eq!(r.sentences, vec!["a b c .", "d ."]);
        assert!(r.flags.contains(&SegmentFlag::PunctuationDiscarded(vec![4])));
    }

    #[test]
    fn output_file_lines() {
        let r = segment_labeled(&sokuhi_labeled());
        let mut buf = Vec::new();
        write_decompositions([&r, &r], "<::::>", &mut buf).unwrap();
        let line = "Sokuhi was born in Fujian . <::::> Sokuhi was ordained at 17 .\n";
        assert_eq!(String::from_utf8(buf).unwrap(), line.repeat(2));
        let mut buf = Vec::new();
        write_provenance([&r], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,2,3,4,5,11|1,7,8,9,10\n");
    }

    fn labels_strategy() -> impl Strategy<Value = (usize, Vec<u8>)> {
        (2usize..14).prop_flat_map(|n| (Just(n), proptest::collection::vec(0u8..4, n - 1)))
    }

    proptest! {
        #[test]
        fn components_partition_live_vertices((n, raw) in labels_strategy()) {
            let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
            let tokens = tokenize(&words.join(" "));
            let g = build_graph(&tokens, &bare_parse(n, vec![])).unwrap();
            let labels: Vec<EditLabel> = raw.iter().map(|&x| EditLabel::from_index(x as usize).unwrap()).collect();
            let e = apply_edits(&g, &labels, &BTreeSet::new());
            let comps = find_components(n, &e.edges, &e.dropped);
            let mut seen: Vec<usize> = comps.iter().flatten().copied().collect();
            seen.sort_unstable();
            let live: Vec<usize> = (1..=n).filter(|v| !e.dropped.contains(v)).collect();
            prop_assert_eq!(seen, live);
            for w in comps.windows(2) {
                prop_assert!(w[0][0] < w[1][0]);
            }
            let r = segment(&g, &labels, &BTreeSet::new());
            for (s, p) in r.sentences.iter().zip(&r.provenance) {
                prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
                for tok in s.split_whitespace() {
                    prop_assert!(tok == "." || words.iter().any(|w| w == tok));
                }
            }
        }
    }
}
