//! Shared fixtures for unit tests.

use crate::corpus::{tokenize, Arc, DependencyParse, Token};

pub(crate) fn arc(head: usize, dependent: usize, rel: &str, enhanced: bool) -> Arc {
    Arc {
        head,
        dependent,
        relation: rel.into(),
        enhanced,
    }
}

pub(crate) fn bare_parse(n: usize, arcs: Vec<Arc>) -> DependencyParse {
    DependencyParse {
        arcs,
        pos_tags: vec!["X".into(); n],
        morph_features: vec![vec![]; n],
    }
}

/// "Sokuhi was born in Fujian and was ordained at 17 ." with the
/// enhanced subject arc of the second conjunct.
pub(crate) fn sokuhi() -> (Vec<Token>, DependencyParse) {
    let tokens = tokenize("Sokuhi was born in Fujian and was ordained at 17 .");
    let arcs = vec![
        arc(3, 1, "nsubj", false),
        arc(3, 2, "aux", false),
        arc(0, 3, "root", false),
        arc(5, 4, "case", false),
        arc(3, 5, "obl", false),
        arc(8, 6, "cc", false),
        arc(8, 7, "aux", false),
        arc(3, 8, "conj", false),
        arc(10, 9, "case", false),
        arc(8, 10, "obl", false),
        arc(3, 11, "punct", false),
        arc(8, 1, "nsubj", true),
    ];
    (tokens, bare_parse(11, arcs))
}

pub(crate) fn sokuhi_gold() -> Vec<Vec<String>> {
    ["Sokuhi was born in Fujian .", "Sokuhi was ordained at 17 ."]
        .iter()
        .map(|s| s.split_whitespace().map(str::to_string).collect())
        .collect()
}
