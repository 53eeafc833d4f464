//! Word relation graphs: token vertices joined by adjacency and dependency
//! edges, stored as an ordered set of edge triples.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::corpus::{DependencyParse, Token};
use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Surface name of the adjacency label.
pub const NEIGHBOR_TAG: &str = "ngbh";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    Neighbor,
    Dependency(String),
}

impl EdgeLabel {
    pub fn tag(&self) -> &str {
        match self {
            EdgeLabel::Neighbor => NEIGHBOR_TAG,
            EdgeLabel::Dependency(t) => t,
        }
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EdgeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "" => Err(Error::Invalid("empty edge label".into())),
            NEIGHBOR_TAG => Ok(EdgeLabel::Neighbor),
            t => Ok(EdgeLabel::Dependency(t.to_string())),
        }
    }
}

/// Directed edge `src → tgt` with one or more labels (sorted, Neighbor first).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EdgeTriple {
    pub src: usize,
    pub tgt: usize,
    pub labels: Vec<EdgeLabel>,
}

impl EdgeTriple {
    pub fn has_neighbor(&self) -> bool {
        self.labels.contains(&EdgeLabel::Neighbor)
    }

    /// True when the only labels are dependency relations.
    pub fn is_dependency_only(&self) -> bool {
        !self.has_neighbor()
    }

    pub fn key(&self) -> (usize, usize) {
        (self.src.min(self.tgt), self.src.max(self.tgt))
    }

    pub fn label_string(&self) -> String {
        self.labels.iter().map(EdgeLabel::tag).collect::<Vec<_>>().join(",")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrgGraph {
    pub vertices: Vec<Token>,
    /// Ordered by `(min(src, tgt), max(src, tgt))`.
    pub triples: Vec<EdgeTriple>,
}

impl WrgGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn surface(&self, index: usize) -> &str {
        &self.vertices[index - 1].surface
    }

    /// Writes `src \t tgt \t label[,label…]` per triple.
    pub fn write_debug(&self, mut w: impl Write) -> std::io::Result<()> {
        for t in &self.triples {
            writeln!(w, "{}\t{}\t{}", t.src, t.tgt, t.label_string())?;
        }
        Ok(())
    }
}

struct Pending {
    src: usize,
    tgt: usize,
    labels: BTreeSet<EdgeLabel>,
    // Orientation came from an adjacency pair or a DEPS-only arc.
    pinned: bool,
}

/// Builds the graph for a tokenized sentence and its parse.
///
/// Adjacent tokens get `i → i+1` Neighbor triples. Each dependency arc is
/// oriented dependent → head. Arcs on an adjacent pair merge onto the
/// Neighbor triple. When two arcs join the same non-adjacent pair in
/// opposite directions, the DEPS-only arc decides the orientation.
/// The root arc is not materialized.
pub fn build_graph(tokens: &[Token], parse: &DependencyParse) -> Result<WrgGraph> {
    let l = tokens.len();
    if l == 0 {
        return Err(Error::Graph("empty sentence".into()));
    }
    let mut pairs: BTreeMap<(usize, usize), Pending> = BTreeMap::new();
    for i in 1..l {
        pairs.insert(
            (i, i + 1),
            Pending {
                src: i,
                tgt: i + 1,
                labels: BTreeSet::from([EdgeLabel::Neighbor]),
                pinned: true,
            },
        );
    }
    for arc in &parse.arcs {
        if arc.head == 0 {
            if arc.relation != "root" {
                return Err(Error::Graph(format!(
                    "arc {} from index 0 is labeled {:?}, not root",
                    arc.dependent, arc.relation
                )));
            }
            continue;
        }
        if arc.dependent == 0 || arc.dependent > l || arc.head > l {
            return Err(Error::Graph(format!(
                "arc {}→{} outside sentence of length {l}",
                arc.head, arc.dependent
            )));
        }
        if arc.head == arc.dependent {
            return Err(Error::Graph(format!("self-loop on token {}", arc.head)));
        }
        let key = (arc.head.min(arc.dependent), arc.head.max(arc.dependent));
        let label = EdgeLabel::Dependency(arc.relation.clone());
        match pairs.get_mut(&key) {
            Some(p) => {
                p.labels.insert(label);
                if !p.pinned && arc.enhanced && p.src != arc.dependent {
                    p.src = arc.dependent;
                    p.tgt = arc.head;
                    p.pinned = true;
                }
            }
            None => {
                pairs.insert(
                    key,
                    Pending {
                        src: arc.dependent,
                        tgt: arc.head,
                        labels: BTreeSet::from([label]),
                        pinned: arc.enhanced,
                    },
                );
            }
        }
    }
    let triples = pairs
        .into_values()
        .map(|p| EdgeTriple {
            src: p.src,
            tgt: p.tgt,
            labels: p.labels.into_iter().collect(),
        })
        .collect();
    Ok(WrgGraph {
        vertices: tokens.to_vec(),
        triples,
    })
}

/// Dense positions for relation tags; the last slot is UNKNOWN.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationVocabulary {
    tags: Vec<String>,
    positions: HashMap<String, usize>,
}

impl RelationVocabulary {
    pub const UNKNOWN: &'static str = "<unk-rel>";

    /// Sorted tags plus the Neighbor tag; UNKNOWN is appended.
    pub fn from_tags<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set: BTreeSet<String> = tags.into_iter().map(Into::into).collect();
        set.insert(NEIGHBOR_TAG.to_string());
        set.remove(Self::UNKNOWN);
        let tags: Vec<String> = set.into_iter().collect();
        let positions = tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        RelationVocabulary { tags, positions }
    }

    /// Size N of the multi-hot encoding, UNKNOWN included.
    pub fn len(&self) -> usize {
        self.tags.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unknown_position(&self) -> usize {
        self.tags.len()
    }

    pub fn position(&self, tag: &str) -> usize {
        self.positions.get(tag).copied().unwrap_or(self.unknown_position())
    }

    /// Known tags, without UNKNOWN.
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Position-wise sum of the one-hot vectors of `labels`.
    pub fn multi_hot<T: Scalar>(&self, labels: &[EdgeLabel]) -> Vec<T> {
        let mut row = vec![T::zero(); self.len()];
        for l in labels {
            row[self.position(l.tag())] += T::one();
        }
        row
    }
}

pub fn relation_vocab<'a>(graphs: impl IntoIterator<Item = &'a WrgGraph>) -> RelationVocabulary {
    let tags = graphs
        .into_iter()
        .flat_map(|g| g.triples.iter())
        .flat_map(|t| t.labels.iter().map(|l| l.tag().to_string()));
    RelationVocabulary::from_tags(tags)
}
