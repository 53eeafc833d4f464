//! A trained model together with its vocabularies, persisted as a binary
//! parameter file plus a JSON sidecar.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DependencyParse, Token, Vocabulary};
use crate::error::{Error, Result};
use crate::model::network::{edge_inputs, Model, ModelConfig, CLASSES};
use crate::model::training::predict_labels;
use crate::numerics::checkpoint::{load_params, save_params};
use crate::numerics::Scalar;
use crate::segmenter::{segment, DecompositionResult};
use crate::supervision::LabeledGraph;
use crate::wrg::{build_graph, RelationVocabulary, WrgGraph};

/// Everything needed for inference.
#[derive(Clone, Debug)]
pub struct ModelState<T> {
    pub model: Model<T>,
    pub vocab: Vocabulary,
    pub relations: RelationVocabulary,
    pub class_weights: [f64; CLASSES],
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: ModelConfig,
    vocabulary: Vec<String>,
    relations: Vec<String>,
    class_weights: [f64; CLASSES],
}

/// Path of the metadata file stored next to a checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

impl<T: Scalar> ModelState<T> {
    pub fn save(&self, checkpoint: &Path) -> Result<()> {
        save_params(&self.model.params, checkpoint)?;
        let meta = Sidecar {
            config: self.model.config.clone(),
            vocabulary: self.vocab.tokens().to_vec(),
            relations: self.relations.tags().to_vec(),
            class_weights: self.class_weights,
        };
        let path = sidecar_path(checkpoint);
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(checkpoint: &Path) -> Result<Self> {
        let path = sidecar_path(checkpoint);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: Sidecar =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let params = load_params::<T>(checkpoint)?;
        let relations = RelationVocabulary::from_tags(meta.relations);
        let model = Model::from_store(meta.config, relations.len(), params)?;
        let table = model.params.get(model.ids.embedding).cast::<f32>();
        let vocab = Vocabulary::from_parts(meta.vocabulary, table)?;
        Ok(ModelState {
            model,
            vocab,
            relations,
            class_weights: meta.class_weights,
        })
    }

    /// Labels every triple of `graph` by argmax.
    pub fn predict_edits(&self, graph: &WrgGraph) -> Result<LabeledGraph> {
        let tokens = self.vocab.encode(graph.vertices.iter().map(|t| t.surface.as_str()));
        let inputs = edge_inputs(graph, &self.relations)?;
        let labels = predict_labels(&self.model, &tokens, &inputs)?;
        Ok(LabeledGraph {
            graph: graph.clone(),
            labels,
            drop_set: BTreeSet::new(),
        })
    }

    pub fn decompose(&self, tokens: &[Token], parse: &DependencyParse) -> Result<DecompositionResult> {
        let graph = build_graph(tokens, parse)?;
        let labeled = self.predict_edits(&graph)?;
        Ok(segment(&labeled.graph, &labeled.labels, &labeled.drop_set))
    }
}
