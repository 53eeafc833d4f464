use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use sentsplit::corpus::{
    attach_parses, build_vocab, filter_tensed_match, read_conllu, read_parallel_corpus, read_word_vectors, Example,
    FilterDecision, DEFAULT_SEPARATOR,
};
use sentsplit::metrics::{
    corpus_report, edit_f1, write_decomposition_report, write_edit_report, write_example_records, Alignment,
    ScoredPair,
};
use sentsplit::model::{
    encode_example, inverse_class_weights, split_dev, train, ClassifierKind, LossConfig, ModelConfig, TrainConfig,
    WeightMode,
};
use sentsplit::segmenter::{
    matches_gold, segment, segment_labeled, write_decompositions, write_provenance, DecompositionResult,
};
use sentsplit::supervision::{
    label_corpus, label_records, parse_label_cache, write_label_cache, LabelCounts, LabelMode, LabeledCorpus,
};
use sentsplit::wrg::relation_vocab;
use sentsplit::{Error, Model32, ModelState32};

#[derive(Parser, Debug)]
#[command(
    name = "sentsplit",
    version,
    about = "Split complex sentences into simple ones by classifying word-graph edits",
    after_help = "Any option can also be set in a `key = value` file given with --config FILE; \
                  options on the command line take precedence."
)]
pub struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Derive edit labels from a parallel corpus and write the label cache.
    MakeLabels(MakeLabelsArgs),
    /// Train the edit classifier and save the best checkpoint.
    Train(TrainArgs),
    /// Split every parsed sentence with a trained model.
    Decompose(DecomposeArgs),
    /// Score a trained model on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Run gold labels through the segmenter and report the exact-match rate.
    OracleRoundtrip(OracleArgs),
    /// Print the label distribution and the derived class weights.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    /// Parallel corpus, one `source<TAB>target1 <sep> target2 …` per line.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// CoNLL-U parses whose sent_id is the corpus line number.
    #[arg(long, value_name = "FILE")]
    parses: PathBuf,
    #[arg(long, default_value = DEFAULT_SEPARATOR)]
    separator: String,
    /// Keep only examples whose finite-verb count equals their gold sentence count.
    #[arg(long, value_enum, default_value = "off")]
    tensed_filter: Switch,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    /// `literal` labels every same-sentence dependency-only pair as Copy.
    #[arg(long, default_value = "default", value_parser = parse_label_mode)]
    label_mode: LabelMode,
}

#[derive(Args, Debug)]
pub struct MakeLabelsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    labels: LabelArgs,
    /// Label cache to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    labels: LabelArgs,
    /// Pretrained word vectors, `token v1 … vE` per line.
    #[arg(long, value_name = "FILE")]
    vectors: Option<PathBuf>,
    /// Checkpoint to write; metadata goes to `<checkpoint>.meta.json`.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Per-epoch JSON lines.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    #[arg(long, value_parser = parse_classifier)]
    classifier: Option<ClassifierKind>,
    #[arg(long, value_enum)]
    positional_encoding: Option<Switch>,
    #[arg(long, value_parser = parse_weight_mode)]
    class_weights: Option<WeightMode>,
    /// Ignored when --vectors is given.
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Encoder width, split between the two directions.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    dev_fraction: Option<f64>,
    #[arg(long, default_value_t = 13)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// CoNLL-U input; one output line per sentence, in file order.
    #[arg(long, value_name = "FILE")]
    parses: PathBuf,
    /// Output file (default: stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the source token indices of every output sentence.
    #[arg(long, value_name = "FILE")]
    provenance: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_SEPARATOR)]
    separator: String,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    labels: LabelArgs,
    #[arg(long, default_value = "greedy", value_parser = parse_alignment)]
    alignment: Alignment,
    /// Report file (default: stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-example JSON lines.
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    /// Predicted decompositions, one line per scored example.
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    labels: LabelArgs,
    /// Decompositions of the reconstructible examples.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Label cache written by make-labels; alternatively give --corpus and --parses.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["corpus", "parses"])]
    labels_file: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "parses")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "corpus")]
    parses: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_SEPARATOR)]
    separator: String,
    #[arg(long, default_value = "default", value_parser = parse_label_mode)]
    label_mode: LabelMode,
}

fn parse_label_mode(s: &str) -> Result<LabelMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_classifier(s: &str) -> Result<ClassifierKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_weight_mode(s: &str) -> Result<WeightMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_alignment(s: &str) -> Result<Alignment, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failed run, carrying its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) => Failure::Usage(msg),
            Error::NonFiniteLoss { .. } | Error::NonScalarLoss(_) | Error::Shape { .. } => Failure::Numerical(msg),
            _ => Failure::Data(msg),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn write_failed(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(write_failed(path))
}

/// Runs `body` against the named file, or stdout when `path` is `None`.
fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Outcome {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w).and_then(|_| w.flush()).map_err(write_failed(p))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w).and_then(|_| w.flush()).map_err(write_failed(Path::new("<stdout>")))
        }
    }
}

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Data(format!("cannot read {}: no such file", path.display())))
    }
}

fn require_parent_dir(path: &Path) -> Outcome {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Failure::Data(format!(
            "cannot write {}: directory {} does not exist",
            path.display(),
            dir.display()
        ))),
        _ => Ok(()),
    }
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::MakeLabels(a) => make_labels(a),
        Command::Train(a) => train_model(a),
        Command::Decompose(a) => decompose(a),
        Command::Evaluate(a) => evaluate(a),
        Command::OracleRoundtrip(a) => oracle_roundtrip(a),
        Command::Stats(a) => stats(a),
    }
}

fn load_examples(args: &CorpusArgs) -> Outcome<Vec<Example>> {
    require_file(&args.corpus)?;
    require_file(&args.parses)?;
    let corpus = read_parallel_corpus(&args.corpus, &args.separator)?;
    for e in &corpus.errors {
        warn!("{}:{}: {}", args.corpus.display(), e.line, e.message);
    }
    let parses = read_conllu(&args.parses)?;
    let joined = attach_parses(corpus.examples, parses)?;
    for x in &joined.excluded {
        warn!("example {} excluded: {}", x.id, x.reason);
    }
    let mut examples = joined.examples;
    if args.tensed_filter.on() {
        let before = examples.len();
        examples.retain(|ex| filter_tensed_match(ex) != FilterDecision::Reject);
        info!("tensed-clause filter kept {} of {before} examples", examples.len());
    }
    if examples.is_empty() {
        return Err(Failure::Data(format!("{}: no usable examples", args.corpus.display())));
    }
    Ok(examples)
}

fn gold_by_id(examples: &[Example]) -> HashMap<&str, &[Vec<String>]> {
    examples.iter().map(|e| (e.id.as_str(), e.gold_outputs.as_slice())).collect()
}

fn label(examples: &[Example], mode: LabelMode) -> LabeledCorpus {
    let labeled = label_corpus(examples, mode);
    for (id, reason) in &labeled.skipped {
        warn!("example {id} skipped: {reason}");
    }
    labeled
}

fn make_labels(args: MakeLabelsArgs) -> Outcome {
    require_parent_dir(&args.out)?;
    let examples = load_examples(&args.corpus)?;
    let labeled = label(&examples, args.labels.label_mode);
    let records: Vec<_> = labeled
        .items
        .iter()
        .flat_map(|item| label_records(&item.id, &item.labeled))
        .collect();
    let mut w = create(&args.out)?;
    write_label_cache(&records, &mut w)
        .and_then(|_| w.flush())
        .map_err(write_failed(&args.out))?;
    let counts = labeled.counts();
    println!(
        "labeled {} examples ({} triples) into {}",
        labeled.items.len(),
        counts.total(),
        args.out.display()
    );
    Ok(())
}

fn print_distribution(examples: usize, counts: &LabelCounts, w: &mut dyn Write) -> io::Result<()> {
    let pct = counts.percentages();
    let weights = inverse_class_weights(pct);
    writeln!(w, "examples: {examples}")?;
    writeln!(w, "triples: {}", counts.total())?;
    for (i, letter) in ["A", "B", "C", "D"].iter().enumerate() {
        writeln!(
            w,
            "{letter}: count {} frequency {:.2}% weight {:.4}",
            counts.0[i], pct[i], weights[i]
        )?;
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Outcome {
    let (examples, counts) = match (&args.labels_file, &args.corpus, &args.parses) {
        (Some(path), _, _) => {
            require_file(path)?;
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
            let records = parse_label_cache(&text)?;
            let mut counts = LabelCounts::default();
            let mut ids = BTreeSet::new();
            for r in &records {
                counts.add(r.edit);
                ids.insert(r.example_id.as_str());
            }
            (ids.len(), counts)
        }
        (None, Some(corpus), Some(parses)) => {
            let corpus_args = CorpusArgs {
                corpus: corpus.clone(),
                parses: parses.clone(),
                separator: args.separator.clone(),
                tensed_filter: Switch::Off,
            };
            let examples = load_examples(&corpus_args)?;
            let labeled = label(&examples, args.label_mode);
            (labeled.items.len(), labeled.counts())
        }
        _ => return Err(Failure::Usage("stats needs --labels-file, or --corpus with --parses".into())),
    };
    with_output(None, |w| print_distribution(examples, &counts, w))
}

fn oracle_roundtrip(args: OracleArgs) -> Outcome {
    let start = Instant::now();
    let examples = load_examples(&args.corpus)?;
    let labeled = label(&examples, args.labels.label_mode);
    let gold = gold_by_id(&examples);
    let mut results = Vec::new();
    let mut exact = 0;
    for item in labeled.items.iter().filter(|i| i.reconstructible) {
        let result = segment_labeled(&item.labeled);
        if matches_gold(&result, gold[item.id.as_str()]) {
            exact += 1;
        } else {
            warn!("example {}: got {:?}", item.id, result.sentences);
        }
        results.push(result);
    }
    let total = results.len();
    if let Some(out) = &args.out {
        let mut w = create(out)?;
        write_decompositions(&results, &args.corpus.separator, &mut w)
            .and_then(|_| w.flush())
            .map_err(write_failed(out))?;
    }
    let rate = if total == 0 { 0.0 } else { 100.0 * exact as f64 / total as f64 };
    println!("examples: {}", examples.len());
    println!("reconstructible: {total}");
    println!("exact match: {exact}/{total} ({rate:.2}%)");
    println!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn model_config(args: &TrainArgs, embedding_dim: usize) -> ModelConfig {
    let d = ModelConfig::default();
    ModelConfig {
        embedding_dim,
        hidden: args.hidden.unwrap_or(d.hidden),
        dropout: args.dropout.unwrap_or(d.dropout),
        positional_encoding: args.positional_encoding.map_or(d.positional_encoding, Switch::on),
        heads: args.heads.unwrap_or(d.heads),
        mlp_hidden: args.mlp_hidden.or(d.mlp_hidden),
        classifier: args.classifier.unwrap_or(d.classifier),
        leaky_slope: d.leaky_slope,
    }
}

fn train_config(args: &TrainArgs) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        learning_rate: args.learning_rate.unwrap_or(d.learning_rate),
        batch_size: args.batch_size.unwrap_or(d.batch_size),
        max_epochs: args.epochs.unwrap_or(d.max_epochs),
        patience: args.patience.unwrap_or(d.patience),
        lr_decay: args.lr_decay.unwrap_or(d.lr_decay),
        l2: args.l2.unwrap_or(d.l2),
        dev_fraction: args.dev_fraction.unwrap_or(d.dev_fraction),
        seed: args.seed,
    }
}

fn train_model(args: TrainArgs) -> Outcome {
    let tcfg = train_config(&args);
    tcfg.validate()?;
    model_config(&args, 1).validate()?;
    require_parent_dir(&args.checkpoint)?;
    if let Some(log) = &args.log {
        require_parent_dir(log)?;
    }
    if let Some(v) = &args.vectors {
        require_file(v)?;
    }

    let examples = load_examples(&args.corpus)?;
    let vectors = args.vectors.as_deref().map(read_word_vectors).transpose()?;
    let labeled = label(&examples, args.labels.label_mode);
    let counts = labeled.counts();
    let loss = LossConfig::from_counts(args.class_weights.unwrap_or_default(), &counts);
    info!("label counts {:?}, class weights {:?}", counts.0, loss.weights);

    let dim = args.embedding_dim.unwrap_or(ModelConfig::default().embedding_dim);
    let vocab = build_vocab(&examples, vectors.as_ref(), dim, args.seed);
    let relations = relation_vocab(labeled.items.iter().map(|i| &i.labeled.graph));
    let encoded = labeled
        .items
        .iter()
        .map(|i| encode_example(&i.id, &i.labeled, &vocab, &relations))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let (train_set, dev) = split_dev(&encoded, tcfg.dev_fraction, tcfg.seed);
    info!("{} training and {} dev sentences", train_set.len(), dev.len());

    let config = model_config(&args, vocab.dim());
    let mut model = Model32::new(config, vocab.embeddings(), relations.len(), args.seed)?;
    let mut log = args.log.as_deref().map(create).transpose()?;
    let mut log_error = None;
    let report = train(&mut model, &train_set, &dev, &loss, &tcfg, |e| {
        info!(
            "epoch {} train loss {:.4} dev loss {}",
            e.epoch,
            e.train_loss,
            e.dev_loss.map_or("-".into(), |l| format!("{l:.4}"))
        );
        if let (Some(w), None) = (log.as_mut(), &log_error) {
            let line = serde_json::to_string(e).expect("epoch record serializes");
            if let Err(err) = writeln!(w, "{line}") {
                log_error = Some(err);
            }
        }
    })?;
    if let (Some(path), Some(err)) = (&args.log, log_error) {
        return Err(write_failed(path)(err));
    }
    if let (Some(path), Some(w)) = (&args.log, log.as_mut()) {
        w.flush().map_err(write_failed(path))?;
    }

    let state = ModelState32 {
        model,
        vocab,
        relations,
        class_weights: loss.weights,
    };
    state.save(&args.checkpoint)?;
    println!(
        "trained {} epochs (best {}{}), checkpoint {}",
        report.epochs.len(),
        report.best_epoch,
        if report.stopped_early { ", stopped early" } else { "" },
        args.checkpoint.display()
    );
    Ok(())
}

fn decompose(args: DecomposeArgs) -> Outcome {
    require_file(&args.checkpoint)?;
    require_file(&args.parses)?;
    let state = ModelState32::load(&args.checkpoint)?;
    let parsed = read_conllu(&args.parses)?;
    let results = parsed
        .par_iter()
        .map(|p| match state.decompose(&p.tokens, &p.parse) {
            Err(Error::Graph(msg)) => {
                warn!("sentence {}: {msg}; copied unchanged", p.id);
                let sentence = p.tokens.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ");
                Ok(sentence_as_result(sentence, p.tokens.len()))
            }
            other => other,
        })
        .collect::<Result<Vec<_>, _>>()?;
    with_output(args.out.as_deref(), |w| write_decompositions(&results, &args.separator, w))?;
    if let Some(path) = &args.provenance {
        let mut w = create(path)?;
        write_provenance(&results, &mut w)
            .and_then(|_| w.flush())
            .map_err(write_failed(path))?;
    }
    info!("decomposed {} sentences", results.len());
    Ok(())
}

fn sentence_as_result(sentence: String, len: usize) -> DecompositionResult {
    DecompositionResult {
        sentences: vec![sentence],
        provenance: vec![(1..=len).collect()],
        flags: Vec::new(),
    }
}

fn evaluate(args: EvaluateArgs) -> Outcome {
    require_file(&args.checkpoint)?;
    let state = ModelState32::load(&args.checkpoint)?;
    let examples = load_examples(&args.corpus)?;
    let gold = gold_by_id(&examples);
    let labeled = label(&examples, args.labels.label_mode);

    let predicted = labeled
        .items
        .par_iter()
        .map(|item| {
            let pred = state.predict_edits(&item.labeled.graph)?;
            let result = segment(&pred.graph, &pred.labels, &pred.drop_set);
            Ok((pred.labels, result))
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let gold_labels: Vec<_> = labeled.items.iter().flat_map(|i| i.labeled.labels.iter().copied()).collect();
    let pred_labels: Vec<_> = predicted.iter().flat_map(|(l, _)| l.iter().copied()).collect();
    let edit_report = if gold_labels.is_empty() {
        None
    } else {
        Some(edit_f1(&gold_labels, &pred_labels)?)
    };

    let tokenized: Vec<Vec<Vec<String>>> = predicted.iter().map(|(_, r)| r.tokenized()).collect();
    let pairs: Vec<ScoredPair<'_>> = labeled
        .items
        .iter()
        .zip(&tokenized)
        .map(|(item, pred)| ScoredPair {
            id: &item.id,
            gold: gold[item.id.as_str()],
            pred,
        })
        .collect();
    let report = corpus_report(&pairs, args.alignment);

    with_output(args.out.as_deref(), |w| {
        match &edit_report {
            Some(r) => write_edit_report(r, &mut *w)?,
            None => writeln!(w, "edit labels: none (no edge triples)")?,
        }
        writeln!(w)?;
        write_decomposition_report(&report, &mut *w)
    })?;
    if let Some(path) = &args.records {
        let mut w = create(path)?;
        write_example_records(&report, &mut w)
            .and_then(|_| w.flush())
            .map_err(write_failed(path))?;
    }
    if let Some(path) = &args.predictions {
        let mut w = create(path)?;
        write_decompositions(predicted.iter().map(|(_, r)| r), &args.corpus.separator, &mut w)
            .and_then(|_| w.flush())
            .map_err(write_failed(path))?;
    }
    Ok(())
}
