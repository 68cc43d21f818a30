//! Command-line front end. Every subcommand reads the file formats of
//! [`crate::textio`] and writes its outputs atomically.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rayon::prelude::*;

use crate::invariance::{
    gram_matrices, hit_miss_margins_from_gram, learn_scale_distribution, pairwise_margins, relevance_profile,
    silm_relevance, sitk_matrix, JudgedQuery, KernelKind, RelevanceKind, ScaleDistribution,
};
use crate::kernels::{smooth_separable_2d, BoundaryPolicy, KernelFamily};
use crate::scalespace::{
    build_interval_tree, build_scale_ladder, build_stack, build_topic_stack,
    ScaleLadder, ScalePairing, ScaleSpaceStack, StackConfig, DEFAULT_CONTRAST,
};
use crate::semgraph::{build_pmi_graph, SemanticMode, SemanticSmoother};
use crate::signals::{
    bow1d_signal, normalize_signal, resample_bilinear, sentence2d_signal, topic1d_signal, word2d_signal, Signal2D,
    SignalKind, TopicTable,
};
use crate::tasks::{
    evaluate_classification, evaluate_retrieval, hierarchical_segment, keyword_hierarchy, passage_retrieve,
    SegmentConfig,
};
use crate::textio::{
    build_vocabulary, index_corpus, read_corpus, read_graph, read_labels, read_matrix, read_qrels, read_run,
    read_scale_distribution, read_topic_table, read_vocabulary, stemmer_by_name, write_atomic, write_graph,
    write_matrix, write_run, write_scale_distribution, write_vocabulary, Document, RunEntry,
    TokenizerConfig, Vocabulary,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "textscale", version, about = "Scale-space representations of text")]
struct Cli {
    /// Worker threads; falls back to SCALESPACE_THREADS, then all cores.
    #[arg(long, global = true, env = "SCALESPACE_THREADS")]
    threads: Option<usize>,
    /// Log progress to the error stream.
    #[arg(short, long, global = true)]
    verbose: bool,
    /// Reserved; no stochastic step currently exists.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank words by document frequency and write the vocabulary.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tokens: TokenArgs,
        /// Keep at most this many words.
        #[arg(long, default_value_t = 20000)]
        max_vocab: usize,
    },
    /// Build the positive-PMI word graph.
    BuildGraph {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        /// Co-occurrence window in tokens.
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Drop edges whose PMI does not exceed this value.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
    },
    /// Write the signal of one document as a matrix.
    Signal {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        signal: SignalArgs,
        /// Document id.
        #[arg(long)]
        doc: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth one document's signal at a single (s_x, s_y).
    Smooth {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        signal: SignalArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        /// Spatial scale.
        #[arg(long, default_value_t = 1.0)]
        sx: f64,
        /// Semantic scale.
        #[arg(long, default_value_t = 1.0)]
        sy: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write every level of a scale-space stack.
    Stack {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        signal: SignalArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        /// Output directory for level_<j>.tsm and scales.tsv.
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write the interval tree as JSON lines.
        #[arg(long)]
        tree: Option<PathBuf>,
    },
    /// Keyword tree of one document as JSON lines.
    Keywords {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hierarchical segmentation of one document as JSON lines.
    Segment {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        #[arg(long)]
        doc: String,
        /// Fixed semantic scale.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        out: PathBuf,
        /// Velocity curves as x,s,value rows.
        #[arg(long)]
        velocity_csv: Option<PathBuf>,
    },
    /// Learn the scale distribution of the invariant kernel from labeled documents.
    SitkTrain {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        signal: SignalArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        /// linear, rbf, rbf:<sigma> or js.
        #[arg(long, default_value = "linear")]
        kernel: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the margin table as CSV.
        #[arg(long)]
        margins_csv: Option<PathBuf>,
    },
    /// Write the scale-invariant kernel matrix of the corpus.
    KernelMatrix {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        signal: SignalArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        /// Scale distribution file.
        #[arg(long)]
        q: PathBuf,
        #[arg(long, default_value = "linear")]
        kernel: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn the scale distribution of the invariant relevance model.
    SilmTrain {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        signal: SignalArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// kl or js.
        #[arg(long, default_value = "kl")]
        relevance: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        margins_csv: Option<PathBuf>,
    },
    /// Rank the corpus for every query and write a TREC run.
    Retrieve {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        signal: SignalArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        q: PathBuf,
        #[arg(long, default_value = "kl")]
        relevance: String,
        /// Keep this many documents per query.
        #[arg(long, default_value_t = 1000)]
        top: usize,
        #[arg(long, default_value = "textscale")]
        tag: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Passages of one document for one query as JSON lines.
    Passages {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        q: PathBuf,
        /// Passage width in sentences.
        #[arg(long, default_value_t = 3)]
        window: usize,
        #[arg(long, default_value = "kl")]
        relevance: String,
        /// Interest-point contrast threshold relative to the largest response.
        #[arg(long, default_value_t = DEFAULT_CONTRAST)]
        contrast: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run against qrels, or predicted labels against gold labels.
    Eval {
        #[arg(long, requires = "run")]
        qrels: Option<PathBuf>,
        #[arg(long, requires = "qrels")]
        run: Option<PathBuf>,
        #[arg(long, requires = "pred", conflicts_with = "qrels")]
        gold: Option<PathBuf>,
        #[arg(long, requires = "gold")]
        pred: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct TokenArgs {
    /// File with one stopword per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// identity or plural.
    #[arg(long, default_value = "identity")]
    stemmer: String,
    /// Keep the original letter case.
    #[arg(long)]
    keep_case: bool,
}

impl TokenArgs {
    fn config(&self) -> Result<TokenizerConfig> {
        let mut config = TokenizerConfig {
            lowercase: !self.keep_case,
            ..TokenizerConfig::default()
        }
        .with_stemmer(stemmer_by_name(&self.stemmer)?);
        if let Some(path) = &self.stopwords {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            config = config.with_stopwords(text.lines().map(str::trim).filter(|l| !l.is_empty()));
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus as JSON lines with id, text and optional label.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    tokens: TokenArgs,
}

struct Loaded {
    corpus: Vec<Document>,
    vocab: Vocabulary,
    tokens: TokenizerConfig,
}

impl CorpusArgs {
    fn load(&self) -> Result<Loaded> {
        let tokens = self.tokens.config()?;
        let vocab = read_vocabulary(&self.vocab)?;
        let mut corpus = read_corpus(&self.corpus)?;
        index_corpus(&mut corpus, &vocab, &tokens);
        Ok(Loaded { corpus, vocab, tokens })
    }
}

impl Loaded {
    fn doc(&self, id: &str) -> Result<&Document> {
        self.corpus
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| Error::UnknownDocument(id.to_string()))
    }

    fn queries(&self, path: &Path) -> Result<Vec<Document>> {
        let mut queries = read_corpus(path)?;
        index_corpus(&mut queries, &self.vocab, &self.tokens);
        Ok(queries)
    }
}

/// Either a corpus document or a signal matrix file.
#[derive(Debug, Args)]
struct SourceArgs {
    #[arg(long, requires = "vocab", conflicts_with = "input")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    doc: Option<String>,
    /// Signal matrix file, used instead of a corpus document.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    tokens: TokenArgs,
}

#[derive(Debug, Args)]
struct SignalArgs {
    /// word2d, sentence2d, bow1d or topic1d.
    #[arg(long, default_value = "sentence2d")]
    signal: String,
    /// Topic table for topic1d signals.
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Scale the signal to unit mass before smoothing.
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct SmoothingArgs {
    /// Semantic graph; without one the semantic axis is left unsmoothed.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// distance-kernel or graph-solve.
    #[arg(long, default_value = "distance-kernel")]
    mode: String,
    /// discrete-gaussian, sampled-gaussian or poisson.
    #[arg(long, default_value = "discrete-gaussian")]
    kernel_family: String,
    /// mirror, renormalize or zero-pad.
    #[arg(long, default_value = "mirror")]
    boundary: String,
    /// Largest kernel mass left outside the truncated support.
    #[arg(long, default_value_t = 1e-12)]
    trunc_mass: f64,
}

#[derive(Debug, Args)]
struct LadderArgs {
    #[arg(long, default_value_t = 1.0)]
    s_min: f64,
    #[arg(long, default_value_t = 64.0)]
    s_max: f64,
    #[arg(long, default_value_t = 7)]
    count: usize,
    /// Prepend the zero scale.
    #[arg(long)]
    with_zero: bool,
    /// Hold the semantic scale at this value instead of s_y = s_x.
    #[arg(long)]
    sy_fixed: Option<f64>,
}

impl LadderArgs {
    fn ladder(&self) -> Result<ScaleLadder> {
        let ladder = build_scale_ladder(self.s_min, self.s_max, self.count)?;
        Ok(if self.with_zero { ladder.with_zero() } else { ladder })
    }

    fn pairing(&self) -> ScalePairing {
        self.sy_fixed.map_or(ScalePairing::Equal, ScalePairing::Fixed)
    }
}

impl SmoothingArgs {
    fn stack_config(&self, pairing: ScalePairing) -> Result<StackConfig> {
        Ok(StackConfig {
            family: KernelFamily::parse(&self.kernel_family)?,
            boundary: BoundaryPolicy::parse(&self.boundary)?,
            trunc_mass: self.trunc_mass,
            pairing,
        })
    }

    fn smoother(&self, vocab: Option<&Vocabulary>, size: usize) -> Result<SemanticSmoother> {
        let mode = SemanticMode::parse(&self.mode)?;
        match (&self.graph, vocab) {
            (Some(path), Some(vocab)) => Ok(SemanticSmoother::new(Arc::new(read_graph(path, vocab)?), mode)),
            (Some(_), None) => Err(Error::param("--graph needs a vocabulary")),
            (None, _) => Ok(SemanticSmoother::identity(size)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CliSignal {
    Word2d,
    Sentence2d,
    Bow1d,
    Topic1d,
}

fn parse_signal(name: &str) -> Result<CliSignal> {
    match name {
        "word2d" => Ok(CliSignal::Word2d),
        "sentence2d" => Ok(CliSignal::Sentence2d),
        "bow1d" => Ok(CliSignal::Bow1d),
        "topic1d" => Ok(CliSignal::Topic1d),
        other => Err(Error::param(format!("unknown signal kind '{other}'"))),
    }
}

struct SignalBuilder {
    kind: CliSignal,
    topics: Option<TopicTable>,
    normalize: bool,
}

impl SignalBuilder {
    fn new(args: &SignalArgs) -> Result<Self> {
        let kind = parse_signal(&args.signal)?;
        let topics = match (&args.topics, kind) {
            (Some(path), _) => Some(read_topic_table(path)?),
            (None, CliSignal::Topic1d) => return Err(Error::param("topic1d signals need --topics")),
            (None, _) => None,
        };
        Ok(SignalBuilder {
            kind,
            topics,
            normalize: args.normalize,
        })
    }

    /// Semantic smoothing applies to word-indexed signals only.
    fn is_topic(&self) -> bool {
        self.kind == CliSignal::Topic1d
    }

    fn build(&self, doc: &Document, vocab: &Vocabulary) -> Result<Signal2D> {
        let signal = match self.kind {
            CliSignal::Word2d => word2d_signal(doc, vocab)?,
            CliSignal::Sentence2d => sentence2d_signal(doc, vocab)?,
            CliSignal::Bow1d => {
                Signal2D::new(bow1d_signal(&word2d_signal(doc, vocab)?).to_row(), SignalKind::Generic)?
            }
            CliSignal::Topic1d => {
                let table = self.topics.as_ref().expect("checked at construction");
                Signal2D::new(topic1d_signal(doc, table)?.into_values(), SignalKind::Generic)?
            }
        };
        if self.normalize {
            normalize_signal(signal)
        } else {
            Ok(signal)
        }
    }

    fn stack(
        &self,
        signal: &Signal2D,
        ladder: &ScaleLadder,
        smoother: &SemanticSmoother,
        config: &StackConfig,
    ) -> Result<ScaleSpaceStack> {
        if self.is_topic() {
            let topic = crate::signals::TopicSignal::new(signal.values().clone())?;
            build_topic_stack(&topic, ladder, config)
        } else {
            build_stack(signal, ladder, smoother, config)
        }
    }
}

fn one_signal(source: &SourceArgs, builder: &SignalBuilder) -> Result<(Signal2D, Option<Vocabulary>)> {
    if let Some(path) = &source.input {
        let values = read_matrix(path)?;
        return Ok((Signal2D::new(values, SignalKind::Generic)?, None));
    }
    let (Some(corpus), Some(vocab), Some(doc)) = (&source.corpus, &source.vocab, &source.doc) else {
        return Err(Error::param("give either --input or --corpus, --vocab and --doc"));
    };
    let loaded = CorpusArgs {
        corpus: corpus.clone(),
        vocab: vocab.clone(),
        tokens: TokenArgs {
            stopwords: source.tokens.stopwords.clone(),
            stemmer: source.tokens.stemmer.clone(),
            keep_case: source.tokens.keep_case,
        },
    }
    .load()?;
    let signal = builder.build(loaded.doc(doc)?, &loaded.vocab)?;
    Ok((signal, Some(loaded.vocab)))
}

/// Per-document stack levels, 2D signals resampled to the longest document.
fn corpus_levels(
    loaded: &Loaded,
    docs: &[&Document],
    builder: &SignalBuilder,
    scales: &[f64],
    smoothing: &SmoothingArgs,
    pairing: ScalePairing,
    length: Option<usize>,
) -> Result<Vec<Vec<Array2<f64>>>> {
    let ladder = ScaleLadder::from_scales(scales.to_vec())?;
    let config = smoothing.stack_config(pairing)?;
    let smoother = smoothing.smoother(Some(&loaded.vocab), loaded.vocab.len())?;
    let signals: Vec<Signal2D> = docs
        .iter()
        .map(|d| builder.build(d, &loaded.vocab))
        .collect::<Result<_>>()?;
    let target = length.unwrap_or_else(|| signals.iter().map(Signal2D::spatial_len).max().unwrap_or(1));
    signals
        .par_iter()
        .map(|s| {
            let s = if s.spatial_len() != target && builder.kind != CliSignal::Bow1d {
                resample_bilinear(s, target)?
            } else {
                s.clone()
            };
            let stack = builder.stack(&s, &ladder, &smoother, &config)?;
            Ok(stack.levels().iter().map(|l| l.values().clone()).collect())
        })
        .collect()
}

fn write_lines(path: &Path, body: impl FnOnce(&mut dyn std::io::Write) -> std::io::Result<()>) -> Result<()> {
    write_atomic(path, body)
}

fn format_scale(s: f64) -> String {
    format!("{s}")
}

fn learned_or_uniform(learned: Result<ScaleDistribution>, scales: &[f64]) -> Result<ScaleDistribution> {
    match learned {
        Err(Error::NoPositiveMargin) => {
            log::warn!("no scale has a positive mean margin; falling back to the uniform distribution");
            ScaleDistribution::uniform(scales.to_vec())
        }
        other => other,
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildVocab {
            corpus,
            out,
            tokens,
            max_vocab,
        } => {
            let config = tokens.config()?.with_max_vocab(max_vocab);
            config.validate()?;
            let docs = read_corpus(&corpus)?;
            let vocab = build_vocabulary(&docs, &config)?;
            log::info!("vocabulary of {} words", vocab.len());
            write_vocabulary(&out, &vocab)
        }
        Command::BuildGraph {
            input,
            out,
            window,
            threshold,
        } => {
            let loaded = input.load()?;
            let graph = build_pmi_graph(&loaded.corpus, &loaded.vocab, window, threshold)?;
            log::info!("graph with {} edges", graph.edge_count());
            write_graph(&out, &graph, &loaded.vocab)
        }
        Command::Signal { input, signal, doc, out } => {
            let loaded = input.load()?;
            let builder = SignalBuilder::new(&signal)?;
            let signal = builder.build(loaded.doc(&doc)?, &loaded.vocab)?;
            write_matrix(&out, signal.values())
        }
        Command::Smooth {
            source,
            signal,
            smoothing,
            sx,
            sy,
            out,
        } => {
            let builder = SignalBuilder::new(&signal)?;
            let (signal, vocab) = one_signal(&source, &builder)?;
            let config = smoothing.stack_config(ScalePairing::Equal)?;
            let smoother = if builder.is_topic() {
                SemanticSmoother::identity(signal.semantic_len())
            } else {
                smoothing.smoother(vocab.as_ref(), signal.semantic_len())?
            };
            let op = smoother.operator(if builder.is_topic() { 0.0 } else { sy })?;
            let smoothed = smooth_separable_2d(&signal, sx, config.family, &op, config.boundary, config.trunc_mass)?;
            write_matrix(&out, smoothed.values())
        }
        Command::Stack {
            source,
            signal,
            smoothing,
            ladder,
            out_dir,
            tree,
        } => {
            let builder = SignalBuilder::new(&signal)?;
            let (signal, vocab) = one_signal(&source, &builder)?;
            let config = smoothing.stack_config(ladder.pairing())?;
            let smoother = smoothing.smoother(vocab.as_ref(), signal.semantic_len())?;
            let stack = builder.stack(&signal, &ladder.ladder()?, &smoother, &config)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            for (j, level) in stack.levels().iter().enumerate() {
                write_matrix(out_dir.join(format!("level_{j}.tsm")), level.values())?;
            }
            write_lines(&out_dir.join("scales.tsv"), |w| {
                for (j, (sx, sy)) in stack.scales().iter().enumerate() {
                    writeln!(w, "{j}\t{}\t{}", format_scale(*sx), format_scale(*sy))?;
                }
                Ok(())
            })?;
            if let Some(path) = tree {
                let tree = build_interval_tree(&stack)?;
                write_lines(&path, |w| tree.write_jsonl(w))?;
            }
            Ok(())
        }
        Command::Keywords {
            input,
            smoothing,
            ladder,
            doc,
            out,
        } => {
            let loaded = input.load()?;
            let smoother = smoothing.smoother(Some(&loaded.vocab), loaded.vocab.len())?;
            let config = smoothing.stack_config(ladder.pairing())?;
            let tree = keyword_hierarchy(loaded.doc(&doc)?, &loaded.vocab, &smoother, &ladder.ladder()?, &config)?;
            write_lines(&out, |w| tree.write_jsonl(w))
        }
        Command::Segment {
            input,
            smoothing,
            ladder,
            doc,
            c,
            out,
            velocity_csv,
        } => {
            let loaded = input.load()?;
            let smoother = smoothing.smoother(Some(&loaded.vocab), loaded.vocab.len())?;
            let config = SegmentConfig {
                semantic_scale: c,
                boundary: BoundaryPolicy::parse(&smoothing.boundary)?,
                trunc_mass: smoothing.trunc_mass,
            };
            let tree = hierarchical_segment(loaded.doc(&doc)?, &loaded.vocab, &smoother, &ladder.ladder()?, &config)?;
            write_lines(&out, |w| tree.write_jsonl(w))?;
            if let Some(path) = velocity_csv {
                write_lines(&path, |w| tree.write_velocity_csv(w))?;
            }
            Ok(())
        }
        Command::SitkTrain {
            input,
            signal,
            smoothing,
            ladder,
            kernel,
            out,
            margins_csv,
        } => {
            let kind = KernelKind::parse(&kernel)?;
            let loaded = input.load()?;
            let builder = SignalBuilder::new(&signal)?;
            let docs: Vec<&Document> = loaded.corpus.iter().filter(|d| d.label.is_some()).collect();
            let labels: Vec<String> = docs.iter().map(|d| d.label.clone().unwrap_or_default()).collect();
            let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
            let scales = ladder.ladder()?.scales().to_vec();
            let levels = corpus_levels(&loaded, &docs, &builder, &scales, &smoothing, ladder.pairing(), None)?;
            let grams = gram_matrices(&levels, kind)?;
            let table = hit_miss_margins_from_gram(&ids, &labels, &scales, &grams)?;
            if let Some(path) = margins_csv {
                write_lines(&path, |w| table.write_csv(w))?;
            }
            let q = learned_or_uniform(learn_scale_distribution(&table), &scales)?;
            write_scale_distribution(&out, &q)
        }
        Command::KernelMatrix {
            input,
            signal,
            smoothing,
            q,
            kernel,
            out,
        } => {
            let kind = KernelKind::parse(&kernel)?;
            let loaded = input.load()?;
            let builder = SignalBuilder::new(&signal)?;
            let dist = read_scale_distribution(&q)?.to_probability();
            let docs: Vec<&Document> = loaded.corpus.iter().collect();
            let levels =
                corpus_levels(&loaded, &docs, &builder, dist.scales(), &smoothing, ScalePairing::Equal, None)?;
            let grams = gram_matrices(&levels, kind)?;
            let matrix = sitk_matrix(&grams, &dist)?;
            write_matrix(&out, &matrix)
        }
        Command::SilmTrain {
            input,
            signal,
            smoothing,
            ladder,
            queries,
            qrels,
            relevance,
            out,
            margins_csv,
        } => {
            let kind = RelevanceKind::parse(&relevance)?;
            let loaded = input.load()?;
            let builder = SignalBuilder::new(&signal)?;
            let queries = loaded.queries(&queries)?;
            let qrels = read_qrels(&qrels)?;
            let scales = ladder.ladder()?.scales().to_vec();
            let mut judged = Vec::new();
            for query in &queries {
                let Some(grades) = qrels.get(&query.id) else {
                    log::warn!("query {} has no judgments", query.id);
                    continue;
                };
                let docs: Vec<&Document> = grades
                    .keys()
                    .filter_map(|id| {
                        let found = loaded.corpus.iter().find(|d| &d.id == id);
                        if found.is_none() {
                            log::warn!("judged document {id} is not in the corpus");
                        }
                        found
                    })
                    .collect();
                if docs.is_empty() {
                    continue;
                }
                let q_levels = corpus_levels(&loaded, &[query], &builder, &scales, &smoothing, ladder.pairing(), None)?;
                let d_levels: Vec<Vec<Array2<f64>>> = docs
                    .iter()
                    .map(|d| corpus_levels(&loaded, &[d], &builder, &scales, &smoothing, ladder.pairing(), None))
                    .map(|r| r.map(|mut v| v.remove(0)))
                    .collect::<Result<_>>()?;
                let mut relevance = Array2::zeros((docs.len(), scales.len()));
                for (i, d) in d_levels.iter().enumerate() {
                    let profile = relevance_profile(&q_levels[0], d, kind)?;
                    relevance.row_mut(i).assign(&ndarray::Array1::from(profile));
                }
                judged.push(JudgedQuery {
                    query_id: query.id.clone(),
                    doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
                    grades: docs.iter().map(|d| grades[&d.id]).collect(),
                    relevance,
                });
            }
            let table = pairwise_margins(&judged, &scales)?;
            if let Some(path) = margins_csv {
                write_lines(&path, |w| table.write_csv(w))?;
            }
            let q = learned_or_uniform(learn_scale_distribution(&table), &scales)?;
            write_scale_distribution(&out, &q)
        }
        Command::Retrieve {
            input,
            signal,
            smoothing,
            queries,
            q,
            relevance,
            top,
            tag,
            out,
        } => {
            let kind = RelevanceKind::parse(&relevance)?;
            let loaded = input.load()?;
            let builder = SignalBuilder::new(&signal)?;
            let queries = loaded.queries(&queries)?;
            let dist = read_scale_distribution(&q)?.to_probability();
            let scales = dist.scales().to_vec();
            let docs: Vec<&Document> = loaded.corpus.iter().collect();
            let d_levels: Vec<Vec<Array2<f64>>> = docs
                .iter()
                .map(|d| corpus_levels(&loaded, &[d], &builder, &scales, &smoothing, ScalePairing::Equal, None))
                .map(|r| r.map(|mut v| v.remove(0)))
                .collect::<Result<_>>()?;
            let mut run = BTreeMap::new();
            for query in &queries {
                let q_levels =
                    corpus_levels(&loaded, &[query], &builder, &scales, &smoothing, ScalePairing::Equal, None)?;
                let mut scored: Vec<(f64, &str)> = d_levels
                    .par_iter()
                    .zip(&docs)
                    .map(|(d, doc)| Ok((silm_relevance(&q_levels[0], d, &dist, kind)?, doc.id.as_str())))
                    .collect::<Result<_>>()?;
                scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
                let entries = scored
                    .into_iter()
                    .take(top)
                    .enumerate()
                    .map(|(i, (score, id))| RunEntry {
                        doc_id: id.to_string(),
                        rank: i + 1,
                        score,
                    })
                    .collect();
                run.insert(query.id.clone(), entries);
            }
            write_run(&out, &run, &tag)
        }
        Command::Passages {
            input,
            smoothing,
            queries,
            query,
            doc,
            q,
            window,
            relevance,
            contrast,
            out,
        } => {
            let kind = RelevanceKind::parse(&relevance)?;
            let loaded = input.load()?;
            let queries = loaded.queries(&queries)?;
            let query = queries
                .iter()
                .find(|d| d.id == query)
                .ok_or_else(|| Error::UnknownDocument(query.clone()))?;
            let dist = read_scale_distribution(&q)?.to_probability();
            let ladder = ScaleLadder::from_scales(dist.scales().to_vec())?;
            let config = smoothing.stack_config(ScalePairing::Equal)?;
            let smoother = smoothing.smoother(Some(&loaded.vocab), loaded.vocab.len())?;
            let d_signal = sentence2d_signal(loaded.doc(&doc)?, &loaded.vocab)?;
            let q_signal = Signal2D::new(
                bow1d_signal(&sentence2d_signal(query, &loaded.vocab)?).to_row(),
                SignalKind::Generic,
            )?;
            let d_stack = build_stack(&d_signal, &ladder, &smoother, &config)?;
            let q_stack = build_stack(&q_signal, &ladder, &smoother, &config)?;
            let q_levels: Vec<Array2<f64>> = q_stack.levels().iter().map(|l| l.values().clone()).collect();
            let passages = passage_retrieve(&q_levels, &d_stack, &dist, window, kind, contrast)?;
            write_lines(&out, |w| {
                for p in &passages {
                    serde_json::to_writer(&mut *w, p)?;
                    writeln!(w)?;
                }
                Ok(())
            })
        }
        Command::Eval { qrels, run, gold, pred } => {
            if let (Some(qrels), Some(run)) = (qrels, run) {
                let report = evaluate_retrieval(&read_run(&run)?, &read_qrels(&qrels)?)?;
                println!("MAP={:.4}", report.map);
                println!("P@5={:.4}", report.p5);
                println!("P@10={:.4}", report.p10);
                for (q, m) in &report.per_query {
                    println!("{q}\tAP={:.4}\tP@5={:.4}\tP@10={:.4}", m.average_precision, m.p5, m.p10);
                }
                Ok(())
            } else if let (Some(gold), Some(pred)) = (gold, pred) {
                let report = evaluate_classification(&read_labels(&pred)?, &read_labels(&gold)?)?;
                println!("micro-F1={:.4}", report.micro_f1);
                for (label, c) in &report.per_class {
                    println!("{label}\ttp={}\tfp={}\tfn={}", c.tp, c.fp, c.fn_);
                }
                Ok(())
            } else {
                Err(Error::param("eval needs --qrels with --run, or --gold with --pred"))
            }
        }
    }
}

fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter(_) | Error::InvalidScale(_) | Error::InvalidRange(_) | Error::UnsupportedOrder(_)
    )
}

/// Parses `argv`, runs the subcommand, and returns the process exit code:
/// 0 on success, 2 for usage errors, 1 for data errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage_error(&e) {
                2
            } else {
                1
            }
        }
    }
}
