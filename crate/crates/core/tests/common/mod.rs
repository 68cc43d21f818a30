#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use textscale::semgraph::SemanticGraph;
use textscale::textio::{
    index_document, read_corpus, read_graph, read_vocabulary, Document, PluralStemmer, TokenizerConfig, Vocabulary,
};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn plural_tokens() -> TokenizerConfig {
    TokenizerConfig::default().with_stemmer(Arc::new(PluralStemmer))
}

/// The twelve-word "New York Times offers free iPhone" example: the indexed
/// document, its pinned vocabulary and the hand-made word graph.
pub struct Example {
    pub doc: Document,
    pub vocab: Vocabulary,
    pub graph: SemanticGraph,
}

pub fn example() -> Example {
    let vocab = read_vocabulary(fixture("fig1_vocab.tsv")).expect("vocabulary fixture");
    let graph = read_graph(fixture("fig1_graph.tsv"), &vocab).expect("graph fixture");
    let mut doc = read_corpus(fixture("fig1_corpus.jsonl"))
        .expect("corpus fixture")
        .remove(0);
    index_document(&mut doc, &vocab, &plural_tokens());
    Example { doc, vocab, graph }
}

/// A document built directly from vocabulary indices, one inner vector per
/// sentence. The text spells the indices out so the document can also be
/// written to disk.
pub fn indexed_doc(id: &str, sentences: Vec<Vec<usize>>) -> Document {
    let text = sentences
        .iter()
        .map(|s| s.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(". ");
    let mut doc = Document::new(id, text);
    doc.sentences = sentences;
    doc
}

pub fn word_vocab(size: usize) -> Vocabulary {
    Vocabulary::from_words((0..size).map(|w| format!("w{w}"))).expect("distinct words")
}

/// Random graph on `n` nodes: a spanning path (so it is connected) plus each
/// remaining pair with probability `p`, weights and node weights in
/// [0.5, 2).
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, p: f64) -> SemanticGraph {
    let mut g = SemanticGraph::new(n);
    for y in 1..n {
        g.add_edge(y - 1, y, rng.random_range(0.5..2.0)).unwrap();
    }
    for y in 0..n {
        for z in y + 2..n {
            if rng.random_bool(p) {
                g.add_edge(y, z, rng.random_range(0.5..2.0)).unwrap();
            }
        }
        g.set_node_weight(y, rng.random_range(0.5..2.0)).unwrap();
    }
    g
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}
