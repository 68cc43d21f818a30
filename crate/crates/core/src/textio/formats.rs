//! Readers and writers for every on-disk artifact.
//!
//! All writers go through [`write_atomic`]: output is staged in a temporary
//! file next to the destination and renamed into place only on success.
//! Text readers skip blank lines and lines starting with `#`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Document, Vocabulary};
use crate::invariance::{Normalization, ScaleDistribution};
use crate::semgraph::SemanticGraph;
use crate::signals::{Signal2D, SignalKind, TopicTable};
use crate::{Error, Result};

/// Relevance grades keyed by query id, then document id.
pub type Qrels = BTreeMap<String, BTreeMap<String, i32>>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

/// A ranked run keyed by query id; entries are in rank order.
pub type Run = BTreeMap<String, Vec<RunEntry>>;

pub fn write_atomic<F>(path: impl AsRef<Path>, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Iterates over meaningful lines as `(1-based line number, text)`.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn parse_real(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::format(path, line, format!("not a number: '{field}'")))?;
    if !v.is_finite() {
        return Err(Error::format(path, line, format!("non-finite value '{field}'")));
    }
    Ok(v)
}

fn parse_count(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format(path, line, format!("not a non-negative integer: '{field}'")))
}

fn tab_fields<'a>(path: &Path, line: usize, text: &'a str, expected: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != expected {
        return Err(Error::format(
            path,
            line,
            format!("expected {expected} tab-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

// ---------------------------------------------------------------- corpus

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let mut docs: Vec<Document> = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, text) in content_lines(path)? {
        let doc: Document = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, line, format!("invalid corpus record: {e}")))?;
        if doc.id.is_empty() {
            return Err(Error::format(path, line, "empty document id"));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::format(path, line, format!("duplicate document id '{}'", doc.id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_atomic(path, |w| {
        for doc in docs {
            serde_json::to_writer(&mut *w, doc)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

// ------------------------------------------------------------ vocabulary

pub fn write_vocabulary(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
    write_atomic(path, |w| {
        for (i, word, df) in vocab.iter() {
            writeln!(w, "{i}\t{word}\t{df}")?;
        }
        Ok(())
    })
}

pub fn read_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, text) in content_lines(path)? {
        let f = tab_fields(path, line, &text, 3)?;
        let index = parse_count(path, line, f[0])?;
        if index != entries.len() {
            return Err(Error::format(
                path,
                line,
                format!("index {index} out of order, expected {}", entries.len()),
            ));
        }
        let word = f[1].to_string();
        if word.is_empty() {
            return Err(Error::format(path, line, "empty word"));
        }
        if !seen.insert(word.clone()) {
            return Err(Error::format(path, line, format!("duplicate word '{word}'")));
        }
        let df = parse_count(path, line, f[2])? as u64;
        if df == 0 {
            return Err(Error::format(path, line, "document frequency must be at least 1"));
        }
        entries.push((word, df));
    }
    Vocabulary::from_entries(entries)
}

// --------------------------------------------------------- semantic graph

pub fn write_graph(path: impl AsRef<Path>, graph: &SemanticGraph, vocab: &Vocabulary) -> Result<()> {
    if graph.size() != vocab.len() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, vocabulary has {} words",
            graph.size(),
            vocab.len()
        )));
    }
    write_atomic(path, |w| {
        for (y, z, weight) in graph.edges() {
            writeln!(w, "{}\t{}\t{}", vocab.words()[y], vocab.words()[z], weight)?;
        }
        for (y, &mu) in graph.node_weights().iter().enumerate() {
            if mu != 1.0 {
                writeln!(w, "{}\t*\t{}", vocab.words()[y], mu)?;
            }
        }
        Ok(())
    })
}

pub fn read_graph(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<SemanticGraph> {
    let path = path.as_ref();
    let mut graph = SemanticGraph::new(vocab.len());
    let lookup = |line: usize, word: &str| {
        vocab
            .index_of(word)
            .ok_or_else(|| Error::format(path, line, format!("word '{word}' is not in the vocabulary")))
    };
    for (line, text) in content_lines(path)? {
        let f = tab_fields(path, line, &text, 3)?;
        let weight = parse_real(path, line, f[2])?;
        if weight <= 0.0 {
            return Err(Error::format(path, line, format!("weight must be positive, got {weight}")));
        }
        let y = lookup(line, f[0])?;
        if f[1] == "*" {
            graph
                .set_node_weight(y, weight)
                .map_err(|e| Error::format(path, line, e.to_string()))?;
            continue;
        }
        let z = lookup(line, f[1])?;
        if graph.weight(y, z).is_some() {
            return Err(Error::format(path, line, format!("pair ({}, {}) listed twice", f[0], f[1])));
        }
        graph
            .add_edge(y, z, weight)
            .map_err(|e| Error::format(path, line, e.to_string()))?;
    }
    Ok(graph)
}

// ---------------------------------------------------------------- matrices

/// Writes a real matrix as `TSS1 rows cols` followed by tab-separated rows.
/// Values use the shortest representation that parses back to the same bits.
pub fn write_matrix(path: impl AsRef<Path>, values: &Array2<f64>) -> Result<()> {
    write_atomic(path, |w| write_matrix_to(w, values))
}

pub fn write_matrix_to(w: &mut dyn Write, values: &Array2<f64>) -> io::Result<()> {
    writeln!(w, "TSS1 {} {}", values.nrows(), values.ncols())?;
    for row in values.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b"\t")?;
            }
            first = false;
            write!(w, "{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let lines = content_lines(path)?;
    let (header_line, header) = lines
        .first()
        .ok_or_else(|| Error::format(path, 1, "missing TSS1 header"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "TSS1" {
        return Err(Error::format(path, *header_line, "expected header 'TSS1 rows cols'"));
    }
    let rows = parse_count(path, *header_line, parts[1])?;
    let cols = parse_count(path, *header_line, parts[2])?;
    let body = &lines[1..];
    if body.len() != rows {
        let line = body.last().map_or(*header_line, |(l, _)| *l);
        return Err(Error::format(path, line, format!("expected {rows} rows, found {}", body.len())));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (line, text) in body {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != cols {
            return Err(Error::format(
                path,
                *line,
                format!("expected {cols} columns, found {}", fields.len()),
            ));
        }
        for f in fields {
            data.push(parse_real(path, *line, f)?);
        }
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::format(path, *header_line, e.to_string()))
}

pub fn write_signal(path: impl AsRef<Path>, signal: &Signal2D) -> Result<()> {
    write_matrix(path, signal.values())
}

/// Reads a non-negative signal matrix; the file does not record the kind.
pub fn read_signal(path: impl AsRef<Path>, kind: SignalKind) -> Result<Signal2D> {
    let path = path.as_ref();
    let values = read_matrix(path)?;
    if let Some(v) = values.iter().find(|v| **v < 0.0) {
        return Err(Error::format(path, 1, format!("signal contains negative entry {v}")));
    }
    Signal2D::new(values, kind)
}

// ------------------------------------------------------- topic embeddings

pub fn read_topic_table(path: impl AsRef<Path>) -> Result<TopicTable> {
    let path = path.as_ref();
    let mut table: Option<TopicTable> = None;
    for (line, text) in content_lines(path)? {
        let f = tab_fields(path, line, &text, 3)?;
        let sentence = parse_count(path, line, f[1])?;
        let vector = f[2]
            .split(',')
            .map(|v| parse_real(path, line, v))
            .collect::<Result<Vec<_>>>()?;
        let table = table.get_or_insert_with(|| TopicTable::new(vector.len()));
        if vector.len() != table.dim() {
            return Err(Error::format(
                path,
                line,
                format!("embedding has {} components, expected {}", vector.len(), table.dim()),
            ));
        }
        if !table.insert(f[0], sentence, vector) {
            return Err(Error::format(path, line, format!("duplicate entry ({}, {sentence})", f[0])));
        }
    }
    table.ok_or_else(|| Error::format(path, 1, "topic table is empty"))
}

pub fn write_topic_table(path: impl AsRef<Path>, table: &TopicTable) -> Result<()> {
    write_atomic(path, |w| {
        for ((doc, sentence), vector) in table.iter() {
            let joined: Vec<String> = vector.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{doc}\t{sentence}\t{}", joined.join(","))?;
        }
        Ok(())
    })
}

// ------------------------------------------------------ scale distribution

pub fn write_scale_distribution(path: impl AsRef<Path>, q: &ScaleDistribution) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# normalization={}", q.normalization().as_str())?;
        for (s, weight) in q.scales().iter().zip(q.weights()) {
            writeln!(w, "{s}\t{weight}")?;
        }
        Ok(())
    })
}

pub fn read_scale_distribution(path: impl AsRef<Path>) -> Result<ScaleDistribution> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut regime = None;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(rest) = line.trim().strip_prefix("# normalization=") {
            regime = Some(Normalization::parse(rest.trim())?);
            break;
        }
    }
    let mut scales = Vec::new();
    let mut weights = Vec::new();
    for (line, text) in content_lines(path)? {
        let f = tab_fields(path, line, &text, 2)?;
        let s = parse_real(path, line, f[0])?;
        if let Some(&prev) = scales.last() {
            if s <= prev {
                return Err(Error::format(path, line, "scales must be strictly ascending"));
            }
        }
        let weight = parse_real(path, line, f[1])?;
        if weight < 0.0 || s < 0.0 {
            return Err(Error::format(path, line, "scales and weights must be non-negative"));
        }
        scales.push(s);
        weights.push(weight);
    }
    if scales.is_empty() {
        return Err(Error::format(path, 1, "scale distribution is empty"));
    }
    let regime = match regime {
        Some(r) => r,
        None => {
            let sum: f64 = weights.iter().sum();
            let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            if (sum - 1.0).abs() < 1e-9 {
                Normalization::Probability
            } else if (norm - 1.0).abs() < 1e-9 {
                Normalization::L2
            } else {
                return Err(Error::format(path, 1, "weights are neither l2- nor probability-normalized"));
            }
        }
    };
    ScaleDistribution::new(scales, weights, regime)
}

// ------------------------------------------------------------ qrels & runs

pub fn read_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let mut qrels = Qrels::new();
    for (line, text) in content_lines(path)? {
        let f: Vec<&str> = text.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::format(path, line, "expected 'query_id 0 doc_id relevance'"));
        }
        let grade: i32 = f[3]
            .parse()
            .map_err(|_| Error::format(path, line, format!("bad relevance grade '{}'", f[3])))?;
        qrels
            .entry(f[0].to_string())
            .or_default()
            .insert(f[2].to_string(), grade);
    }
    Ok(qrels)
}

pub fn write_qrels(path: impl AsRef<Path>, qrels: &Qrels) -> Result<()> {
    write_atomic(path, |w| {
        for (query, docs) in qrels {
            for (doc, grade) in docs {
                writeln!(w, "{query} 0 {doc} {grade}")?;
            }
        }
        Ok(())
    })
}

pub fn read_run(path: impl AsRef<Path>) -> Result<Run> {
    let path = path.as_ref();
    let mut run = Run::new();
    for (line, text) in content_lines(path)? {
        let f: Vec<&str> = text.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::format(path, line, "expected 'query_id Q0 doc_id rank score tag'"));
        }
        let rank = parse_count(path, line, f[3])?;
        let score = parse_real(path, line, f[4])?;
        run.entry(f[0].to_string()).or_default().push(RunEntry {
            doc_id: f[2].to_string(),
            rank,
            score,
        });
    }
    for entries in run.values_mut() {
        entries.sort_by(|a, b| {
            a.rank
                .cmp(&b.rank)
                .then(b.score.total_cmp(&a.score))
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
    }
    Ok(run)
}

pub fn write_run(path: impl AsRef<Path>, run: &Run, tag: &str) -> Result<()> {
    write_atomic(path, |w| {
        for (query, entries) in run {
            for e in entries {
                writeln!(w, "{query} Q0 {} {} {} {tag}", e.doc_id, e.rank, e.score)?;
            }
        }
        Ok(())
    })
}

/// Reads `id<TAB>label[,label...]` rows used for classification evaluation.
pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (line, text) in content_lines(path)? {
        let f = tab_fields(path, line, &text, 2)?;
        let labels: BTreeSet<String> = f[1]
            .split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if out.insert(f[0].to_string(), labels).is_some() {
            return Err(Error::format(path, line, format!("duplicate id '{}'", f[0])));
        }
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &BTreeMap<String, BTreeSet<String>>) -> Result<()> {
    write_atomic(path, |w| {
        for (id, set) in labels {
            let joined: Vec<&str> = set.iter().map(String::as_str).collect();
            writeln!(w, "{id}\t{}", joined.join(","))?;
        }
        Ok(())
    })
}
