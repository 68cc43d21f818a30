//! End-to-end pipelines: keyword trees, hierarchical segmentation, passage
//! retrieval, and the evaluation metrics used by the harnesses.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::invariance::{silm_relevance, RelevanceKind, ScaleDistribution};
use crate::kernels::BoundaryPolicy;
use crate::scalespace::{
    build_stack, derivative_stack, detect_extrema_2d, detect_interest_points, interval_tree_from_extrema,
    linking_radius, ExtremumKind, ScaleLadder, ScaleSpaceStack, SemanticNeighborhood, StackConfig,
};
use crate::semgraph::SemanticSmoother;
use crate::signals::{sentence2d_signal, word2d_signal};
use crate::textio::{Document, Qrels, Run, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub word: String,
    pub x: usize,
    pub s_emerge: f64,
    pub depth: usize,
    /// Index of the parent keyword in [`KeywordTree::keywords`].
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeywordTree {
    keywords: Vec<Keyword>,
}

impl KeywordTree {
    /// Keywords ordered coarse to fine.
    pub fn keywords(&self) -> &[Keyword] {
        &self.keywords
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn roots(&self) -> impl Iterator<Item = &Keyword> {
        self.keywords.iter().filter(|k| k.parent.is_none())
    }

    pub fn write_jsonl(&self, w: &mut dyn Write) -> std::io::Result<()> {
        for k in &self.keywords {
            serde_json::to_writer(&mut *w, k)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Tracks the maxima of the word-level signal through scale and reads each
/// tree node as the word at its semantic index. A word appearing more than
/// once at the same depth keeps only its coarsest occurrence.
pub fn keyword_hierarchy(
    doc: &Document,
    vocab: &Vocabulary,
    semantic: &SemanticSmoother,
    ladder: &ScaleLadder,
    config: &StackConfig,
) -> Result<KeywordTree> {
    let signal = word2d_signal(doc, vocab)?;
    let stack = build_stack(&signal, ladder, semantic, config)?;
    let extrema: Vec<_> = stack
        .levels()
        .iter()
        .map(|level| {
            detect_extrema_2d(level.values(), SemanticNeighborhood::Whole)
                .into_iter()
                .filter(|e| e.kind == ExtremumKind::Maximum)
                .collect()
        })
        .collect();
    let tree = interval_tree_from_extrema(ladder.scales(), &extrema)?;
    let nodes = tree.nodes();
    let mut depth = vec![0usize; nodes.len()];
    for n in nodes {
        // Parents are always created before their children.
        depth[n.node_id] = n.parent_id.map_or(0, |p| depth[p] + 1);
    }
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| {
        nodes[b]
            .s_emerge
            .total_cmp(&nodes[a].s_emerge)
            .then(nodes[b].value.total_cmp(&nodes[a].value))
            .then(nodes[a].x.cmp(&nodes[b].x))
    });
    let mut keywords: Vec<Keyword> = Vec::new();
    let mut slot_of_node: HashMap<usize, usize> = HashMap::new();
    let mut slot_of_word: HashMap<(String, usize), usize> = HashMap::new();
    for id in order {
        let node = &nodes[id];
        let y = node.y.expect("two-dimensional extrema carry a word index");
        let word = vocab.word(y).expect("extremum inside the vocabulary").to_string();
        let key = (word.clone(), depth[id]);
        if let Some(&slot) = slot_of_word.get(&key) {
            slot_of_node.insert(id, slot);
            continue;
        }
        let slot = keywords.len();
        keywords.push(Keyword {
            word,
            x: node.x,
            s_emerge: node.s_emerge,
            depth: depth[id],
            parent: node.parent_id.map(|p| slot_of_node[&p]),
        });
        slot_of_node.insert(id, slot);
        slot_of_word.insert(key, slot);
    }
    Ok(KeywordTree { keywords })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    /// Sentence index at the finest scale.
    pub x: usize,
    /// Largest scale the boundary contour reaches.
    pub persistence: f64,
    /// 0 for the most persistent third, 1 and 2 below it.
    pub level: usize,
    /// Nearest boundary with strictly larger persistence.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTree {
    boundaries: Vec<Boundary>,
    scales: Vec<f64>,
    velocity: Array2<f64>,
}

impl SegmentTree {
    /// Boundaries in document order.
    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Velocity magnitude, scales by sentences.
    pub fn velocity(&self) -> &Array2<f64> {
        &self.velocity
    }

    pub fn write_jsonl(&self, w: &mut dyn Write) -> std::io::Result<()> {
        for b in &self.boundaries {
            serde_json::to_writer(&mut *w, b)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Velocity curves as `x,s,value` rows.
    pub fn write_velocity_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "x,s,value")?;
        for (j, row) in self.velocity.rows().into_iter().enumerate() {
            for (x, v) in row.iter().enumerate() {
                writeln!(w, "{x},{},{v}", self.scales[j])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentConfig {
    /// Fixed semantic scale applied before spatial differentiation.
    pub semantic_scale: f64,
    pub boundary: BoundaryPolicy,
    pub trunc_mass: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            semantic_scale: 1.0,
            boundary: BoundaryPolicy::Mirror,
            trunc_mass: 1e-12,
        }
    }
}

/// Velocity peaks: `v[x] > v[x-1]` and `v[x] >= v[x+1]` above `floor`.
/// Values that agree to rounding count as equal, so a tie resolves to its
/// leftmost position whatever order the norms were summed in.
fn velocity_peaks(v: &[f64], floor: f64) -> Vec<usize> {
    let above = |a: f64, b: f64| a - b > 1e-12 * a.abs().max(b.abs());
    (1..v.len().saturating_sub(1))
        .filter(|&x| v[x] > floor && above(v[x], v[x - 1]) && !above(v[x + 1], v[x]))
        .collect()
}

/// Segments a document by tracking peaks of `|d gamma / dx|` from the
/// coarsest ladder scale down to scale zero. Sentence rows are normalized to
/// unit mass first so that sentence length alone does not register as
/// change.
pub fn hierarchical_segment(
    doc: &Document,
    vocab: &Vocabulary,
    semantic: &SemanticSmoother,
    ladder: &ScaleLadder,
    config: &SegmentConfig,
) -> Result<SegmentTree> {
    let n = doc.sentences.len();
    if n < 3 {
        return Err(Error::TooShort(n));
    }
    let mut values = sentence2d_signal(doc, vocab)?.into_values();
    for mut row in values.rows_mut() {
        let mass = row.sum();
        if mass > 0.0 {
            row /= mass;
        }
    }
    let values = semantic.operator(config.semantic_scale)?.apply_rows(&values)?;
    let ladder = ladder.clone().with_zero();
    let derivatives = derivative_stack(&values, &ladder, 1, config.boundary, config.trunc_mass)?;
    let mut velocity = Array2::zeros((ladder.len(), n));
    for (j, d) in derivatives.iter().enumerate() {
        velocity
            .row_mut(j)
            .assign(&d.map_axis(Axis(1), |r| r.dot(&r).sqrt()));
    }
    let scale_of_signal = values
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0f64, f64::max);
    let floor = 1e-9 * scale_of_signal;
    let scales = ladder.scales().to_vec();
    let peaks: Vec<Vec<usize>> = velocity
        .rows()
        .into_iter()
        .map(|r| velocity_peaks(&r.to_vec(), floor))
        .collect();

    // Contours as (current x, top scale), linked one-to-one coarse to fine.
    let top = scales.len() - 1;
    let mut contours: Vec<(usize, f64)> = peaks[top].iter().map(|&x| (x, scales[top])).collect();
    for level in (0..top).rev() {
        let radius = linking_radius(scales[level + 1] - scales[level]);
        let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
        for (ci, &(cx, _)) in contours.iter().enumerate() {
            for (pi, &px) in peaks[level].iter().enumerate() {
                let d = cx.abs_diff(px);
                if d <= radius {
                    pairs.push((d, ci, pi));
                }
            }
        }
        pairs.sort_unstable_by_key(|&(d, ci, pi)| (d, std::cmp::Reverse(contours[ci].1.to_bits()), ci, pi));
        let mut used_c = vec![false; contours.len()];
        let mut used_p = vec![false; peaks[level].len()];
        let mut next = Vec::new();
        for (_, ci, pi) in pairs {
            if !used_c[ci] && !used_p[pi] {
                used_c[ci] = true;
                used_p[pi] = true;
                next.push((peaks[level][pi], contours[ci].1));
            }
        }
        for (pi, &px) in peaks[level].iter().enumerate() {
            if !used_p[pi] {
                next.push((px, scales[level]));
            }
        }
        contours = next;
    }
    contours.retain(|&(_, s)| s > 0.0);
    contours.sort_by_key(|&(x, _)| x);

    let mut distinct: Vec<f64> = contours.iter().map(|c| c.1).collect();
    distinct.sort_by(|a, b| b.total_cmp(a));
    let count = distinct.len();
    let level_of = |p: f64| {
        let rank = distinct.iter().position(|&d| d == p).expect("persistence present");
        (3 * rank / count.max(1)).min(2)
    };
    let boundaries = contours
        .iter()
        .map(|&(x, p)| {
            let parent = contours
                .iter()
                .enumerate()
                .filter(|(_, c)| c.1 > p)
                .min_by_key(|(i, c)| (c.0.abs_diff(x), *i))
                .map(|(i, _)| i);
            Boundary {
                x,
                persistence: p,
                level: level_of(p),
                parent,
            }
        })
        .collect();
    Ok(SegmentTree {
        boundaries,
        scales,
        velocity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    /// First sentence of the passage.
    pub start: usize,
    /// One past the last sentence.
    pub end: usize,
    pub score: f64,
}

fn window_levels(stack: &ScaleSpaceStack, start: usize, width: usize) -> Vec<Array2<f64>> {
    stack
        .levels()
        .iter()
        .map(|l| l.values().slice(s![start..start + width, ..]).to_owned())
        .collect()
}

fn check_window(stack: &ScaleSpaceStack, window: usize) -> Result<usize> {
    let n = stack.base().spatial_len();
    if window == 0 || n <= window {
        return Err(Error::param(format!(
            "passage window {window} needs a document longer than the window, got {n}"
        )));
    }
    Ok(n)
}

/// Scores windows centered on the document's interest points against the
/// query, merges overlapping windows into their union with the best score,
/// and ranks the result.
pub fn passage_retrieve(
    query: &[Array2<f64>],
    doc: &ScaleSpaceStack,
    dist: &ScaleDistribution,
    window: usize,
    kind: RelevanceKind,
    contrast: f64,
) -> Result<Vec<Passage>> {
    let n = check_window(doc, window)?;
    let points = detect_interest_points(doc, contrast)?;
    let mut starts: Vec<usize> = points
        .iter()
        .map(|p| p.x.saturating_sub(window / 2).min(n - window))
        .collect();
    starts.sort_unstable();
    starts.dedup();
    let mut scored = Vec::with_capacity(starts.len());
    for start in starts {
        let score = silm_relevance(query, &window_levels(doc, start, window), dist, kind)?;
        scored.push(Passage {
            start,
            end: start + window,
            score,
        });
    }
    let mut merged: Vec<Passage> = Vec::new();
    for p in scored {
        match merged.last_mut() {
            Some(last) if p.start < last.end => {
                last.end = last.end.max(p.end);
                last.score = last.score.max(p.score);
            }
            _ => merged.push(p),
        }
    }
    merged.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.start.cmp(&b.start)));
    Ok(merged)
}

/// Every window of the given width with its score, in document order.
pub fn exhaustive_passages(
    query: &[Array2<f64>],
    doc: &ScaleSpaceStack,
    dist: &ScaleDistribution,
    window: usize,
    kind: RelevanceKind,
) -> Result<Vec<Passage>> {
    let n = check_window(doc, window)?;
    (0..=n - window)
        .map(|start| {
            Ok(Passage {
                start,
                end: start + window,
                score: silm_relevance(query, &window_levels(doc, start, window), dist, kind)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub average_precision: f64,
    pub p5: f64,
    pub p10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub map: f64,
    pub p5: f64,
    pub p10: f64,
    pub per_query: BTreeMap<String, QueryMetrics>,
}

fn precision_at(relevant: &[bool], k: usize) -> f64 {
    relevant.iter().take(k).filter(|&&r| r).count() as f64 / k as f64
}

/// MAP and precision at 5 and 10 over the queries of the run. A document is
/// relevant when its judgment is positive; unjudged documents are not.
pub fn evaluate_retrieval(run: &Run, qrels: &Qrels) -> Result<RetrievalReport> {
    let mut per_query = BTreeMap::new();
    for (query, entries) in run {
        let judged = qrels
            .get(query)
            .ok_or_else(|| Error::MissingJudgments(query.clone()))?;
        let total_relevant = judged.values().filter(|&&g| g > 0).count();
        let mut ranked: Vec<_> = entries.iter().collect();
        ranked.sort_by_key(|e| e.rank);
        let relevant: Vec<bool> = ranked
            .iter()
            .map(|e| judged.get(&e.doc_id).is_some_and(|&g| g > 0))
            .collect();
        let mut hits = 0;
        let mut sum = 0.0;
        for (i, &r) in relevant.iter().enumerate() {
            if r {
                hits += 1;
                sum += hits as f64 / (i + 1) as f64;
            }
        }
        let average_precision = if total_relevant == 0 { 0.0 } else { sum / total_relevant as f64 };
        per_query.insert(
            query.clone(),
            QueryMetrics {
                average_precision,
                p5: precision_at(&relevant, 5),
                p10: precision_at(&relevant, 10),
            },
        );
    }
    let n = per_query.len().max(1) as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| per_query.values().map(f).sum::<f64>() / n;
    Ok(RetrievalReport {
        map: mean(|m| m.average_precision),
        p5: mean(|m| m.p5),
        p10: mean(|m| m.p10),
        per_query,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub micro_f1: f64,
    pub per_class: BTreeMap<String, ClassCounts>,
}

pub type LabelSets = BTreeMap<String, BTreeSet<String>>;

/// Micro-averaged F1 over the one-vs-all decisions of every class. With no
/// labels predicted or expected anywhere the score is 1.
pub fn evaluate_classification(predictions: &LabelSets, gold: &LabelSets) -> Result<ClassificationReport> {
    if let Some(id) = predictions.keys().find(|k| !gold.contains_key(*k)) {
        return Err(Error::LabelMismatch(format!("prediction for unknown instance {id}")));
    }
    if let Some(id) = gold.keys().find(|k| !predictions.contains_key(*k)) {
        return Err(Error::LabelMismatch(format!("no prediction for instance {id}")));
    }
    let mut per_class: BTreeMap<String, ClassCounts> = BTreeMap::new();
    for (id, truth) in gold {
        let predicted = &predictions[id];
        for label in predicted.union(truth) {
            let c = per_class.entry(label.clone()).or_default();
            match (predicted.contains(label), truth.contains(label)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let (tp, fp, fn_) = per_class
        .values()
        .fold((0, 0, 0), |(a, b, c), k| (a + k.tp, b + k.fp, c + k.fn_));
    let denom = 2 * tp + fp + fn_;
    let micro_f1 = if denom == 0 { 1.0 } else { 2.0 * tp as f64 / denom as f64 };
    Ok(ClassificationReport { micro_f1, per_class })
}

/// One-vs-all kernel perceptron over a precomputed Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPerceptron {
    classes: Vec<String>,
    train: Vec<usize>,
    /// Classes by training instances: signed dual coefficients.
    coef: Array2<f64>,
}

impl KernelPerceptron {
    /// Trains on the rows/columns `train` of `gram`, one label per training
    /// instance.
    pub fn train(gram: &Array2<f64>, train: &[usize], labels: &[String], epochs: usize) -> Result<Self> {
        if train.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!("{} instances, {} labels", train.len(), labels.len())));
        }
        if let Some(&bad) = train.iter().find(|&&i| i >= gram.nrows() || i >= gram.ncols()) {
            return Err(Error::param(format!("training index {bad} outside a {:?} Gram matrix", gram.dim())));
        }
        let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let n = train.len();
        let mut coef = Array2::zeros((classes.len(), n));
        for (c, class) in classes.iter().enumerate() {
            let y: Vec<f64> = labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
            for _ in 0..epochs {
                let mut mistakes = 0;
                for i in 0..n {
                    let f: f64 = (0..n).map(|k| coef[[c, k]] * gram[[train[k], train[i]]]).sum();
                    if y[i] * f <= 0.0 {
                        coef[[c, i]] += y[i];
                        mistakes += 1;
                    }
                }
                if mistakes == 0 {
                    break;
                }
            }
        }
        Ok(KernelPerceptron {
            classes,
            train: train.to_vec(),
            coef,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Class with the largest decision value for instance `i` of the Gram
    /// matrix, ties to the first class in sorted order.
    pub fn predict(&self, gram: &Array2<f64>, i: usize) -> &str {
        let mut best = (f64::NEG_INFINITY, 0);
        for c in 0..self.classes.len() {
            let f: f64 = self
                .train
                .iter()
                .enumerate()
                .map(|(k, &t)| self.coef[[c, k]] * gram[[t, i]])
                .sum();
            if f > best.0 {
                best = (f, c);
            }
        }
        &self.classes[best.1]
    }
}

/// Trains on `train`, predicts `test`, and returns the micro-F1 against the
/// single gold label of each instance.
pub fn perceptron_f1(
    gram: &Array2<f64>,
    labels: &[String],
    train: &[usize],
    test: &[usize],
    epochs: usize,
) -> Result<f64> {
    let train_labels: Vec<String> = train.iter().map(|&i| labels[i].clone()).collect();
    let model = KernelPerceptron::train(gram, train, &train_labels, epochs)?;
    let mut predicted = LabelSets::new();
    let mut gold = LabelSets::new();
    for &i in test {
        predicted.insert(i.to_string(), BTreeSet::from([model.predict(gram, i).to_string()]));
        gold.insert(i.to_string(), BTreeSet::from([labels[i].clone()]));
    }
    Ok(evaluate_classification(&predicted, &gold)?.micro_f1)
}
