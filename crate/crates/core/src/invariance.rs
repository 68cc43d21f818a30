//! Single-scale kernels and relevance functions, their expectation under a
//! learned scale distribution, and the closed-form learning of that
//! distribution from margins.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, Zip};
use rayon::prelude::*;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// Frobenius inner product.
    Linear,
    /// `exp(-|a - b|^2 / (2 sigma^2))`.
    Rbf(f64),
    /// One minus the base-2 Jensen-Shannon divergence of the normalized
    /// signals.
    JensenShannon,
}

impl KernelKind {
    /// Accepts `linear`, `rbf` (sigma 1), `rbf:<sigma>` and `js`.
    pub fn parse(name: &str) -> Result<Self> {
        let kind = match name {
            "linear" => KernelKind::Linear,
            "rbf" => KernelKind::Rbf(1.0),
            "js" | "jensen-shannon" => KernelKind::JensenShannon,
            other => match other.strip_prefix("rbf:").map(str::parse::<f64>) {
                Some(Ok(sigma)) => KernelKind::Rbf(sigma),
                _ => return Err(Error::param(format!("unknown kernel kind '{other}'"))),
            },
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(self) -> Result<()> {
        match self {
            KernelKind::Rbf(sigma) if !(sigma > 0.0) || !sigma.is_finite() => {
                Err(Error::param(format!("rbf sigma must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    /// Kinds whose self-similarity is always one.
    pub fn has_unit_diagonal(self) -> bool {
        !matches!(self, KernelKind::Linear)
    }
}

fn check_shapes(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("{:?} against {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

fn total(a: &Array2<f64>) -> Result<f64> {
    let sum = a.sum();
    if !(sum > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(sum)
}

fn xlog2(p: f64, ratio: f64) -> f64 {
    if p > 0.0 {
        p * ratio.log2()
    } else {
        0.0
    }
}

/// Base-2 Jensen-Shannon divergence of the normalized signals, in `[0, 1]`.
pub fn jensen_shannon(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_shapes(a, b)?;
    let (sa, sb) = (total(a)?, total(b)?);
    let mut js = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| {
        let (p, q) = (x / sa, y / sb);
        let m = 0.5 * (p + q);
        if m > 0.0 {
            js += 0.5 * xlog2(p, p / m) + 0.5 * xlog2(q, q / m);
        }
    });
    Ok(js.clamp(0.0, 1.0))
}

pub fn single_scale_kernel(a: &Array2<f64>, b: &Array2<f64>, kind: KernelKind) -> Result<f64> {
    check_shapes(a, b)?;
    kind.validate()?;
    Ok(match kind {
        KernelKind::Linear => Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y),
        KernelKind::Rbf(sigma) => {
            let sq = Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y));
            (-sq / (2.0 * sigma * sigma)).exp()
        }
        KernelKind::JensenShannon => 1.0 - jensen_shannon(a, b)?,
    })
}

/// Kernel-induced distance from the three Gram entries; a negative radicand
/// is clamped to zero.
pub fn distance_from_gram(k_aa: f64, k_bb: f64, k_ab: f64) -> f64 {
    (k_aa + k_bb - 2.0 * k_ab).max(0.0).sqrt()
}

pub fn scale_distance(a: &Array2<f64>, b: &Array2<f64>, kind: KernelKind) -> Result<f64> {
    Ok(distance_from_gram(
        single_scale_kernel(a, a, kind)?,
        single_scale_kernel(b, b, kind)?,
        single_scale_kernel(a, b, kind)?,
    ))
}

/// Per-scale Gram matrices. `docs[i][j]` is document `i` at scale `j`.
pub fn gram_matrices(docs: &[Vec<Array2<f64>>], kind: KernelKind) -> Result<Vec<Array2<f64>>> {
    let n = docs.len();
    let m = docs.first().map_or(0, Vec::len);
    if let Some(bad) = docs.iter().position(|d| d.len() != m) {
        return Err(Error::DimensionMismatch(format!(
            "document {bad} has {} scales, expected {m}",
            docs[bad].len()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |k| (i, k))).collect();
    (0..m)
        .map(|j| {
            let values: Vec<f64> = pairs
                .par_iter()
                .map(|&(i, k)| single_scale_kernel(&docs[i][j], &docs[k][j], kind))
                .collect::<Result<_>>()?;
            let mut gram = Array2::zeros((n, n));
            for (&(i, k), v) in pairs.iter().zip(values) {
                gram[[i, k]] = v;
                gram[[k, i]] = v;
            }
            Ok(gram)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    L2,
    Probability,
}

impl Normalization {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "l2" => Ok(Normalization::L2),
            "probability" => Ok(Normalization::Probability),
            other => Err(Error::param(format!("unknown normalization '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::L2 => "l2",
            Normalization::Probability => "probability",
        }
    }
}

const NORM_TOLERANCE: f64 = 1e-9;

/// Non-negative weights over a ladder of scales, with an explicit
/// normalization regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDistribution {
    scales: Vec<f64>,
    weights: Vec<f64>,
    normalization: Normalization,
}

impl ScaleDistribution {
    /// Validates and renormalizes exactly under the given regime.
    pub fn new(scales: Vec<f64>, weights: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if scales.len() != weights.len() || scales.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} scales and {} weights",
                scales.len(),
                weights.len()
            )));
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidRange("scales must be strictly ascending".into()));
        }
        if let Some(&bad) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::param(format!("scale weights must be finite and non-negative, got {bad}")));
        }
        let norm = match normalization {
            Normalization::L2 => weights.iter().map(|w| w * w).sum::<f64>().sqrt(),
            Normalization::Probability => weights.iter().sum(),
        };
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::param(format!(
                "scale weights have {} norm {norm}, expected 1",
                normalization.as_str()
            )));
        }
        let weights = weights.into_iter().map(|w| w / norm).collect();
        Ok(ScaleDistribution { scales, weights, normalization })
    }

    pub fn uniform(scales: Vec<f64>) -> Result<Self> {
        let w = 1.0 / scales.len().max(1) as f64;
        Self::new(scales.clone(), vec![w; scales.len()], Normalization::Probability)
    }

    /// All mass on ladder index `j`.
    pub fn concentrated(scales: Vec<f64>, j: usize) -> Result<Self> {
        let mut weights = vec![0.0; scales.len()];
        *weights
            .get_mut(j)
            .ok_or_else(|| Error::param(format!("scale index {j} outside a ladder of {}", scales.len())))? = 1.0;
        Self::new(scales, weights, Normalization::Probability)
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn renormalized(&self, normalization: Normalization) -> Self {
        let norm = match normalization {
            Normalization::L2 => self.weights.iter().map(|w| w * w).sum::<f64>().sqrt(),
            Normalization::Probability => self.weights.iter().sum(),
        };
        ScaleDistribution {
            scales: self.scales.clone(),
            weights: self.weights.iter().map(|w| w / norm).collect(),
            normalization,
        }
    }

    pub fn to_probability(&self) -> Self {
        self.renormalized(Normalization::Probability)
    }

    pub fn to_l2(&self) -> Self {
        self.renormalized(Normalization::L2)
    }

    /// `sum_j q_j f(j)` for a probability-normalized distribution.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        if self.normalization != Normalization::Probability {
            return Err(Error::param("expectations need a probability-normalized scale distribution"));
        }
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} scales",
                values.len(),
                self.len()
            )));
        }
        Ok(self.weights.iter().zip(values).map(|(q, v)| q * v).sum())
    }
}

/// Margins, one row per training instance and one column per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginTable {
    instances: Vec<String>,
    scales: Vec<f64>,
    values: Array2<f64>,
}

impl MarginTable {
    pub fn new(instances: Vec<String>, scales: Vec<f64>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (instances.len(), scales.len()) {
            return Err(Error::DimensionMismatch(format!(
                "margin values {:?} for {} instances and {} scales",
                values.dim(),
                instances.len(),
                scales.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("margins must be finite"));
        }
        Ok(MarginTable { instances, scales, values })
    }

    pub fn instances(&self) -> &[String] {
        &self.instances
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.values.nrows().max(1) as f64;
        self.values.columns().into_iter().map(|c| c.sum() / n).collect()
    }

    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        write!(w, "instance")?;
        for s in &self.scales {
            write!(w, ",{s}")?;
        }
        writeln!(w)?;
        for (name, row) in self.instances.iter().zip(self.values.rows()) {
            write!(w, "{name}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Nearest-hit / nearest-miss margins from per-scale Gram matrices.
///
/// At every scale each document's nearest same-class and nearest
/// other-class documents are found under the kernel distance at that scale,
/// ties going to the lowest index; the margin is
/// `dist(miss) - dist(hit)`.
pub fn hit_miss_margins_from_gram(
    ids: &[String],
    labels: &[String],
    scales: &[f64],
    grams: &[Array2<f64>],
) -> Result<MarginTable> {
    let n = labels.len();
    if ids.len() != n {
        return Err(Error::DimensionMismatch(format!("{} ids for {n} labels", ids.len())));
    }
    if grams.len() != scales.len() {
        return Err(Error::DimensionMismatch(format!("{} Gram matrices for {} scales", grams.len(), scales.len())));
    }
    if let Some(g) = grams.iter().find(|g| g.dim() != (n, n)) {
        return Err(Error::DimensionMismatch(format!("Gram matrix {:?} for {n} documents", g.dim())));
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    if sizes.len() < 2 {
        return Err(Error::DegenerateClass("margins need at least two classes".into()));
    }
    if let Some((class, _)) = sizes.iter().find(|(_, &c)| c < 2) {
        return Err(Error::DegenerateClass(format!("class '{class}' has a single document")));
    }
    let mut values = Array2::zeros((n, scales.len()));
    for (j, g) in grams.iter().enumerate() {
        for i in 0..n {
            let mut hit = f64::INFINITY;
            let mut miss = f64::INFINITY;
            for k in (0..n).filter(|&k| k != i) {
                let d = distance_from_gram(g[[i, i]], g[[k, k]], g[[i, k]]);
                if labels[k] == labels[i] {
                    hit = hit.min(d);
                } else {
                    miss = miss.min(d);
                }
            }
            values[[i, j]] = miss - hit;
        }
    }
    MarginTable::new(ids.to_vec(), scales.to_vec(), values)
}

/// Margins computed directly from per-scale document representations.
pub fn hit_miss_margins(
    ids: &[String],
    docs: &[Vec<Array2<f64>>],
    labels: &[String],
    scales: &[f64],
    kind: KernelKind,
) -> Result<MarginTable> {
    let grams = gram_matrices(docs, kind)?;
    hit_miss_margins_from_gram(ids, labels, scales, &grams)
}

/// Relevance of a document to a query at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelevanceKind {
    /// `-KL(query || document)` with a small floor inside the logarithm.
    #[default]
    NegativeKl,
    /// One minus the Jensen-Shannon divergence.
    JensenShannon,
}

impl RelevanceKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "kl" => Ok(RelevanceKind::NegativeKl),
            "js" | "jensen-shannon" => Ok(RelevanceKind::JensenShannon),
            other => Err(Error::param(format!("unknown relevance kind '{other}'"))),
        }
    }
}

pub const KL_FLOOR: f64 = 1e-9;

/// Brings the query to the document's shape: a single-row query is
/// replicated down the document's rows, a multi-row query of a different
/// length is first collapsed to its column sums.
pub fn align_query(query: &Array2<f64>, doc: &Array2<f64>) -> Result<Array2<f64>> {
    if query.ncols() != doc.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "query over {} columns, document over {}",
            query.ncols(),
            doc.ncols()
        )));
    }
    if query.nrows() == doc.nrows() {
        return Ok(query.clone());
    }
    let row = query.sum_axis(ndarray::Axis(0));
    Ok(row.broadcast(doc.dim()).expect("row broadcasts").to_owned())
}

pub fn relevance_at_scale(query: &Array2<f64>, doc: &Array2<f64>, kind: RelevanceKind) -> Result<f64> {
    let query = align_query(query, doc)?;
    match kind {
        RelevanceKind::JensenShannon => Ok(1.0 - jensen_shannon(&query, doc)?),
        RelevanceKind::NegativeKl => {
            let (sq, sd) = (total(&query)?, total(doc)?);
            let kl = Zip::from(&query).and(doc).fold(0.0, |acc, &a, &b| {
                let p = a / sq;
                if p > 0.0 {
                    acc + p * ((p + KL_FLOOR) / (b / sd + KL_FLOOR)).ln()
                } else {
                    acc
                }
            });
            Ok(-kl)
        }
    }
}

/// Per-scale relevances of one document's levels against the query's.
pub fn relevance_profile(query: &[Array2<f64>], doc: &[Array2<f64>], kind: RelevanceKind) -> Result<Vec<f64>> {
    if query.len() != doc.len() {
        return Err(Error::DimensionMismatch(format!(
            "query has {} scales, document {}",
            query.len(),
            doc.len()
        )));
    }
    query
        .iter()
        .zip(doc)
        .map(|(q, d)| relevance_at_scale(q, d, kind))
        .collect()
}

/// Expected relevance over the scale distribution.
pub fn silm_relevance(
    query: &[Array2<f64>],
    doc: &[Array2<f64>],
    dist: &ScaleDistribution,
    kind: RelevanceKind,
) -> Result<f64> {
    dist.expectation(&relevance_profile(query, doc, kind)?)
}

/// Expected single-scale kernel over the scale distribution.
pub fn sitk(a: &[Array2<f64>], b: &[Array2<f64>], dist: &ScaleDistribution, kind: KernelKind) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} against {} scales", a.len(), b.len())));
    }
    let per_scale: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| single_scale_kernel(x, y, kind))
        .collect::<Result<_>>()?;
    dist.expectation(&per_scale)
}

/// The combined Gram matrix `sum_j q_j G_j`.
pub fn sitk_matrix(grams: &[Array2<f64>], dist: &ScaleDistribution) -> Result<Array2<f64>> {
    if dist.normalization() != Normalization::Probability {
        return Err(Error::param("SITK needs a probability-normalized scale distribution"));
    }
    if grams.len() != dist.len() {
        return Err(Error::DimensionMismatch(format!("{} Gram matrices for {} scales", grams.len(), dist.len())));
    }
    let Some(first) = grams.first() else {
        return Err(Error::param("no Gram matrices"));
    };
    let mut out = Array2::zeros(first.dim());
    for (g, &q) in grams.iter().zip(dist.weights()) {
        out.scaled_add(q, g);
    }
    Ok(out)
}

/// Judged documents of one query with their per-scale relevances.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgedQuery {
    pub query_id: String,
    pub doc_ids: Vec<String>,
    pub grades: Vec<i32>,
    /// Documents by scales.
    pub relevance: Array2<f64>,
}

/// One row per ordered preference `d_i > d_j` (higher grade first) per
/// query: `r(Q, d_i | s) - r(Q, d_j | s)`.
pub fn pairwise_margins(queries: &[JudgedQuery], scales: &[f64]) -> Result<MarginTable> {
    let mut names = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for q in queries {
        let n = q.doc_ids.len();
        if q.grades.len() != n || q.relevance.dim() != (n, scales.len()) {
            return Err(Error::DimensionMismatch(format!(
                "query {}: {} documents, {} grades, relevance {:?}, {} scales",
                q.query_id,
                n,
                q.grades.len(),
                q.relevance.dim(),
                scales.len()
            )));
        }
        let before = names.len();
        for i in 0..n {
            for j in 0..n {
                if q.grades[i] > q.grades[j] {
                    names.push(format!("{}:{}>{}", q.query_id, q.doc_ids[i], q.doc_ids[j]));
                    rows.extend(q.relevance.row(i).iter().zip(q.relevance.row(j)).map(|(a, b)| a - b));
                }
            }
        }
        if names.len() == before {
            log::warn!("query {} has no preference pairs", q.query_id);
        }
    }
    if names.is_empty() {
        return Err(Error::NoPreferencePairs);
    }
    let values = Array2::from_shape_vec((names.len(), scales.len()), rows).expect("row-major margins");
    MarginTable::new(names, scales.to_vec(), values)
}

/// Closed-form maximizer of the mean margin over the non-negative part of
/// the unit sphere: the positive part of the column means, normalized.
pub fn learn_scale_distribution(margins: &MarginTable) -> Result<ScaleDistribution> {
    if margins.values().nrows() == 0 || margins.scales().is_empty() {
        return Err(Error::param("empty margin table"));
    }
    let positive: Vec<f64> = margins.column_means().into_iter().map(|h| h.max(0.0)).collect();
    let norm = positive.iter().map(|h| h * h).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::NoPositiveMargin);
    }
    ScaleDistribution::new(
        margins.scales().to_vec(),
        positive.into_iter().map(|h| h / norm).collect(),
        Normalization::L2,
    )
}
