//! Textual signals: the word-level and sentence-level 2D signals, the
//! bag-of-words 1D signal and the vector-variate topic signal.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};

use crate::textio::{Document, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    WordLevel,
    SentenceLevel,
    /// Loaded from disk or derived; the origin is not tracked.
    Generic,
}

/// A non-negative matrix indexed by (spatial position, vocabulary index).
#[derive(Debug, Clone, PartialEq)]
pub struct Signal2D {
    values: Array2<f64>,
    kind: SignalKind,
    normalized: bool,
}

impl Signal2D {
    pub fn new(values: Array2<f64>, kind: SignalKind) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::param(format!("signal entries must be finite and non-negative, found {v}")));
        }
        Ok(Signal2D {
            values,
            kind,
            normalized: false,
        })
    }

    /// Wraps values produced by a mass-preserving operation on `self`.
    pub(crate) fn derived(&self, values: Array2<f64>) -> Self {
        Signal2D {
            values,
            kind: self.kind,
            normalized: self.normalized,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn spatial_len(&self) -> usize {
        self.values.nrows()
    }

    pub fn semantic_len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn mass(&self) -> f64 {
        self.values.sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Spatial,
    Semantic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal1D {
    values: Vec<f64>,
    domain: Domain,
    normalized: bool,
}

impl Signal1D {
    pub fn new(values: Vec<f64>, domain: Domain) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::param(format!("signal entries must be finite and non-negative, found {v}")));
        }
        Ok(Signal1D {
            values,
            domain,
            normalized: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// The signal as a one-row matrix, the layout used by scale-space stacks
    /// for semantic-domain vectors.
    pub fn to_row(&self) -> Array2<f64> {
        Array2::from_shape_vec((1, self.values.len()), self.values.clone()).expect("row shape")
    }
}

/// Per-sentence topic embeddings, one row per sentence (N x k). Only spatial
/// smoothing is ever applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicSignal {
    values: Array2<f64>,
}

impl TopicSignal {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("topic embeddings must be finite"));
        }
        Ok(TopicSignal { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn spatial_len(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn resample(&self, new_len: usize) -> Result<TopicSignal> {
        Ok(TopicSignal {
            values: resample_rows(&self.values, new_len)?,
        })
    }
}

/// Precomputed topic embeddings keyed by (document id, sentence index).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopicTable {
    dim: usize,
    rows: BTreeMap<(String, usize), Vec<f64>>,
}

impl TopicTable {
    pub fn new(dim: usize) -> Self {
        TopicTable {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Returns false when the key already exists or the dimension is wrong.
    pub fn insert(&mut self, doc: &str, sentence: usize, vector: Vec<f64>) -> bool {
        if vector.len() != self.dim {
            return false;
        }
        match self.rows.entry((doc.to_string(), sentence)) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(vector);
                true
            }
        }
    }

    pub fn get(&self, doc: &str, sentence: usize) -> Option<&[f64]> {
        self.rows.get(&(doc.to_string(), sentence)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, usize), &Vec<f64>)> {
        self.rows.iter()
    }
}

fn check_indices(doc: &Document, vocab: &Vocabulary) -> Result<()> {
    if let Some(bad) = doc.tokens().find(|&t| t >= vocab.len()) {
        return Err(Error::param(format!(
            "document {} has token index {bad} outside a vocabulary of {}",
            doc.id,
            vocab.len()
        )));
    }
    Ok(())
}

/// The N x M binary matrix with a single 1 per row marking the word at each
/// in-vocabulary position.
pub fn word2d_signal(doc: &Document, vocab: &Vocabulary) -> Result<Signal2D> {
    check_indices(doc, vocab)?;
    let n = doc.token_count();
    if n == 0 {
        return Err(Error::EmptySignal(doc.id.clone()));
    }
    let mut values = Array2::zeros((n, vocab.len()));
    for (x, y) in doc.tokens().enumerate() {
        values[[x, y]] = 1.0;
    }
    Signal2D::new(values, SignalKind::WordLevel)
}

/// Column sums of a 2D signal: the bag-of-words vector.
pub fn bow1d_signal(signal: &Signal2D) -> Signal1D {
    Signal1D {
        values: signal.values.sum_axis(Axis(0)).to_vec(),
        domain: Domain::Semantic,
        normalized: signal.normalized,
    }
}

/// One row per sentence holding that sentence's raw word counts.
pub fn sentence2d_signal(doc: &Document, vocab: &Vocabulary) -> Result<Signal2D> {
    check_indices(doc, vocab)?;
    if doc.token_count() == 0 {
        return Err(Error::EmptySignal(doc.id.clone()));
    }
    let mut values = Array2::zeros((doc.sentences.len(), vocab.len()));
    for (x, sentence) in doc.sentences.iter().enumerate() {
        for &y in sentence {
            values[[x, y]] += 1.0;
        }
    }
    Signal2D::new(values, SignalKind::SentenceLevel)
}

pub fn topic1d_signal(doc: &Document, table: &TopicTable) -> Result<TopicSignal> {
    if doc.sentences.is_empty() {
        return Err(Error::EmptySignal(doc.id.clone()));
    }
    let mut values = Array2::zeros((doc.sentences.len(), table.dim()));
    for x in 0..doc.sentences.len() {
        let theta = table.get(&doc.id, x).ok_or_else(|| Error::MissingEmbedding {
            doc: doc.id.clone(),
            sentence: x,
        })?;
        values.row_mut(x).assign(&Array1::from(theta.to_vec()));
    }
    TopicSignal::new(values)
}

pub trait Normalize: Sized {
    /// Divides by total mass so the signal sums to one.
    fn normalize(self) -> Result<Self>;
}

impl Normalize for Signal2D {
    fn normalize(mut self) -> Result<Self> {
        if self.normalized {
            return Ok(self);
        }
        let mass = self.mass();
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        self.values.mapv_inplace(|v| v / mass);
        self.normalized = true;
        Ok(self)
    }
}

impl Normalize for Signal1D {
    fn normalize(mut self) -> Result<Self> {
        if self.normalized {
            return Ok(self);
        }
        let mass = self.mass();
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        self.normalized = true;
        Ok(self)
    }
}

pub fn normalize_signal<S: Normalize>(signal: S) -> Result<S> {
    signal.normalize()
}

/// Linearly interpolates every column of `values` to `new_len` rows with the
/// endpoints aligned: output row `x` samples input position
/// `x * (N - 1) / (new_len - 1)`. A single output row samples the midpoint.
pub fn resample_rows(values: &Array2<f64>, new_len: usize) -> Result<Array2<f64>> {
    if new_len == 0 {
        return Err(Error::param("resampled length must be at least 1"));
    }
    let n = values.nrows();
    if n == 0 {
        return Err(Error::param("cannot resample an empty signal"));
    }
    if n == new_len {
        return Ok(values.clone());
    }
    let mut out = Array2::zeros((new_len, values.ncols()));
    for x in 0..new_len {
        let src = if new_len == 1 {
            (n - 1) as f64 / 2.0
        } else {
            x as f64 * (n - 1) as f64 / (new_len - 1) as f64
        };
        let i0 = (src.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        let t = src - i0 as f64;
        for y in 0..values.ncols() {
            let a = values[[i0, y]];
            let b = values[[i1, y]];
            let v = if a == b { a } else { (a + t * (b - a)).clamp(a.min(b), a.max(b)) };
            out[[x, y]] = v;
        }
    }
    Ok(out)
}

/// Resamples the spatial axis; the semantic axis is untouched. Normalized
/// inputs are re-normalized after interpolation.
pub fn resample_bilinear(signal: &Signal2D, new_spatial_len: usize) -> Result<Signal2D> {
    let values = resample_rows(&signal.values, new_spatial_len)?;
    let out = Signal2D {
        values,
        kind: signal.kind,
        normalized: false,
    };
    if signal.normalized {
        out.normalize()
    } else {
        Ok(out)
    }
}
