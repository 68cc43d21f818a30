//! Multi-scale stacks, derivative stacks, extrema, interval trees and
//! difference-of-scales interest points.

use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernels::{
    convolve_columns, derivative_kernel, difference, smooth_separable_2d, BoundaryPolicy, KernelFamily,
};
use crate::semgraph::SemanticSmoother;
use crate::signals::{Domain, Signal1D, Signal2D, SignalKind, TopicSignal};
use crate::{Error, Result};

/// Ascending list of scales, typically geometric, optionally starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleLadder {
    scales: Vec<f64>,
    ratio: Option<f64>,
}

impl ScaleLadder {
    /// Any strictly ascending list of non-negative finite scales.
    pub fn from_scales(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::InvalidRange("a scale ladder needs at least one scale".into()));
        }
        if let Some(&bad) = scales.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidScale(bad));
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidRange("scales must be strictly ascending".into()));
        }
        Ok(ScaleLadder { scales, ratio: None })
    }

    /// The same ladder with a zero-scale base level prepended.
    pub fn with_zero(mut self) -> Self {
        if !self.includes_zero() {
            self.scales.insert(0, 0.0);
        }
        self
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn includes_zero(&self) -> bool {
        self.scales[0] == 0.0
    }

    /// Geometric ratio between successive positive scales, when generated.
    pub fn ratio(&self) -> Option<f64> {
        self.ratio
    }
}

/// `count` scales from `s_min` to `s_max` inclusive in geometric progression.
pub fn build_scale_ladder(s_min: f64, s_max: f64, count: usize) -> Result<ScaleLadder> {
    if !(s_min > 0.0) || !(s_max > s_min) || !s_max.is_finite() {
        return Err(Error::InvalidRange(format!("need 0 < s_min < s_max, got ({s_min}, {s_max})")));
    }
    if count < 2 {
        return Err(Error::InvalidRange(format!("need at least 2 scales, got {count}")));
    }
    let ratio = (s_max / s_min).powf(1.0 / (count - 1) as f64);
    let mut scales: Vec<f64> = (0..count).map(|i| s_min * ratio.powi(i as i32)).collect();
    scales[count - 1] = s_max;
    let mut ladder = ScaleLadder::from_scales(scales)?;
    ladder.ratio = Some(ratio);
    Ok(ladder)
}

/// How the semantic scale of each level is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScalePairing {
    /// `s_y = s_x` at every level.
    #[default]
    Equal,
    /// The same semantic scale at every level.
    Fixed(f64),
    /// One semantic scale per level.
    Explicit(Vec<f64>),
}

impl ScalePairing {
    pub fn semantic_scales(&self, ladder: &ScaleLadder) -> Result<Vec<f64>> {
        let out = match self {
            ScalePairing::Equal => ladder.scales().to_vec(),
            ScalePairing::Fixed(s) => vec![*s; ladder.len()],
            ScalePairing::Explicit(v) => {
                if v.len() != ladder.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} semantic scales for a ladder of {}",
                        v.len(),
                        ladder.len()
                    )));
                }
                v.clone()
            }
        };
        if let Some(&bad) = out.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidScale(bad));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackConfig {
    pub family: KernelFamily,
    pub boundary: BoundaryPolicy,
    pub trunc_mass: f64,
    pub pairing: ScalePairing,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            family: KernelFamily::DiscreteGaussian,
            boundary: BoundaryPolicy::default(),
            trunc_mass: 1e-12,
            pairing: ScalePairing::Equal,
        }
    }
}

/// Smoothed copies of one signal over a scale ladder.
#[derive(Debug, Clone)]
pub struct ScaleSpaceStack {
    base: Signal2D,
    scales: Vec<(f64, f64)>,
    levels: Vec<Signal2D>,
}

impl ScaleSpaceStack {
    pub fn base(&self) -> &Signal2D {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, i: usize) -> &Signal2D {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[Signal2D] {
        &self.levels
    }

    /// `(s_x, s_y)` of every level.
    pub fn scales(&self) -> &[(f64, f64)] {
        &self.scales
    }

    pub fn spatial_scales(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s.0).collect()
    }
}

pub fn build_stack(
    signal: &Signal2D,
    ladder: &ScaleLadder,
    semantic: &SemanticSmoother,
    config: &StackConfig,
) -> Result<ScaleSpaceStack> {
    let s_y = config.pairing.semantic_scales(ladder)?;
    let scales: Vec<(f64, f64)> = ladder.scales().iter().copied().zip(s_y).collect();
    let levels = scales
        .par_iter()
        .map(|&(sx, sy)| {
            let op = semantic.operator(sy)?;
            smooth_separable_2d(signal, sx, config.family, &op, config.boundary, config.trunc_mass)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleSpaceStack {
        base: signal.clone(),
        scales,
        levels,
    })
}

/// Stack of a one-dimensional signal. A spatial signal becomes a single
/// column; a semantic signal becomes a single row smoothed only along the
/// semantic axis.
pub fn build_stack_1d(
    signal: &Signal1D,
    ladder: &ScaleLadder,
    semantic: &SemanticSmoother,
    config: &StackConfig,
) -> Result<ScaleSpaceStack> {
    match signal.domain() {
        Domain::Semantic => {
            let row = Signal2D::new(signal.to_row(), SignalKind::Generic)?;
            build_stack(&row, ladder, semantic, config)
        }
        Domain::Spatial => {
            let column = Array2::from_shape_vec((signal.len(), 1), signal.values().to_vec())
                .expect("column shape");
            let column = Signal2D::new(column, SignalKind::Generic)?;
            build_stack(&column, ladder, &SemanticSmoother::identity(1), config)
        }
    }
}

/// Topic signals are smoothed along the spatial axis only, each topic
/// dimension independently.
pub fn build_topic_stack(signal: &TopicSignal, ladder: &ScaleLadder, config: &StackConfig) -> Result<ScaleSpaceStack> {
    let as_2d = Signal2D::new(signal.values().clone(), SignalKind::Generic)?;
    let config = StackConfig {
        pairing: ScalePairing::Fixed(0.0),
        ..config.clone()
    };
    build_stack(&as_2d, ladder, &SemanticSmoother::identity(signal.dim()), &config)
}

/// Spatial derivatives of order 1 to 3 of `values`, one matrix per ladder
/// scale. Zero scale uses central finite differences.
pub fn derivative_stack(
    values: &Array2<f64>,
    ladder: &ScaleLadder,
    order: u32,
    boundary: BoundaryPolicy,
    trunc_mass: f64,
) -> Result<Vec<Array2<f64>>> {
    if !(1..=3).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    ladder
        .scales()
        .par_iter()
        .map(|&s| {
            let kernel = derivative_kernel(s, order, trunc_mass)?;
            Ok(convolve_columns(values, &kernel, boundary))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Maximum,
    Minimum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub x: usize,
    pub y: Option<usize>,
    pub value: f64,
    pub kind: ExtremumKind,
}

/// Which semantic indices count as neighbors in two-dimensional extremum
/// detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SemanticNeighborhood {
    /// Adjacent vocabulary indices, giving the usual 8-neighborhood.
    #[default]
    Adjacent,
    /// The whole vocabulary. Independent of how words are indexed.
    Whole,
}

/// Strict interior extrema over the 3-neighborhood.
pub fn detect_extrema_1d(values: &[f64]) -> Vec<Extremum> {
    let mut out = Vec::new();
    for x in 1..values.len().saturating_sub(1) {
        let (l, c, r) = (values[x - 1], values[x], values[x + 1]);
        let kind = if c > l && c > r {
            ExtremumKind::Maximum
        } else if c < l && c < r {
            ExtremumKind::Minimum
        } else {
            continue;
        };
        out.push(Extremum { x, y: None, value: c, kind });
    }
    out
}

/// Strict extrema of a matrix indexed `(x, y)`. Spatial boundary rows are
/// excluded; along the semantic axis only existing neighbors are compared.
pub fn detect_extrema_2d(values: &Array2<f64>, neighborhood: SemanticNeighborhood) -> Vec<Extremum> {
    let (n, m) = values.dim();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for x in 1..n - 1 {
        for y in 0..m {
            let c = values[[x, y]];
            let (y_lo, y_hi) = match neighborhood {
                SemanticNeighborhood::Adjacent => (y.saturating_sub(1), (y + 1).min(m - 1)),
                SemanticNeighborhood::Whole => (0, m - 1),
            };
            let mut above = true;
            let mut below = true;
            for xx in x - 1..=x + 1 {
                for yy in y_lo..=y_hi {
                    if (xx, yy) == (x, y) {
                        continue;
                    }
                    let v = values[[xx, yy]];
                    above &= c > v;
                    below &= c < v;
                }
                if !above && !below {
                    break;
                }
            }
            let kind = match (above, below) {
                (true, _) => ExtremumKind::Maximum,
                (_, true) => ExtremumKind::Minimum,
                _ => continue,
            };
            out.push(Extremum { x, y: Some(y), value: c, kind });
        }
    }
    out
}

/// Extrema of one stack level: 1D rules for single-column signals and the
/// 8-neighborhood otherwise.
pub fn detect_extrema(level: &Signal2D) -> Vec<Extremum> {
    if level.semantic_len() == 1 {
        let column: Vec<f64> = level.values().column(0).to_vec();
        detect_extrema_1d(&column)
    } else {
        detect_extrema_2d(level.values(), SemanticNeighborhood::Adjacent)
    }
}

/// A node of the interval tree: one extremum tracked over the contiguous
/// range of scales `[s_end, s_emerge]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub node_id: usize,
    pub parent_id: Option<usize>,
    /// Position at the coarsest scale of the node.
    pub x: usize,
    pub y: Option<usize>,
    /// Position at the finest scale of the node.
    pub x_end: usize,
    pub kind: ExtremumKind,
    /// Coarsest scale at which the node exists.
    pub s_emerge: f64,
    /// Finest scale at which the node exists.
    pub s_end: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IntervalTree {
    nodes: Vec<TreeNode>,
}

impl IntervalTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.parent_id.is_none())
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.parent_id == Some(id))
    }

    /// Nodes alive at scale `s`.
    pub fn count_at(&self, s: f64) -> usize {
        self.nodes.iter().filter(|n| n.s_end <= s && s <= n.s_emerge).count()
    }

    /// One JSON object per line with the fields of [`TreeNode`].
    pub fn write_jsonl(&self, w: &mut dyn Write) -> std::io::Result<()> {
        for node in &self.nodes {
            serde_json::to_writer(&mut *w, node)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Radius, in grid cells, within which an extremum at the finer of two
/// levels may continue one at the coarser level.
pub fn linking_radius(delta_s: f64) -> usize {
    ((2.0 * delta_s.max(0.0).sqrt()).ceil() as usize).max(1)
}

/// Builds the tree from per-level extrema, `scales` ascending.
///
/// Scanning coarse to fine, each finer extremum is assigned to the nearest
/// coarser node of the same kind within the linking radius. A node assigned
/// exactly one extremum, with no unassigned extrema attached, continues.
/// Any other node ends at the coarser level and every extremum assigned or
/// attached to it opens a child. An unassigned extremum attaches to the
/// coarser node nearest in position, or becomes a root when the coarser
/// level has none.
pub fn interval_tree_from_extrema(scales: &[f64], extrema: &[Vec<Extremum>]) -> Result<IntervalTree> {
    if scales.len() != extrema.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scales but {} extremum lists",
            scales.len(),
            extrema.len()
        )));
    }
    if scales.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidRange("scales must be strictly ascending".into()));
    }
    let mut nodes: Vec<TreeNode> = Vec::new();
    let Some(top) = scales.len().checked_sub(1) else {
        return Ok(IntervalTree { nodes });
    };
    let open = |nodes: &mut Vec<TreeNode>, e: &Extremum, s: f64, parent: Option<usize>| {
        let node_id = nodes.len();
        nodes.push(TreeNode {
            node_id,
            parent_id: parent,
            x: e.x,
            y: e.y,
            x_end: e.x,
            kind: e.kind,
            s_emerge: s,
            s_end: s,
            value: e.value,
        });
        node_id
    };
    // Node id of every extremum at the current (coarser) level.
    let mut active: Vec<usize> = extrema[top]
        .iter()
        .map(|e| open(&mut nodes, e, scales[top], None))
        .collect();
    for level in (0..top).rev() {
        let coarse = &extrema[level + 1];
        let fine = &extrema[level];
        let radius = linking_radius(scales[level + 1] - scales[level]);
        let mut matched: Vec<Vec<usize>> = vec![Vec::new(); coarse.len()];
        let mut attached: Vec<Vec<usize>> = vec![Vec::new(); coarse.len()];
        let mut orphans = Vec::new();
        for (fi, e) in fine.iter().enumerate() {
            let nearest = |same_kind: bool| {
                coarse
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !same_kind || c.kind == e.kind)
                    .min_by_key(|(ci, c)| (c.x.abs_diff(e.x), c.y != e.y, *ci))
                    .map(|(ci, c)| (ci, c.x.abs_diff(e.x)))
            };
            match nearest(true) {
                Some((ci, d)) if d <= radius => matched[ci].push(fi),
                _ => match nearest(false) {
                    Some((ci, _)) => attached[ci].push(fi),
                    None => orphans.push(fi),
                },
            }
        }
        let mut next_active = vec![usize::MAX; fine.len()];
        for ci in 0..coarse.len() {
            let id = active[ci];
            if matched[ci].len() == 1 && attached[ci].is_empty() {
                let fi = matched[ci][0];
                nodes[id].s_end = scales[level];
                nodes[id].x_end = fine[fi].x;
                next_active[fi] = id;
            } else {
                for &fi in matched[ci].iter().chain(&attached[ci]) {
                    next_active[fi] = open(&mut nodes, &fine[fi], scales[level], Some(id));
                }
            }
        }
        for fi in orphans {
            next_active[fi] = open(&mut nodes, &fine[fi], scales[level], None);
        }
        active = next_active;
    }
    Ok(IntervalTree { nodes })
}

/// Interval tree over the extrema of every stack level.
pub fn build_interval_tree(stack: &ScaleSpaceStack) -> Result<IntervalTree> {
    if stack.len() < 2 {
        return Err(Error::param("an interval tree needs at least two stack levels"));
    }
    let extrema: Vec<Vec<Extremum>> = stack.levels().par_iter().map(detect_extrema).collect();
    interval_tree_from_extrema(&stack.spatial_scales(), &extrema)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterestPoint {
    pub x: usize,
    /// Index `j` of the difference level between stack levels `j` and `j + 1`.
    pub level: usize,
    /// Spatial scale of the finer of the two levels.
    pub scale: f64,
    pub response: f64,
    pub sign: i8,
}

pub const DEFAULT_CONTRAST: f64 = 0.03;

/// Difference-of-scales response, `levels - 1` rows by `N` columns. Signed
/// for single-column signals, the Euclidean norm over the semantic axis
/// otherwise.
pub fn difference_response(stack: &ScaleSpaceStack) -> Array2<f64> {
    let levels = stack.levels();
    let n = stack.base().spatial_len();
    let mut out = Array2::zeros((levels.len().saturating_sub(1), n));
    for (j, pair) in levels.windows(2).enumerate() {
        let diff = difference(pair[1].values(), pair[0].values());
        let row: Array1<f64> = if diff.ncols() == 1 {
            diff.column(0).to_owned()
        } else {
            diff.map_axis(Axis(1), |r| r.dot(&r).sqrt())
        };
        out.row_mut(j).assign(&row);
    }
    out
}

/// Strict extrema of the difference response over the 3x3 `(x, level)`
/// neighborhood whose magnitude reaches `contrast` times the largest
/// magnitude, sorted by magnitude descending.
pub fn detect_interest_points(stack: &ScaleSpaceStack, contrast: f64) -> Result<Vec<InterestPoint>> {
    if stack.len() < 3 {
        return Err(Error::param("interest points need at least three stack levels"));
    }
    if !(0.0..=1.0).contains(&contrast) {
        return Err(Error::param(format!("contrast must lie in [0, 1], got {contrast}")));
    }
    let response = difference_response(stack);
    let (levels, n) = response.dim();
    let peak = response.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || n < 3 {
        return Ok(Vec::new());
    }
    let threshold = contrast * peak;
    let scales = stack.spatial_scales();
    let mut points = Vec::new();
    for j in 0..levels {
        for x in 1..n - 1 {
            let c = response[[j, x]];
            if c.abs() < threshold || c == 0.0 {
                continue;
            }
            let mut above = true;
            let mut below = true;
            for jj in j.saturating_sub(1)..=(j + 1).min(levels - 1) {
                for xx in x - 1..=x + 1 {
                    if (jj, xx) != (j, x) {
                        let v = response[[jj, xx]];
                        above &= c > v;
                        below &= c < v;
                    }
                }
            }
            if above || below {
                points.push(InterestPoint {
                    x,
                    level: j,
                    scale: scales[j],
                    response: c,
                    sign: if above { 1 } else { -1 },
                });
            }
        }
    }
    points.sort_by(|a, b| {
        b.response
            .abs()
            .total_cmp(&a.response.abs())
            .then(a.x.cmp(&b.x))
            .then(a.level.cmp(&b.level))
    });
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Signal2D {
        Signal2D::new(
            Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap(),
            SignalKind::Generic,
        )
        .unwrap()
    }

    fn bump(n: usize, center: f64, width: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (-((i as f64 - center).powi(2)) / (2.0 * width * width)).exp())
            .collect()
    }

    #[test]
    fn ladder_geometric() {
        let l = build_scale_ladder(1.0, 4.0, 3).unwrap();
        assert_eq!(l.scales(), &[1.0, 2.0, 4.0]);
        assert_eq!(l.ratio(), Some(2.0));
        assert!(matches!(build_scale_ladder(1.0, 1.0, 3), Err(Error::InvalidRange(_))));
        assert!(build_scale_ladder(1.0, 4.0, 1).is_err());
        assert!(build_scale_ladder(0.0, 4.0, 3).is_err());
        let z = l.with_zero();
        assert!(z.includes_zero());
        assert_eq!(z.len(), 4);
    }

    #[test]
    fn zero_ladder_returns_base() {
        let sig = column(&[0.0, 1.0, 3.0, 0.5]);
        let ladder = ScaleLadder::from_scales(vec![0.0]).unwrap();
        let stack = build_stack(&sig, &ladder, &SemanticSmoother::identity(1), &StackConfig::default()).unwrap();
        assert_eq!(stack.level(0).values(), sig.values());
    }

    #[test]
    fn stack_preserves_mass() {
        let sig = column(&bump(40, 7.0, 2.0));
        let ladder = build_scale_ladder(0.5, 64.0, 6).unwrap();
        let stack = build_stack(&sig, &ladder, &SemanticSmoother::identity(1), &StackConfig::default()).unwrap();
        for level in stack.levels() {
            assert!((level.mass() - sig.mass()).abs() < 1e-9);
        }
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let values = Array2::from_elem((20, 3), 0.4);
        let ladder = build_scale_ladder(1.0, 16.0, 4).unwrap().with_zero();
        for order in 1..=3 {
            for level in derivative_stack(&values, &ladder, order, BoundaryPolicy::Mirror, 1e-12).unwrap() {
                assert!(level.iter().all(|v| v.abs() < 1e-12), "order {order}");
            }
        }
        assert!(derivative_stack(&values, &ladder, 4, BoundaryPolicy::Mirror, 1e-12).is_err());
    }

    #[test]
    fn first_derivative_of_symmetric_bump_is_antisymmetric() {
        let b = bump(41, 20.0, 3.0);
        let values = Array2::from_shape_vec((41, 1), b).unwrap();
        let ladder = build_scale_ladder(1.0, 8.0, 4).unwrap();
        for level in derivative_stack(&values, &ladder, 1, BoundaryPolicy::Mirror, 1e-12).unwrap() {
            for d in 0..=20 {
                assert!((level[[20 + d, 0]] + level[[20 - d, 0]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extrema_basic_cases() {
        let ramp: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(detect_extrema_1d(&ramp).is_empty());
        let plateau = [0.0, 1.0, 1.0, 1.0, 0.0];
        assert!(detect_extrema_1d(&plateau).is_empty());
        let two: Vec<f64> = bump(30, 8.0, 2.0).iter().zip(bump(30, 21.0, 2.0)).map(|(a, b)| a + b).collect();
        let maxima: Vec<usize> = detect_extrema_1d(&two)
            .into_iter()
            .filter(|e| e.kind == ExtremumKind::Maximum)
            .map(|e| e.x)
            .collect();
        assert_eq!(maxima, vec![8, 21]);
    }

    #[test]
    fn whole_neighborhood_ignores_word_order() {
        let mut m = Array2::zeros((5, 4));
        m[[2, 3]] = 1.0;
        m[[2, 0]] = 0.5;
        let adj = detect_extrema_2d(&m, SemanticNeighborhood::Adjacent);
        assert_eq!(adj.iter().filter(|e| e.kind == ExtremumKind::Maximum).count(), 2);
        let whole = detect_extrema_2d(&m, SemanticNeighborhood::Whole);
        assert_eq!(whole.len(), 1);
        assert_eq!((whole[0].x, whole[0].y), (2, Some(3)));
    }

    #[test]
    fn single_bump_single_root() {
        let sig = column(&bump(50, 25.0, 3.0));
        let ladder = build_scale_ladder(1.0, 32.0, 6).unwrap();
        let stack = build_stack(&sig, &ladder, &SemanticSmoother::identity(1), &StackConfig::default()).unwrap();
        let tree = build_interval_tree(&stack).unwrap();
        assert_eq!(tree.len(), 1);
        let root = &tree.nodes()[0];
        assert_eq!((root.s_end, root.s_emerge), (1.0, 32.0));
    }

    #[test]
    fn merging_bumps_split_under_root() {
        let two: Vec<f64> = bump(60, 24.0, 2.0).iter().zip(bump(60, 36.0, 2.0)).map(|(a, b)| a + b).collect();
        let sig = column(&two);
        let ladder = build_scale_ladder(1.0, 128.0, 8).unwrap();
        let stack = build_stack(&sig, &ladder, &SemanticSmoother::identity(1), &StackConfig::default()).unwrap();
        let tree = build_interval_tree(&stack).unwrap();
        let roots: Vec<_> = tree.roots().filter(|n| n.kind == ExtremumKind::Maximum).collect();
        assert_eq!(roots.len(), 1);
        let kids: Vec<_> = tree
            .children(roots[0].node_id)
            .filter(|n| n.kind == ExtremumKind::Maximum)
            .collect();
        assert_eq!(kids.len(), 2);
        for k in kids {
            assert!(k.s_emerge < roots[0].s_end);
            assert_eq!(k.s_end, 1.0);
        }
    }

    #[test]
    fn tree_jsonl_rows() {
        let e = |x| Extremum { x, y: None, value: 1.0, kind: ExtremumKind::Maximum };
        let tree = interval_tree_from_extrema(&[1.0, 2.0], &[vec![e(3)], vec![e(3)]]).unwrap();
        let mut buf = Vec::new();
        tree.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"parent_id\":null"));
        assert!(text.contains("\"s_emerge\":2.0"));
    }

    #[test]
    fn interest_points_flat_and_bump() {
        let ladder = build_scale_ladder(0.5, 16.0, 6).unwrap();
        let cfg = StackConfig::default();
        let flat = build_stack(&column(&[1.0; 30]), &ladder, &SemanticSmoother::identity(1), &cfg).unwrap();
        assert!(detect_interest_points(&flat, DEFAULT_CONTRAST).unwrap().is_empty());
        let b = build_stack(&column(&bump(60, 30.0, 2.0)), &ladder, &SemanticSmoother::identity(1), &cfg).unwrap();
        let points = detect_interest_points(&b, DEFAULT_CONTRAST).unwrap();
        assert!(points[0].x.abs_diff(30) <= 1);
        let peak = points[0].response.abs();
        assert!(points.iter().all(|p| p.response.abs() >= DEFAULT_CONTRAST * peak));
    }
}
