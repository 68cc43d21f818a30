//! Library results checked against independent brute-force computations.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, Axis};
use rand::Rng;

use textscale::invariance::{
    distance_from_gram, gram_matrices, hit_miss_margins, jensen_shannon, pairwise_margins, relevance_at_scale,
    silm_relevance, single_scale_kernel, JudgedQuery, KernelKind, RelevanceKind, ScaleDistribution,
};
use textscale::kernels::{
    convolve_1d, derivative_kernel, diffusion_oracle, gaussian_derivative_kernel, BoundaryPolicy, KernelFamily,
};
use textscale::scalespace::{
    build_interval_tree, build_scale_ladder, build_stack, build_stack_1d, derivative_stack, detect_extrema_1d,
    detect_extrema_2d, ExtremumKind, SemanticNeighborhood, StackConfig,
};
use textscale::semgraph::{build_pmi_graph, graph_dissimilarity, semantic_kernel_operator, SemanticSmoother};
use textscale::signals::{sentence2d_signal, Domain, Signal1D};
use textscale::tasks::{evaluate_retrieval, exhaustive_passages, hierarchical_segment, passage_retrieve, SegmentConfig};
use textscale::textio::{Qrels, Run, RunEntry};

use common::{indexed_doc, random_connected_graph, random_vec, rng, word_vocab};

fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(y, z, w) in edges {
        d[y][z] = d[y][z].min(1.0 / w);
        d[z][y] = d[z][y].min(1.0 / w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

#[test]
fn graph_dissimilarity_matches_floyd_warshall_and_is_a_metric() {
    let mut r = rng(11);
    for _ in 0..30 {
        let n = r.random_range(2..=10);
        let mut g = random_connected_graph(&mut r, n, 0.3);
        // Occasionally a second component, to exercise unreachable pairs.
        if n >= 4 && r.random_bool(0.3) {
            let mut h = textscale::semgraph::SemanticGraph::new(n);
            for (y, z, w) in g.edges().filter(|&(y, z, _)| (y < n / 2) == (z < n / 2)) {
                h.add_edge(y, z, w).unwrap();
            }
            g = h;
        }
        let edges: Vec<_> = g.edges().collect();
        let oracle = floyd_warshall(n, &edges);
        let d = graph_dissimilarity(&g);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (d[[i, j]], oracle[i][j]);
                assert!(a == b || (a - b).abs() <= 1e-12 * b.max(1.0), "d({i},{j}) = {a}, expected {b}");
                assert_eq!(d[[i, j]], d[[j, i]]);
                for k in 0..n {
                    assert!(d[[i, j]] <= d[[i, k]] + d[[k, j]] + 1e-12);
                }
            }
        }
    }
}

#[test]
fn semantic_kernel_rows_follow_the_distance_formula() {
    let mut r = rng(12);
    for _ in 0..10 {
        let n = r.random_range(2..=10);
        let g = random_connected_graph(&mut r, n, 0.3);
        let s = r.random_range(0.2..5.0);
        let oracle = floyd_warshall(n, &g.edges().collect::<Vec<_>>());
        let dense = semantic_kernel_operator(&g, s).unwrap().to_dense().unwrap();
        for y in 0..n {
            let raw: Vec<f64> = (0..n).map(|z| (-oracle[y][z].powi(2) / (2.0 * s)).exp()).collect();
            let total: f64 = raw.iter().sum();
            for z in 0..n {
                let expected = raw[z] / total;
                let got = dense[[y, z]];
                assert!(
                    (got - expected).abs() <= 1e-12 || (expected < 1e-15 && got == 0.0),
                    "K[{y},{z}] = {got}, expected {expected}"
                );
            }
        }
    }
}

#[test]
fn pmi_weights_match_hand_counts() {
    // Window 1: only adjacent tokens co-occur.
    let vocab = word_vocab(4);
    let corpus = vec![
        indexed_doc("a", vec![vec![0, 1, 0, 1]]),
        indexed_doc("b", vec![vec![2, 3], vec![0, 1]]),
        indexed_doc("c", vec![vec![0, 2]]),
    ];
    // Adjacent pairs: a gives (0,1) x3; b gives (2,3), (3,0), (0,1); c gives (0,2).
    let counts: BTreeMap<(usize, usize), f64> = [((0, 1), 4.0), ((2, 3), 1.0), ((0, 3), 1.0), ((0, 2), 1.0)]
        .into_iter()
        .collect();
    let m = 4.0;
    let mut n_y = [m - 1.0; 4];
    for (&(y, z), &c) in &counts {
        n_y[y] += c;
        n_y[z] += c;
    }
    let total: f64 = n_y.iter().sum();
    assert_eq!(total, 2.0 * 7.0 + m * (m - 1.0));
    let g = build_pmi_graph(&corpus, &vocab, 1, 0.0).unwrap();
    let mut expected_edges = 0;
    for (&(y, z), &c) in &counts {
        let pmi = ((c + 1.0) * total / (n_y[y] * n_y[z])).ln();
        if pmi > 0.0 {
            expected_edges += 1;
            let w = g.weight(y, z).expect("positive pair becomes an edge");
            assert!((w - pmi).abs() < 1e-12, "pmi({y},{z}) = {w}, expected {pmi}");
        } else {
            assert!(g.weight(y, z).is_none());
        }
    }
    assert_eq!(g.edge_count(), expected_edges);
    // Never co-occurring pairs stay unconnected.
    assert!(g.weight(1, 2).is_none() && g.weight(1, 3).is_none());
}

fn frobenius_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn hit_miss_margins_match_a_direct_scan() {
    let mut r = rng(13);
    let n = 18;
    let scales = vec![0.5, 2.0, 8.0];
    let docs: Vec<Vec<Array2<f64>>> = (0..n)
        .map(|_| {
            (0..scales.len())
                .map(|_| Array2::from_shape_fn((5, 4), |_| r.random::<f64>()))
                .collect()
        })
        .collect();
    let labels: Vec<String> = (0..n).map(|i| ["x", "y", "z"][i % 3].to_string()).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
    let table = hit_miss_margins(&ids, &docs, &labels, &scales, KernelKind::Linear).unwrap();
    for i in 0..n {
        for (j, doc) in docs[i].iter().enumerate() {
            let mut hit = f64::INFINITY;
            let mut miss = f64::INFINITY;
            for k in 0..n {
                if k == i {
                    continue;
                }
                let d = frobenius_distance(doc, &docs[k][j]);
                if labels[k] == labels[i] {
                    hit = hit.min(d);
                } else {
                    miss = miss.min(d);
                }
            }
            let got = table.values()[[i, j]];
            assert!((got - (miss - hit)).abs() < 1e-9, "margin({i},{j}) = {got}, expected {}", miss - hit);
        }
    }
}

#[test]
fn single_scale_kernels_match_their_definitions() {
    let mut r = rng(14);
    for _ in 0..20 {
        let a = Array2::from_shape_fn((4, 6), |_| r.random::<f64>());
        let b = Array2::from_shape_fn((4, 6), |_| r.random::<f64>());
        let mut dot = 0.0;
        for x in 0..4 {
            for y in 0..6 {
                dot += a[[x, y]] * b[[x, y]];
            }
        }
        assert!((single_scale_kernel(&a, &b, KernelKind::Linear).unwrap() - dot).abs() < 1e-12);

        let sigma = 0.7;
        let rbf = (-frobenius_distance(&a, &b).powi(2) / (2.0 * sigma * sigma)).exp();
        assert!((single_scale_kernel(&a, &b, KernelKind::Rbf(sigma)).unwrap() - rbf).abs() < 1e-12);

        let (pa, pb) = (&a / a.sum(), &b / b.sum());
        let mut js = 0.0;
        for (p, q) in pa.iter().zip(pb.iter()) {
            let m = 0.5 * (p + q);
            js += 0.5 * p * (p / m).log2() + 0.5 * q * (q / m).log2();
        }
        assert!((jensen_shannon(&a, &b).unwrap() - js).abs() < 1e-12);
        assert!((single_scale_kernel(&a, &b, KernelKind::JensenShannon).unwrap() - (1.0 - js)).abs() < 1e-12);

        let d = distance_from_gram(
            single_scale_kernel(&a, &a, KernelKind::Linear).unwrap(),
            single_scale_kernel(&b, &b, KernelKind::Linear).unwrap(),
            dot,
        );
        assert!((d - frobenius_distance(&a, &b)).abs() < 1e-9);
    }
}

#[test]
fn gram_matrices_are_symmetric_per_scale() {
    let mut r = rng(15);
    let docs: Vec<Vec<Array2<f64>>> = (0..6)
        .map(|_| (0..2).map(|_| Array2::from_shape_fn((3, 3), |_| r.random::<f64>())).collect())
        .collect();
    for g in gram_matrices(&docs, KernelKind::Rbf(1.0)).unwrap() {
        for i in 0..6 {
            assert!((g[[i, i]] - 1.0).abs() < 1e-15);
            for j in 0..6 {
                assert_eq!(g[[i, j]], g[[j, i]]);
            }
        }
    }
}

#[test]
fn pairwise_margin_rows_are_relevance_differences() {
    let mut r = rng(16);
    let scales = vec![1.0, 2.0, 4.0];
    let relevance = Array2::from_shape_fn((4, 3), |_| r.random::<f64>());
    let query = JudgedQuery {
        query_id: "q".into(),
        doc_ids: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        grades: vec![2, 0, 1, 0],
        relevance: relevance.clone(),
    };
    let table = pairwise_margins(&[query], &scales).unwrap();
    // Preferences: a>b, a>c, a>d, c>b, c>d.
    let expected = [(0, 1), (0, 2), (0, 3), (2, 1), (2, 3)];
    assert_eq!(table.values().nrows(), expected.len());
    for (row, (i, j)) in expected.iter().enumerate() {
        let name = &table.instances()[row];
        let (ni, nj) = (&query_name(*i), &query_name(*j));
        assert_eq!(name, &format!("q:{ni}>{nj}"));
        for s in 0..3 {
            assert_eq!(table.values()[[row, s]], relevance[[*i, s]] - relevance[[*j, s]]);
        }
    }
}

fn query_name(i: usize) -> String {
    ["a", "b", "c", "d"][i].to_string()
}

#[test]
fn kl_relevance_matches_the_floored_formula() {
    let mut r = rng(17);
    let query = Array2::from_shape_fn((1, 5), |(_, y)| if y < 2 { 1.0 } else { 0.0 });
    let doc = Array2::from_shape_fn((3, 5), |_| r.random::<f64>());
    let (n, total) = (3.0, doc.sum());
    let mut kl = 0.0;
    for x in 0..3 {
        for y in 0..5 {
            let p = query[[0, y]] / (2.0 * n);
            if p > 0.0 {
                kl += p * ((p + 1e-9) / (doc[[x, y]] / total + 1e-9)).ln();
            }
        }
    }
    let got = relevance_at_scale(&query, &doc, RelevanceKind::NegativeKl).unwrap();
    assert!((got + kl).abs() < 1e-12, "relevance {got}, expected {}", -kl);
    let same = relevance_at_scale(&doc, &doc, RelevanceKind::NegativeKl).unwrap();
    assert!(same.abs() < 1e-15);
}

#[test]
fn passage_scores_never_exceed_the_exhaustive_maximum() {
    let mut r = rng(18);
    let vocab = word_vocab(12);
    let ladder = build_scale_ladder(0.5, 8.0, 5).unwrap();
    let dist = ScaleDistribution::uniform(ladder.scales().to_vec()).unwrap();
    for t in 0..10 {
        let sentences: Vec<Vec<usize>> = (0..15)
            .map(|_| (0..5).map(|_| r.random_range(0..12)).collect())
            .collect();
        let doc = indexed_doc(&format!("p{t}"), sentences);
        let stack = build_stack(
            &sentence2d_signal(&doc, &vocab).unwrap(),
            &ladder,
            &SemanticSmoother::identity(12),
            &StackConfig::default(),
        )
        .unwrap();
        let mut q = Array2::zeros((1, 12));
        q[[0, r.random_range(0..12)]] = 1.0;
        q[[0, r.random_range(0..12)]] += 1.0;
        let query = vec![q; ladder.len()];
        let kind = RelevanceKind::NegativeKl;
        let best = exhaustive_passages(&query, &stack, &dist, 3, kind)
            .unwrap()
            .iter()
            .map(|p| p.score)
            .fold(f64::MIN, f64::max);
        let passages = passage_retrieve(&query, &stack, &dist, 3, kind, 0.03).unwrap();
        for p in &passages {
            assert!(p.score <= best + 1e-12);
            assert!(p.start < p.end && p.end <= 15);
        }
        for w in passages.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
        // Each window of the exhaustive scan is an ordinary SILM score.
        let direct = silm_relevance(
            &query,
            &stack
                .levels()
                .iter()
                .map(|l| l.values().slice(ndarray::s![0..3, ..]).to_owned())
                .collect::<Vec<_>>(),
            &dist,
            kind,
        )
        .unwrap();
        let first = exhaustive_passages(&query, &stack, &dist, 3, kind).unwrap()[0].score;
        assert_eq!(first, direct);
    }
}

fn oracle_ap(ranked: &[&str], relevant: &BTreeSet<&str>) -> f64 {
    let mut precisions = Vec::new();
    for (k, d) in ranked.iter().enumerate() {
        if relevant.contains(d) {
            let hits = ranked[..=k].iter().filter(|x| relevant.contains(*x)).count();
            precisions.push(hits as f64 / (k + 1) as f64);
        }
    }
    if relevant.is_empty() {
        0.0
    } else {
        precisions.iter().sum::<f64>() / relevant.len() as f64
    }
}

#[test]
fn retrieval_metrics_match_an_independent_implementation() {
    let mut r = rng(19);
    for _ in 0..50 {
        let mut run = Run::new();
        let mut qrels = Qrels::new();
        let mut oracle = Vec::new();
        for q in 0..r.random_range(1..5) {
            let n = r.random_range(1..25);
            let docs: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
            let mut order = docs.clone();
            for i in (1..order.len()).rev() {
                order.swap(i, r.random_range(0..=i));
            }
            let mut judged: BTreeMap<String, i32> = BTreeMap::new();
            for d in &docs {
                if r.random_bool(0.7) {
                    judged.insert(d.clone(), r.random_range(0..3));
                }
            }
            let relevant: BTreeSet<&str> =
                judged.iter().filter(|(_, g)| **g > 0).map(|(d, _)| d.as_str()).collect();
            let retrieved = r.random_range(0..=order.len());
            let ranked: Vec<&str> = order[..retrieved].iter().map(String::as_str).collect();
            let p_at = |k: usize| ranked.iter().take(k).filter(|d| relevant.contains(*d)).count() as f64 / k as f64;
            oracle.push((oracle_ap(&ranked, &relevant), p_at(5), p_at(10)));
            run.insert(
                format!("q{q}"),
                ranked
                    .iter()
                    .enumerate()
                    .map(|(i, d)| RunEntry {
                        doc_id: d.to_string(),
                        rank: i + 1,
                        score: -(i as f64),
                    })
                    .collect(),
            );
            qrels.insert(format!("q{q}"), judged);
        }
        let report = evaluate_retrieval(&run, &qrels).unwrap();
        let k = oracle.len() as f64;
        let mean = |f: fn(&(f64, f64, f64)) -> f64| oracle.iter().map(f).sum::<f64>() / k;
        assert!((report.map - mean(|o| o.0)).abs() < 1e-12);
        assert!((report.p5 - mean(|o| o.1)).abs() < 1e-12);
        assert!((report.p10 - mean(|o| o.2)).abs() < 1e-12);
        for v in [report.map, report.p5, report.p10] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn extrema_match_a_brute_force_scan() {
    let mut r = rng(20);
    for _ in 0..50 {
        let v: Vec<f64> = (0..30).map(|_| r.random_range(0..5) as f64).collect();
        let found: Vec<(usize, ExtremumKind)> = detect_extrema_1d(&v).iter().map(|e| (e.x, e.kind)).collect();
        let mut expected = Vec::new();
        for x in 1..29 {
            let neighbors = [v[x - 1], v[x + 1]];
            if neighbors.iter().all(|&u| v[x] > u) {
                expected.push((x, ExtremumKind::Maximum));
            } else if neighbors.iter().all(|&u| v[x] < u) {
                expected.push((x, ExtremumKind::Minimum));
            }
        }
        assert_eq!(found, expected);

        let m = Array2::from_shape_fn((7, 5), |_| r.random_range(0..6) as f64);
        for nb in [SemanticNeighborhood::Adjacent, SemanticNeighborhood::Whole] {
            let found: BTreeSet<(usize, usize, bool)> = detect_extrema_2d(&m, nb)
                .iter()
                .map(|e| (e.x, e.y.unwrap(), e.kind == ExtremumKind::Maximum))
                .collect();
            let mut expected = BTreeSet::new();
            for x in 1..6 {
                for y in 0..5 {
                    let mut others = Vec::new();
                    for xx in x - 1..=x + 1 {
                        for yy in 0..5usize {
                            let close = match nb {
                                SemanticNeighborhood::Adjacent => yy.abs_diff(y) <= 1,
                                SemanticNeighborhood::Whole => true,
                            };
                            if close && (xx, yy) != (x, y) {
                                others.push(m[[xx, yy]]);
                            }
                        }
                    }
                    if others.iter().all(|&u| m[[x, y]] > u) {
                        expected.insert((x, y, true));
                    } else if others.iter().all(|&u| m[[x, y]] < u) {
                        expected.insert((x, y, false));
                    }
                }
            }
            assert_eq!(found, expected, "{nb:?}");
        }
    }
}

fn bump(n: usize, center: f64, width: f64) -> Vec<f64> {
    (0..n)
        .map(|i| (-((i as f64 - center).powi(2)) / (2.0 * width * width)).exp())
        .collect()
}

#[test]
fn two_bumps_give_two_maxima_at_their_centers() {
    let a = bump(64, 20.0, 3.0);
    let b = bump(64, 44.0, 3.0);
    let f: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let maxima: Vec<usize> = detect_extrema_1d(&f)
        .iter()
        .filter(|e| e.kind == ExtremumKind::Maximum)
        .map(|e| e.x)
        .collect();
    assert_eq!(maxima, vec![20, 44]);
}

#[test]
fn merging_bumps_split_below_the_merge_scale() {
    let a = bump(80, 32.0, 2.0);
    let b = bump(80, 46.0, 2.0);
    let f: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let ladder = build_scale_ladder(1.0, 256.0, 9).unwrap();
    let stack = build_stack_1d(
        &Signal1D::new(f, Domain::Spatial).unwrap(),
        &ladder,
        &SemanticSmoother::identity(1),
        &StackConfig::default(),
    )
    .unwrap();
    // Scan for the finest scale at which a single maximum remains.
    let maxima_at: Vec<usize> = stack
        .levels()
        .iter()
        .map(|l| {
            detect_extrema_1d(&l.values().column(0).to_vec())
                .iter()
                .filter(|e| e.kind == ExtremumKind::Maximum)
                .count()
        })
        .collect();
    let merge = maxima_at.iter().position(|&c| c == 1).expect("the bumps merge on this ladder");
    assert!(merge > 0 && maxima_at[..merge].iter().all(|&c| c == 2));
    let merge_scale = ladder.scales()[merge];

    let tree = build_interval_tree(&stack).unwrap();
    let root = tree
        .roots()
        .find(|n| n.kind == ExtremumKind::Maximum)
        .expect("a maximum root");
    assert_eq!(root.s_emerge, ladder.scales()[ladder.len() - 1]);
    assert_eq!(root.s_end, merge_scale);
    let children: Vec<_> = tree
        .children(root.node_id)
        .filter(|n| n.kind == ExtremumKind::Maximum)
        .collect();
    assert_eq!(children.len(), 2);
    for c in &children {
        assert!(c.s_emerge < merge_scale);
        assert!([32, 46].iter().any(|&x| c.x_end.abs_diff(x) <= 1), "child ends at {}", c.x_end);
    }
}

#[test]
fn step_velocity_peaks_at_the_step() {
    let n = 40;
    let values = Array2::from_shape_fn((n, 2), |(x, y)| if (x < 17) == (y == 0) { 1.0 } else { 0.0 });
    let ladder = build_scale_ladder(0.5, 16.0, 6).unwrap().with_zero();
    let stack = derivative_stack(&values, &ladder, 1, BoundaryPolicy::Mirror, 1e-12).unwrap();
    for (j, d) in stack.iter().enumerate() {
        let v: Vec<f64> = d.map_axis(Axis(1), |r| r.dot(&r).sqrt()).to_vec();
        let peak = v.iter().copied().fold(f64::MIN, f64::max);
        let at: Vec<usize> = (0..n).filter(|&x| v[x] == peak).collect();
        assert!(
            at.iter().all(|&x| x == 16 || x == 17),
            "scale {}: velocity peaks at {at:?}",
            ladder.scales()[j]
        );
    }
}

#[test]
fn two_block_document_has_one_top_boundary_at_the_junction() {
    let mut r = rng(21);
    let vocab = word_vocab(16);
    for t in 0..20 {
        let first = r.random_range(4..9);
        let second = r.random_range(4..9);
        let sentences: Vec<Vec<usize>> = (0..first + second)
            .map(|x| {
                let base = if x < first { 0 } else { 8 };
                (0..r.random_range(8..12)).map(|_| base + r.random_range(0..8)).collect()
            })
            .collect();
        let doc = indexed_doc(&format!("t{t}"), sentences);
        let ladder = build_scale_ladder(0.5, 16.0, 6).unwrap();
        let tree = hierarchical_segment(&doc, &vocab, &SemanticSmoother::identity(16), &ladder, &SegmentConfig::default())
            .unwrap();
        let top = tree
            .boundaries()
            .iter()
            .map(|b| b.persistence)
            .fold(0.0f64, f64::max);
        let tops: Vec<_> = tree.boundaries().iter().filter(|b| b.persistence == top).collect();
        assert_eq!(tops.len(), 1, "instance {t}: {:?}", tree.boundaries());
        assert!(tops[0].x.abs_diff(first) <= 1, "instance {t}: junction {first}, boundary {}", tops[0].x);

        // Brute-force velocity scan at the coarsest scale: the velocity
        // curve peaks within a sentence of the junction.
        let v = tree.velocity().row(tree.scales().len() - 1).to_vec();
        let argmax = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert!(argmax.abs_diff(first) <= 2, "instance {t}: coarse velocity peaks at {argmax}");
        for b in tree.boundaries() {
            assert!(b.persistence > 0.0 && b.x < doc.sentences.len());
        }
    }
}

#[test]
fn diffusion_oracle_keeps_constants_and_identity() {
    let c = vec![0.7; 50];
    for v in diffusion_oracle(&c, 3.0, 0.05).unwrap() {
        assert!((v - 0.7).abs() < 1e-12);
    }
    let mut r = rng(22);
    let f = random_vec(&mut r, 20);
    assert_eq!(diffusion_oracle(&f, 0.0, 0.1).unwrap(), f);
    assert!(diffusion_oracle(&f, 1.0, 0.3).is_err());
}

#[test]
fn derivative_kernels_differentiate_polynomials() {
    let n = 120;
    let s = 4.0;
    let xs: Vec<f64> = (0..n).map(|x| x as f64 / 10.0).collect();
    let cubic: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x * x + x).collect();
    // Derivatives per grid step of x^3 - 2x^2 + x with x = i / 10.
    let analytic = [
        |x: f64| (3.0 * x * x - 4.0 * x + 1.0) / 10.0,
        |x: f64| (6.0 * x - 4.0) / 100.0,
        |_x: f64| 6.0 / 1000.0,
    ];
    for order in 1..=3u32 {
        let k = derivative_kernel(s, order, 1e-12).unwrap();
        let out = convolve_1d(&cubic, &k, BoundaryPolicy::ZeroPad);
        for i in 30..90 {
            let expected = analytic[order as usize - 1](xs[i]);
            let err = (out[i] - expected).abs();
            assert!(
                err <= 0.02 * expected.abs().max(1e-3),
                "order {order} at {i}: {} vs {expected}",
                out[i]
            );
        }
    }
    let odd = gaussian_derivative_kernel(2.0, 3, 1e-12).unwrap();
    assert!(odd.sum().abs() < 1e-10);
}

#[test]
fn renormalized_convolution_conserves_mass() {
    let mut r = rng(23);
    for family in [KernelFamily::DiscreteGaussian, KernelFamily::SampledGaussian, KernelFamily::Poisson] {
        for s in [0.3, 2.0, 9.0, 50.0] {
            let k = textscale::kernels::smoothing_kernel(family, s, 1e-12).unwrap();
            let f = random_vec(&mut r, 37);
            let out = convolve_1d(&f, &k, BoundaryPolicy::Renormalize);
            let (a, b): (f64, f64) = (f.iter().sum(), out.iter().sum());
            assert!((a - b).abs() <= 1e-9, "{family:?} s={s}: {a} vs {b}");
            assert!(out.iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn sentence_signal_rows_are_word_counts() {
    let vocab = word_vocab(5);
    let doc = indexed_doc("c", vec![vec![0, 0, 3], vec![4], vec![1, 2, 1]]);
    let s = sentence2d_signal(&doc, &vocab).unwrap();
    let expected = ndarray::array![[2.0, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0], [0.0, 2.0, 1.0, 0.0, 0.0]];
    assert_eq!(s.values(), &expected);
}
