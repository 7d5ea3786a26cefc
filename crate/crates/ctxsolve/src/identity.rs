//! Person identification: each photo is an independent subproblem over the
//! identities of its query instances.
//!
//! The photo's sub-objective folds the gallery score row, the event
//! attendance prior of the assigned event, and the co-occurrence coupling
//! into unary and pairwise potentials. Single instances are solved in closed
//! form, small photos by exhaustive enumeration, larger ones by damped
//! max-product message passing. A candidate relabeling is accepted only when
//! it strictly improves the photo's sub-objective, so the global objective
//! never decreases even when message passing is approximate.

use crate::error::{Error, Result};
use crate::model::{Collection, ContextParams, EventState, Hyperparams, IdentityState};
use crate::potentials::GalleryScoreTable;

/// Largest query-node count solved by enumeration.
pub const EXACT_NODE_CAP: usize = 4;
/// Largest joint state count solved by enumeration.
pub const EXACT_STATE_CAP: f64 = 200_000.0;

/// One pairwise factor between two query nodes; `potential[la][lb]` already
/// accounts for both ordered directions of the underlying coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfEdge {
    pub a: usize,
    pub b: usize,
    pub potential: Vec<Vec<f64>>,
}

/// The per-photo model: one unary row per query node plus pairwise factors.
/// Gallery instances are folded into the unaries rather than kept as nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotoMrf {
    /// Query instance ids, in photo order.
    pub node_ids: Vec<usize>,
    pub unary: Vec<Vec<f64>>,
    pub edges: Vec<MrfEdge>,
    pub num_labels: usize,
}

impl PhotoMrf {
    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    /// Sub-objective value of a joint assignment (query-dependent terms only).
    pub fn value(&self, labels: &[usize]) -> f64 {
        let mut total = 0.0;
        for (node, &l) in labels.iter().enumerate() {
            total += self.unary[node][l];
        }
        for edge in &self.edges {
            total += edge.potential[labels[edge.a]][labels[edge.b]];
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxProductConfig {
    pub damping: f64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for MaxProductConfig {
    fn default() -> MaxProductConfig {
        MaxProductConfig {
            damping: 0.5,
            max_sweeps: 200,
            tol: 1e-6,
        }
    }
}

/// Build the photo's MRF from the current event assignment and context.
///
/// Unary: the gallery score row, plus `alpha * ln p_k` when the photo is
/// assigned to event `k` (absent otherwise), plus the folded co-occurrence
/// coupling against the photo's gallery instances. Pairwise (present when
/// `beta` is nonzero and the photo has two or more query nodes):
/// `beta * (Q[l][l'] + Q[l'][l])` shared by every node pair.
pub fn build_photo_mrf(
    photo_id: usize,
    c: &Collection,
    y: &EventState,
    ctx: &ContextParams,
    table: &GalleryScoreTable,
    h: &Hyperparams,
) -> PhotoMrf {
    let photo = &c.photos[photo_id];
    let num_labels = c.num_identities;
    let mut node_ids = Vec::new();
    let mut gallery_labels = Vec::new();
    for &j in &photo.instance_ids {
        match c.instances[j].label {
            Some(l) => gallery_labels.push(l),
            None => node_ids.push(j),
        }
    }

    let event = y.event_of(photo_id);
    let mut unary = Vec::with_capacity(node_ids.len());
    for &j in &node_ids {
        let mut row: Vec<f64> = table.row(j).expect("query instance").to_vec();
        if h.alpha != 0.0 {
            if let Some(k) = event {
                let dist = &ctx.identity_dists[k];
                for (l, v) in row.iter_mut().enumerate() {
                    *v += h.alpha * dist[l].ln();
                }
            }
        }
        if h.beta != 0.0 {
            let q = &ctx.cooccurrence;
            for &lg in &gallery_labels {
                for (l, v) in row.iter_mut().enumerate() {
                    *v += h.beta * (q[l][lg] + q[lg][l]);
                }
            }
        }
        unary.push(row);
    }

    let mut edges = Vec::new();
    if h.beta != 0.0 && node_ids.len() >= 2 {
        let q = &ctx.cooccurrence;
        let mut potential = vec![vec![0.0; num_labels]; num_labels];
        for l in 0..num_labels {
            for l2 in 0..num_labels {
                potential[l][l2] = h.beta * (q[l][l2] + q[l2][l]);
            }
        }
        for a in 0..node_ids.len() {
            for b in (a + 1)..node_ids.len() {
                edges.push(MrfEdge {
                    a,
                    b,
                    potential: potential.clone(),
                });
            }
        }
    }

    PhotoMrf {
        node_ids,
        unary,
        edges,
        num_labels,
    }
}

/// Closed form for a single query node: argmax of its unary, lowest index on
/// ties.
pub fn solve_single(mrf: &PhotoMrf) -> Result<usize> {
    if mrf.num_nodes() != 1 {
        return Err(Error::InvalidConfig(format!(
            "solve_single expects one query node, got {}",
            mrf.num_nodes()
        )));
    }
    Ok(argmax(&mrf.unary[0]))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (l, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = l;
        }
    }
    best
}

/// Global maximizer by exhaustive enumeration; the lexicographically
/// smallest assignment wins ties.
pub fn solve_exact(mrf: &PhotoMrf) -> Result<Vec<usize>> {
    let n = mrf.num_nodes();
    let states = (mrf.num_labels as f64).powi(n as i32);
    if n > EXACT_NODE_CAP || states > EXACT_STATE_CAP {
        return Err(Error::ExactSolveTooLarge { nodes: n, states });
    }
    let mut current = vec![0usize; n];
    let mut best = current.clone();
    let mut best_value = mrf.value(&current);
    // Odometer in lexicographic order; strict improvement keeps the first
    // (smallest) optimum.
    loop {
        let mut pos = n;
        while pos > 0 {
            pos -= 1;
            current[pos] += 1;
            if current[pos] < mrf.num_labels {
                break;
            }
            current[pos] = 0;
            if pos == 0 {
                return Ok(best);
            }
        }
        if current.iter().all(|&l| l == 0) {
            return Ok(best);
        }
        let value = mrf.value(&current);
        if value > best_value {
            best_value = value;
            best.copy_from_slice(&current);
        }
    }
}

/// Damped synchronous max-product over the photo's factor graph. Messages
/// live in the log domain and are normalized to a zero maximum. Returns the
/// per-node decode and whether the messages converged within tolerance.
pub fn solve_max_product(mrf: &PhotoMrf, cfg: &MaxProductConfig) -> (Vec<usize>, bool) {
    let n = mrf.num_nodes();
    let labels = mrf.num_labels;
    if mrf.edges.is_empty() {
        // Factorized problem: per-node argmax is exact.
        return (mrf.unary.iter().map(|row| argmax(row)).collect(), true);
    }

    // Directed message ids: 2 * edge + 0 for a->b, + 1 for b->a.
    let num_messages = 2 * mrf.edges.len();
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, edge) in mrf.edges.iter().enumerate() {
        incoming[edge.b].push(2 * e);
        incoming[edge.a].push(2 * e + 1);
    }
    let mut messages = vec![vec![0.0; labels]; num_messages];
    let mut converged = false;

    for _ in 0..cfg.max_sweeps {
        let mut fresh = vec![vec![0.0; labels]; num_messages];
        for (e, edge) in mrf.edges.iter().enumerate() {
            for dir in 0..2 {
                let from = if dir == 0 { edge.a } else { edge.b };
                let out = 2 * e + dir;
                let back = 2 * e + (1 - dir);
                let msg = &mut fresh[out];
                for (lt, slot) in msg.iter_mut().enumerate() {
                    let mut best = f64::NEG_INFINITY;
                    for lf in 0..labels {
                        let pot = if dir == 0 {
                            edge.potential[lf][lt]
                        } else {
                            edge.potential[lt][lf]
                        };
                        let mut v = mrf.unary[from][lf] + pot;
                        for &m in &incoming[from] {
                            if m != back {
                                v += messages[m][lf];
                            }
                        }
                        if v > best {
                            best = v;
                        }
                    }
                    *slot = best;
                }
                let top = msg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for v in msg.iter_mut() {
                    *v -= top;
                }
            }
        }
        let mut delta: f64 = 0.0;
        for (old, new) in messages.iter_mut().zip(&fresh) {
            for (o, &f) in old.iter_mut().zip(new) {
                let damped = cfg.damping * *o + (1.0 - cfg.damping) * f;
                delta = delta.max((damped - *o).abs());
                *o = damped;
            }
        }
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let mut beliefs = Vec::with_capacity(n);
    for node in 0..n {
        let mut belief = mrf.unary[node].clone();
        for &m in &incoming[node] {
            for (b, &v) in belief.iter_mut().zip(&messages[m]) {
                *b += v;
            }
        }
        beliefs.push(belief);
    }
    (decode_beliefs(mrf, &beliefs, 100.0 * cfg.tol), converged)
}

/// Per-node belief argmax. Loopy fixed points routinely carry exact belief
/// ties whose members only agree jointly, so near-tied labels are resolved
/// together: enumerate the tied combinations (bounded) and keep the one with
/// the best sub-objective, lexicographically smallest among equals.
fn decode_beliefs(mrf: &PhotoMrf, beliefs: &[Vec<f64>], tie_tol: f64) -> Vec<usize> {
    const MAX_TIE_STATES: usize = 4096;
    let mut tied: Vec<Vec<usize>> = Vec::with_capacity(beliefs.len());
    let mut states = 1usize;
    for belief in beliefs {
        let top = belief.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let candidates: Vec<usize> = belief
            .iter()
            .enumerate()
            .filter(|(_, &v)| top - v <= tie_tol)
            .map(|(l, _)| l)
            .collect();
        states = states.saturating_mul(candidates.len());
        tied.push(candidates);
    }
    if states > MAX_TIE_STATES {
        return beliefs.iter().map(|b| argmax(b)).collect();
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut cursor = vec![0usize; tied.len()];
    loop {
        let assignment: Vec<usize> = cursor
            .iter()
            .zip(&tied)
            .map(|(&c, options)| options[c])
            .collect();
        let value = mrf.value(&assignment);
        let better = match &best {
            None => true,
            Some((v, _)) => value > *v,
        };
        if better {
            best = Some((value, assignment));
        }
        // Odometer over the tie sets, last node fastest.
        let mut pos = tied.len();
        loop {
            if pos == 0 {
                return best.expect("at least one assignment").1;
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < tied[pos].len() {
                break;
            }
            cursor[pos] = 0;
        }
    }
}

/// One coordinate step: re-solve every photo independently and keep each
/// photo's incumbent labels unless the candidate strictly improves its
/// sub-objective.
pub fn identity_step(
    x: &IdentityState,
    y: &EventState,
    ctx: &ContextParams,
    table: &GalleryScoreTable,
    c: &Collection,
    h: &Hyperparams,
) -> IdentityState {
    let mp_cfg = MaxProductConfig::default();
    let mut next = x.clone();
    for photo_id in 0..c.num_photos() {
        let mrf = build_photo_mrf(photo_id, c, y, ctx, table, h);
        let n = mrf.num_nodes();
        if n == 0 {
            continue;
        }
        let candidate = if n == 1 {
            vec![solve_single(&mrf).expect("one node")]
        } else {
            match solve_exact(&mrf) {
                Ok(labels) => labels,
                Err(_) => solve_max_product(&mrf, &mp_cfg).0,
            }
        };
        let incumbent: Vec<usize> = mrf.node_ids.iter().map(|&j| x.label(j)).collect();
        if mrf.value(&candidate) > mrf.value(&incumbent) {
            for (&j, &l) in mrf.node_ids.iter().zip(&candidate) {
                next.labels[j] = l;
            }
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::ScoreMatrix;
    use crate::model::{Instance, Photo, NUM_REGIONS};
    use crate::potentials::{gallery_scores, objective};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bare_mrf(unary: Vec<Vec<f64>>, edges: Vec<MrfEdge>) -> PhotoMrf {
        let num_labels = unary[0].len();
        PhotoMrf {
            node_ids: (0..unary.len()).collect(),
            unary,
            edges,
            num_labels,
        }
    }

    fn shared_edges(n: usize, potential: &[Vec<f64>]) -> Vec<MrfEdge> {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                edges.push(MrfEdge {
                    a,
                    b,
                    potential: potential.to_vec(),
                });
            }
        }
        edges
    }

    fn random_symmetric(labels: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; labels]; labels];
        for a in 0..labels {
            for b in a..labels {
                let v = (rng.random::<f64>() * 2.0 - 1.0) * scale;
                m[a][b] = v;
                m[b][a] = v;
            }
        }
        m
    }

    #[test]
    fn single_node_argmax_and_tie_rule() {
        let mrf = bare_mrf(vec![vec![0.1, 0.9, 0.3]], vec![]);
        assert_eq!(solve_single(&mrf).unwrap(), 1);
        let tied = bare_mrf(vec![vec![0.5, 0.5]], vec![]);
        assert_eq!(solve_single(&tied).unwrap(), 0);
    }

    #[test]
    fn single_node_closed_form_matches_hand_computation() {
        // Gallery row plus alpha * ln(p) with alpha = 0.05.
        let scores = [0.40, 0.55, 0.10];
        let p = [0.70, 0.05, 0.25];
        let alpha = 0.05;
        let unary: Vec<f64> = scores
            .iter()
            .zip(&p)
            .map(|(s, pr): (&f64, &f64)| s + alpha * pr.ln())
            .collect();
        // Hand computation: 0.40 + 0.05*ln(0.70) = 0.38217,
        // 0.55 + 0.05*ln(0.05) = 0.40021, 0.10 + 0.05*ln(0.25) = 0.03068.
        let mrf = bare_mrf(vec![unary.clone()], vec![]);
        assert_eq!(solve_single(&mrf).unwrap(), 1);
        assert!((unary[1] - 0.4002134).abs() < 1e-6);
    }

    #[test]
    fn exact_on_one_node_equals_solve_single() {
        let mrf = bare_mrf(vec![vec![0.2, 0.7, 0.4, 0.7]], vec![]);
        assert_eq!(solve_exact(&mrf).unwrap(), vec![solve_single(&mrf).unwrap()]);
    }

    #[test]
    fn exact_two_nodes_two_labels_enumerates_four_states() {
        // Hand-enumerated: values of (0,0), (0,1), (1,0), (1,1) are
        // 1.0+0.2+0.5, 1.0+0.9-0.3, 0.1+0.2-0.3, 0.1+0.9+0.5 =
        // 1.7, 1.6, 0.0, 1.5 -> unique optimum (0,0).
        let pot = vec![vec![0.5, -0.3], vec![-0.3, 0.5]];
        let mrf = bare_mrf(
            vec![vec![1.0, 0.1], vec![0.2, 0.9]],
            shared_edges(2, &pot),
        );
        assert_eq!(solve_exact(&mrf).unwrap(), vec![0, 0]);
        assert!((mrf.value(&[0, 0]) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn exact_result_dominates_every_enumerated_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pot = random_symmetric(3, 0.5, &mut rng);
        let unary: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let mrf = bare_mrf(unary, shared_edges(3, &pot));
        let best = solve_exact(&mrf).unwrap();
        let best_value = mrf.value(&best);
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    assert!(best_value >= mrf.value(&[a, b, c]) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_ties_break_lexicographically() {
        let mrf = bare_mrf(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![]);
        assert_eq!(solve_exact(&mrf).unwrap(), vec![0, 0]);
    }

    #[test]
    fn exact_refuses_oversized_problems() {
        let unary = vec![vec![0.0; 30]; 5];
        let mrf = bare_mrf(unary, vec![]);
        assert!(matches!(
            solve_exact(&mrf),
            Err(Error::ExactSolveTooLarge { .. })
        ));
    }

    #[test]
    fn max_product_decodes_unary_argmax_without_coupling() {
        let zero = vec![vec![0.0; 4]; 4];
        let unary = vec![
            vec![0.1, 0.9, 0.2, 0.0],
            vec![0.7, 0.1, 0.3, 0.2],
            vec![0.0, 0.0, 0.0, 0.4],
        ];
        let mrf = bare_mrf(unary.clone(), shared_edges(3, &zero));
        let (decode, converged) = solve_max_product(&mrf, &MaxProductConfig::default());
        assert!(converged);
        assert_eq!(decode, vec![1, 0, 3]);
        // Explicitly empty edge list takes the factorized fast path.
        let bare = bare_mrf(unary, vec![]);
        let (decode2, _) = solve_max_product(&bare, &MaxProductConfig::default());
        assert_eq!(decode2, vec![1, 0, 3]);
    }

    #[test]
    fn max_product_matches_exact_on_random_triangles() {
        let cfg = MaxProductConfig::default();
        let mut matches = 0;
        let mut total = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let pot = random_symmetric(5, 0.1, &mut rng);
            let unary: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
                .collect();
            let mrf = bare_mrf(unary, shared_edges(3, &pot));
            let exact = solve_exact(&mrf).unwrap();
            // Keep fixtures with a unique optimum.
            let best = mrf.value(&exact);
            let mut unique = true;
            for a in 0..5 {
                for b in 0..5 {
                    for c in 0..5 {
                        let state = [a, b, c];
                        if state != exact.as_slice() && (mrf.value(&state) - best).abs() < 1e-9 {
                            unique = false;
                        }
                    }
                }
            }
            if !unique {
                continue;
            }
            total += 1;
            let (decode, _) = solve_max_product(&mrf, &cfg);
            if decode == exact {
                matches += 1;
            } else {
                assert!(best - mrf.value(&decode) < 1e-6);
            }
        }
        assert!(total >= 80, "too many degenerate fixtures: {total}");
        assert!(
            matches * 100 >= total * 99,
            "only {matches}/{total} matched exact"
        );
    }

    #[test]
    fn max_product_is_exact_on_trees() {
        // Triangle broken by zeroing one edge: a chain, where max-product is
        // exact.
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let pot = random_symmetric(4, 0.8, &mut rng);
            let zero = vec![vec![0.0; 4]; 4];
            let unary: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..4).map(|_| rng.random::<f64>() * 2.0).collect())
                .collect();
            let edges = vec![
                MrfEdge { a: 0, b: 1, potential: pot.clone() },
                MrfEdge { a: 1, b: 2, potential: pot.clone() },
                MrfEdge { a: 0, b: 2, potential: zero.clone() },
            ];
            let mrf = bare_mrf(unary, edges);
            let exact = solve_exact(&mrf).unwrap();
            let (decode, converged) = solve_max_product(&mrf, &MaxProductConfig::default());
            assert!(converged, "seed {seed}");
            assert!(
                (mrf.value(&decode) - mrf.value(&exact)).abs() < 1e-9,
                "seed {seed}: tree decode is not optimal"
            );
        }
    }

    #[test]
    fn max_product_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pot = random_symmetric(5, 0.4, &mut rng);
        let unary: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
            .collect();
        let mrf = bare_mrf(unary, shared_edges(4, &pot));
        let a = solve_max_product(&mrf, &MaxProductConfig::default());
        let b = solve_max_product(&mrf, &MaxProductConfig::default());
        assert_eq!(a, b);
    }

    /// Collection with one gallery singleton per identity plus the given
    /// multi-instance query photos (labels drawn from ground truth later).
    fn mrf_collection(
        num_identities: usize,
        query_photos: &[usize],
        seed: u64,
    ) -> (Collection, ScoreMatrix) {
        let dim = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut photos = Vec::new();
        let mut instances = Vec::new();
        for (p, &count) in query_photos.iter().enumerate() {
            let mut ids = Vec::new();
            for _ in 0..count {
                let id = instances.len();
                ids.push(id);
                instances.push(Instance {
                    instance_id: id,
                    photo_id: p,
                    region_features: std::array::from_fn(|_| vec![1.0, 0.0]),
                    visibility: [true; NUM_REGIONS],
                    label: None,
                });
            }
            photos.push(Photo {
                photo_id: p,
                scene_feature: vec![p as f64, 0.0],
                instance_ids: ids,
            });
        }
        for l in 0..num_identities {
            let id = instances.len();
            let p = photos.len();
            photos.push(Photo {
                photo_id: p,
                scene_feature: vec![p as f64, 0.0],
                instance_ids: vec![id],
            });
            instances.push(Instance {
                instance_id: id,
                photo_id: p,
                region_features: std::array::from_fn(|_| vec![1.0, 0.0]),
                visibility: [true; NUM_REGIONS],
                label: Some(l),
            });
        }
        let n = instances.len();
        let c = Collection::new(photos, instances, num_identities, dim, 2, None);
        let mut s = ScoreMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random::<f64>() * 2.0 - 1.0;
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        (c, s)
    }

    fn random_ctx(k: usize, l: usize, scene_dim: usize, seed: u64) -> ContextParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctx = ContextParams::neutral(k, l, scene_dim);
        for p in &mut ctx.scene_prototypes {
            for v in p.iter_mut() {
                *v = rng.random::<f64>() * 2.0;
            }
        }
        for d in &mut ctx.identity_dists {
            let mut total = 0.0;
            for v in d.iter_mut() {
                *v = rng.random::<f64>() + 0.05;
                total += *v;
            }
            for v in d.iter_mut() {
                *v /= total;
            }
        }
        for a in 0..l {
            for b in a..l {
                let v = rng.random::<f64>();
                ctx.cooccurrence[a][b] = v;
                ctx.cooccurrence[b][a] = v;
            }
        }
        ctx
    }

    #[test]
    fn unassigned_photo_has_no_attendance_term() {
        let (c, s) = mrf_collection(3, &[1], 11);
        let table = gallery_scores(&s, &c).unwrap();
        let ctx = random_ctx(2, 3, 2, 12);
        let h = Hyperparams {
            alpha: 0.5,
            beta: 0.0,
            ..Hyperparams::default()
        };
        let y = EventState::unassigned(c.num_photos());
        let mrf = build_photo_mrf(0, &c, &y, &ctx, &table, &h);
        let expected: Vec<f64> = table.row(0).unwrap().to_vec();
        assert_eq!(mrf.unary[0], expected);

        let mut assigned = EventState::unassigned(c.num_photos());
        assigned.assignment[0] = Some(1);
        let mrf2 = build_photo_mrf(0, &c, &assigned, &ctx, &table, &h);
        for l in 0..3 {
            let want = expected[l] + 0.5 * ctx.identity_dists[1][l].ln();
            assert!((mrf2.unary[0][l] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_leave_raw_scores_and_no_edges() {
        let (c, s) = mrf_collection(3, &[2], 13);
        let table = gallery_scores(&s, &c).unwrap();
        let ctx = random_ctx(2, 3, 2, 14);
        let h = Hyperparams {
            alpha: 0.0,
            beta: 0.0,
            ..Hyperparams::default()
        };
        let mut y = EventState::unassigned(c.num_photos());
        y.assignment[0] = Some(0);
        let mrf = build_photo_mrf(0, &c, &y, &ctx, &table, &h);
        assert!(mrf.edges.is_empty());
        for (node, &j) in mrf.node_ids.iter().enumerate() {
            assert_eq!(mrf.unary[node], table.row(j).unwrap());
        }
    }

    #[test]
    fn gallery_fold_matches_objective_differences() {
        // One query plus one gallery instance in the same photo: the unary
        // differences must match full-objective differences exactly.
        let dim = 2;
        let mut photos = vec![Photo {
            photo_id: 0,
            scene_feature: vec![0.0, 0.0],
            instance_ids: vec![0, 1],
        }];
        let mut instances = vec![
            Instance {
                instance_id: 0,
                photo_id: 0,
                region_features: std::array::from_fn(|_| vec![1.0, 0.0]),
                visibility: [true; NUM_REGIONS],
                label: None,
            },
            Instance {
                instance_id: 1,
                photo_id: 0,
                region_features: std::array::from_fn(|_| vec![1.0, 0.0]),
                visibility: [true; NUM_REGIONS],
                label: Some(2),
            },
        ];
        for l in 0..2 {
            let id = instances.len();
            photos.push(Photo {
                photo_id: l + 1,
                scene_feature: vec![0.0, 0.0],
                instance_ids: vec![id],
            });
            instances.push(Instance {
                instance_id: id,
                photo_id: l + 1,
                region_features: std::array::from_fn(|_| vec![0.0, 1.0]),
                visibility: [true; NUM_REGIONS],
                label: Some(l),
            });
        }
        let c = Collection::new(photos, instances, 3, dim, 2, None);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = c.num_instances();
        let mut s = ScoreMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random::<f64>();
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        let table = gallery_scores(&s, &c).unwrap();
        let ctx = random_ctx(1, 3, 2, 16);
        let h = Hyperparams {
            alpha: 0.05,
            beta: 0.3,
            num_events: 1,
            ..Hyperparams::default()
        };
        let mut y = EventState::unassigned(c.num_photos());
        y.assignment[0] = Some(0);
        let mrf = build_photo_mrf(0, &c, &y, &ctx, &table, &h);
        assert_eq!(mrf.node_ids, vec![0]);

        let base = {
            let x = IdentityState::new(&c, vec![0, 2, 0, 1]);
            objective(&x, &y, &ctx, &table, &c, &h).unwrap()
        };
        for l in 1..3 {
            let x = IdentityState::new(&c, vec![l, 2, 0, 1]);
            let j = objective(&x, &y, &ctx, &table, &c, &h).unwrap();
            let unary_diff = mrf.unary[0][l] - mrf.unary[0][0];
            assert!(
                (j - base - unary_diff).abs() < 1e-12,
                "label {l}: objective diff {} vs unary diff {unary_diff}",
                j - base
            );
        }
    }

    #[test]
    fn pure_visual_step_takes_table_argmax() {
        let (c, s) = mrf_collection(4, &[2, 3, 1], 17);
        let table = gallery_scores(&s, &c).unwrap();
        let ctx = random_ctx(2, 4, 2, 18);
        let h = Hyperparams {
            alpha: 0.0,
            beta: 0.0,
            ..Hyperparams::default()
        };
        let y = EventState::unassigned(c.num_photos());
        let x0 = IdentityState::new(&c, vec![0; c.num_instances()]);
        let x1 = identity_step(&x0, &y, &ctx, &table, &c, &h);
        for &j in &c.query_ids() {
            let row = table.row(j).unwrap();
            let best = argmax(row);
            // Keep-incumbent: only if strictly better than label 0.
            if row[best] > row[0] {
                assert_eq!(x1.label(j), best);
            } else {
                assert_eq!(x1.label(j), 0);
            }
        }
    }

    #[test]
    fn optimal_incumbent_is_kept_unchanged() {
        let (c, s) = mrf_collection(4, &[2, 2], 19);
        let table = gallery_scores(&s, &c).unwrap();
        let ctx = random_ctx(2, 4, 2, 20);
        let h = Hyperparams {
            alpha: 0.05,
            beta: 0.02,
            num_events: 2,
            ..Hyperparams::default()
        };
        let mut y = EventState::unassigned(c.num_photos());
        y.assignment[0] = Some(0);
        y.assignment[1] = Some(1);
        let x0 = IdentityState::new(&c, vec![0; c.num_instances()]);
        let x1 = identity_step(&x0, &y, &ctx, &table, &c, &h);
        let x2 = identity_step(&x1, &y, &ctx, &table, &c, &h);
        assert_eq!(x1, x2);
    }

    #[test]
    fn identity_step_never_lowers_the_objective() {
        for seed in 0..10 {
            let (c, s) = mrf_collection(5, &[3, 2, 4, 1, 2], 100 + seed);
            let table = gallery_scores(&s, &c).unwrap();
            let ctx = random_ctx(3, 5, 2, 200 + seed);
            let h = Hyperparams {
                alpha: 0.05,
                beta: 0.01,
                num_events: 3,
                ..Hyperparams::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let labels: Vec<usize> = (0..c.num_instances())
                .map(|_| rng.random_range(0..5))
                .collect();
            let x0 = IdentityState::new(&c, labels);
            let mut y = EventState::unassigned(c.num_photos());
            for (i, slot) in y.assignment.iter_mut().enumerate() {
                if i % 2 == 0 {
                    *slot = Some(i % 3);
                }
            }
            let before = objective(&x0, &y, &ctx, &table, &c, &h).unwrap();
            let x1 = identity_step(&x0, &y, &ctx, &table, &c, &h);
            let after = objective(&x1, &y, &ctx, &table, &c, &h).unwrap();
            assert!(
                after >= before - 1e-9,
                "seed {seed}: objective fell {before} -> {after}"
            );
            // Per-photo sub-objective also never falls.
            for p in 0..c.num_photos() {
                let mrf = build_photo_mrf(p, &c, &y, &ctx, &table, &h);
                if mrf.num_nodes() == 0 {
                    continue;
                }
                let inc: Vec<usize> = mrf.node_ids.iter().map(|&j| x0.label(j)).collect();
                let got: Vec<usize> = mrf.node_ids.iter().map(|&j| x1.label(j)).collect();
                assert!(mrf.value(&got) >= mrf.value(&inc));
            }
        }
    }
// scratch: appended temporarily to identity.rs tests





}
