//! The gallery/query evaluation protocol: accuracy, the gallery/query role
//! swap, event recovery after optimal matching, and the hyperparameter grid
//! searches.

use crate::error::{Error, Result};
use crate::flow::FlowNetwork;
use crate::fusion::{region_score_matrix, ScoreMatrix};
use crate::model::{
    build_gallery_index, Collection, EventState, Hyperparams, IdentityState, RegionKind,
    NUM_REGIONS,
};
use crate::potentials::gallery_scores;
use crate::solver;
use crate::synthgen::GroundTruth;

/// Accuracy of one labeling method, forward and (optionally) with the
/// gallery/query roles swapped.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodAccuracy {
    pub method: String,
    pub forward: f64,
    pub backward: Option<f64>,
    pub mean: f64,
}

impl MethodAccuracy {
    pub fn new(method: impl Into<String>, forward: f64, backward: Option<f64>) -> MethodAccuracy {
        let mean = match backward {
            Some(b) => (forward + b) / 2.0,
            None => forward,
        };
        MethodAccuracy {
            method: method.into(),
            forward,
            backward,
            mean,
        }
    }
}

/// A (truth, predicted, count) confusion cell; only mismatches are listed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionEntry {
    pub truth: usize,
    pub predicted: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy_forward: f64,
    pub accuracy_backward: Option<f64>,
    pub accuracy_mean: f64,
    pub methods: Vec<MethodAccuracy>,
    pub confusion: Vec<ConfusionEntry>,
    pub trace_ref: Option<String>,
}

impl EvalReport {
    /// Headline accuracies come from the last method listed (the fullest
    /// configuration by convention).
    pub fn from_methods(
        methods: Vec<MethodAccuracy>,
        confusion: Vec<ConfusionEntry>,
        trace_ref: Option<String>,
    ) -> EvalReport {
        let last = methods.last().expect("at least one method");
        EvalReport {
            accuracy_forward: last.forward,
            accuracy_backward: last.backward,
            accuracy_mean: last.mean,
            methods,
            confusion,
            trace_ref,
        }
    }
}

/// Fraction of query instances whose prediction equals the ground truth.
/// Every query instance must be covered.
pub fn accuracy(
    c: &Collection,
    predictions: &[(usize, usize)],
    truth_labels: &[usize],
) -> Result<f64> {
    let mut predicted: Vec<Option<usize>> = vec![None; c.num_instances()];
    for &(j, l) in predictions {
        if j < predicted.len() {
            predicted[j] = Some(l);
        }
    }
    let queries = c.query_ids();
    if queries.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for &j in &queries {
        match predicted[j] {
            None => return Err(Error::MissingPrediction { instance: j }),
            Some(l) => {
                if l == truth_labels[j] {
                    correct += 1;
                }
            }
        }
    }
    Ok(correct as f64 / queries.len() as f64)
}

/// Mismatched (truth, predicted) pairs over the query set, most frequent
/// first.
pub fn confusion_summary(
    c: &Collection,
    predictions: &[(usize, usize)],
    truth_labels: &[usize],
    top: usize,
) -> Vec<ConfusionEntry> {
    let mut counts = std::collections::BTreeMap::new();
    let predicted: std::collections::BTreeMap<usize, usize> =
        predictions.iter().copied().collect();
    for &j in &c.query_ids() {
        if let Some(&l) = predicted.get(&j) {
            if l != truth_labels[j] {
                *counts.entry((truth_labels[j], l)).or_insert(0usize) += 1;
            }
        }
    }
    let mut entries: Vec<ConfusionEntry> = counts
        .into_iter()
        .map(|((truth, predicted), count)| ConfusionEntry {
            truth,
            predicted,
            count,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.truth.cmp(&b.truth))
            .then(a.predicted.cmp(&b.predicted))
    });
    entries.truncate(top);
    entries
}

/// Exchange the gallery and query roles: gallery instances lose their
/// labels, query instances take theirs from the ground truth. Features and
/// ids are untouched, so a cached score matrix remains valid.
pub fn swap_roles(c: &Collection, truth: &GroundTruth) -> Result<Collection> {
    let mut swapped = c.clone();
    for inst in &mut swapped.instances {
        inst.label = match inst.label {
            Some(_) => None,
            None => Some(truth.labels[inst.instance_id]),
        };
    }
    swapped.gallery_index = build_gallery_index(&swapped.instances, swapped.num_identities);
    for (l, gallery) in swapped.gallery_index.iter().enumerate() {
        if gallery.is_empty() {
            return Err(Error::EmptyGallery { identity: l });
        }
    }
    Ok(swapped)
}

/// Predictions for every query instance of `c` under the given states.
pub fn predictions_from(c: &Collection, x: &IdentityState) -> Vec<(usize, usize)> {
    c.query_ids().iter().map(|&j| (j, x.label(j))).collect()
}

/// Run the full solver protocol: forward accuracy, and if `swap` is set,
/// rerun with the roles exchanged (reusing the same score matrix) and
/// report both.
pub fn run_protocol(
    c: &Collection,
    truth: &GroundTruth,
    s: &ScoreMatrix,
    h: &Hyperparams,
    seed: u64,
    swap: bool,
    method: &str,
) -> Result<MethodAccuracy> {
    let forward_solution = solver::run(c, s, h, seed)?;
    let forward = accuracy(c, &predictions_from(c, &forward_solution.identities), &truth.labels)?;
    let backward = if swap {
        let swapped = swap_roles(c, truth)?;
        let solution = solver::run(&swapped, s, h, seed)?;
        Some(accuracy(
            &swapped,
            &predictions_from(&swapped, &solution.identities),
            &truth.labels,
        )?)
    } else {
        None
    };
    Ok(MethodAccuracy::new(method, forward, backward))
}

/// Fraction of planted-event photos assigned to the planted event's
/// recovered cluster, after the optimal one-to-one matching between planted
/// and recovered event indices.
pub fn event_recovery(
    truth_events: &[Option<usize>],
    recovered: &EventState,
    num_true: usize,
    num_recovered: usize,
) -> f64 {
    let mut overlap = vec![vec![0usize; num_recovered]; num_true];
    let mut total = 0usize;
    for (truth, rec) in truth_events.iter().zip(&recovered.assignment) {
        if let Some(t) = truth {
            total += 1;
            if let Some(r) = rec {
                overlap[*t][*r] += 1;
            }
        }
    }
    if total == 0 {
        return 0.0;
    }

    // Maximum-weight bipartite matching via min-cost flow.
    let source = 0;
    let sink = 1;
    let truth_node = |t: usize| 2 + t;
    let rec_node = |r: usize| 2 + num_true + r;
    let mut net = FlowNetwork::new(2 + num_true + num_recovered);
    net.add_arc(source, sink, num_true as i64, 0.0); // unmatched events
    for t in 0..num_true {
        net.add_arc(source, truth_node(t), 1, 0.0);
    }
    let mut cell_arcs = vec![Vec::new(); num_true];
    for t in 0..num_true {
        for r in 0..num_recovered {
            cell_arcs[t].push(net.add_arc(truth_node(t), rec_node(r), 1, -(overlap[t][r] as f64)));
        }
    }
    for r in 0..num_recovered {
        net.add_arc(rec_node(r), sink, 1, 0.0);
    }
    net.min_cost_flow(source, sink, num_true as i64);

    let mut matched = 0usize;
    for t in 0..num_true {
        for r in 0..num_recovered {
            if net.flow(cell_arcs[t][r]) > 0 {
                matched += overlap[t][r];
            }
        }
    }
    matched as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub accuracy: f64,
}

/// Evaluate the full solver on every (alpha, beta) grid point and return the
/// winner; exact ties go to the lexicographically smaller pair.
pub fn grid_search_hyperparams(
    c: &Collection,
    truth: &GroundTruth,
    s: &ScoreMatrix,
    base: &Hyperparams,
    alphas: &[f64],
    betas: &[f64],
    seed: u64,
) -> Result<((f64, f64), Vec<GridPoint>)> {
    let mut table = Vec::with_capacity(alphas.len() * betas.len());
    let mut best: Option<GridPoint> = None;
    for &alpha in alphas {
        for &beta in betas {
            let h = Hyperparams {
                alpha,
                beta,
                ..base.clone()
            };
            let solution = solver::run(c, s, &h, seed)?;
            let acc = accuracy(c, &predictions_from(c, &solution.identities), &truth.labels)?;
            let point = GridPoint {
                alpha,
                beta,
                accuracy: acc,
            };
            let replace = match &best {
                None => true,
                Some(b) => {
                    acc > b.accuracy
                        || (acc == b.accuracy
                            && (alpha, beta) < (b.alpha, b.beta))
                }
            };
            if replace {
                best = Some(point.clone());
            }
            table.push(point);
        }
    }
    let best = best.ok_or_else(|| Error::InvalidConfig("empty hyperparameter grid".into()))?;
    Ok(((best.alpha, best.beta), table))
}

/// Grid-search fixed region weights on a coarse simplex lattice (the
/// baseline scorer's tuning step). Returns the best weights and their
/// visual-only accuracy on `c`.
pub fn grid_search_uniform_weights(
    c: &Collection,
    truth_labels: &[usize],
    step_count: usize,
) -> Result<([f64; NUM_REGIONS], f64)> {
    let region_matrices: Vec<ScoreMatrix> = RegionKind::ALL
        .iter()
        .map(|&r| region_score_matrix(r, c))
        .collect::<Result<_>>()?;
    let queries = c.query_ids();
    let mut best_weights = [0.25; NUM_REGIONS];
    let mut best_acc = -1.0;
    // All nonnegative integer 4-tuples summing to step_count, lexicographic.
    for a in 0..=step_count {
        for b in 0..=(step_count - a) {
            for cc in 0..=(step_count - a - b) {
                let d = step_count - a - b - cc;
                let w = [
                    a as f64 / step_count as f64,
                    b as f64 / step_count as f64,
                    cc as f64 / step_count as f64,
                    d as f64 / step_count as f64,
                ];
                let mut correct = 0;
                for &j in &queries {
                    let mut best_label = 0;
                    let mut best_score = f64::NEG_INFINITY;
                    for (l, gallery) in c.gallery_index.iter().enumerate() {
                        for &g in gallery {
                            let mut score = 0.0;
                            for (r, m) in region_matrices.iter().enumerate() {
                                score += w[r] * m.get(j, g);
                            }
                            if score > best_score {
                                best_score = score;
                                best_label = l;
                            }
                        }
                    }
                    if best_label == truth_labels[j] {
                        correct += 1;
                    }
                }
                let acc = if queries.is_empty() {
                    0.0
                } else {
                    correct as f64 / queries.len() as f64
                };
                if acc > best_acc {
                    best_acc = acc;
                    best_weights = w;
                }
            }
        }
    }
    Ok((best_weights, best_acc))
}

/// Visual-only accuracy of a score matrix: argmax over the gallery table.
pub fn visual_accuracy(c: &Collection, s: &ScoreMatrix, truth_labels: &[usize]) -> Result<f64> {
    let table = gallery_scores(s, c)?;
    let x = solver::visual_argmax(c, &table);
    accuracy(c, &predictions_from(c, &x), truth_labels)
}
