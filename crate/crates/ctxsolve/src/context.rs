//! Context learning: closed-form block updates of the scene prototypes, the
//! per-event identity distributions, and the co-occurrence matrix, given the
//! current identity labels and event assignments.

use crate::model::{Collection, ContextParams, EventState, Hyperparams, IdentityState};

/// Mean scene feature of each event's assigned photos. Events with no
/// assigned photos keep their previous prototype so downstream affinities
/// stay finite.
pub fn update_prototypes(
    y: &EventState,
    c: &Collection,
    previous: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let k = previous.len();
    let mut sums = vec![vec![0.0; c.scene_dim]; k];
    let mut counts = vec![0usize; k];
    for (photo, event) in c.photos.iter().zip(&y.assignment) {
        if let Some(e) = event {
            counts[*e] += 1;
            for (s, f) in sums[*e].iter_mut().zip(&photo.scene_feature) {
                *s += f;
            }
        }
    }
    let mut prototypes = Vec::with_capacity(k);
    for e in 0..k {
        if counts[e] == 0 {
            prototypes.push(previous[e].clone());
        } else {
            let inv = 1.0 / counts[e] as f64;
            prototypes.push(sums[e].iter().map(|s| s * inv).collect());
        }
    }
    prototypes
}

/// Per-event identity counts under the current labels.
pub fn attendance_counts(
    x: &IdentityState,
    y: &EventState,
    c: &Collection,
    num_events: usize,
) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0.0; c.num_identities]; num_events];
    for (photo, event) in c.photos.iter().zip(&y.assignment) {
        if let Some(e) = event {
            for &j in &photo.instance_ids {
                counts[*e][x.label(j)] += 1.0;
            }
        }
    }
    counts
}

/// Additively smoothed maximum-likelihood estimate of each event's identity
/// distribution: `(count + eps) / (total + eps * L)`. Events with no
/// attendants get the uniform distribution.
pub fn update_identity_dists(
    x: &IdentityState,
    y: &EventState,
    c: &Collection,
    eps: f64,
    num_events: usize,
) -> Vec<Vec<f64>> {
    let counts = attendance_counts(x, y, c, num_events);
    counts
        .into_iter()
        .map(|row| smooth_distribution(&row, eps))
        .collect()
}

fn smooth_distribution(counts: &[f64], eps: f64) -> Vec<f64> {
    let l = counts.len();
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return vec![1.0 / l as f64; l];
    }
    let denom = total + eps * l as f64;
    counts.iter().map(|&n| (n + eps) / denom).collect()
}

/// Co-occurrence matrix: outer products over every ordered pair of distinct
/// instances within a photo, normalized by the Frobenius norm. All instances
/// contribute through their labels, gallery and query alike. Returns the
/// zero matrix when no photo has two or more instances.
pub fn update_cooccurrence(x: &IdentityState, c: &Collection) -> Vec<Vec<f64>> {
    let l = c.num_identities;
    let mut q = vec![vec![0.0; l]; l];
    for photo in &c.photos {
        let ids = &photo.instance_ids;
        for (a, &j) in ids.iter().enumerate() {
            for &j2 in &ids[a + 1..] {
                let (la, lb) = (x.label(j), x.label(j2));
                q[la][lb] += 1.0;
                q[lb][la] += 1.0;
            }
        }
    }
    let norm: f64 = q
        .iter()
        .flat_map(|row| row.iter().map(|v| v * v))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        for row in &mut q {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    q
}

/// Attendance log-likelihood of one event's counts under a distribution.
fn attendance_loglik(counts: &[f64], dist: &[f64]) -> f64 {
    counts
        .iter()
        .zip(dist)
        .filter(|(&n, _)| n > 0.0)
        .map(|(&n, &p)| n * p.ln())
        .sum()
}

/// One coordinate step: apply all three closed-form updates.
///
/// Smoothing can nudge a re-estimated distribution slightly off the exact
/// likelihood optimum, so each event keeps its previous distribution when
/// that one scores the new attendance counts strictly higher. This keeps the
/// unified objective non-decreasing across the step.
pub fn context_step(
    x: &IdentityState,
    y: &EventState,
    ctx: &ContextParams,
    c: &Collection,
    h: &Hyperparams,
) -> ContextParams {
    let k = h.num_events;
    let scene_prototypes = update_prototypes(y, c, &ctx.scene_prototypes);
    let counts = attendance_counts(x, y, c, k);
    let mut identity_dists = Vec::with_capacity(k);
    for (e, row) in counts.iter().enumerate() {
        let fresh = smooth_distribution(row, h.dist_smoothing_eps);
        let old = &ctx.identity_dists[e];
        let keep_old = old.len() == fresh.len()
            && old.iter().all(|&p| p > 0.0)
            && attendance_loglik(row, old) > attendance_loglik(row, &fresh);
        identity_dists.push(if keep_old { old.clone() } else { fresh });
    }
    let cooccurrence = update_cooccurrence(x, c);
    ContextParams {
        scene_prototypes,
        identity_dists,
        cooccurrence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Instance, Photo, NUM_REGIONS};
    use crate::potentials::event_term;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Photos with the given (scene feature, instance labels) pairs, plus a
    /// gallery singleton per identity so the collection stays valid.
    fn collection_with(photos_spec: &[(Vec<f64>, Vec<usize>)], num_identities: usize) -> (Collection, IdentityState) {
        let scene_dim = photos_spec[0].0.len();
        let mut photos = Vec::new();
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for (p, (scene, members)) in photos_spec.iter().enumerate() {
            let mut ids = Vec::new();
            for &l in members {
                let id = instances.len();
                ids.push(id);
                labels.push(l);
                instances.push(Instance {
                    instance_id: id,
                    photo_id: p,
                    region_features: std::array::from_fn(|_| vec![1.0]),
                    visibility: [true; NUM_REGIONS],
                    label: None,
                });
            }
            photos.push(Photo {
                photo_id: p,
                scene_feature: scene.clone(),
                instance_ids: ids,
            });
        }
        for l in 0..num_identities {
            let id = instances.len();
            let p = photos.len();
            labels.push(l);
            photos.push(Photo {
                photo_id: p,
                scene_feature: vec![0.0; scene_dim],
                instance_ids: vec![id],
            });
            instances.push(Instance {
                instance_id: id,
                photo_id: p,
                region_features: std::array::from_fn(|_| vec![1.0]),
                visibility: [true; NUM_REGIONS],
                label: Some(l),
            });
        }
        let c = Collection::new(photos, instances, num_identities, 1, scene_dim, None);
        let x = IdentityState::new(&c, labels);
        (c, x)
    }

    #[test]
    fn singleton_event_copies_the_scene_feature() {
        let (c, _) = collection_with(&[(vec![0.3, -0.7], vec![0])], 1);
        let mut y = EventState::unassigned(c.num_photos());
        y.assignment[0] = Some(0);
        let prev = vec![vec![9.0, 9.0]; 2];
        let prototypes = update_prototypes(&y, &c, &prev);
        assert_eq!(prototypes[0], vec![0.3, -0.7]);
        assert_eq!(prototypes[1], vec![9.0, 9.0]); // empty event persists
    }

    #[test]
    fn opposite_features_average_to_zero() {
        let (c, _) = collection_with(&[(vec![1.0, 2.0], vec![0]), (vec![-1.0, -2.0], vec![0])], 1);
        let mut y = EventState::unassigned(c.num_photos());
        y.assignment[0] = Some(0);
        y.assignment[1] = Some(0);
        let prototypes = update_prototypes(&y, &c, &vec![vec![0.0; 2]; 1]);
        assert_eq!(prototypes[0], vec![0.0, 0.0]);
    }

    #[test]
    fn prototype_matches_per_coordinate_mean_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scenes: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let spec: Vec<(Vec<f64>, Vec<usize>)> =
            scenes.iter().map(|s| (s.clone(), vec![0])).collect();
        let (c, _) = collection_with(&spec, 1);
        let mut y = EventState::unassigned(c.num_photos());
        for i in 0..5 {
            y.assignment[i] = Some(0);
        }
        let prototypes = update_prototypes(&y, &c, &vec![vec![0.0; 3]; 1]);
        for d in 0..3 {
            let mean: f64 = scenes.iter().map(|s| s[d]).sum::<f64>() / 5.0;
            assert!((prototypes[0][d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_attendance_concentrates_with_tiny_smoothing() {
        let (c, x) = collection_with(
            &[(vec![0.0], vec![2, 2]), (vec![0.0], vec![2, 2])],
            3,
        );
        let mut y = EventState::unassigned(c.num_photos());
        y.assignment[0] = Some(0);
        y.assignment[1] = Some(0);
        let dists = update_identity_dists(&x, &y, &c, 1e-12, 1);
        assert!(dists[0][2] > 1.0 - 1e-9);
        assert!(dists[0][0] > 0.0 && dists[0][1] > 0.0);
    }

    #[test]
    fn empty_event_gets_the_uniform_distribution() {
        let (c, x) = collection_with(&[(vec![0.0], vec![0])], 4);
        let y = EventState::unassigned(c.num_photos());
        let dists = update_identity_dists(&x, &y, &c, 0.01, 2);
        for k in 0..2 {
            for l in 0..4 {
                assert!((dists[k][l] - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn smoothing_formula_matches_hand_arithmetic() {
        // Counts (3, 1, 0) with eps 0.01: (3.01, 1.01, 0.01) / 4.03.
        let smoothed = smooth_distribution(&[3.0, 1.0, 0.0], 0.01);
        assert!((smoothed[0] - 3.01 / 4.03).abs() < 1e-15);
        assert!((smoothed[1] - 1.01 / 4.03).abs() < 1e-15);
        assert!((smoothed[2] - 0.01 / 4.03).abs() < 1e-15);
        assert!((smoothed.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_multi_person_photos_yield_the_zero_matrix() {
        let (c, x) = collection_with(&[(vec![0.0], vec![0]), (vec![0.0], vec![1])], 2);
        let q = update_cooccurrence(&x, &c);
        assert_eq!(q, vec![vec![0.0; 2]; 2]);
    }

    #[test]
    fn one_pair_normalizes_to_inverse_root_two() {
        let (c, x) = collection_with(&[(vec![0.0], vec![0, 1])], 2);
        let q = update_cooccurrence(&x, &c);
        let expected = 1.0 / 2.0f64.sqrt();
        assert!((q[0][1] - expected).abs() < 1e-12);
        assert!((q[1][0] - expected).abs() < 1e-12);
        assert_eq!(q[0][0], 0.0);
        assert_eq!(q[1][1], 0.0);
    }

    #[test]
    fn cooccurrence_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let num_identities = 4;
        let spec: Vec<(Vec<f64>, Vec<usize>)> = (0..10)
            .map(|_| {
                let members: Vec<usize> = (0..rng.random_range(1..=4))
                    .map(|_| rng.random_range(0..num_identities))
                    .collect();
                (vec![0.0], members)
            })
            .collect();
        let (c, x) = collection_with(&spec, num_identities);
        let q = update_cooccurrence(&x, &c);

        // Oracle: raw ordered-pair sums, then Frobenius normalization.
        let mut raw = vec![vec![0.0; num_identities]; num_identities];
        for photo in &c.photos {
            for &j in &photo.instance_ids {
                for &j2 in &photo.instance_ids {
                    if j != j2 {
                        raw[x.label(j)][x.label(j2)] += 1.0;
                    }
                }
            }
        }
        let norm: f64 = raw
            .iter()
            .flat_map(|r| r.iter().map(|v| v * v))
            .sum::<f64>()
            .sqrt();
        for a in 0..num_identities {
            for b in 0..num_identities {
                assert!((q[a][b] - raw[a][b] / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cooccurrence_is_symmetric_nonnegative_unit_norm() {
        let (c, x) = collection_with(
            &[
                (vec![0.0], vec![0, 1, 2]),
                (vec![0.0], vec![1, 2]),
                (vec![0.0], vec![0, 2, 2]),
            ],
            3,
        );
        let q = update_cooccurrence(&x, &c);
        let mut frob = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                assert!(q[a][b] >= 0.0);
                assert_eq!(q[a][b], q[b][a]);
                frob += q[a][b] * q[a][b];
            }
        }
        assert!((frob.sqrt() - 1.0).abs() < 1e-9);
    }

    fn step_fixture() -> (Collection, IdentityState, EventState, Hyperparams) {
        let (c, x) = collection_with(
            &[
                (vec![1.0, 0.0], vec![0, 1]),
                (vec![1.1, 0.1], vec![0, 1, 2]),
                (vec![-1.0, 0.4], vec![2, 3]),
                (vec![-0.9, 0.5], vec![3]),
            ],
            4,
        );
        let mut y = EventState::unassigned(c.num_photos());
        y.assignment[0] = Some(0);
        y.assignment[1] = Some(0);
        y.assignment[2] = Some(1);
        y.assignment[3] = Some(1);
        let h = Hyperparams {
            num_events: 2,
            ..Hyperparams::default()
        };
        (c, x, y, h)
    }

    #[test]
    fn context_step_is_idempotent() {
        let (c, x, y, h) = step_fixture();
        let ctx0 = ContextParams::neutral(2, 4, 2);
        let once = context_step(&x, &y, &ctx0, &c, &h);
        let twice = context_step(&x, &y, &once, &c, &h);
        assert_eq!(once, twice);
    }

    #[test]
    fn perturbed_prototypes_strictly_lower_the_event_term() {
        let (c, x, y, h) = step_fixture();
        let ctx0 = ContextParams::neutral(2, 4, 2);
        let ctx = context_step(&x, &y, &ctx0, &c, &h);
        let base = event_term(&y, &x, &ctx, &c.photos).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..2 {
            for _ in 0..10 {
                let mut noisy = ctx.clone();
                let dir: Vec<f64> = (0..2).map(|_| rng.random::<f64>() - 0.5).collect();
                let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (p, d) in noisy.scene_prototypes[k].iter_mut().zip(&dir) {
                    *p += 0.1 * d / norm;
                }
                let perturbed = event_term(&y, &x, &noisy, &c.photos).unwrap();
                assert!(
                    perturbed < base,
                    "perturbing prototype {k} did not lower the term"
                );
            }
        }
    }

    #[test]
    fn smoothed_distributions_are_optimal_for_pseudo_counts() {
        // The smoothed estimate maximizes the eps-augmented attendance
        // likelihood over the simplex; random simplex perturbations must not
        // increase it.
        let (c, x, y, h) = step_fixture();
        let counts = attendance_counts(&x, &y, &c, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 0..2 {
            let dist = smooth_distribution(&counts[k], h.dist_smoothing_eps);
            let pseudo: Vec<f64> = counts[k]
                .iter()
                .map(|n| n + h.dist_smoothing_eps)
                .collect();
            let base = attendance_loglik(&pseudo, &dist);
            for _ in 0..20 {
                let mut p = dist.clone();
                for v in p.iter_mut() {
                    *v = (*v + (rng.random::<f64>() - 0.5) * 0.05).max(1e-9);
                }
                let total: f64 = p.iter().sum();
                for v in p.iter_mut() {
                    *v /= total;
                }
                assert!(attendance_loglik(&pseudo, &p) <= base + 1e-12);
            }
        }
    }

    #[test]
    fn context_step_never_lowers_the_attendance_term() {
        // Even when labels shift between steps, the dist update (with its
        // keep-previous guard) must not lower the assigned-photo likelihood.
        let (c, x, y, h) = step_fixture();
        let ctx0 = ContextParams::neutral(2, 4, 2);
        let ctx1 = context_step(&x, &y, &ctx0, &c, &h);
        // Relabel a couple of query instances and step again.
        let mut labels = x.labels.clone();
        labels[0] = 3;
        labels[2] = 2;
        let x2 = IdentityState::new(&c, labels);
        let ctx2 = context_step(&x2, &y, &ctx1, &c, &h);
        let counts = attendance_counts(&x2, &y, &c, 2);
        for k in 0..2 {
            let before = attendance_loglik(&counts[k], &ctx1.identity_dists[k]);
            let after = attendance_loglik(&counts[k], &ctx2.identity_dists[k]);
            assert!(after >= before - 1e-12);
        }
    }

    #[test]
    fn dist_entries_stay_above_the_smoothing_floor() {
        let (c, x, y, h) = step_fixture();
        let dists = update_identity_dists(&x, &y, &c, h.dist_smoothing_eps, 2);
        for k in 0..2 {
            let total: f64 = attendance_counts(&x, &y, &c, 2)[k].iter().sum();
            let floor = h.dist_smoothing_eps / (total + h.dist_smoothing_eps * 4.0);
            assert!((dists[k].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for &p in &dists[k] {
                assert!(p >= floor - 1e-15);
            }
        }
    }
}
