//! Shared domain types: photos, person instances, collections, and the
//! discrete states the solver optimizes over.
//!
//! Everything here is an immutable value object once constructed; steps of
//! the solver produce new `IdentityState` / `EventState` / `ContextParams`
//! values instead of mutating shared ones.

use std::fmt;

/// Number of region channels per instance.
pub const NUM_REGIONS: usize = 4;

/// The four body-region channels, in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionKind {
    Face = 0,
    Head = 1,
    UpperBody = 2,
    Body = 3,
}

impl RegionKind {
    pub const ALL: [RegionKind; NUM_REGIONS] = [
        RegionKind::Face,
        RegionKind::Head,
        RegionKind::UpperBody,
        RegionKind::Body,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<RegionKind> {
        RegionKind::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Face => "face",
            RegionKind::Head => "head",
            RegionKind::UpperBody => "upperbody",
            RegionKind::Body => "body",
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One detected person occurrence in one photo.
///
/// A region that is not visible carries the all-zero feature vector in
/// addition to a `false` visibility flag, so cosine similarities stay well
/// defined downstream. Gallery instances carry a label; query instances do
/// not.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub instance_id: usize,
    pub photo_id: usize,
    pub region_features: [Vec<f64>; NUM_REGIONS],
    pub visibility: [bool; NUM_REGIONS],
    pub label: Option<usize>,
}

impl Instance {
    pub fn is_gallery(&self) -> bool {
        self.label.is_some()
    }

    pub fn feature(&self, r: RegionKind) -> &[f64] {
        &self.region_features[r.index()]
    }
}

/// One photo: a scene feature plus the instances it contains.
#[derive(Debug, Clone, PartialEq)]
pub struct Photo {
    pub photo_id: usize,
    pub scene_feature: Vec<f64>,
    pub instance_ids: Vec<usize>,
}

/// A photo collection with its gallery bookkeeping.
///
/// Photo and instance ids are dense indices into `photos` / `instances`.
/// `gallery_index[l]` lists the gallery instances labeled `l`; it is derived
/// from the instances by [`Collection::new`] and checked by
/// [`validate_collection`].
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub photos: Vec<Photo>,
    pub instances: Vec<Instance>,
    pub num_identities: usize,
    pub feature_dim: usize,
    pub scene_dim: usize,
    /// Presentation-only names, one per identity index.
    pub identity_names: Vec<String>,
    pub gallery_index: Vec<Vec<usize>>,
}

impl Collection {
    pub fn new(
        photos: Vec<Photo>,
        instances: Vec<Instance>,
        num_identities: usize,
        feature_dim: usize,
        scene_dim: usize,
        identity_names: Option<Vec<String>>,
    ) -> Collection {
        let gallery_index = build_gallery_index(&instances, num_identities);
        let identity_names = identity_names
            .unwrap_or_else(|| (0..num_identities).map(|l| format!("person{l}")).collect());
        Collection {
            photos,
            instances,
            num_identities,
            feature_dim,
            scene_dim,
            identity_names,
            gallery_index,
        }
    }

    pub fn num_photos(&self) -> usize {
        self.photos.len()
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    /// Ids of query (unlabeled) instances, ascending.
    pub fn query_ids(&self) -> Vec<usize> {
        self.instances
            .iter()
            .filter(|inst| !inst.is_gallery())
            .map(|inst| inst.instance_id)
            .collect()
    }
}

pub fn build_gallery_index(instances: &[Instance], num_identities: usize) -> Vec<Vec<usize>> {
    let mut index = vec![Vec::new(); num_identities];
    for inst in instances {
        if let Some(l) = inst.label {
            if l < num_identities {
                index[l].push(inst.instance_id);
            }
        }
    }
    index
}

/// A broken invariant, naming the entity and the rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: impl Into<String>, rule: impl Into<String>) -> Violation {
        Violation {
            entity: entity.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Check every collection invariant; returns one entry per broken rule.
///
/// Diagnostics, not exceptions: an empty list means the collection is valid.
pub fn validate_collection(c: &Collection) -> Vec<Violation> {
    let mut out = Vec::new();

    for (i, photo) in c.photos.iter().enumerate() {
        let entity = format!("photo {i}");
        if photo.photo_id != i {
            out.push(Violation::new(&entity, format!("id {} is not dense", photo.photo_id)));
        }
        if photo.scene_feature.len() != c.scene_dim {
            out.push(Violation::new(
                &entity,
                format!(
                    "scene feature has dimension {}, expected {}",
                    photo.scene_feature.len(),
                    c.scene_dim
                ),
            ));
        }
        if !photo.scene_feature.iter().all(|v| v.is_finite()) {
            out.push(Violation::new(&entity, "scene feature has non-finite entries"));
        }
        if photo.instance_ids.is_empty() {
            out.push(Violation::new(&entity, "contains no instances"));
        }
        for &j in &photo.instance_ids {
            match c.instances.get(j) {
                None => out.push(Violation::new(&entity, format!("references unknown instance {j}"))),
                Some(inst) if inst.photo_id != i => out.push(Violation::new(
                    &entity,
                    format!("lists instance {j}, which points back to photo {}", inst.photo_id),
                )),
                Some(_) => {}
            }
        }
    }

    // Every instance belongs to exactly one photo.
    let mut membership = vec![0usize; c.instances.len()];
    for photo in &c.photos {
        for &j in &photo.instance_ids {
            if let Some(m) = membership.get_mut(j) {
                *m += 1;
            }
        }
    }
    for (j, &count) in membership.iter().enumerate() {
        if count != 1 {
            out.push(Violation::new(
                format!("instance {j}"),
                format!("appears in {count} photos, expected exactly 1"),
            ));
        }
    }

    for (j, inst) in c.instances.iter().enumerate() {
        let entity = format!("instance {j}");
        if inst.instance_id != j {
            out.push(Violation::new(&entity, format!("id {} is not dense", inst.instance_id)));
        }
        if inst.photo_id >= c.photos.len() {
            out.push(Violation::new(&entity, format!("references unknown photo {}", inst.photo_id)));
        }
        for r in RegionKind::ALL {
            let feat = inst.feature(r);
            if feat.len() != c.feature_dim {
                out.push(Violation::new(
                    &entity,
                    format!(
                        "{r} feature has dimension {}, expected {}",
                        feat.len(),
                        c.feature_dim
                    ),
                ));
            }
            if !feat.iter().all(|v| v.is_finite()) {
                out.push(Violation::new(&entity, format!("{r} feature has non-finite entries")));
            }
            if !inst.visibility[r.index()] && feat.iter().any(|&v| v != 0.0) {
                out.push(Violation::new(
                    &entity,
                    format!("{r} is invisible but its feature is not the zero vector"),
                ));
            }
        }
        if let Some(l) = inst.label {
            if l >= c.num_identities {
                out.push(Violation::new(
                    &entity,
                    format!("label {l} out of range [0, {})", c.num_identities),
                ));
            }
        }
    }

    if c.identity_names.len() != c.num_identities {
        out.push(Violation::new(
            "collection",
            format!(
                "{} identity names for {} identities",
                c.identity_names.len(),
                c.num_identities
            ),
        ));
    }

    if c.gallery_index.len() != c.num_identities {
        out.push(Violation::new(
            "collection",
            format!(
                "gallery index has {} entries for {} identities",
                c.gallery_index.len(),
                c.num_identities
            ),
        ));
    } else {
        for (l, gallery) in c.gallery_index.iter().enumerate() {
            let entity = format!("identity {l}");
            if gallery.is_empty() {
                out.push(Violation::new(&entity, "has no gallery instances"));
            }
            for &j in gallery {
                match c.instances.get(j) {
                    Some(inst) if inst.label == Some(l) => {}
                    Some(_) => out.push(Violation::new(
                        &entity,
                        format!("gallery lists instance {j}, which carries a different label"),
                    )),
                    None => out.push(Violation::new(
                        &entity,
                        format!("gallery references unknown instance {j}"),
                    )),
                }
            }
        }
        // Every gallery instance must be indexed under its own label.
        for inst in &c.instances {
            if let Some(l) = inst.label {
                if l < c.gallery_index.len() && !c.gallery_index[l].contains(&inst.instance_id) {
                    out.push(Violation::new(
                        format!("instance {}", inst.instance_id),
                        format!("labeled {l} but missing from that gallery index"),
                    ));
                }
            }
        }
    }

    out
}

/// Identity labels for all instances.
///
/// Gallery entries always hold the fixed gallery label; query entries hold
/// the current assignment. Each entry stands for the one-hot indicator of
/// that instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityState {
    pub labels: Vec<usize>,
}

impl IdentityState {
    /// Build from per-instance labels; gallery entries are forced to their
    /// fixed labels.
    pub fn new(c: &Collection, mut labels: Vec<usize>) -> IdentityState {
        for inst in &c.instances {
            if let Some(l) = inst.label {
                labels[inst.instance_id] = l;
            }
        }
        IdentityState { labels }
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j]
    }

    /// Number of instances whose label differs from `other`.
    pub fn changed_from(&self, other: &IdentityState) -> usize {
        self.labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Photo-to-event assignment; `None` means unassigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventState {
    pub assignment: Vec<Option<usize>>,
}

impl EventState {
    pub fn unassigned(num_photos: usize) -> EventState {
        EventState {
            assignment: vec![None; num_photos],
        }
    }

    pub fn event_of(&self, photo: usize) -> Option<usize> {
        self.assignment[photo]
    }

    /// Photos assigned to each of the `k` events.
    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0usize; k];
        for event in self.assignment.iter().flatten() {
            counts[*event] += 1;
        }
        counts
    }

    pub fn changed_from(&self, other: &EventState) -> usize {
        self.assignment
            .iter()
            .zip(&other.assignment)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Learned social-context parameters: per-event scene prototypes, per-event
/// identity distributions, and the global identity co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextParams {
    pub scene_prototypes: Vec<Vec<f64>>,
    pub identity_dists: Vec<Vec<f64>>,
    pub cooccurrence: Vec<Vec<f64>>,
}

impl ContextParams {
    /// Uniform identity distributions, zero prototypes, zero co-occurrence.
    pub fn neutral(num_events: usize, num_identities: usize, scene_dim: usize) -> ContextParams {
        ContextParams {
            scene_prototypes: vec![vec![0.0; scene_dim]; num_events],
            identity_dists: vec![vec![1.0 / num_identities as f64; num_identities]; num_events],
            cooccurrence: vec![vec![0.0; num_identities]; num_identities],
        }
    }

    pub fn num_events(&self) -> usize {
        self.identity_dists.len()
    }
}

/// Solver hyperparameters.
///
/// The stock coefficients are alpha 0.05, beta 0.01, and 300 events; small
/// collections override the event count and bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub num_events: usize,
    pub nu_min: usize,
    pub nu_max: usize,
    pub max_iterations: usize,
    pub dist_smoothing_eps: f64,
}

impl Default for Hyperparams {
    fn default() -> Hyperparams {
        Hyperparams {
            alpha: 0.05,
            beta: 0.01,
            num_events: 300,
            nu_min: 1,
            nu_max: usize::MAX,
            max_iterations: 10,
            dist_smoothing_eps: 0.01,
        }
    }
}

impl Hyperparams {
    /// Default granularity bound: ceil(2 M / K) photos per event.
    pub fn auto_nu_max(num_photos: usize, num_events: usize) -> usize {
        (2 * num_photos).div_ceil(num_events.max(1)).max(1)
    }

    /// Defaults sized for a small collection: `k` events with nu_min 1 and
    /// the automatic nu_max for `num_photos`.
    pub fn desk_scale(k: usize, num_photos: usize) -> Hyperparams {
        Hyperparams {
            num_events: k,
            nu_min: 1,
            nu_max: Hyperparams::auto_nu_max(num_photos, k),
            ..Hyperparams::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis % dim] = 1.0;
        v
    }

    fn instance(id: usize, photo: usize, dim: usize, label: Option<usize>) -> Instance {
        Instance {
            instance_id: id,
            photo_id: photo,
            region_features: std::array::from_fn(|r| unit(dim, id + r)),
            visibility: [true; NUM_REGIONS],
            label,
        }
    }

    /// Two photos, three instances: gallery for identities 0 and 1, one query.
    pub(crate) fn small_collection() -> Collection {
        let dim = 4;
        let photos = vec![
            Photo {
                photo_id: 0,
                scene_feature: vec![1.0, 0.0],
                instance_ids: vec![0, 1],
            },
            Photo {
                photo_id: 1,
                scene_feature: vec![0.0, 1.0],
                instance_ids: vec![2],
            },
        ];
        let instances = vec![
            instance(0, 0, dim, Some(0)),
            instance(1, 0, dim, Some(1)),
            instance(2, 1, dim, None),
        ];
        Collection::new(photos, instances, 2, dim, 2, None)
    }

    #[test]
    fn well_formed_collection_has_no_violations() {
        let c = small_collection();
        assert_eq!(validate_collection(&c), Vec::new());
    }

    #[test]
    fn invisible_region_with_nonzero_feature_is_flagged() {
        let mut c = small_collection();
        c.instances[1].visibility[RegionKind::Face.index()] = false;
        let violations = validate_collection(&c);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].entity, "instance 1");
        assert!(violations[0].rule.contains("face"));
    }

    #[test]
    fn invisible_region_with_zero_feature_is_fine() {
        let mut c = small_collection();
        c.instances[1].visibility[RegionKind::Face.index()] = false;
        c.instances[1].region_features[RegionKind::Face.index()] = vec![0.0; 4];
        assert_eq!(validate_collection(&c), Vec::new());
    }

    #[test]
    fn empty_gallery_is_flagged() {
        let mut c = small_collection();
        c.instances[1].label = None; // identity 1 loses its only gallery instance
        c.gallery_index = build_gallery_index(&c.instances, c.num_identities);
        let violations = validate_collection(&c);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].entity, "identity 1");
        assert!(violations[0].rule.contains("no gallery"));
    }

    #[test]
    fn cross_reference_breakage_is_flagged() {
        let mut c = small_collection();
        c.instances[2].photo_id = 0; // photo 1 still lists it
        let violations = validate_collection(&c);
        assert!(violations.iter().any(|v| v.entity == "photo 1"));
    }

    #[test]
    fn out_of_range_label_is_flagged() {
        let mut c = small_collection();
        c.instances[0].label = Some(9);
        c.gallery_index = build_gallery_index(&c.instances, c.num_identities);
        let violations = validate_collection(&c);
        assert!(violations
            .iter()
            .any(|v| v.entity == "instance 0" && v.rule.contains("out of range")));
    }

    #[test]
    fn identity_state_keeps_gallery_labels_fixed() {
        let c = small_collection();
        let x = IdentityState::new(&c, vec![1, 0, 1]);
        assert_eq!(x.labels, vec![0, 1, 1]); // gallery entries forced back
    }

    #[test]
    fn event_state_counts_and_deltas() {
        let mut y = EventState::unassigned(3);
        y.assignment[0] = Some(1);
        y.assignment[2] = Some(1);
        assert_eq!(y.counts(2), vec![0, 2]);
        let z = EventState::unassigned(3);
        assert_eq!(y.changed_from(&z), 2);
    }

    #[test]
    fn region_kind_order_is_fixed() {
        assert_eq!(RegionKind::Face.index(), 0);
        assert_eq!(RegionKind::Head.index(), 1);
        assert_eq!(RegionKind::UpperBody.index(), 2);
        assert_eq!(RegionKind::Body.index(), 3);
        assert_eq!(RegionKind::from_index(4), None);
    }

    #[test]
    fn auto_nu_max_covers_all_photos() {
        assert_eq!(Hyperparams::auto_nu_max(100, 8), 25);
        assert_eq!(Hyperparams::auto_nu_max(7, 3), 5);
        assert!(Hyperparams::auto_nu_max(5, 100) >= 1);
    }
}
