//! Synthetic photo collections with planted identities, events, and
//! co-occurrence cliques, plus the ground truth needed for recovery metrics.
//!
//! Features live on the unit sphere so cosine similarity is the natural
//! metric. Each identity gets one embedding per region; an instance's region
//! feature mixes that embedding with noise according to the per-region
//! signal strength. Events carry a scene prototype and draw their attendants
//! from an assigned clique, which gives the attendance and co-occurrence
//! terms learnable structure.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fusion::TrainPair;
use crate::model::{Collection, Instance, Photo, NUM_REGIONS};

/// How regions dropped by the visibility rate are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvisibleMode {
    /// Zero feature vector plus a false visibility flag. Such regions score
    /// zero against everything.
    Zero,
    /// A fixed per-region "blank" embedding plus jitter, flagged visible.
    /// Mirrors feature extractors that embed a blank crop to a constant
    /// point: blank-vs-blank pairs then score high regardless of identity,
    /// which fixed-weight fusion cannot escape.
    Blank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub num_identities: usize,
    pub num_events: usize,
    pub photos_per_event: (usize, usize),
    pub instances_per_photo: (usize, usize),
    pub feature_dim: usize,
    pub scene_dim: usize,
    pub identity_signal_strength: [f64; NUM_REGIONS],
    pub visibility_rate: [f64; NUM_REGIONS],
    pub scene_noise: f64,
    /// Identity groups that attend events together; empty means an automatic
    /// partition into groups of four.
    pub cooccurrence_cliques: Vec<Vec<usize>>,
    pub gallery_per_identity: usize,
    pub invisible_mode: InvisibleMode,
    /// Per-instance region quality spread in [0, 1). Each usable region
    /// draws a quality q uniform in [1 - spread, 1]; the identity signal is
    /// scaled by q and the feature norm encodes q, mirroring extractors
    /// whose feature energy tracks crop quality. Zero keeps every region at
    /// full quality and unit norm.
    pub quality_variation: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            num_identities: 16,
            num_events: 6,
            photos_per_event: (8, 12),
            instances_per_photo: (2, 4),
            feature_dim: 12,
            scene_dim: 8,
            identity_signal_strength: [0.95, 0.80, 0.65, 0.55],
            visibility_rate: [1.0; NUM_REGIONS],
            scene_noise: 0.25,
            cooccurrence_cliques: Vec::new(),
            gallery_per_identity: 2,
            invisible_mode: InvisibleMode::Zero,
            quality_variation: 0.0,
            seed: 0,
        }
    }
}

/// Planted truth emitted next to every generated collection.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// True identity of every instance, gallery and query alike.
    pub labels: Vec<usize>,
    /// Planted event per photo; enrollment filler photos carry `None`.
    pub events: Vec<Option<usize>>,
    pub cliques: Vec<Vec<usize>>,
}

fn validate_config(cfg: &GenConfig) -> Result<()> {
    let mut problems = Vec::new();
    if cfg.num_identities == 0 {
        problems.push("num_identities must be positive".to_string());
    }
    if cfg.num_events == 0 {
        problems.push("num_events must be positive".to_string());
    }
    if cfg.photos_per_event.0 > cfg.photos_per_event.1 || cfg.photos_per_event.0 == 0 {
        problems.push("photos_per_event range is empty".to_string());
    }
    if cfg.instances_per_photo.0 > cfg.instances_per_photo.1 || cfg.instances_per_photo.0 == 0 {
        problems.push("instances_per_photo range is empty".to_string());
    }
    if cfg.feature_dim == 0 || cfg.scene_dim == 0 {
        problems.push("feature dimensions must be positive".to_string());
    }
    if cfg.gallery_per_identity == 0 {
        problems.push("gallery_per_identity must be at least 1".to_string());
    }
    for rate in cfg.visibility_rate {
        if !(0.0..=1.0).contains(&rate) {
            problems.push(format!("visibility rate {rate} outside [0, 1]"));
        }
    }
    for s in cfg.identity_signal_strength {
        if !(0.0..=1.0).contains(&s) {
            problems.push(format!("signal strength {s} outside [0, 1]"));
        }
    }
    if cfg.scene_noise < 0.0 {
        problems.push("scene_noise must be nonnegative".to_string());
    }
    if !(0.0..1.0).contains(&cfg.quality_variation) {
        problems.push(format!(
            "quality_variation {} outside [0, 1)",
            cfg.quality_variation
        ));
    }
    for clique in &cfg.cooccurrence_cliques {
        if clique.is_empty() {
            problems.push("empty clique".to_string());
        }
        for &l in clique {
            if l >= cfg.num_identities {
                problems.push(format!("clique member {l} out of range"));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(problems.join("; ")))
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

fn auto_cliques(num_identities: usize) -> Vec<Vec<usize>> {
    (0..num_identities)
        .collect::<Vec<_>>()
        .chunks(4)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Generate a collection and its ground truth. Deterministic under the
/// config seed.
pub fn generate(cfg: &GenConfig) -> Result<(Collection, GroundTruth)> {
    validate_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = cfg.num_identities;

    let cliques = if cfg.cooccurrence_cliques.is_empty() {
        auto_cliques(l)
    } else {
        cfg.cooccurrence_cliques.clone()
    };

    // Planted structure: embeddings, blank anchors, event prototypes.
    let embeddings: Vec<[Vec<f64>; NUM_REGIONS]> = (0..l)
        .map(|_| std::array::from_fn(|_| random_unit(cfg.feature_dim, &mut rng)))
        .collect();
    let blanks: [Vec<f64>; NUM_REGIONS] =
        std::array::from_fn(|_| random_unit(cfg.feature_dim, &mut rng));
    let prototypes: Vec<Vec<f64>> = (0..cfg.num_events)
        .map(|_| random_unit(cfg.scene_dim, &mut rng))
        .collect();

    let mut photos = Vec::new();
    let mut instances = Vec::new();
    let mut truth_labels = Vec::new();
    let mut truth_events: Vec<Option<usize>> = Vec::new();

    let make_instance =
        |label: usize, photo_id: usize, instances: &mut Vec<Instance>, truth: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
            let mut features: [Vec<f64>; NUM_REGIONS] =
                std::array::from_fn(|_| vec![0.0; cfg.feature_dim]);
            let mut visibility = [true; NUM_REGIONS];
            for r in 0..NUM_REGIONS {
                let usable = rng.random::<f64>() < cfg.visibility_rate[r];
                if usable {
                    let quality = 1.0 - cfg.quality_variation * rng.random::<f64>();
                    let s = cfg.identity_signal_strength[r] * quality;
                    let noise_scale = (1.0 - s * s).max(0.0).sqrt();
                    let noise = random_unit(cfg.feature_dim, rng);
                    let mixed: Vec<f64> = embeddings[label][r]
                        .iter()
                        .zip(&noise)
                        .map(|(e, n)| s * e + noise_scale * n)
                        .collect();
                    let energy = 0.25 + 0.75 * quality;
                    features[r] = normalize(mixed)
                        .into_iter()
                        .map(|x| energy * x)
                        .collect();
                } else {
                    match cfg.invisible_mode {
                        InvisibleMode::Zero => {
                            visibility[r] = false;
                        }
                        InvisibleMode::Blank => {
                            // Low-energy cluster around the per-region blank
                            // anchor: near-parallel (poisonous cosines) and
                            // small-norm (detectable by the attention net).
                            let jitter = random_unit(cfg.feature_dim, rng);
                            let v: Vec<f64> = blanks[r]
                                .iter()
                                .zip(&jitter)
                                .map(|(b, j)| b + 0.15 * j)
                                .collect();
                            features[r] =
                                normalize(v).into_iter().map(|x| 0.35 * x).collect();
                        }
                    }
                }
            }
            let id = instances.len();
            truth.push(label);
            instances.push(Instance {
                instance_id: id,
                photo_id,
                region_features: features,
                visibility,
                label: None,
            });
            id
        };

    for event in 0..cfg.num_events {
        let clique = &cliques[event % cliques.len()];
        let photo_count =
            rng.random_range(cfg.photos_per_event.0..=cfg.photos_per_event.1);
        for _ in 0..photo_count {
            let photo_id = photos.len();
            let wanted =
                rng.random_range(cfg.instances_per_photo.0..=cfg.instances_per_photo.1);
            let count = wanted.min(clique.len());
            // Distinct attendants via a partial shuffle of the clique.
            let mut pool = clique.clone();
            for i in 0..count {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            let mut ids = Vec::with_capacity(count);
            for &label in pool.iter().take(count) {
                ids.push(make_instance(
                    label,
                    photo_id,
                    &mut instances,
                    &mut truth_labels,
                    &mut rng,
                ));
            }
            let scene: Vec<f64> = prototypes[event]
                .iter()
                .map(|p| p + cfg.scene_noise / (cfg.scene_dim as f64).sqrt() * gaussian(&mut rng))
                .collect();
            photos.push(Photo {
                photo_id,
                scene_feature: scene,
                instance_ids: ids,
            });
            truth_events.push(Some(event));
        }
    }

    // Every identity needs gallery_per_identity labeled instances plus at
    // least one query; top up with enrollment singletons where event
    // sampling fell short.
    let needed = cfg.gallery_per_identity + 1;
    for label in 0..l {
        let mut have = truth_labels.iter().filter(|&&t| t == label).count();
        while have < needed {
            let photo_id = photos.len();
            let id = make_instance(
                label,
                photo_id,
                &mut instances,
                &mut truth_labels,
                &mut rng,
            );
            photos.push(Photo {
                photo_id,
                scene_feature: random_unit(cfg.scene_dim, &mut rng),
                instance_ids: vec![id],
            });
            truth_events.push(None);
            have += 1;
        }
    }

    // Pick gallery instances per identity: a seeded shuffle of that
    // identity's instances, first gallery_per_identity win.
    for label in 0..l {
        let mut owned: Vec<usize> = instances
            .iter()
            .filter(|inst| truth_labels[inst.instance_id] == label)
            .map(|inst| inst.instance_id)
            .collect();
        for i in 0..cfg.gallery_per_identity.min(owned.len()) {
            let j = rng.random_range(i..owned.len());
            owned.swap(i, j);
            instances[owned[i]].label = Some(label);
        }
    }

    let collection = Collection::new(
        photos,
        instances,
        l,
        cfg.feature_dim,
        cfg.scene_dim,
        None,
    );
    let truth = GroundTruth {
        labels: truth_labels,
        events: truth_events,
        cliques,
    };
    Ok((collection, truth))
}

/// Balanced same/different training pairs drawn from the ground-truth
/// labels. Deterministic under `seed`.
pub fn make_training_pairs(
    truth_labels: &[usize],
    num_identities: usize,
    count: usize,
    seed: u64,
) -> Vec<TrainPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_identity: Vec<Vec<usize>> = vec![Vec::new(); num_identities];
    for (j, &l) in truth_labels.iter().enumerate() {
        by_identity[l].push(j);
    }
    let multi: Vec<usize> = (0..num_identities)
        .filter(|&l| by_identity[l].len() >= 2)
        .collect();
    let mut pairs = Vec::with_capacity(count);
    if multi.is_empty() || num_identities < 2 {
        return pairs;
    }
    while pairs.len() < count {
        if pairs.len() % 2 == 0 {
            let l = multi[rng.random_range(0..multi.len())];
            let members = &by_identity[l];
            let a = members[rng.random_range(0..members.len())];
            let mut b = members[rng.random_range(0..members.len())];
            while b == a {
                b = members[rng.random_range(0..members.len())];
            }
            pairs.push(TrainPair { a, b, same: true });
        } else {
            let a = rng.random_range(0..truth_labels.len());
            let mut b = rng.random_range(0..truth_labels.len());
            while truth_labels[b] == truth_labels[a] {
                b = rng.random_range(0..truth_labels.len());
            }
            pairs.push(TrainPair { a, b, same: false });
        }
    }
    pairs
}
