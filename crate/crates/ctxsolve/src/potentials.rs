//! The three potential terms and the unified objective they sum to.
//!
//! Every inference step maximizes some restriction of [`objective`]; this
//! module is the single source of truth those steps must agree with.

use crate::error::{Error, Result};
use crate::fusion::ScoreMatrix;
use crate::model::{Collection, ContextParams, EventState, Hyperparams, IdentityState, Photo};

/// Per-query-instance best matching score against each identity's gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryScoreTable {
    /// Query instance ids, ascending; one row per entry.
    pub query_ids: Vec<usize>,
    rows: Vec<Vec<f64>>,
    row_of: Vec<Option<usize>>,
}

impl GalleryScoreTable {
    /// Best score of query instance `j` against gallery instances of
    /// identity `l`. Panics if `j` is not a query instance.
    pub fn score(&self, j: usize, l: usize) -> f64 {
        self.rows[self.row_of[j].expect("not a query instance")][l]
    }

    pub fn row(&self, j: usize) -> Option<&[f64]> {
        self.row_of[j].map(|r| self.rows[r].as_slice())
    }

    pub fn num_identities(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// For every query instance `j` and identity `l`, the maximum matching score
/// of `j` against the gallery instances of `l`.
///
/// Gallery instances that happen to share a photo with the query are legal
/// maximizers; no exclusion applies.
pub fn gallery_scores(s: &ScoreMatrix, c: &Collection) -> Result<GalleryScoreTable> {
    for (l, gallery) in c.gallery_index.iter().enumerate() {
        if gallery.is_empty() {
            return Err(Error::EmptyGallery { identity: l });
        }
    }
    let query_ids = c.query_ids();
    let mut rows = Vec::with_capacity(query_ids.len());
    let mut row_of = vec![None; c.num_instances()];
    for (row, &j) in query_ids.iter().enumerate() {
        row_of[j] = Some(row);
        let mut best = vec![f64::NEG_INFINITY; c.num_identities];
        for (l, gallery) in c.gallery_index.iter().enumerate() {
            for &g in gallery {
                best[l] = best[l].max(s.get(j, g));
            }
        }
        rows.push(best);
    }
    Ok(GalleryScoreTable {
        query_ids,
        rows,
        row_of,
    })
}

/// Visual consistency term: sum over query instances of the table entry
/// picked by each instance's label. Gallery instances contribute a constant
/// under any labeling and are left out.
pub fn visual_term(x: &IdentityState, table: &GalleryScoreTable) -> f64 {
    table
        .query_ids
        .iter()
        .map(|&j| table.score(j, x.label(j)))
        .sum()
}

/// Affinity of one photo to one event: attendance log-likelihood of the
/// photo's people under the event's identity distribution, minus the squared
/// distance between the photo's scene feature and the event's prototype.
pub fn event_affinity(
    photo: &Photo,
    event: usize,
    x: &IdentityState,
    ctx: &ContextParams,
) -> Result<f64> {
    let dist = &ctx.identity_dists[event];
    let mut attendance = 0.0;
    for &j in &photo.instance_ids {
        let l = x.label(j);
        let p = dist[l];
        if p <= 0.0 {
            return Err(Error::ZeroProbability {
                event,
                identity: l,
            });
        }
        attendance += p.ln();
    }
    let prototype = &ctx.scene_prototypes[event];
    let mut sq = 0.0;
    for (f, p) in photo.scene_feature.iter().zip(prototype) {
        let d = f - p;
        sq += d * d;
    }
    Ok(attendance - sq)
}

/// Event consistency term: affinities of assigned photos. Unassigned photos
/// contribute nothing.
pub fn event_term(
    y: &EventState,
    x: &IdentityState,
    ctx: &ContextParams,
    photos: &[Photo],
) -> Result<f64> {
    let mut total = 0.0;
    for (photo, event) in photos.iter().zip(&y.assignment) {
        if let Some(k) = event {
            total += event_affinity(photo, *k, x, ctx)?;
        }
    }
    Ok(total)
}

/// People co-occurrence term: for every photo, the co-occurrence value of
/// every ordered pair of distinct instances in it. Each unordered pair
/// counts twice.
pub fn cooccurrence_term(x: &IdentityState, c: &Collection, q: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for photo in &c.photos {
        let ids = &photo.instance_ids;
        for (a, &j) in ids.iter().enumerate() {
            for &j2 in &ids[a + 1..] {
                let (l, l2) = (x.label(j), x.label(j2));
                total += q[l][l2] + q[l2][l];
            }
        }
    }
    total
}

/// The unified objective: visual term plus `alpha` times the event term plus
/// `beta` times the co-occurrence term.
pub fn objective(
    x: &IdentityState,
    y: &EventState,
    ctx: &ContextParams,
    table: &GalleryScoreTable,
    c: &Collection,
    h: &Hyperparams,
) -> Result<f64> {
    let visual = visual_term(x, table);
    let event = if h.alpha != 0.0 {
        event_term(y, x, ctx, &c.photos)?
    } else {
        0.0
    };
    let cooc = if h.beta != 0.0 {
        cooccurrence_term(x, c, &ctx.cooccurrence)
    } else {
        0.0
    };
    Ok(visual + h.alpha * event + h.beta * cooc)
}

/// Convenience wrapper that derives the gallery score table from a raw score
/// matrix first.
pub fn objective_from_scores(
    x: &IdentityState,
    y: &EventState,
    ctx: &ContextParams,
    s: &ScoreMatrix,
    c: &Collection,
    h: &Hyperparams,
) -> Result<f64> {
    let table = gallery_scores(s, c)?;
    objective(x, y, ctx, &table, c, h)
}
