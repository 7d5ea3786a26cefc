//! The coordinate-ascent driver: initialization, the identity / event /
//! context loop, convergence detection, and the objective trace.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::context::{context_step, update_cooccurrence};
use crate::error::{Error, Result};
use crate::event::{build_event_lp, event_step, solve_event_lp};
use crate::fusion::ScoreMatrix;
use crate::identity::identity_step;
use crate::kmeans::kmeans;
use crate::model::{Collection, ContextParams, EventState, Hyperparams, IdentityState};
use crate::potentials::{
    cooccurrence_term, event_term, gallery_scores, objective, visual_term, GalleryScoreTable,
};

/// One iteration of the trace: objective after each coordinate step, the
/// term breakdown at the end of the iteration, and the state deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective_after_identity: f64,
    pub objective_after_event: f64,
    pub objective_after_context: f64,
    pub visual_term: f64,
    pub event_term: f64,
    pub cooccurrence_term: f64,
    pub labels_changed: usize,
    pub assignments_changed: usize,
    /// Wall time of the iteration. Reported on stderr only; never written to
    /// trace files, which must be byte-identical across reruns.
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub initial_objective: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl SolverTrace {
    /// Objective values in step order: initial, then after every coordinate
    /// step of every iteration.
    pub fn step_objectives(&self) -> Vec<f64> {
        let mut out = vec![self.initial_objective];
        for it in &self.iterations {
            out.push(it.objective_after_identity);
            out.push(it.objective_after_event);
            out.push(it.objective_after_context);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub identities: IdentityState,
    pub events: EventState,
    pub context: ContextParams,
    pub trace: SolverTrace,
}

/// Initial states: visual-only labels, k-means++ scene prototypes with ten
/// Lloyd iterations, uniform identity distributions, co-occurrence from the
/// initial labels, and one event assignment round on top of those.
pub fn initialize(
    c: &Collection,
    s: &ScoreMatrix,
    h: &Hyperparams,
    seed: u64,
) -> Result<(IdentityState, EventState, ContextParams)> {
    if h.num_events > c.num_photos() {
        return Err(Error::InvalidConfig(format!(
            "{} events exceed {} photos",
            h.num_events,
            c.num_photos()
        )));
    }
    let table = gallery_scores(s, c)?;
    let x0 = visual_argmax(c, &table);

    let scenes: Vec<Vec<f64>> = c.photos.iter().map(|p| p.scene_feature.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene_prototypes = kmeans(&scenes, h.num_events, 10, &mut rng);
    let ctx0 = ContextParams {
        scene_prototypes,
        identity_dists: vec![
            vec![1.0 / c.num_identities as f64; c.num_identities];
            h.num_events
        ],
        cooccurrence: update_cooccurrence(&x0, c),
    };
    let y0 = event_step(&x0, &ctx0, c, h)?;
    Ok((x0, y0, ctx0))
}

/// Labels every query instance by its best gallery score, ties to the lowest
/// identity index.
pub fn visual_argmax(c: &Collection, table: &GalleryScoreTable) -> IdentityState {
    let mut labels = vec![0usize; c.num_instances()];
    for &j in &table.query_ids {
        let row = table.row(j).expect("query row");
        let mut best = 0;
        for (l, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = l;
            }
        }
        labels[j] = best;
    }
    IdentityState::new(c, labels)
}

/// Run coordinate ascent until neither labels nor assignments change, or the
/// iteration cap is reached. The objective never decreases across steps.
pub fn run(c: &Collection, s: &ScoreMatrix, h: &Hyperparams, seed: u64) -> Result<Solution> {
    let table = gallery_scores(s, c)?;
    let (mut x, mut y, mut ctx) =
        initialize(c, s, h, seed).map_err(|e| e.at_iteration(0))?;
    let initial_objective = objective(&x, &y, &ctx, &table, c, h)?;

    let mut trace = SolverTrace {
        initial_objective,
        iterations: Vec::new(),
        converged: false,
    };

    for iteration in 0..h.max_iterations {
        let started = Instant::now();

        let x_next = identity_step(&x, &y, &ctx, &table, c, h);
        let objective_after_identity = objective(&x_next, &y, &ctx, &table, c, h)
            .map_err(|e| e.at_iteration(iteration))?;

        // Re-solve the assignment program; keep the incumbent on exact value
        // ties so equal-value optima cannot oscillate between iterations.
        let lp = build_event_lp(&x_next, &ctx, c, h).map_err(|e| e.at_iteration(iteration))?;
        let (y_candidate, candidate_value) =
            solve_event_lp(&lp).map_err(|e| e.at_iteration(iteration))?;
        let incumbent_value = crate::event::assignment_value(&lp, &y);
        let y_next = if candidate_value > incumbent_value {
            y_candidate
        } else {
            y.clone()
        };
        let objective_after_event = objective(&x_next, &y_next, &ctx, &table, c, h)
            .map_err(|e| e.at_iteration(iteration))?;

        let ctx_next = context_step(&x_next, &y_next, &ctx, c, h);
        let objective_after_context = objective(&x_next, &y_next, &ctx_next, &table, c, h)
            .map_err(|e| e.at_iteration(iteration))?;

        let labels_changed = x_next.changed_from(&x);
        let assignments_changed = y_next.changed_from(&y);
        let record = IterationRecord {
            iteration,
            objective_after_identity,
            objective_after_event,
            objective_after_context,
            visual_term: visual_term(&x_next, &table),
            event_term: event_term(&y_next, &x_next, &ctx_next, &c.photos)
                .map_err(|e| e.at_iteration(iteration))?,
            cooccurrence_term: cooccurrence_term(&x_next, c, &ctx_next.cooccurrence),
            labels_changed,
            assignments_changed,
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        eprintln!(
            "iter {iteration}: objective {objective_after_context:.6} \
             (+identity {objective_after_identity:.6}, +event {objective_after_event:.6}) \
             labels_changed {labels_changed} assignments_changed {assignments_changed} \
             [{:.3}s]",
            record.wall_time_secs
        );
        trace.iterations.push(record);

        x = x_next;
        y = y_next;
        ctx = ctx_next;

        if labels_changed == 0 && assignments_changed == 0 {
            trace.converged = true;
            break;
        }
    }

    Ok(Solution {
        identities: x,
        events: y,
        context: ctx,
        trace,
    })
}
