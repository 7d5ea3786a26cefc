//! Event assignment: maximize total photo-event affinity subject to at most
//! one event per photo and per-event photo counts within the granularity
//! bounds.
//!
//! The program is solved exactly by reduction to a minimum-cost flow with
//! integral capacities, so the returned assignment is always 0/1. Lower
//! bounds on the event arcs are removed with the standard excess/deficit
//! transformation; the underlying network is acyclic, which keeps the
//! successive-shortest-path solve exact.

use crate::error::{Error, Result};
use crate::flow::FlowNetwork;
use crate::model::{Collection, ContextParams, EventState, Hyperparams, IdentityState};
use crate::potentials::event_affinity;

/// The assignment program: one affinity per (photo, event) cell plus the
/// granularity bounds.
#[derive(Debug, Clone)]
pub struct EventLp {
    pub affinity: Vec<Vec<f64>>,
    pub num_photos: usize,
    pub num_events: usize,
    pub nu_min: usize,
    pub nu_max: usize,
}

/// Fill the affinity matrix from the current labels and context parameters.
pub fn build_event_lp(
    x: &IdentityState,
    ctx: &ContextParams,
    c: &Collection,
    h: &Hyperparams,
) -> Result<EventLp> {
    let num_photos = c.num_photos();
    let num_events = h.num_events;
    if num_events * h.nu_min > num_photos {
        return Err(Error::InfeasibleEventBounds {
            events: num_events,
            nu_min: h.nu_min,
            photos: num_photos,
        });
    }
    let nu_max = h.nu_max.min(num_photos).max(h.nu_min);
    let mut affinity = Vec::with_capacity(num_photos);
    for photo in &c.photos {
        let mut row = Vec::with_capacity(num_events);
        for k in 0..num_events {
            row.push(event_affinity(photo, k, x, ctx)?);
        }
        affinity.push(row);
    }
    Ok(EventLp {
        affinity,
        num_photos,
        num_events,
        nu_min: h.nu_min,
        nu_max,
    })
}

/// Solve the assignment program exactly. Returns the 0/1 assignment and the
/// objective value it attains.
pub fn solve_event_lp(lp: &EventLp) -> Result<(EventState, f64)> {
    let m = lp.num_photos;
    let k = lp.num_events;
    if k * lp.nu_min > m {
        return Err(Error::InfeasibleEventBounds {
            events: k,
            nu_min: lp.nu_min,
            photos: m,
        });
    }

    // Node layout: super source, super sink, source, sink, M photos, K events.
    let super_source = 0;
    let super_sink = 1;
    let source = 2;
    let sink = 3;
    let photo = |i: usize| 4 + i;
    let event = |j: usize| 4 + m + j;
    let mut net = FlowNetwork::new(4 + m + k);

    net.add_arc(super_source, source, m as i64, 0.0);
    net.add_arc(source, sink, m as i64, 0.0); // absorbs unassigned photos
    for i in 0..m {
        net.add_arc(source, photo(i), 1, 0.0);
    }
    let mut cell_arcs = vec![Vec::with_capacity(k); m];
    for i in 0..m {
        for j in 0..k {
            cell_arcs[i].push(net.add_arc(photo(i), event(j), 1, -lp.affinity[i][j]));
        }
    }
    // Lower bound nu_min on each event-to-sink arc, removed by pre-sending
    // nu_min units: the event owes nu_min to the super sink, and the sink
    // has already received them.
    for j in 0..k {
        net.add_arc(event(j), sink, (lp.nu_max - lp.nu_min) as i64, 0.0);
        net.add_arc(event(j), super_sink, lp.nu_min as i64, 0.0);
    }
    net.add_arc(sink, super_sink, (m - k * lp.nu_min) as i64, 0.0);

    let want = m as i64;
    let (flow, cost) = net.min_cost_flow(super_source, super_sink, want);
    if flow < want {
        return Err(Error::FlowInfeasible);
    }

    let mut assignment = vec![None; m];
    for i in 0..m {
        for j in 0..k {
            if net.flow(cell_arcs[i][j]) > 0 {
                assignment[i] = Some(j);
            }
        }
    }
    Ok((EventState { assignment }, -cost))
}

/// One coordinate step: rebuild the affinities and re-solve the program.
pub fn event_step(
    x: &IdentityState,
    ctx: &ContextParams,
    c: &Collection,
    h: &Hyperparams,
) -> Result<EventState> {
    let lp = build_event_lp(x, ctx, c, h)?;
    let (state, _) = solve_event_lp(&lp)?;
    Ok(state)
}

/// Objective value of an assignment under the same affinities.
pub fn assignment_value(lp: &EventLp, y: &EventState) -> f64 {
    y.assignment
        .iter()
        .enumerate()
        .filter_map(|(i, ev)| ev.map(|k| lp.affinity[i][k]))
        .sum()
}
