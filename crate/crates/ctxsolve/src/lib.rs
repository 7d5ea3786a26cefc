//! Context-aware identity labeling for photo collections.
//!
//! The pipeline has two stages. Visual matching scores every pair of person
//! instances by fusing per-region cosine similarities, either with fixed
//! weights or with instance-dependent weights from a small attention network
//! ([`fusion`]). Joint optimization then alternates between relabeling
//! people photo by photo ([`identity`]), assigning photos to latent events
//! ([`event`]), and re-estimating the social-context parameters
//! ([`context`]), driving a single unified objective ([`potentials`]) uphill
//! until the discrete states stop changing ([`solver`]).
//!
//! [`synthgen`] builds benchmark collections with planted identities,
//! events, and co-occurrence cliques; [`eval`] implements the gallery/query
//! protocol and recovery metrics; [`io`] holds the file formats behind the
//! `ctxsolve` command-line tool.

pub mod context;
pub mod error;
pub mod eval;
pub mod event;
pub mod flow;
pub mod fusion;
pub mod identity;
pub mod io;
pub mod kmeans;
pub mod model;
pub mod potentials;
pub mod solver;
pub mod sweep;
pub mod synthgen;

pub use error::{Error, Result};
