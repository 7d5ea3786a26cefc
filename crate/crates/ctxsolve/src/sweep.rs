//! The occlusion sweep: run the full pipeline (train fusion, tune the
//! baseline, solve in every ablation mode) across a list of visibility rates
//! and report mean accuracies per rate.

use crate::error::Result;
use crate::eval::{
    accuracy, grid_search_uniform_weights, predictions_from, visual_accuracy,
};
use crate::fusion::{score_matrix, train_fusion, uniform_score_matrix, FusionModel, TrainConfig};
use crate::model::{Hyperparams, NUM_REGIONS};
use crate::solver;
use crate::synthgen::{generate, make_training_pairs, GenConfig};

/// Mean accuracy of each ablation mode at one visibility rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rate: f64,
    /// Fixed grid-searched weights, no social context.
    pub visual: f64,
    /// Attention-fused scores, no social context.
    pub ranet: f64,
    /// Attention plus person-person relations.
    pub ranet_p: f64,
    /// Attention plus person-person and event relations (full model).
    pub ranet_p_e: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Generator settings; the per-region visibility rates are overridden by
    /// each sweep rate.
    pub base: GenConfig,
    pub train: TrainConfig,
    pub train_pairs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub num_seeds: usize,
}

impl Default for SweepConfig {
    fn default() -> SweepConfig {
        SweepConfig {
            base: GenConfig::default(),
            train: TrainConfig::default(),
            train_pairs: 1200,
            alpha: 0.05,
            beta: 0.05,
            num_seeds: 5,
        }
    }
}

fn mix_seed(base: u64, rate_index: usize, seed_index: usize, salt: u64) -> u64 {
    let mut h = base
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(rate_index as u64)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9)
        .wrapping_add(seed_index as u64)
        .wrapping_mul(0x94d0_49bb_1331_11eb)
        .wrapping_add(salt);
    h ^= h >> 31;
    h
}

/// Accuracies of the four ablation modes on one generated world.
fn run_world(cfg: &SweepConfig, rate: f64, rate_index: usize, seed_index: usize) -> Result<[f64; 4]> {
    // The head channel stays fully visible (it is the annotated region in
    // the source data); the sweep rate drops the other three.
    let gen_cfg = |seed: u64| GenConfig {
        visibility_rate: [rate, 1.0, rate, rate],
        seed,
        ..cfg.base.clone()
    };
    let (train_c, train_truth) = generate(&gen_cfg(mix_seed(cfg.base.seed, rate_index, seed_index, 1)))?;
    let (test_c, test_truth) = generate(&gen_cfg(mix_seed(cfg.base.seed, rate_index, seed_index, 2)))?;

    // Fit the instance-dependent scorer on the training world.
    let pairs = make_training_pairs(
        &train_truth.labels,
        cfg.base.num_identities,
        cfg.train_pairs,
        mix_seed(cfg.base.seed, rate_index, seed_index, 3),
    );
    let init = FusionModel::random(
        cfg.base.feature_dim,
        mix_seed(cfg.base.seed, rate_index, seed_index, 4),
    )?;
    let (model, _) = train_fusion(&init, &train_c.instances, &pairs, &cfg.train)?;

    // Tune the fixed-weight baseline on the same training world.
    let (weights, _) = grid_search_uniform_weights(&train_c, &train_truth.labels, 10)?;

    let uniform_scores = uniform_score_matrix(&weights, &test_c)?;
    let fused_scores = score_matrix(&model, &test_c)?;
    let solver_seed = mix_seed(cfg.base.seed, rate_index, seed_index, 5);

    let visual = visual_accuracy(&test_c, &uniform_scores, &test_truth.labels)?;
    let ranet = visual_accuracy(&test_c, &fused_scores, &test_truth.labels)?;

    let base_h = Hyperparams {
        num_events: cfg.base.num_events,
        nu_min: 0,
        nu_max: Hyperparams::auto_nu_max(test_c.num_photos(), cfg.base.num_events),
        ..Hyperparams::default()
    };
    let with_p = Hyperparams {
        alpha: 0.0,
        beta: cfg.beta,
        ..base_h.clone()
    };
    let solution = solver::run(&test_c, &fused_scores, &with_p, solver_seed)?;
    let ranet_p = accuracy(
        &test_c,
        &predictions_from(&test_c, &solution.identities),
        &test_truth.labels,
    )?;

    let full_h = Hyperparams {
        alpha: cfg.alpha,
        beta: cfg.beta,
        ..base_h
    };
    let solution = solver::run(&test_c, &fused_scores, &full_h, solver_seed)?;
    let ranet_p_e = accuracy(
        &test_c,
        &predictions_from(&test_c, &solution.identities),
        &test_truth.labels,
    )?;

    Ok([visual, ranet, ranet_p, ranet_p_e])
}

/// Run the full pipeline for every rate, averaging over the configured
/// number of derived seeds. An empty rate list yields an empty table.
pub fn occlusion_sweep(cfg: &SweepConfig, rates: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(rates.len());
    for (rate_index, &rate) in rates.iter().enumerate() {
        let mut sums = [0.0; 4];
        for seed_index in 0..cfg.num_seeds {
            let acc = run_world(cfg, rate, rate_index, seed_index)?;
            for (sum, a) in sums.iter_mut().zip(acc) {
                *sum += a;
            }
        }
        let n = cfg.num_seeds.max(1) as f64;
        rows.push(SweepRow {
            rate,
            visual: sums[0] / n,
            ranet: sums[1] / n,
            ranet_p: sums[2] / n,
            ranet_p_e: sums[3] / n,
            seeds: cfg.num_seeds,
        });
    }
    Ok(rows)
}
