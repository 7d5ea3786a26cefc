//! Visual matching: per-region cosine similarities, the region attention
//! network that produces instance-dependent fusion weights, and the
//! pair-based trainer for it.
//!
//! Two scorers share the per-region similarities: [`uniform_score`] applies
//! one fixed weight per region (the comparison baseline), [`fused_score`]
//! applies the product of the two instances' attention weights so a region
//! only counts when it is informative on both sides.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Collection, Instance, RegionKind, NUM_REGIONS};

/// Convolution filters in the attention network.
pub const CONV_FILTERS: usize = 8;
/// Filter width along the feature axis; each filter spans all regions.
pub const KERNEL_WIDTH: usize = 5;

/// Parameters of the region attention network.
///
/// The input is the R x D matrix of stacked region features. `conv_filters`
/// holds `CONV_FILTERS` filters of shape R x KERNEL_WIDTH (filter-major,
/// then region, then offset); they slide along the feature axis with stride
/// one and valid padding, followed by a rectifier. The flattened activation
/// feeds an affine map to R logits and a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub feature_dim: usize,
    pub conv_filters: Vec<f64>,
    pub conv_bias: Vec<f64>,
    pub fc_weights: Vec<f64>,
    pub fc_bias: Vec<f64>,
}

/// Instance-dependent region weights, each in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionWeights(pub [f64; NUM_REGIONS]);

impl FusionModel {
    /// Width of the convolution output along the feature axis.
    pub fn conv_width(&self) -> usize {
        self.feature_dim - KERNEL_WIDTH + 1
    }

    /// Flattened size of the convolution output.
    pub fn hidden_len(&self) -> usize {
        CONV_FILTERS * self.conv_width()
    }

    pub fn zeros(feature_dim: usize) -> Result<FusionModel> {
        if feature_dim < KERNEL_WIDTH {
            return Err(Error::InvalidConfig(format!(
                "feature dimension {feature_dim} is smaller than the kernel width {KERNEL_WIDTH}"
            )));
        }
        let conv_width = feature_dim - KERNEL_WIDTH + 1;
        Ok(FusionModel {
            feature_dim,
            conv_filters: vec![0.0; CONV_FILTERS * NUM_REGIONS * KERNEL_WIDTH],
            conv_bias: vec![0.0; CONV_FILTERS],
            fc_weights: vec![0.0; NUM_REGIONS * CONV_FILTERS * conv_width],
            fc_bias: vec![0.0; NUM_REGIONS],
        })
    }

    /// Small random initialization, deterministic under `seed`.
    pub fn random(feature_dim: usize, seed: u64) -> Result<FusionModel> {
        let mut m = FusionModel::zeros(feature_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |v: &mut [f64], scale: f64| {
            for x in v {
                *x = (rng.random::<f64>() * 2.0 - 1.0) * scale;
            }
        };
        fill(&mut m.conv_filters, 0.4);
        fill(&mut m.conv_bias, 0.1);
        fill(&mut m.fc_weights, 0.4);
        fill(&mut m.fc_bias, 0.1);
        Ok(m)
    }

    pub fn param_count(&self) -> usize {
        self.conv_filters.len() + self.conv_bias.len() + self.fc_weights.len() + self.fc_bias.len()
    }

    /// Flat view over all parameters, in declaration order. Used by the
    /// serializer and by finite-difference checks.
    pub fn param(&self, i: usize) -> f64 {
        *self.param_slot(i)
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        *self.param_slot_mut(i) = value;
    }

    fn param_slot(&self, mut i: usize) -> &f64 {
        for part in [
            &self.conv_filters,
            &self.conv_bias,
            &self.fc_weights,
            &self.fc_bias,
        ] {
            if i < part.len() {
                return &part[i];
            }
            i -= part.len();
        }
        panic!("parameter index out of range");
    }

    fn param_slot_mut(&mut self, mut i: usize) -> &mut f64 {
        let parts: [&mut Vec<f64>; 4] = [
            &mut self.conv_filters,
            &mut self.conv_bias,
            &mut self.fc_weights,
            &mut self.fc_bias,
        ];
        for part in parts {
            if i < part.len() {
                return &mut part[i];
            }
            i -= part.len();
        }
        panic!("parameter index out of range");
    }

    fn check_dims(&self, inst: &Instance) -> Result<()> {
        for r in RegionKind::ALL {
            let len = inst.feature(r).len();
            if len != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    what: "attention input",
                    expected: self.feature_dim,
                    got: len,
                });
            }
        }
        Ok(())
    }

    fn forward(&self, inst: &Instance) -> ForwardTrace {
        let width = self.conv_width();
        let mut pre = vec![0.0; CONV_FILTERS * width];
        for f in 0..CONV_FILTERS {
            let filter = &self.conv_filters[f * NUM_REGIONS * KERNEL_WIDTH..];
            for t in 0..width {
                let mut acc = self.conv_bias[f];
                for r in 0..NUM_REGIONS {
                    let feat = &inst.region_features[r];
                    let taps = &filter[r * KERNEL_WIDTH..(r + 1) * KERNEL_WIDTH];
                    for (kk, tap) in taps.iter().enumerate() {
                        acc += tap * feat[t + kk];
                    }
                }
                pre[f * width + t] = acc;
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let mut logits = [0.0; NUM_REGIONS];
        for r in 0..NUM_REGIONS {
            let row = &self.fc_weights[r * hidden.len()..(r + 1) * hidden.len()];
            let mut acc = self.fc_bias[r];
            for (w, h) in row.iter().zip(&hidden) {
                acc += w * h;
            }
            logits[r] = acc;
        }
        let weights = logits.map(sigmoid);
        ForwardTrace {
            pre,
            hidden,
            logits,
            weights,
        }
    }

    /// Run the forward pass and return one weight per region.
    pub fn attention_weights(&self, inst: &Instance) -> Result<RegionWeights> {
        self.check_dims(inst)?;
        // The rectifier's max() would silently absorb NaN inputs, so check
        // features and parameters up front.
        for r in RegionKind::ALL {
            if !inst.feature(r).iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("{r} feature")));
            }
        }
        if !(0..self.param_count()).all(|i| self.param(i).is_finite()) {
            return Err(Error::NonFinite("attention parameters".into()));
        }
        let trace = self.forward(inst);
        if !trace.logits.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("attention logits".into()));
        }
        Ok(RegionWeights(trace.weights))
    }
}

struct ForwardTrace {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: [f64; NUM_REGIONS],
    weights: [f64; NUM_REGIONS],
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cosine similarity of the two instances' region-`r` features.
///
/// Returns 0 when either vector is all zero, so invisible regions contribute
/// nothing to any score.
pub fn region_similarity(a: &Instance, b: &Instance, r: RegionKind) -> Result<f64> {
    let fa = a.feature(r);
    let fb = b.feature(r);
    if fa.len() != fb.len() {
        return Err(Error::DimensionMismatch {
            what: "region similarity",
            expected: fa.len(),
            got: fb.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in fa.iter().zip(fb) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// All four region similarities at once.
fn region_similarities(a: &Instance, b: &Instance) -> Result<[f64; NUM_REGIONS]> {
    let mut out = [0.0; NUM_REGIONS];
    for r in RegionKind::ALL {
        out[r.index()] = region_similarity(a, b, r)?;
    }
    Ok(out)
}

/// Matching score with instance-dependent weights:
/// sum over regions of `w_a[r] * w_b[r] * sim_r(a, b)`. Symmetric in (a, b).
pub fn fused_score(m: &FusionModel, a: &Instance, b: &Instance) -> Result<f64> {
    let wa = m.attention_weights(a)?.0;
    let wb = m.attention_weights(b)?.0;
    let sims = region_similarities(a, b)?;
    Ok(fused_score_from_parts(&wa, &wb, &sims))
}

fn fused_score_from_parts(
    wa: &[f64; NUM_REGIONS],
    wb: &[f64; NUM_REGIONS],
    sims: &[f64; NUM_REGIONS],
) -> f64 {
    let mut score = 0.0;
    for r in 0..NUM_REGIONS {
        score += wa[r] * wb[r] * sims[r];
    }
    score
}

/// Matching score with one fixed weight per region, shared by all instances.
pub fn uniform_score(weights: &[f64; NUM_REGIONS], a: &Instance, b: &Instance) -> Result<f64> {
    let sims = region_similarities(a, b)?;
    Ok(weights.iter().zip(sims).map(|(w, s)| w * s).sum())
}

/// Dense symmetric matrix of pairwise matching scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn zeros(n: usize) -> ScoreMatrix {
        ScoreMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<ScoreMatrix> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "score matrix",
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(ScoreMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}

/// Fill the pairwise score matrix over every instance in the collection.
/// The diagonal is defined (self score) but never consumed downstream.
pub fn score_matrix(m: &FusionModel, c: &Collection) -> Result<ScoreMatrix> {
    let n = c.num_instances();
    let mut weights = Vec::with_capacity(n);
    for inst in &c.instances {
        weights.push(m.attention_weights(inst)?.0);
    }
    let mut s = ScoreMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let sims = region_similarities(&c.instances[i], &c.instances[j])?;
            let v = fused_score_from_parts(&weights[i], &weights[j], &sims);
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(s)
}

/// Pairwise matrix under fixed region weights (the baseline scorer).
pub fn uniform_score_matrix(weights: &[f64; NUM_REGIONS], c: &Collection) -> Result<ScoreMatrix> {
    let n = c.num_instances();
    let mut s = ScoreMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = uniform_score(weights, &c.instances[i], &c.instances[j])?;
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(s)
}

/// Pairwise matrix of a single region's cosine similarities.
pub fn region_score_matrix(r: RegionKind, c: &Collection) -> Result<ScoreMatrix> {
    let mut weights = [0.0; NUM_REGIONS];
    weights[r.index()] = 1.0;
    uniform_score_matrix(&weights, c)
}

/// A labeled training pair: indices into an instance slice plus the
/// same-identity flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainPair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Fixed scale applied to the fused score before the sigmoid of the
    /// verification loss.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 30,
            temperature: 4.0,
            seed: 0,
        }
    }
}

/// Binary cross-entropy of `sigmoid(temperature * fused_score)` against the
/// pair label. Stable log-sum-exp form.
pub fn pair_loss(
    m: &FusionModel,
    a: &Instance,
    b: &Instance,
    same: bool,
    temperature: f64,
) -> Result<f64> {
    let z = temperature * fused_score(m, a, b)?;
    let y = if same { 1.0 } else { 0.0 };
    Ok(z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
}

/// Loss plus analytic gradients for one pair. The gradient container reuses
/// the parameter layout of `FusionModel`.
fn pair_loss_and_grads(
    m: &FusionModel,
    a: &Instance,
    b: &Instance,
    same: bool,
    temperature: f64,
) -> Result<(f64, FusionModel)> {
    m.check_dims(a)?;
    m.check_dims(b)?;
    let ta = m.forward(a);
    let tb = m.forward(b);
    let sims = region_similarities(a, b)?;
    let score = fused_score_from_parts(&ta.weights, &tb.weights, &sims);

    let z = temperature * score;
    let y = if same { 1.0 } else { 0.0 };
    let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    let dz = sigmoid(z) - y;
    let dscore = temperature * dz;

    let mut grads = FusionModel::zeros(m.feature_dim)?;
    for (inst, trace, other) in [(a, &ta, &tb), (b, &tb, &ta)] {
        let mut dlogits = [0.0; NUM_REGIONS];
        for r in 0..NUM_REGIONS {
            let dweight = dscore * other.weights[r] * sims[r];
            dlogits[r] = dweight * trace.weights[r] * (1.0 - trace.weights[r]);
        }
        accumulate_instance_grads(m, inst, trace, &dlogits, &mut grads);
    }
    Ok((loss, grads))
}

fn accumulate_instance_grads(
    m: &FusionModel,
    inst: &Instance,
    trace: &ForwardTrace,
    dlogits: &[f64; NUM_REGIONS],
    grads: &mut FusionModel,
) {
    let hidden_len = trace.hidden.len();
    let width = m.conv_width();

    let mut dhidden = vec![0.0; hidden_len];
    for r in 0..NUM_REGIONS {
        grads.fc_bias[r] += dlogits[r];
        let row = &m.fc_weights[r * hidden_len..(r + 1) * hidden_len];
        let grow = &mut grads.fc_weights[r * hidden_len..(r + 1) * hidden_len];
        for i in 0..hidden_len {
            grow[i] += dlogits[r] * trace.hidden[i];
            dhidden[i] += dlogits[r] * row[i];
        }
    }

    for f in 0..CONV_FILTERS {
        let gfilter = &mut grads.conv_filters
            [f * NUM_REGIONS * KERNEL_WIDTH..(f + 1) * NUM_REGIONS * KERNEL_WIDTH];
        for t in 0..width {
            let idx = f * width + t;
            if trace.pre[idx] <= 0.0 {
                continue;
            }
            let dpre = dhidden[idx];
            grads.conv_bias[f] += dpre;
            for r in 0..NUM_REGIONS {
                let feat = &inst.region_features[r];
                for kk in 0..KERNEL_WIDTH {
                    gfilter[r * KERNEL_WIDTH + kk] += dpre * feat[t + kk];
                }
            }
        }
    }
}

/// Train the attention network on labeled pairs with plain SGD.
///
/// Region features are frozen; only the network parameters move. Returns the
/// trained model and the mean loss per epoch. Losses are accumulated in pair
/// order (not visit order) so a zero learning rate yields a bit-identical
/// history across epochs.
pub fn train_fusion(
    m: &FusionModel,
    instances: &[Instance],
    pairs: &[TrainPair],
    cfg: &TrainConfig,
) -> Result<(FusionModel, Vec<f64>)> {
    let mut model = m.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut losses = vec![0.0; pairs.len()];
        for &p in &order {
            let pair = pairs[p];
            let (loss, grads) = pair_loss_and_grads(
                &model,
                &instances[pair.a],
                &instances[pair.b],
                pair.same,
                cfg.temperature,
            )?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            losses[p] = loss;
            for i in 0..model.param_count() {
                let v = model.param(i) - cfg.learning_rate * grads.param(i);
                model.set_param(i, v);
            }
        }
        let mean = if pairs.is_empty() {
            0.0
        } else {
            losses.iter().sum::<f64>() / pairs.len() as f64
        };
        if !mean.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(mean);
    }
    Ok((model, history))
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}
