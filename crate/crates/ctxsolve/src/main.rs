use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ctxsolve::error::{Error, Result};
use ctxsolve::eval::{confusion_summary, EvalReport, MethodAccuracy};
use ctxsolve::fusion::{
    score_matrix, train_fusion, uniform_score_matrix, FusionModel, TrainConfig,
};
use ctxsolve::io::collection::{load_collection, load_truth, save_collection, save_truth};
use ctxsolve::io::model_file::{load_model, save_model};
use ctxsolve::io::records::{
    load_predictions, predictions_to_string, report_to_string, save_predictions, save_report,
    save_sweep, save_trace, PredictionFile,
};
use ctxsolve::io::scores::{load_scores, save_scores};
use ctxsolve::model::{Hyperparams, NUM_REGIONS};
use ctxsolve::sweep::{occlusion_sweep, SweepConfig};
use ctxsolve::synthgen::{generate, make_training_pairs, GenConfig, InvisibleMode};
use ctxsolve::{eval, solver};

/// Context-aware identity labeling over photo collections.
#[derive(Parser)]
#[command(name = "ctxsolve", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic collection and its ground-truth sidecar.
    Gen(GenArgs),
    /// Train the region attention network on labeled pairs.
    TrainFusion(TrainFusionArgs),
    /// Compute and cache the pairwise score matrix.
    Score(ScoreArgs),
    /// Run joint inference and write predictions plus an objective trace.
    Solve(SolveArgs),
    /// Score prediction files against ground truth.
    Eval(EvalArgs),
    /// Run the occlusion sweep and write the accuracy table.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InvisibleModeArg {
    Zero,
    Blank,
}

impl From<InvisibleModeArg> for InvisibleMode {
    fn from(v: InvisibleModeArg) -> InvisibleMode {
        match v {
            InvisibleModeArg::Zero => InvisibleMode::Zero,
            InvisibleModeArg::Blank => InvisibleMode::Blank,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Visual,
    Ranet,
    RanetP,
    RanetPE,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Visual => "visual",
            Mode::Ranet => "ranet",
            Mode::RanetP => "ranet-p",
            Mode::RanetPE => "ranet-p-e",
        }
    }
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    match parts.as_slice() {
        [one] => {
            let v = parse(one)?;
            Ok((v, v))
        }
        [lo, hi] => Ok((parse(lo)?, parse(hi)?)),
        _ => Err("expected 'n' or 'min,max'".to_string()),
    }
}

fn parse_four(s: &str) -> std::result::Result<[f64; NUM_REGIONS], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != NUM_REGIONS {
        return Err(format!("expected {NUM_REGIONS} comma-separated values"));
    }
    let mut out = [0.0; NUM_REGIONS];
    for (slot, t) in out.iter_mut().zip(parts) {
        *slot = t.trim().parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    }
    Ok(out)
}

fn parse_rates(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|e: std::num::ParseFloatError| e.to_string()))
        .collect()
}

#[derive(Args, Clone)]
struct GenConfigArgs {
    #[arg(long, default_value_t = 16)]
    identities: usize,
    #[arg(long, default_value_t = 6)]
    events: usize,
    /// Photos per event, 'n' or 'min,max'.
    #[arg(long, value_parser = parse_range, default_value = "8,12")]
    photos_per_event: (usize, usize),
    /// Instances per photo, 'n' or 'min,max'.
    #[arg(long, value_parser = parse_range, default_value = "2,4")]
    instances_per_photo: (usize, usize),
    #[arg(long, default_value_t = 12)]
    feature_dim: usize,
    #[arg(long, default_value_t = 8)]
    scene_dim: usize,
    /// Per-region identity signal strength: face,head,upperbody,body.
    #[arg(long, value_parser = parse_four, default_value = "0.95,0.8,0.65,0.55")]
    signal: [f64; NUM_REGIONS],
    /// Per-region visibility rate: face,head,upperbody,body.
    #[arg(long, value_parser = parse_four, default_value = "1,1,1,1")]
    visibility: [f64; NUM_REGIONS],
    #[arg(long, default_value_t = 0.25)]
    scene_noise: f64,
    /// Identity group size for the automatic clique partition.
    #[arg(long, default_value_t = 4)]
    clique_size: usize,
    #[arg(long, default_value_t = 2)]
    gallery_per_identity: usize,
    /// How dropped regions are represented.
    #[arg(long, value_enum, default_value_t = InvisibleModeArg::Zero)]
    invisible_mode: InvisibleModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GenConfigArgs {
    fn to_config(&self) -> GenConfig {
        let cliques = if self.clique_size == 0 {
            Vec::new()
        } else {
            (0..self.identities)
                .collect::<Vec<_>>()
                .chunks(self.clique_size)
                .map(<[usize]>::to_vec)
                .collect()
        };
        GenConfig {
            num_identities: self.identities,
            num_events: self.events,
            photos_per_event: self.photos_per_event,
            instances_per_photo: self.instances_per_photo,
            feature_dim: self.feature_dim,
            scene_dim: self.scene_dim,
            identity_signal_strength: self.signal,
            visibility_rate: self.visibility,
            scene_noise: self.scene_noise,
            cooccurrence_cliques: cliques,
            gallery_per_identity: self.gallery_per_identity,
            invisible_mode: self.invisible_mode.into(),
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    config: GenConfigArgs,
    /// Collection output path.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar output path.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct TrainFusionArgs {
    #[arg(long)]
    collection: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1200)]
    pairs: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    #[arg(long, default_value_t = 4.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    collection: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fusion model file; scores use instance-dependent weights.
    #[arg(long, conflicts_with = "uniform")]
    model: Option<PathBuf>,
    /// Fixed region weights 'f,h,u,b'; scores use the uniform baseline.
    #[arg(long, value_parser = parse_four)]
    uniform: Option<[f64; NUM_REGIONS]>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    collection: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Predictions output path.
    #[arg(long)]
    out: PathBuf,
    /// Objective trace output path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Ablation mode; visual and ranet zero both coefficients, ranet-p zeroes
    /// alpha only.
    #[arg(long, value_enum, default_value_t = Mode::RanetPE)]
    mode: Mode,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    /// Number of latent events K.
    #[arg(long, default_value_t = 300)]
    events: usize,
    #[arg(long, default_value_t = 1)]
    nu_min: usize,
    /// Upper granularity bound; defaults to ceil(2M/K).
    #[arg(long)]
    nu_max: Option<usize>,
    #[arg(long, default_value_t = 10)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.01)]
    smoothing_eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exchange gallery and query roles before solving (the backward
    /// direction of the evaluation protocol). Requires --truth.
    #[arg(long, requires = "truth")]
    swap_roles: bool,
    /// Ground-truth sidecar, used only with --swap-roles.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    collection: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Prediction files; repeat per mode/direction.
    #[arg(long = "pred", required = true)]
    preds: Vec<PathBuf>,
    /// Average forward and backward accuracy per mode (both files required).
    #[arg(long)]
    swap: bool,
    /// Report output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_confusions: usize,
    /// Optional trace reference recorded in the report.
    #[arg(long)]
    trace_ref: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: GenConfigArgs,
    /// Comma-separated visibility rates.
    #[arg(long, value_parser = parse_rates)]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value_t = 1200)]
    train_pairs: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    #[arg(long, default_value_t = 4.0)]
    temperature: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::TrainFusion(args) => cmd_train_fusion(args),
        Command::Score(args) => cmd_score(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let cfg = args.config.to_config();
    let (collection, truth) = generate(&cfg)?;
    save_collection(&collection, &args.out)?;
    save_truth(&truth, &args.truth)?;
    eprintln!(
        "generated {} photos, {} instances ({} queries), {} identities",
        collection.num_photos(),
        collection.num_instances(),
        collection.query_ids().len(),
        collection.num_identities
    );
    Ok(())
}

fn cmd_train_fusion(args: TrainFusionArgs) -> Result<()> {
    let collection = load_collection(&args.collection)?;
    let truth = load_truth(&args.truth)?;
    if truth.labels.len() != collection.num_instances() {
        return Err(Error::InvalidConfig(
            "truth sidecar does not match the collection".into(),
        ));
    }
    let pairs = make_training_pairs(
        &truth.labels,
        collection.num_identities,
        args.pairs,
        args.seed,
    );
    if pairs.is_empty() {
        return Err(Error::InvalidConfig(
            "no trainable pairs: need at least two identities with two instances".into(),
        ));
    }
    let init = FusionModel::random(collection.feature_dim, args.seed)?;
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        temperature: args.temperature,
        seed: args.seed,
    };
    let (model, history) = train_fusion(&init, &collection.instances, &pairs, &cfg)?;
    save_model(&model, &args.out)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        eprintln!(
            "trained on {} pairs for {} epochs: loss {first:.6} -> {last:.6}",
            pairs.len(),
            history.len()
        );
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let collection = load_collection(&args.collection)?;
    let matrix = match (&args.model, &args.uniform) {
        (Some(path), None) => {
            let model = load_model(path)?;
            if model.feature_dim != collection.feature_dim {
                return Err(Error::DimensionMismatch {
                    what: "model feature dimension",
                    expected: collection.feature_dim,
                    got: model.feature_dim,
                });
            }
            score_matrix(&model, &collection)?
        }
        (None, Some(weights)) => uniform_score_matrix(weights, &collection)?,
        _ => {
            return Err(Error::InvalidConfig(
                "score needs exactly one of --model or --uniform".into(),
            ))
        }
    };
    save_scores(&matrix, &args.out)?;
    eprintln!("scored {0} x {0} instance pairs", matrix.len());
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let mut collection = load_collection(&args.collection)?;
    let scores = load_scores(&args.scores)?;
    if scores.len() != collection.num_instances() {
        return Err(Error::DimensionMismatch {
            what: "score matrix size",
            expected: collection.num_instances(),
            got: scores.len(),
        });
    }
    let direction = if args.swap_roles {
        let truth = load_truth(args.truth.as_ref().expect("clap enforces --truth"))?;
        collection = eval::swap_roles(&collection, &truth)?;
        "backward"
    } else {
        "forward"
    };

    let (alpha, beta) = match args.mode {
        Mode::Visual | Mode::Ranet => (0.0, 0.0),
        Mode::RanetP => (0.0, args.beta),
        Mode::RanetPE => (args.alpha, args.beta),
    };
    let h = Hyperparams {
        alpha,
        beta,
        num_events: args.events,
        nu_min: args.nu_min,
        nu_max: args
            .nu_max
            .unwrap_or_else(|| Hyperparams::auto_nu_max(collection.num_photos(), args.events)),
        max_iterations: args.max_iters,
        dist_smoothing_eps: args.smoothing_eps,
    };

    let solution = solver::run(&collection, &scores, &h, args.seed)?;
    let predictions = PredictionFile {
        mode: args.mode.name().to_string(),
        direction: direction.to_string(),
        predictions: eval::predictions_from(&collection, &solution.identities),
    };
    save_predictions(&predictions, &args.out)?;
    if let Some(trace_path) = &args.trace {
        save_trace(&solution.trace, trace_path)?;
    }
    eprintln!(
        "solved in {} iterations (converged: {}); objective {}",
        solution.trace.iterations.len(),
        solution.trace.converged,
        solution
            .trace
            .iterations
            .last()
            .map(|t| t.objective_after_context)
            .unwrap_or(solution.trace.initial_objective)
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let collection = load_collection(&args.collection)?;
    let truth = load_truth(&args.truth)?;
    if truth.labels.len() != collection.num_instances() {
        return Err(Error::InvalidConfig(
            "truth sidecar does not match the collection".into(),
        ));
    }
    let backward_collection = eval::swap_roles(&collection, &truth)?;

    let mut order: Vec<String> = Vec::new();
    let mut forward: std::collections::BTreeMap<String, PredictionFile> = Default::default();
    let mut backward: std::collections::BTreeMap<String, PredictionFile> = Default::default();
    for path in &args.preds {
        let file = load_predictions(path)?;
        if !order.contains(&file.mode) {
            order.push(file.mode.clone());
        }
        match file.direction.as_str() {
            "forward" => forward.insert(file.mode.clone(), file),
            "backward" => backward.insert(file.mode.clone(), file),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "prediction file {} has unknown direction '{other}'",
                    path.display()
                )))
            }
        };
    }

    let mut methods = Vec::new();
    let mut last_forward: Option<PredictionFile> = None;
    for mode in &order {
        let fwd = forward.get(mode).ok_or_else(|| {
            Error::InvalidConfig(format!("mode '{mode}' has no forward predictions"))
        })?;
        let acc_f = eval::accuracy(&collection, &fwd.predictions, &truth.labels)?;
        let acc_b = match backward.get(mode) {
            Some(b) => Some(eval::accuracy(
                &backward_collection,
                &b.predictions,
                &truth.labels,
            )?),
            None if args.swap => {
                return Err(Error::InvalidConfig(format!(
                    "--swap needs backward predictions for mode '{mode}'"
                )))
            }
            None => None,
        };
        methods.push(MethodAccuracy::new(mode.clone(), acc_f, acc_b));
        last_forward = Some(fwd.clone());
    }
    let confusion = match &last_forward {
        Some(fwd) => confusion_summary(
            &collection,
            &fwd.predictions,
            &truth.labels,
            args.top_confusions,
        ),
        None => Vec::new(),
    };
    let report = EvalReport::from_methods(methods, confusion, args.trace_ref.clone());
    match &args.out {
        Some(path) => save_report(&report, path)?,
        None => print!("{}", report_to_string(&report)),
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = SweepConfig {
        base: args.config.to_config(),
        train: TrainConfig {
            learning_rate: args.learning_rate,
            epochs: args.epochs,
            temperature: args.temperature,
            seed: args.config.seed,
        },
        train_pairs: args.train_pairs,
        alpha: args.alpha,
        beta: args.beta,
        num_seeds: args.seeds,
    };
    let rows = occlusion_sweep(&cfg, &args.rates)?;
    for row in &rows {
        eprintln!(
            "rate {:.2}: visual {:.4} ranet {:.4} ranet-p {:.4} ranet-p-e {:.4}",
            row.rate, row.visual, row.ranet, row.ranet_p, row.ranet_p_e
        );
    }
    save_sweep(&rows, &args.out)?;
    Ok(())
}

// Referenced by integration tests; keeps the predictions format in one place.
#[allow(dead_code)]
fn predictions_preview(p: &PredictionFile) -> String {
    predictions_to_string(p)
}
