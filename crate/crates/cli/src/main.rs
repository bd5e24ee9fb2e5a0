mod arch;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dapcnn::benchmarks::{
    compute_metrics, convergence_sweep, sweep_csv, ArchitectureTable, MetricReport, Method, Problem, SweepConfig,
};
use dapcnn::io::{load_dataset, load_model_document, save_model, write_dataset, Provenance};
use dapcnn::network::sobol_indices;
use dapcnn::sampling::{generate, grid_bases, Strategy};
use dapcnn::trainer::{fit_single_layer, loss, train_lm, TrainingHistory};
use dapcnn::{Activation, ApcExpansion, BasisMode, Error, LayerSpec, NetworkState, Result, TrainingConfig};
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use arch::{ArchitectureFile, Resolved};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "dapcnn", version, about = "Deep arbitrary polynomial chaos neural networks")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample inputs, evaluate a benchmark and write a dataset CSV.
    GenData(GenDataArgs),
    /// Train a model on a dataset CSV.
    Train(TrainArgs),
    /// Predict on a dataset and report validation metrics.
    Eval(EvalArgs),
    /// Variance shares of one node of a trained model.
    Sobol(SobolArgs),
    /// Convergence sweep over training sizes and methods.
    Sweep(SweepArgs),
}

#[derive(Args, Serialize)]
struct GenDataArgs {
    #[arg(long)]
    benchmark: Problem,
    #[arg(long, default_value = "sobol")]
    strategy: Strategy,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    data: PathBuf,
    /// Architecture file (TOML); alternative to --layers/--degree.
    #[arg(long, conflicts_with_all = ["layers", "degree", "activation"])]
    #[serde(skip)]
    arch: Option<PathBuf>,
    #[arg(long, default_value = "dapcnn")]
    method: Method,
    /// Nodes per layer, e.g. `3,1`.
    #[arg(long, value_delimiter = ',')]
    layers: Vec<usize>,
    /// Degree per layer, or one degree for all layers.
    #[arg(long, value_delimiter = ',')]
    degree: Vec<usize>,
    #[arg(long)]
    activation: Option<Activation>,
    /// aPC only: build the bases from this benchmark's input distribution
    /// instead of the sample moments of the data.
    #[arg(long)]
    input_distribution: Option<Problem>,
    /// Training configuration file (TOML with TrainingConfig fields).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    msw_weight: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    output: PathBuf,
    /// Per-iteration training history CSV.
    #[arg(long)]
    #[serde(skip)]
    history: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    model: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    data: PathBuf,
    /// Predictions CSV (inputs and predicted response).
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SobolArgs {
    #[arg(long)]
    #[serde(skip)]
    model: PathBuf,
    /// 1-based layer (default: output layer).
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long, default_value_t = 0)]
    node: usize,
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    benchmark: Problem,
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "apc,dann,dapcnn")]
    methods: Vec<Method>,
    #[arg(long, default_value = "sobol")]
    strategy: Strategy,
    #[arg(long, default_value_t = 1000)]
    validation_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    msw_weight: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
}

fn digest<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("configuration serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn header_comments<T: Serialize>(command: &str, config: &T) -> Vec<String> {
    vec![
        format!("dapcnn {VERSION} {command}"),
        format!("config {}", serde_json::to_string(config).expect("configuration serializes")),
        format!("config-sha256 {}", digest(config)),
    ]
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn comment_block(comments: &[String]) -> String {
    comments.iter().map(|c| format!("# {c}\n")).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let x = generate(args.strategy, args.size, args.seed, &args.benchmark.marginals())?;
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let data = args.benchmark.dataset(x)?;
    let mut f = std::io::BufWriter::new(fs::File::create(&args.output)?);
    write_dataset(&mut f, data.inputs(), data.responses(), &header_comments("gen-data", args))?;
    f.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrainDigest<'a> {
    args: &'a TrainArgs,
    method: Method,
    layers: Vec<LayerSpec>,
    training: &'a TrainingConfig,
}

fn resolve_architecture(args: &TrainArgs, n_inputs: usize) -> Result<Resolved> {
    if let Some(path) = &args.arch {
        return ArchitectureFile::parse(&fs::read_to_string(path)?)?.resolve();
    }
    let layers = match (args.method, args.layers.is_empty()) {
        (Method::Apc, true) => vec![1],
        (_, true) => return Err(Error::InvalidConfig("--layers or --arch is required".into())),
        (_, false) => args.layers.clone(),
    };
    let degrees = match args.degree.len() {
        0 => return Err(Error::InvalidConfig("--degree is required".into())),
        1 => vec![args.degree[0]; layers.len()],
        _ => args.degree.clone(),
    };
    let file = ArchitectureFile {
        method: args.method.to_string(),
        layers,
        degrees,
        activation: args.activation.map(|a| arch::Activations::One(a.to_string())),
        loss: "mse+msw".into(),
    };
    let resolved = file.resolve()?;
    dapcnn::network::count_weights(n_inputs, &resolved.specs)?;
    Ok(resolved)
}

fn history_csv(history: &TrainingHistory) -> String {
    let mut out = String::from("iteration,loss,mse,msw,damping,accepted\n");
    let init = history.initial;
    out.push_str(&format!("0,{},{},{},,true\n", init.total, init.mse, init.msw));
    for (i, r) in history.records.iter().enumerate() {
        out.push_str(&format!("{},{},{},{},{},{}\n", i + 1, r.loss, r.mse, r.msw, r.damping, r.accepted));
    }
    out
}

fn apc_from_distribution(specs: &[LayerSpec], problem: Problem, data: &dapcnn::Dataset) -> Result<NetworkState> {
    if problem.n_inputs() != data.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: problem.n_inputs(),
            got: data.n_inputs(),
        });
    }
    let bases = grid_bases(&problem.marginals(), specs[0].degree)?;
    let apc = ApcExpansion::fit_with_bases(data, bases.clone(), None)?;
    NetworkState::from_parts(
        data.n_inputs(),
        specs,
        BasisMode::Adaptive,
        vec![vec![apc.weights().to_vec()]],
        vec![Some(bases)],
        vec![None],
    )
}

fn train(args: &TrainArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    if data.n_outputs() != 1 {
        return Err(Error::InvalidConfig(format!(
            "training needs a single response column, found {}",
            data.n_outputs()
        )));
    }
    let arch = resolve_architecture(args, data.n_inputs())?;
    let mut cfg: TrainingConfig = match &args.config {
        Some(p) => toml::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Parse(format!("config file: {e}")))?,
        None => TrainingConfig::default(),
    };
    cfg.seed = args.seed;
    if let Some(m) = args.max_iterations {
        cfg.max_iterations = m;
    }
    if let Some(m) = args.msw_weight {
        cfg.msw_weight = m;
    }
    cfg.validate()?;
    if args.input_distribution.is_some() && arch.method != Method::Apc {
        return Err(Error::InvalidConfig("--input-distribution applies to the apc method only".into()));
    }
    let config_digest = digest(&TrainDigest {
        args,
        method: arch.method,
        layers: arch.specs.clone(),
        training: &cfg,
    });
    let state = NetworkState::build(data.n_inputs(), &arch.specs, arch.mode, cfg.seed)?;
    let (trained, history) = match arch.method {
        Method::Apc => match args.input_distribution {
            Some(problem) => (apc_from_distribution(&arch.specs, problem, &data)?, None),
            None => (fit_single_layer(&state, &data, None)?, None),
        },
        _ => {
            let (s, h) = train_lm(&state, &data, &cfg)?;
            for w in &h.warnings {
                eprintln!("warning: {w}");
            }
            (s, Some(h))
        }
    };
    let final_loss = loss(&trained, &data, &cfg)?;
    let provenance = Provenance {
        seed: cfg.seed,
        config_digest: config_digest.clone(),
        final_loss: Some(final_loss.total),
        tool_version: VERSION.to_string(),
    };
    save_model(&args.output, &trained, provenance)?;
    if let (Some(path), Some(h)) = (&args.history, &history) {
        let mut text = comment_block(&[format!("dapcnn {VERSION} train"), format!("config-sha256 {config_digest}")]);
        text.push_str(&history_csv(h));
        fs::write(path, text)?;
    }
    println!(
        "loss {} mse {} msw {} weights {}",
        final_loss.total,
        final_loss.mse,
        final_loss.msw,
        trained.n_weights()
    );
    Ok(())
}

fn metrics_csv(m: &MetricReport) -> String {
    format!(
        "metric,value\nmse,{}\nrel_mean_err,{}\nrel_std_err,{}\n",
        m.mse,
        fmt_opt(m.rel_mean_err),
        fmt_opt(m.rel_std_err)
    )
}

fn eval(args: &EvalArgs) -> Result<()> {
    let doc = load_model_document(&args.model)?;
    let state = doc.to_state()?;
    let data = load_dataset(&args.data)?;
    let pred = state.predict_batch(data.inputs())?;
    if let Some(path) = &args.output {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        let comments = vec![
            format!("dapcnn {VERSION} eval"),
            format!("model-config-sha256 {}", doc.provenance.config_digest),
        ];
        write_dataset(&mut f, data.inputs(), &DMatrix::from_column_slice(pred.len(), 1, &pred), &comments)?;
        f.flush()?;
    }
    let report = compute_metrics(&pred, &data.response(0))?;
    print!("{}", metrics_csv(&report));
    Ok(())
}

fn sobol(args: &SobolArgs) -> Result<()> {
    let state = load_model_document(&args.model)?.to_state()?;
    let n_layers = state.layers().len();
    let layer_no = args.layer.unwrap_or(n_layers);
    if layer_no == 0 || layer_no > n_layers {
        return Err(Error::InvalidConfig(format!("layer must be in 1..={n_layers}, got {layer_no}")));
    }
    let layer = &state.layers()[layer_no - 1];
    let weights = layer.weights().get(args.node).ok_or_else(|| {
        Error::InvalidConfig(format!("layer {layer_no} has {} nodes", layer.spec().n_nodes))
    })?;
    let s = sobol_indices(weights, layer.index())?;
    let (mean, var) = dapcnn::network::node_statistics(weights);
    let mut text = comment_block(&[
        format!("dapcnn {VERSION} sobol"),
        format!("layer {layer_no} node {} mean {mean} variance {var}", args.node),
    ]);
    text.push_str("kind,index,share\n");
    for (j, v) in s.first_order.iter().enumerate() {
        text.push_str(&format!("first,{},{v}\n", j + 1));
    }
    for (j, v) in s.total.iter().enumerate() {
        text.push_str(&format!("total,{},{v}\n", j + 1));
    }
    for (alpha, v) in &s.terms {
        let a: Vec<String> = alpha.iter().map(u32::to_string).collect();
        text.push_str(&format!("term,{},{v}\n", a.join("-")));
    }
    write_output(args.output.as_deref(), &text)
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = SweepConfig::new(args.benchmark, args.seed);
    if !args.sizes.is_empty() {
        cfg.sizes = args.sizes.clone();
    }
    cfg.methods = args.methods.clone();
    cfg.strategy = args.strategy;
    cfg.validation_size = args.validation_size;
    if let Some(m) = args.max_iterations {
        cfg.training.max_iterations = m;
    }
    if let Some(m) = args.msw_weight {
        cfg.training.msw_weight = m;
    }
    let rows = convergence_sweep(&cfg, &ArchitectureTable::for_problem(args.benchmark))?;
    let mut text = comment_block(&header_comments("sweep", &cfg));
    text.push_str(&sweep_csv(&rows));
    write_output(args.output.as_deref(), &text)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::InvalidConfig("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sobol(a) => sobol(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
