use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dyted::encoder::RepresentationSet;
use dyted::eval::{
    classification_samples, eval_link_prediction, eval_node_classification, features, run_sweep,
    write_rows, EvalRow, ProbeOptions, SweepKind, SweepSpec, Variant, LINK_TRAIN_FRACTION,
};
use dyted::graph::{
    generate_planted, load_edge_list, write_edge_list, DynamicGraph, LabelTable, PlantedConfig,
};
use dyted::sampler::verify_proposition;
use dyted::train::{extract_representations, load_checkpoint, save_checkpoint, train, TrainConfig};
use dyted::Error;

#[derive(Parser)]
#[command(name = "dyted", version, about = "Disentangled dynamic-graph representation learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a planted dynamic graph with static and per-snapshot labels.
    Generate(GenerateArgs),
    /// Train the disentangled model; writes history.csv and checkpoint.txt.
    Train(TrainArgs),
    /// Compute S and D from a checkpoint; writes a representation directory.
    Extract(ExtractArgs),
    /// Score a representation directory on a downstream task.
    Eval(EvalArgs),
    /// Enumerate clip-pair overlap ratios and check their monotonicity.
    SamplerVerify(VerifyArgs),
    /// Retrain and evaluate over a grid of noise rates or probe settings.
    Sweep(SweepArgs),
}

/// Where the dynamic graph comes from. Without `--graph`, a planted graph is
/// drawn from `--planted` (or the default planted config).
#[derive(Args, Clone)]
struct GraphArgs {
    /// Edge list with `src dst t` lines, t 1-based.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Snapshot count of `--graph`; defaults to the file's `snapshots=` header
    /// or else its largest t.
    #[arg(long)]
    snapshots: Option<usize>,
    /// Label file (`node label` or `node t label`) for classification tasks.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Planted-graph config used when `--graph` is absent.
    #[arg(long)]
    planted: Option<PathBuf>,
    /// Drop the final snapshot, keeping it as a link-prediction target.
    #[arg(long)]
    holdout_last: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    snapshots: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    source: GraphArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Checkpoint written by `train`; defaults to `<out>/checkpoint.txt`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Representations go to `<out>/reps`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    source: GraphArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    /// Next-snapshot link prediction.
    Link,
    /// Node classification with static labels.
    Static,
    /// Classification of (node, snapshot) samples with per-snapshot labels.
    Dynamic,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    task: Task,
    /// Representation directory written by `extract`.
    #[arg(long)]
    reps: PathBuf,
    /// Comma-separated variants; `all` picks every variant the set supports.
    #[arg(long, default_value = "combine")]
    variant: String,
    /// Seed of the downstream split and classifier.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    source: GraphArgs,
    /// Hidden width of the classification probe (0 is linear).
    #[arg(long, default_value_t = 0)]
    hidden: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated α values in (0, 1].
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75, 1.0])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    lmin: usize,
    #[arg(long, default_value_t = 20)]
    lmax: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    kind: String,
    /// Comma-separated grid points; may be empty.
    #[arg(long, default_value = "")]
    grid: String,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    /// Training config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Planted-graph config.
    #[arg(long)]
    planted: Option<PathBuf>,
    /// Offset added to every entry of `--seeds`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> dyted::Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Extract(a) => extract(a),
        Command::Eval(a) => eval(a),
        Command::SamplerVerify(a) => sampler_verify(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn create(path: &Path) -> dyted::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn planted_config(path: Option<&Path>) -> dyted::Result<PlantedConfig> {
    path.map_or_else(|| Ok(PlantedConfig::default()), PlantedConfig::read)
}

fn train_config(path: Option<&Path>) -> dyted::Result<TrainConfig> {
    path.map_or_else(|| Ok(TrainConfig::default()), TrainConfig::read)
}

/// Snapshot count from a `# ... snapshots=T` header, else the largest
/// snapshot index in the file.
fn snapshot_count(text: &str) -> usize {
    let header = text
        .lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace)
        .find_map(|tok| tok.strip_prefix("snapshots=")?.parse::<usize>().ok());
    if let Some(t) = header {
        return t;
    }
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_whitespace().nth(2)?.parse::<usize>().ok())
        .max()
        .unwrap_or(0)
}

struct Loaded {
    graph: DynamicGraph,
    static_labels: Option<LabelTable>,
    dynamic_labels: Option<LabelTable>,
}

fn load_graph(src: &GraphArgs) -> dyted::Result<Loaded> {
    let mut loaded = match &src.graph {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let t = src.snapshots.unwrap_or_else(|| snapshot_count(&text));
            if t == 0 {
                return Err(Error::Config(format!("{} has no edges; pass --snapshots", path.display())));
            }
            Loaded {
                graph: load_edge_list(text.as_bytes(), t)?,
                static_labels: None,
                dynamic_labels: None,
            }
        }
        None => {
            let p = generate_planted(&planted_config(src.planted.as_deref())?)?;
            Loaded {
                graph: p.graph,
                static_labels: Some(p.static_labels),
                dynamic_labels: Some(p.dynamic_labels),
            }
        }
    };
    if let Some(path) = &src.labels {
        let table = LabelTable::read(File::open(path)?)?;
        match table.kind() {
            dyted::graph::LabelKind::Static => loaded.static_labels = Some(table),
            dyted::graph::LabelKind::PerSnapshot => loaded.dynamic_labels = Some(table),
        }
    }
    if src.holdout_last {
        if loaded.graph.len() < 2 {
            return Err(Error::Config("--holdout-last needs at least 2 snapshots".into()));
        }
        loaded.graph = loaded.graph.prefix(loaded.graph.len() - 1);
    }
    Ok(loaded)
}

fn generate(a: GenerateArgs) -> dyted::Result<()> {
    let mut cfg = planted_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.nodes {
        cfg.node_count = n;
    }
    if let Some(t) = a.snapshots {
        cfg.snapshots = t;
    }
    let p = generate_planted(&cfg)?;
    write_edge_list(&p.graph, create(&a.out.join("edges.txt"))?)?;
    p.static_labels.write(create(&a.out.join("static_labels.txt"))?)?;
    p.dynamic_labels.write(create(&a.out.join("dynamic_labels.txt"))?)?;
    fs::write(a.out.join("planted.toml"), cfg.to_toml())?;
    println!(
        "generated nodes={} snapshots={} edges={} out={}",
        p.graph.node_count(),
        p.graph.len(),
        p.graph.total_edges(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> dyted::Result<()> {
    let mut cfg = train_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(d) = a.d {
        cfg.d = d;
    }
    if let Some(l) = a.lambda1 {
        cfg.lambda1 = l;
    }
    if let Some(l) = a.lambda2 {
        cfg.lambda2 = l;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    cfg.validate()?;
    let loaded = load_graph(&a.source)?;
    let (model, history) = train(&cfg, &loaded.graph)?;
    fs::create_dir_all(&a.out)?;
    history.write_csv(create(&a.out.join("history.csv"))?)?;
    save_checkpoint(&model, a.out.join("checkpoint.txt"))?;
    fs::write(a.out.join("config.toml"), cfg.to_toml())?;
    let last = history.rows.last();
    println!(
        "trained epochs={} final_total={} alpha={:.6} out={}",
        history.rows.len(),
        last.map_or(f64::NAN, |r| r.total),
        model.alpha(),
        a.out.display()
    );
    Ok(())
}

fn extract(a: ExtractArgs) -> dyted::Result<()> {
    let ckpt = a.checkpoint.unwrap_or_else(|| a.out.join("checkpoint.txt"));
    let model = load_checkpoint(&ckpt)?;
    let loaded = load_graph(&a.source)?;
    let reps = extract_representations(&model, &loaded.graph)?;
    let dir = a.out.join("reps");
    reps.save(&dir)?;
    println!(
        "extracted nodes={} snapshots={} stored_per_node={} out={}",
        reps.node_count(),
        reps.t_count(),
        reps.stored_per_node(),
        dir.display()
    );
    Ok(())
}

fn variants(spec: &str, reps: &RepresentationSet) -> dyted::Result<Vec<Variant>> {
    if spec == "all" {
        return Ok(if reps.s.is_some() {
            vec![Variant::Combine, Variant::TimeInvariant, Variant::TimeVarying, Variant::Pooled]
        } else {
            vec![Variant::Baseline, Variant::Pooled]
        });
    }
    spec.split(',').map(|v| v.trim().parse()).collect()
}

fn eval(a: EvalArgs) -> dyted::Result<()> {
    let reps = RepresentationSet::load(&a.reps)?;
    let loaded = load_graph(&a.source)?;
    let mut rows = Vec::new();
    let row = |task: &str, variant: Variant, metric: &str, value: f64| EvalRow {
        task: task.to_string(),
        variant: variant.name().to_string(),
        seed: a.seed,
        metric: metric.to_string(),
        value,
    };
    for variant in variants(&a.variant, &reps)? {
        match a.task {
            Task::Link => {
                // Predict the snapshot right after the last one the
                // representations cover, or the last one if they cover all.
                let target = reps.t_count().min(loaded.graph.len() - 1);
                if target == 0 {
                    return Err(Error::Contract("link prediction needs two snapshots".into()));
                }
                let x = features(&reps, variant, target - 1)?;
                let s = eval_link_prediction(
                    &x,
                    loaded.graph.snapshot(target),
                    LINK_TRAIN_FRACTION,
                    a.seed,
                )?;
                rows.push(row("link", variant, "auc", s.auc));
                rows.push(row("link", variant, "ap", s.ap));
            }
            Task::Static | Task::Dynamic => {
                let (name, labels) = if matches!(a.task, Task::Static) {
                    ("static", loaded.static_labels.as_ref())
                } else {
                    ("dynamic", loaded.dynamic_labels.as_ref())
                };
                let labels = labels
                    .ok_or_else(|| Error::Config(format!("{name} task needs --labels")))?;
                let (x, y) = classification_samples(&reps, labels, variant)?;
                let opts = ProbeOptions {
                    hidden: a.hidden,
                    ..Default::default()
                };
                let f1 = eval_node_classification(&x, &y, opts, a.seed)?;
                rows.push(row(name, variant, "micro-f1", f1.micro));
                rows.push(row(name, variant, "macro-f1", f1.macro_));
            }
        }
    }
    let path = a.out.join("eval.csv");
    write_rows(&rows, create(&path)?)?;
    for r in &rows {
        println!("{} {} {}={:.4}", r.task, r.variant, r.metric, r.value);
    }
    Ok(())
}

fn sampler_verify(a: VerifyArgs) -> dyted::Result<()> {
    if a.lmin > a.lmax {
        return Err(Error::Config(format!("--lmin {} exceeds --lmax {}", a.lmin, a.lmax)));
    }
    let report = verify_proposition(&a.alpha, a.lmin..=a.lmax)?;
    let path = a.out.join("proposition.csv");
    let mut w = create(&path)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let violations = report.violations().count();
    println!(
        "rows={} violations={violations} max_closed_form_gap={:.3e} out={}",
        report.rows.len(),
        report.max_closed_form_gap(),
        path.display()
    );
    if violations > 0 {
        return Err(Error::Contract(format!("{violations} rows violate the ratio bounds")));
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> dyted::Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<T>()
                .map_err(|_| Error::Config(format!("bad {what} entry `{x}`")))
        })
        .collect()
}

fn sweep(a: SweepArgs) -> dyted::Result<()> {
    let mut train = train_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        train.epochs = e;
    }
    let spec = SweepSpec {
        kind: a.kind.parse::<SweepKind>()?,
        grid: parse_list(&a.grid, "grid")?,
        seeds: parse_list::<u64>(&a.seeds, "seed")?
            .into_iter()
            .map(|s| s + a.seed)
            .collect(),
        planted: planted_config(a.planted.as_deref())?,
        train,
    };
    let rows = run_sweep(&spec)?;
    let path = a.out.join("sweep.csv");
    write_rows(&rows, create(&path)?)?;
    println!("sweep kind={} rows={} out={}", spec.kind, rows.len(), path.display());
    Ok(())
}
