use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use ccgc::augment::MaskMode;
use ccgc::clustering::ClusterState;
use ccgc::error::{CcgcError, Result};
use ccgc::grad::{finite_diff_check, Objective};
use ccgc::graph::{load_dataset, make_sbm, save_dataset, SbmSpec};
use ccgc::losses::PairMode;
use ccgc::metrics::evaluate;
use ccgc::model::{forward, init_params, Activation, ModelSpec};
use ccgc::tensor::DenseMatrix;
use ccgc::trainer::{
    ablation_table, parse_seeds, parse_sweep, run_seeds, run_seeds_with, sweep_summary_csv,
    RunReport, TrainConfig, Variant,
};

#[derive(Parser)]
#[command(name = "ccgc", version, about = "Cluster-guided contrastive graph clustering")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a dataset bundle and write a JSON report.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        train: TrainArgs,
        /// Report path.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Write the fused embedding as CSV (one file per seed when several).
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Score a predicted labeling against ground truth.
    Eval {
        /// One integer label per line.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run ablation variants and write a comparison table.
    Ablate {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated variants; defaults to all seven.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, default_value = "ablation")]
        out_dir: PathBuf,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// Number of random instances.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        /// Fail when the max relative error exceeds this.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Print dataset statistics as JSON.
    Stats {
        #[command(flatten)]
        data: DataArg,
    },
    /// Sweep tau or alpha and write one report per grid point plus summary.csv.
    Sweep {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        train: TrainArgs,
        /// Grid such as `tau=0.3,0.5,0.6,0.7,0.9` or `alpha=0.1,1,10`.
        #[arg(long)]
        sweep: String,
        #[arg(long, default_value = "sweep")]
        out_dir: PathBuf,
    },
    /// Write a stochastic-block-model dataset bundle.
    MakeSbm {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "30,30")]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 0.9)]
        p_in: f64,
        #[arg(long, default_value_t = 0.05)]
        p_out: f64,
        #[arg(long, default_value_t = 16)]
        feature_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
}

#[derive(Args)]
struct DataArg {
    /// Dataset bundle directory (features.csv, edges.tsv, labels.txt, meta.json).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Training flags. Unset flags fall back to `--config`, then to defaults.
#[derive(Args, Default)]
struct TrainArgs {
    /// JSON TrainConfig; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds: `3`, `0,2,5` or the inclusive range `0..9`. Default 0.
    #[arg(long)]
    seeds: Option<String>,
    /// Training epochs. Default 400.
    #[arg(long)]
    epochs: Option<usize>,
    /// Epochs with every node selected. Default epochs/4.
    #[arg(long)]
    stage1_epochs: Option<usize>,
    /// Fraction of nodes kept as high-confidence, in (0, 1]. Default 0.6.
    #[arg(long)]
    tau: Option<f64>,
    /// Weight of the negative term. Default 1.0.
    #[arg(long)]
    alpha: Option<f64>,
    /// Smoothing filter applications. Default 2.
    #[arg(long)]
    filter_layers: Option<usize>,
    /// Layer widths, comma-separated. Default 500.
    #[arg(long, value_delimiter = ',')]
    hidden_dims: Option<Vec<usize>>,
    /// Default linear.
    #[arg(long, value_enum)]
    activation: Option<Activation>,
    /// Bias terms in the encoder layers. Default off.
    #[arg(long, value_enum)]
    bias: Option<Switch>,
    /// Number of clusters. Default: the dataset's class count.
    #[arg(long)]
    k: Option<usize>,
    /// Lloyd iterations per K-means call. Default 300.
    #[arg(long)]
    kmeans_iters: Option<usize>,
    /// K-means center-shift tolerance. Default 1e-6.
    #[arg(long)]
    kmeans_tol: Option<f64>,
    /// K-means restarts inside the training loop. Default 1.
    #[arg(long)]
    kmeans_restarts: Option<usize>,
    /// Restarts of the final K-means. Default 10.
    #[arg(long)]
    final_restarts: Option<usize>,
    /// Re-cluster every n epochs. Default 1.
    #[arg(long)]
    kmeans_every: Option<usize>,
    /// Positive pairs. Default eq9 (same node, both views).
    #[arg(long, value_enum)]
    pair_mode: Option<PairMode>,
    /// Stop gradients through the high-confidence centers.
    #[arg(long)]
    detach_centers: bool,
    /// Adam learning rate. Default 1e-3.
    #[arg(long)]
    lr: Option<f64>,
    /// Default 0.9.
    #[arg(long)]
    beta1: Option<f64>,
    /// Default 0.999.
    #[arg(long)]
    beta2: Option<f64>,
    /// Default 1e-8.
    #[arg(long)]
    adam_eps: Option<f64>,
    /// Decoupled weight decay. Default 0.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Global gradient-norm clip. Default none.
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Model variant. Default full.
    #[arg(long, value_enum)]
    ablation: Option<Variant>,
    /// Edge drop/add or feature mask rate. Default 0.2.
    #[arg(long)]
    aug_rate: Option<f64>,
    /// Diffusion teleport probability. Default 0.2.
    #[arg(long)]
    teleport: Option<f64>,
    /// Default column.
    #[arg(long, value_enum)]
    mask_mode: Option<MaskMode>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| CcgcError::Io {
                    path: p.clone(),
                    source,
                })?;
                serde_json::from_str(&text)?
            }
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        if let Some(s) = &self.seeds {
            c.seeds = parse_seeds(s)?;
        }
        set!(c.epochs, self.epochs);
        if self.stage1_epochs.is_some() {
            c.stage1_epochs = self.stage1_epochs;
        }
        set!(c.tau, self.tau);
        set!(c.alpha, self.alpha);
        set!(c.filter_layers, self.filter_layers);
        set!(c.model.hidden_dims, self.hidden_dims.clone());
        set!(c.model.activation, self.activation);
        if let Some(b) = self.bias {
            c.model.bias = matches!(b, Switch::On);
        }
        if self.k.is_some() {
            c.k = self.k;
        }
        set!(c.kmeans.max_iter, self.kmeans_iters);
        set!(c.kmeans.tol, self.kmeans_tol);
        set!(c.kmeans.restarts, self.kmeans_restarts);
        set!(c.final_restarts, self.final_restarts);
        set!(c.kmeans_every, self.kmeans_every);
        set!(c.pair_mode, self.pair_mode);
        c.detach_centers |= self.detach_centers;
        set!(c.adam.lr, self.lr);
        set!(c.adam.beta1, self.beta1);
        set!(c.adam.beta2, self.beta2);
        set!(c.adam.eps, self.adam_eps);
        set!(c.adam.weight_decay, self.weight_decay);
        if self.clip_norm.is_some() {
            c.adam.clip_norm = self.clip_norm;
        }
        set!(c.ablation, self.ablation);
        set!(c.aug_rate, self.aug_rate);
        set!(c.teleport, self.teleport);
        set!(c.mask_mode, self.mask_mode);
        c.validate()?;
        Ok(c)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CcgcError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CcgcError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn matrix_csv(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 20);
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|source| CcgcError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut labels = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        for (col, tok) in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).enumerate() {
            labels.push(tok.parse().map_err(|_| CcgcError::Parse {
                file: path.display().to_string(),
                line: line_no + 1,
                column: col + 1,
                message: format!("`{tok}` is not a non-negative integer label"),
            })?);
        }
    }
    Ok(labels)
}

/// Writes the report; `false` when some seed failed.
fn finish(report: &RunReport, out: &Path) -> Result<bool> {
    write(out, &report.to_json()?)?;
    info!("wrote {}", out.display());
    for f in &report.failures {
        eprintln!("error: seed {} failed: {} (partial report written)", f.seed, f.error);
    }
    Ok(report.failures.is_empty())
}

fn embedding_path(base: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("embeddings");
    base.with_file_name(format!("{stem}_seed{seed}.csv"))
}

fn print_aggregate(report: &RunReport) {
    if let Some(a) = &report.aggregate {
        println!(
            "{} ACC {} NMI {} ARI {} F1 {}",
            report.variant.name(),
            a.acc.percent_cell(),
            a.nmi.percent_cell(),
            a.ari.percent_cell(),
            a.f1.percent_cell()
        );
    }
}

fn gradcheck(instances: usize, seed: u64, epsilon: f64, tolerance: f64) -> Result<bool> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let n = rng.random_range(6..=20);
        let d_in = rng.random_range(2..=10);
        let d_out = rng.random_range(2..=4);
        let k = rng.random_range(2..=3);
        let x = DenseMatrix::new(n, d_in, (0..n * d_in).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let spec = ModelSpec {
            hidden_dims: vec![d_out],
            ..ModelSpec::default()
        };
        let params = init_params(rng.random(), d_in, &spec)?;
        let v = forward(&params, &x)?;
        let e = ccgc::clustering::fuse(&v.e1, &v.e2)?;
        let tau = rng.random_range(0.3..=1.0);
        let st = ClusterState::compute(&e, k, tau, rng.random(), &Default::default())?;
        let obj = Objective {
            alpha: rng.random_range(0.0..2.0),
            ..Objective::default()
        };
        let c = finite_diff_check(&params, &x, &x, &st, &obj, epsilon)?;
        println!(
            "instance {i}: n={n} d_in={d_in} d_out={d_out} k={k} max_rel_err={:.3e} max_abs_err={:.3e} max_grad={:.3e}",
            c.max_rel_error, c.max_abs_error, c.max_abs_gradient
        );
        worst = worst.max(c.max_rel_error);
    }
    let pass = worst <= tolerance;
    println!("worst max_rel_err={worst:.3e} tolerance={tolerance:e} {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut ok = true;
    match cli.command {
        Command::Train {
            data,
            train,
            out,
            embeddings,
        } => {
            let cfg = train.resolve()?;
            let d = load_dataset(&data.data)?;
            let many = cfg.seeds.len() > 1;
            let (report, _) = run_seeds_with(&d, &cfg, |seed, t| {
                if let Some(base) = &embeddings {
                    let path = embedding_path(base, seed, many);
                    if let Err(e) = write(&path, &matrix_csv(&t.embedding)) {
                        log::error!("{e}");
                    }
                }
            })?;
            print_aggregate(&report);
            ok &= finish(&report, &out)?;
        }
        Command::Eval { pred, truth } => {
            let report = evaluate(&read_labels(&pred)?, &read_labels(&truth)?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Ablate {
            data,
            train,
            variants,
            out_dir,
        } => {
            let cfg = train.resolve()?;
            let variants = if variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                variants.iter().map(|v| Variant::parse(v)).collect::<Result<Vec<_>>>()?
            };
            let d = load_dataset(&data.data)?;
            let mut reports = Vec::new();
            for v in variants {
                let c = TrainConfig {
                    ablation: v,
                    ..cfg.clone()
                };
                let (report, _) = run_seeds(&d, &c)?;
                print_aggregate(&report);
                ok &= finish(&report, &out_dir.join(format!("{}.json", v.name())))?;
                reports.push(report);
            }
            let table = ablation_table(&reports);
            write(&out_dir.join("table.md"), &table)?;
            print!("{table}");
        }
        Command::Gradcheck {
            instances,
            seed,
            epsilon,
            tolerance,
        } => {
            ok = gradcheck(instances, seed, epsilon, tolerance)?;
        }
        Command::Stats { data } => {
            let d = load_dataset(&data.data)?;
            println!("{}", serde_json::to_string_pretty(&d.stats())?);
        }
        Command::Sweep {
            data,
            train,
            sweep,
            out_dir,
        } => {
            let cfg = train.resolve()?;
            let (param, values) = parse_sweep(&sweep)?;
            let d = load_dataset(&data.data)?;
            let mut points = Vec::new();
            for v in values {
                let mut c = cfg.clone();
                match param {
                    ccgc::trainer::SweepParam::Tau => c.tau = v,
                    ccgc::trainer::SweepParam::Alpha => c.alpha = v,
                }
                c.validate()?;
                let (report, _) = run_seeds(&d, &c)?;
                print!("{}={v}: ", param.name());
                print_aggregate(&report);
                ok &= finish(&report, &out_dir.join(format!("{}_{v}.json", param.name())))?;
                points.push((v, report));
            }
            write(&out_dir.join("summary.csv"), &sweep_summary_csv(param, &points))?;
        }
        Command::MakeSbm {
            out,
            seed,
            blocks,
            p_in,
            p_out,
            feature_dim,
            noise,
        } => {
            let spec = SbmSpec {
                seed,
                block_sizes: blocks,
                p_in,
                p_out,
                feature_dim,
                feature_noise: noise,
            };
            save_dataset(&make_sbm(&spec)?, &out)?;
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn init_threads() {
    if let Some(n) = std::env::var("CCGC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    init_threads();
    match run(cli) {
        Ok(code) => code,
        Err(CcgcError::InvalidArgument { name, message }) => {
            eprintln!("error: --{}: {message}", name.replace('_', "-"));
            ExitCode::from(2)
        }
        Err(CcgcError::UnknownVariant(v)) => {
            eprintln!("error: unknown variant `{v}`");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
