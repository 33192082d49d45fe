//! Command-line front end for layer comparison.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use layersim::sampling::{generate_lhs, generate_uniform, load_samples, save_samples, solve_min_samples, VcQuery};
use layersim::signatures::{classify_neurons, network_layer_signatures, SignatureMatrix};
use layersim::sketching::{build_hash_family, required_hashes, resolution_warning, sketch_layer, LayerSketches};
use layersim::{canonicalize_network, compare_layers_with, load_network, run_replication, save_network};
use layersim::{Network, ReplicationConfig};

#[derive(Parser)]
#[command(name = "layersim", version, about = "Functional comparison of ReLU network layers")]
struct Cli {
    /// Worker threads (defaults to one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleStrategy {
    Uniform,
    Lhs,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum probe sample size from the VC bound
    SampleSize {
        #[arg(long)]
        din: usize,
        #[arg(long)]
        neurons: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Number of MinHash functions separating distances `delta` apart with failure probability `alpha`
    HashCount {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
        /// Probe sample size, used to warn when `delta` is below its resolution
        #[arg(long)]
        n: Option<usize>,
    },
    /// Generate a probe sample as CSV
    GenSample {
        #[arg(long, value_enum)]
        strategy: SampleStrategy,
        #[arg(long)]
        n: usize,
        /// Per-dimension bounds, e.g. -10:10,-10:10
        #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
        bounds: Bounds,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// L2-canonicalize every hidden layer of a network
    Canonize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-layer scale factors as JSON
        #[arg(long)]
        scales: Option<PathBuf>,
    },
    /// Activation signatures of one layer on a probe sample
    Signatures {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// MinHash sketches of the representative neurons in a signature file
    Sketch {
        #[arg(long)]
        signatures: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare one layer of two networks
    Compare {
        #[arg(long)]
        net_a: PathBuf,
        #[arg(long)]
        net_b: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 512)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also run the exact-Jaccard reference path
        #[arg(long)]
        exact: bool,
    },
    /// Train two ellipse classifiers and compare their hidden layers
    Replicate {
        #[arg(long)]
        seed_a: u64,
        #[arg(long)]
        seed_b: u64,
        #[arg(long, default_value_t = 16_000)]
        n: usize,
        #[arg(long, default_value_t = 512)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone)]
struct Bounds(Vec<(f64, f64)>);

fn parse_bounds(text: &str) -> Result<Bounds, String> {
    text.split(',')
        .map(|pair| {
            let (lo, hi) = pair
                .split_once(':')
                .ok_or_else(|| format!("expected low:high, got {pair:?}"))?;
            let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
            let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
            Ok((lo, hi))
        })
        .collect::<Result<_, _>>()
        .map(Bounds)
}

fn write_text(path: &Path, text: &str) -> layersim::Result<()> {
    std::fs::write(path, text).map_err(|source| layersim::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_error(e: serde_json::Error) -> layersim::Error {
    layersim::Error::Parse(e.to_string())
}

/// `report.json` → `report.<suffix>.json`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.json"))
}

fn run(command: Command) -> layersim::Result<()> {
    match command {
        Command::SampleSize { din, neurons, eps, delta } => {
            let n = solve_min_samples(&VcQuery::new(din, neurons, eps, delta)?)?;
            println!("{n}");
        }
        Command::HashCount { alpha, delta, n } => {
            println!("{}", required_hashes(alpha, delta)?);
            if let Some(warning) = n.and_then(|n| resolution_warning(delta, n)) {
                eprintln!("warning: {warning}");
            }
        }
        Command::GenSample { strategy, n, bounds, seed, out } => {
            let samples = match strategy {
                SampleStrategy::Uniform => generate_uniform(n, &bounds.0, seed)?,
                SampleStrategy::Lhs => generate_lhs(n, &bounds.0, seed)?,
            };
            save_samples(&samples, &out)?;
        }
        Command::Canonize { input, out, scales } => {
            let net: Network = load_network(&input)?;
            let (canon, factors) = canonicalize_network(&net)?;
            save_network(&canon, &out)?;
            if let Some(path) = scales {
                write_text(&path, &(serde_json::to_string_pretty(&factors).map_err(json_error)? + "\n"))?;
            }
        }
        Command::Signatures { net, layer, samples, out } => {
            let net: Network = load_network(&net)?;
            let samples = load_samples(&samples)?;
            let (canon, _) = canonicalize_network(&net)?;
            network_layer_signatures(&canon, layer, &samples)?.save(&out)?;
        }
        Command::Sketch { signatures, k, seed, out } => {
            let m = SignatureMatrix::load(&signatures)?;
            let family = build_hash_family(k, seed)?;
            let sketches: LayerSketches = sketch_layer(&m, &classify_neurons(&m), &family)?;
            sketches.save(&out)?;
        }
        Command::Compare {
            net_a,
            net_b,
            layer,
            samples,
            k,
            seed,
            out,
            exact,
        } => {
            let a: Network = load_network(&net_a)?;
            let b: Network = load_network(&net_b)?;
            let samples = load_samples(&samples)?;
            let family = build_hash_family(k, seed)?;
            let report = compare_layers_with(&a, &b, layer, &samples, &family, exact)?;
            write_text(&out, &(report.to_json_pretty()? + "\n"))?;
            println!("{}", report.layer_distance);
        }
        Command::Replicate { seed_a, seed_b, n, k, out } => {
            let config = ReplicationConfig {
                n_samples: n,
                k,
                ..ReplicationConfig::new(seed_a, seed_b)
            };
            let rep = run_replication(&config)?;
            write_text(&out, &(serde_json::to_string_pretty(&rep.report).map_err(json_error)? + "\n"))?;
            save_network(&rep.model_a.network, sibling(&out, "net_a"))?;
            save_network(&rep.model_b.network, sibling(&out, "net_b"))?;
            println!("{}", rep.report.comparison.layer_distance);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
