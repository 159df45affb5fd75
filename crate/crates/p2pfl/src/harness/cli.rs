//! Command-line entry point.
//!
//! Subcommands: `run` executes a config and writes the metrics tables,
//! `validate` only parses, `compare` diffs two server tables, `plot`
//! renders one as SVG. Exit codes: 0 success, 2 configuration, 3 data,
//! 4 runtime.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::datasets::{load_cifar10, load_mnist, synth_blobs, Dataset};
use crate::error::{Error, Result};
use crate::federation::run_experiment;
use crate::harness::config::{load_config, DatasetChoice, RunConfig};
use crate::harness::plot::render_server_svg;
use crate::harness::tables::{
    compare_server_tables, emit_client_table, emit_client_table_wide, emit_compare_table,
    emit_server_table, parse_server_table,
};
use crate::privacy::closed_form_is_loose;
use crate::rng::{derive_seed, SeedStream};

/// Environment variable pointing at the dataset directory
/// (`<dir>/mnist/*`, `<dir>/cifar-10-batches-bin/*`). Defaults to `data`.
pub const DATA_DIR_ENV: &str = "P2PFL_DATA_DIR";

pub const MNIST_SUBDIR: &str = "mnist";
pub const CIFAR_SUBDIR: &str = "cifar-10-batches-bin";

#[derive(Debug, Parser)]
#[command(
    name = "p2pfl",
    version,
    about = "Deterministic peer-to-peer federated learning simulator with differential privacy"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Path to the run config (positional).
    #[arg(value_name = "CONFIG", required_unless_present = "config_flag")]
    config_pos: Option<PathBuf>,
    /// Path to the run config (flag form).
    #[arg(long = "config", value_name = "CONFIG", conflicts_with = "config_pos")]
    config_flag: Option<PathBuf>,
}

impl ConfigArg {
    fn path(&self) -> &Path {
        self.config_pos
            .as_deref()
            .or(self.config_flag.as_deref())
            .expect("clap enforces one config source")
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute a run and write the metrics tables.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config's master_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Keep only this fraction of every shard.
        #[arg(long)]
        subsample: Option<f64>,
        /// Also write the wide (paper-shaped) client table.
        #[arg(long)]
        wide: bool,
    },
    /// Parse and validate a config, then exit.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Per-round accuracy deltas between two server tables (B minus A).
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Write the comparison CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a server table as an SVG line chart.
    Plot {
        csv: PathBuf,
        /// Output SVG path (defaults to the input with an .svg extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses argv and runs; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage message; usage problems are
            // configuration problems
            let _ = e.print();
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::DatasetIo { path, .. } = &e {
                print_download_hint(path);
            }
            e.exit_code()
        }
    }
}

fn print_download_hint(path: &str) {
    if path.contains(MNIST_SUBDIR) {
        eprintln!(
            "hint: place the four uncompressed IDX files (train-images-idx3-ubyte, \
             train-labels-idx1-ubyte, t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte) \
             under ${DATA_DIR_ENV}/{MNIST_SUBDIR}/ — gunzip the archives from \
             https://ossci-datasets.s3.amazonaws.com/mnist/"
        );
    }
    if path.contains(CIFAR_SUBDIR) {
        eprintln!(
            "hint: place data_batch_1.bin..data_batch_5.bin and test_batch.bin under \
             ${DATA_DIR_ENV}/{CIFAR_SUBDIR}/ — extracted from \
             https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"
        );
    }
}

pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Loads (train, test) for the configured dataset. Synthetic test data
/// uses an independent seed stream and a fifth of the training size.
pub fn load_datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        DatasetChoice::Mnist => load_mnist(&data_dir().join(MNIST_SUBDIR)),
        DatasetChoice::Cifar10 => load_cifar10(&data_dir().join(CIFAR_SUBDIR)),
        DatasetChoice::Synth => {
            let s = cfg.synth;
            let seed = cfg.params.master_seed;
            let train = synth_blobs(s.n, s.dims, s.classes, derive_seed(seed, 0, 0, SeedStream::Synth))?;
            let test_n = (s.n / 5).max(s.classes);
            let test = synth_blobs(test_n, s.dims, s.classes, derive_seed(seed, 0, 1, SeedStream::Synth))?;
            Ok((train, test))
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Executes a loaded config and writes `clients.csv` / `server.csv`
/// (plus `clients_wide.csv` when asked) into the output directory.
pub fn execute_run(cfg: &RunConfig, wide: bool) -> Result<()> {
    let (train, test) = load_datasets(cfg)?;
    println!(
        "running {} · {} · {} rounds · {} nodes · seed {}",
        match cfg.params.mode {
            crate::federation::FederationMode::Centralized => "centralized",
            crate::federation::FederationMode::PeerToPeer => "peer_to_peer",
        },
        cfg.dataset.name(),
        cfg.params.rounds,
        cfg.params.graph.node_count(),
        cfg.params.master_seed,
    );
    let (records, experiment) = run_experiment(cfg.params.clone(), train, test)?;

    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| Error::Io {
        path: cfg.output_dir.display().to_string(),
        source,
    })?;
    let mut clients = Vec::new();
    emit_client_table(&records, &mut clients).expect("vec write");
    write_file(&cfg.output_dir.join("clients.csv"), &clients)?;
    let mut server = Vec::new();
    emit_server_table(&records, &mut server).expect("vec write");
    write_file(&cfg.output_dir.join("server.csv"), &server)?;
    if wide {
        let mut w = Vec::new();
        emit_client_table_wide(&records, &mut w).expect("vec write");
        write_file(&cfg.output_dir.join("clients_wide.csv"), &w)?;
    }

    for r in records
        .iter()
        .filter(|r| r.role == crate::federation::Role::Aggregator)
    {
        println!(
            "round {}: aggregator {} accuracy {:.4} loss {:.4}",
            r.round + 1,
            r.node,
            r.accuracy.unwrap_or(f64::NAN),
            r.loss.unwrap_or(f64::NAN),
        );
    }
    if let Some(dp) = &cfg.params.dp {
        let max_eps = (0..cfg.params.graph.node_count())
            .map(|n| experiment.ledger().epsilon_for(n, dp))
            .filter(|e| e.is_finite())
            .fold(0.0f64, f64::max);
        println!("max epsilon spent: {max_eps:.4} (delta {})", dp.delta);
        if closed_form_is_loose(max_eps) {
            eprintln!(
                "note: the closed-form Gaussian bound is loose for epsilon >= 1; \
                 treat the reported value as an upper estimate"
            );
        }
    }
    println!("tables written to {}", cfg.output_dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            subsample,
            wide,
        } => {
            let mut cfg = load_config(config.path())?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.params.master_seed = seed;
            }
            if let Some(f) = subsample {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!("--subsample {f} outside (0, 1]")));
                }
                cfg.params.subsample = Some(f);
            }
            execute_run(&cfg, wide)
        }
        Command::Validate { config } => {
            let cfg = load_config(config.path())?;
            println!(
                "ok: {} · {} · {} rounds · {} nodes · dp {}",
                cfg.dataset.name(),
                match cfg.params.mode {
                    crate::federation::FederationMode::Centralized => "centralized",
                    crate::federation::FederationMode::PeerToPeer => "peer_to_peer",
                },
                cfg.params.rounds,
                cfg.params.graph.node_count(),
                if cfg.params.dp.is_some() { "on" } else { "off" },
            );
            Ok(())
        }
        Command::Compare { run_a, run_b, out } => {
            let a = parse_server_table(&read_file(&run_a)?, &run_a.display().to_string())?;
            let b = parse_server_table(&read_file(&run_b)?, &run_b.display().to_string())?;
            let rows = compare_server_tables(&a, &b)?;
            let mut buf = Vec::new();
            emit_compare_table(&rows, &mut buf).expect("vec write");
            match out {
                Some(path) => write_file(&path, &buf)?,
                None => print!("{}", String::from_utf8(buf).expect("utf-8 table")),
            }
            Ok(())
        }
        Command::Plot { csv, out } => {
            let rows = parse_server_table(&read_file(&csv)?, &csv.display().to_string())?;
            if rows.is_empty() {
                return Err(Error::InvalidArgument("server table has no rows to plot".into()));
            }
            let title = csv
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let svg = render_server_svg(&rows, &title);
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            write_file(&out, svg.as_bytes())?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
