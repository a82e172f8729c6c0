use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use curls_whey::harness::report::{
    read_csv, summary_of_rows, summary_table, write_summary, write_summary_plot, CsvRow, RESULTS_CSV, SUMMARY_JSON,
};
use curls_whey::harness::sweep::{off_diagonal, read_sweep, write_sweep, write_sweep_plot, SWEEP_CSV};
use curls_whey::harness::{emit_report, run_matrix, run_sweep, verify_adversarials, AttackConfig, Zoo, ZooConfig};
use curls_whey::models::{Dataset, DatasetConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "cw", version, about = "Curls & Whey black-box attacks on a desk-scale model zoo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the built-in dataset and train the model zoo on it.
    TrainZoo {
        /// Writes OUT/data and OUT/zoo.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        lr: f64,
        /// Also train FGSM-hardened copies at this strength.
        #[arg(long)]
        adversarial_eps: Option<f64>,
        /// Per-pixel std of the class prototypes around the background.
        #[arg(long, default_value_t = DatasetConfig::default().prototype_spread)]
        spread: f64,
        /// Per-pixel std of the sample noise.
        #[arg(long, default_value_t = DatasetConfig::default().noise_std)]
        noise: f64,
    },
    /// Run every substitute against every target.
    Attack {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        zoo: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vary one parameter; statistics pool all images of the chosen cells.
    Sweep {
        /// One of T, s, bs, T0, T1, T2, delta, eps0.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        zoo: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Substitute of a single cell; with neither this nor --target, every
        /// off-diagonal cell is used.
        #[arg(long, requires = "target")]
        sub: Option<String>,
        #[arg(long, requires = "sub")]
        target: Option<String>,
    },
    /// Recompute summaries and plots from a results directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also reload every stored adversarial and check it against this zoo.
        #[arg(long)]
        zoo: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<AttackConfig> {
    match path {
        Some(p) => AttackConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(AttackConfig::default()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::TrainZoo { out, seed, epochs, lr, adversarial_eps, spread, noise } => {
            let dataset = Dataset::generate(&DatasetConfig {
                seed,
                prototype_spread: spread,
                noise_std: noise,
                ..Default::default()
            });
            dataset.save(out.join("data"))?;
            let cfg =
                ZooConfig { train: TrainConfig { epochs, learning_rate: lr }, adversarial_eps, ..Default::default() };
            let zoo = Zoo::train(&dataset, seed, &cfg)?;
            zoo.save(out.join("zoo"))?;
            for e in zoo.entries() {
                println!(
                    "{:<12} train {:.3}  test {:.3}",
                    e.record.id, e.record.train_accuracy, e.record.test_accuracy
                );
            }
        }
        Command::Attack { config, zoo, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let zoo = Zoo::load(&zoo)?;
            let dataset = Dataset::load(&data)?;
            let table = run_matrix(&zoo, &dataset, &cfg)?;
            emit_report(&table, &out)?;
            std::fs::write(out.join("config.toml"), cfg.to_toml())?;
            for r in table.results.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "{} {}->{} {}: {}",
                    r.image_id,
                    r.sub_model,
                    r.target_model,
                    r.method,
                    r.error.as_deref().unwrap_or("")
                );
            }
            print!("{}", summary_table(&table.summary()?));
        }
        Command::Sweep { param, values, config, zoo, data, out, sub, target } => {
            let cfg = load_config(config.as_deref())?;
            let zoo = Zoo::load(&zoo)?;
            let dataset = Dataset::load(&data)?;
            let pairs = match (&sub, &target) {
                (Some(s), Some(t)) => vec![(s.as_str(), t.as_str())],
                _ => off_diagonal(&zoo),
            };
            if pairs.is_empty() {
                bail!("the zoo needs at least two models for an off-diagonal sweep");
            }
            let sweep = run_sweep(&zoo, &dataset, &cfg, &param, &values, &pairs)?;
            write_sweep(&out, &sweep.points)?;
            for p in &sweep.points {
                println!(
                    "{}={:<8} {:<10} median {:.4}  average {:.4}  success {:.3}  queries {:.1}/{}",
                    p.param, p.value, p.method, p.median, p.average, p.success_rate, p.mean_queries, p.budget
                );
            }
        }
        Command::Report { input, zoo } => {
            let mut any = false;
            if input.join(RESULTS_CSV).exists() {
                any = true;
                let rows: Vec<CsvRow> = read_csv(&input.join(RESULTS_CSV))?;
                let summary = summary_of_rows(&rows)?;
                write_summary(&input.join(SUMMARY_JSON), &summary)?;
                write_summary_plot(&input, &summary)?;
                print!("{}", summary_table(&summary));
            }
            if input.join(SWEEP_CSV).exists() {
                any = true;
                let points = read_sweep(&input)?;
                write_sweep_plot(&input, &points)?;
                println!("{} sweep points plotted", points.len());
            }
            if !any {
                bail!("no {RESULTS_CSV} or {SWEEP_CSV} in {}", input.display());
            }
            if let Some(zoo) = zoo {
                let (checked, failures) = verify_adversarials(&input, &Zoo::load(&zoo)?)?;
                println!("{checked} stored adversarials checked, {} failed", failures.len());
                if !failures.is_empty() {
                    bail!("adversarials no longer fool their targets: {}", failures.join(", "));
                }
            }
        }
    }
    Ok(())
}
