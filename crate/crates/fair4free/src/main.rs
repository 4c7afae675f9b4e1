use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fair4free::config::PipelineConfig;
use fair4free::pipeline::{self, summary_header, summary_row, Evaluation};
use fair4free::{exit_code, io, plot};
use fair4free_core::distill::Pairing;

/// Fair synthetic tabular data: train a fairness-penalized VAE teacher,
/// distill its latent distribution into a noise-fed student, generate
/// records and evaluate them.
///
/// Any configuration value can be overridden with a dotted flag such as
/// `--teacher.epochs=50` or `--generate.n_samples=1000`.
#[derive(Debug, Parser)]
#[command(name = "fair4free", version)]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset CSV, used when no --config is given.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Schema JSON, used when no --config is given.
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Sets every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Distance covariance penalty weight, 0 to 9.
    #[arg(long, global = true)]
    beta: Option<u8>,
    #[arg(long, global = true, value_enum)]
    pairing: Option<PairingArg>,
    /// Suppress per-epoch progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PairingArg {
    Direct,
    Sorted,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and encode the dataset and write the train/test split.
    Prepare,
    /// Train the teacher on the prepared train split.
    TrainTeacher,
    /// Distill the teacher's latent distribution into a student.
    Distill,
    /// Generate synthetic records from the student and the teacher decoder.
    Generate,
    /// Score synthetic and real-trained classifiers on the real test split.
    Evaluate,
    /// Project teacher and student latents onto two principal components.
    PlotPca {
        /// Points per set.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Also write an SVG scatter plot.
        #[arg(long)]
        svg: bool,
    },
    /// Run every stage and print a summary table.
    Pipeline {
        /// Run once per penalty weight 0..=9 on a shared split.
        #[arg(long)]
        beta_sweep: bool,
    },
}

/// Pulls `--section.key=value` overrides out of the argument list.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let (overrides, rest): (Vec<String>, Vec<String>) = args.into_iter().partition(|a| {
        a.strip_prefix("--").and_then(|s| s.split_once('=')).is_some_and(|(k, _)| k.contains('.'))
    });
    (rest, overrides.into_iter().map(|a| a[2..].to_string()).collect())
}

fn resolve_config(cli: &Cli, overrides: &[String]) -> Result<PipelineConfig> {
    let mut cfg = match (&cli.config, &cli.dataset, &cli.schema) {
        (Some(path), _, _) => PipelineConfig::load(path)?,
        (None, Some(d), Some(s)) => PipelineConfig::new(d, s),
        _ => bail!("pass --config, or both --dataset and --schema"),
    };
    if let Some(d) = &cli.dataset {
        cfg.dataset.path = d.clone();
    }
    if let Some(s) = &cli.schema {
        cfg.dataset.schema_path = s.clone();
    }
    for o in overrides {
        cfg.apply_override(o)?;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(beta) = cli.beta {
        cfg.teacher.beta = beta;
    }
    if let Some(p) = cli.pairing {
        cfg.distill.pairing = match p {
            PairingArg::Direct => Pairing::Direct,
            PairingArg::Sorted => Pairing::Sorted,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(rows: &[(String, &Evaluation)]) {
    println!("{}", summary_header("run"));
    if let Some((_, first)) = rows.first() {
        println!("{}", summary_row("original", &first.real));
    }
    for (label, ev) in rows {
        println!("{}", summary_row(label, &ev.synthetic));
    }
}

fn run(cli: &Cli, cfg: &PipelineConfig) -> Result<()> {
    let verbose = !cli.quiet;
    match &cli.command {
        Command::Prepare => {
            let p = pipeline::prepare(cfg)?;
            eprintln!("prepared {} train and {} test rows", p.train.len(), p.test.len());
        }
        Command::TrainTeacher => {
            let prep = pipeline::load_prepared(cfg)?;
            pipeline::train_teacher(cfg, &prep, |r| {
                if verbose {
                    eprintln!("epoch {:>5}: kl {:.4} nll {:.4} dcov2 {:.5} total {:.4}", r.epoch, r.kl, r.nll, r.dcov2, r.total);
                }
            })?;
        }
        Command::Distill => {
            let prep = pipeline::load_prepared(cfg)?;
            let teacher = pipeline::load_teacher(cfg, &prep)?;
            let every = (cfg.distill.epochs / 20).max(1);
            pipeline::distill(cfg, &prep, &teacher, |r| {
                if verbose && (r.epoch == 1 || r.epoch % every == 0) {
                    eprintln!("epoch {:>5}: l1 {:.4} kl {:.4} total {:.4}", r.epoch, r.distillation, r.kl, r.total);
                }
            })?;
        }
        Command::Generate => {
            let prep = pipeline::load_prepared(cfg)?;
            let teacher = pipeline::load_teacher(cfg, &prep)?;
            let student = pipeline::load_student(cfg, &prep)?;
            let synth = pipeline::generate_synthetic(cfg, &prep, &teacher, &student)?;
            eprintln!("generated {} records", synth.len());
        }
        Command::Evaluate => {
            let prep = pipeline::load_prepared(cfg)?;
            let synth = pipeline::load_synthetic(cfg, &prep)?;
            let ev = pipeline::evaluate(cfg, &prep, &synth)?;
            print_summary(&[(format!("beta={}", cfg.teacher.beta), &ev)]);
        }
        Command::PlotPca { n, svg } => {
            let prep = pipeline::load_prepared(cfg)?;
            let teacher = pipeline::load_teacher(cfg, &prep)?;
            let student = pipeline::load_student(cfg, &prep)?;
            let overlap = plot::latent_overlap(&prep, &teacher, &student, *n, cfg.generate.seed)?;
            let dir = cfg.output_dir.join("pca");
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let labels = ["teacher", "student"];
            plot::write_csv(&dir.join("pca.csv"), labels, &overlap.projection)?;
            if *svg {
                plot::write_svg(&dir.join("pca.svg"), labels, &overlap.projection)?;
            }
            io::write_json(
                &dir.join("summary.json"),
                &serde_json::json!({
                    "energy_distance": overlap.energy_distance,
                    "explained_variance": overlap.projection.explained_variance,
                    "points_per_set": n,
                }),
            )?;
            println!("energy distance {:.6}", overlap.energy_distance);
        }
        Command::Pipeline { beta_sweep: false } => {
            let ev = pipeline::run_all(cfg, verbose)?;
            print_summary(&[(format!("beta={}", cfg.teacher.beta), &ev)]);
        }
        Command::Pipeline { beta_sweep: true } => {
            let prep = pipeline::prepare(cfg)?;
            let mut results = Vec::new();
            for beta in 0..=9u8 {
                let mut c = cfg.clone();
                c.teacher.beta = beta;
                c.output_dir = cfg.output_dir.join(format!("beta{beta}"));
                if verbose {
                    eprintln!("== beta {beta} ==");
                }
                results.push((format!("beta={beta}"), pipeline::run_from_prepared(&c, &prep, verbose)?));
            }
            let rows: Vec<(String, &Evaluation)> = results.iter().map(|(l, e)| (l.clone(), e)).collect();
            print_summary(&rows);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    fair4free::parallel::init_thread_pool();
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = resolve_config(&cli, &overrides).and_then(|cfg| run(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
