use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use guided_grpo::harness::{
    self, config::parse_fraction, emit_metrics, pooled_heatmap, reward_matrix, write_matrix_csv, ScheduleName,
    Table, TrainerConfig,
};
use guided_grpo::rollout::{write_rollouts, RolloutSpec};
use guided_grpo::tasks::{write_dataset, MAX_TIER};

#[derive(Parser)]
#[command(name = "guided-grpo", version, about = "Guided GRPO experiments on synthetic reasoning tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<TrainerConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainerConfig::from_file(path)?,
            None => TrainerConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("override {kv:?} is not KEY=VALUE"))?;
            cfg.set(k, v).with_context(|| format!("override {kv:?}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one training job.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory for metrics, checkpoint and the effective config.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Also write every rollout to rollouts.tsv.
        #[arg(long)]
        dump_rollouts: bool,
        /// Also export the training set to dataset.tsv.
        #[arg(long)]
        dump_dataset: bool,
    },
    /// Fixed-guidance grid over guidance ratio and length.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated ratios; fractions like 1/6 are accepted.
        #[arg(long, default_value = "1/6,3/6,5/6,1")]
        alphas: String,
        #[arg(long, default_value = "3,6,9,12")]
        ells: String,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Compare decay schedules at several starting lengths and ratios.
    ScheduleCompare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated ell0/alpha pairs.
        #[arg(long, default_value = "12/0.5,6/0.5")]
        settings: String,
        #[arg(long, default_value = "concave,linear,stepwise")]
        schedules: String,
        #[arg(long, default_value = "schedules.csv")]
        out: PathBuf,
    },
    /// Ordering and hard-sample filtering ablations.
    CurriculumAblate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
    },
    /// Rollout reward matrix of the base policy and its pooled summary.
    Heatmap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 20)]
        rows: usize,
        #[arg(long, default_value_t = 14)]
        cols: usize,
        #[arg(long, default_value_t = 2)]
        pool: usize,
        /// Prompt tier to roll out.
        #[arg(long, default_value_t = MAX_TIER)]
        tier: u8,
        /// Guidance length; defaults to the config's fixed `ell`.
        #[arg(long)]
        ell: Option<usize>,
        #[arg(long, default_value = "heatmap.csv")]
        out: PathBuf,
        /// Optional path for the unpooled matrix.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_table(table: &Table, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    for (row, col, err) in table.failures() {
        eprintln!("cell ({row}, {col}) failed: {err}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, out, dump_rollouts, dump_dataset } => {
            let cfg = cfg.load()?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            fs::write(out.join("config.txt"), cfg.to_kv())?;
            if dump_dataset {
                write_dataset(out.join("dataset.tsv"), &harness::training_set(&cfg)?)?;
            }
            let mut dump = if dump_rollouts { Some(create(&out.join("rollouts.tsv"))?) } else { None };
            let result = harness::train_with(&cfg, |rec| {
                if let Some(w) = dump.as_mut() {
                    write_rollouts(w, rec.groups).map_err(|e| guided_grpo::Error::Io {
                        path: "rollouts.tsv".into(),
                        source: e,
                    })?;
                }
                Ok(())
            })?;
            if let Some(mut w) = dump {
                w.flush()?;
            }
            emit_metrics(&result.metrics, out.join("metrics.csv"))?;
            result.policy.write_checkpoint(out.join("policy.ckpt"))?;
            println!("steps={} final_window_reward={:.4}", result.metrics.len(), result.final_window_reward());
            if let Some(ev) = &result.eval {
                let tiers: Vec<String> =
                    ev.per_tier.iter().map(|t| format!("t{}={:.3}", t.tier, t.accuracy())).collect();
                println!("held_out_accuracy={:.4} {}", ev.accuracy, tiers.join(" "));
            }
        }
        Command::Sweep { cfg, alphas, ells, out } => {
            let cfg = cfg.load()?;
            let alphas: Vec<f64> =
                split_list(&alphas).map(|a| parse_fraction("alphas", a)).collect::<Result<_, _>>()?;
            let ells: Vec<usize> = split_list(&ells)
                .map(|l| l.parse().with_context(|| format!("ell {l:?}")))
                .collect::<Result<_>>()?;
            write_table(&harness::sweep_grid(&cfg, &alphas, &ells)?, &out)?;
        }
        Command::ScheduleCompare { cfg, settings, schedules, out } => {
            let cfg = cfg.load()?;
            let settings: Vec<(usize, f64)> = split_list(&settings)
                .map(|s| {
                    let (l, a) = s.split_once('/').with_context(|| format!("setting {s:?} is not ell0/alpha"))?;
                    Ok((l.parse()?, parse_fraction("alpha", a)?))
                })
                .collect::<Result<_>>()?;
            let schedules: Vec<ScheduleName> =
                split_list(&schedules).map(str::parse).collect::<Result<_, _>>()?;
            write_table(&harness::schedule_compare(&cfg, &settings, &schedules)?, &out)?;
        }
        Command::CurriculumAblate { cfg, out } => {
            let cfg = cfg.load()?;
            fs::create_dir_all(&out)?;
            let ab = harness::curriculum_ablate(&cfg)?;
            write_table(&ab.ordering, &out.join("ordering.csv"))?;
            write_table(&ab.filtering, &out.join("filtering.csv"))?;
        }
        Command::Heatmap { cfg, rows, cols, pool, tier, ell, out, raw } => {
            let cfg = cfg.load()?;
            if !rows.is_multiple_of(pool) || !cols.is_multiple_of(pool) {
                bail!("{rows}x{cols} is not divisible into {pool}x{pool} blocks");
            }
            let policy = harness::base_policy(&cfg)?;
            let prompts: Vec<_> = harness::training_set(&cfg)?.into_iter().filter(|p| p.tier == tier).collect();
            let spec = RolloutSpec {
                group_size: cfg.group_size,
                alpha: cfg.alpha,
                ell: ell.unwrap_or(cfg.guidance.ell),
                budget: cfg.budget,
                temperature: cfg.temperature,
            };
            let m = reward_matrix(&policy, &prompts, &spec, rows, cols, cfg.seed)?;
            if let Some(raw) = raw {
                let mut w = create(&raw)?;
                write_matrix_csv(&mut w, &m)?;
                w.flush()?;
            }
            let mut w = create(&out)?;
            write_matrix_csv(&mut w, &pooled_heatmap(&m, pool)?)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
