//! `pdscreen`, the operator front end: synthesize a cohort, score it into
//! feature matrices, train and evaluate classifiers, and explain the tree
//! ensembles.

mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pdscreen::pipeline::{
    self, ArtifactPaths, ExplainConfig, TrainEvalConfig,
};
use pdscreen::survey::Battery;

use config::{FileConfig, Overrides, Resolved};

#[derive(Parser)]
#[command(
    name = "pdscreen",
    version,
    about = "Survey scoring, imbalance-aware classifiers, and exact tree-ensemble attributions for PD screening cohorts"
)]
struct Cli {
    /// Run configuration TOML (flags override file values).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, env = "PDSCREEN_OUT", value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed for synthesis, splits, and model fitting.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Instrument battery TOML (defaults to the built-in battery).
    #[arg(long, global = true, value_name = "PATH")]
    instruments: Option<PathBuf>,
    /// Engineered dataset to work on.
    #[arg(long, global = true, value_name = "subjective|objective|combined")]
    dataset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic response cohort (responses.csv).
    Synth,
    /// Score raw responses into the selected feature matrix CSV.
    Score,
    /// Grid-search, evaluate, and emit metrics, confusion matrices, and
    /// model artifacts.
    TrainEval(ModelArg),
    /// Attribute predictions with exact Shapley values and emit the
    /// explanation reports.
    Explain(ExplainArgs),
    /// Re-render the metric tables from metrics.csv.
    Report,
}

#[derive(Args)]
struct ModelArg {
    /// Model family to train, or `all`.
    #[arg(long, value_name = "lr|knn|rf|gbm|all")]
    model: Option<String>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Tree-ensemble family to explain.
    #[arg(long, value_name = "rf|gbm")]
    model: Option<String>,
    /// Number of features kept before collapsing the rest.
    #[arg(long, value_name = "N")]
    top_k: Option<usize>,
    /// Explain the whole cohort or only the held-out split.
    #[arg(long, value_name = "cohort|test")]
    scope: Option<String>,
    /// Participant for the waterfall figure (default: first PD case).
    #[arg(long, value_name = "ID")]
    sample_id: Option<String>,
}

fn load_battery(resolved: &Resolved) -> Result<Battery> {
    match &resolved.instruments {
        Some(path) => Battery::from_path(path)
            .with_context(|| format!("loading instrument battery {}", path.display())),
        None => Ok(Battery::default_battery().clone()),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let (model, top_k, scope, sample_id) = match &cli.command {
        Command::TrainEval(args) => (args.model.clone(), None, None, None),
        Command::Explain(args) => (
            args.model.clone(),
            args.top_k,
            args.scope.clone(),
            args.sample_id.clone(),
        ),
        _ => (None, None, None, None),
    };
    let resolved = config::resolve(
        file,
        Overrides {
            seed: cli.seed,
            dataset: cli.dataset.clone(),
            out: cli.out.clone(),
            instruments: cli.instruments.clone(),
            model,
            top_k,
            scope,
            sample_id,
        },
    )?;
    let paths = ArtifactPaths::new(&resolved.out_dir);

    match cli.command {
        Command::Synth => {
            let battery = load_battery(&resolved)?;
            let path = pipeline::run_synth(&resolved.synth_plan, &battery, &paths)?;
            println!(
                "wrote {} ({} PD / {} HC participants)",
                path.display(),
                resolved.synth_plan.n_pd,
                resolved.synth_plan.n_hc
            );
        }
        Command::Score => {
            let battery = load_battery(&resolved)?;
            let path = pipeline::run_score(&battery, resolved.dataset, &paths)?;
            println!("wrote {}", path.display());
        }
        Command::TrainEval(_) => {
            let cfg = TrainEvalConfig {
                selection: resolved.dataset,
                families: resolved.families.clone(),
                plan: resolved.plan,
                max_missing_fraction: resolved.max_missing_fraction,
                cohorts: resolved.cohorts.clone(),
                grids: resolved.grids.clone(),
            };
            let reports = pipeline::run_train_eval(&cfg, &paths)?;
            print!("{}", pipeline::render_report_tables(&reports));
            for report in &reports {
                println!(
                    "{}: best cell [{}] (mean CV F1 {:.4})",
                    report.family.display_name(),
                    summarize_params(report),
                    report.best_mean_f1
                );
            }
            println!("wrote {}", paths.metrics_csv().display());
            println!("wrote {}", paths.metrics_table_txt().display());
            for report in &reports {
                println!("wrote {}", paths.confusion_csv(report.family).display());
                println!("wrote {}", paths.confusion_svg(report.family).display());
                if report.family.explainable() {
                    println!("wrote {}", paths.model_json(report.family).display());
                }
            }
        }
        Command::Explain(_) => {
            let cfg = ExplainConfig {
                family: resolved.explain_family,
                scope: resolved.explain_scope,
                top_k: resolved.explain_top_k,
                sample_id: resolved.explain_sample_id.clone(),
                max_missing_fraction: resolved.max_missing_fraction,
                cohorts: resolved.cohorts.clone(),
            };
            let output = pipeline::run_explain(&cfg, &paths)?;
            for warning in &output.global.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "explained {} participants; top features by mean |contribution|:",
                output.attributions.len()
            );
            for contribution in output.global.ranked.iter().take(resolved.explain_top_k) {
                println!(
                    "  {:<24} HC {:.4}  PD {:.4}",
                    contribution.feature, contribution.mean_abs_hc, contribution.mean_abs_pd
                );
            }
            println!(
                "waterfall for {}: baseline {:.3} -> prediction {:.3}",
                output.waterfall.participant_id,
                output.waterfall.base_value,
                output.waterfall.prediction
            );
            println!("wrote {}", paths.attributions_jsonl().display());
            println!("wrote {}", paths.global_contributions_csv().display());
            println!("wrote {}", paths.global_contributions_svg().display());
            println!("wrote {}", paths.waterfall_csv().display());
            println!("wrote {}", paths.waterfall_svg().display());
        }
        Command::Report => {
            let text = pipeline::run_report(&paths)?;
            print!("{text}");
            println!("wrote {}", paths.metrics_table_txt().display());
        }
    }
    Ok(())
}

fn summarize_params(report: &pdscreen::pipeline::FamilyReport) -> String {
    use pdscreen::models::ModelFamily;
    let p = &report.best_params;
    match report.family {
        ModelFamily::RandomForest => format!(
            "n_trees={}, max_depth={}, min_samples_leaf={}",
            p.n_trees,
            if p.max_depth == 0 {
                "none".to_string()
            } else {
                p.max_depth.to_string()
            },
            p.min_samples_leaf
        ),
        ModelFamily::Gbm => format!(
            "n_trees={}, learning_rate={}, max_depth={}",
            p.n_trees, p.learning_rate, p.max_depth
        ),
        ModelFamily::LogisticRegression => format!("l2={}", p.lr_l2),
        ModelFamily::Knn => format!("k={}", p.k_neighbors),
    }
}
