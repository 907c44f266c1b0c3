//! Command-line front end for the sentiment pipeline.
//!
//! Every subcommand is driven by a `key = value` config file; flags are
//! sugar for `--set` overrides. Exit codes: 0 success, 1 validation error,
//! 2 stage failure. Errors go to standard error as single-line JSON.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emoxpt::cleaning::Origin;
use emoxpt::embedding::MatrixLevel;
use emoxpt::pipeline::{
    load_config, run_pipeline, run_stage_clean, run_stage_cluster, run_stage_eda, run_stage_embed,
    run_stage_project, run_stage_report, PipelineError,
};
use emoxpt::sentiment::{render_comparison_table, Group};

#[derive(Parser)]
#[command(
    name = "emoxpt",
    version,
    about = "Unsupervised sentiment comparison of human and LLM text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config file (`key = value` lines).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override a config key, e.g. `--set k=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Copy, Clone, ValueEnum)]
enum ClassArg {
    Tweets,
    Human,
    Llm,
}

#[derive(Copy, Clone, ValueEnum)]
enum LevelArg {
    Word,
    Sentence,
}

#[derive(Copy, Clone, ValueEnum)]
enum GroupArg {
    Human,
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the output manifest.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Write frequency tables and length summaries (eda/).
    Eda {
        #[command(flatten)]
        common: Common,
    },
    /// Clean the corpus into token JSONL files (cleaned/).
    Clean {
        #[command(flatten)]
        common: Common,
        /// Only write this text class.
        #[arg(long, value_enum)]
        class: Option<ClassArg>,
        /// Stopword list path (overrides `stopwords_path`).
        #[arg(long, value_name = "PATH")]
        stopwords: Option<PathBuf>,
        /// Neutral-word list path (overrides `neutral_path`).
        #[arg(long, value_name = "PATH")]
        neutral: Option<PathBuf>,
    },
    /// Embed cleaned documents into matrix CSVs (embeddings/).
    Embed {
        #[command(flatten)]
        common: Common,
    },
    /// Cluster one level's matrices and write assignments + metrics (clusters/).
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        level: LevelArg,
        /// Number of clusters (overrides `k`).
        #[arg(long)]
        k: Option<usize>,
        /// Clustering seed (overrides `kmeans_seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Project one level's matrices to 2-D scatter SVGs (projections/).
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        level: LevelArg,
        /// Perplexity (overrides `tsne.perplexity`).
        #[arg(long)]
        perplexity: Option<f64>,
        /// Projection seed (overrides `tsne.seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Write a single group's SVG to this path instead of projections/.
        #[arg(long, value_name = "FILE.svg", requires = "group")]
        out: Option<PathBuf>,
        /// Which group `--out` refers to.
        #[arg(long, value_enum)]
        group: Option<GroupArg>,
    },
    /// Write the sentiment comparison report (report/).
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn absolute(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_owned()
    } else {
        std::env::current_dir()
            .map(|cwd| cwd.join(path))
            .unwrap_or_else(|_| path.to_owned())
    }
}

/// Parses `--set KEY=VALUE` flags into override pairs.
fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, PipelineError> {
    raw.iter()
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| {
                    PipelineError::Config(format!("--set expects KEY=VALUE, got `{item}`"))
                })
        })
        .collect()
}

fn print_json_error(error: &PipelineError) {
    let (kind, stage, message) = match error {
        PipelineError::Config(message) => ("validation", None, message.clone()),
        PipelineError::Stage { stage, message } => ("stage", Some(*stage), message.clone()),
    };
    let mut body = serde_json::Map::new();
    body.insert("kind".into(), kind.into());
    if let Some(stage) = stage {
        body.insert("stage".into(), stage.into());
    }
    body.insert("error".into(), message.into());
    eprintln!("{}", serde_json::Value::Object(body));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Pipeline { common } => {
            let config = load_config(&common.config, &parse_overrides(&common.set)?)?;
            let summary = run_pipeline(&config)?;
            print!("{}", render_comparison_table(&summary.word));
            println!();
            print!("{}", render_comparison_table(&summary.sentence));
            println!();
            println!(
                "wrote {} files to {}",
                summary.manifest.files.len(),
                config.out_dir.display()
            );
            Ok(())
        }
        Command::Eda { common } => {
            let config = load_config(&common.config, &parse_overrides(&common.set)?)?;
            print_written(&run_stage_eda(&config)?);
            Ok(())
        }
        Command::Clean {
            common,
            class,
            stopwords,
            neutral,
        } => {
            let mut overrides = parse_overrides(&common.set)?;
            if let Some(path) = stopwords {
                overrides.push((
                    "stopwords_path".to_owned(),
                    absolute(&path).display().to_string(),
                ));
            }
            if let Some(path) = neutral {
                overrides.push((
                    "neutral_path".to_owned(),
                    absolute(&path).display().to_string(),
                ));
            }
            let config = load_config(&common.config, &overrides)?;
            let class = class.map(|c| match c {
                ClassArg::Tweets => Origin::Tweet,
                ClassArg::Human => Origin::HumanComment,
                ClassArg::Llm => Origin::LlmResponse,
            });
            print_written(&run_stage_clean(&config, class)?);
            Ok(())
        }
        Command::Embed { common } => {
            let config = load_config(&common.config, &parse_overrides(&common.set)?)?;
            print_written(&run_stage_embed(&config)?);
            Ok(())
        }
        Command::Cluster {
            common,
            level,
            k,
            seed,
        } => {
            let mut overrides = parse_overrides(&common.set)?;
            if let Some(k) = k {
                overrides.push(("k".to_owned(), k.to_string()));
            }
            if let Some(seed) = seed {
                overrides.push(("kmeans_seed".to_owned(), seed.to_string()));
            }
            let config = load_config(&common.config, &overrides)?;
            print_written(&run_stage_cluster(&config, matrix_level(level))?);
            Ok(())
        }
        Command::Project {
            common,
            level,
            perplexity,
            seed,
            out,
            group,
        } => {
            let mut overrides = parse_overrides(&common.set)?;
            if let Some(perplexity) = perplexity {
                overrides.push(("tsne.perplexity".to_owned(), perplexity.to_string()));
            }
            if let Some(seed) = seed {
                overrides.push(("tsne.seed".to_owned(), seed.to_string()));
            }
            let config = load_config(&common.config, &overrides)?;
            let only = out.map(|path| {
                let group = match group.expect("clap enforces --group with --out") {
                    GroupArg::Human => Group::Human,
                    GroupArg::Llm => Group::Llm,
                };
                (group, absolute(&path))
            });
            print_written(&run_stage_project(&config, matrix_level(level), only)?);
            Ok(())
        }
        Command::Report { common } => {
            let config = load_config(&common.config, &parse_overrides(&common.set)?)?;
            print_written(&run_stage_report(&config)?);
            Ok(())
        }
    }
}

fn matrix_level(level: LevelArg) -> MatrixLevel {
    match level {
        LevelArg::Word => MatrixLevel::Word,
        LevelArg::Sentence => MatrixLevel::Sentence,
    }
}

fn print_written(paths: &[String]) {
    for path in paths {
        println!("{path}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                return ExitCode::from(0);
            }
            let error = PipelineError::Config(err.to_string());
            print_json_error(&error);
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(0),
        Err(error) => {
            print_json_error(&error);
            match error {
                PipelineError::Config(_) => ExitCode::from(1),
                PipelineError::Stage { .. } => ExitCode::from(2),
            }
        }
    }
}
