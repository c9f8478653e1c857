use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use corelink::corpus::{corpus_stats, write_canonical, Corpus, Split};
use corelink::harness::{
    evaluate, run_ablations, run_layer_sweep, train, write_evaluation, write_json, Checkpoint, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "corelink", version, about = "Joint coreference and character linking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Without one, the toy config on the
    /// synthetic corpus is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the run seed; for multi-seed commands, runs this seed only.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "dev")]
    split: Split,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and score it on the split.
    Train(Common),
    /// Score a saved checkpoint on the split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full model against its -MLSA, -Linking and -Coref variants.
    Ablate(Common),
    /// Vary the number of mention-attention layers.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated layer counts.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
        layers: Vec<usize>,
    },
    /// Corpus statistics per split.
    Stats(Common),
    /// Write the synthetic corpus in canonical JSON.
    Synth(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::toy(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    cfg.data.load().context("loading corpus")
}

fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn split_docs(corpus: &Corpus, split: Split) -> Result<&[corelink::corpus::SceneDocument]> {
    match corpus.get(&split) {
        Some(docs) if !docs.is_empty() => Ok(docs),
        _ => bail!("corpus has no {split} documents"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let corpus = load_corpus(&cfg)?;
            create(&c.out)?;
            let outcome = train(&cfg, &corpus)?;
            outcome.checkpoint.save(&c.out.join("checkpoint.json"))?;
            write_json(&c.out.join("train_log.json"), &outcome.log)?;
            write(&c.out.join("config.json"), &cfg.to_json()?)?;
            let eval = evaluate(&outcome.best, split_docs(&corpus, c.split)?)?;
            write_evaluation(&c.out, "model", &eval)?;
            println!("{}", serde_json::to_string_pretty(&eval.report.flat())?);
        }
        Command::Eval { common: c, checkpoint } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cfg = match &c.config {
                Some(_) => load_config(&c)?,
                None => ck.config.clone(),
            };
            let corpus = load_corpus(&cfg)?;
            create(&c.out)?;
            let eval = evaluate(&ck.best_model(), split_docs(&corpus, c.split)?)?;
            write_evaluation(&c.out, "model", &eval)?;
            println!("{}", serde_json::to_string_pretty(&eval.report.flat())?);
        }
        Command::Ablate(c) => {
            let cfg = load_config(&c)?;
            let corpus = load_corpus(&cfg)?;
            create(&c.out)?;
            let report = run_ablations(&cfg, &corpus, c.split)?;
            write_json(&c.out.join("ablation.json"), &report)?;
            let md = report.to_markdown();
            write(&c.out.join("ablation.md"), &md)?;
            print!("{md}");
        }
        Command::Sweep { common: c, layers } => {
            let cfg = load_config(&c)?;
            let corpus = load_corpus(&cfg)?;
            create(&c.out)?;
            let report = run_layer_sweep(&cfg, &corpus, &layers, c.split)?;
            write_json(&c.out.join("sweep.json"), &report)?;
            write(&c.out.join("sweep.csv"), &report.to_csv())?;
            write(&c.out.join("sweep.svg"), &report.to_svg())?;
            let md = report.to_markdown();
            write(&c.out.join("sweep.md"), &md)?;
            print!("{md}");
        }
        Command::Stats(c) => {
            let cfg = load_config(&c)?;
            let md = corpus_stats(&load_corpus(&cfg)?).to_markdown();
            print!("{md}");
        }
        Command::Synth(c) => {
            let mut cfg = load_config(&c)?;
            cfg.data.corpus = None;
            if let Some(seed) = c.seed {
                cfg.data.synthetic_seed = seed;
            }
            let corpus = load_corpus(&cfg)?;
            write_canonical(&corpus, &c.out)?;
            println!("wrote {} splits to {}", corpus.len(), c.out.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}
