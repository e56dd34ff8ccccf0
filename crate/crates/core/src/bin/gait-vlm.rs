use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use gait_vlm::encoders::FrozenEncoders;
use gait_vlm::harness::cv::{grid_table, run_ablation_grid, run_cv};
use gait_vlm::harness::describe::{
    build_bank, combination_with, describe_classes, load_decoder, save_decoder, train_caption_decoder,
};
use gait_vlm::harness::export::{export_embeddings, write_embeddings, EmbeddingSpace};
use gait_vlm::harness::{evaluate, gen_synthetic_dataset, make_folds, train, Config, Dataset, GaitModel, TrainOptions};
use gait_vlm::numeric_embedding::{NumberScheme, NumericEmbedder};
use gait_vlm::param_corpus::{enumerate_combinations, Schema};
use gait_vlm::video_branch::FrameSequence;
use gait_vlm::{Error, Result};

#[derive(Parser)]
#[command(name = "gait-vlm", version, about = "Vision-language gait classification toolkit")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed (and the data seed for `gen-data`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Raw,
    Projected,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset into `--out-dir`.
    GenData {
        /// Synthetic preset (dementia-group, gait-scoring, paper-scale-synthetic).
        #[arg(long)]
        preset: Option<String>,
    },
    /// List parameter combinations that pass the correlation filter.
    FilterCombos {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train one fold; writes metrics and the best checkpoint.
    Train {
        /// Dataset directory; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Evaluate a checkpoint on the validation subjects of a fold.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Cross-validate the configured model, or all four configurations with `--grid`.
    RunCv {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated subset of folds.
        #[arg(long, value_delimiter = ',')]
        folds: Option<Vec<usize>>,
        #[arg(long)]
        grid: bool,
    },
    /// Classify one video stored as a frame blob directory.
    Classify {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        video: PathBuf,
    },
    /// Train the caption decoder on synthetic numeric sentences.
    TrainDecoder,
    /// Decode one parameter sentence per class from a trained model.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        decoder: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Parameter every bank sentence must mention.
        #[arg(long, default_value = "the walking speed")]
        parameter: String,
    },
    /// Similarity of "<template> is <v>" across a value grid under each number scheme.
    DiagnoseEmbedding {
        #[arg(long, default_value = "the walking speed")]
        template: String,
        #[arg(long, default_value_t = 0.0)]
        min: f64,
        #[arg(long, default_value_t = 200.0)]
        max: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Write numeric and class embeddings of a fold's validation clips to CSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long, value_enum, default_value_t = Space::Projected)]
        space: Space,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| Error::Config(e.to_string()))?);
    Ok(())
}

fn dataset(config: &Config, data: Option<&Path>) -> Result<Dataset> {
    match data {
        Some(dir) => Dataset::load(dir),
        None => {
            info!("generating the synthetic dataset (seed {})", config.data_seed);
            gen_synthetic_dataset(&config.synthetic_spec()?, config.data_seed)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        config.experiment.seed = s;
    }
    let device = Device::Cpu;
    let encoders = || FrozenEncoders::build(&config.experiment.encoders, DType::F32, &device);
    match &cli.command {
        Command::GenData { preset } => {
            let spec = match preset {
                Some(p) => gait_vlm::harness::synthetic::SyntheticSpec::preset(p)?,
                None => config.synthetic_spec()?,
            };
            let ds = gen_synthetic_dataset(&spec, cli.seed.unwrap_or(config.data_seed))?;
            let dir = out_dir(&cli)?;
            ds.save(&dir)?;
            println!("wrote {} clips of {} subjects to {}", ds.len(), ds.subjects().len(), dir.display());
        }
        Command::FilterCombos { data, threshold, k } => {
            let ds = Dataset::load(data)?;
            let records: Vec<_> = ds.clips.iter().map(|c| c.record.clone()).collect();
            let thr = threshold.unwrap_or(config.experiment.combination_threshold);
            let k = k.unwrap_or(config.experiment.combination_size);
            let combos = enumerate_combinations(&records, thr, k)?;
            for c in &combos {
                let names: Vec<&str> = c.indices().iter().map(|&p| ds.schema.parameters[p].name.as_str()).collect();
                println!("{}", names.join(" | "));
            }
            eprintln!("{} combinations of {k} with |r| <= {thr}", combos.len());
        }
        Command::Train { data, fold } => {
            let ds = dataset(&config, data.as_deref())?;
            let exp = &config.experiment;
            let plan = make_folds(&ds.subjects(), exp.folds, exp.fold_seed)?;
            let opts = TrainOptions {
                out_dir: Some(out_dir(&cli)?),
                fold_index: *fold,
            };
            let outcome = train(exp, &ds, plan.fold(*fold)?, encoders()?, &opts, |log| {
                info!(
                    "epoch {} loss {:.4} (video-text {:.4}, parameter-text {:.4}) val acc {:.3} F1 {:.3}",
                    log.epoch, log.loss, log.video_text_loss, log.gp_loss, log.val_accuracy, log.val_macro_f1
                )
            })?;
            println!(
                "best epoch {}: accuracy {:.4}, macro-F1 {:.4}",
                outcome.best_epoch, outcome.best.metrics.accuracy, outcome.best.metrics.macro_f1
            );
        }
        Command::Eval { checkpoint, data, fold } => {
            let model = GaitModel::load(checkpoint, &device)?;
            let ds = Dataset::load(data)?;
            let exp = &model.config;
            let plan = make_folds(&ds.subjects(), exp.folds, exp.fold_seed)?;
            let clips = ds.clips_of(&plan.fold(*fold)?.validation);
            print_json(&evaluate(&model, &ds, &clips)?)?;
        }
        Command::RunCv { data, folds, grid } => {
            let ds = dataset(&config, data.as_deref())?;
            let enc = encoders()?;
            let dir = out_dir(&cli)?;
            let on_epoch = |log: &gait_vlm::harness::train::EpochLog| {
                info!(
                    "{} fold {} epoch {} loss {:.4} val acc {:.3}",
                    log.configuration, log.fold, log.epoch, log.loss, log.val_accuracy
                )
            };
            if *grid {
                let reports = run_ablation_grid(&config.experiment, &ds, &enc, folds.as_deref(), Some(dir), on_epoch)?;
                for r in &reports {
                    println!("[{}]\n{}", r.configuration, r.to_table());
                }
                print!("{}", grid_table(&reports));
            } else {
                let report = run_cv(&config.experiment, &ds, &enc, folds.as_deref(), Some(dir.clone()), on_epoch)?;
                print!("{}", report.to_table());
                let path = dir.join("report.json");
                fs::write(&path, serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?)
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
        Command::Classify { checkpoint, video } => {
            let model = GaitModel::load(checkpoint, &device)?;
            let clip = FrameSequence::load(video)?;
            let pred = model.classify_video(&clip)?;
            println!("{}", model.class_names()[pred.class]);
            print_json(&pred)?;
        }
        Command::TrainDecoder => {
            let enc = encoders()?;
            let steps = config.decoder_train.steps;
            let run = train_caption_decoder(&config, &enc, |s, l| {
                if s % 100 == 0 || s + 1 == steps {
                    info!("step {s} loss {l:.4}");
                }
            })?;
            let dir = out_dir(&cli)?;
            save_decoder(dir.join("decoder"), &config.decoder, &run.store)?;
            print_json(&run.eval)?;
        }
        Command::Decode {
            checkpoint,
            decoder,
            data,
            fold,
            parameter,
        } => {
            let model = GaitModel::load(checkpoint, &device)?;
            let fit = model
                .numeric
                .as_ref()
                .ok_or_else(|| Error::Invalid("checkpoint was trained without the numeric branch".into()))?;
            let ds = Dataset::load(data)?;
            let p = ds
                .schema
                .parameter_index(parameter)
                .ok_or_else(|| Error::Invalid(format!("unknown parameter `{parameter}`")))?;
            let combo = combination_with(&fit.combinations, p)
                .ok_or_else(|| Error::Invalid(format!("no valid combination contains `{parameter}`")))?;
            let plan = make_folds(&ds.subjects(), model.config.folds, model.config.fold_seed)?;
            let records = ds.records(&ds.clips_of(&plan.fold(*fold)?.train));
            let embedder = NumericEmbedder::new(&model.encoders.text, &model.encoders.tokenizer, &ds.schema, model.config.num_seed)?;
            let bank = build_bank(&embedder, &ds.schema, &fit.stats, combo, &records, model.config.seed)?;
            let (dec, _store) = load_decoder(decoder, &device)?;
            for d in describe_classes(&model, &dec, &bank, model.config.loss.tau)? {
                println!("{}: {}", model.class_names()[d.class], d.sentence.text);
                if let Some(w) = &d.sentence.warning {
                    eprintln!("  warning: {w}");
                }
            }
        }
        Command::DiagnoseEmbedding { template, min, max, step } => {
            if !(step > &0.0) || max <= min {
                return Err(Error::Invalid("grid needs min < max and a positive step".into()));
            }
            let enc = encoders()?;
            let schema = Schema::builtin(&["healthy", "patient"], "healthy");
            let embedder = NumericEmbedder::new(&enc.text, &enc.tokenizer, &schema, config.experiment.num_seed)?;
            let n = ((max - min) / step).floor() as usize + 1;
            let grid: Vec<f64> = (0..n).map(|i| min + i as f64 * step).collect();
            let dir = out_dir(&cli)?;
            for scheme in NumberScheme::ALL {
                let report = embedder.diagnose_similarity(scheme, &grid, template)?;
                let path = dir.join(format!("similarity-{}.csv", scheme.name()));
                fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
                println!(
                    "{:<12} mean adjacent dissimilarity {:.6}, continuity {:.3}",
                    scheme.name(),
                    report.mean_adjacent_dissimilarity,
                    report.continuity_fraction
                );
            }
        }
        Command::ExportEmbeddings {
            checkpoint,
            data,
            fold,
            space,
            out,
        } => {
            let model = GaitModel::load(checkpoint, &device)?;
            let ds = Dataset::load(data)?;
            let plan = make_folds(&ds.subjects(), model.config.folds, model.config.fold_seed)?;
            let clips = ds.clips_of(&plan.fold(*fold)?.validation);
            let space = match space {
                Space::Raw => EmbeddingSpace::Raw,
                Space::Projected => EmbeddingSpace::Projected,
            };
            let rows = export_embeddings(&model, &ds, &clips, space)?;
            write_embeddings(out, &rows)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}
