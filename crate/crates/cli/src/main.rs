//! Command-line front end for the tag-triplet embedding pipeline.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tagtriplet::Result;

use crate::config::Config;

#[derive(Parser)]
#[command(name = "tagtriplet", version, about = "Tag-driven track embeddings")]
struct Cli {
    /// Flat `key = value` configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted cluster structure.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        tracks_per_cluster: Option<usize>,
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        tag_overlap: Option<f64>,
        #[arg(long)]
        tracks_per_album: Option<usize>,
        #[arg(long)]
        artists_per_cluster: Option<usize>,
    },
    /// Parse a tag file, optionally intersect tag sets, emit corpus stats.
    Ingest {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only tracks annotated in all of these tag sets.
        #[arg(long)]
        require: Option<String>,
    },
    /// Fit the latent topic model on the tag-track matrix.
    FitLsi {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        topics: Option<usize>,
        /// Comma-separated tag sets to include.
        #[arg(long)]
        tag_sets: Option<String>,
    },
    /// Show the strongest tags of one topic.
    Topics {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        topic: usize,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Turn WAV files into feature vectors.
    ExtractFeatures {
        #[arg(long)]
        wav_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train the encoder with online triplet mining.
    Train {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        lsi: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        encoder: Option<String>,
        #[arg(long)]
        hidden: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        normalize: Option<bool>,
        #[arg(long)]
        theta_pos: Option<f64>,
        #[arg(long)]
        theta_neg: Option<f64>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        split_seed: Option<u64>,
    },
    /// Embed every track in a feature manifest with a trained checkpoint.
    Embed {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score embeddings on the test split across all six retrieval tasks.
    Eval {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        split_seed: Option<u64>,
        /// Label recorded in the report's tag_set column.
        #[arg(long)]
        tag_set_label: Option<String>,
        /// Topic count recorded in the report's lsi_topics column.
        #[arg(long)]
        lsi_topics: Option<usize>,
    },
    /// Full pipeline over all tag-set combinations and a topic grid.
    Sweep {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated topic counts; defaults to 10,20,...,400.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        hidden: Option<String>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        split_seed: Option<u64>,
    },
}

fn set_opt<T: std::fmt::Display>(cfg: &mut Config, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        cfg.set(key, v.to_string());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    match &cli.command {
        Command::Synth {
            out,
            seed,
            clusters,
            tracks_per_cluster,
            feature_dim,
            noise_sigma,
            tag_overlap,
            tracks_per_album,
            artists_per_cluster,
        } => {
            set_opt(&mut cfg, "synth.seed", seed);
            set_opt(&mut cfg, "synth.clusters", clusters);
            set_opt(&mut cfg, "synth.tracks_per_cluster", tracks_per_cluster);
            set_opt(&mut cfg, "synth.feature_dim", feature_dim);
            set_opt(&mut cfg, "synth.noise_sigma", noise_sigma);
            set_opt(&mut cfg, "synth.tag_overlap", tag_overlap);
            set_opt(&mut cfg, "synth.tracks_per_album", tracks_per_album);
            set_opt(&mut cfg, "synth.artists_per_cluster", artists_per_cluster);
            commands::cmd_synth(&cfg, out)
        }
        Command::Ingest { tags, out, require } => {
            set_opt(&mut cfg, "ingest.require", require);
            commands::cmd_ingest(&cfg, tags, out)
        }
        Command::FitLsi {
            tags,
            out,
            topics,
            tag_sets,
        } => {
            set_opt(&mut cfg, "lsi.topics", topics);
            set_opt(&mut cfg, "lsi.tag_sets", tag_sets);
            commands::cmd_fit_lsi(&cfg, tags, out)
        }
        Command::Topics { model, topic, top } => commands::cmd_topics(model, *topic, *top),
        Command::ExtractFeatures { wav_dir, out, mode } => {
            set_opt(&mut cfg, "features.mode", mode);
            commands::cmd_extract_features(&cfg, wav_dir, out)
        }
        Command::Train {
            tags,
            features,
            lsi,
            out,
            epochs,
            batch_size,
            learning_rate,
            optimizer,
            seed,
            margin,
            encoder,
            hidden,
            dim,
            normalize,
            theta_pos,
            theta_neg,
            strategy,
            split_seed,
        } => {
            set_opt(&mut cfg, "trainer.epochs", epochs);
            set_opt(&mut cfg, "trainer.batch_size", batch_size);
            set_opt(&mut cfg, "trainer.learning_rate", learning_rate);
            set_opt(&mut cfg, "trainer.optimizer", optimizer);
            set_opt(&mut cfg, "trainer.seed", seed);
            set_opt(&mut cfg, "trainer.margin", margin);
            set_opt(&mut cfg, "trainer.encoder", encoder);
            set_opt(&mut cfg, "trainer.hidden", hidden);
            set_opt(&mut cfg, "trainer.dim", dim);
            set_opt(&mut cfg, "trainer.normalize", normalize);
            set_opt(&mut cfg, "mining.theta_pos", theta_pos);
            set_opt(&mut cfg, "mining.theta_neg", theta_neg);
            set_opt(&mut cfg, "mining.strategy", strategy);
            set_opt(&mut cfg, "split.seed", split_seed);
            commands::cmd_train(&cfg, tags, features, lsi, out)
        }
        Command::Embed {
            features,
            checkpoint,
            out,
        } => commands::cmd_embed(&cfg, features, checkpoint, out),
        Command::Eval {
            tags,
            embeddings,
            out,
            k,
            metric,
            split_seed,
            tag_set_label,
            lsi_topics,
        } => {
            set_opt(&mut cfg, "eval.k", k);
            set_opt(&mut cfg, "eval.metric", metric);
            set_opt(&mut cfg, "split.seed", split_seed);
            set_opt(&mut cfg, "eval.tag_set_label", tag_set_label);
            set_opt(&mut cfg, "eval.lsi_topics", lsi_topics);
            commands::cmd_eval(&cfg, tags, embeddings, out)
        }
        Command::Sweep {
            tags,
            features,
            out,
            grid,
            epochs,
            batch_size,
            learning_rate,
            seed,
            k,
            dim,
            hidden,
            strategy,
            split_seed,
        } => {
            set_opt(&mut cfg, "sweep.grid", grid);
            set_opt(&mut cfg, "trainer.epochs", epochs);
            set_opt(&mut cfg, "trainer.batch_size", batch_size);
            set_opt(&mut cfg, "trainer.learning_rate", learning_rate);
            set_opt(&mut cfg, "trainer.seed", seed);
            set_opt(&mut cfg, "eval.k", k);
            set_opt(&mut cfg, "trainer.dim", dim);
            set_opt(&mut cfg, "trainer.hidden", hidden);
            set_opt(&mut cfg, "mining.strategy", strategy);
            set_opt(&mut cfg, "split.seed", split_seed);
            commands::cmd_sweep(&cfg, tags, features, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version "errors" are normal exits
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
