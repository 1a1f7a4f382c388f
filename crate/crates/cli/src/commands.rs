//! Subcommand implementations. Flag values are merged into the [`Config`]
//! before these run, so every parameter is resolved through config keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use tagtriplet::audiofeat::{self, FeatureMode};
use tagtriplet::eval::{
    self, combo_label, default_fractions, evaluate, stratified_split, tag_set_combos, EvalRow,
    EvaluationReport, Metric, TaskResult,
};
use tagtriplet::lsi::{self, LsiModel};
use tagtriplet::mining::MiningStrategy;
use tagtriplet::synth::{self, SynthSpec};
use tagtriplet::tagspace::{self, TagCorpus, STANDARD_TAG_SETS};
use tagtriplet::textio;
use tagtriplet::trainer::{
    self, CheckpointMeta, EncoderKind, EncoderModel, OptimizerKind, Reduction, TrainConfig,
    TrainData, TripletLossConfig,
};
use tagtriplet::{Error, Result};

use crate::artifacts::{sha256_file, sha256_str, RunContext};
use crate::config::Config;

fn with_cleanup(out: &Path, body: impl FnOnce(&mut RunContext) -> Result<()>) -> Result<()> {
    let mut ctx = RunContext::new(out)?;
    match body(&mut ctx) {
        Ok(()) => Ok(()),
        Err(e) => {
            ctx.discard();
            Err(e)
        }
    }
}

fn parse_csv(list: &str) -> Vec<String> {
    list.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

// ---------------------------------------------------------------------------
// synth

pub fn cmd_synth(cfg: &Config, out: &Path) -> Result<()> {
    let spec = SynthSpec {
        n_clusters: cfg.resolve(None, "synth.clusters", 4)?,
        tracks_per_cluster: cfg.resolve(None, "synth.tracks_per_cluster", 100)?,
        feature_dim: cfg.resolve(None, "synth.feature_dim", 32)?,
        noise_sigma: cfg.resolve(None, "synth.noise_sigma", 0.1)?,
        tags_per_cluster: cfg.resolve(None, "synth.tags_per_cluster", 5)?,
        artists_per_cluster: cfg.resolve(None, "synth.artists_per_cluster", 5)?,
        tracks_per_album: cfg.resolve(None, "synth.tracks_per_album", 4)?,
        tag_overlap: cfg.resolve(None, "synth.tag_overlap", 0.2)?,
        seed: cfg.resolve(None, "synth.seed", 0)?,
    };
    with_cleanup(out, |ctx| {
        let (corpus, features) = synth::generate(&spec)?;
        synth::write_outputs(ctx.out_dir(), &corpus, &features)?;
        ctx.track(ctx.out_dir().join("tags.tsv"));
        ctx.track(ctx.out_dir().join("features.tsv"));
        for (id, _) in &features {
            ctx.track(ctx.out_dir().join("features").join(format!("{id}.feat")));
        }
        ctx.write_manifest("synth", cfg, spec.seed)?;
        println!(
            "generated {} tracks in {} clusters",
            features.len(),
            spec.n_clusters
        );
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// ingest

pub fn cmd_ingest(cfg: &Config, tags: &Path, out: &Path) -> Result<()> {
    with_cleanup(out, |ctx| {
        ctx.record_input(tags)?;
        let mut corpus = tagspace::parse_tag_file(tags)?;
        if let Some(required) = cfg.get("ingest.require") {
            let sets = parse_csv(required);
            corpus = tagspace::intersect_tagsets(&corpus, &sets)?;
        }
        let stats = tagspace::corpus_stats(&corpus);
        ctx.write("corpus.tsv", &corpus.to_tsv())?;
        ctx.write("stats.tsv", &tagspace::stats_to_tsv(&stats))?;
        ctx.write("stats.txt", &tagspace::stats_to_text(&stats))?;
        ctx.write_manifest("ingest", cfg, 0)?;
        println!(
            "ingested {} tracks, {} assignments",
            corpus.tracks().len(),
            corpus.assignments().len()
        );
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// fit-lsi / topics

fn tag_sets_from(cfg: &Config) -> Vec<String> {
    match cfg.get("lsi.tag_sets") {
        Some(list) => parse_csv(list),
        None => STANDARD_TAG_SETS.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn cmd_fit_lsi(cfg: &Config, tags: &Path, out: &Path) -> Result<()> {
    let topics: usize = cfg.resolve(None, "lsi.topics", 100)?;
    with_cleanup(out, |ctx| {
        ctx.record_input(tags)?;
        let corpus = tagspace::parse_tag_file(tags)?;
        let sets = tag_sets_from(cfg);
        let matrix = tagspace::build_matrix(&corpus, &sets)?;
        let model = lsi::fit_lsi(&matrix, topics)?;
        let path = ctx.out_dir().join("lsi.model");
        model.save(&path)?;
        ctx.track(path);
        ctx.write_manifest("fit-lsi", cfg, 0)?;
        println!(
            "fitted {} topics over {} tags x {} tracks",
            model.k(),
            model.m(),
            model.n()
        );
        Ok(())
    })
}

pub fn cmd_topics(model_path: &Path, topic: usize, top: usize) -> Result<()> {
    let model = LsiModel::load(model_path)?;
    let report = model.topic_top_terms(topic, top)?;
    print!("{}", lsi::topic_report_text(&report));
    Ok(())
}

// ---------------------------------------------------------------------------
// extract-features

pub fn cmd_extract_features(cfg: &Config, wav_dir: &Path, out: &Path) -> Result<()> {
    let mode: FeatureMode = cfg
        .resolve(None, "features.mode", "flatten".to_string())?
        .parse()?;
    with_cleanup(out, |ctx| {
        let mut wavs: Vec<PathBuf> = fs::read_dir(wav_dir)
            .map_err(|e| Error::io(wav_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |e| e == "wav"))
            .collect();
        wavs.sort();
        if wavs.is_empty() {
            return Err(Error::Data(format!(
                "no .wav files found in {}",
                wav_dir.display()
            )));
        }
        let feat_dir = ctx.out_dir().join("features");
        fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
        let mut entries = Vec::new();
        for wav in &wavs {
            ctx.record_input(wav)?;
            let track_id = wav
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Data(format!("unusable file name {}", wav.display())))?
                .to_string();
            let clip = audiofeat::read_wav(wav)?;
            let clip = audiofeat::resample(&clip, audiofeat::TARGET_RATE)?;
            let clip = audiofeat::segment(
                &clip,
                audiofeat::SEGMENT_OFFSET_SECS,
                audiofeat::SEGMENT_LENGTH_SECS,
            )?;
            let spec = audiofeat::mel_spectrogram(&clip)?;
            let values = audiofeat::features_from_mel(&spec, mode);
            let file = feat_dir.join(format!("{track_id}.feat"));
            audiofeat::save_features(&file, &track_id, mode, &values)?;
            ctx.track(file);
            entries.push((track_id.clone(), PathBuf::from(format!("features/{track_id}.feat"))));
        }
        let manifest = ctx.out_dir().join("features.tsv");
        audiofeat::save_manifest(&manifest, &entries)?;
        ctx.track(manifest);
        ctx.write_manifest("extract-features", cfg, 0)?;
        println!("extracted {} feature files ({mode})", entries.len());
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// shared pipeline pieces

struct PipelineParams {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    optimizer: OptimizerKind,
    trainer_seed: u64,
    margin: f64,
    reduction: Reduction,
    encoder: EncoderKind,
    hidden: Vec<usize>,
    dim: usize,
    normalize: bool,
    theta_pos: f64,
    theta_neg: f64,
    strategy: MiningStrategy,
    split_seed: u64,
    eval_k: usize,
    metric: Metric,
}

fn pipeline_params(cfg: &Config) -> Result<PipelineParams> {
    let reduction = match cfg.resolve(None, "trainer.reduction", "mean".to_string())?.as_str() {
        "mean" => Reduction::Mean,
        "sum" => Reduction::Sum,
        other => return Err(Error::Param(format!("unknown reduction {other:?}"))),
    };
    let hidden = match cfg.get("trainer.hidden") {
        Some(list) if !list.trim().is_empty() => parse_csv(list)
            .iter()
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|_| Error::Param(format!("bad hidden layer width {d:?}")))
            })
            .collect::<Result<Vec<usize>>>()?,
        _ => Vec::new(),
    };
    Ok(PipelineParams {
        epochs: cfg.resolve(None, "trainer.epochs", 30)?,
        batch_size: cfg.resolve(None, "trainer.batch_size", 600)?,
        learning_rate: cfg.resolve(None, "trainer.learning_rate", 1e-3)?,
        optimizer: match cfg.resolve(None, "trainer.optimizer", "adam".to_string())?.as_str() {
            s => s.parse()?,
        },
        trainer_seed: cfg.resolve(None, "trainer.seed", 0)?,
        margin: cfg.resolve(None, "trainer.margin", trainer::DEFAULT_MARGIN)?,
        reduction,
        encoder: cfg.resolve(None, "trainer.encoder", "mlp".to_string())?.parse()?,
        hidden,
        dim: cfg.resolve(None, "trainer.dim", trainer::DEFAULT_EMBEDDING_DIM)?,
        normalize: cfg.resolve(None, "trainer.normalize", true)?,
        theta_pos: cfg.resolve(None, "mining.theta_pos", 0.8)?,
        theta_neg: cfg.resolve(None, "mining.theta_neg", 0.2)?,
        strategy: cfg
            .resolve(None, "mining.strategy", "paper-literal".to_string())?
            .parse()?,
        split_seed: cfg.resolve(None, "split.seed", 0)?,
        eval_k: cfg.resolve(None, "eval.k", eval::DEFAULT_CUTOFF)?,
        metric: cfg.resolve(None, "eval.metric", "euclidean".to_string())?.parse()?,
    })
}

impl PipelineParams {
    fn encoder_dims(&self, input: usize) -> Vec<usize> {
        match self.encoder {
            EncoderKind::Identity => vec![input],
            EncoderKind::Linear => vec![input, self.dim],
            EncoderKind::Mlp => {
                let mut dims = vec![input];
                dims.extend(&self.hidden);
                dims.push(self.dim);
                dims
            }
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.trainer_seed,
            strategy: self.strategy,
            theta_pos: self.theta_pos,
            theta_neg: self.theta_neg,
        }
    }

    fn loss_config(&self) -> TripletLossConfig {
        TripletLossConfig {
            margin: self.margin,
            reduction: self.reduction,
        }
    }

    /// Canonical dump used in sweep cache digests.
    fn digest_string(&self) -> String {
        format!(
            "epochs={} batch={} lr={} opt={:?} seed={} margin={} red={:?} enc={} hidden={:?} \
             dim={} norm={} tp={} tn={} strat={:?} split={} k={} metric={:?}",
            self.epochs,
            self.batch_size,
            textio::fmt_f64(self.learning_rate),
            self.optimizer,
            self.trainer_seed,
            textio::fmt_f64(self.margin),
            self.reduction,
            self.encoder,
            self.hidden,
            self.dim,
            self.normalize,
            textio::fmt_f64(self.theta_pos),
            textio::fmt_f64(self.theta_neg),
            self.strategy,
            self.split_seed,
            self.eval_k,
            self.metric,
        )
    }
}

fn build_train_data(
    corpus: &TagCorpus,
    tracks: &[String],
    feature_ids: &[String],
    features: &Array2<f64>,
    lsi_model: &LsiModel,
) -> Result<TrainData> {
    let row_of: BTreeMap<&str, usize> = feature_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut track_ids = Vec::with_capacity(tracks.len());
    let mut albums = Vec::with_capacity(tracks.len());
    let mut feat_rows = Vec::with_capacity(tracks.len());
    let mut lsi_rows = Vec::with_capacity(tracks.len());
    for track in tracks {
        let row = *row_of
            .get(track.as_str())
            .ok_or_else(|| Error::Data(format!("track {track} has no feature vector")))?;
        let album = corpus
            .album_of(track)
            .ok_or_else(|| Error::Data(format!("track {track} has no album")))?;
        let lsi_vec = lsi_model.track_vector(track, true)?;
        track_ids.push(track.clone());
        albums.push(album.to_string());
        feat_rows.push(row);
        lsi_rows.push(lsi_vec.values);
    }
    let k = lsi_model.k();
    Ok(TrainData {
        features: Array2::from_shape_fn((track_ids.len(), features.ncols()), |(i, j)| {
            features[[feat_rows[i], j]]
        }),
        lsi_unit: Array2::from_shape_fn((track_ids.len(), k), |(i, j)| lsi_rows[i][j]),
        track_ids,
        album_ids: albums,
    })
}

// ---------------------------------------------------------------------------
// train

pub fn cmd_train(
    cfg: &Config,
    tags: &Path,
    features: &Path,
    lsi_path: &Path,
    out: &Path,
) -> Result<()> {
    let params = pipeline_params(cfg)?;
    with_cleanup(out, |ctx| {
        ctx.record_input(tags)?;
        ctx.record_input(features)?;
        ctx.record_input(lsi_path)?;
        let corpus = tagspace::parse_tag_file(tags)?;
        let (ids, matrix) = audiofeat::load_feature_matrix(features)?;
        let lsi_model = LsiModel::load(lsi_path)?;
        let split = stratified_split(&corpus, &default_fractions(), params.split_seed)?;
        let data = build_train_data(&corpus, &split.train, &ids, &matrix, &lsi_model)?;
        let mut model = EncoderModel::new(
            params.encoder,
            &params.encoder_dims(matrix.ncols()),
            params.normalize,
            params.trainer_seed,
        )?;
        let history = trainer::train(&mut model, &data, &params.loss_config(), &params.train_config())?;
        let meta = CheckpointMeta {
            margin: params.margin,
            seed: params.trainer_seed,
            epoch: params.epochs,
        };
        let ckpt = ctx.out_dir().join("checkpoint.ckpt");
        trainer::save_checkpoint(&model, &meta, &ckpt)?;
        ctx.track(ckpt);
        ctx.write("loss_history.tsv", &trainer::loss_history_tsv(&history))?;
        ctx.write_manifest("train", cfg, params.trainer_seed)?;
        let last = history.last().unwrap();
        println!(
            "trained {} epochs on {} tracks, final mean loss {:.6}",
            history.len(),
            data.track_ids.len(),
            last.mean_loss
        );
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// embed / eval

fn embeddings_tsv(ids: &[String], embeddings: &Array2<f64>) -> String {
    let mut out = String::from("tagtriplet-embeddings 1\n");
    for (i, id) in ids.iter().enumerate() {
        let _ = write!(out, "{id}");
        for j in 0..embeddings.ncols() {
            let _ = write!(out, "\t{}", textio::fmt_f64(embeddings[[i, j]]));
        }
        out.push('\n');
    }
    out
}

pub fn load_embeddings(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    textio::check_version(lines.next(), "tagtriplet-embeddings", 1, path)?;
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap().to_string();
        let values: Vec<f64> = fields
            .map(|v| textio::parse_f64(v, path, lineno + 2))
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("line {}: track {id} has no values", lineno + 2),
            });
        }
        out.push((id, values));
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{} holds no embeddings", path.display())));
    }
    Ok(out)
}

pub fn cmd_embed(cfg: &Config, features: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    with_cleanup(out, |ctx| {
        ctx.record_input(features)?;
        ctx.record_input(checkpoint)?;
        let (ids, matrix) = audiofeat::load_feature_matrix(features)?;
        let (model, _) = trainer::load_checkpoint(checkpoint)?;
        let embeddings = trainer::embed_all(&model, &matrix)?;
        ctx.write("embeddings.tsv", &embeddings_tsv(&ids, &embeddings))?;
        ctx.write_manifest("embed", cfg, 0)?;
        println!("embedded {} tracks into {} dims", ids.len(), embeddings.ncols());
        Ok(())
    })
}

pub fn cmd_eval(cfg: &Config, tags: &Path, embeddings_path: &Path, out: &Path) -> Result<()> {
    let params = pipeline_params(cfg)?;
    let label = cfg.resolve(None, "eval.tag_set_label", "all".to_string())?;
    let topics: usize = cfg.resolve(None, "eval.lsi_topics", 0)?;
    with_cleanup(out, |ctx| {
        ctx.record_input(tags)?;
        ctx.record_input(embeddings_path)?;
        let corpus = tagspace::parse_tag_file(tags)?;
        let all = load_embeddings(embeddings_path)?;
        let by_id: BTreeMap<&str, &Vec<f64>> =
            all.iter().map(|(id, v)| (id.as_str(), v)).collect();
        let split = stratified_split(&corpus, &default_fractions(), params.split_seed)?;
        let mut pool = Vec::with_capacity(split.test.len());
        for track in &split.test {
            let vec = by_id.get(track.as_str()).ok_or_else(|| {
                Error::Data(format!("test track {track} has no embedding"))
            })?;
            pool.push((track.clone(), (*vec).clone()));
        }
        let tasks = evaluate(&pool, &corpus, params.eval_k, params.metric)?;
        let report = EvaluationReport {
            cutoff: params.eval_k,
            rows: vec![EvalRow {
                tag_set: label.clone(),
                lsi_topics: topics,
                tasks,
            }],
        };
        ctx.write("report.tsv", &report.to_tsv())?;
        ctx.write("report.txt", &report.to_text())?;
        ctx.write_manifest("eval", cfg, params.split_seed)?;
        print!("{}", report.to_text());
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// sweep

fn row_to_line(row: &EvalRow) -> String {
    let mut line = format!("{}\t{}", row.tag_set, row.lsi_topics);
    for slot in &row.tasks {
        match slot {
            Some(r) => {
                let _ = write!(line, "\t{:.6}", r.mean_precision);
            }
            None => line.push_str("\t-"),
        }
    }
    line
}

fn line_to_row(line: &str, path: &Path) -> Result<EvalRow> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 8 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("cached row has {} fields, expected 8", fields.len()),
        });
    }
    let mut tasks = [None; 6];
    for (t, raw) in fields[2..].iter().enumerate() {
        if *raw != "-" {
            tasks[t] = Some(TaskResult {
                mean_precision: textio::parse_f64(raw, path, 1)?,
                queries: 0,
                excluded: 0,
            });
        }
    }
    Ok(EvalRow {
        tag_set: fields[0].to_string(),
        lsi_topics: fields[1]
            .parse()
            .map_err(|_| Error::Format {
                path: path.to_path_buf(),
                message: format!("bad topic count {:?}", fields[1]),
            })?,
        tasks,
    })
}

fn sweep_grid(cfg: &Config) -> Result<Vec<usize>> {
    match cfg.get("sweep.grid") {
        Some(list) => parse_csv(list)
            .iter()
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::Param(format!("bad grid entry {v:?}")))
            })
            .collect(),
        None => Ok((1..=40).map(|i| i * 10).collect()),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_sweep_cell(
    corpus: &TagCorpus,
    ids: &[String],
    matrix: &Array2<f64>,
    combo: &[String],
    topics: usize,
    params: &PipelineParams,
) -> Result<EvalRow> {
    let tag_matrix = tagspace::build_matrix(corpus, combo)?;
    let k = topics.min(tag_matrix.rows()).min(tag_matrix.cols());
    let lsi_model = lsi::fit_lsi(&tag_matrix, k)?;
    let split = stratified_split(corpus, &default_fractions(), params.split_seed)?;
    // LSI covers only tracks carrying tags from this combo; train on the
    // intersection
    let trainable: Vec<String> = split
        .train
        .iter()
        .filter(|t| lsi_model.track_vector(t, true).is_ok())
        .cloned()
        .collect();
    let data = build_train_data(corpus, &trainable, ids, matrix, &lsi_model)?;
    let mut model = EncoderModel::new(
        params.encoder,
        &params.encoder_dims(matrix.ncols()),
        params.normalize,
        params.trainer_seed,
    )?;
    trainer::train(&mut model, &data, &params.loss_config(), &params.train_config())?;
    let row_of: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut pool = Vec::with_capacity(split.test.len());
    let test_features = {
        let rows: Vec<usize> = split
            .test
            .iter()
            .map(|t| {
                row_of
                    .get(t.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("test track {t} has no feature vector")))
            })
            .collect::<Result<_>>()?;
        Array2::from_shape_fn((rows.len(), matrix.ncols()), |(i, j)| matrix[[rows[i], j]])
    };
    let embedded = trainer::embed_all(&model, &test_features)?;
    for (i, track) in split.test.iter().enumerate() {
        pool.push((track.clone(), embedded.row(i).to_vec()));
    }
    let tasks = evaluate(&pool, corpus, params.eval_k, params.metric)?;
    Ok(EvalRow {
        tag_set: combo_label(combo),
        lsi_topics: topics,
        tasks,
    })
}

pub fn cmd_sweep(cfg: &Config, tags: &Path, features: &Path, out: &Path) -> Result<()> {
    let params = pipeline_params(cfg)?;
    let grid = sweep_grid(cfg)?;
    if grid.is_empty() {
        return Err(Error::Param("sweep grid is empty".into()));
    }
    with_cleanup(out, |ctx| {
        ctx.record_input(tags)?;
        ctx.record_input(features)?;
        let corpus = tagspace::parse_tag_file(tags)?;
        let (ids, matrix) = audiofeat::load_feature_matrix(features)?;
        let cache_dir = ctx.out_dir().join("cache");
        fs::create_dir_all(&cache_dir).map_err(|e| Error::io(&cache_dir, e))?;
        let input_digest = format!(
            "{}|{}|{}",
            sha256_file(tags)?,
            sha256_file(features)?,
            sha256_str(&format!("{ids:?}"))
        );
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for combo in tag_set_combos() {
            for &topics in &grid {
                let key = sha256_str(&format!(
                    "{input_digest}|{}|{topics}|{}",
                    combo_label(&combo),
                    params.digest_string()
                ));
                let cell_path = cache_dir.join(format!("{key}.row"));
                if cell_path.exists() {
                    let line = fs::read_to_string(&cell_path)
                        .map_err(|e| Error::io(&cell_path, e))?;
                    rows.push(line_to_row(line.trim_end(), &cell_path)?);
                    continue;
                }
                match run_sweep_cell(&corpus, &ids, &matrix, &combo, topics, &params) {
                    Ok(row) => {
                        fs::write(&cell_path, format!("{}\n", row_to_line(&row)))
                            .map_err(|e| Error::io(&cell_path, e))?;
                        rows.push(row);
                    }
                    Err(e) => {
                        failures.push(format!(
                            "# cell {} topics={topics} failed: {e}",
                            combo_label(&combo)
                        ));
                    }
                }
            }
        }
        let report = EvaluationReport {
            cutoff: params.eval_k,
            rows,
        };
        let mut tsv = report.to_tsv();
        for f in &failures {
            tsv.push_str(f);
            tsv.push('\n');
        }
        ctx.write("report.tsv", &tsv)?;
        ctx.write("report.txt", &report.to_text())?;
        ctx.write_manifest("sweep", cfg, params.trainer_seed)?;
        println!(
            "swept {} cells ({} failed)",
            report.rows.len() + failures.len(),
            failures.len()
        );
        Ok(())
    })
}
