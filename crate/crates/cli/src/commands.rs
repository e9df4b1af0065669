use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use jtpred::corpus::{
    compute_stats, load_catalog, load_corpus, split_corpus, CatalogSource, JobRecord, LabelCatalog, UnknownLabelPolicy,
};
use jtpred::embed::load_vectors;
use jtpred::metrics::MatchMode;
use jtpred::model::{Checkpoint, TrainOptions};
use jtpred::par::Parallelism;
use jtpred::pipeline::{train_from_split, train_vocab};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{CliError, TrainArgs};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const CONFIG_FILE: &str = "config.json";

pub struct Context {
    pub parallelism: Parallelism,
}

impl Context {
    fn options(&self, shard_size: usize) -> TrainOptions {
        TrainOptions {
            parallelism: self.parallelism,
            shard_size,
            checked: false,
        }
    }
}

fn policy(skip_unknown: bool) -> UnknownLabelPolicy {
    if skip_unknown {
        UnknownLabelPolicy::Skip
    } else {
        UnknownLabelPolicy::Abort
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{}: no such file", path.display())))
    }
}

fn catalog_from_arg(arg: &str) -> Result<LabelCatalog, CliError> {
    let source = CatalogSource::from_arg(arg);
    if let CatalogSource::File(p) = source {
        require_file(p)?;
    }
    Ok(load_catalog(source)?)
}

fn read_records(path: &Path, catalog: &LabelCatalog, skip_unknown: bool) -> Result<Vec<JobRecord>, CliError> {
    require_file(path)?;
    Ok(load_corpus(path, catalog, policy(skip_unknown))?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn stdout_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(jtpred::Error::from)?;
    writeln!(out).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn stats(corpus: &Path, catalog: &str, skip_unknown: bool) -> Result<(), CliError> {
    let catalog = catalog_from_arg(catalog)?;
    let records = read_records(corpus, &catalog, skip_unknown)?;
    stdout_json(&compute_stats(&records)?)
}

pub fn vocab(corpus: &Path, catalog: &str, skip_unknown: bool, min_freq: usize, out: &Path) -> Result<(), CliError> {
    let catalog = catalog_from_arg(catalog)?;
    let records = read_records(corpus, &catalog, skip_unknown)?;
    let vocab = train_vocab(&records, min_freq)?;
    vocab.save(out)?;
    eprintln!("wrote {} tokens to {}", vocab.len(), out.display());
    Ok(())
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Defaults, then the config file, then flags.
pub fn resolve_run_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(&absolute(p))?,
        None => {
            let mut c = RunConfig::default();
            c.output_dir = absolute(&c.output_dir);
            c
        }
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(
        dev_fraction,
        split_seed,
        min_freq,
        embed_dim,
        max_len,
        gru_units,
        lstm_units,
        conv_filters,
        threshold,
        batch_size,
        epochs,
        seed,
        learning_rate,
        catalog
    );
    if let Some(p) = &args.train_corpus {
        cfg.train_corpus = Some(absolute(p));
    }
    if let Some(p) = &args.test_corpus {
        cfg.test_corpus = Some(absolute(p));
    }
    if let Some(p) = &args.vectors {
        cfg.vectors = Some(absolute(p));
    }
    if let Some(p) = &args.output_dir {
        cfg.output_dir = absolute(p);
    }
    if args.catalog.as_deref().is_some_and(|c| c != "builtin") {
        cfg.catalog = absolute(Path::new(&cfg.catalog)).display().to_string();
    }
    if args.freeze_embeddings {
        cfg.freeze_embeddings = true;
    }
    if args.skip_unknown {
        cfg.unknown_labels = UnknownLabelPolicy::Skip;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = resolve_run_config(&args)?;
    let catalog = catalog_from_arg(&cfg.catalog)?;
    let skip = cfg.unknown_labels == UnknownLabelPolicy::Skip;
    let train_pool = read_records(cfg.train_corpus.as_ref().expect("validated"), &catalog, skip)?;
    let test_pool = match &cfg.test_corpus {
        Some(p) => read_records(p, &catalog, skip)?,
        None => Vec::new(),
    };
    let split = split_corpus(train_pool, test_pool, cfg.dev_fraction, cfg.split_seed)?;
    log::info!(
        "split: {} train, {} dev, {} test",
        split.train.len(),
        split.dev.len(),
        split.test.len()
    );

    let vectors = match &cfg.vectors {
        Some(p) => {
            let v = load_vectors::<f32>(p)?;
            if v.dim != cfg.embed_dim {
                log::warn!("embed_dim {} replaced by the vector dimension {}", cfg.embed_dim, v.dim);
                cfg.embed_dim = v.dim;
            }
            Some(v)
        }
        None => None,
    };

    let opts = ctx.options(cfg.shard_size);
    let trained = train_from_split(
        &split,
        &catalog,
        vectors.as_ref(),
        cfg.model_config(catalog.len()),
        cfg.min_freq,
        &opts,
    )?;

    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", cfg.output_dir.display())))?;
    trained.checkpoint.save(&cfg.output_dir.join(CHECKPOINT_FILE))?;
    let mut history = Vec::new();
    for rec in &trained.history {
        serde_json::to_writer(&mut history, rec).map_err(jtpred::Error::from)?;
        history.push(b'\n');
    }
    write_file(&cfg.output_dir.join(HISTORY_FILE), &history)?;
    let resolved = serde_json::to_string_pretty(&cfg).map_err(jtpred::Error::from)? + "\n";
    write_file(&cfg.output_dir.join(CONFIG_FILE), resolved.as_bytes())?;
    print!("{resolved}");

    eprintln!(
        "best epoch {} of {}; checkpoint written to {}",
        trained.best_epoch,
        trained.history.len(),
        cfg.output_dir.join(CHECKPOINT_FILE).display()
    );
    if !split.test.is_empty() {
        let report = trained.checkpoint.evaluate(&split.test, MatchMode::Exact, 0, &opts)?;
        eprintln!("test mean example-F1: {}%", report.mean_f1_percent);
    }
    Ok(())
}

fn load_for_eval(
    checkpoint: &Path,
    corpus: &Path,
    catalog: Option<&str>,
    skip_unknown: bool,
) -> Result<(Checkpoint<f32>, Vec<JobRecord>), CliError> {
    require_file(checkpoint)?;
    let ckpt = Checkpoint::<f32>::load(checkpoint)?;
    let catalog = match catalog {
        Some(arg) => {
            let c = catalog_from_arg(arg)?;
            ckpt.check_catalog(&c)?;
            c
        }
        None => ckpt.catalog.clone(),
    };
    let records = read_records(corpus, &catalog, skip_unknown)?;
    Ok((ckpt, records))
}

fn match_mode(partial: bool) -> MatchMode {
    if partial {
        MatchMode::Partial
    } else {
        MatchMode::Exact
    }
}

pub fn eval(
    ctx: &Context,
    checkpoint: &Path,
    corpus: &Path,
    catalog: Option<&str>,
    skip_unknown: bool,
    partial: bool,
    limit: usize,
) -> Result<(), CliError> {
    let (ckpt, records) = load_for_eval(checkpoint, corpus, catalog, skip_unknown)?;
    let opts = ctx.options(jtpred::model::DEFAULT_SHARD_SIZE);
    let report = ckpt.evaluate(&records, match_mode(partial), limit, &opts)?;
    eprint!("{}", report.render_table());
    stdout_json(&report)
}

pub fn report(
    ctx: &Context,
    checkpoint: &Path,
    corpus: &Path,
    catalog: Option<&str>,
    skip_unknown: bool,
    partial: bool,
    limit: usize,
) -> Result<(), CliError> {
    let (ckpt, records) = load_for_eval(checkpoint, corpus, catalog, skip_unknown)?;
    let opts = ctx.options(jtpred::model::DEFAULT_SHARD_SIZE);
    let report = ckpt.evaluate(&records, match_mode(partial), limit, &opts)?;
    eprint!("{}", report.render_samples());
    stdout_json(&report.samples)
}

#[derive(Deserialize)]
struct PredictInput {
    id: String,
    description: String,
}

#[derive(Serialize)]
struct PredictOutput<'a> {
    id: &'a str,
    labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probs: Option<&'a [f32]>,
}

#[derive(Serialize)]
struct PredictFailure {
    line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    error: String,
}

pub fn predict(ctx: &Context, checkpoint: &Path, input: &Path, output: &Path, probs: bool) -> Result<(), CliError> {
    require_file(checkpoint)?;
    let ckpt = Checkpoint::<f32>::load(checkpoint)?;
    let reader: Box<dyn Read> = if input == Path::new("-") {
        Box::new(io::stdin())
    } else {
        require_file(input)?;
        Box::new(fs::File::open(input).map_err(|e| CliError::Runtime(format!("{}: {e}", input.display())))?)
    };

    let mut parsed: Vec<Result<PredictInput, PredictFailure>> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| CliError::Runtime(format!("{}: {e}", input.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        parsed.push(serde_json::from_str::<PredictInput>(&line).map_err(|e| {
            PredictFailure {
                line: i + 1,
                id: serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_str().map(str::to_string))),
                error: e.to_string(),
            }
        }));
    }

    let texts: Vec<&str> = parsed.iter().flatten().map(|r| r.description.as_str()).collect();
    let opts = ctx.options(jtpred::model::DEFAULT_SHARD_SIZE);
    let mut predictions = ckpt.predict_texts(&texts, &opts)?.into_iter();

    let writer: Box<dyn Write> = if output == Path::new("-") {
        Box::new(io::stdout().lock())
    } else {
        Box::new(fs::File::create(output).map_err(|e| CliError::Runtime(format!("{}: {e}", output.display())))?)
    };
    let mut out = BufWriter::new(writer);
    let mut failures = 0;
    for item in &parsed {
        let line = match item {
            Ok(rec) => {
                let p = predictions.next().expect("one prediction per parsed record");
                serde_json::to_string(&PredictOutput {
                    id: &rec.id,
                    labels: ckpt.catalog.names(&p.labels),
                    probs: probs.then_some(p.probs.as_slice()),
                })
            }
            Err(fail) => {
                failures += 1;
                eprintln!("line {}: {}", fail.line, fail.error);
                serde_json::to_string(fail)
            }
        }
        .map_err(jtpred::Error::from)?;
        writeln!(out, "{line}").map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    if failures > 0 {
        return Err(CliError::Invalid(format!(
            "{failures} input line(s) could not be parsed"
        )));
    }
    Ok(())
}
