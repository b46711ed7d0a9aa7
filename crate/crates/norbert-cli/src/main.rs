//! `norbert` — pipeline front end: synthesize corpora, build vocabularies,
//! pretrain the encoder, train co-occurrence baselines, run the downstream
//! classifier, and explore embeddings.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 I/O or format error,
//! 3 numerical failure.

mod manifest;

use clap::{ArgAction, Args, Parser, Subcommand};
use manifest::RunManifest;
use norbert_core::analysis::{
    assign_groups, export_points, nearest_neighbors, project_2d, write_neighbors_tsv,
    ProjectionConfig, ProjectionMethod, TsneTrace,
};
use norbert_core::baselines::{
    count_cooccurrence, glove_train, random_table, EmbeddingTable, GloveConfig,
};
use norbert_core::corpus::{
    build_sequences, generate_synthetic, parse_events, parse_labels, write_events_tsv,
    write_labels_tsv, StopList, SynthConfig, TokenSequence,
};
use norbert_core::downstream::{
    evaluate_cross, load_classifier, save_classifier, split_dataset, train_classifier,
    weighted_f1, ClassifierFile, EmbeddingSource, F1Json, GruConfig, LabeledDataset, Task,
};
use norbert_core::encoder::{load_checkpoint, save_checkpoint, EncoderConfig};
use norbert_core::pretrain::{
    encode_sequences, pretrain, sequence_tokens_to_ids, PretrainConfig,
};
use norbert_core::tokenizer::{TokenizerConfig, TruncateMode, Vocabulary};
use norbert_core::{Error, Result};
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "norbert",
    version,
    about = "Contextual embeddings for network categorical tokens"
)]
struct Cli {
    /// Directory all relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,

    /// Keep internal parallelism in its deterministic mode.
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize, Clone)]
struct TokenizeArgs {
    /// FQDN truncation level.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// rightmost keeps the TLD side; leftmost-literal keeps the host side.
    #[arg(long, value_enum, default_value = "rightmost")]
    mode: Mode,
    /// Stop-domain suffixes filtered before modeling.
    #[arg(long = "stop-suffix", default_values_t = ["in-addr.arpa".to_string(), "ip6.arpa".to_string()])]
    stop_suffixes: Vec<String>,
}

#[derive(clap::ValueEnum, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Rightmost,
    LeftmostLiteral,
}

impl From<Mode> for TruncateMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Rightmost => TruncateMode::Rightmost,
            Mode::LeftmostLiteral => TruncateMode::LeftmostLiteral,
        }
    }
}

impl TokenizeArgs {
    fn tokenizer(&self) -> TokenizerConfig {
        TokenizerConfig {
            k: self.k,
            mode: self.mode.into(),
            min_count: 1,
        }
    }

    fn stops(&self) -> StopList {
        StopList::new(self.stop_suffixes.clone())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate deterministic synthetic multi-environment DNS traffic.
    Synth(SynthCmd),
    /// Build the token vocabulary from an event log.
    Vocab(VocabCmd),
    /// Pretrain the encoder with the masked-token objective.
    Pretrain(PretrainCmd),
    /// Train co-occurrence (GloVe-style) embeddings.
    Glove(GloveCmd),
    /// Emit a random embedding table.
    RandomEmb(RandomEmbCmd),
    /// Train the GRU device classifier under an embedding regime.
    TrainCls(TrainClsCmd),
    /// Evaluate a trained classifier on an independent dataset (seen classes).
    EvalCross(EvalCrossCmd),
    /// Nearest neighbors of a token by cosine similarity.
    Nn(NnCmd),
    /// Mean-pooled contextual sequence embeddings for per-device windows.
    EmbedSeq(EmbedSeqCmd),
    /// Project vectors to 2-D (PCA or exact t-SNE).
    Project(ProjectCmd),
}

#[derive(Args, Serialize)]
struct SynthCmd {
    #[arg(long, default_value_t = 8)]
    types: usize,
    #[arg(long, default_value_t = 4)]
    devices_per_type: usize,
    #[arg(long, default_value_t = 2)]
    environments: usize,
    #[arg(long, default_value_t = 4)]
    families: usize,
    #[arg(long, default_value_t = 2)]
    variants: usize,
    #[arg(long, default_value_t = 1024)]
    queries: usize,
    #[arg(long, default_value_t = 0.5)]
    bg_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "events.tsv")]
    events_out: PathBuf,
    #[arg(long, default_value = "labels.tsv")]
    labels_out: PathBuf,
}

#[derive(Args, Serialize)]
struct VocabCmd {
    #[arg(long)]
    events: PathBuf,
    #[command(flatten)]
    tok: TokenizeArgs,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    #[arg(long, default_value = "vocab.tsv")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PretrainCmd {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    tok: TokenizeArgs,
    /// Embedding dimension D.
    #[arg(long, default_value_t = 128)]
    dim: usize,
    /// Attention heads h.
    #[arg(long, default_value_t = 8)]
    heads: usize,
    /// Encoder layers l.
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 512)]
    ffn_dim: usize,
    /// Maximum (and stored) sequence length.
    #[arg(long, default_value_t = 64)]
    max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Batch size b.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Training lengths, resampled every batch.
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64])]
    lengths: Vec<usize>,
    /// Base learning rate (linearly annealed to 0).
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long, default_value_t = 3000)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "checkpoint.nbrt")]
    out: PathBuf,
    #[arg(long, default_value = "loss.csv")]
    trace: PathBuf,
}

#[derive(Args, Serialize)]
struct GloveCmd {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    tok: TokenizeArgs,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 100.0)]
    x_max: f64,
    #[arg(long, default_value_t = 0.75)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    /// Sequence length used when windowing the corpus.
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "embeddings.txt")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct RandomEmbCmd {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "embeddings.txt")]
    out: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
enum TaskArg {
    Type,
    Manufacturer,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Type => Task::DeviceType,
            TaskArg::Manufacturer => Task::Manufacturer,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum RegimeArg {
    Random,
    Glove,
    Norbert,
}

#[derive(Args, Serialize)]
struct TrainClsCmd {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    tok: TokenizeArgs,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum)]
    regime: RegimeArg,
    /// Embedding table file (glove regime; optional override for random).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Encoder checkpoint (norbert regime).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Fine-tune a glove table instead of freezing it.
    #[arg(long, default_value_t = false)]
    fine_tune: bool,
    /// Train fraction of the stratified split.
    #[arg(long, default_value_t = 0.75)]
    split: f64,
    #[arg(long, default_value_t = 100)]
    min_support: usize,
    /// Sequence length N.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// GRU hidden features h.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// GRU layers l.
    #[arg(long, default_value_t = 2)]
    cls_layers: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    /// GRU batch size b.
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "classifier.ngru")]
    model_out: PathBuf,
    #[arg(long, default_value = "f1.json")]
    report_out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalCrossCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "f1-cross.json")]
    report_out: PathBuf,
}

#[derive(Args, Serialize)]
struct NnCmd {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// TSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EmbedSeqCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    tok: TokenizeArgs,
    /// Sequence length N.
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value = "sequence-vectors.txt")]
    out: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Pca,
    Tsne,
}

#[derive(Args, Serialize)]
struct ProjectCmd {
    /// Vector file in the embedding text format (`item v1 ... vD`).
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long, value_enum, default_value = "tsne")]
    method: MethodArg,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    tsne_lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `prefix=group` pairs labeling items by longest prefix match.
    #[arg(long = "group-prefix")]
    group_prefixes: Vec<String>,
    #[arg(long, default_value = "projection.tsv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Validation(_) => 1,
                Error::Numeric(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

/// `NORBERT_SEED` overrides every subcommand seed when set.
fn env_seed(flag_seed: u64) -> Result<u64> {
    match std::env::var("NORBERT_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| Error::validation(format!("NORBERT_SEED must be an integer, got {v:?}"))),
        Err(_) => Ok(flag_seed),
    }
}

fn run(cli: Cli) -> Result<()> {
    let wd = &cli.workdir;
    std::fs::create_dir_all(wd)?;
    match cli.command {
        Command::Synth(cmd) => run_synth(wd, cmd, cli.deterministic),
        Command::Vocab(cmd) => run_vocab(wd, cmd, cli.deterministic),
        Command::Pretrain(cmd) => run_pretrain(wd, cmd, cli.deterministic),
        Command::Glove(cmd) => run_glove(wd, cmd, cli.deterministic),
        Command::RandomEmb(cmd) => run_random_emb(wd, cmd, cli.deterministic),
        Command::TrainCls(cmd) => run_train_cls(wd, cmd, cli.deterministic),
        Command::EvalCross(cmd) => run_eval_cross(wd, cmd, cli.deterministic),
        Command::Nn(cmd) => run_nn(wd, cmd, cli.deterministic),
        Command::EmbedSeq(cmd) => run_embed_seq(wd, cmd, cli.deterministic),
        Command::Project(cmd) => run_project(wd, cmd, cli.deterministic),
    }
}

fn in_dir(wd: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        wd.join(p)
    }
}

fn load_events(path: &Path) -> Result<Vec<norbert_core::corpus::DnsEvent>> {
    let parsed = parse_events(BufReader::new(File::open(path)?))?;
    if parsed.skipped > 0 {
        eprintln!("warning: skipped {} malformed event lines", parsed.skipped);
    }
    Ok(parsed.events)
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::read_tsv(BufReader::new(File::open(path)?))
}

fn run_synth(wd: &Path, cmd: SynthCmd, deterministic: bool) -> Result<()> {
    let seed = env_seed(cmd.seed)?;
    let cfg = SynthConfig {
        num_device_types: cmd.types,
        devices_per_type_per_env: cmd.devices_per_type,
        environments: cmd.environments,
        service_families_per_type: cmd.families,
        variants_per_family: cmd.variants,
        queries_per_device: cmd.queries,
        shared_background_fraction: cmd.bg_fraction,
        seed,
    };
    cfg.validate()?;
    let events_out = in_dir(wd, &cmd.events_out);
    let labels_out = in_dir(wd, &cmd.labels_out);
    RunManifest::new("synth", &cfg, &[], Some(seed), &[&events_out, &labels_out], deterministic)?
        .write(wd)?;

    let (events, labels) = generate_synthetic(&cfg)?;
    write_events_tsv(&events, BufWriter::new(File::create(&events_out)?))?;
    write_labels_tsv(&labels, BufWriter::new(File::create(&labels_out)?))?;
    eprintln!(
        "wrote {} events for {} devices",
        events.len(),
        labels.len()
    );
    Ok(())
}

fn run_vocab(wd: &Path, cmd: VocabCmd, deterministic: bool) -> Result<()> {
    let events_path = in_dir(wd, &cmd.events);
    let out = in_dir(wd, &cmd.out);
    RunManifest::new("vocab", &cmd, &[&events_path], None, &[&out], deterministic)?.write(wd)?;

    let tokenizer = TokenizerConfig {
        min_count: cmd.min_count,
        ..cmd.tok.tokenizer()
    };
    tokenizer.validate()?;
    let stops = cmd.tok.stops();
    let events = load_events(&events_path)?;
    let mut tokens = Vec::with_capacity(events.len());
    for ev in &events {
        if !stops.is_stop_domain(&ev.fqdn) {
            tokens.push(tokenizer.truncate(&ev.fqdn)?);
        }
    }
    let (vocab, empty) = Vocabulary::build(tokens.iter().map(|s| s.as_str()), cmd.min_count);
    if empty {
        eprintln!("warning: empty token stream; vocabulary holds reserved tokens only");
    }
    vocab.write_tsv(BufWriter::new(File::create(&out)?))?;
    eprintln!("vocabulary of {} tokens", vocab.len());
    Ok(())
}

fn sequences_for(
    events_path: &Path,
    n: usize,
    tok: &TokenizeArgs,
) -> Result<Vec<TokenSequence>> {
    let events = load_events(events_path)?;
    build_sequences(&events, n, &tok.tokenizer(), &tok.stops())
}

fn run_pretrain(wd: &Path, cmd: PretrainCmd, deterministic: bool) -> Result<()> {
    let seed = env_seed(cmd.seed)?;
    let events_path = in_dir(wd, &cmd.events);
    let vocab_path = in_dir(wd, &cmd.vocab);
    let out = in_dir(wd, &cmd.out);
    let trace_path = in_dir(wd, &cmd.trace);
    RunManifest::new(
        "pretrain",
        &cmd,
        &[&events_path, &vocab_path],
        Some(seed),
        &[&out, &trace_path],
        deterministic,
    )?
    .write(wd)?;

    let vocab = load_vocab(&vocab_path)?;
    let seqs = sequences_for(&events_path, cmd.max_len, &cmd.tok)?;
    let corpus = encode_sequences(&seqs, &vocab);
    drop(seqs);

    let enc_cfg = EncoderConfig {
        dim: cmd.dim,
        heads: cmd.heads,
        layers: cmd.layers,
        ffn_dim: cmd.ffn_dim,
        max_len: cmd.max_len,
        vocab_size: vocab.len(),
        dropout: cmd.dropout,
    };
    let pre_cfg = PretrainConfig {
        batch_size: cmd.batch_size,
        lengths: cmd.lengths.clone(),
        base_lr: cmd.lr,
        weight_decay: cmd.weight_decay,
        total_steps: cmd.steps,
        seed,
        ..Default::default()
    };
    let (model, trace) = pretrain(&corpus, &enc_cfg, &pre_cfg)?;

    save_checkpoint(&model, &vocab.content_hash(), &out)?;
    let mut w = BufWriter::new(File::create(&trace_path)?);
    writeln!(w, "step,lr,loss")?;
    for row in &trace {
        writeln!(w, "{},{},{}", row.step, row.lr, row.loss)?;
    }
    eprintln!(
        "pretrained {} steps over {} sequences (final loss {:.4})",
        cmd.steps,
        corpus.len(),
        trace.last().map(|r| r.loss).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn run_glove(wd: &Path, cmd: GloveCmd, deterministic: bool) -> Result<()> {
    let seed = env_seed(cmd.seed)?;
    let events_path = in_dir(wd, &cmd.events);
    let vocab_path = in_dir(wd, &cmd.vocab);
    let out = in_dir(wd, &cmd.out);
    RunManifest::new(
        "glove",
        &cmd,
        &[&events_path, &vocab_path],
        Some(seed),
        &[&out],
        deterministic,
    )?
    .write(wd)?;

    let vocab = load_vocab(&vocab_path)?;
    let seqs = sequences_for(&events_path, cmd.n, &cmd.tok)?;
    let corpus = encode_sequences(&seqs, &vocab);
    let cooc = count_cooccurrence(&corpus, cmd.window)?;
    let cfg = GloveConfig {
        dim: cmd.dim,
        window: cmd.window,
        x_max: cmd.x_max,
        alpha: cmd.alpha,
        lr: cmd.lr,
        epochs: cmd.epochs,
        seed,
    };
    let (table, objective) = glove_train(&cooc, &cfg, &vocab)?;
    table.write_text(BufWriter::new(File::create(&out)?))?;
    eprintln!(
        "co-occurrence training over {} nonzeros, objective {:.2} -> {:.2}",
        cooc.nonzeros(),
        objective.first().unwrap_or(&f64::NAN),
        objective.last().unwrap_or(&f64::NAN)
    );
    Ok(())
}

fn run_random_emb(wd: &Path, cmd: RandomEmbCmd, deterministic: bool) -> Result<()> {
    let seed = env_seed(cmd.seed)?;
    let vocab_path = in_dir(wd, &cmd.vocab);
    let out = in_dir(wd, &cmd.out);
    RunManifest::new("random-emb", &cmd, &[&vocab_path], Some(seed), &[&out], deterministic)?
        .write(wd)?;
    let vocab = load_vocab(&vocab_path)?;
    let table = random_table(&vocab, cmd.dim, seed)?;
    table.write_text(BufWriter::new(File::create(&out)?))?;
    Ok(())
}

fn run_train_cls(wd: &Path, cmd: TrainClsCmd, deterministic: bool) -> Result<()> {
    let seed = env_seed(cmd.seed)?;
    let events_path = in_dir(wd, &cmd.events);
    let labels_path = in_dir(wd, &cmd.labels);
    let vocab_path = in_dir(wd, &cmd.vocab);
    let model_out = in_dir(wd, &cmd.model_out);
    let report_out = in_dir(wd, &cmd.report_out);

    // regime prerequisites checked before any work
    let source_path = match cmd.regime {
        RegimeArg::Norbert => Some(in_dir(
            wd,
            cmd.checkpoint.as_ref().ok_or_else(|| {
                Error::validation("--regime norbert requires --checkpoint")
            })?,
        )),
        RegimeArg::Glove => Some(in_dir(
            wd,
            cmd.embeddings.as_ref().ok_or_else(|| {
                Error::validation("--regime glove requires --embeddings")
            })?,
        )),
        RegimeArg::Random => cmd.embeddings.as_ref().map(|p| in_dir(wd, p)),
    };
    let mut inputs: Vec<&Path> = vec![&events_path, &labels_path, &vocab_path];
    if let Some(p) = &source_path {
        inputs.push(p);
    }
    RunManifest::new(
        "train-cls",
        &cmd,
        &inputs,
        Some(seed),
        &[&model_out, &report_out],
        deterministic,
    )?
    .write(wd)?;

    let vocab = load_vocab(&vocab_path)?;
    let (labels, dups) = parse_labels(BufReader::new(File::open(&labels_path)?))?;
    if dups > 0 {
        eprintln!("warning: {dups} duplicate device labels (last record wins)");
    }
    let seqs = sequences_for(&events_path, cmd.n, &cmd.tok)?;
    let dataset = LabeledDataset::from_sequences(&seqs, &labels, &vocab)?;
    let task: Task = cmd.task.into();
    let (train, test) = split_dataset(&dataset, task, cmd.split, seed, cmd.min_support)?;

    let source = match cmd.regime {
        RegimeArg::Random => {
            let table = match &source_path {
                Some(p) => EmbeddingTable::read_text(BufReader::new(File::open(p)?))?,
                None => random_table(&vocab, cmd.dim, seed)?,
            };
            EmbeddingSource::Random(table)
        }
        RegimeArg::Glove => EmbeddingSource::Glove {
            table: EmbeddingTable::read_text(BufReader::new(File::open(
                source_path.as_ref().unwrap(),
            )?))?,
            fine_tune: cmd.fine_tune,
        },
        RegimeArg::Norbert => {
            let model = load_checkpoint(
                source_path.as_ref().unwrap(),
                Some(&vocab.content_hash()),
            )?;
            EmbeddingSource::Norbert(model)
        }
    };

    let gru_cfg = GruConfig {
        input_dim: cmd.dim,
        hidden: cmd.hidden,
        layers: cmd.cls_layers,
        batch_size: cmd.batch_size,
        lr: cmd.lr,
        n: cmd.n,
        epochs: cmd.epochs,
        seed,
    };
    let (classifier, losses) = train_classifier(&train, source, &gru_cfg, task)?;
    let preds = classifier.predict(&test.sequences)?;
    let report = weighted_f1(&preds, test.labels(task), &classifier.classes)?;
    eprintln!(
        "train loss {:.4} -> {:.4}; held-out weighted F1 {:.4}",
        losses.first().unwrap_or(&f64::NAN),
        losses.last().unwrap_or(&f64::NAN),
        report.weighted_f1
    );

    let regime = classifier.regime;
    save_classifier(
        &ClassifierFile {
            classifier,
            vocab,
            tokenizer: TokenizerConfig {
                min_count: 1,
                ..cmd.tok.tokenizer()
            },
        },
        &model_out,
    )?;
    let json = F1Json::new(task, regime, report, 0);
    serde_json::to_writer_pretty(BufWriter::new(File::create(&report_out)?), &json)
        .map_err(|e| Error::format(format!("report: {e}")))?;
    Ok(())
}

fn run_eval_cross(wd: &Path, cmd: EvalCrossCmd, deterministic: bool) -> Result<()> {
    let model_path = in_dir(wd, &cmd.model);
    let events_path = in_dir(wd, &cmd.events);
    let labels_path = in_dir(wd, &cmd.labels);
    let report_out = in_dir(wd, &cmd.report_out);
    RunManifest::new(
        "eval-cross",
        &cmd,
        &[&model_path, &events_path, &labels_path],
        None,
        &[&report_out],
        deterministic,
    )?
    .write(wd)?;

    let file = load_classifier(&model_path)?;
    let (labels, _) = parse_labels(BufReader::new(File::open(&labels_path)?))?;
    let events = load_events(&events_path)?;
    let seqs = build_sequences(
        &events,
        file.classifier.config.n,
        &file.tokenizer,
        &StopList::default(),
    )?;
    let dataset = LabeledDataset::from_sequences(&seqs, &labels, &file.vocab)?;
    let (report, dropped) = evaluate_cross(&file.classifier, &dataset)?;
    eprintln!(
        "cross-dataset weighted F1 {:.4} ({} unseen-class instances dropped)",
        report.weighted_f1, dropped
    );
    let json = F1Json::new(file.classifier.task, file.classifier.regime, report, dropped);
    serde_json::to_writer_pretty(BufWriter::new(File::create(&report_out)?), &json)
        .map_err(|e| Error::format(format!("report: {e}")))?;
    Ok(())
}

fn run_nn(wd: &Path, cmd: NnCmd, deterministic: bool) -> Result<()> {
    let emb_path = in_dir(wd, &cmd.embeddings);
    let out = cmd.out.as_ref().map(|p| in_dir(wd, p));
    let outs: Vec<&Path> = out.iter().map(|p| p.as_path()).collect();
    RunManifest::new("nn", &cmd, &[&emb_path], None, &outs, deterministic)?.write(wd)?;

    let table = EmbeddingTable::read_text(BufReader::new(File::open(&emb_path)?))?;
    let result = nearest_neighbors(&cmd.query, &table, cmd.top)?;
    match out {
        Some(path) => write_neighbors_tsv(&result, BufWriter::new(File::create(path)?))?,
        None => write_neighbors_tsv(&result, std::io::stdout().lock())?,
    }
    Ok(())
}

fn run_embed_seq(wd: &Path, cmd: EmbedSeqCmd, deterministic: bool) -> Result<()> {
    let ckpt_path = in_dir(wd, &cmd.checkpoint);
    let events_path = in_dir(wd, &cmd.events);
    let vocab_path = in_dir(wd, &cmd.vocab);
    let out = in_dir(wd, &cmd.out);
    RunManifest::new(
        "embed-seq",
        &cmd,
        &[&ckpt_path, &events_path, &vocab_path],
        None,
        &[&out],
        deterministic,
    )?
    .write(wd)?;

    let vocab = load_vocab(&vocab_path)?;
    let model = load_checkpoint(&ckpt_path, Some(&vocab.content_hash()))?;
    let seqs = sequences_for(&events_path, cmd.n, &cmd.tok)?;
    if seqs.is_empty() {
        return Err(Error::validation("no sequences of the requested length"));
    }
    let mut w = BufWriter::new(File::create(&out)?);
    for seq in &seqs {
        let ids = sequence_tokens_to_ids(seq, &vocab);
        let mean = norbert_core::analysis::sequence_embedding_ids(&model, &ids)?;
        write!(w, "{}@{}", seq.device_id, seq.start_time)?;
        for v in mean {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    eprintln!("embedded {} sequences", seqs.len());
    Ok(())
}

fn run_project(wd: &Path, cmd: ProjectCmd, deterministic: bool) -> Result<()> {
    let seed = env_seed(cmd.seed)?;
    let vectors_path = in_dir(wd, &cmd.vectors);
    let out = in_dir(wd, &cmd.out);
    RunManifest::new("project", &cmd, &[&vectors_path], Some(seed), &[&out], deterministic)?
        .write(wd)?;

    let table = EmbeddingTable::read_text(BufReader::new(File::open(&vectors_path)?))?;
    let cfg = ProjectionConfig {
        method: match cmd.method {
            MethodArg::Pca => ProjectionMethod::Pca,
            MethodArg::Tsne => ProjectionMethod::Tsne,
        },
        perplexity: cmd.perplexity,
        iterations: cmd.iterations,
        tsne_lr: cmd.tsne_lr,
        seed,
    };
    let mut prefix_groups = Vec::new();
    for spec in &cmd.group_prefixes {
        let (prefix, group) = spec.rsplit_once('=').ok_or_else(|| {
            Error::validation(format!("--group-prefix expects prefix=group, got {spec:?}"))
        })?;
        let group: u32 = group
            .parse()
            .map_err(|_| Error::validation(format!("bad group number in {spec:?}")))?;
        prefix_groups.push((prefix.to_string(), group));
    }

    let mut data = Vec::with_capacity(table.rows() * table.dim());
    for i in 0..table.rows() {
        data.extend_from_slice(table.row(i));
    }
    let mut trace = TsneTrace::default();
    let coords = project_2d(&data, table.dim(), &cfg, Some(&mut trace))?;
    for (iter, kl) in &trace.kl {
        eprintln!("iteration {iter}: KL {kl:.4}");
    }
    let groups = assign_groups(table.tokens(), &prefix_groups);
    export_points(
        table.tokens(),
        &coords,
        &groups,
        BufWriter::new(File::create(&out)?),
    )?;
    eprintln!("projected {} points", table.rows());
    Ok(())
}
