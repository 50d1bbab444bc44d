use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use dialectid::data::{
    encode, encode_dataset, gen_synthetic, load_dense, load_tsv, read_dense_unlabeled, split_by_class, tokenize,
    vocab_for, Dataset, FeatureMode, Features, LabelSet, SynthSpec, Vocab, DENSE_DIM,
};
use dialectid::metrics::{confusion_from_pairs, load_cm, render_heatmap, render_text, ConfusionMatrix};
use dialectid::model::{CellKind, Checkpoint, Model, ReadoutMode};
use dialectid::numerics::argmax;
use dialectid::parallel::Executor;
use dialectid::training::{evaluate_split, grad_check, tiny_problem, train_with_observer, TinySpec, DEFAULT_EPSILON};
use dialectid::{Error, Result};
use log::info;

use crate::config::{parse, parse_direction, Overrides, RunConfig};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_owned(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(io_error(path))
}

fn labels_order(path: Option<&Path>) -> Result<Option<LabelSet>> {
    path.map(LabelSet::from_order_file).transpose()
}

fn reordered(cm: ConfusionMatrix, order: Option<&LabelSet>) -> Result<ConfusionMatrix> {
    match order {
        Some(o) => cm.reorder(o),
        None => Ok(cm),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config with `model` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training data: `<text>\t<label>` lines, or dense feature lines in dense mode.
    #[arg(long)]
    pub train: PathBuf,
    /// Development data for model selection and early stopping.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch log file.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// One label per line; fixes label ids instead of lexicographic order.
    #[arg(long)]
    pub labels_order: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

struct TrainingData {
    train: Dataset,
    dev: Option<Dataset>,
    vocab: Option<Vocab>,
}

fn load_training_data(cfg: &RunConfig, args: &TrainArgs, order: Option<&LabelSet>) -> Result<TrainingData> {
    let mode = cfg.model.mode;
    if mode == FeatureMode::Dense {
        let train = load_dense(&args.train, order)?;
        let dev = args.dev.as_ref().map(|p| load_dense(p, Some(&train.labels))).transpose()?;
        return Ok(TrainingData { train, dev, vocab: None });
    }
    let text = load_tsv(&args.train, order)?;
    let vocab = vocab_for(&text, mode, cfg.model.min_freq)?;
    let seq_len = cfg.train.seq_len_for(mode);
    let train = encode_dataset(&text, &vocab, mode, seq_len)?;
    let dev = match &args.dev {
        Some(p) => Some(encode_dataset(&load_tsv(p, Some(&text.labels))?, &vocab, mode, seq_len)?),
        None => None,
    };
    Ok(TrainingData { train, dev, vocab: Some(vocab) })
}

/// Writes lines to an optional log file, keeping the first I/O error.
struct RunLog {
    path: Option<PathBuf>,
    out: Option<BufWriter<File>>,
    error: Option<io::Error>,
}

impl RunLog {
    fn create(path: Option<&Path>) -> Result<Self> {
        let out = path.map(|p| File::create(p).map(BufWriter::new).map_err(io_error(p))).transpose()?;
        Ok(RunLog { path: path.map(Path::to_owned), out, error: None })
    }

    fn line(&mut self, line: &str) {
        if let (Some(out), None) = (&mut self.out, &self.error) {
            if let Err(e) = writeln!(out, "{line}") {
                self.error = Some(e);
            }
        }
    }

    fn finish(self) -> Result<()> {
        let (Some(path), Some(mut out)) = (self.path, self.out) else { return Ok(()) };
        match self.error.map_or_else(|| out.flush(), Err) {
            Ok(()) => Ok(()),
            Err(source) => Err(Error::Io { path, source }),
        }
    }
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    args.overrides.apply(&mut cfg);
    cfg.validate()?;
    let resolved = cfg.to_json();
    info!("config {resolved}");

    let order = labels_order(args.labels_order.as_deref())?;
    let data = load_training_data(&cfg, args, order.as_ref())?;
    let labels = data.train.labels.clone();
    let vocab_size = data.vocab.as_ref().map_or(0, Vocab::len);
    info!(
        "{} training samples, {} dev samples, {} labels, vocabulary {vocab_size}",
        data.train.len(),
        data.dev.as_ref().map_or(0, Dataset::len),
        labels.len()
    );
    let model = Model::init(cfg.model.model_config(labels.len(), vocab_size), cfg.train.seed)?;

    let mut log = RunLog::create(args.log.as_deref())?;
    log.line(&format!("config {resolved}"));
    let (best, report) =
        train_with_observer(model, &data.train, data.dev.as_ref(), &cfg.train, |s| log.line(&s.log_line()))?;
    let summary = format!("best_epoch={} stopped_early={}", report.best_epoch, report.stopped_early);
    log.line(&summary);
    log.finish()?;
    info!("{summary} first_batch_loss={} wall_time={:.1}s", report.first_batch_loss, report.wall_time_secs);

    Checkpoint::new(best, labels, data.vocab)?.save(&args.out)?;
    info!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled test data in the model's feature mode.
    #[arg(long)]
    pub test: PathBuf,
    /// Row and column order of the report and heatmap.
    #[arg(long)]
    pub labels_order: Option<PathBuf>,
    /// Metric report to write.
    #[arg(long)]
    pub report: PathBuf,
    /// PGM heatmap of the confusion matrix.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// Truncation length; defaults to 256 for chars, 128 for words.
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

fn seq_len(mode: FeatureMode, flag: Option<usize>) -> Result<usize> {
    let cfg = dialectid::training::TrainConfig { max_seq_len: flag, ..Default::default() };
    cfg.validate()?;
    Ok(cfg.seq_len_for(mode))
}

fn vocab_of(ck: &Checkpoint) -> Result<&Vocab> {
    ck.vocab.as_ref().ok_or_else(|| Error::Format { line: 0, msg: "text-mode checkpoint without vocabulary".into() })
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.model)?;
    let order = labels_order(args.labels_order.as_deref())?;
    let mode = ck.model.config.mode;
    let test = if mode == FeatureMode::Dense {
        load_dense(&args.test, Some(&ck.labels))?
    } else {
        let text = load_tsv(&args.test, Some(&ck.labels))?;
        encode_dataset(&text, vocab_of(&ck)?, mode, seq_len(mode, args.max_seq_len)?)?
    };
    let evaluation = evaluate_split(&ck.model, &test, &Executor::with_threads(args.threads)?)?;
    let cm = reordered(confusion_from_pairs(&evaluation.pairs, &ck.labels)?, order.as_ref())?;
    let report = cm.report()?;
    write_file(&args.report, &render_text(&cm, &report))?;
    if let Some(h) = &args.heatmap {
        render_heatmap(&cm, h)?;
    }
    println!("{}", report.summary_line());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Unlabelled input: one excerpt per line, or `<id> <400 values>` lines for dense models.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
}

/// True when `line` has the shape of a dense feature record.
fn looks_dense(line: &str) -> bool {
    let fields: Vec<&str> = line.split_whitespace().collect();
    fields.len() > DENSE_DIM && fields[fields.len() - DENSE_DIM..].iter().all(|f| f.parse::<f64>().is_ok())
}

/// Reads one excerpt per non-blank line, keyed by 1-based line number.
fn read_text_unlabeled(path: &Path, mode: FeatureMode, vocab: &Vocab, max_len: usize) -> Result<Vec<(String, Features)>> {
    let bytes = std::fs::read(path).map_err(io_error(path))?;
    let mut rows = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let lineno = idx + 1;
        let line = std::str::from_utf8(raw).map_err(|e| Error::Format { line: lineno, msg: format!("invalid UTF-8: {e}") })?;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        if looks_dense(line) {
            return Err(Error::Format { line: lineno, msg: format!("dense feature line given to a {mode}-mode model") });
        }
        let ids = encode(&tokenize(line, mode)?, vocab, max_len)
            .map_err(|e| Error::Format { line: lineno, msg: e.to_string() })?;
        rows.push((lineno.to_string(), Features::Tokens(ids)));
    }
    Ok(rows)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.model)?;
    let mode = ck.model.config.mode;
    let rows = if mode == FeatureMode::Dense {
        read_dense_unlabeled(&args.input)?.into_iter().map(|(id, v)| (id, Features::Dense(v))).collect()
    } else {
        read_text_unlabeled(&args.input, mode, vocab_of(&ck)?, seq_len(mode, args.max_seq_len)?)?
    };
    let mut out = String::new();
    for (id, features) in rows {
        let sample = dialectid::data::Sample { features, label: 0 };
        let probs = ck.model.forward_classify(sample.view())?;
        let k = argmax(&probs);
        out.push_str(&format!("{id}\t{}\t{:.6}\n", ck.labels.name(k), probs[k]));
    }
    match &args.output {
        Some(p) => write_file(p, &out),
        None => io::stdout().write_all(out.as_bytes()).map_err(io_error(Path::new("<stdout>"))),
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["cm", "pairs"])))]
pub struct MetricsArgs {
    /// Confusion matrix TSV: header `\t<labels>`, then `<gold>\t<counts>` rows.
    #[arg(long)]
    pub cm: Option<PathBuf>,
    /// `<gold>\t<predicted>` label pairs, one per line.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub labels_order: Option<PathBuf>,
    /// Also write the full per-class report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn read_pairs(path: &Path, order: Option<&LabelSet>) -> Result<ConfusionMatrix> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    let mut named = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [gold, pred] = fields[..] else {
            return Err(Error::Format { line: idx + 1, msg: format!("expected 2 fields, found {}", fields.len()) });
        };
        named.push((gold, pred, idx + 1));
    }
    let labels = match order {
        Some(o) => o.clone(),
        None => {
            let names: std::collections::BTreeSet<&str> = named.iter().flat_map(|(g, p, _)| [*g, *p]).collect();
            LabelSet::new(names).map_err(|e| Error::Format { line: 0, msg: e.to_string() })?
        }
    };
    let id = |name: &str, line: usize| {
        labels.id(name).ok_or_else(|| Error::Format { line, msg: format!("unknown label {name:?}") })
    };
    let pairs = named.iter().map(|&(g, p, line)| Ok((id(g, line)?, id(p, line)?))).collect::<Result<Vec<_>>>()?;
    confusion_from_pairs(&pairs, &labels)
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let order = labels_order(args.labels_order.as_deref())?;
    let cm = match (&args.cm, &args.pairs) {
        (Some(p), _) => reordered(load_cm(p)?, order.as_ref())?,
        (None, Some(p)) => read_pairs(p, order.as_ref())?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let report = cm.report()?;
    if let Some(p) = &args.report {
        write_file(p, &render_text(&cm, &report))?;
    }
    println!("{}", report.summary_line());
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "char", value_parser = parse::<FeatureMode>)]
    pub mode: FeatureMode,
    #[arg(long, default_value = "lstm", value_parser = parse::<CellKind>)]
    pub cell: CellKind,
    /// `uni` or `bi`.
    #[arg(long, default_value = "bi", value_parser = parse_direction, action = clap::ArgAction::Set)]
    pub direction: bool,
    #[arg(long, default_value = "last", value_parser = parse::<ReadoutMode>)]
    pub readout: ReadoutMode,
    /// Central-difference step, within [1e-7, 1e-3].
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Check every mode, cell, direction and readout combination.
    #[arg(long, conflicts_with_all = ["mode", "cell", "direction", "readout"])]
    pub all: bool,
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let specs = if args.all {
        TinySpec::all()
    } else {
        vec![TinySpec { mode: args.mode, cell: args.cell, bidirectional: args.direction, readout: args.readout }]
    };
    let mut worst = 0.0f64;
    for spec in specs {
        let (model, batch) = tiny_problem(spec, args.seed)?;
        let r = grad_check(&model, &batch, args.epsilon)?;
        println!(
            "{spec} max_relative_error={:.3e} coordinates={} worst_coordinate={}",
            r.max_relative_error, r.coordinates_checked, r.worst_coordinate
        );
        worst = worst.max(r.max_relative_error);
    }
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Numeric(format!("max relative error {worst:.3e} >= {GRADCHECK_TOLERANCE:e}")))
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub alphabet: usize,
    /// Samples per class before the 80/10/10 split.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Dirichlet concentration of the transition rows.
    #[arg(long, default_value_t = 0.1)]
    pub concentration: f64,
    #[arg(long, default_value_t = 20)]
    pub min_len: usize,
    #[arg(long, default_value_t = 40)]
    pub max_len: usize,
    /// Writes `<prefix>.train.tsv`, `<prefix>.dev.tsv` and `<prefix>.test.tsv`.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

/// Per-class train/dev/test sizes for an 80/10/10 split.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let train = n * 8 / 10;
    let dev = n / 10;
    [train, dev, n - train - dev]
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        classes: args.classes,
        alphabet: args.alphabet,
        concentration: args.concentration,
        min_len: args.min_len,
        max_len: args.max_len,
        samples_per_class: args.samples,
        seed: args.seed,
    };
    spec.validate()?;
    if args.samples == 0 {
        return Err(Error::Config("samples must be >= 1".into()));
    }
    let parts = split_by_class(&gen_synthetic(&spec)?, &split_sizes(args.samples))?;
    for (part, name) in parts.iter().zip(["train", "dev", "test"]) {
        let mut path = args.out_prefix.clone().into_os_string();
        path.push(format!(".{name}.tsv"));
        let path = PathBuf::from(path);
        write_file(&path, &part.to_tsv())?;
        info!("wrote {} ({} samples)", path.display(), part.records.len());
    }
    Ok(())
}
