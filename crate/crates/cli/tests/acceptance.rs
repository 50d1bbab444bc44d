//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain binary
//! so the lines reach the terminal without `--nocapture`.

mod common;

use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{dialectid, fixture, s};
use dialectid::data::{
    encode_dataset, gen_synthetic, split_by_class, vocab_for, Batch, Dataset, FeatureMode, Features, LabelSet,
    RowView, Sample, SynthSpec, TextDataset, Vocab,
};
use dialectid::metrics::{accuracy, f1_scores, load_cm, ConfusionMatrix};
use dialectid::model::{
    bidirectional_forward, unroll_forward, CellKind, CellParams, Checkpoint, LstmParams, Model, ModelConfig,
    ModelParams, ReadoutMode, RnnParams,
};
use dialectid::numerics::{softmax, Prng, Stream};
use dialectid::parallel::Executor;
use dialectid::training::{clip_global_norm, evaluate_split, train, GradientSet, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use tempfile::TempDir;

/// Outcome of one criterion: pass flag plus a short measurement summary.
struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn char_model(classes: usize, vocab: usize, hidden: usize) -> ModelConfig {
    ModelConfig {
        mode: FeatureMode::Char,
        cell: CellKind::Lstm,
        bidirectional: true,
        embed_dim: 16,
        hidden_dim: hidden,
        readout: ReadoutMode::Last,
        frame_size: 20,
        class_count: classes,
        vocab_size: vocab,
    }
}

fn encoded(text: &TextDataset, vocab: &Vocab) -> Dataset {
    encode_dataset(text, vocab, FeatureMode::Char, 256).unwrap()
}

const TABLES: [(&str, f64); 6] = [
    ("dsl_char.tsv", 0.205),
    ("dsl_word.tsv", 0.195),
    ("adi_lexical.tsv", 0.246),
    ("adi_ivector.tsv", 0.577),
    ("gdi_lexical.tsv", 0.263),
    ("gdi_ivector.tsv", 0.255),
];

fn metric_accuracy() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, published) in TABLES {
        let path = fixture(name);
        let run = dialectid(["metrics", "--cm", s(&path)]);
        let printed = run.stdout.split_whitespace().next().and_then(|f| f.strip_prefix("accuracy=")).map(str::to_owned);
        let exact = accuracy(&load_cm(&path).unwrap()).unwrap();
        let ok = run.code == 0
            && (exact - published).abs() <= 0.0005
            && printed.as_deref() == Some(format!("{published:.3}").as_str());
        pass &= ok;
        parts.push(format!("{}={exact:.4}", name.trim_end_matches(".tsv")));
    }
    let elapsed = start.elapsed();
    outcome(pass && within(elapsed, 1.0), format!("{} in {:.2}s", parts.join(" "), elapsed.as_secs_f64()))
}

fn metric_f1() -> Outcome {
    let start = Instant::now();
    let lexical = f1_scores(&load_cm(fixture("adi_lexical.tsv")).unwrap()).unwrap();
    let ivector = f1_scores(&load_cm(fixture("adi_ivector.tsv")).unwrap()).unwrap();
    let checks = [
        (lexical.macro_, 0.204),
        (lexical.weighted, 0.208),
        (ivector.macro_, 0.577),
        (ivector.weighted, 0.574),
    ];
    let pass = checks.iter().all(|(got, want)| (got - want).abs() <= 0.001);
    let elapsed = start.elapsed();
    outcome(
        pass && within(elapsed, 1.0),
        format!(
            "lexical macro={:.4} weighted={:.4}; ivector macro={:.4} weighted={:.4}",
            lexical.macro_, lexical.weighted, ivector.macro_, ivector.weighted
        ),
    )
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let run = dialectid(["gradcheck", "--all"]);
    let elapsed = start.elapsed();
    let errors: Vec<f64> = run
        .stdout
        .lines()
        .filter_map(|l| l.split_whitespace().find_map(|f| f.strip_prefix("max_relative_error=")))
        .map(|v| v.parse().unwrap())
        .collect();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let pass = run.code == 0 && errors.len() == 24 && worst < 1e-5 && within(elapsed, 30.0);
    outcome(pass, format!("{} combinations, worst {worst:.2e}, {:.1}s", errors.len(), elapsed.as_secs_f64()))
}

fn initial_loss() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for classes in [2, 5, 14] {
        let spec = SynthSpec { classes, samples_per_class: 3, ..SynthSpec::default() };
        let text = gen_synthetic(&spec).unwrap();
        let vocab = vocab_for(&text, FeatureMode::Char, 1).unwrap();
        let model = Model::init(char_model(classes, vocab.len(), 8), 1).unwrap();
        let config = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let (_, report) = train(model, &encoded(&text, &vocab), None, &config).unwrap();
        let gap = (report.first_batch_loss - (classes as f64).ln()).abs();
        pass &= gap <= 1e-12;
        parts.push(format!("C={classes} |loss-lnC|={gap:.1e}"));
    }
    outcome(pass, parts.join(", "))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec { classes: 2, samples_per_class: 10, seed: 3, ..SynthSpec::default() };
    let text = gen_synthetic(&spec).unwrap();
    let vocab = vocab_for(&text, FeatureMode::Char, 1).unwrap();
    let data = encoded(&text, &vocab);
    let model = Model::init(char_model(2, vocab.len(), 16), 1).unwrap();
    let config = TrainConfig { epochs: 200, ..TrainConfig::default() };
    let (best, report) = train(model, &data, None, &config).unwrap();
    let acc = evaluate_split(&best, &data, &Executor::serial()).unwrap().accuracy;
    // Without a dev set the per-epoch selection score is full train accuracy.
    let first = report.epochs.iter().find(|e| e.dev_accuracy == 1.0).map_or(0, |e| e.epoch);
    let elapsed = start.elapsed();
    outcome(
        acc == 1.0 && first > 0 && within(elapsed, 60.0),
        format!(
            "train accuracy {acc:.3}, first reached at epoch {first}, {} epochs run, {:.1}s",
            report.epochs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Per-class symbol-transition log-probabilities with add-one smoothing.
struct BigramOracle {
    symbols: Vec<char>,
    log_probs: Vec<Vec<Vec<f64>>>,
}

impl BigramOracle {
    fn fit(train: &TextDataset, symbols: Vec<char>) -> Self {
        let a = symbols.len();
        let index = |c: char| symbols.iter().position(|&s| s == c).unwrap();
        let mut counts = vec![vec![vec![1.0f64; a]; a]; train.labels.len()];
        for r in &train.records {
            let chars: Vec<usize> = r.text.chars().map(index).collect();
            for w in chars.windows(2) {
                counts[r.label][w[0]][w[1]] += 1.0;
            }
        }
        let log_probs = counts
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|row| {
                        let total: f64 = row.iter().sum();
                        row.into_iter().map(|c| (c / total).ln()).collect()
                    })
                    .collect()
            })
            .collect();
        BigramOracle { symbols, log_probs }
    }

    fn from_transitions(transitions: &[dialectid::numerics::Matrix], symbols: Vec<char>) -> Self {
        let log_probs = transitions
            .iter()
            .map(|m| (0..m.rows()).map(|r| m.row(r).iter().map(|p| p.ln()).collect()).collect())
            .collect();
        BigramOracle { symbols, log_probs }
    }

    /// Start symbols are uniform in every class, so only transitions matter.
    fn classify(&self, text: &str) -> usize {
        let chars: Vec<usize> = text.chars().map(|c| self.symbols.iter().position(|&s| s == c).unwrap()).collect();
        let mut best = (0, f64::NEG_INFINITY);
        for (k, lp) in self.log_probs.iter().enumerate() {
            let score: f64 = chars.windows(2).map(|w| lp[w[0]][w[1]]).sum();
            if score > best.1 {
                best = (k, score);
            }
        }
        best.0
    }

    fn accuracy(&self, test: &TextDataset) -> f64 {
        let hits = test.records.iter().filter(|r| self.classify(&r.text) == r.label).count();
        hits as f64 / test.records.len() as f64
    }
}

fn separability() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec { classes: 3, alphabet: 8, concentration: 0.1, samples_per_class: 800, seed: 1, ..SynthSpec::default() };
    let text = gen_synthetic(&spec).unwrap();
    let parts = split_by_class(&text, &[600, 200]).unwrap();
    let (train_text, test_text) = (&parts[0], &parts[1]);

    let oracle = BigramOracle::fit(train_text, spec.symbols()).accuracy(test_text);
    let true_oracle = BigramOracle::from_transitions(&spec.transitions().unwrap(), spec.symbols()).accuracy(test_text);

    let vocab = vocab_for(train_text, FeatureMode::Char, 1).unwrap();
    let model = Model::init(char_model(3, vocab.len(), 16), 1).unwrap();
    let (best, report) = train(model, &encoded(train_text, &vocab), None, &TrainConfig::default()).unwrap();
    let acc = evaluate_split(&best, &encoded(test_text, &vocab), &Executor::serial()).unwrap().accuracy;
    let elapsed = start.elapsed();
    outcome(
        acc >= 0.95 && acc >= oracle - 0.02 && within(elapsed, 600.0),
        format!(
            "B-LSTM test accuracy {acc:.4} after {} epochs; bigram oracle {oracle:.4} (true transitions {true_oracle:.4}); {:.1}s",
            report.epochs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("syn");
    assert_eq!(dialectid(["synth", "--samples", "40", "--seed", "5", "--out-prefix", s(&prefix)]).code, 0);
    let train = format!("{}.train.tsv", prefix.display());
    let dev = format!("{}.dev.tsv", prefix.display());
    let run = |tag: &str, seed: &str| {
        let (model, log) = (dir.path().join(format!("{tag}.json")), dir.path().join(format!("{tag}.log")));
        let r = dialectid([
            "train", "--train", &train, "--dev", &dev, "--out", s(&model), "--log", s(&log), "--epochs", "6",
            "--hidden-dim", "8", "--threads", "1", "--seed", seed,
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        (fs::read(model).unwrap(), fs::read(log).unwrap())
    };
    let (m1, l1) = run("a", "7");
    let (m2, l2) = run("b", "7");
    let (m3, _) = run("c", "8");
    let epochs = String::from_utf8_lossy(&l1).lines().filter(|l| l.starts_with("epoch=")).count();
    outcome(
        m1 == m2 && l1 == l2 && m1 != m3 && epochs > 0,
        format!(
            "{epochs} epoch lines and {} checkpoint bytes identical across runs; other seed differs: {}",
            m1.len(),
            m1 != m3
        ),
    )
}

fn random_cell(rng: &mut Prng, cell: CellKind, d: usize, h: usize) -> CellParams {
    let mut fill = |v: &mut [f64]| v.iter_mut().for_each(|x| *x = rng.symmetric(1.0));
    match cell {
        CellKind::Lstm => {
            let mut p = LstmParams::zeros(d, h);
            for m in [&mut p.w_xi, &mut p.w_xf, &mut p.w_xc, &mut p.w_xo, &mut p.w_hi, &mut p.w_hf, &mut p.w_hc, &mut p.w_ho] {
                fill(m.as_mut_slice());
            }
            for v in [&mut p.p_i, &mut p.p_f, &mut p.p_o, &mut p.b_i, &mut p.b_f, &mut p.b_c, &mut p.b_o] {
                fill(v);
            }
            CellParams::Lstm(p)
        }
        CellKind::Rnn => {
            let mut p = RnnParams::zeros(d, h);
            fill(p.w_xh.as_mut_slice());
            fill(p.w_hh.as_mut_slice());
            fill(&mut p.b_h);
            CellParams::Rnn(p)
        }
    }
}

fn random_inputs(rng: &mut Prng, t: usize, d: usize) -> Vec<Vec<f64>> {
    (0..t).map(|_| (0..d).map(|_| rng.symmetric(2.0)).collect()).collect()
}

fn word_model(seed: u64, cell: CellKind, readout: ReadoutMode, scale: f64) -> Model {
    let config = ModelConfig {
        mode: FeatureMode::Word,
        cell,
        bidirectional: true,
        embed_dim: 3,
        hidden_dim: 4,
        readout,
        frame_size: 20,
        class_count: 3,
        vocab_size: 8,
    };
    let mut params = ModelParams::zeros(&config);
    params.randomize(&mut Prng::new(seed, Stream::GradCheck), scale);
    Model::new(config, params).unwrap()
}

fn cell_kind() -> impl Strategy<Value = CellKind> {
    prop_oneof![Just(CellKind::Lstm), Just(CellKind::Rnn)]
}

fn readout_mode() -> impl Strategy<Value = ReadoutMode> {
    prop_oneof![Just(ReadoutMode::Last), Just(ReadoutMode::Mean)]
}

const PROPERTY_CASES: u32 = 256;

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<String, String> {
    let config = RunnerConfig { cases: PROPERTY_CASES, failure_persistence: None, ..RunnerConfig::default() };
    let mut runner = TestRunner::new(config);
    match runner.run(&strategy, test) {
        Ok(()) => Ok(name.to_owned()),
        Err(e) => Err(format!("{name}: {e}")),
    }
}

fn properties() -> Outcome {
    let results = [
        run_property("softmax", (prop::collection::vec(-700.0f64..700.0, 1..20), -50.0f64..50.0), |(z, shift)| {
            let p = softmax(&z).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let q = softmax(&z.iter().map(|v| v + shift).collect::<Vec<_>>()).unwrap();
            prop_assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12));
            Ok(())
        }),
        run_property("causality", (any::<u64>(), cell_kind(), 2usize..8), |(seed, cell, t)| {
            let mut rng = Prng::new(seed, Stream::Synth);
            let params = random_cell(&mut rng, cell, 3, 4);
            let inputs = random_inputs(&mut rng, t, 3);
            let step = rng.below(t);
            let mut changed = inputs.clone();
            changed[step][0] += 1.0;
            let a = unroll_forward(&inputs, &params).unwrap().hidden;
            let b = unroll_forward(&changed, &params).unwrap().hidden;
            prop_assert_eq!(&a[..step], &b[..step]);
            Ok(())
        }),
        run_property("reversal duality", (any::<u64>(), cell_kind(), 1usize..8), |(seed, cell, t)| {
            let mut rng = Prng::new(seed, Stream::Synth);
            let (f, b) = (random_cell(&mut rng, cell, 3, 4), random_cell(&mut rng, cell, 3, 4));
            let inputs = random_inputs(&mut rng, t, 3);
            let (_, hb) = bidirectional_forward(&inputs, &f, &b).unwrap();
            let reversed: Vec<_> = inputs.iter().rev().cloned().collect();
            let mut expect = unroll_forward(&reversed, &b).unwrap().hidden;
            expect.reverse();
            prop_assert_eq!(hb, expect);
            Ok(())
        }),
        run_property(
            "padding neutrality",
            (any::<u64>(), cell_kind(), readout_mode(), prop::collection::vec(1usize..8, 1..7), 1usize..5),
            |(seed, cell, readout, ids, pads)| {
                let model = word_model(seed, cell, readout, 1.0);
                let plain = model.forward_classify(RowView::Tokens { ids: &ids, mask: None }).unwrap();
                let mut padded = ids.clone();
                padded.resize(ids.len() + pads, 0);
                let mask: Vec<bool> = (0..padded.len()).map(|i| i < ids.len()).collect();
                let out = model.forward_classify(RowView::Tokens { ids: &padded, mask: Some(&mask) }).unwrap();
                prop_assert!(plain.iter().zip(&out).all(|(a, b)| (a - b).abs() < 1e-12));
                Ok(())
            },
        ),
        run_property(
            "micro-F1 == accuracy",
            (2usize..10).prop_flat_map(|l| prop::collection::vec(prop::collection::vec(0u64..50, l), l)),
            |counts| {
                prop_assume!(counts.iter().flatten().sum::<u64>() > 0);
                let labels = LabelSet::new((0..counts.len()).map(|i| format!("l{i}"))).unwrap();
                let cm = ConfusionMatrix::from_counts(labels, counts).unwrap();
                prop_assert_eq!(f1_scores(&cm).unwrap().micro, accuracy(&cm).unwrap());
                Ok(())
            },
        ),
        run_property(
            "checkpoint round trip",
            (any::<u64>(), cell_kind(), readout_mode(), 1e-6f64..1e3),
            |(seed, cell, readout, scale)| {
                let model = word_model(seed, cell, readout, scale);
                let vocab = Vocab::from_tokens(["<pad>", "<unk>", "a", "b", "c", "d", "e", "f"].map(String::from).to_vec()).unwrap();
                let ck = Checkpoint::new(model, LabelSet::new(["x", "y", "z"]).unwrap(), Some(vocab)).unwrap();
                let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
                let bits = |m: &Model| m.params.to_flat().into_iter().map(f64::to_bits).collect::<Vec<_>>();
                prop_assert_eq!(bits(&back.model), bits(&ck.model));
                Ok(())
            },
        ),
        run_property("clip-norm contract", (any::<u64>(), 0.001f64..10.0, 0.01f64..5.0), |(seed, scale, threshold)| {
            let mut g = GradientSet(word_model(seed, CellKind::Lstm, ReadoutMode::Last, scale).params);
            let before = g.clone();
            let norm = clip_global_norm(&mut g, threshold);
            prop_assert!((g.norm() - norm.min(threshold)).abs() < 1e-12 * norm.max(1.0));
            if norm <= threshold {
                prop_assert_eq!(g, before);
            }
            Ok(())
        }),
        run_property("batch padding", (any::<u64>(), prop::collection::vec(1usize..8, 1..6), 2usize..5), |(seed, ids, copies)| {
            let model = word_model(seed, CellKind::Lstm, ReadoutMode::Mean, 0.7);
            let short = Sample { features: Features::Tokens(ids[..1].to_vec()), label: 0 };
            let long = Sample { features: Features::Tokens(ids.clone()), label: 1 };
            let one = Batch::from_samples(&[&short]).unwrap();
            let mut refs = vec![&long; copies];
            refs.push(&short);
            let mixed = Batch::from_samples(&refs).unwrap();
            let alone = model.forward_classify(one.row(0)).unwrap();
            let padded = model.forward_classify(mixed.row(copies)).unwrap();
            prop_assert!(alone.iter().zip(&padded).all(|(a, b)| (a - b).abs() < 1e-12));
            Ok(())
        }),
    ];
    let passed: Vec<String> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let failed: Vec<String> = results.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
    let detail = if failed.is_empty() {
        format!("{} properties x {PROPERTY_CASES} cases: {}", passed.len(), passed.join(", "))
    } else {
        format!("failed: {}", failed.join("; "))
    };
    outcome(failed.is_empty(), detail)
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric oracle: accuracy", metric_accuracy),
        ("metric oracle: F1", metric_f1),
        ("gradient correctness", gradient_correctness),
        ("initialization anchor", initial_loss),
        ("overfit sanity", overfit),
        ("synthetic separability", separability),
        ("determinism", determinism),
        ("property suites", properties),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut stdout = std::io::stdout();
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !result.pass {
            failures += 1;
        }
        let status = if result.pass { "PASS" } else { "FAIL" };
        writeln!(stdout, "{status} [{}] {name}: {}", i + 1, result.detail).unwrap();
        stdout.flush().unwrap();
    }
    if failures > 0 {
        writeln!(stdout, "{failures} criteria failed").unwrap();
        std::process::exit(1);
    }
}
