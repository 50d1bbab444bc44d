//! Tokenization, vocabularies, dataset files, batching, and the synthetic
//! dialect generator.

mod batch;
mod dataset;
mod synth;
mod text;
mod vocab;

pub use batch::{make_batches, Batch, BatchInputs, RowView};
pub use dataset::{
    frame_dense, load_dense, load_tsv, parse_dense_line, read_dense_unlabeled, Dataset, Features,
    FeatureMode, Sample, TextDataset, TextRecord, DENSE_DIM,
};
pub use synth::{gen_synthetic, split_by_class, SynthSpec};
pub use text::{decode, encode, encode_dataset, tokenize, tokenize_chars, tokenize_words, vocab_for};
pub use vocab::{build_vocab, LabelSet, Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
