//! Review ingestion, vocabularies, fixed-length encoding, pretrained
//! embeddings, behavioral features, stratified splits and synthetic corpora.

mod behavior;
mod convert;
mod embedding;
mod review;
mod split;
mod synth;
mod vocab;

pub use behavior::{behavioral_vectors, extract_behavioral, BehavioralVector, FeatureNormalizer};
pub use convert::{convert_csv, CsvLayout};
pub use embedding::{load_embeddings, EmbeddingTable};
pub use review::{load_corpus, tokenize, write_corpus, Label, LoadedCorpus, Review, ReviewRecord, ScoreScale};
pub use split::{split, split_indices};
pub use synth::{synth_corpus, token_name, SynthLayout, SynthSpec};
pub use vocab::{build_vocab, decode, encode, TokenSeq, Vocab, END_ID, END_TOKEN, UNK_ID, UNK_TOKEN};
