//! Corpus schema, tokenisation, vocabulary, splits and synthetic data.

mod corpus;
mod embeddings;
mod split;
mod synth;
mod tokenize;
mod vocab;

pub use corpus::{load_corpus, write_corpus, Emotion, LabeledExample};
pub use embeddings::{load_embeddings, random_embeddings, INIT_RANGE};
pub use split::{compute_fixing_length, kfold, stratified_split, Fold, Split, MIN_CLASS_COUNT};
pub use synth::{
    cue_token, filler_token, generate_synthetic_corpus, label_correlation, max_correlation, ClassProbs, SyntheticConfig,
    DEFAULT_IMBALANCE,
};
pub use tokenize::{tokenize, TokenizerMode};
pub use vocab::{EncodedExample, Vocabulary, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};
