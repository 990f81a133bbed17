//! Corpus schemas, JSONL persistence, and the synthetic corpus generator.

mod io;
mod records;
mod synth;

pub use io::{
    load_pair_corpus, load_retrieval_corpus, load_vocab, save_pair_corpus, save_retrieval_corpus,
    save_vocab, LoadReport, PAIRS_SCHEMA, RETRIEVAL_SCHEMA,
};
pub use records::{
    Corpus, PairCorpus, RetrievalCorpus, RetrievalRecord, SentencePairRecord, Split,
};
pub use synth::{generate_synthetic_corpus, SyntheticCorpus, SyntheticSpec, PAD_TOKEN};
