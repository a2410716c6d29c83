//! On-disk formats: `MEMX1` embedding files, JSON-lines corpus manifests,
//! knowledge word tables, plus a hashing pseudo-encoder for tests.

mod corpus;
mod embedding;
mod pseudo;

pub use corpus::{
    load_corpus, load_corpus_with, write_corpus, Channel, LoadOptions, ManifestRecord, MemeSample,
    MAX_SENTENCES,
};
pub use embedding::{
    decode_embedding, encode_embedding, read_embedding, write_embedding, EmbeddingMatrix,
    HEADER_LEN, MAGIC,
};
pub use pseudo::{fnv1a64, pseudo_encode};
