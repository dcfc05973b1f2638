//! Character vocabulary, product records, JSONL I/O and noising.

mod noise;
mod record;
mod vocab;

pub use noise::{delete_range, insert_at, noise_text, NoiseConfig};
pub use record::{
    load_jsonl, load_spans, parse_jsonl, read_jsonl, write_jsonl, write_jsonl_to, GoldSpan,
    GoldTotal, ProductRecord, SpanRecord, UomType,
};
pub use vocab::{
    fold_char, fold_text, CharVocab, DEFAULT_MAX_LEN, DEFAULT_TITLE_MAX_LEN, PAD_CHAR, PAD_INDEX, UNK_CHAR,
    UNK_INDEX,
    VOCAB_SIZE,
};
