//! Unit lexicon, numeral tokenization, candidate quantities and the
//! keyword/regex baseline.

mod baseline;
mod candidates;
mod decimal;
mod lexicon;
mod tokenize;

pub use baseline::{
    baseline_predict, classify_uom_rules, extract_quantities_rules, BaselineConfig,
    BaselinePrediction, Guardrails,
};
pub use candidates::{candidates_in, cue_at, find_candidates, span_cue, CandidateQuantity, CUE_WINDOW};
pub use decimal::{approx_eq, parse_decimal, ratio_of_f64};
pub use lexicon::{
    base_unit, normalize_token, UnitInfo, UnitLexicon, UnitRow, COUNT_UNIT, VOLUME_BASE, WEIGHT_BASE,
};
pub use tokenize::{tokenize, words, Token, TokenKind};
