use serde::{Deserialize, Serialize};

use super::lexicon::UnitLexicon;
use super::tokenize::{tokenize, Token, TokenKind};
use crate::corpus::{ProductRecord, UomType};

/// Following tokens inspected for a unit cue.
pub const CUE_WINDOW: usize = 2;

const PACK_OF_HEADS: &[&str] = &["pack", "set", "case", "box", "bundle", "lot"];

/// A numeral found in an attribute together with its locally cued type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateQuantity {
    pub value: f64,
    /// Normalized decimal literal the value was parsed from.
    pub literal: String,
    pub attribute: String,
    pub start: usize,
    pub end: usize,
    pub cued_type: UomType,
    pub cue_unit: Option<String>,
}

/// Unit cue for the number token at `idx`.
///
/// Looks at up to [`CUE_WINDOW`] following word tokens (punctuation skipped,
/// two-word units tried first) and stops at the next numeral. Failing that, a
/// preceding "pack of"-style bigram cues a count. Default: count, no unit.
pub fn cue_at(tokens: &[Token], idx: usize, lexicon: &UnitLexicon) -> (UomType, Option<String>) {
    let following: Vec<usize> = tokens[idx + 1..]
        .iter()
        .enumerate()
        .filter(|(_, t)| t.kind != TokenKind::Punct)
        .map(|(k, _)| idx + 1 + k)
        .collect();
    let mut seen = 0;
    let mut pos = 0;
    while pos < following.len() && seen < CUE_WINDOW {
        let t = &tokens[following[pos]];
        if t.kind == TokenKind::Number {
            break;
        }
        if let Some(&next) = following.get(pos + 1) {
            if tokens[next].kind == TokenKind::Word {
                let bigram = format!("{} {}", t.text, tokens[next].text);
                if let Some(info) = lexicon.lookup(&bigram) {
                    return (info.uom, Some(bigram));
                }
            }
        }
        if let Some(info) = lexicon.lookup(&t.text) {
            return (info.uom, Some(t.text.clone()));
        }
        seen += 1;
        pos += 1;
    }
    let preceding: Vec<&Token> = tokens[..idx]
        .iter()
        .rev()
        .filter(|t| t.kind != TokenKind::Punct)
        .take(2)
        .collect();
    if let [of, head] = preceding[..] {
        if of.text == "of" && head.kind == TokenKind::Word && PACK_OF_HEADS.contains(&head.text.as_str()) {
            return (UomType::Count, Some(head.text.clone()));
        }
    }
    (UomType::Count, None)
}

/// Candidates of one attribute text, in text order.
pub fn candidates_in(attribute: &str, text: &str, lexicon: &UnitLexicon) -> Vec<CandidateQuantity> {
    let tokens = tokenize(text);
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.kind == TokenKind::Number)
        .filter_map(|(i, t)| {
            let value: f64 = t.text.parse().ok()?;
            if value <= 0.0 {
                return None;
            }
            let (cued_type, cue_unit) = cue_at(&tokens, i, lexicon);
            Some(CandidateQuantity {
                value,
                literal: t.text.clone(),
                attribute: attribute.to_string(),
                start: t.start,
                end: t.end,
                cued_type,
                cue_unit,
            })
        })
        .collect()
}

/// Every positive numeral of every attribute, ordered by (attribute order, start).
pub fn find_candidates(record: &ProductRecord, lexicon: &UnitLexicon) -> Vec<CandidateQuantity> {
    record
        .attributes
        .iter()
        .flat_map(|(name, text)| candidates_in(name, text, lexicon))
        .collect()
}

/// Type and unit for an arbitrary char span of `text`, using the same cue
/// rule as candidate detection. Spans that are not a numeral token fall back
/// to the first following unit cue after `end`.
pub fn span_cue(text: &str, start: usize, end: usize, lexicon: &UnitLexicon) -> (UomType, Option<String>) {
    let tokens = tokenize(text);
    if let Some(i) = tokens
        .iter()
        .position(|t| t.kind == TokenKind::Number && t.start == start && t.end == end)
    {
        return cue_at(&tokens, i, lexicon);
    }
    match tokens.iter().position(|t| t.start >= end) {
        Some(i) if i > 0 => cue_at(&tokens, i - 1, lexicon),
        _ => (UomType::Count, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(text: &str) -> Vec<(f64, UomType, Option<String>)> {
        candidates_in("title", text, &UnitLexicon::default())
            .into_iter()
            .map(|c| (c.value, c.cued_type, c.cue_unit))
            .collect()
    }

    #[test]
    fn table_one_row_two() {
        assert_eq!(
            summary("Maxwell House Original Roast Medium Ground Coffee, Caffeinated, 42.5 oz Canister (2 Pack)"),
            vec![
                (42.5, UomType::Weight, Some("oz".into())),
                (2.0, UomType::Count, Some("pack".into())),
            ]
        );
    }

    #[test]
    fn composite_and_empty() {
        assert_eq!(
            summary("2 x 200 ml"),
            vec![(2.0, UomType::Count, None), (200.0, UomType::Volume, Some("ml".into()))]
        );
        assert!(summary("Blushes gift set").is_empty());
    }

    #[test]
    fn pack_of_and_bigram_units() {
        let s = summary("red 60 gm (Pack of 2), (total 120 gm)");
        assert_eq!(s[1], (2.0, UomType::Count, Some("pack".into())));
        assert_eq!(s[2], (120.0, UomType::Weight, Some("gm".into())));
        assert_eq!(summary("16 fl. oz bottle")[0], (16.0, UomType::Volume, Some("fl oz".into())));
        assert_eq!(summary("8 Hour Germ Protection")[0], (8.0, UomType::Count, None));
        assert_eq!(summary("5000 mg Amino")[0].1, UomType::Weight);
    }

    #[test]
    fn window_is_two_words() {
        assert_eq!(summary("3 big red ml")[0].1, UomType::Count);
        assert_eq!(summary("3 big ml")[0].1, UomType::Volume);
    }

    #[test]
    fn spans_slice_to_values() {
        let text = "Crème 1,5 l et 250g";
        let cands = candidates_in("t", text, &UnitLexicon::default());
        for c in &cands {
            let sub: String = text.chars().skip(c.start).take(c.end - c.start).collect();
            assert_eq!(sub.replace(',', ".").parse::<f64>().unwrap(), c.value);
        }
        assert_eq!(cands[0].cued_type, UomType::Volume);
        assert_eq!(cands[1].cued_type, UomType::Weight);
    }
}
