//! Label-preserving text noising.
//!
//! Two primitive edits, insertion and deletion, keep every gold span pointing
//! at the same substring: edits touching a span are refused and spans after
//! the edit point are shifted. The randomized [`noise_text`] driver only
//! proposes edits away from numerals so unit cues stay intact.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GoldSpan, ProductRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per word-boundary probability of inserting a token.
    pub insert_rate: f64,
    /// Per eligible word probability of deleting it.
    pub delete_rate: f64,
    /// Fraction of insertions that use a UoM distractor instead of gibberish.
    pub distractor_share: f64,
    pub distractors: Vec<String>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            insert_rate: 0.05,
            delete_rate: 0.05,
            distractor_share: 0.3,
            distractors: ["ml", "oz", "gram", "kg", "litre", "pack", "count", "pcs", "ct", "gm", "lb"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl NoiseConfig {
    pub fn disabled() -> Self {
        NoiseConfig {
            insert_rate: 0.0,
            delete_rate: 0.0,
            ..Default::default()
        }
    }
}

fn char_to_byte(text: &str, at: usize) -> Option<usize> {
    if at == text.chars().count() {
        return Some(text.len());
    }
    text.char_indices().nth(at).map(|(b, _)| b)
}

/// Inserts `fragment` at char offset `at` of `attr`. Refused (returns `false`)
/// when `at` falls strictly inside a span of that attribute.
pub fn insert_at(
    record: &mut ProductRecord,
    spans: &mut [GoldSpan],
    attr: &str,
    at: usize,
    fragment: &str,
) -> bool {
    let Some(text) = record.attributes.get_mut(attr) else {
        return false;
    };
    let Some(byte) = char_to_byte(text, at) else {
        return false;
    };
    if spans
        .iter()
        .any(|s| s.attribute == attr && s.start < at && at < s.end)
    {
        return false;
    }
    text.insert_str(byte, fragment);
    let shift = fragment.chars().count();
    for s in spans.iter_mut().filter(|s| s.attribute == attr && s.start >= at) {
        s.start += shift;
        s.end += shift;
    }
    true
}

/// Deletes chars `[start, end)` of `attr`. Refused when the range overlaps a span.
pub fn delete_range(
    record: &mut ProductRecord,
    spans: &mut [GoldSpan],
    attr: &str,
    start: usize,
    end: usize,
) -> bool {
    let Some(text) = record.attributes.get_mut(attr) else {
        return false;
    };
    if start >= end {
        return false;
    }
    let (Some(b0), Some(b1)) = (char_to_byte(text, start), char_to_byte(text, end)) else {
        return false;
    };
    if spans
        .iter()
        .any(|s| s.attribute == attr && s.start < end && start < s.end)
    {
        return false;
    }
    text.replace_range(b0..b1, "");
    let shift = end - start;
    for s in spans.iter_mut().filter(|s| s.attribute == attr && s.start >= end) {
        s.start -= shift;
        s.end -= shift;
    }
    true
}

/// Whitespace-delimited words as char ranges.
fn words(text: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, String)> = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if let Some((s, w)) = cur.take() {
                out.push((s, i, w));
            }
        } else {
            match cur.as_mut() {
                Some((_, w)) => w.push(c),
                None => cur = Some((i, c.to_string())),
            }
        }
        n = i + 1;
    }
    if let Some((s, w)) = cur {
        out.push((s, n, w));
    }
    out
}

fn gibberish<R: Rng + ?Sized>(rng: &mut R) -> String {
    let len = rng.gen_range(3..=8);
    (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

#[derive(Clone, Copy, Debug)]
enum Edit {
    InsertBefore(usize),
    InsertAtEnd,
    Delete(usize),
}

/// Randomly inserts gibberish or distractor tokens and deletes plain words.
///
/// Words within two positions of a numeral are never deleted and no token is
/// inserted directly next to a numeral, so "42.5 oz" or "pack of 2" keep their
/// cue structure. Spans are remapped and always cover the same substring.
pub fn noise_text<R: Rng + ?Sized>(
    record: &ProductRecord,
    spans: &[GoldSpan],
    config: &NoiseConfig,
    rng: &mut R,
) -> (ProductRecord, Vec<GoldSpan>) {
    let mut rec = record.clone();
    let mut out = spans.to_vec();
    if config.insert_rate <= 0.0 && config.delete_rate <= 0.0 {
        return (rec, out);
    }
    let attrs: Vec<String> = rec.attributes.keys().cloned().collect();
    for attr in attrs {
        let ws = words(&rec.attributes[&attr]);
        let numeric: Vec<bool> = ws
            .iter()
            .map(|(_, _, w)| w.chars().any(|c| c.is_ascii_digit()))
            .collect();
        let near_numeral = |i: usize, radius: usize| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(ws.len().saturating_sub(1));
            (lo..=hi).any(|j| numeric[j])
        };
        let mut edits = Vec::new();
        for i in 0..ws.len() {
            let deletable = ws[i].2.chars().all(char::is_alphabetic) && !near_numeral(i, 2);
            if deletable && rng.gen::<f64>() < config.delete_rate {
                edits.push(Edit::Delete(i));
                continue;
            }
            let left_ok = i == 0 || !numeric[i - 1];
            if left_ok && !numeric[i] && rng.gen::<f64>() < config.insert_rate {
                edits.push(Edit::InsertBefore(i));
            }
        }
        let tail_ok = ws.last().map(|_| !numeric[ws.len() - 1]).unwrap_or(true);
        if tail_ok && rng.gen::<f64>() < config.insert_rate {
            edits.push(Edit::InsertAtEnd);
        }
        for edit in edits.into_iter().rev() {
            match edit {
                Edit::Delete(i) => {
                    let (start, end) = if i + 1 < ws.len() {
                        (ws[i].0, ws[i + 1].0)
                    } else if i > 0 {
                        (ws[i - 1].1, ws[i].1)
                    } else {
                        (ws[i].0, ws[i].1)
                    };
                    delete_range(&mut rec, &mut out, &attr, start, end);
                }
                Edit::InsertBefore(i) => {
                    let token = pick_token(config, rng);
                    insert_at(&mut rec, &mut out, &attr, ws[i].0, &format!("{} ", token));
                }
                Edit::InsertAtEnd => {
                    let token = pick_token(config, rng);
                    let at = rec.attributes[&attr].chars().count();
                    let frag = if at == 0 { token } else { format!(" {}", token) };
                    insert_at(&mut rec, &mut out, &attr, at, &frag);
                }
            }
        }
    }
    (rec, out)
}

fn pick_token<R: Rng + ?Sized>(config: &NoiseConfig, rng: &mut R) -> String {
    if !config.distractors.is_empty() && rng.gen::<f64>() < config.distractor_share {
        config.distractors.choose(rng).cloned().unwrap_or_default()
    } else {
        gibberish(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn substr(rec: &ProductRecord, s: &GoldSpan) -> String {
        rec.attributes[&s.attribute]
            .chars()
            .skip(s.start)
            .take(s.end - s.start)
            .collect()
    }

    fn sample() -> (ProductRecord, Vec<GoldSpan>) {
        let rec = ProductRecord::new("x").with_attr("title", "Coffee K 42.5 oz Canister (2 Pack) red");
        let spans = vec![
            GoldSpan { attribute: "title".into(), start: 9, end: 13 },
            GoldSpan { attribute: "title".into(), start: 27, end: 28 },
        ];
        (rec, spans)
    }

    #[test]
    fn zero_rates_are_identity() {
        let (rec, spans) = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (r2, s2) = noise_text(&rec, &spans, &NoiseConfig::disabled(), &mut rng);
        assert_eq!(r2, rec);
        assert_eq!(s2, spans);
    }

    #[test]
    fn insertion_before_span_shifts_it() {
        let rec = ProductRecord::new("x").with_attr("title", "abcdefghi 42 g");
        let mut spans = vec![GoldSpan { attribute: "title".into(), start: 10, end: 12 }];
        let mut r = rec.clone();
        assert!(insert_at(&mut r, &mut spans, "title", 10, "hello "));
        assert_eq!((spans[0].start, spans[0].end), (16, 18));
        assert_eq!(substr(&r, &spans[0]), "42");
    }

    #[test]
    fn deletion_after_last_span_is_noop_for_spans() {
        let (mut rec, mut spans) = sample();
        let before = spans.clone();
        assert!(delete_range(&mut rec, &mut spans, "title", 34, 38));
        assert_eq!(spans, before);
        assert!(!delete_range(&mut rec, &mut spans, "title", 10, 15));
        assert!(!insert_at(&mut rec, &mut spans, "title", 10, "zz"));
    }

    proptest! {
        #[test]
        fn noising_preserves_span_substrings(seed in 0u64..5000, rate in 0.0f64..0.8) {
            let (rec, spans) = sample();
            let want: Vec<String> = spans.iter().map(|s| substr(&rec, s)).collect();
            let cfg = NoiseConfig { insert_rate: rate, delete_rate: rate, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (r2, s2) = noise_text(&rec, &spans, &cfg, &mut rng);
            let got: Vec<String> = s2.iter().map(|s| substr(&r2, s)).collect();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn primitive_edits_never_corrupt_spans(
            text in "[a-z0-9 ]{0,40}",
            ops in proptest::collection::vec((any::<bool>(), 0usize..45, 0usize..6), 0..12),
        ) {
            let mut rec = ProductRecord::new("p").with_attr("t", text.clone());
            let n = text.chars().count();
            let mut spans = Vec::new();
            if n >= 4 {
                spans.push(GoldSpan { attribute: "t".into(), start: 1, end: 3 });
            }
            let want: Vec<String> = spans.iter().map(|s| substr(&rec, s)).collect();
            for (ins, at, len) in ops {
                if ins {
                    insert_at(&mut rec, &mut spans, "t", at, "xy ");
                } else {
                    delete_range(&mut rec, &mut spans, "t", at, at + len);
                }
            }
            let got: Vec<String> = spans.iter().map(|s| substr(&rec, s)).collect();
            prop_assert_eq!(got, want);
        }
    }
}
