//! Weak span labels from audited totals.
//!
//! Given the candidate numerals of a record and its audited total, find a
//! combination of at most three candidates whose product equals the total.
//! Larger combinations are tried first (3, then 2, then 1), each in
//! lexicographic order over text-ordered candidates. A count total admits no
//! weight/volume member; a weight/volume total needs exactly one. A count
//! total of 1 is the "no quantity stated" case and yields no spans.

use itertools::Itertools;
use num_rational::Ratio;
use num_traits::{CheckedDiv, CheckedMul};
use serde::{Deserialize, Serialize};

use crate::corpus::{GoldSpan, GoldTotal, ProductRecord, SpanRecord, UomType};
use crate::rules::{approx_eq, find_candidates, ratio_of_f64, CandidateQuantity, UnitLexicon};

pub const MAX_COMBINATION: usize = 3;
const REL_TOL: f64 = 1e-9;

/// Candidates selected for a record (indices into the candidate list).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualifiedSpans {
    pub indices: Vec<usize>,
    pub spans: Vec<CandidateQuantity>,
    /// Product of the (unit-converted) member values; 0 when empty.
    pub product: f64,
}

impl QualifiedSpans {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Value of a candidate expressed in the unit of `total`, exact when possible.
fn converted(c: &CandidateQuantity, total: &GoldTotal, lexicon: &UnitLexicon) -> (f64, Option<Ratio<i128>>) {
    let exact = crate::rules::parse_decimal(&c.literal);
    if !c.cued_type.is_measure() {
        return (c.value, exact);
    }
    let from = c.cue_unit.as_deref().and_then(|u| lexicon.unit_info(u));
    let to = lexicon.unit_info(&total.unit);
    match (from, to) {
        (Some(f), Some(t)) if f.uom == t.uom => {
            let value = c.value * f.factor / t.factor;
            let ratio = match (exact, f.exact, t.exact) {
                (Some(v), Some(fe), Some(te)) if *te.numer() != 0 => v
                    .checked_mul(&fe)
                    .and_then(|p| p.checked_div(&te)),
                _ => None,
            };
            (value, ratio)
        }
        _ => (c.value, exact),
    }
}

fn product_matches(members: &[&(f64, Option<Ratio<i128>>)], target: f64, target_exact: Option<Ratio<i128>>) -> bool {
    if let Some(t) = target_exact {
        let mut acc = Some(Ratio::from_integer(1i128));
        for (_, r) in members {
            acc = match (acc, r) {
                (Some(a), Some(r)) => a.checked_mul(r),
                _ => None,
            };
        }
        if let Some(p) = acc {
            return p == t;
        }
    }
    let p: f64 = members.iter().map(|(v, _)| v).product();
    approx_eq(p, target, REL_TOL)
}

fn composition_ok(members: &[&CandidateQuantity], uom: UomType) -> bool {
    let measures = members.iter().filter(|c| c.cued_type.is_measure()).count();
    match uom {
        UomType::Count => measures == 0,
        _ => measures == 1,
    }
}

/// Selects the qualifying combination, or an empty result when none exists.
pub fn qualify_spans(
    candidates: &[CandidateQuantity],
    total: &GoldTotal,
    uom: UomType,
    lexicon: &UnitLexicon,
) -> QualifiedSpans {
    if uom == UomType::Count && total.value == 1.0 {
        return QualifiedSpans::default();
    }
    let values: Vec<_> = candidates.iter().map(|c| converted(c, total, lexicon)).collect();
    let target_exact = ratio_of_f64(total.value);
    for k in (1..=MAX_COMBINATION.min(candidates.len())).rev() {
        for combo in (0..candidates.len()).combinations(k) {
            let vals: Vec<_> = combo.iter().map(|&i| &values[i]).collect();
            if !product_matches(&vals, total.value, target_exact) {
                continue;
            }
            let members: Vec<_> = combo.iter().map(|&i| &candidates[i]).collect();
            if composition_ok(&members, uom) {
                return QualifiedSpans {
                    product: vals.iter().map(|(v, _)| v).product(),
                    spans: members.into_iter().cloned().collect(),
                    indices: combo,
                };
            }
        }
    }
    QualifiedSpans::default()
}

/// Sidecar entry for one record. `qualified` is false when the record has
/// gold labels but no combination reproduces them, or lacks labels.
pub fn tag_record(record: &ProductRecord, lexicon: &UnitLexicon) -> SpanRecord {
    let (Some(total), Some(uom)) = (&record.gold_total, record.gold_uom) else {
        return SpanRecord {
            id: record.id.clone(),
            spans: Vec::new(),
            qualified: Some(false),
        };
    };
    let cands = find_candidates(record, lexicon);
    let q = qualify_spans(&cands, total, uom, lexicon);
    let trivial = uom == UomType::Count && total.value == 1.0;
    SpanRecord {
        id: record.id.clone(),
        qualified: Some(trivial || !q.is_empty()),
        spans: q
            .spans
            .iter()
            .map(|c| GoldSpan {
                attribute: c.attribute.clone(),
                start: c.start,
                end: c.end,
            })
            .collect(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TagSummary {
    pub records: usize,
    pub qualified: usize,
    pub unqualifiable: usize,
    pub unqualifiable_fraction: f64,
}

pub fn tag_dataset(records: &[ProductRecord], lexicon: &UnitLexicon) -> (Vec<SpanRecord>, TagSummary) {
    let tagged: Vec<SpanRecord> = records.iter().map(|r| tag_record(r, lexicon)).collect();
    let qualified = tagged.iter().filter(|t| t.qualified == Some(true)).count();
    let n = tagged.len();
    let summary = TagSummary {
        records: n,
        qualified,
        unqualifiable: n - qualified,
        unqualifiable_fraction: if n == 0 { 0.0 } else { (n - qualified) as f64 / n as f64 },
    };
    (tagged, summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(value: f64, uom: UomType, unit: Option<&str>) -> CandidateQuantity {
        CandidateQuantity {
            value,
            literal: format!("{}", value),
            attribute: "title".into(),
            start: 0,
            end: 1,
            cued_type: uom,
            cue_unit: unit.map(str::to_string),
        }
    }

    fn total(v: f64, unit: &str) -> GoldTotal {
        GoldTotal { value: v, unit: unit.into() }
    }

    #[test]
    fn table_one_examples() {
        let lex = UnitLexicon::default();
        let row2 = [cand(42.5, UomType::Weight, Some("oz")), cand(2.0, UomType::Count, Some("pack"))];
        assert_eq!(qualify_spans(&row2, &total(85.0, "oz"), UomType::Weight, &lex).indices, vec![0, 1]);

        let row1 = [cand(24.0, UomType::Count, Some("ct")), cand(8.3, UomType::Weight, Some("oz"))];
        assert_eq!(qualify_spans(&row1, &total(24.0, "count"), UomType::Count, &lex).indices, vec![0]);

        let row3 = [
            cand(60.0, UomType::Weight, Some("gm")),
            cand(2.0, UomType::Count, Some("pack")),
            cand(120.0, UomType::Weight, Some("gm")),
        ];
        assert_eq!(qualify_spans(&row3, &total(120.0, "gm"), UomType::Weight, &lex).indices, vec![0, 1]);
    }

    #[test]
    fn total_one_count_is_empty() {
        let lex = UnitLexicon::default();
        let c = [cand(1.0, UomType::Count, None)];
        assert!(qualify_spans(&c, &total(1.0, "count"), UomType::Count, &lex).is_empty());
    }

    #[test]
    fn converts_into_gold_unit() {
        let lex = UnitLexicon::default();
        let c = [cand(1.5, UomType::Weight, Some("kg")), cand(2.0, UomType::Count, None)];
        let q = qualify_spans(&c, &total(3000.0, "g"), UomType::Weight, &lex);
        assert_eq!(q.indices, vec![0, 1]);
        assert_eq!(q.product, 3000.0);
    }

    #[test]
    fn tags_table_row_three_record() {
        let rec = ProductRecord {
            gold_uom: Some(UomType::Weight),
            gold_total: Some(total(120.0, "gm")),
            ..ProductRecord::new("t3").with_attr(
                "title",
                "Tansukh Panchkol Powder for Hyperacidity and Digestion, red 60 gm (Pack of 2), (total 120 gm)",
            )
        };
        let tagged = tag_record(&rec, &UnitLexicon::default());
        assert_eq!(tagged.qualified, Some(true));
        let subs: Vec<String> = tagged
            .spans
            .iter()
            .map(|s| rec.title().chars().skip(s.start).take(s.end - s.start).collect())
            .collect();
        assert_eq!(subs, ["60", "2"]);
    }
}
