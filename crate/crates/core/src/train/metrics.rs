//! Classification and strict extraction metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::TotalQuantity;
use crate::corpus::{GoldTotal, ProductRecord, UomType};
use crate::error::{Error, Result};
use crate::rules::{approx_eq, UnitLexicon, COUNT_UNIT};

/// Relative tolerance for a total to count as correct.
pub const TOTAL_REL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Uom,
    Extraction,
}

/// Precision, recall and F1 from raw counts.
///
/// With no predictions precision is reported as 1.0 and `zero_support` is
/// set; with no gold items recall is reported as 1.0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub support: usize,
    pub zero_support: bool,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, support: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, support);
        let f1 = if precision + recall == 0.0 || correct == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            correct,
            predicted,
            support,
            zero_support: predicted == 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub records: usize,
    /// Keyed by UoM type. For extraction, `predicted` counts non-abstained
    /// predictions of that type and `support` counts gold records of it.
    pub per_uom: BTreeMap<UomType, Prf>,
    pub micro: Prf,
    /// Mean F1 over types with gold support.
    pub macro_f1: f64,
    pub abstention_rate: f64,
}

impl EvalReport {
    fn build(mode: EvalMode, records: usize, cells: [(usize, usize, usize); 3], abstained: usize) -> Self {
        let per_uom: BTreeMap<UomType, Prf> = UomType::ALL
            .iter()
            .map(|&u| {
                let (c, p, s) = cells[u.index()];
                (u, Prf::from_counts(c, p, s))
            })
            .collect();
        let sum = |k: fn(&(usize, usize, usize)) -> usize| cells.iter().map(k).sum::<usize>();
        let micro = Prf::from_counts(sum(|c| c.0), sum(|c| c.1), records);
        let supported: Vec<f64> = per_uom.values().filter(|m| m.support > 0).map(|m| m.f1).collect();
        let macro_f1 = if supported.is_empty() {
            0.0
        } else {
            supported.iter().sum::<f64>() / supported.len() as f64
        };
        EvalReport {
            mode,
            records,
            per_uom,
            micro,
            macro_f1,
            abstention_rate: if records == 0 { 0.0 } else { abstained as f64 / records as f64 },
        }
    }

    /// Correct predictions over all records.
    pub fn accuracy(&self) -> f64 {
        if self.records == 0 {
            0.0
        } else {
            self.micro.correct as f64 / self.records as f64
        }
    }

    pub fn csv_header() -> &'static str {
        "mode,records,precision,recall,f1,macro_f1,abstention_rate,weight_f1,volume_f1,count_f1"
    }

    pub fn csv_row(&self) -> String {
        let f1 = |u: UomType| self.per_uom[&u].f1;
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            match self.mode {
                EvalMode::Uom => "uom",
                EvalMode::Extraction => "extraction",
            },
            self.records,
            self.micro.precision,
            self.micro.recall,
            self.micro.f1,
            self.macro_f1,
            self.abstention_rate,
            f1(UomType::Weight),
            f1(UomType::Volume),
            f1(UomType::Count),
        )
    }
}

/// Per-class and micro metrics of predicted against gold types.
pub fn evaluate_uom(predicted: &[UomType], gold: &[UomType]) -> Result<EvalReport> {
    if predicted.len() != gold.len() {
        return Err(Error::argument(
            "evaluate",
            format!("{} predictions for {} records", predicted.len(), gold.len()),
        ));
    }
    let mut cells = [(0, 0, 0); 3];
    for (&p, &g) in predicted.iter().zip(gold) {
        cells[p.index()].1 += 1;
        cells[g.index()].2 += 1;
        if p == g {
            cells[g.index()].0 += 1;
        }
    }
    Ok(EvalReport::build(EvalMode::Uom, gold.len(), cells, 0))
}

/// Strict correctness: same type and the same total after conversion to the
/// gold unit.
pub fn totals_match(predicted: &TotalQuantity, gold_uom: UomType, gold: &GoldTotal, lexicon: &UnitLexicon) -> bool {
    if predicted.uom != gold_uom {
        return false;
    }
    let value = if gold_uom == UomType::Count || predicted.unit == gold.unit {
        Some(predicted.value)
    } else {
        lexicon.convert(predicted.value, &predicted.unit, &gold.unit)
    };
    value.is_some_and(|v| approx_eq(v, gold.value, TOTAL_REL_TOL))
}

/// Predicted type and total per record; `total: None` is an abstention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionOutcome {
    pub uom: UomType,
    pub total: Option<TotalQuantity>,
}

/// Strict extraction metrics. Every record needs gold type and total.
pub fn evaluate_extraction(
    outcomes: &[ExtractionOutcome],
    records: &[ProductRecord],
    lexicon: &UnitLexicon,
) -> Result<EvalReport> {
    if outcomes.len() != records.len() {
        return Err(Error::argument(
            "evaluate",
            format!("{} predictions for {} records", outcomes.len(), records.len()),
        ));
    }
    let mut cells = [(0, 0, 0); 3];
    let mut abstained = 0;
    for (o, r) in outcomes.iter().zip(records) {
        let (Some(gu), Some(gt)) = (r.gold_uom, &r.gold_total) else {
            return Err(Error::argument("evaluate", format!("record `{}` lacks gold labels", r.id)));
        };
        cells[gu.index()].2 += 1;
        match &o.total {
            None => abstained += 1,
            Some(t) => {
                cells[t.uom.index()].1 += 1;
                if totals_match(t, gu, gt, lexicon) {
                    cells[gu.index()].0 += 1;
                }
            }
        }
    }
    Ok(EvalReport::build(EvalMode::Extraction, records.len(), cells, abstained))
}

/// Gold total of a count record with no quantity in the text.
pub fn count_one() -> TotalQuantity {
    TotalQuantity {
        value: 1.0,
        unit: COUNT_UNIT.into(),
        uom: UomType::Count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use UomType::*;

    fn rec(id: &str, uom: UomType, value: f64, unit: &str) -> ProductRecord {
        let mut r = ProductRecord::new(id).with_attr("title", id);
        r.gold_uom = Some(uom);
        r.gold_total = Some(GoldTotal { value, unit: unit.into() });
        r
    }

    fn out(uom: UomType, total: Option<(f64, &str)>) -> ExtractionOutcome {
        ExtractionOutcome {
            uom,
            total: total.map(|(value, unit)| TotalQuantity {
                value,
                unit: unit.into(),
                uom,
            }),
        }
    }

    #[test]
    fn perfect_predictor() {
        let gold = [Weight, Volume, Count, Count];
        let r = evaluate_uom(&gold, &gold).unwrap();
        assert_eq!((r.micro.precision, r.micro.recall, r.micro.f1, r.macro_f1), (1.0, 1.0, 1.0, 1.0));
        let records = [rec("a", Weight, 85.0, "oz"), rec("b", Count, 1.0, "count")];
        let outs = [out(Weight, Some((85.0, "oz"))), out(Count, Some((1.0, "count")))];
        let r = evaluate_extraction(&outs, &records, &UnitLexicon::default()).unwrap();
        assert_eq!((r.micro.precision, r.micro.recall, r.micro.f1), (1.0, 1.0, 1.0));
        assert_eq!(r.abstention_rate, 0.0);
    }

    #[test]
    fn always_abstain() {
        let records = [rec("a", Weight, 85.0, "oz"), rec("b", Volume, 200.0, "ml")];
        let outs = [out(Weight, None), out(Volume, None)];
        let r = evaluate_extraction(&outs, &records, &UnitLexicon::default()).unwrap();
        assert_eq!(r.micro.precision, 1.0);
        assert!(r.micro.zero_support);
        assert_eq!((r.micro.recall, r.micro.f1, r.abstention_rate), (0.0, 0.0, 1.0));
    }

    #[test]
    fn hand_computed_confusion() {
        // gold:      W W W W V V V C C C
        // predicted: W W W V V V W C C W
        let gold = [Weight, Weight, Weight, Weight, Volume, Volume, Volume, Count, Count, Count];
        let pred = [Weight, Weight, Weight, Volume, Volume, Volume, Weight, Count, Count, Weight];
        let r = evaluate_uom(&pred, &gold).unwrap();
        let w = &r.per_uom[&Weight];
        assert_eq!((w.correct, w.predicted, w.support), (3, 5, 4));
        assert!((w.precision - 0.6).abs() < 1e-12 && (w.recall - 0.75).abs() < 1e-12);
        assert!((w.f1 - 2.0 / 3.0).abs() < 1e-12);
        let v = &r.per_uom[&Volume];
        assert!((v.precision - 2.0 / 3.0).abs() < 1e-12 && (v.recall - 2.0 / 3.0).abs() < 1e-12);
        let c = &r.per_uom[&Count];
        assert!((c.precision - 1.0).abs() < 1e-12 && (c.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.f1 - 0.8).abs() < 1e-12);
        assert!((r.micro.f1 - 0.7).abs() < 1e-12);
        assert!((r.macro_f1 - (2.0 / 3.0 + 2.0 / 3.0 + 0.8) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn strict_extraction_fixture() {
        let lex = UnitLexicon::default();
        let records = [
            rec("a", Weight, 85.0, "oz"),
            rec("b", Weight, 1.0, "kg"),
            rec("c", Volume, 200.0, "ml"),
            rec("d", Count, 24.0, "count"),
            rec("e", Count, 1.0, "count"),
        ];
        let outs = [
            out(Weight, Some((85.0, "oz"))),
            out(Weight, Some((1000.0, "g"))),
            out(Weight, Some((200.0, "g"))),
            out(Count, Some((12.0, "count"))),
            out(Count, None),
        ];
        let r = evaluate_extraction(&outs, &records, &lex).unwrap();
        assert_eq!((r.micro.correct, r.micro.predicted, r.micro.support), (2, 4, 5));
        assert_eq!(r.micro.precision, 0.5);
        assert_eq!(r.micro.recall, 0.4);
        assert_eq!(r.abstention_rate, 0.2);
        assert_eq!(r.per_uom[&Weight].predicted, 3);
        assert_eq!(r.per_uom[&Volume].predicted, 0);
        assert!(r.micro.correct <= r.micro.predicted);
        assert!(evaluate_extraction(&outs[..2], &records, &lex).is_err());
    }

    #[test]
    fn totals_within_tolerance() {
        let lex = UnitLexicon::default();
        let gold = GoldTotal { value: 85.0, unit: "oz".into() };
        let t = |value: f64, unit: &str, uom| TotalQuantity { value, unit: unit.into(), uom };
        assert!(totals_match(&t(85.0 * (1.0 + 5e-7), "oz", Weight), Weight, &gold, &lex));
        assert!(!totals_match(&t(85.0 * (1.0 + 5e-6), "oz", Weight), Weight, &gold, &lex));
        assert!(!totals_match(&t(85.0, "oz", Volume), Weight, &gold, &lex));
        let grams = lex.convert(85.0, "oz", "g").unwrap();
        assert!(totals_match(&t(grams, "g", Weight), Weight, &gold, &lex));
    }
}
