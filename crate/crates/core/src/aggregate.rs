//! Turning typed quantity spans into a single total quantity.
//!
//! Quantities are stacked in text order and exact duplicates of the same type
//! are dropped. Weight or volume quantities are summed, and after each
//! addition any later stack entry equal to the running sum is discarded (so a
//! restated total is not counted twice). Count quantities are multiplied. A
//! weight or volume prediction yields `sum × count product`; a count
//! prediction yields the count product alone, or 1 when there is none.

use serde::{Deserialize, Serialize};

use crate::corpus::UomType;
use crate::rules::{approx_eq, base_unit, normalize_token, span_cue, UnitLexicon, COUNT_UNIT};

const REL_TOL: f64 = 1e-9;

/// A quantity with its cued type and source unit token (if any).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypedQuantity {
    pub value: f64,
    pub uom: UomType,
    pub unit: Option<String>,
}

impl TypedQuantity {
    pub fn new(value: f64, uom: UomType, unit: Option<&str>) -> Self {
        TypedQuantity {
            value,
            uom,
            unit: unit.map(normalize_token),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalQuantity {
    pub value: f64,
    pub unit: String,
    pub uom: UomType,
}

/// Type and unit of the quantity at char span `[start, end)` of `text`.
pub fn span_uom_type(text: &str, start: usize, end: usize, lexicon: &UnitLexicon) -> (UomType, Option<String>) {
    span_cue(text, start, end, lexicon)
}

fn base_value(q: &TypedQuantity, lexicon: &UnitLexicon) -> f64 {
    match (&q.unit, q.uom) {
        (_, UomType::Count) | (None, _) => q.value,
        (Some(u), _) => lexicon.convert(q.value, u, base_unit(q.uom)).unwrap_or(q.value),
    }
}

/// Final total for a predicted UoM type; `None` means abstain.
pub fn aggregate_total(
    items: &[TypedQuantity],
    predicted: UomType,
    lexicon: &UnitLexicon,
) -> Option<TotalQuantity> {
    let mut stack: Vec<(&TypedQuantity, f64)> = Vec::with_capacity(items.len());
    for q in items {
        if !(q.value.is_finite() && q.value > 0.0) {
            continue;
        }
        let b = base_value(q, lexicon);
        if !stack.iter().any(|(p, pb)| p.uom == q.uom && approx_eq(*pb, b, REL_TOL)) {
            stack.push((q, b));
        }
    }

    let count_product: f64 = stack
        .iter()
        .filter(|(q, _)| q.uom == UomType::Count)
        .map(|(q, _)| q.value)
        .product();

    let total = if predicted.is_measure() {
        let ignored = stack
            .iter()
            .filter(|(q, _)| q.uom.is_measure() && q.uom != predicted)
            .count();
        if ignored > 0 {
            log::warn!("ignoring {} quantities of the other measure type under a {} prediction", ignored, predicted);
        }
        let measures: Vec<&(&TypedQuantity, f64)> =
            stack.iter().filter(|(q, _)| q.uom == predicted).collect();
        let first = measures.first()?;
        let shared = first.0.unit.as_ref().filter(|u| {
            measures.iter().all(|(q, _)| q.unit.as_ref() == Some(*u))
        });
        let (unit, values): (String, Vec<f64>) = match shared {
            Some(u) => (u.clone(), measures.iter().map(|(q, _)| q.value).collect()),
            None => (
                base_unit(predicted).to_string(),
                measures.iter().map(|(_, b)| *b).collect(),
            ),
        };
        let mut removed = vec![false; values.len()];
        let mut sum = 0.0;
        for i in 0..values.len() {
            if removed[i] {
                continue;
            }
            sum += values[i];
            for j in i + 1..values.len() {
                if !removed[j] && approx_eq(values[j], sum, REL_TOL) {
                    removed[j] = true;
                }
            }
        }
        TotalQuantity {
            value: sum * count_product,
            unit,
            uom: predicted,
        }
    } else {
        TotalQuantity {
            value: count_product,
            unit: COUNT_UNIT.to_string(),
            uom: UomType::Count,
        }
    };
    (total.value.is_finite() && total.value > 0.0).then_some(total)
}
