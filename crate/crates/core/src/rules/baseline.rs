use serde::{Deserialize, Serialize};

use super::candidates::candidates_in;
use super::lexicon::{base_unit, UnitLexicon};
use super::tokenize::words;
use crate::aggregate::{aggregate_total, TotalQuantity, TypedQuantity};
use crate::corpus::{ProductRecord, UomType};

/// Inclusive plausible range per type, in grams, millilitres and items.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Guardrails {
    pub weight: (f64, f64),
    pub volume: (f64, f64),
    pub count: (f64, f64),
}

impl Default for Guardrails {
    fn default() -> Self {
        Guardrails {
            weight: (0.1, 50_000.0),
            volume: (1.0, 20_000.0),
            count: (1.0, 1000.0),
        }
    }
}

impl Guardrails {
    pub fn range(&self, uom: UomType) -> (f64, f64) {
        match uom {
            UomType::Weight => self.weight,
            UomType::Volume => self.volume,
            UomType::Count => self.count,
        }
    }

    pub fn admits(&self, uom: UomType, base_value: f64) -> bool {
        let (lo, hi) = self.range(uom);
        (lo..=hi).contains(&base_value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub guardrails: Guardrails,
    /// Attributes the rules look at.
    pub attributes: Vec<String>,
    /// Lexicon tokens that do not count as type keywords for classification.
    pub ignored_keywords: Vec<String>,
    /// Extra volume keywords beyond the lexicon.
    pub volume_keywords: Vec<String>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            guardrails: Guardrails::default(),
            attributes: vec!["title".into()],
            ignored_keywords: vec!["oz".into()],
            volume_keywords: vec!["liquid".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrediction {
    pub uom: UomType,
    pub total: Option<TotalQuantity>,
}

fn keyword_type(token: &str, lexicon: &UnitLexicon, config: &BaselineConfig) -> Option<UomType> {
    if config.ignored_keywords.iter().any(|k| k == token) {
        return None;
    }
    if config.volume_keywords.iter().any(|k| k == token) {
        return Some(UomType::Volume);
    }
    lexicon.lookup(token).map(|i| i.uom)
}

/// Keyword vote over the configured attributes: volume beats weight beats
/// count; no hit means count.
pub fn classify_uom_rules(record: &ProductRecord, lexicon: &UnitLexicon, config: &BaselineConfig) -> UomType {
    let mut hits = [false; 3];
    for attr in &config.attributes {
        let Some(text) = record.attributes.get(attr) else {
            continue;
        };
        let ws = words(text);
        let mut i = 0;
        while i < ws.len() {
            if i + 1 < ws.len() {
                let bigram = format!("{} {}", ws[i], ws[i + 1]);
                if let Some(u) = keyword_type(&bigram, lexicon, config) {
                    hits[u.index()] = true;
                    i += 2;
                    continue;
                }
            }
            if let Some(u) = keyword_type(&ws[i], lexicon, config) {
                hits[u.index()] = true;
            }
            i += 1;
        }
    }
    if hits[UomType::Volume.index()] {
        UomType::Volume
    } else if hits[UomType::Weight.index()] {
        UomType::Weight
    } else {
        UomType::Count
    }
}

/// Unit-cued numerals that pass the guardrails, aggregated under the keyword
/// classification. `None` (abstain) when nothing passes.
pub fn extract_quantities_rules(
    record: &ProductRecord,
    lexicon: &UnitLexicon,
    config: &BaselineConfig,
) -> Option<TotalQuantity> {
    let uom = classify_uom_rules(record, lexicon, config);
    let passing: Vec<TypedQuantity> = config
        .attributes
        .iter()
        .filter_map(|a| record.attributes.get(a).map(|t| candidates_in(a, t, lexicon)))
        .flatten()
        .filter(|c| c.cue_unit.is_some())
        .filter(|c| {
            let unit = c.cue_unit.as_deref().unwrap_or("");
            let base = match c.cued_type {
                UomType::Count => Some(c.value),
                t => lexicon.convert(c.value, unit, base_unit(t)),
            };
            base.is_some_and(|b| config.guardrails.admits(c.cued_type, b))
        })
        .map(|c| TypedQuantity::new(c.value, c.cued_type, c.cue_unit.as_deref()))
        .collect();
    if passing.is_empty() {
        return None;
    }
    aggregate_total(&passing, uom, lexicon)
}

pub fn baseline_predict(record: &ProductRecord, lexicon: &UnitLexicon, config: &BaselineConfig) -> BaselinePrediction {
    BaselinePrediction {
        uom: classify_uom_rules(record, lexicon, config),
        total: extract_quantities_rules(record, lexicon, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn title(t: &str) -> ProductRecord {
        ProductRecord::new("r").with_attr("title", t)
    }

    fn run(t: &str) -> BaselinePrediction {
        baseline_predict(&title(t), &UnitLexicon::default(), &BaselineConfig::default())
    }

    #[test]
    fn classification_priority() {
        assert_eq!(run("Shampoo 300 ml").uom, UomType::Volume);
        assert_eq!(run("Rice 5 kg bag").uom, UomType::Weight);
        assert_eq!(run("Tansukh Panchkol Powder for Hyperacidity and Digestion, red 60 gm (Pack of 2), (total 120 gm)").uom, UomType::Weight);
        assert_eq!(run("Milk 1 l and 2 kg").uom, UomType::Volume);
        assert_eq!(run("Blushes gift set").uom, UomType::Count);
    }

    #[test]
    fn table_one_row_one() {
        let p = run("Maxwell House Original Roast Ground Coffee K-Cup Pods, Caffeinated, 24 ct - 8.3 oz Box");
        assert_eq!(p.uom, UomType::Count);
        let t = p.total.unwrap();
        assert_eq!((t.value, t.unit.as_str()), (24.0, "count"));
    }

    #[test]
    fn guardrails_filter_and_abstain() {
        assert_eq!(run("Cement 500 kg").total, None);
        assert_eq!(run("Blushes gift set").total, None);
        let t = run("Niconi Sanitizer - 200 ml (pack of 2), (100 ml each)").total.unwrap();
        assert_ne!(t.value, 200.0);
    }

    #[test]
    fn never_violates_guardrails() {
        let g = Guardrails::default();
        for t in ["5 g", "0.05 g", "60000 g", "21 l", "0.5 ml", "2000 ct", "3 ct", "1.5 kg"] {
            if let Some(total) = run(t).total {
                let base = UnitLexicon::default()
                    .convert(total.value, &total.unit, base_unit(total.uom))
                    .unwrap_or(total.value);
                assert!(g.admits(total.uom, base), "{t} -> {total:?}");
            }
        }
    }
}
