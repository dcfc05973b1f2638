//! End-to-end inference: classify, extract, aggregate. Also the shared output
//! row used by model and rule-based predictions.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregate::{aggregate_total, TotalQuantity, TypedQuantity};
use crate::corpus::{ProductRecord, UomType};
use crate::error::Result;
use crate::model_qe::{decode_numeral_spans, decode_spans, Decoded, QuantityExtractor, SpanImage};
use crate::model_uom::{UomClassifier, UomPrediction};
use crate::rules::{baseline_predict, BaselineConfig, UnitLexicon};
use crate::train::metrics::{count_one, ExtractionOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSpan {
    pub attribute: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub value: Option<f64>,
    pub unit: Option<String>,
    pub score: Option<f64>,
}

/// One output line of `predict` or `baseline`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub uom: UomType,
    /// Classifier probability of `uom`; absent for rule-based rows.
    pub confidence: Option<f64>,
    pub spans: Vec<OutputSpan>,
    pub total: Option<TotalQuantity>,
    pub abstain: bool,
}

impl PredictionRow {
    pub fn outcome(&self) -> ExtractionOutcome {
        ExtractionOutcome {
            uom: self.uom,
            total: self.total.clone(),
        }
    }
}

/// Output line for an input line that could not be parsed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub line: usize,
    pub error: String,
}

const ROW_KEYS: [&str; 6] = ["id", "uom", "confidence", "spans", "total", "abstain"];
const SPAN_KEYS: [&str; 7] = ["attribute", "start", "end", "text", "value", "unit", "score"];

fn exact_keys(v: &Value, keys: &[&str], what: &str) -> std::result::Result<(), String> {
    let obj = v.as_object().ok_or_else(|| format!("{} is not an object", what))?;
    let mut got: Vec<&str> = obj.keys().map(String::as_str).collect();
    let mut want = keys.to_vec();
    got.sort_unstable();
    want.sort_unstable();
    if got != want {
        return Err(format!("{} keys {:?}, expected {:?}", what, got, want));
    }
    Ok(())
}

fn nullable(v: &Value, ok: fn(&Value) -> bool) -> bool {
    v.is_null() || ok(v)
}

/// Structural check of an output line: a prediction row or an error row.
pub fn validate_output_row(v: &Value) -> std::result::Result<(), String> {
    if v.get("error").is_some() {
        exact_keys(v, &["line", "error"], "error row")?;
        return match (v["line"].is_u64(), v["error"].is_string()) {
            (true, true) => Ok(()),
            _ => Err("error row needs integer `line` and string `error`".into()),
        };
    }
    exact_keys(v, &ROW_KEYS, "row")?;
    if !v["id"].is_string() {
        return Err("`id` must be a string".into());
    }
    if !v["uom"].as_str().is_some_and(|u| u.parse::<UomType>().is_ok()) {
        return Err("`uom` must be weight, volume or count".into());
    }
    if !nullable(&v["confidence"], |c| c.as_f64().is_some_and(|c| (0.0..=1.0).contains(&c))) {
        return Err("`confidence` must be null or in [0, 1]".into());
    }
    let abstain = v["abstain"].as_bool().ok_or("`abstain` must be a boolean")?;
    let spans = v["spans"].as_array().ok_or("`spans` must be an array")?;
    for s in spans {
        exact_keys(s, &SPAN_KEYS, "span")?;
        let (Some(start), Some(end)) = (s["start"].as_u64(), s["end"].as_u64()) else {
            return Err("span bounds must be integers".into());
        };
        if start >= end || !s["attribute"].is_string() || !s["text"].is_string() {
            return Err("span needs start < end and string attribute/text".into());
        }
        if !nullable(&s["value"], Value::is_number)
            || !nullable(&s["unit"], Value::is_string)
            || !nullable(&s["score"], Value::is_number)
        {
            return Err("span value/score must be numbers and unit a string, or null".into());
        }
    }
    match &v["total"] {
        Value::Null if abstain => Ok(()),
        Value::Null => Err("`total` is null but `abstain` is false".into()),
        _ if abstain => Err("`abstain` is true but `total` is set".into()),
        t => {
            exact_keys(t, &["value", "unit", "uom"], "total")?;
            let ok = t["value"].as_f64().is_some_and(|x| x > 0.0)
                && t["unit"].is_string()
                && t["uom"].as_str().is_some_and(|u| u.parse::<UomType>().is_ok());
            ok.then_some(()).ok_or_else(|| "malformed `total`".into())
        }
    }
}

/// Total implied by decoded spans under the predicted type.
pub fn total_from_decoded(decoded: &Decoded, uom: UomType, lexicon: &UnitLexicon) -> Option<TotalQuantity> {
    match decoded {
        Decoded::CountOne => Some(count_one()),
        Decoded::Abstain => None,
        Decoded::Spans(spans) => {
            let items: Vec<TypedQuantity> = spans
                .iter()
                .filter_map(|s| s.value.map(|v| TypedQuantity::new(v, s.cued_type, s.unit.as_deref())))
                .collect();
            aggregate_total(&items, uom, lexicon)
        }
    }
}

/// Decoding settings shared by prediction and validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub threshold: f64,
    /// Only pixels covering exactly one numeral token are eligible.
    pub numeral_aligned: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            threshold: 0.5,
            numeral_aligned: true,
        }
    }
}

impl DecodeOptions {
    pub fn decode(&self, image: &SpanImage, text: &str, uom: UomType, lexicon: &UnitLexicon) -> Decoded {
        if self.numeral_aligned {
            decode_numeral_spans(image, text, uom, self.threshold, lexicon)
        } else {
            decode_spans(image, text, uom, self.threshold, lexicon)
        }
    }
}

/// Classifier plus extractor.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub classifier: UomClassifier,
    pub extractor: QuantityExtractor,
    pub decode: DecodeOptions,
    pub lexicon: UnitLexicon,
}

impl Pipeline {
    pub fn new(classifier: UomClassifier, extractor: QuantityExtractor) -> Self {
        let decode = DecodeOptions {
            threshold: extractor.config.threshold,
            ..DecodeOptions::default()
        };
        Pipeline {
            classifier,
            extractor,
            decode,
            lexicon: UnitLexicon::default(),
        }
    }

    pub fn predict(&self, record: &ProductRecord) -> Result<PredictionRow> {
        let uom = self.classifier.predict(record)?;
        self.extract(record, &uom)
    }

    /// Extraction step for an already classified record.
    pub fn extract(&self, record: &ProductRecord, uom: &UomPrediction) -> Result<PredictionRow> {
        let image = self.extractor.image(record, uom.probs)?;
        let (text, _) = self.extractor.encode(record);
        let decoded = self.decode.decode(&image, text, uom.predicted, &self.lexicon);
        let total = total_from_decoded(&decoded, uom.predicted, &self.lexicon);
        let attribute = &self.extractor.config.attribute;
        let spans = decoded
            .spans()
            .iter()
            .map(|s| OutputSpan {
                attribute: attribute.clone(),
                start: s.start,
                end: s.end,
                text: text.chars().skip(s.start).take(s.end - s.start).collect(),
                value: s.value,
                unit: s.unit.clone(),
                score: Some(s.score),
            })
            .collect();
        Ok(PredictionRow {
            id: record.id.clone(),
            uom: uom.predicted,
            confidence: Some(uom.confidence),
            spans,
            abstain: total.is_none(),
            total,
        })
    }
}

/// Rule-based prediction in the shared row format.
pub fn baseline_row(record: &ProductRecord, lexicon: &UnitLexicon, config: &BaselineConfig) -> PredictionRow {
    let p = baseline_predict(record, lexicon, config);
    PredictionRow {
        id: record.id.clone(),
        uom: p.uom,
        confidence: None,
        spans: Vec::new(),
        abstain: p.total.is_none(),
        total: p.total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_qe::QeConfig;
    use crate::model_uom::{CategoryVocab, UomClassifierConfig};

    #[test]
    fn baseline_rows_validate() {
        let lex = UnitLexicon::default();
        let cfg = BaselineConfig::default();
        let r = ProductRecord::new("a").with_attr(
            "title",
            "Maxwell House Original Roast Ground Coffee K-Cup Pods, Caffeinated, 24 ct - 8.3 oz Box",
        );
        let row = baseline_row(&r, &lex, &cfg);
        assert_eq!(row.uom, UomType::Count);
        assert_eq!(row.total.as_ref().map(|t| t.value), Some(24.0));
        validate_output_row(&serde_json::to_value(&row).unwrap()).unwrap();

        let none = baseline_row(&ProductRecord::new("b").with_attr("title", "Blushes gift set"), &lex, &cfg);
        assert!(none.abstain);
        validate_output_row(&serde_json::to_value(&none).unwrap()).unwrap();
    }

    #[test]
    fn untrained_pipeline_rows_validate() {
        let c = UomClassifier::new(UomClassifierConfig::default(), CategoryVocab::from_names(["cat-a"]), 0).unwrap();
        let p = Pipeline::new(c, QuantityExtractor::new(QeConfig::default(), 0).unwrap());
        for title in ["Rice 5 kg", "", "Shampoo 2 x 200 ml"] {
            let row = p.predict(&ProductRecord::new("x").with_attr("title", title)).unwrap();
            validate_output_row(&serde_json::to_value(&row).unwrap()).unwrap();
        }
    }

    #[test]
    fn schema_rejects_malformed_rows() {
        let bad = [
            r#"{"id":"a","uom":"mass","confidence":null,"spans":[],"total":null,"abstain":true}"#,
            r#"{"id":"a","uom":"count","confidence":null,"spans":[],"total":null,"abstain":false}"#,
            r#"{"id":"a","uom":"count","confidence":2.0,"spans":[],"total":null,"abstain":true}"#,
            r#"{"id":"a","uom":"count","spans":[],"total":null,"abstain":true}"#,
            r#"{"line":"x","error":"bad"}"#,
        ];
        for b in bad {
            assert!(validate_output_row(&serde_json::from_str(b).unwrap()).is_err(), "{}", b);
        }
        let ok = r#"{"line":3,"error":"bad json"}"#;
        validate_output_row(&serde_json::from_str(ok).unwrap()).unwrap();
    }

    #[test]
    fn decoded_totals() {
        let lex = UnitLexicon::default();
        assert_eq!(total_from_decoded(&Decoded::CountOne, UomType::Count, &lex), Some(count_one()));
        assert_eq!(total_from_decoded(&Decoded::Abstain, UomType::Weight, &lex), None);
    }
}
