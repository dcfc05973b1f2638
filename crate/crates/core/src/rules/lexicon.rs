use std::collections::HashMap;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::decimal::parse_decimal;
use crate::corpus::UomType;
use crate::error::{Error, Result};

pub const WEIGHT_BASE: &str = "g";
pub const VOLUME_BASE: &str = "ml";
pub const COUNT_UNIT: &str = "count";

/// One lexicon row: a (possibly two-word) unit token, its type and the factor
/// converting one unit into grams, millilitres or items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRow {
    pub token: String,
    #[serde(rename = "type")]
    pub uom: UomType,
    pub factor: f64,
}

#[derive(Clone, Debug)]
pub struct UnitInfo {
    pub uom: UomType,
    pub factor: f64,
    pub exact: Option<Ratio<i128>>,
}

#[derive(Deserialize)]
struct LexiconFile {
    unit: Vec<UnitRow>,
}

/// Unit tokens with their UoM type and base-unit conversion factor.
#[derive(Clone, Debug)]
pub struct UnitLexicon {
    rows: Vec<UnitRow>,
    index: HashMap<String, UnitInfo>,
}

const DEFAULT_ROWS: &[(&str, UomType, &str)] = &[
    ("mg", UomType::Weight, "0.001"),
    ("g", UomType::Weight, "1"),
    ("gm", UomType::Weight, "1"),
    ("gms", UomType::Weight, "1"),
    ("grm", UomType::Weight, "1"),
    ("gram", UomType::Weight, "1"),
    ("grams", UomType::Weight, "1"),
    ("gramm", UomType::Weight, "1"),
    ("grammes", UomType::Weight, "1"),
    ("kg", UomType::Weight, "1000"),
    ("kgs", UomType::Weight, "1000"),
    ("kilo", UomType::Weight, "1000"),
    ("kilogram", UomType::Weight, "1000"),
    ("kilograms", UomType::Weight, "1000"),
    ("oz", UomType::Weight, "28.3495"),
    ("ounce", UomType::Weight, "28.3495"),
    ("ounces", UomType::Weight, "28.3495"),
    ("lb", UomType::Weight, "453.592"),
    ("lbs", UomType::Weight, "453.592"),
    ("pound", UomType::Weight, "453.592"),
    ("pounds", UomType::Weight, "453.592"),
    ("ml", UomType::Volume, "1"),
    ("millilitre", UomType::Volume, "1"),
    ("milliliter", UomType::Volume, "1"),
    ("millilitres", UomType::Volume, "1"),
    ("milliliters", UomType::Volume, "1"),
    ("cl", UomType::Volume, "10"),
    ("l", UomType::Volume, "1000"),
    ("ltr", UomType::Volume, "1000"),
    ("litre", UomType::Volume, "1000"),
    ("liter", UomType::Volume, "1000"),
    ("litres", UomType::Volume, "1000"),
    ("liters", UomType::Volume, "1000"),
    ("fl oz", UomType::Volume, "29.5735"),
    ("fluid ounce", UomType::Volume, "29.5735"),
    ("fluid ounces", UomType::Volume, "29.5735"),
    ("gallon", UomType::Volume, "3785.41"),
    ("gallons", UomType::Volume, "3785.41"),
    ("ct", UomType::Count, "1"),
    ("count", UomType::Count, "1"),
    ("pack", UomType::Count, "1"),
    ("packs", UomType::Count, "1"),
    ("pcs", UomType::Count, "1"),
    ("pieces", UomType::Count, "1"),
    ("pods", UomType::Count, "1"),
    ("tablets", UomType::Count, "1"),
    ("capsules", UomType::Count, "1"),
    ("pairs", UomType::Count, "1"),
];

impl Default for UnitLexicon {
    fn default() -> Self {
        let rows = DEFAULT_ROWS
            .iter()
            .map(|&(t, u, f)| UnitRow {
                token: t.to_string(),
                uom: u,
                factor: f.parse().expect("literal factor"),
            })
            .collect();
        Self::from_rows(rows).expect("default lexicon is valid")
    }
}

impl UnitLexicon {
    /// Builds a lexicon, rejecting duplicate tokens and non-positive factors.
    pub fn from_rows(rows: Vec<UnitRow>) -> Result<Self> {
        let mut index = HashMap::new();
        for row in &rows {
            let token = normalize_token(&row.token);
            if token.is_empty() || token.split(' ').count() > 2 {
                return Err(Error::Config(format!("bad unit token `{}`", row.token)));
            }
            if !(row.factor.is_finite() && row.factor > 0.0) {
                return Err(Error::Config(format!(
                    "unit `{}` has non-positive factor {}",
                    row.token, row.factor
                )));
            }
            let info = UnitInfo {
                uom: row.uom,
                factor: row.factor,
                exact: parse_decimal(&format!("{}", row.factor)),
            };
            if index.insert(token, info).is_some() {
                return Err(Error::Config(format!("unit token `{}` listed twice", row.token)));
            }
        }
        Ok(UnitLexicon { rows, index })
    }

    /// Parses `[[unit]] token/type/factor` tables.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: LexiconFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_rows(file.unit)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn rows(&self) -> &[UnitRow] {
        &self.rows
    }

    pub fn lookup(&self, token: &str) -> Option<&UnitInfo> {
        self.index.get(token)
    }

    /// Tokens of one type, including two-word entries.
    pub fn tokens_of(&self, uom: UomType) -> impl Iterator<Item = &str> {
        self.index
            .iter()
            .filter(move |(_, i)| i.uom == uom)
            .map(|(t, _)| t.as_str())
    }

    /// Type and factor of a unit string; the generic "count" unit is always
    /// known, as are the base units.
    pub fn unit_info(&self, unit: &str) -> Option<UnitInfo> {
        let key = normalize_token(unit);
        if let Some(i) = self.index.get(&key) {
            return Some(i.clone());
        }
        let base = |uom| UnitInfo {
            uom,
            factor: 1.0,
            exact: Some(Ratio::from_integer(1)),
        };
        match key.as_str() {
            COUNT_UNIT => Some(base(UomType::Count)),
            WEIGHT_BASE => Some(base(UomType::Weight)),
            VOLUME_BASE => Some(base(UomType::Volume)),
            _ => None,
        }
    }

    /// Converts `value` from unit `from` into unit `to` (same type only).
    pub fn convert(&self, value: f64, from: &str, to: &str) -> Option<f64> {
        if normalize_token(from) == normalize_token(to) {
            return Some(value);
        }
        let a = self.unit_info(from)?;
        let b = self.unit_info(to)?;
        (a.uom == b.uom).then(|| value * a.factor / b.factor)
    }
}

/// Lowercases and collapses internal whitespace.
pub fn normalize_token(token: &str) -> String {
    token
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn base_unit(uom: UomType) -> &'static str {
    match uom {
        UomType::Weight => WEIGHT_BASE,
        UomType::Volume => VOLUME_BASE,
        UomType::Count => COUNT_UNIT,
    }
}
