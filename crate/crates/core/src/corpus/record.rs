use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::de::{DeserializeOwned, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// The three unit-of-measure classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UomType {
    Weight,
    Volume,
    Count,
}

impl UomType {
    pub const ALL: [UomType; 3] = [UomType::Weight, UomType::Volume, UomType::Count];

    /// Class index used by the classifier output layer.
    pub fn index(self) -> usize {
        match self {
            UomType::Weight => 0,
            UomType::Volume => 1,
            UomType::Count => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UomType::Weight => "weight",
            UomType::Volume => "volume",
            UomType::Count => "count",
        }
    }

    pub fn is_measure(self) -> bool {
        self != UomType::Count
    }
}

impl fmt::Display for UomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UomType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weight" => Ok(UomType::Weight),
            "volume" => Ok(UomType::Volume),
            "count" => Ok(UomType::Count),
            other => Err(Error::argument("uom", format!("unknown UoM type `{}`", other))),
        }
    }
}

/// Audited total quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldTotal {
    pub value: f64,
    pub unit: String,
}

/// One product: ordered text attributes, category path and optional labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub id: String,
    #[serde(deserialize_with = "unique_map")]
    pub attributes: IndexMap<String, String>,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_uom: Option<UomType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_total: Option<GoldTotal>,
}

impl ProductRecord {
    pub fn new(id: impl Into<String>) -> Self {
        ProductRecord {
            id: id.into(),
            attributes: IndexMap::new(),
            categories: Vec::new(),
            gold_uom: None,
            gold_total: None,
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, text: impl Into<String>) -> Self {
        self.attributes.insert(name.into(), text.into());
        self
    }

    pub fn title(&self) -> &str {
        self.attributes.get("title").map(String::as_str).unwrap_or("")
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if let Some(t) = &self.gold_total {
            if !(t.value.is_finite() && t.value > 0.0) {
                return Err(format!("gold_total.value must be positive, got {}", t.value));
            }
            if t.unit.trim().is_empty() {
                return Err("gold_total.unit is empty".into());
            }
        }
        Ok(())
    }
}

fn unique_map<'de, D>(de: D) -> std::result::Result<IndexMap<String, String>, D::Error>
where
    D: Deserializer<'de>,
{
    struct UniqueVisitor;

    impl<'de> Visitor<'de> for UniqueVisitor {
        type Value = IndexMap<String, String>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map of attribute name to text")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            let mut out = IndexMap::new();
            while let Some((k, v)) = map.next_entry::<String, String>()? {
                if out.contains_key(&k) {
                    return Err(serde::de::Error::custom(format!("duplicate attribute `{}`", k)));
                }
                out.insert(k, v);
            }
            Ok(out)
        }
    }

    de.deserialize_map(UniqueVisitor)
}

/// A labelled character span `[start, end)` inside one attribute.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoldSpan {
    pub attribute: String,
    pub start: usize,
    pub end: usize,
}

/// One line of the gold-span sidecar file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub id: String,
    pub spans: Vec<GoldSpan>,
    /// Set by the tagger: `false` when no qualifying combination exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualified: Option<bool>,
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), |_| Ok(()))
        .map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
}

/// Parses JSONL from a reader, running `check` on each item. Errors carry
/// 1-based line numbers.
pub fn parse_jsonl<T, R, F>(reader: R, check: F) -> Result<Vec<T>>
where
    T: DeserializeOwned,
    R: BufRead,
    F: Fn(&T) -> std::result::Result<(), String>,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| Error::Data {
            line: i + 1,
            detail: e.to_string(),
        })?;
        check(&item).map_err(|detail| Error::Data { line: i + 1, detail })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl_to(items, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_jsonl_to<T: Serialize, W: Write>(items: &[T], w: &mut W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

/// Loads and validates product records.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<ProductRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), ProductRecord::validate)
}

pub fn load_spans(path: impl AsRef<Path>) -> Result<Vec<SpanRecord>> {
    read_jsonl(path)
}
