//! Seeded generator of synthetic product records with known UoM type, total
//! quantity and gold spans.
//!
//! Each example is instantiated from a [`TemplateSpec`]. The gold total is
//! computed by aggregating the emitted gold numerals, so records are
//! self-consistent by construction. Instantiations are resampled (bounded)
//! until the weak-label tagger recovers exactly the intended spans and the
//! title's ambiguity matches the template's `hard` flag.

mod templates;
mod vocab;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_total, TypedQuantity};
use crate::analyze::{ambiguity, title_tokens, AmbiguityTokens};
use crate::corpus::{GoldSpan, GoldTotal, ProductRecord, SpanRecord, UomType};
use crate::error::{Error, Result};
use crate::rules::{base_unit, candidates_in, Guardrails, UnitLexicon};
use crate::tagger::tag_record;

use vocab::{ProductKind, Scale};

/// Span-count distribution for 0, 1, 2 and 3 spans.
pub const SPAN_MIX: [f64; 4] = [0.540, 0.345, 0.113, 0.002];
pub const DEFAULT_AMBIGUITY_SHARE: f64 = 0.21;

const CONSISTENT_ATTEMPTS: usize = 64;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locale {
    Us,
    Eu5,
    In,
}

impl Locale {
    pub const ALL: [Locale; 3] = [Locale::Us, Locale::Eu5, Locale::In];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Locale::Us => "us",
            Locale::Eu5 => "eu5",
            Locale::In => "in",
        }
    }

    fn decimal_comma(self) -> bool {
        self == Locale::Eu5
    }
}

impl fmt::Display for Locale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Locale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Locale::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::argument("locale", format!("unknown locale `{}`", s)))
    }
}

/// A title pattern with typed quantity slots (see the template module docs
/// for the slot names).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemplateSpec {
    pub name: &'static str,
    pub pattern: &'static str,
    pub uom_type: UomType,
    /// Number of gold spans an instantiation carries.
    pub span_count: usize,
    /// Whether the title is meant to be ambiguous for its type.
    pub hard: bool,
    /// Whether gold measures add up rather than multiply; the tagger cannot
    /// qualify such records.
    pub additive: bool,
    /// Product kind keys the template may be filled with.
    pub kinds: &'static [&'static str],
    pub locale: Locale,
}

const GOLD_SLOTS: &[&str] = &["W", "V", "W2", "V2", "N", "C", "C2"];
const DISTRACTOR_SLOTS: &[&str] = &["TOT", "dw", "dv", "mg", "dn"];
const TEXT_SLOTS: &[&str] = &["brand", "noun", "adj", "packof"];

enum Piece {
    Text(&'static str),
    Slot(&'static str),
}

fn parse_pattern(pattern: &'static str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            out.push(Piece::Text(&rest[..open]));
        }
        let close = rest[open..].find('}').map_or(rest.len(), |c| open + c);
        out.push(Piece::Slot(&rest[open + 1..close]));
        rest = rest.get(close + 1..).unwrap_or("");
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    out
}

impl TemplateSpec {
    /// The built-in pattern library (locale-neutral; see [`Self::with_locale`]).
    pub fn library() -> &'static [TemplateSpec] {
        templates::LIBRARY
    }

    pub fn by_name(name: &str) -> Option<TemplateSpec> {
        Self::library().iter().find(|t| t.name == name).copied()
    }

    pub fn with_locale(self, locale: Locale) -> Self {
        TemplateSpec { locale, ..self }
    }

    pub fn slots(&self) -> Vec<&'static str> {
        parse_pattern(self.pattern)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn distractor_slots(&self) -> Vec<&'static str> {
        self.slots().into_iter().filter(|s| DISTRACTOR_SLOTS.contains(s)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::argument("template", format!("{}: {}", self.name, detail)));
        let slots = self.slots();
        for s in &slots {
            if !(GOLD_SLOTS.contains(s) || DISTRACTOR_SLOTS.contains(s) || TEXT_SLOTS.contains(s)) {
                return bad(format!("unknown slot `{}`", s));
            }
        }
        let gold = slots.iter().filter(|s| GOLD_SLOTS.contains(s)).count();
        if gold != self.span_count || gold > 3 {
            return bad(format!("{} gold slots, declared {}", gold, self.span_count));
        }
        let has = |s: &str| slots.contains(&s);
        let measure_ok = match self.uom_type {
            UomType::Weight => has("W") && !has("V") && !has("V2"),
            UomType::Volume => has("V") && !has("W") && !has("W2"),
            UomType::Count => !has("W") && !has("V") && !has("W2") && !has("V2"),
        };
        if !measure_ok {
            return bad("measure slots do not match the UoM type".to_string());
        }
        if has("TOT") && !(has("C") && self.uom_type.is_measure()) {
            return bad("restated total needs a measure and a pack slot".into());
        }
        if has("C2") && !has("C") {
            return bad("`C2` without `C`".into());
        }
        if self.additive != (has("W2") || has("V2")) {
            return bad("additive flag does not match the second measure slot".into());
        }
        if self.kinds.is_empty() {
            return bad("no product kinds".into());
        }
        for k in self.kinds {
            match vocab::KINDS.iter().find(|p| p.key == *k) {
                Some(p) if p.uom == self.uom_type => {}
                Some(_) => return bad(format!("kind `{}` has a different UoM type", k)),
                None => return bad(format!("unknown kind `{}`", k)),
            }
        }
        Ok(())
    }
}

fn shared() -> &'static (UnitLexicon, AmbiguityTokens) {
    static SHARED: OnceLock<(UnitLexicon, AmbiguityTokens)> = OnceLock::new();
    SHARED.get_or_init(|| {
        let lex = UnitLexicon::default();
        let tokens = AmbiguityTokens::from_lexicon(&lex);
        (lex, tokens)
    })
}

fn fmt_num(v: f64, locale: Locale) -> String {
    let s = format!("{:.2}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if locale.decimal_comma() {
        s.replace('.', ",")
    } else {
        s.to_string()
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn pick<T: Copy, R: Rng + ?Sized>(items: &[T], rng: &mut R) -> T {
    *items.choose(rng).expect("non-empty pool")
}

/// Draws a value from `pool` that is not in `taken`, falling back to any.
fn pick_distinct<R: Rng + ?Sized>(pool: &[f64], taken: &[f64], rng: &mut R) -> f64 {
    let free: Vec<f64> = pool.iter().copied().filter(|v| !taken.contains(v)).collect();
    if free.is_empty() {
        pick(pool, rng)
    } else {
        pick(&free, rng)
    }
}

fn measure_units(uom: UomType, locale: Locale, scale: Scale) -> &'static [(&'static str, &'static [f64])] {
    match uom {
        UomType::Volume => vocab::volume_units(locale),
        _ => vocab::weight_units(locale, scale),
    }
}

fn style_unit<R: Rng + ?Sized>(unit: &str, rng: &mut R) -> String {
    let r: f64 = rng.gen();
    if r < 0.6 {
        unit.to_string()
    } else if r < 0.85 {
        unit.split(' ')
            .map(|w| {
                let mut c = w.chars();
                c.next().map_or(String::new(), |f| f.to_uppercase().chain(c).collect())
            })
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        unit.to_uppercase()
    }
}

fn separator<R: Rng + ?Sized>(unit: &str, rng: &mut R) -> &'static str {
    if unit.len() > 3 || unit.contains(' ') || rng.gen_bool(0.75) {
        " "
    } else {
        ""
    }
}

/// Values drawn for one instantiation, before rendering.
struct Draw {
    unit: &'static str,
    measure: f64,
    measure2: f64,
    count: f64,
    count_unit: &'static str,
    pack: f64,
    pack2: f64,
}

impl Draw {
    fn new<R: Rng + ?Sized>(spec: &TemplateSpec, kind: &ProductKind, rng: &mut R) -> Self {
        let uom = if spec.uom_type == UomType::Count { UomType::Weight } else { spec.uom_type };
        let (unit, values) = pick(measure_units(uom, spec.locale, kind.scale), rng);
        let measure = pick(values, rng);
        let measure2 = pick_distinct(values, &[measure], rng);
        let count = pick(vocab::COUNT_VALUES, rng);
        let pack = pick_distinct(vocab::PACK_VALUES, &[count], rng);
        let pack2 = pick_distinct(vocab::PACK_VALUES, &[count, pack], rng);
        let count_unit = kind.count_units.choose(rng).copied().unwrap_or("Count");
        Draw {
            unit,
            measure,
            measure2,
            count,
            count_unit,
            pack,
            pack2,
        }
    }
}

struct Rendered {
    title: String,
    gold: Vec<(usize, usize)>,
}

fn render<R: Rng + ?Sized>(spec: &TemplateSpec, kind: &ProductKind, rng: &mut R) -> Rendered {
    let locale = spec.locale;
    let li = locale.index();
    let draw = Draw::new(spec, kind, rng);
    let mut title = String::new();
    let mut len = 0usize;
    let mut gold = Vec::new();

    // Appends `num` then `tail`, returning the numeral's char range.
    let push = |title: &mut String, len: &mut usize, head: &str, num: &str, tail: &str| {
        title.push_str(head);
        *len += head.chars().count();
        let start = *len;
        title.push_str(num);
        *len += num.chars().count();
        let end = *len;
        title.push_str(tail);
        *len += tail.chars().count();
        (start, end)
    };

    for piece in parse_pattern(spec.pattern) {
        let slot = match piece {
            Piece::Text(t) => {
                push(&mut title, &mut len, t, "", "");
                continue;
            }
            Piece::Slot(s) => s,
        };
        let measure = |v: f64, unit: &str, rng: &mut R| {
            let styled = style_unit(unit, rng);
            (fmt_num(v, locale), format!("{}{}", separator(unit, rng), styled))
        };
        match slot {
            "brand" => {
                push(&mut title, &mut len, pick(vocab::BRANDS[li], rng), "", "");
            }
            "noun" => {
                push(&mut title, &mut len, pick(kind.nouns(locale), rng), "", "");
            }
            "adj" => {
                push(&mut title, &mut len, pick(vocab::ADJECTIVES[li], rng), "", "");
            }
            "packof" => {
                push(&mut title, &mut len, pick(vocab::PACK_OF[li], rng), "", "");
            }
            "W" | "V" | "W2" | "V2" => {
                let v = if slot.ends_with('2') { draw.measure2 } else { draw.measure };
                let (num, tail) = measure(v, draw.unit, rng);
                gold.push(push(&mut title, &mut len, "", &num, &tail));
            }
            "N" => {
                let tail = format!(" {}", draw.count_unit);
                gold.push(push(&mut title, &mut len, "", &fmt_num(draw.count, locale), &tail));
            }
            "C" | "C2" => {
                let v = if slot == "C2" { draw.pack2 } else { draw.pack };
                gold.push(push(&mut title, &mut len, "", &fmt_num(v, locale), ""));
            }
            "TOT" => {
                let (num, tail) = measure(round2(draw.measure * draw.pack), draw.unit, rng);
                push(&mut title, &mut len, "", &num, &tail);
            }
            "dw" | "dv" => {
                let uom = if slot == "dw" { UomType::Weight } else { UomType::Volume };
                let (unit, values) = pick(measure_units(uom, locale, kind.scale), rng);
                let (num, tail) = measure(pick(values, rng), unit, rng);
                push(&mut title, &mut len, "", &num, &tail);
            }
            "mg" => {
                let unit = if rng.gen_bool(0.8) { " mg" } else { " MG" };
                push(&mut title, &mut len, "", &fmt_num(pick(vocab::CONCENTRATIONS, rng), locale), unit);
            }
            "dn" => {
                let i = rng.gen_range(0..vocab::DISTRACTOR_PHRASES.len());
                let (head, tail) = vocab::DISTRACTOR_PHRASES[i];
                let v = pick(vocab::DISTRACTOR_VALUES[i], rng);
                push(&mut title, &mut len, head, &fmt_num(v, locale), tail);
            }
            other => panic!("template {}: unknown slot `{}`", spec.name, other),
        }
    }
    Rendered { title, gold }
}

struct Attempt {
    record: ProductRecord,
    spans: Vec<GoldSpan>,
    consistent: bool,
}

fn attempt<R: Rng + ?Sized>(spec: &TemplateSpec, rng: &mut R) -> Option<Attempt> {
    let (lex, tokens) = shared();
    let kind = vocab::kind(pick(spec.kinds, rng));
    let rendered = render(spec, kind, rng);
    let li = spec.locale.index();

    let cands = candidates_in("title", &rendered.title, lex);
    let mut typed = Vec::with_capacity(rendered.gold.len());
    for &(start, end) in &rendered.gold {
        let c = cands.iter().find(|c| c.start == start && c.end == end)?;
        typed.push(TypedQuantity::new(c.value, c.cued_type, c.cue_unit.as_deref()));
    }
    let total = aggregate_total(&typed, spec.uom_type, lex)?;
    let base = match total.uom {
        UomType::Count => Some(total.value),
        u => lex.convert(total.value, &total.unit, base_unit(u)),
    }?;
    if !Guardrails::default().admits(total.uom, base) {
        return None;
    }

    let description = format!(
        "{} {}. {}",
        pick(vocab::BRANDS[li], rng),
        pick(kind.nouns(spec.locale), rng),
        pick(vocab::DESCRIPTIONS[li], rng)
    );
    let bullets = format!("{} | {}", pick(vocab::ADJECTIVES[li], rng), pick(vocab::DESCRIPTIONS[li], rng));
    let mut record = ProductRecord::new("synthetic")
        .with_attr("title", rendered.title)
        .with_attr("description", description)
        .with_attr("bullet_points", bullets);
    record.categories = kind.path.iter().map(|s| s.to_string()).collect();
    record.gold_uom = Some(spec.uom_type);
    record.gold_total = Some(GoldTotal {
        value: total.value,
        unit: total.unit,
    });

    let spans: Vec<GoldSpan> = rendered
        .gold
        .iter()
        .map(|&(start, end)| GoldSpan {
            attribute: "title".into(),
            start,
            end,
        })
        .collect();

    let hard = ambiguity(&title_tokens(record.title(), tokens), spec.uom_type, tokens) == 1;
    let tagged_ok = spec.additive || {
        let mut got = tag_record(&record, lex).spans;
        let mut want = spans.clone();
        got.sort();
        want.sort();
        got == want
    };
    Some(Attempt {
        consistent: hard == spec.hard && tagged_ok,
        record,
        spans,
    })
}

/// Instantiates `spec`. The result's gold spans always aggregate to its gold
/// total; agreement with the tagger and the `hard` flag is attempted a
/// bounded number of times.
pub fn generate_example<R: Rng + ?Sized>(spec: &TemplateSpec, rng: &mut R) -> (ProductRecord, Vec<GoldSpan>) {
    let mut fallback = None;
    for i in 0..MAX_ATTEMPTS {
        if let Some(a) = attempt(spec, rng) {
            if a.consistent {
                return (a.record, a.spans);
            }
            fallback.get_or_insert(a);
        }
        if i + 1 >= CONSISTENT_ATTEMPTS {
            if let Some(a) = fallback.take() {
                log::debug!("template {} kept an inconsistent instantiation", spec.name);
                return (a.record, a.spans);
            }
        }
    }
    panic!("template {} never produced a valid instantiation", spec.name)
}

/// Generated record with its gold-span sidecar entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub record: ProductRecord,
    pub spans: SpanRecord,
    pub template: String,
    pub locale: Locale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    /// Probabilities of 0, 1, 2 and 3 gold spans.
    pub mix: Vec<f64>,
    pub ambiguity_share: f64,
    pub seed: u64,
    pub locales: Vec<(Locale, f64)>,
    /// Share of two-span weight/volume records whose measures add up.
    pub additive_share: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 5000,
            mix: SPAN_MIX.to_vec(),
            ambiguity_share: DEFAULT_AMBIGUITY_SHARE,
            seed: 0,
            locales: vec![(Locale::Us, 0.4), (Locale::Eu5, 0.3), (Locale::In, 0.3)],
            additive_share: 0.05,
        }
    }
}

fn check_distribution(op: &'static str, weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::argument(op, format!("weights must be finite and non-negative: {:?}", weights)));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::argument(op, format!("weights sum to {}, not 1", sum)));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mix.len() != 4 {
            return Err(Error::argument("generate_dataset", format!("mix needs 4 entries, got {}", self.mix.len())));
        }
        check_distribution("generate_dataset", &self.mix)?;
        let locale_weights: Vec<f64> = self.locales.iter().map(|l| l.1).collect();
        if locale_weights.is_empty() {
            return Err(Error::argument("generate_dataset", "no locales"));
        }
        check_distribution("generate_dataset", &locale_weights)?;
        for (name, v) in [("ambiguity_share", self.ambiguity_share), ("additive_share", self.additive_share)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::argument("generate_dataset", format!("{} {} outside [0, 1]", name, v)));
            }
        }
        Ok(())
    }
}

/// Per-record probabilities of drawing a hard template.
///
/// Hard examples split count : weight : volume = 3 : 1 : 1. Zero-span
/// records are count-only, so they carry the bulk of the hard count share;
/// a quarter of the hard records with spans are count.
struct HardPlan {
    zero_span: f64,
    with_spans: f64,
    count_given_hard: f64,
}

impl HardPlan {
    fn new(mix: &[f64], share: f64) -> Self {
        let m0 = mix[0];
        let mp = 1.0 - m0;
        if mp <= 1e-12 {
            return HardPlan {
                zero_span: share,
                with_spans: 0.0,
                count_given_hard: 1.0,
            };
        }
        if m0 <= 1e-12 {
            return HardPlan {
                zero_span: 0.0,
                with_spans: (share / mp).min(1.0),
                count_given_hard: 0.6,
            };
        }
        let q = 0.25;
        let with_spans = (0.4 * share / ((1.0 - q) * mp)).min(1.0);
        let zero_span = ((0.6 * share - mp * with_spans * q) / m0).clamp(0.0, 1.0);
        HardPlan {
            zero_span,
            with_spans,
            count_given_hard: q,
        }
    }
}

fn choose_template<R: Rng + ?Sized>(uom: UomType, k: usize, hard: bool, additive: bool, rng: &mut R) -> TemplateSpec {
    let lib = TemplateSpec::library();
    let matching = |hard: bool, additive: bool| -> Vec<&TemplateSpec> {
        lib.iter()
            .filter(|t| t.uom_type == uom && t.span_count == k && t.hard == hard && t.additive == additive)
            .collect()
    };
    let mut pool = matching(hard, additive);
    if pool.is_empty() {
        pool = matching(hard, false);
    }
    if pool.is_empty() {
        pool = matching(!hard, false);
    }
    **pool.choose(rng).expect("template library covers every type and span count")
}

/// Generates `n` examples with the given span-count mix and ambiguity share
/// over the default locale mix.
pub fn generate_dataset(n: usize, mix: &[f64], ambiguity_share: f64, seed: u64) -> Result<Vec<SyntheticExample>> {
    generate_with(&SynthConfig {
        n,
        mix: mix.to_vec(),
        ambiguity_share,
        seed,
        ..SynthConfig::default()
    })
}

pub fn generate_with(config: &SynthConfig) -> Result<Vec<SyntheticExample>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k_dist = WeightedIndex::new(&config.mix).map_err(|e| Error::argument("generate_dataset", e.to_string()))?;
    let locale_dist = WeightedIndex::new(config.locales.iter().map(|l| l.1))
        .map_err(|e| Error::argument("generate_dataset", e.to_string()))?;
    let plan = HardPlan::new(&config.mix, config.ambiguity_share);
    let easy_types = WeightedIndex::new([0.4, 0.35, 0.25]).expect("static weights");

    let mut out = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let k = k_dist.sample(&mut rng);
        let (uom, hard) = if k == 0 {
            (UomType::Count, rng.gen_bool(plan.zero_span))
        } else if rng.gen_bool(plan.with_spans) {
            let uom = if rng.gen_bool(plan.count_given_hard) {
                UomType::Count
            } else if rng.gen_bool(0.5) {
                UomType::Weight
            } else {
                UomType::Volume
            };
            (uom, true)
        } else {
            (UomType::ALL[easy_types.sample(&mut rng)], false)
        };
        let additive = k == 2 && uom.is_measure() && !hard && rng.gen_bool(config.additive_share);
        let locale = config.locales[locale_dist.sample(&mut rng)].0;
        let spec = choose_template(uom, k, hard, additive, &mut rng).with_locale(locale);
        let (mut record, spans) = generate_example(&spec, &mut rng);
        record.id = format!("syn-{}-{:06}", config.seed, i);
        out.push(SyntheticExample {
            spans: SpanRecord {
                id: record.id.clone(),
                spans,
                qualified: None,
            },
            record,
            template: spec.name.to_string(),
            locale,
        });
    }
    Ok(out)
}

/// Splits examples into the record list and the span sidecar.
pub fn split_examples(examples: &[SyntheticExample]) -> (Vec<ProductRecord>, Vec<SpanRecord>) {
    examples.iter().map(|e| (e.record.clone(), e.spans.clone())).unzip()
}
