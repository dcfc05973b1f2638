//! Title patterns.
//!
//! Slots: `{brand}` `{noun}` `{adj}` `{packof}` are plain text. Gold slots
//! are `{W}`/`{V}` (the main measure), `{W2}`/`{V2}` (a second measure that
//! adds to the first), `{N}` (a count with its unit) and `{C}`/`{C2}` (bare
//! pack multipliers). Distractor slots are `{TOT}` (restated total), `{dw}`
//! and `{dv}` (unrelated weight/volume), `{mg}` (a concentration) and `{dn}`
//! (a numeric phrase such as "SPF 30").

use crate::corpus::UomType;

use super::{Locale, TemplateSpec};

const COUNT_PLAIN: &[&str] = &["brushes", "incense", "bandages", "gift_set", "containers"];
const COUNT_UNITS: &[&str] = &["vitamins", "bandages", "kcup", "incense"];
const COUNT_PACKS: &[&str] = &["brushes", "bandages", "incense", "soap", "vitamins"];
const WEIGHT: &[&str] = &["coffee", "staples", "protein", "churan", "ghee_honey"];
const VOLUME: &[&str] = &["shampoo", "lotion", "sanitizer", "oil_juice"];

macro_rules! t {
    ($name:literal, $pattern:literal, $uom:ident, $k:literal, $hard:literal, $kinds:expr) => {
        TemplateSpec {
            name: $name,
            pattern: $pattern,
            uom_type: UomType::$uom,
            span_count: $k,
            hard: $hard,
            additive: false,
            kinds: $kinds,
            locale: Locale::Us,
        }
    };
}

pub(crate) const LIBRARY: &[TemplateSpec] = &[
    t!("count-plain", "{brand} {noun}, {adj}", Count, 0, false, COUNT_PLAIN),
    t!("count-phrase", "{brand} {adj} {noun} - {dn}", Count, 0, false, &["brushes", "bandages", "incense", "containers"]),
    t!("count-by-brand", "{noun} by {brand} ({adj})", Count, 0, false, COUNT_PLAIN),
    t!("count-compact", "{brand} {noun} {adj} {dw}", Count, 0, true, &["blushes"]),
    t!("count-container", "{brand} {adj} {noun} {dv}", Count, 0, true, &["containers"]),
    t!("count-container-list", "{brand} {noun}, {dv}, {adj}", Count, 0, true, &["containers"]),
    t!("count-gift", "{brand} {noun} with {dw} Travel Size Cream", Count, 0, true, &["gift_set"]),
    t!("count-units", "{brand} {noun}, {adj}, {N}", Count, 1, false, COUNT_UNITS),
    t!("count-leading", "{N} {noun} by {brand}", Count, 1, false, COUNT_UNITS),
    t!("count-pack", "{brand} {noun} {adj} ({packof} {C})", Count, 1, false, COUNT_PACKS),
    t!("count-phrase-units", "{brand} {noun} - {dn} - {N}", Count, 1, false, &["bandages", "incense", "vitamins"]),
    t!("count-pods-box", "{brand} {noun}, {adj}, {N} - {dw} Box", Count, 1, true, &["kcup"]),
    t!("count-concentration", "{brand} {noun} {mg}, {N}", Count, 1, true, &["vitamins"]),
    t!("count-soap", "{brand} {noun} {dw} ({packof} {C})", Count, 1, true, &["soap"]),
    t!("count-units-pack", "{brand} {noun} {N} ({packof} {C})", Count, 2, false, COUNT_UNITS),
    t!("count-packs-of", "{brand} {noun}, {C} Packs of {N}", Count, 2, false, COUNT_UNITS),
    t!("count-concentration-pack", "{brand} {noun} {mg} - {N} ({packof} {C})", Count, 2, true, &["vitamins"]),
    t!("count-pods-pack", "{brand} {noun} {N} - {dw} Box ({packof} {C})", Count, 2, true, &["kcup"]),
    t!("count-case", "{brand} {noun}, {C} x {N} ({packof} {C2})", Count, 3, false, COUNT_UNITS),
    t!("count-case-concentration", "{brand} {noun} {mg}, {C} x {N} ({packof} {C2})", Count, 3, true, &["vitamins"]),
    t!(
        "weight-plain",
        "{brand} {noun} {adj} {W}",
        Weight,
        1,
        false,
        &["face_powder", "face_powder", "face_powder", "coffee", "staples", "protein", "churan"]
    ),
    t!("weight-pouch", "{brand} {adj} {noun}, {W} Pouch", Weight, 1, false, WEIGHT),
    t!("weight-leading", "{W} {noun} - {brand}", Weight, 1, false, WEIGHT),
    t!("weight-phrase", "{brand} {noun} {W} - {dn}", Weight, 1, false, WEIGHT),
    t!("weight-concentration", "{brand} {noun} {W}, {mg} per Serving", Weight, 1, false, &["protein", "churan"]),
    t!("weight-jar", "{brand} {noun} {W} Jar ({dv})", Weight, 1, true, &["ghee_honey"]),
    t!("weight-tin", "{brand} {noun}, {dv} Tin, Net Wt {W}", Weight, 1, true, &["ghee_honey"]),
    t!("weight-canister", "{brand} {noun}, {adj}, {W} Canister ({C} Pack)", Weight, 2, false, &["coffee", "protein", "staples"]),
    t!("weight-restated", "{brand} {noun} {adj} {W} ({packof} {C}), (total {TOT})", Weight, 2, false, &["churan", "staples", "coffee"]),
    t!("weight-times", "{brand} {noun} {C} x {W}", Weight, 2, false, WEIGHT),
    TemplateSpec {
        name: "weight-bonus",
        pattern: "{brand} {noun} - {W} ({adj}), {mg} Amino Powder, {W2} Extra",
        uom_type: UomType::Weight,
        span_count: 2,
        hard: false,
        additive: true,
        kinds: &["protein"],
        locale: Locale::Us,
    },
    t!("weight-jar-pack", "{brand} {noun} {W} Jar ({dv}), {packof} {C}", Weight, 2, true, &["ghee_honey"]),
    t!("weight-case", "{brand} {noun}, {C} Packs of {C2} x {W}", Weight, 3, false, WEIGHT),
    t!("weight-case-jar", "{brand} {noun} {dv} Jar, {C} Packs of {C2} x {W}", Weight, 3, true, &["ghee_honey"]),
    t!("volume-plain", "{brand} {noun} {adj} {V}", Volume, 1, false, VOLUME),
    t!("volume-bottle", "{brand} {adj} {noun}, {V} Bottle", Volume, 1, false, VOLUME),
    t!("volume-phrase", "{brand} {noun} {dn} {V}", Volume, 1, false, VOLUME),
    t!("volume-leading", "{V} {noun} - {brand}", Volume, 1, false, VOLUME),
    t!("volume-sachet", "{brand} {noun} {V} with {dw} Free Sachet", Volume, 1, true, &["shampoo", "lotion"]),
    t!("volume-each", "{brand} {noun} {dn} - {TOT} ({packof} {C}), ({V} each)", Volume, 2, false, &["sanitizer", "lotion", "shampoo"]),
    t!("volume-times", "{brand} {noun} {C} x {V}", Volume, 2, false, VOLUME),
    t!("volume-pack", "{brand} {noun} {V} ({C} Pack)", Volume, 2, false, VOLUME),
    TemplateSpec {
        name: "volume-bonus",
        pattern: "{brand} {noun} {V} + {V2} Free",
        uom_type: UomType::Volume,
        span_count: 2,
        hard: false,
        additive: true,
        kinds: VOLUME,
        locale: Locale::Us,
    },
    t!("volume-sample", "{brand} {noun} {V} ({C} Pack) + {dw} Sample", Volume, 2, true, &["shampoo", "lotion"]),
    t!("volume-case", "{brand} {noun}, {C} Packs of {C2} x {V}", Volume, 3, false, VOLUME),
    t!("volume-case-gift", "{brand} {noun} {C} Packs of {C2} x {V}, {dw} Gift", Volume, 3, true, &["shampoo", "lotion"]),
];
