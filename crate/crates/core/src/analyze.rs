//! Title ambiguity, dataset statistics and hard-example upsampling.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ProductRecord, SpanRecord, UomType};
use crate::error::{Error, Result};
use crate::rules::{words, UnitLexicon};

/// Weight and volume unit tokens used to flag conflicting titles.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbiguityTokens {
    pub weight: HashSet<String>,
    pub volume: HashSet<String>,
}

impl AmbiguityTokens {
    pub fn from_lexicon(lexicon: &UnitLexicon) -> Self {
        AmbiguityTokens {
            weight: lexicon.tokens_of(UomType::Weight).map(str::to_string).collect(),
            volume: lexicon.tokens_of(UomType::Volume).map(str::to_string).collect(),
        }
    }

    fn known(&self, token: &str) -> bool {
        self.weight.contains(token) || self.volume.contains(token)
    }
}

impl Default for AmbiguityTokens {
    fn default() -> Self {
        Self::from_lexicon(&UnitLexicon::default())
    }
}

/// Lowercased title words; two-word unit tokens ("fl oz") are kept whole and
/// their parts are not added separately.
pub fn title_tokens(title: &str, tokens: &AmbiguityTokens) -> BTreeSet<String> {
    let ws = words(title);
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < ws.len() {
        if i + 1 < ws.len() {
            let bigram = format!("{} {}", ws[i], ws[i + 1]);
            if tokens.known(&bigram) {
                out.insert(bigram);
                i += 2;
                continue;
            }
        }
        out.insert(ws[i].clone());
        i += 1;
    }
    out
}

/// 1 when the title's unit tokens conflict with UoM type `k`:
/// a weight token under volume, a volume token under weight, or any
/// weight/volume token under count. 0 otherwise.
pub fn ambiguity(title_tokens: &BTreeSet<String>, k: UomType, tokens: &AmbiguityTokens) -> u8 {
    let has_w = title_tokens.iter().any(|t| tokens.weight.contains(t));
    let has_v = title_tokens.iter().any(|t| tokens.volume.contains(t));
    let hit = match k {
        UomType::Volume => has_w,
        UomType::Weight => has_v,
        UomType::Count => has_w || has_v,
    };
    u8::from(hit)
}

/// Ambiguity of a labelled record's title; unlabelled records are never hard.
pub fn is_hard(record: &ProductRecord, tokens: &AmbiguityTokens) -> bool {
    record
        .gold_uom
        .is_some_and(|k| ambiguity(&title_tokens(record.title(), tokens), k, tokens) == 1)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub records: usize,
    pub hard: usize,
    pub share: f64,
}

impl Share {
    fn add(&mut self, hard: bool) {
        self.records += 1;
        self.hard += usize::from(hard);
    }

    fn finish(&mut self) {
        self.share = if self.records == 0 { 0.0 } else { self.hard as f64 / self.records as f64 };
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub labelled: usize,
    pub overall: Share,
    pub per_uom: BTreeMap<UomType, Share>,
    /// Keyed by top-level category (first path element).
    pub per_category: BTreeMap<String, Share>,
    /// Records by number of gold spans; the last bucket holds 3 or more.
    pub span_histogram: [usize; 4],
    pub unqualifiable: usize,
}

/// Ambiguity shares and span-count histogram. `spans` are matched to records
/// by id when given.
pub fn dataset_stats(records: &[ProductRecord], spans: Option<&[SpanRecord]>, tokens: &AmbiguityTokens) -> DatasetStats {
    let mut stats = DatasetStats {
        records: records.len(),
        ..Default::default()
    };
    for r in records {
        let Some(k) = r.gold_uom else {
            continue;
        };
        stats.labelled += 1;
        let hard = is_hard(r, tokens);
        stats.overall.add(hard);
        stats.per_uom.entry(k).or_default().add(hard);
        let cat = r.categories.first().cloned().unwrap_or_else(|| "<none>".into());
        stats.per_category.entry(cat).or_default().add(hard);
    }
    stats.overall.finish();
    stats.per_uom.values_mut().for_each(Share::finish);
    stats.per_category.values_mut().for_each(Share::finish);
    if let Some(spans) = spans {
        for s in spans {
            stats.span_histogram[s.spans.len().min(3)] += 1;
            if s.qualified == Some(false) {
                stats.unqualifiable += 1;
            }
        }
    }
    stats
}

/// Epoch generator that over-represents hard examples.
///
/// Every non-hard index appears exactly once per epoch. Hard indices are
/// drawn without replacement (reshuffled when exhausted) so that they make up
/// `min(factor × base_rate, 0.5)` of the epoch, where `base_rate` is their
/// share of the dataset. With no hard examples the epoch is a plain shuffle.
#[derive(Clone, Debug)]
pub struct HardExampleSampler {
    easy: Vec<usize>,
    hard: Vec<usize>,
    hard_pool: Vec<usize>,
    target_share: f64,
    rng: ChaCha8Rng,
}

impl HardExampleSampler {
    pub fn new(hard_flags: &[bool], factor: f64, seed: u64) -> Result<Self> {
        if !(factor >= 1.0) {
            return Err(Error::argument("upsample_hard", format!("factor {} must be >= 1", factor)));
        }
        let (hard, easy): (Vec<usize>, Vec<usize>) = (0..hard_flags.len()).partition(|&i| hard_flags[i]);
        let base = if hard_flags.is_empty() { 0.0 } else { hard.len() as f64 / hard_flags.len() as f64 };
        let target_share = if hard.is_empty() { 0.0 } else { (factor * base).min(0.5).max(base.min(0.5)) };
        Ok(HardExampleSampler {
            easy,
            hard,
            hard_pool: Vec::new(),
            target_share,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn target_share(&self) -> f64 {
        self.target_share
    }

    fn draw_hard(&mut self) -> usize {
        if self.hard_pool.is_empty() {
            self.hard_pool = self.hard.clone();
            self.hard_pool.shuffle(&mut self.rng);
        }
        self.hard_pool.pop().expect("non-empty hard set")
    }

    /// Indices for one epoch, shuffled.
    pub fn epoch(&mut self) -> Vec<usize> {
        let mut out = self.easy.clone();
        if !self.hard.is_empty() {
            let n_hard = if self.easy.is_empty() {
                self.hard.len()
            } else {
                let r = self.target_share;
                (r * self.easy.len() as f64 / (1.0 - r)).round() as usize
            };
            for _ in 0..n_hard {
                let i = self.draw_hard();
                out.push(i);
            }
        }
        out.shuffle(&mut self.rng);
        out
    }
}
