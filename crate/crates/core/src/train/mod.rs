//! Two-phase training: the UoM classifier first, then the quantity extractor
//! conditioned on the frozen classifier's probabilities.
//!
//! Per-example gradients are computed in parallel and summed in batch order,
//! so results do not depend on the thread count.

pub mod ablation;
pub mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyze::{is_hard, AmbiguityTokens, HardExampleSampler};
use crate::corpus::{noise_text, GoldSpan, NoiseConfig, ProductRecord, SpanRecord, UomType};
use crate::error::{Error, Result};
use crate::model_qe::{qe_forward, qe_loss, QeConfig, QuantityExtractor, SpanImage};
use crate::model_uom::{uom_forward, uom_loss, CategoryVocab, UomClassifier, UomClassifierConfig, UomInput, UomPrediction};
use crate::pipeline::{total_from_decoded, DecodeOptions};
use crate::rules::UnitLexicon;
use crate::tensor::{Adam, AdamConfig, Bound, Graph, ParamStore, Scalar, Var};

pub use ablation::{ablation_csv, run_ablation, AblationCell, AblationRow};
pub use metrics::{evaluate_extraction, evaluate_uom, totals_match, EvalMode, EvalReport, ExtractionOutcome, Prf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Uom,
    Qe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeSet {
    AllText,
    ShortText,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub phase: Phase,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplier applied to the learning rate after every epoch (1 = constant).
    pub lr_decay: f64,
    pub noise: NoiseConfig,
    /// Hard-example upsampling factor (1 = none).
    pub upsample: f64,
    pub attributes: AttributeSet,
    pub use_categories: bool,
    pub seed: u64,
    /// Frozen classifier used by the extractor phase.
    pub uom_checkpoint: Option<PathBuf>,
    pub validation_share: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Optional cap on optimizer steps.
    pub max_steps: Option<usize>,
    /// Share of zero-span records kept per extractor epoch.
    pub zero_span_keep: f64,
    /// When set, the extractor threshold is calibrated on validation data to
    /// the lowest value meeting this strict precision.
    pub precision_floor: Option<f64>,
    pub decode: DecodeOptions,
    pub uom: UomClassifierConfig,
    pub qe: QeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase: Phase::Uom,
            epochs: 12,
            batch_size: 32,
            lr: 3e-3,
            lr_decay: 0.8,
            noise: NoiseConfig::default(),
            upsample: 1.0,
            attributes: AttributeSet::AllText,
            use_categories: true,
            seed: 0,
            uom_checkpoint: None,
            validation_share: 0.1,
            patience: 5,
            max_steps: None,
            zero_span_keep: 0.3,
            precision_floor: None,
            decode: DecodeOptions::default(),
            uom: UomClassifierConfig::default(),
            qe: QeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Full check, including the phase requirements.
    pub fn validate(&self) -> Result<()> {
        self.validate_hyper()?;
        if self.phase == Phase::Qe && self.uom_checkpoint.is_none() {
            return Err(Error::Config("phase `qe` requires `uom_checkpoint`".into()));
        }
        Ok(())
    }

    fn validate_hyper(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.upsample >= 1.0) {
            return bad("upsample must be at least 1");
        }
        if !(0.0..=0.5).contains(&self.validation_share) {
            return bad("validation_share must lie in [0, 0.5]");
        }
        if !(0.0..=1.0).contains(&self.zero_span_keep) {
            return bad("zero_span_keep must lie in [0, 1]");
        }
        if !(self.decode.threshold > 0.0 && self.decode.threshold < 1.0) {
            return bad("decode.threshold must lie in (0, 1)");
        }
        if let Some(p) = self.precision_floor {
            if !(0.0..=1.0).contains(&p) {
                return bad("precision_floor must lie in [0, 1]");
            }
        }
        self.classifier_config().validate()?;
        self.qe.validate()
    }

    /// Classifier config with the attribute set and category flag applied.
    pub fn classifier_config(&self) -> UomClassifierConfig {
        UomClassifierConfig {
            short_text: self.attributes == AttributeSet::ShortText,
            use_categories: self.use_categories,
            ..self.uom.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_size: usize,
    pub val_size: usize,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub steps: usize,
}

impl TrainLog {
    fn new(train_size: usize, val_size: usize) -> Self {
        TrainLog {
            train_size,
            val_size,
            epochs: Vec::new(),
            best_epoch: 0,
            best_score: f64::NEG_INFINITY,
            steps: 0,
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// Deterministic per-use seed.
fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Splits indices so that every key keeps roughly `share` of its items in
/// the validation part. Both parts are returned in ascending order.
pub fn stratified_split<K: Ord>(keys: &[K], share: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: BTreeMap<&K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let n_val = (share * idx.len() as f64).round() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Mean loss and mean gradients over `batch`, one graph per item.
fn batch_grads<F>(params: &ParamStore<f32>, batch: &[usize], loss_of: F) -> Result<(f64, Vec<Vec<f32>>)>
where
    F: Fn(&mut Graph<f32>, &Bound, usize) -> Result<Var> + Sync,
{
    let per: Vec<(f64, Vec<Vec<f32>>)> = batch
        .par_iter()
        .map(|&item| {
            let mut g = Graph::training();
            let b = params.bind(&mut g, true);
            let loss = loss_of(&mut g, &b, item)?;
            let value = g.value(loss).data()[0].as_f64();
            g.backward(loss)?;
            let mut acc = params.zero_grads();
            b.accumulate_grads(&g, &mut acc);
            Ok((value, acc))
        })
        .collect::<Result<_>>()?;
    let mut grads = params.zero_grads();
    let mut total = 0.0;
    for (loss, g) in &per {
        total += loss;
        for (acc, part) in grads.iter_mut().zip(g) {
            for (a, &p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    let scale = 1.0 / batch.len() as f32;
    grads.iter_mut().flatten().for_each(|v| *v *= scale);
    Ok((total / batch.len() as f64, grads))
}

/// Early-stopping bookkeeping shared by both phases.
struct Stopper {
    patience: usize,
    stale: usize,
    best: Option<ParamStore<f32>>,
}

impl Stopper {
    /// Records an epoch; returns `true` when training should stop.
    fn update(&mut self, log: &mut TrainLog, stats: EpochStats, params: &ParamStore<f32>) -> bool {
        log::info!(
            "epoch {} steps {} loss {:.4} val {:.4}",
            stats.epoch,
            stats.steps,
            stats.train_loss,
            stats.val_score
        );
        if stats.val_score > log.best_score {
            log.best_score = stats.val_score;
            log.best_epoch = stats.epoch;
            self.best = Some(params.clone());
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        log.epochs.push(stats);
        self.stale >= self.patience || log.best_score >= 1.0
    }
}

fn epoch_lr(config: &TrainConfig, epoch: usize) -> f64 {
    config.lr * config.lr_decay.powi(epoch as i32)
}

fn adam(config: &TrainConfig) -> Adam {
    Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    })
}

#[derive(Clone, Debug)]
pub struct UomTrainOutcome {
    pub model: UomClassifier,
    pub log: TrainLog,
}

/// Phase one. Keeps the parameters with the best validation macro-F1; with
/// `validation_share = 0` the training set is scored instead.
pub fn train_uom(config: &TrainConfig, records: &[ProductRecord]) -> Result<UomTrainOutcome> {
    config.validate_hyper()?;
    let labelled: Vec<&ProductRecord> = records.iter().filter(|r| r.gold_uom.is_some()).collect();
    if labelled.is_empty() {
        return Err(Error::argument("train_uom", "empty dataset: no records with a gold UoM"));
    }
    let tokens = AmbiguityTokens::default();
    let hard: Vec<bool> = labelled.iter().map(|r| is_hard(r, &tokens)).collect();
    let keys: Vec<(UomType, bool)> = labelled.iter().zip(&hard).map(|(r, &h)| (r.gold_uom.unwrap(), h)).collect();
    let (train_idx, mut val_idx) = stratified_split(&keys, config.validation_share, sub_seed(config.seed, 1, 0));
    if val_idx.is_empty() {
        val_idx = train_idx.clone();
    }
    let train: Vec<&ProductRecord> = train_idx.iter().map(|&i| labelled[i]).collect();
    let train_owned: Vec<ProductRecord> = train.iter().map(|r| (*r).clone()).collect();
    let mut model = UomClassifier::new(
        config.classifier_config(),
        CategoryVocab::from_records(&train_owned),
        config.seed,
    )?;
    let val: Vec<&ProductRecord> = val_idx.iter().map(|&i| labelled[i]).collect();
    let val_gold: Vec<UomType> = val.iter().map(|r| r.gold_uom.unwrap()).collect();

    let train_hard: Vec<bool> = train_idx.iter().map(|&i| hard[i]).collect();
    let mut sampler = HardExampleSampler::new(&train_hard, config.upsample, sub_seed(config.seed, 2, 0))?;
    let mut opt = adam(config);
    let mut log = TrainLog::new(train.len(), val_idx.len());
    let mut stopper = Stopper {
        patience: config.patience.max(1),
        stale: 0,
        best: None,
    };
    'epochs: for epoch in 0..config.epochs {
        opt.config.lr = epoch_lr(config, epoch);
        let order = sampler.epoch();
        let mut losses = Vec::new();
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let positions: Vec<usize> = (bi * config.batch_size..bi * config.batch_size + batch.len()).collect();
            let (loss, grads) = batch_grads(&model.params, &positions, |g, b, pos| {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, 100 + epoch as u64, pos as u64));
                let record = train[order[pos]];
                let (noised, _) = noise_text(record, &[], &config.noise, &mut rng);
                let input = model.encode(&noised);
                let probs = uom_forward(g, b, &model.config, &input, &mut rng)?;
                uom_loss(g, probs, record.gold_uom.unwrap())
            })?;
            opt.step(&mut model.params, &grads)?;
            losses.push(loss);
            log.steps += 1;
            if config.max_steps.is_some_and(|m| log.steps >= m) {
                let stats = epoch_stats(epoch, &log, &losses, uom_val_score(&model, &val, &val_gold)?);
                stopper.update(&mut log, stats, &model.params);
                break 'epochs;
            }
        }
        let stats = epoch_stats(epoch, &log, &losses, uom_val_score(&model, &val, &val_gold)?);
        if stopper.update(&mut log, stats, &model.params) {
            break;
        }
    }
    if let Some(best) = stopper.best {
        model.params = best;
    }
    Ok(UomTrainOutcome { model, log })
}

fn epoch_stats(epoch: usize, log: &TrainLog, losses: &[f64], val_score: f64) -> EpochStats {
    EpochStats {
        epoch,
        steps: log.steps,
        train_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
        val_score,
    }
}

/// Eval-mode predictions, computed in parallel.
pub fn predict_uom(model: &UomClassifier, records: &[&ProductRecord]) -> Result<Vec<UomPrediction>> {
    let inputs: Vec<UomInput> = records.iter().map(|r| model.encode(r)).collect();
    inputs.par_iter().map(|i| model.predict_input(i)).collect()
}

fn uom_val_score(model: &UomClassifier, val: &[&ProductRecord], gold: &[UomType]) -> Result<f64> {
    let preds: Vec<UomType> = predict_uom(model, val)?.into_iter().map(|p| p.predicted).collect();
    Ok(evaluate_uom(&preds, gold)?.macro_f1)
}

/// Extraction dataset derived from tagged records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QeDatasetSummary {
    pub records: usize,
    pub usable: usize,
    pub unqualified: usize,
    /// Qualified but unusable: spans outside the extractor attribute, or an
    /// empty or overlong text.
    pub unusable: usize,
    /// `1 - usable / records`.
    pub shrinkage: f64,
}

#[derive(Clone, Debug)]
pub struct QeTrainOutcome {
    pub model: QuantityExtractor,
    pub log: TrainLog,
    pub dataset: QeDatasetSummary,
    /// Classifier checkpoint digest before and after training.
    pub frozen_hash_before: String,
    pub frozen_hash_after: String,
}

struct QeItem<'a> {
    record: &'a ProductRecord,
    spans: Vec<GoldSpan>,
    probs: [f64; 3],
    predicted: UomType,
}

/// Phase two. The classifier is only read: its probabilities condition the
/// extractor and its digest is compared before and after.
pub fn train_qe(
    config: &TrainConfig,
    records: &[ProductRecord],
    spans: &[SpanRecord],
    classifier: &UomClassifier,
) -> Result<QeTrainOutcome> {
    config.validate_hyper()?;
    let frozen_hash_before = classifier.to_checkpoint()?.digest()?;
    let by_id: HashMap<&str, &SpanRecord> = spans.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut extractor = QuantityExtractor::new(config.qe.clone(), config.seed)?;
    let attr = extractor.config.attribute.clone();
    let max_len = extractor.config.max_len;

    let labelled: Vec<&ProductRecord> = records
        .iter()
        .filter(|r| r.gold_uom.is_some() && r.gold_total.is_some())
        .collect();
    if labelled.is_empty() {
        return Err(Error::argument("train_qe", "empty dataset: no records with gold labels"));
    }
    let mut summary = QeDatasetSummary {
        records: labelled.len(),
        ..Default::default()
    };
    let mut usable = Vec::new();
    for r in &labelled {
        let entry = by_id
            .get(r.id.as_str())
            .ok_or_else(|| Error::argument("train_qe", format!("missing span sidecar entry for record `{}`", r.id)))?;
        if entry.qualified == Some(false) {
            summary.unqualified += 1;
            continue;
        }
        let text_len = r.attributes.get(&attr).map_or(0, |t| t.chars().count());
        let fits = entry.spans.iter().all(|s| s.attribute == attr && s.end <= text_len.min(max_len));
        if text_len == 0 || !fits {
            summary.unusable += 1;
            continue;
        }
        usable.push((*r, entry.spans.clone()));
    }
    summary.usable = usable.len();
    summary.shrinkage = 1.0 - summary.usable as f64 / summary.records as f64;
    log::info!(
        "extraction set: {} of {} records usable ({:.1}% smaller)",
        summary.usable,
        summary.records,
        100.0 * summary.shrinkage
    );
    if usable.is_empty() {
        return Err(Error::argument("train_qe", "no usable records after tagging"));
    }

    let records_only: Vec<&ProductRecord> = usable.iter().map(|(r, _)| *r).collect();
    let preds = predict_uom(classifier, &records_only)?;
    let items: Vec<QeItem> = usable
        .into_iter()
        .zip(preds)
        .map(|((record, spans), p)| QeItem {
            record,
            spans,
            probs: p.probs,
            predicted: p.predicted,
        })
        .collect();
    let keys: Vec<(UomType, usize)> = items.iter().map(|i| (i.record.gold_uom.unwrap(), i.spans.len())).collect();
    let (train_idx, mut val_idx) = stratified_split(&keys, config.validation_share, sub_seed(config.seed, 3, 0));
    if val_idx.is_empty() {
        val_idx = train_idx.clone();
    }
    let tokens = AmbiguityTokens::default();
    let train_hard: Vec<bool> = train_idx.iter().map(|&i| is_hard(items[i].record, &tokens)).collect();
    let mut sampler = HardExampleSampler::new(&train_hard, config.upsample, sub_seed(config.seed, 4, 0))?;
    let lexicon = UnitLexicon::default();

    let mut opt = adam(config);
    let mut log = TrainLog::new(train_idx.len(), val_idx.len());
    let mut stopper = Stopper {
        patience: config.patience.max(1),
        stale: 0,
        best: None,
    };
    let cap = extractor.config.positive_weight_cap;
    'epochs: for epoch in 0..config.epochs {
        opt.config.lr = epoch_lr(config, epoch);
        let mut keep_rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, 5, epoch as u64));
        let order: Vec<usize> = sampler
            .epoch()
            .into_iter()
            .map(|p| train_idx[p])
            .filter(|&i| !items[i].spans.is_empty() || keep_rng.gen::<f64>() < config.zero_span_keep)
            .collect();
        let mut losses = Vec::new();
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let positions: Vec<usize> = (bi * config.batch_size..bi * config.batch_size + batch.len()).collect();
            let (loss, grads) = batch_grads(&extractor.params, &positions, |g, b, pos| {
                let item = &items[order[pos]];
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, 200 + epoch as u64, pos as u64));
                let (mut rec, mut spans) = noise_text(item.record, &item.spans, &config.noise, &mut rng);
                if extractor.encode(&rec).1.is_empty() {
                    (rec, spans) = (item.record.clone(), item.spans.clone());
                }
                let ids = extractor.encode(&rec).1;
                let pairs: Vec<(usize, usize)> =
                    spans.iter().filter(|s| s.end <= ids.len()).map(|s| (s.start, s.end)).collect();
                let img = qe_forward(g, b, &extractor.config, &ids, item.probs)?;
                qe_loss(g, img, &pairs, cap)
            })?;
            opt.step(&mut extractor.params, &grads)?;
            losses.push(loss);
            log.steps += 1;
            if config.max_steps.is_some_and(|m| log.steps >= m) {
                let score = qe_val_score(&extractor, &items, &val_idx, &config.decode, &lexicon)?;
                let stats = epoch_stats(epoch, &log, &losses, score);
                stopper.update(&mut log, stats, &extractor.params);
                break 'epochs;
            }
        }
        let score = qe_val_score(&extractor, &items, &val_idx, &config.decode, &lexicon)?;
        let stats = epoch_stats(epoch, &log, &losses, score);
        if stopper.update(&mut log, stats, &extractor.params) {
            break;
        }
    }
    if let Some(best) = stopper.best {
        extractor.params = best;
    }
    extractor.config.threshold = config.decode.threshold;
    if let Some(floor) = config.precision_floor {
        let val_items: Vec<&QeItem> = val_idx.iter().map(|&i| &items[i]).collect();
        let cal = calibrate(&extractor, &val_items, floor, config.decode.numeral_aligned, &lexicon)?;
        log::info!("calibrated threshold {:.2} (precision {:.4}, recall {:.4})", cal.0, cal.1, cal.2);
        extractor.config.threshold = cal.0;
    }
    let frozen_hash_after = classifier.to_checkpoint()?.digest()?;
    if frozen_hash_after != frozen_hash_before {
        return Err(Error::Checkpoint("classifier parameters changed during extractor training".into()));
    }
    Ok(QeTrainOutcome {
        model: extractor,
        log,
        dataset: summary,
        frozen_hash_before,
        frozen_hash_after,
    })
}

fn item_images(extractor: &QuantityExtractor, items: &[&QeItem]) -> Result<Vec<SpanImage>> {
    items.par_iter().map(|i| extractor.image(i.record, i.probs)).collect()
}

fn outcomes_at(
    extractor: &QuantityExtractor,
    items: &[&QeItem],
    images: &[SpanImage],
    decode: &DecodeOptions,
    lexicon: &UnitLexicon,
) -> Vec<ExtractionOutcome> {
    items
        .iter()
        .zip(images)
        .map(|(item, image)| {
            let (text, _) = extractor.encode(item.record);
            let decoded = decode.decode(image, text, item.predicted, lexicon);
            ExtractionOutcome {
                uom: item.predicted,
                total: total_from_decoded(&decoded, item.predicted, lexicon),
            }
        })
        .collect()
}

fn qe_val_score(
    extractor: &QuantityExtractor,
    items: &[QeItem],
    val_idx: &[usize],
    decode: &DecodeOptions,
    lexicon: &UnitLexicon,
) -> Result<f64> {
    let val: Vec<&QeItem> = val_idx.iter().map(|&i| &items[i]).collect();
    let images = item_images(extractor, &val)?;
    let outcomes = outcomes_at(extractor, &val, &images, decode, lexicon);
    let records: Vec<ProductRecord> = val.iter().map(|i| i.record.clone()).collect();
    Ok(evaluate_extraction(&outcomes, &records, lexicon)?.micro.f1)
}

/// Threshold sweep: the lowest threshold whose strict precision reaches
/// `floor`, or the most precise one if none does. Returns (threshold,
/// precision, recall).
fn calibrate(
    extractor: &QuantityExtractor,
    items: &[&QeItem],
    floor: f64,
    numeral_aligned: bool,
    lexicon: &UnitLexicon,
) -> Result<(f64, f64, f64)> {
    let images = item_images(extractor, items)?;
    let records: Vec<ProductRecord> = items.iter().map(|i| i.record.clone()).collect();
    let mut best: Option<(f64, f64, f64)> = None;
    for step in 1..20 {
        let threshold = step as f64 * 0.05;
        let decode = DecodeOptions {
            threshold,
            numeral_aligned,
        };
        let r = evaluate_extraction(&outcomes_at(extractor, items, &images, &decode, lexicon), &records, lexicon)?;
        let cand = (threshold, r.micro.precision, r.micro.recall);
        if r.micro.precision >= floor {
            return Ok(cand);
        }
        if best.map_or(true, |b| cand.1 > b.1) {
            best = Some(cand);
        }
    }
    Ok(best.expect("non-empty sweep"))
}

/// Strict extraction outcomes for `records` under classifier predictions.
pub fn predict_extraction(
    classifier: &UomClassifier,
    extractor: &QuantityExtractor,
    records: &[ProductRecord],
    decode: &DecodeOptions,
    lexicon: &UnitLexicon,
) -> Result<Vec<ExtractionOutcome>> {
    let refs: Vec<&ProductRecord> = records.iter().collect();
    let preds = predict_uom(classifier, &refs)?;
    records
        .par_iter()
        .zip(preds)
        .map(|(r, p)| {
            let image = extractor.image(r, p.probs)?;
            let (text, _) = extractor.encode(r);
            let decoded = decode.decode(&image, text, p.predicted, lexicon);
            Ok(ExtractionOutcome {
                uom: p.predicted,
                total: total_from_decoded(&decoded, p.predicted, lexicon),
            })
        })
        .collect()
}

/// Evaluation entry point over trained models.
pub fn evaluate(
    classifier: &UomClassifier,
    extractor: Option<&QuantityExtractor>,
    records: &[ProductRecord],
    mode: EvalMode,
    decode: &DecodeOptions,
) -> Result<EvalReport> {
    match mode {
        EvalMode::Uom => {
            let gold = records
                .iter()
                .map(|r| r.gold_uom.ok_or_else(|| Error::argument("evaluate", format!("record `{}` lacks a gold UoM", r.id))))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&ProductRecord> = records.iter().collect();
            let preds: Vec<UomType> = predict_uom(classifier, &refs)?.into_iter().map(|p| p.predicted).collect();
            evaluate_uom(&preds, &gold)
        }
        EvalMode::Extraction => {
            let extractor = extractor.ok_or_else(|| Error::argument("evaluate", "extraction mode needs an extractor"))?;
            let lexicon = UnitLexicon::default();
            let outcomes = predict_extraction(classifier, extractor, records, decode, &lexicon)?;
            evaluate_extraction(&outcomes, records, &lexicon)
        }
    }
}
