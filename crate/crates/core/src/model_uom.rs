//! UoM type classifier: character CNN per attribute, attention pooling over
//! attributes, optional category embeddings, and a small dense head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CharVocab, ProductRecord, UomType, DEFAULT_MAX_LEN, DEFAULT_TITLE_MAX_LEN, PAD_INDEX};
use crate::error::{Error, Result};
use crate::tensor::{Bound, Checkpoint, Graph, Init, ParamStore, Scalar, Tensor, Var};

pub const CLASS_COUNT: usize = 3;
const NORM_EPS: f64 = 1e-5;
const CHECKPOINT_KIND: &str = "uom";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UomClassifierConfig {
    pub embed_dim: usize,
    pub conv_widths: Vec<usize>,
    pub channels: usize,
    pub pool_window: usize,
    pub key_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub use_categories: bool,
    /// Taxonomy levels read from each record's category path.
    pub category_levels: usize,
    /// Title only instead of every attribute in `attributes`.
    pub short_text: bool,
    pub attributes: Vec<String>,
    pub title_max_len: usize,
    pub max_len: usize,
    /// Normalize conv activations over the sequence instead of a plain
    /// learned scale and shift.
    pub sequence_norm: bool,
    pub classes: usize,
}

impl Default for UomClassifierConfig {
    fn default() -> Self {
        UomClassifierConfig {
            embed_dim: 16,
            conv_widths: vec![3, 5, 3],
            channels: 32,
            pool_window: 2,
            key_dim: 16,
            hidden: 64,
            dropout: 0.1,
            use_categories: true,
            category_levels: 3,
            short_text: false,
            attributes: vec!["title".into(), "description".into(), "bullet_points".into()],
            title_max_len: DEFAULT_TITLE_MAX_LEN,
            max_len: DEFAULT_MAX_LEN,
            sequence_norm: false,
            classes: CLASS_COUNT,
        }
    }
}

impl UomClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("channels", self.channels),
            ("pool_window", self.pool_window),
            ("key_dim", self.key_dim),
            ("hidden", self.hidden),
            ("title_max_len", self.title_max_len),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{} must be at least 1", name)));
        }
        if self.conv_widths.is_empty() || self.conv_widths.contains(&0) {
            return Err(Error::Config("conv_widths must be non-empty and positive".into()));
        }
        if self.classes != CLASS_COUNT {
            return Err(Error::Config(format!("class count must be {}", CLASS_COUNT)));
        }
        if self.use_categories && self.category_levels == 0 {
            return Err(Error::Config("category_levels must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.short_text && self.attributes.is_empty() {
            return Err(Error::Config("no attributes configured".into()));
        }
        Ok(())
    }

    /// Attributes the encoder reads, in order.
    pub fn active_attributes(&self) -> Vec<String> {
        if self.short_text {
            vec!["title".into()]
        } else {
            self.attributes.clone()
        }
    }

    fn max_len_of(&self, attribute: &str) -> usize {
        if attribute == "title" {
            self.title_max_len
        } else {
            self.max_len
        }
    }
}

/// Category names seen in training; id 0 is reserved for unknown names.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryVocab {
    names: Vec<String>,
}

/// Embedding width for `m` categories: `⌈√m⌉`, at least 4.
pub fn category_dim(m: usize) -> usize {
    ((m as f64).sqrt().ceil() as usize).max(4)
}

impl CategoryVocab {
    pub const UNKNOWN: usize = 0;

    pub fn from_names<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Self {
        let mut names: Vec<String> = names.into_iter().map(|s| s.as_ref().to_string()).collect();
        names.sort();
        names.dedup();
        CategoryVocab { names }
    }

    pub fn from_records(records: &[ProductRecord]) -> Self {
        Self::from_names(records.iter().flat_map(|r| r.categories.iter()))
    }

    /// Number of known categories (M).
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Embedding table rows, including the unknown row.
    pub fn rows(&self) -> usize {
        self.names.len() + 1
    }

    pub fn dim(&self) -> usize {
        category_dim(self.len())
    }

    pub fn id(&self, name: &str) -> usize {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).map_or(Self::UNKNOWN, |i| i + 1)
    }
}

/// Encoded model input for one record.
#[derive(Clone, Debug, PartialEq)]
pub struct UomInput {
    pub attributes: Vec<Vec<usize>>,
    pub categories: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UomPrediction {
    pub probs: [f64; CLASS_COUNT],
    pub predicted: UomType,
    pub confidence: f64,
}

impl UomPrediction {
    /// Argmax with ties going to the lowest index.
    pub fn from_probs(probs: [f64; CLASS_COUNT]) -> Self {
        let mut best = 0;
        for i in 1..CLASS_COUNT {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        UomPrediction {
            probs,
            predicted: UomType::from_index(best).expect("three classes"),
            confidence: probs[best],
        }
    }
}

fn conv_name(i: usize, part: &str) -> String {
    format!("conv{}.{}", i, part)
}

/// Parameter tensors for `config` with `category_rows × category_dim`
/// category embeddings.
pub fn init_params<R: Rng + ?Sized>(
    config: &UomClassifierConfig,
    vocab_size: usize,
    categories: &CategoryVocab,
    rng: &mut R,
) -> Result<ParamStore<f32>> {
    config.validate()?;
    let mut p = ParamStore::new();
    let (k, c) = (config.embed_dim, config.channels);
    p.init("char_embed", vec![vocab_size, k], Init::Uniform { bound: 0.5 }, rng)?;
    let mut c_in = k;
    for (i, &w) in config.conv_widths.iter().enumerate() {
        p.init(conv_name(i, "kernel"), vec![w, c_in, c], Init::HeUniform { fan_in: w * c_in }, rng)?;
        p.init(conv_name(i, "bias"), vec![c], Init::Zeros, rng)?;
        p.init(conv_name(i, "gamma"), vec![c], Init::Ones, rng)?;
        p.init(conv_name(i, "beta"), vec![c], Init::Zeros, rng)?;
        c_in = c;
    }
    let kd = config.key_dim;
    p.init("attn.key.w", vec![c, kd], Init::Glorot { fan_in: c, fan_out: kd }, rng)?;
    p.init("attn.key.b", vec![kd], Init::Zeros, rng)?;
    p.init("attn.score", vec![kd, 1], Init::Glorot { fan_in: kd, fan_out: 1 }, rng)?;
    let mut head_in = c;
    if config.use_categories {
        let d = categories.dim();
        p.init("cat_embed", vec![categories.rows(), d], Init::Uniform { bound: 0.5 }, rng)?;
        head_in += config.category_levels * d;
    }
    let h = config.hidden;
    p.init("head.hidden.w", vec![head_in, h], Init::HeUniform { fan_in: head_in }, rng)?;
    p.init("head.hidden.b", vec![h], Init::Zeros, rng)?;
    p.init("head.out.w", vec![h, CLASS_COUNT], Init::Glorot { fan_in: h, fan_out: CLASS_COUNT }, rng)?;
    p.init("head.out.b", vec![CLASS_COUNT], Init::Zeros, rng)?;
    Ok(p)
}

/// Encoding vector `[channels]` of one attribute. An empty or pad-only
/// attribute yields a constant zero vector.
pub fn attribute_encode<T: Scalar>(
    g: &mut Graph<T>,
    b: &Bound,
    config: &UomClassifierConfig,
    ids: &[usize],
) -> Result<Var> {
    let c = config.channels;
    if ids.iter().all(|&i| i == PAD_INDEX) {
        return Ok(g.constant(Tensor::zeros(vec![c])));
    }
    let mut x = g.embed(b.var("char_embed")?, ids)?;
    for i in 0..config.conv_widths.len() {
        x = g.conv1d(x, b.var(&conv_name(i, "kernel"))?, b.var(&conv_name(i, "bias"))?, 1)?;
        let (gamma, beta) = (b.var(&conv_name(i, "gamma"))?, b.var(&conv_name(i, "beta"))?);
        x = if config.sequence_norm {
            g.seq_norm(x, gamma, beta, NORM_EPS)?
        } else {
            g.scale_shift(x, gamma, beta)?
        };
        x = g.relu(x);
        x = g.maxpool1d(x, config.pool_window)?;
    }
    let n = g.shape(x)[0];
    let pooled = g.maxpool1d(x, n)?;
    g.reshape(pooled, vec![c])
}

/// Attention-weighted average of attribute encodings. Returns the product
/// vector `[c]` and the attention weights `[a]`.
pub fn attention_pool<T: Scalar>(g: &mut Graph<T>, b: &Bound, encodings: &[Var]) -> Result<(Var, Var)> {
    let Some(&first) = encodings.first() else {
        return Err(Error::argument("attention_pool", "no attribute encodings"));
    };
    let c = g.shape(first)[0];
    let a = encodings.len();
    let flat = g.concat(encodings)?;
    let stacked = g.reshape(flat, vec![a, c])?;
    let keys = g.affine(stacked, b.var("attn.key.w")?, b.var("attn.key.b")?)?;
    let scores = g.matmul(keys, b.var("attn.score")?)?;
    let scores = g.reshape(scores, vec![a])?;
    let weights = g.softmax(scores, 0)?;
    let row = g.reshape(weights, vec![1, a])?;
    let pooled = g.matmul(row, stacked)?;
    Ok((g.reshape(pooled, vec![c])?, weights))
}

/// Concatenated embeddings `[levels × dim]` of the category ids.
pub fn embed_categories<T: Scalar>(g: &mut Graph<T>, b: &Bound, ids: &[usize]) -> Result<Var> {
    let rows = g.embed(b.var("cat_embed")?, ids)?;
    let numel = g.value(rows).numel();
    g.reshape(rows, vec![numel])
}

/// Class probabilities `[3]`. Dropout is active only on training graphs.
pub fn uom_forward<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    b: &Bound,
    config: &UomClassifierConfig,
    input: &UomInput,
    rng: &mut R,
) -> Result<Var> {
    let encodings = input
        .attributes
        .iter()
        .map(|ids| attribute_encode(g, b, config, ids))
        .collect::<Result<Vec<_>>>()?;
    let (mut features, _) = attention_pool(g, b, &encodings)?;
    if config.use_categories {
        let cats = embed_categories(g, b, &input.categories)?;
        features = g.concat(&[features, cats])?;
    }
    let width = g.shape(features)[0];
    let x = g.reshape(features, vec![1, width])?;
    let h = g.affine(x, b.var("head.hidden.w")?, b.var("head.hidden.b")?)?;
    let h = g.relu(h);
    let h = g.dropout(h, config.dropout, rng)?;
    let logits = g.affine(h, b.var("head.out.w")?, b.var("head.out.b")?)?;
    let probs = g.softmax(logits, 1)?;
    g.reshape(probs, vec![CLASS_COUNT])
}

/// Cross-entropy of the probabilities from [`uom_forward`] against `target`.
pub fn uom_loss<T: Scalar>(g: &mut Graph<T>, probs: Var, target: UomType) -> Result<Var> {
    let row = g.reshape(probs, vec![1, CLASS_COUNT])?;
    g.cross_entropy(row, &[target.index()], None)
}

/// Trained (or freshly initialised) classifier with its vocabularies.
#[derive(Clone, Debug, PartialEq)]
pub struct UomClassifier {
    pub config: UomClassifierConfig,
    pub categories: CategoryVocab,
    pub params: ParamStore<f32>,
    vocab: CharVocab,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: String,
    config: UomClassifierConfig,
    categories: CategoryVocab,
}

impl UomClassifier {
    pub fn new(config: UomClassifierConfig, categories: CategoryVocab, seed: u64) -> Result<Self> {
        let vocab = CharVocab::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&config, vocab.len(), &categories, &mut rng)?;
        Ok(UomClassifier {
            config,
            categories,
            params,
            vocab,
        })
    }

    pub fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    pub fn encode(&self, record: &ProductRecord) -> UomInput {
        let attributes = self
            .config
            .active_attributes()
            .iter()
            .map(|a| {
                let text = record.attributes.get(a).map_or("", String::as_str);
                self.vocab.encode(text, self.config.max_len_of(a)).0
            })
            .collect();
        let categories = (0..self.config.category_levels)
            .map(|l| record.categories.get(l).map_or(CategoryVocab::UNKNOWN, |c| self.categories.id(c)))
            .collect();
        UomInput { attributes, categories }
    }

    /// Eval-mode prediction for an encoded input.
    pub fn predict_input(&self, input: &UomInput) -> Result<UomPrediction> {
        let mut g = Graph::<f32>::new();
        let b = self.params.bind(&mut g, false);
        let probs = uom_forward(&mut g, &b, &self.config, input, &mut ChaCha8Rng::seed_from_u64(0))?;
        let p = g.value(probs).data();
        Ok(UomPrediction::from_probs([p[0] as f64, p[1] as f64, p[2] as f64]))
    }

    pub fn predict(&self, record: &ProductRecord) -> Result<UomPrediction> {
        self.predict_input(&self.encode(record))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let header = Header {
            model: CHECKPOINT_KIND.into(),
            config: self.config.clone(),
            categories: self.categories.clone(),
        };
        Ok(Checkpoint {
            vocab_fingerprint: self.vocab.fingerprint(),
            config: serde_json::to_value(header)?,
            params: self.params.clone(),
        })
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self> {
        let vocab = CharVocab::new();
        if checkpoint.vocab_fingerprint != vocab.fingerprint() {
            return Err(Error::Checkpoint("character vocabulary fingerprint mismatch".into()));
        }
        let header: Header = serde_json::from_value(checkpoint.config)
            .map_err(|e| Error::Checkpoint(format!("bad classifier header: {}", e)))?;
        if header.model != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("expected a `{}` checkpoint, got `{}`", CHECKPOINT_KIND, header.model)));
        }
        let expected = init_params(&header.config, vocab.len(), &header.categories, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        check_layout(&expected, &checkpoint.params)?;
        Ok(UomClassifier {
            config: header.config,
            categories: header.categories,
            params: checkpoint.params,
            vocab,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

/// Checks that `got` holds exactly the tensors of `expected`, same order and shapes.
pub(crate) fn check_layout(expected: &ParamStore<f32>, got: &ParamStore<f32>) -> Result<()> {
    let a: Vec<(&str, &[usize])> = expected.iter().map(|(n, t)| (n, t.shape())).collect();
    let b: Vec<(&str, &[usize])> = got.iter().map(|(n, t)| (n, t.shape())).collect();
    if a != b {
        return Err(Error::Checkpoint("parameter layout does not match the model config".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check_gradients;

    fn tiny_config() -> UomClassifierConfig {
        UomClassifierConfig {
            embed_dim: 4,
            conv_widths: vec![3, 3],
            channels: 4,
            key_dim: 3,
            hidden: 5,
            dropout: 0.0,
            category_levels: 2,
            ..UomClassifierConfig::default()
        }
    }

    fn model(config: UomClassifierConfig) -> UomClassifier {
        UomClassifier::new(config, CategoryVocab::from_names(["a", "a/x", "b"]), 7).unwrap()
    }

    fn record(title: &str) -> ProductRecord {
        let mut r = ProductRecord::new("r")
            .with_attr("title", title)
            .with_attr("description", "plain text")
            .with_attr("bullet_points", "");
        r.categories = vec!["a".into(), "a/x".into(), "zzz".into()];
        r
    }

    #[test]
    fn category_dims_and_ids() {
        assert_eq!(category_dim(64), 8);
        assert_eq!(category_dim(3), 4);
        assert_eq!(category_dim(65), 9);
        let v = CategoryVocab::from_names(["b", "a", "b"]);
        assert_eq!((v.len(), v.id("a"), v.id("b"), v.id("nope")), (2, 1, 2, CategoryVocab::UNKNOWN));
    }

    #[test]
    fn prediction_argmax_ties_go_first() {
        let p = UomPrediction::from_probs([0.4, 0.4, 0.2]);
        assert_eq!(p.predicted, UomType::Weight);
        assert_eq!(UomPrediction::from_probs([0.1, 0.2, 0.7]).predicted, UomType::Count);
    }

    #[test]
    fn forward_is_normalized_and_deterministic() {
        let m = model(UomClassifierConfig::default());
        let r = record("Shampoo 500 ml bottle");
        let a = m.predict(&r).unwrap();
        let b = m.predict(&r).unwrap();
        assert_eq!(a, b);
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let short = model(UomClassifierConfig {
            short_text: true,
            use_categories: false,
            ..UomClassifierConfig::default()
        });
        let p = short.predict(&r).unwrap();
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn encoder_edge_cases() {
        let m = model(UomClassifierConfig::default());
        let mut g = Graph::<f32>::new();
        let b = m.params.bind(&mut g, false);
        let empty = attribute_encode(&mut g, &b, &m.config, &[]).unwrap();
        let pads = attribute_encode(&mut g, &b, &m.config, &[PAD_INDEX; 5]).unwrap();
        assert!(g.value(empty).data().iter().all(|&v| v == 0.0));
        assert!(g.value(pads).data().iter().all(|&v| v == 0.0));

        let ids = m.vocab().encode("rice 5 kg", 64).0;
        let e1 = attribute_encode(&mut g, &b, &m.config, &ids).unwrap();
        let e2 = attribute_encode(&mut g, &b, &m.config, &ids).unwrap();
        assert_eq!(g.value(e1).data(), g.value(e2).data());

        let (single, w) = attention_pool(&mut g, &b, &[e1]).unwrap();
        assert_eq!(g.value(single).data(), g.value(e1).data());
        assert_eq!(g.value(w).data(), &[1.0]);
        let (pair, w) = attention_pool(&mut g, &b, &[e1, e2]).unwrap();
        for (x, y) in g.value(pair).data().iter().zip(g.value(e1).data()) {
            assert!((x - y).abs() < 1e-6);
        }
        assert!((g.value(w).data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(attention_pool(&mut g, &b, &[]).is_err());

        let cats = embed_categories(&mut g, &b, &[0, 2, 2]).unwrap();
        let v = g.value(cats).data();
        let d = m.categories.dim();
        assert_eq!(v.len(), 3 * d);
        assert_eq!(&v[d..2 * d], &v[2 * d..]);
        assert_eq!(&v[..d], &m.params.get("cat_embed").unwrap().data()[..d]);
    }

    #[test]
    fn unknown_categories_map_to_reserved_row() {
        let m = model(UomClassifierConfig::default());
        let input = m.encode(&record("x"));
        assert_eq!(input.categories, vec![1, 2, CategoryVocab::UNKNOWN]);
        assert_eq!(input.attributes.len(), 3);
        assert!(input.attributes[2].is_empty());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(tiny_config());
        let bytes = m.to_checkpoint().unwrap().to_bytes().unwrap();
        let back = UomClassifier::from_checkpoint(Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.to_checkpoint().unwrap();
        bad.vocab_fingerprint = "0".into();
        assert!(matches!(UomClassifier::from_checkpoint(bad), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn end_to_end_gradients() {
        for sequence_norm in [false, true] {
            let config = UomClassifierConfig {
                sequence_norm,
                ..tiny_config()
            };
            let m = model(config.clone());
            let mut r = record("oil 1 l");
            r.attributes.insert("description".into(), "big jar of 500 g".into());
            let input = m.encode(&r);
            assert!(input.attributes[1].len() <= 16);
            let store = m.params.cast::<f64>();
            let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
            let leaves: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
            let report = check_gradients(&leaves, 1e-3, |g, vars| {
                let b = Bound::from_vars(names.iter().map(String::as_str), vars)?;
                let probs = uom_forward(g, &b, &config, &input, &mut ChaCha8Rng::seed_from_u64(0))?;
                uom_loss(g, probs, UomType::Volume)
            })
            .unwrap();
            assert!(report.max_rel_err <= 1e-3, "{:?}", report);
        }
    }
}
