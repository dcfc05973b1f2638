//! Quantity extractor: a dilated character CNN conditioned on UoM
//! probabilities, start/end branches combined into an `n × n` span image,
//! and a thresholded multi-span decoder.
//!
//! Image axes: row = start character, column = end character (inclusive).
//! Depth channel 1 is the "span" probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CharVocab, ProductRecord, UomType, DEFAULT_TITLE_MAX_LEN};
use crate::error::{Error, Result};
use crate::model_uom::check_layout;
use crate::rules::{cue_at, span_cue, tokenize, TokenKind, UnitLexicon};
use crate::tensor::{Bound, Checkpoint, Graph, Init, ParamStore, Scalar, Tensor, Var};

const CHECKPOINT_KIND: &str = "qe";
/// Positional channels appended to each branch output.
pub const POSITION_CHANNELS: usize = 2;
pub const SPAN_CHANNEL: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub width: usize,
    pub dilation: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QeConfig {
    pub embed_dim: usize,
    pub channels: usize,
    pub encoder: Vec<EncoderLayer>,
    pub branch_width: usize,
    /// Depth of `s` and `e`, positional channels included.
    pub depth: usize,
    pub image_channels: usize,
    pub attribute: String,
    pub max_len: usize,
    pub threshold: f64,
    pub positive_weight_cap: f64,
}

impl Default for QeConfig {
    fn default() -> Self {
        let layer = |width, dilation| EncoderLayer { width, dilation };
        QeConfig {
            embed_dim: 16,
            channels: 32,
            encoder: vec![layer(5, 1), layer(3, 2), layer(3, 4), layer(3, 8), layer(3, 16)],
            branch_width: 5,
            depth: 16,
            image_channels: 8,
            attribute: "title".into(),
            max_len: DEFAULT_TITLE_MAX_LEN,
            threshold: 0.5,
            positive_weight_cap: 1000.0,
        }
    }
}

impl QeConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("channels", self.channels),
            ("branch_width", self.branch_width),
            ("image_channels", self.image_channels),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{} must be at least 1", name)));
        }
        if self.depth <= POSITION_CHANNELS {
            return Err(Error::Config(format!("depth must exceed {}", POSITION_CHANNELS)));
        }
        if self.encoder.is_empty() || self.encoder.iter().any(|l| l.width == 0 || l.dilation == 0) {
            return Err(Error::Config("encoder layers need positive width and dilation".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if !(self.positive_weight_cap >= 1.0) {
            return Err(Error::Config("positive_weight_cap must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn init_params<R: Rng + ?Sized>(config: &QeConfig, vocab_size: usize, rng: &mut R) -> Result<ParamStore<f32>> {
    config.validate()?;
    let mut p = ParamStore::new();
    let (k, c) = (config.embed_dim, config.channels);
    p.init("char_embed", vec![vocab_size, k], Init::Uniform { bound: 0.5 }, rng)?;
    let mut c_in = k;
    for (i, l) in config.encoder.iter().enumerate() {
        p.init(format!("enc{}.kernel", i), vec![l.width, c_in, c], Init::HeUniform { fan_in: l.width * c_in }, rng)?;
        p.init(format!("enc{}.bias", i), vec![c], Init::Zeros, rng)?;
        c_in = c;
    }
    let (w, bin, bout) = (config.branch_width, c + 3, config.depth - POSITION_CHANNELS);
    for branch in ["start", "end"] {
        p.init(format!("{}.kernel", branch), vec![w, bin, bout], Init::Glorot { fan_in: w * bin, fan_out: bout }, rng)?;
        p.init(format!("{}.bias", branch), vec![bout], Init::Zeros, rng)?;
    }
    let (d, ic) = (config.depth, config.image_channels);
    p.init("image.conv.kernel", vec![3, 3, d, ic], Init::HeUniform { fan_in: 9 * d }, rng)?;
    p.init("image.conv.bias", vec![ic], Init::Zeros, rng)?;
    p.init("image.out.kernel", vec![1, 1, ic, 2], Init::Glorot { fan_in: ic, fan_out: 2 }, rng)?;
    p.init("image.out.bias", vec![2], Init::Zeros, rng)?;
    Ok(p)
}

/// Length-preserving encoding `[n × channels]` of `ids` (n ≥ 1).
pub fn qe_encode<T: Scalar>(g: &mut Graph<T>, b: &Bound, config: &QeConfig, ids: &[usize]) -> Result<Var> {
    let mut y = g.embed(b.var("char_embed")?, ids)?;
    for (i, l) in config.encoder.iter().enumerate() {
        y = g.conv1d(y, b.var(&format!("enc{}.kernel", i))?, b.var(&format!("enc{}.bias", i))?, l.dilation)?;
        y = g.relu(y);
    }
    Ok(y)
}

/// Positional channels `[i/n, flag]` for every position.
fn positions(n: usize, flag: f64) -> Vec<f64> {
    (0..n).flat_map(|i| [i as f64 / n as f64, flag]).collect()
}

/// Start and end branch outputs `[n × depth]`, each conditioned on the UoM
/// probabilities and suffixed with positional channels (`flag` 0 for start,
/// 1 for end).
pub fn branch_se<T: Scalar>(g: &mut Graph<T>, b: &Bound, y: Var, uom_probs: [f64; 3]) -> Result<(Var, Var)> {
    let n = g.shape(y)[0];
    let p = g.constant(Tensor::from_vec(uom_probs.iter().map(|&v| T::of(v)).collect()));
    let tiled = g.repeat_rows(p, n)?;
    let x = g.concat(&[y, tiled])?;
    let mut out = Vec::with_capacity(2);
    for (branch, flag) in [("start", 0.0), ("end", 1.0)] {
        let h = g.conv1d(x, b.var(&format!("{}.kernel", branch))?, b.var(&format!("{}.bias", branch))?, 1)?;
        let pos = Tensor::new(vec![n, POSITION_CHANNELS], positions(n, flag).into_iter().map(T::of).collect())?;
        let pos = g.constant(pos);
        out.push(g.concat(&[h, pos])?);
    }
    Ok((out[0], out[1]))
}

/// Span-image probabilities `[n × n × 2]` from `s` and `e`.
pub fn build_span_image<T: Scalar>(g: &mut Graph<T>, b: &Bound, s: Var, e: Var) -> Result<Var> {
    let x = g.span_outer(s, e)?;
    let h = g.conv2d(x, b.var("image.conv.kernel")?, b.var("image.conv.bias")?)?;
    let h = g.relu(h);
    let logits = g.conv2d(h, b.var("image.out.kernel")?, b.var("image.out.bias")?)?;
    g.softmax(logits, 2)
}

pub fn qe_forward<T: Scalar>(
    g: &mut Graph<T>,
    b: &Bound,
    config: &QeConfig,
    ids: &[usize],
    uom_probs: [f64; 3],
) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::argument("qe_forward", "empty sequence"));
    }
    let y = qe_encode(g, b, config, ids)?;
    let (s, e) = branch_se(g, b, y, uom_probs)?;
    build_span_image(g, b, s, e)
}

/// Per-pixel targets and weights over the upper triangle. `spans` are
/// `[start, end)` character ranges.
pub fn pixel_targets(n: usize, spans: &[(usize, usize)], cap: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut targets = vec![0usize; n * n];
    for &(s, e) in spans {
        if s >= e || e > n {
            return Err(Error::Index {
                op: "qe_loss",
                index: e.max(s),
                bound: n,
            });
        }
        targets[s * n + e - 1] = 1;
    }
    let positives = targets.iter().filter(|&&t| t == 1).count();
    let area = n * (n + 1) / 2;
    let pos_weight = if positives == 0 { 1.0 } else { (area as f64 / positives as f64).min(cap) };
    let weights = (0..n * n)
        .map(|p| {
            let (i, j) = (p / n, p % n);
            match (i <= j, targets[p]) {
                (false, _) => 0.0,
                (true, 1) => pos_weight,
                (true, _) => 1.0,
            }
        })
        .collect();
    Ok((targets, weights))
}

/// Weighted two-class cross-entropy over the upper triangle of `image`.
pub fn qe_loss<T: Scalar>(g: &mut Graph<T>, image: Var, spans: &[(usize, usize)], cap: f64) -> Result<Var> {
    let n = g.shape(image)[0];
    let (targets, weights) = pixel_targets(n, spans, cap)?;
    g.cross_entropy(image, &targets, Some(&weights))
}

/// Depth-softmaxed span image.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanImage {
    n: usize,
    probs: Vec<f32>,
}

impl SpanImage {
    /// `probs` is `[n × n × 2]` row-major.
    pub fn new(n: usize, probs: Vec<f32>) -> Result<Self> {
        if probs.len() != n * n * 2 {
            return Err(Error::shape("span_image", format!("{} values for n = {}", probs.len(), n)));
        }
        Ok(SpanImage { n, probs })
    }

    /// Image whose span channel at `(i, j)` is `score(i, j)`.
    pub fn from_scores(n: usize, score: impl Fn(usize, usize) -> f32) -> Self {
        let mut probs = Vec::with_capacity(n * n * 2);
        for i in 0..n {
            for j in 0..n {
                let p = score(i, j);
                probs.extend([1.0 - p, p]);
            }
        }
        SpanImage { n, probs }
    }

    pub fn empty() -> Self {
        SpanImage { n: 0, probs: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixel(&self, i: usize, j: usize) -> [f32; 2] {
        let o = (i * self.n + j) * 2;
        [self.probs[o], self.probs[o + 1]]
    }

    pub fn span_score(&self, i: usize, j: usize) -> f32 {
        self.probs[(i * self.n + j) * 2 + SPAN_CHANNEL]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedSpan {
    pub start: usize,
    /// Exclusive end character index.
    pub end: usize,
    pub score: f64,
    pub value: Option<f64>,
    pub cued_type: UomType,
    pub unit: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Decoded {
    Spans(Vec<DecodedSpan>),
    /// No span cleared the threshold under a count prediction: quantity one.
    CountOne,
    Abstain,
}

impl Decoded {
    pub fn spans(&self) -> &[DecodedSpan] {
        match self {
            Decoded::Spans(s) => s,
            _ => &[],
        }
    }
}

fn describe(text: &str, start: usize, end: usize, score: f64, lexicon: &UnitLexicon) -> DecodedSpan {
    let tokens = tokenize(text);
    let numeral = tokens
        .iter()
        .position(|t| t.kind == TokenKind::Number && t.start == start && t.end == end);
    let (value, (cued_type, unit)) = match numeral {
        Some(i) => (tokens[i].text.parse().ok(), cue_at(&tokens, i, lexicon)),
        None => {
            let raw: String = text.chars().skip(start).take(end - start).collect();
            (raw.replace(',', ".").trim().parse().ok(), span_cue(text, start, end, lexicon))
        }
    };
    DecodedSpan {
        start,
        end,
        score,
        value,
        cued_type,
        unit,
    }
}

fn greedy(mut pixels: Vec<(usize, usize, f32)>) -> Vec<(usize, usize, f32)> {
    pixels.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(a.0.cmp(&b.0))
            .then((a.1 - a.0).cmp(&(b.1 - b.0)))
    });
    let mut kept: Vec<(usize, usize, f32)> = Vec::new();
    for p in pixels {
        if kept.iter().all(|k| p.1 < k.0 || k.1 < p.0) {
            kept.push(p);
        }
    }
    kept.sort_by_key(|k| k.0);
    kept
}

fn finish(kept: Vec<(usize, usize, f32)>, text: &str, uom: UomType, lexicon: &UnitLexicon) -> Decoded {
    if kept.is_empty() {
        return if uom == UomType::Count { Decoded::CountOne } else { Decoded::Abstain };
    }
    Decoded::Spans(
        kept.into_iter()
            .map(|(i, j, s)| describe(text, i, j + 1, s as f64, lexicon))
            .collect(),
    )
}

/// Thresholds the upper triangle (strictly above `threshold`), then keeps
/// non-overlapping spans greedily by score; ties go to the earlier start,
/// then the shorter span.
pub fn decode_spans(image: &SpanImage, text: &str, uom: UomType, threshold: f64, lexicon: &UnitLexicon) -> Decoded {
    let n = image.n();
    let mut pixels = Vec::new();
    for i in 0..n {
        for j in i..n {
            let s = image.span_score(i, j);
            if s as f64 > threshold {
                pixels.push((i, j, s));
            }
        }
    }
    finish(greedy(pixels), text, uom, lexicon)
}

/// Like [`decode_spans`], but only pixels that cover exactly one numeral
/// token of `text` are eligible.
pub fn decode_numeral_spans(
    image: &SpanImage,
    text: &str,
    uom: UomType,
    threshold: f64,
    lexicon: &UnitLexicon,
) -> Decoded {
    let n = image.n();
    let pixels = tokenize(text)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Number && t.end <= n)
        .map(|t| (t.start, t.end - 1, image.span_score(t.start, t.end - 1)))
        .filter(|p| p.2 as f64 > threshold)
        .collect();
    finish(greedy(pixels), text, uom, lexicon)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantityExtractor {
    pub config: QeConfig,
    pub params: ParamStore<f32>,
    vocab: CharVocab,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: String,
    config: QeConfig,
}

impl QuantityExtractor {
    pub fn new(config: QeConfig, seed: u64) -> Result<Self> {
        let vocab = CharVocab::new();
        let params = init_params(&config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(QuantityExtractor { config, params, vocab })
    }

    pub fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    /// Text the extractor reads and its encoded ids.
    pub fn encode<'r>(&self, record: &'r ProductRecord) -> (&'r str, Vec<usize>) {
        let text = record.attributes.get(&self.config.attribute).map_or("", String::as_str);
        (text, self.vocab.encode(text, self.config.max_len).0)
    }

    pub fn image_for_ids(&self, ids: &[usize], uom_probs: [f64; 3]) -> Result<SpanImage> {
        if ids.is_empty() {
            return Ok(SpanImage::empty());
        }
        let mut g = Graph::<f32>::new();
        let b = self.params.bind(&mut g, false);
        let img = qe_forward(&mut g, &b, &self.config, ids, uom_probs)?;
        SpanImage::new(ids.len(), g.value(img).data().to_vec())
    }

    pub fn image(&self, record: &ProductRecord, uom_probs: [f64; 3]) -> Result<SpanImage> {
        self.image_for_ids(&self.encode(record).1, uom_probs)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let header = Header {
            model: CHECKPOINT_KIND.into(),
            config: self.config.clone(),
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
            .map_err(|e| Error::Checkpoint(format!("bad extractor header: {}", e)))?;
        if header.model != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("expected a `{}` checkpoint, got `{}`", CHECKPOINT_KIND, header.model)));
        }
        let expected = init_params(&header.config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        check_layout(&expected, &checkpoint.params)?;
        Ok(QuantityExtractor {
            config: header.config,
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
