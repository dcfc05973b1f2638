//! Acceptance criteria 1-10. Each criterion prints one PASS/FAIL line on
//! stderr (not captured by the test harness); the test fails if any fails.

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quantex::aggregate::{aggregate_total, TypedQuantity};
use quantex::analyze::{is_hard, AmbiguityTokens};
use quantex::bench::{bench, BenchConfig};
use quantex::corpus::{
    fold_text, write_jsonl_to, CharVocab, GoldTotal, ProductRecord, UomType, PAD_INDEX, PAD_CHAR, UNK_CHAR, VOCAB_SIZE,
};
use quantex::model_qe::{
    decode_spans, qe_forward, qe_loss, Decoded, EncoderLayer, QeConfig, QuantityExtractor, SpanImage,
};
use quantex::model_uom::{uom_forward, uom_loss, CategoryVocab, UomClassifier, UomClassifierConfig};
use quantex::pipeline::{baseline_row, total_from_decoded, Pipeline};
use quantex::rules::{candidates_in, BaselineConfig, CandidateQuantity, UnitLexicon};
use quantex::synthgen::{generate_dataset, split_examples, SPAN_MIX};
use quantex::tagger::{qualify_spans, tag_dataset, tag_record};
use quantex::tensor::{check_gradients, Bound, Graph, Tensor, Var};
use quantex::train::{
    evaluate, evaluate_extraction, predict_extraction, run_ablation, train_qe, train_uom, AblationCell, AblationRow,
    AttributeSet, EvalMode, EvalReport, Phase, QeTrainOutcome, TrainConfig, UomTrainOutcome,
};
use quantex::Result;

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn guarded<T>(f: impl FnOnce() -> std::result::Result<T, String>) -> std::result::Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(p))))
}

// ---------------------------------------------------------------- criterion 1

/// Values in ±[0.1, 1.0], away from relu kinks.
fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalar `sum(x * w)` with fixed random weights, so every output element
/// carries a distinct upstream gradient.
fn weighted(g: &mut Graph<f64>, x: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let w = g.constant(rand_tensor(&mut ChaCha8Rng::seed_from_u64(99), &shape));
    let m = g.mul(x, w)?;
    Ok(g.sum(m))
}

type Builder = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Builder)> {
    vec![
        ("embed", vec![vec![6, 3]], Box::new(|g, v| {
            let y = g.embed(v[0], &[0, 2, 2, 5])?;
            weighted(g, y)
        })),
        ("conv1d", vec![vec![7, 2], vec![3, 2, 3], vec![3]], Box::new(|g, v| {
            let y = g.conv1d(v[0], v[1], v[2], 1)?;
            weighted(g, y)
        })),
        ("conv1d dilated", vec![vec![9, 2], vec![3, 2, 3], vec![3]], Box::new(|g, v| {
            let y = g.conv1d(v[0], v[1], v[2], 3)?;
            weighted(g, y)
        })),
        ("conv2d", vec![vec![4, 5, 2], vec![3, 3, 2, 3], vec![3]], Box::new(|g, v| {
            let y = g.conv2d(v[0], v[1], v[2])?;
            weighted(g, y)
        })),
        ("maxpool1d", vec![vec![7, 3]], Box::new(|g, v| {
            let y = g.maxpool1d(v[0], 2)?;
            weighted(g, y)
        })),
        ("affine", vec![vec![4, 3], vec![3, 2], vec![2]], Box::new(|g, v| {
            let y = g.affine(v[0], v[1], v[2])?;
            weighted(g, y)
        })),
        ("matmul", vec![vec![3, 4], vec![4, 2]], Box::new(|g, v| {
            let y = g.matmul(v[0], v[1])?;
            weighted(g, y)
        })),
        ("add", vec![vec![3, 4], vec![3, 4]], Box::new(|g, v| {
            let y = g.add(v[0], v[1])?;
            weighted(g, y)
        })),
        ("mul", vec![vec![3, 4], vec![3, 4]], Box::new(|g, v| {
            let y = g.mul(v[0], v[1])?;
            weighted(g, y)
        })),
        ("scale", vec![vec![5]], Box::new(|g, v| {
            let y = g.scale(v[0], 0.7);
            weighted(g, y)
        })),
        ("relu", vec![vec![3, 4]], Box::new(|g, v| {
            let y = g.relu(v[0]);
            weighted(g, y)
        })),
        ("softmax axis 0", vec![vec![3, 4]], Box::new(|g, v| {
            let y = g.softmax(v[0], 0)?;
            weighted(g, y)
        })),
        ("softmax axis 1", vec![vec![3, 4]], Box::new(|g, v| {
            let y = g.softmax(v[0], 1)?;
            weighted(g, y)
        })),
        ("softmax axis 2", vec![vec![2, 2, 3]], Box::new(|g, v| {
            let y = g.softmax(v[0], 2)?;
            weighted(g, y)
        })),
        ("cross_entropy", vec![vec![4, 3]], Box::new(|g, v| {
            let p = g.softmax(v[0], 1)?;
            g.cross_entropy(p, &[0, 2, 1, 2], Some(&[1.0, 0.5, 2.0, 0.0]))
        })),
        ("scale_shift", vec![vec![5, 3], vec![3], vec![3]], Box::new(|g, v| {
            let y = g.scale_shift(v[0], v[1], v[2])?;
            weighted(g, y)
        })),
        ("seq_norm", vec![vec![6, 3], vec![3], vec![3]], Box::new(|g, v| {
            let y = g.seq_norm(v[0], v[1], v[2], 1e-5)?;
            weighted(g, y)
        })),
        ("dropout (eval)", vec![vec![3, 4]], Box::new(|g, v| {
            let y = g.dropout(v[0], 0.5, &mut ChaCha8Rng::seed_from_u64(1))?;
            weighted(g, y)
        })),
        ("concat", vec![vec![4, 2], vec![4, 3]], Box::new(|g, v| {
            let y = g.concat(&[v[0], v[1]])?;
            weighted(g, y)
        })),
        ("concat 1-d", vec![vec![3], vec![2]], Box::new(|g, v| {
            let y = g.concat(&[v[0], v[1]])?;
            weighted(g, y)
        })),
        ("repeat_rows", vec![vec![3]], Box::new(|g, v| {
            let y = g.repeat_rows(v[0], 4)?;
            weighted(g, y)
        })),
        ("span_outer", vec![vec![4, 3], vec![4, 3]], Box::new(|g, v| {
            let y = g.span_outer(v[0], v[1])?;
            weighted(g, y)
        })),
        ("reshape", vec![vec![3, 4]], Box::new(|g, v| {
            let flat = g.reshape(v[0], vec![12])?;
            let y = g.reshape(flat, vec![2, 6])?;
            weighted(g, y)
        })),
        ("sum", vec![vec![2, 3]], Box::new(|g, v| {
            let s = g.sum(v[0]);
            Ok(g.scale(s, 1.3))
        })),
    ]
}

fn network_record(title: &str) -> ProductRecord {
    let mut r = ProductRecord::new("g")
        .with_attr("title", title)
        .with_attr("description", "jar of 500 g")
        .with_attr("bullet_points", "");
    r.categories = vec!["food".into(), "food/rice".into()];
    r
}

fn uom_network_check(sequence_norm: bool) -> Result<f64> {
    let config = UomClassifierConfig {
        embed_dim: 4,
        conv_widths: vec![3, 3],
        channels: 4,
        key_dim: 3,
        hidden: 5,
        dropout: 0.2,
        category_levels: 2,
        sequence_norm,
        ..UomClassifierConfig::default()
    };
    let m = UomClassifier::new(config.clone(), CategoryVocab::from_names(["food", "food/rice"]), 3)?;
    let input = m.encode(&network_record("rice 5 kg x 2"));
    assert!(input.attributes.iter().all(|a| a.len() <= 16));
    let store = m.params.cast::<f64>();
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    let leaves: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
    let report = check_gradients(&leaves, 1e-5, |g, vars| {
        let b = Bound::from_vars(names.iter().map(String::as_str), vars)?;
        let probs = uom_forward(g, &b, &config, &input, &mut ChaCha8Rng::seed_from_u64(0))?;
        uom_loss(g, probs, UomType::Weight)
    })?;
    Ok(report.max_rel_err)
}

fn qe_network_check() -> Result<f64> {
    let config = QeConfig {
        embed_dim: 3,
        channels: 3,
        encoder: vec![EncoderLayer { width: 3, dilation: 1 }, EncoderLayer { width: 3, dilation: 2 }],
        branch_width: 3,
        depth: 4,
        image_channels: 2,
        ..QeConfig::default()
    };
    let m = QuantityExtractor::new(config.clone(), 4)?;
    let record = network_record("oil 2 l ");
    let (_, ids) = m.encode(&record);
    assert_eq!(ids.len(), 8);
    let store = m.params.cast::<f64>();
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    let leaves: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
    let report = check_gradients(&leaves, 1e-5, |g, vars| {
        let b = Bound::from_vars(names.iter().map(String::as_str), vars)?;
        let image = qe_forward(g, &b, &config, &ids, [0.1, 0.7, 0.2])?;
        qe_loss(g, image, &[(4, 5)], 1000.0)
    })?;
    Ok(report.max_rel_err)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    let mut note = |name: String, err: f64| {
        if err > worst.0 {
            worst = (err, name.clone());
        }
        if !(err <= 1e-3) {
            failures.push(format!("{} rel err {:.2e}", name, err));
        }
    };
    let cases = op_cases();
    let ops = cases.len();
    for (name, shapes, build) in cases {
        let leaves: Vec<Tensor<f64>> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        match check_gradients(&leaves, 1e-5, |g, v| build(g, v)) {
            Ok(r) => note(name.to_string(), r.max_rel_err),
            Err(e) => note(format!("{} ({})", name, e), f64::INFINITY),
        }
    }
    for sequence_norm in [false, true] {
        let name = format!("uom network (sequence_norm={})", sequence_norm);
        note(name, uom_network_check(sequence_norm).unwrap_or(f64::INFINITY));
    }
    note("qe network".into(), qe_network_check().unwrap_or(f64::INFINITY));
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        failures.push(format!("took {:.1}s", elapsed.as_secs_f64()));
    }
    ensure(
        failures.is_empty(),
        format!(
            "{} ops + 3 networks, worst {:.2e} ({}), {:.1}s {}",
            ops,
            worst.0,
            worst.1,
            elapsed.as_secs_f64(),
            failures.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Typed quantities for the title candidates whose literals are `wanted`, in
/// text order.
fn typed(title: &str, wanted: &[&str], lex: &UnitLexicon) -> Vec<TypedQuantity> {
    let cands = candidates_in("title", title, lex);
    let mut left: Vec<&str> = wanted.to_vec();
    let mut out = Vec::new();
    for c in cands {
        if let Some(i) = left.iter().position(|w| *w == c.literal) {
            left.remove(i);
            out.push(TypedQuantity::new(c.value, c.cued_type, c.cue_unit.as_deref()));
        }
    }
    assert!(left.is_empty(), "{}: literals {:?} not found", title, left);
    out
}

fn criterion_2() -> Outcome {
    let lex = UnitLexicon::default();
    let rows: [(&str, UomType, &[&str], f64, &str); 5] = [
        (
            "Maxwell House Original Roast Ground Coffee K-Cup Pods, Caffeinated, 24 ct - 8.3 oz Box",
            UomType::Count,
            &["24"],
            24.0,
            "count",
        ),
        (
            "Maxwell House Original Roast Medium Ground Coffee, Caffeinated, 42.5 oz Canister (2 Pack)",
            UomType::Weight,
            &["42.5", "2"],
            85.0,
            "oz",
        ),
        (
            "Tansukh Panchkol Powder for Hyperacidity and Digestion, red 60 gm (Pack of 2), (total 120 gm)",
            UomType::Weight,
            &[],
            120.0,
            "gm",
        ),
        (
            "Niconi Advanced Hand Sanitizer with 8 Hour Germ Protection Lemon - 200 ml (pack of 2), (100 ml each)",
            UomType::Volume,
            &["200"],
            200.0,
            "ml",
        ),
        (
            "Nutratech Creatine Monohydrate Micronized - 200 g (Blueberry Flavor), 5000 mg Amino powder, 100 g extra",
            UomType::Weight,
            &["200", "100"],
            300.0,
            "gm",
        ),
    ];
    let mut details = Vec::new();
    let mut ok = true;
    for (i, (title, uom, spans, value, unit)) in rows.iter().enumerate() {
        let items = if spans.is_empty() {
            // Row 3: spans come from the tagger, which must pick {60, 2}.
            let record = ProductRecord {
                gold_uom: Some(*uom),
                gold_total: Some(GoldTotal {
                    value: *value,
                    unit: unit.to_string(),
                }),
                ..ProductRecord::new("t3").with_attr("title", *title)
            };
            let tagged = tag_record(&record, &lex);
            let literals: Vec<String> = tagged
                .spans
                .iter()
                .map(|s| title.chars().skip(s.start).take(s.end - s.start).collect())
                .collect();
            if literals != ["60", "2"] {
                ok = false;
                details.push(format!("row 3 tagged {:?}", literals));
            }
            let refs: Vec<&str> = literals.iter().map(String::as_str).collect();
            typed(title, &refs, &lex)
        } else {
            typed(title, spans, &lex)
        };
        let got = aggregate_total(&items, *uom, &lex);
        let same_unit = |u: &str| lex.unit_info(u).map(|i| (i.uom, i.factor)) == lex.unit_info(unit).map(|i| (i.uom, i.factor));
        let hit = got.as_ref().is_some_and(|t| t.value == *value && t.uom == *uom && (t.unit == *unit || same_unit(&t.unit)));
        ok &= hit;
        details.push(format!(
            "row {} {}",
            i + 1,
            got.map_or("abstain".into(), |t| format!("{} {}", t.value, t.unit))
        ));
    }
    ensure(ok, details.join(", "))
}

// ---------------------------------------------------------------- criterion 3

const LITERALS: [&str; 16] = [
    "1", "2", "3", "4", "5", "6", "10", "12", "24", "0.5", "1.5", "2.5", "100", "250", "500", "0.25",
];

/// Exact value of a plain decimal literal.
fn exact(literal: &str) -> Ratio<i128> {
    match literal.split_once('.') {
        None => Ratio::from_integer(literal.parse().unwrap()),
        Some((int, frac)) => {
            let den = 10i128.pow(frac.len() as u32);
            Ratio::new(int.parse::<i128>().unwrap() * den + frac.parse::<i128>().unwrap(), den)
        }
    }
}

/// Independent unit table: (token, type, exact factor to the base unit).
fn oracle_unit(unit: &str) -> (UomType, Ratio<i128>) {
    match unit {
        "mg" => (UomType::Weight, Ratio::new(1, 1000)),
        "g" => (UomType::Weight, Ratio::from_integer(1)),
        "kg" => (UomType::Weight, Ratio::from_integer(1000)),
        "ml" => (UomType::Volume, Ratio::from_integer(1)),
        "l" => (UomType::Volume, Ratio::from_integer(1000)),
        other => panic!("unit {}", other),
    }
}

/// Candidate value in the total's unit; measures of the other type keep
/// their raw value since no conversion exists.
fn oracle_value(c: &CandidateQuantity, total_unit: &str) -> Ratio<i128> {
    let v = exact(&c.literal);
    match (&c.cue_unit, c.cued_type.is_measure()) {
        (Some(u), true) if total_unit != "count" => {
            let (from_t, from_f) = oracle_unit(u);
            let (to_t, to_f) = oracle_unit(total_unit);
            if from_t == to_t {
                v * from_f / to_f
            } else {
                v
            }
        }
        _ => v,
    }
}

/// Every qualifying index combination of size ≤ 3, by brute force over
/// subsets.
fn oracle_qualifying(cands: &[CandidateQuantity], total: Ratio<i128>, unit: &str, uom: UomType) -> Vec<Vec<usize>> {
    if uom == UomType::Count && total == Ratio::from_integer(1) {
        return Vec::new();
    }
    let n = cands.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        if mask.count_ones() > 3 {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let product = members.iter().fold(Ratio::from_integer(1), |acc, &i| acc * oracle_value(&cands[i], unit));
        let measures = members.iter().filter(|&&i| cands[i].cued_type.is_measure()).count();
        let composition = if uom == UomType::Count { measures == 0 } else { measures == 1 };
        if product == total && composition {
            out.push(members);
        }
    }
    out
}

fn random_candidate(rng: &mut ChaCha8Rng, position: usize) -> CandidateQuantity {
    let literal = LITERALS.choose(rng).unwrap().to_string();
    let (cued_type, cue_unit) = match rng.gen_range(0..3) {
        0 => (UomType::Count, [None, Some("ct"), Some("pack")].choose(rng).unwrap().map(str::to_string)),
        1 => (UomType::Weight, Some(["mg", "g", "kg"].choose(rng).unwrap().to_string())),
        _ => (UomType::Volume, Some(["ml", "l"].choose(rng).unwrap().to_string())),
    };
    CandidateQuantity {
        value: literal.parse().unwrap(),
        literal,
        attribute: "title".into(),
        start: position * 10,
        end: position * 10 + 3,
        cued_type,
        cue_unit,
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let lex = UnitLexicon::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut nonempty, mut failures) = (0, Vec::new());
    for case in 0..1000 {
        let n = rng.gen_range(0..=8);
        let cands: Vec<CandidateQuantity> = (0..n).map(|i| random_candidate(&mut rng, i)).collect();
        let uom = [UomType::Weight, UomType::Volume, UomType::Count][rng.gen_range(0..3)];
        let unit = match uom {
            UomType::Weight => *["mg", "g", "kg"].choose(&mut rng).unwrap(),
            UomType::Volume => *["ml", "l"].choose(&mut rng).unwrap(),
            UomType::Count => "count",
        };
        // Mostly totals built from a random subset, so both outcomes occur.
        let total = if n > 0 && rng.gen_bool(0.7) {
            let k = rng.gen_range(1..=3.min(n));
            let picks: Vec<usize> = (0..n).collect::<Vec<_>>().choose_multiple(&mut rng, k).copied().collect();
            picks.iter().fold(Ratio::from_integer(1), |acc, &i| acc * oracle_value(&cands[i], unit))
        } else {
            exact(LITERALS.choose(&mut rng).unwrap())
        };
        let value = *total.numer() as f64 / *total.denom() as f64;
        let gold = GoldTotal {
            value,
            unit: unit.into(),
        };
        let got = qualify_spans(&cands, &gold, uom, &lex);
        let expected = oracle_qualifying(&cands, total, unit, uom);
        let max_k = expected.iter().map(Vec::len).max().unwrap_or(0);
        let problem = if got.is_empty() != expected.is_empty() {
            Some(format!("empty {} vs oracle {}", got.is_empty(), expected.len()))
        } else if !got.is_empty() && !expected.contains(&got.indices) {
            Some(format!("{:?} not qualifying", got.indices))
        } else if got.indices.len() != max_k {
            Some(format!("size {} but oracle max {}", got.indices.len(), max_k))
        } else {
            None
        };
        if let Some(p) = problem {
            failures.push(format!("case {}: {}", case, p));
        }
        nonempty += usize::from(!got.is_empty());
    }
    let elapsed = start.elapsed();
    ensure(
        failures.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "1000 instances, {} qualified, {} mismatches, {:.2}s {}",
            nonempty,
            failures.len(),
            elapsed.as_secs_f64(),
            failures.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn overlaps(spans: &[(usize, usize)]) -> bool {
    spans.iter().enumerate().any(|(i, a)| spans[i + 1..].iter().any(|b| a.0 < b.1 && b.0 < a.1))
}

fn criterion_4() -> Outcome {
    let lex = UnitLexicon::default();
    let mut problems = Vec::new();

    // Depth-wise softmax at every pixel of untrained extractors.
    let mut worst: f64 = 0.0;
    let titles = ["Rice 5 kg (Pack of 2)", "x", "Shampoo 2 x 250 ml bottles, value pack of 3 for travel"];
    for seed in 0..3 {
        let config = QeConfig {
            depth: 8,
            image_channels: 4,
            ..QeConfig::default()
        };
        let m = QuantityExtractor::new(config, seed).map_err(|e| e.to_string())?;
        for t in titles {
            let r = ProductRecord::new("p").with_attr("title", t);
            let image = m.image(&r, [0.3, 0.3, 0.4]).map_err(|e| e.to_string())?;
            for i in 0..image.n() {
                for j in 0..image.n() {
                    let p = image.pixel(i, j);
                    worst = worst.max((f64::from(p[0]) + f64::from(p[1]) - 1.0).abs());
                }
            }
        }
    }
    if worst > 1e-6 {
        problems.push(format!("pixel sum off by {:.2e}", worst));
    }

    // Monotonicity and non-overlap on random score images.
    let text = "pack of 12 x 250 ml and 3 kg rice bag 40";
    let n = text.chars().count();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut decoded_total = 0;
    for _ in 0..200 {
        let scores: Vec<f32> = (0..n * n).map(|_| rng.gen::<f32>().powi(6)).collect();
        let image = SpanImage::from_scores(n, |i, j| scores[i * n + j]);
        let mut thresholds: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..0.95)).collect();
        thresholds.sort_by(f64::total_cmp);
        let sets: Vec<Vec<(usize, usize, f64)>> = thresholds
            .iter()
            .map(|&t| {
                decode_spans(&image, text, UomType::Volume, t, &lex)
                    .spans()
                    .iter()
                    .map(|s| (s.start, s.end, s.score))
                    .collect()
            })
            .collect();
        for (w, set) in thresholds.iter().zip(&sets) {
            let bounds: Vec<(usize, usize)> = set.iter().map(|s| (s.0, s.1)).collect();
            if overlaps(&bounds) {
                problems.push(format!("overlap at threshold {:.2}", w));
            }
            if set.iter().any(|s| s.2 <= *w) {
                problems.push(format!("span at or below threshold {:.2}", w));
            }
            decoded_total += set.len();
        }
        for k in 1..sets.len() {
            let kept: Vec<_> = sets[k - 1].iter().filter(|s| s.2 > thresholds[k]).cloned().collect();
            if kept != sets[k] {
                problems.push(format!("threshold {:.2} is not the filtered lower set", thresholds[k]));
            }
        }
    }

    // Count-default and abstain fixtures.
    let low = SpanImage::from_scores(9, |_, _| 0.2);
    let count = decode_spans(&low, "rice bags", UomType::Count, 0.5, &lex);
    let weight = decode_spans(&low, "rice bags", UomType::Weight, 0.5, &lex);
    let volume = decode_spans(&low, "rice bags", UomType::Volume, 0.5, &lex);
    let count_total = total_from_decoded(&count, UomType::Count, &lex);
    if count != Decoded::CountOne || count_total.as_ref().map(|t| (t.value, t.unit.as_str())) != Some((1.0, "count")) {
        problems.push(format!("count default gave {:?} / {:?}", count, count_total));
    }
    if weight != Decoded::Abstain || volume != Decoded::Abstain || total_from_decoded(&weight, UomType::Weight, &lex).is_some() {
        problems.push("measure types without spans did not abstain".into());
    }
    let empty = decode_spans(&SpanImage::empty(), "", UomType::Count, 0.5, &lex);
    if empty != Decoded::CountOne {
        problems.push(format!("empty title under count gave {:?}", empty));
    }

    ensure(
        problems.is_empty(),
        format!(
            "max pixel-sum error {:.1e}, {} decoded spans over 800 random decodes {}",
            worst,
            decoded_total,
            problems.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ),
    )
}

// ---------------------------------------------------------------- main run (5, 6, 7, 9)

struct MainRun {
    elapsed: Duration,
    train: Vec<ProductRecord>,
    test: Vec<ProductRecord>,
    uom: UomTrainOutcome,
    qe: QeTrainOutcome,
    uom_report: EvalReport,
    extraction_report: EvalReport,
    config: TrainConfig,
}

fn main_config() -> TrainConfig {
    let mut c = TrainConfig {
        attributes: AttributeSet::ShortText,
        use_categories: true,
        upsample: 1.0,
        seed: 7,
        ..TrainConfig::default()
    };
    c.qe.depth = 8;
    c.qe.image_channels = 4;
    c
}

fn main_run() -> std::result::Result<MainRun, String> {
    let start = Instant::now();
    let examples = generate_dataset(5000, &SPAN_MIX, 0.21, 7).map_err(|e| e.to_string())?;
    let (records, _) = split_examples(&examples);
    let (train, test) = (records[..4000].to_vec(), records[4000..].to_vec());
    let config = main_config();
    let uom = train_uom(&config, &train).map_err(|e| e.to_string())?;
    let lex = UnitLexicon::default();
    let (spans, summary) = tag_dataset(&train, &lex);
    let qe_config = TrainConfig {
        phase: Phase::Qe,
        ..config.clone()
    };
    let qe = train_qe(&qe_config, &train, &spans, &uom.model).map_err(|e| e.to_string())?;
    let uom_report = evaluate(&uom.model, None, &test, EvalMode::Uom, &config.decode).map_err(|e| e.to_string())?;
    let extraction_report =
        evaluate(&uom.model, Some(&qe.model), &test, EvalMode::Extraction, &qe_config.decode).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let _ = writeln!(
        std::io::stderr(),
        "main run: tagger qualified {}/{} train records, extraction dataset shrinkage {:.1}%, {:.0}s",
        summary.qualified,
        summary.records,
        qe.dataset.shrinkage * 100.0,
        elapsed.as_secs_f64()
    );
    Ok(MainRun {
        elapsed,
        train,
        test,
        uom,
        qe,
        uom_report,
        extraction_report,
        config,
    })
}

fn criterion_5(run: &MainRun) -> Outcome {
    let macro_f1 = run.uom_report.macro_f1;
    let accuracy = run.extraction_report.accuracy();
    ensure(
        macro_f1 >= 0.95 && accuracy >= 0.85 && run.elapsed <= Duration::from_secs(600),
        format!(
            "held-out macro-F1 {:.4} (>= 0.95), strict accuracy {:.4} (>= 0.85), {:.0}s on {} thread(s) (<= 600s), {} UoM epochs, QE validation scores {:?} (best epoch {})",
            macro_f1,
            accuracy,
            run.elapsed.as_secs_f64(),
            rayon::current_num_threads(),
            run.uom.log.epochs.len(),
            run.qe.log.epochs.iter().map(|e| (e.val_score * 1e4).round() / 1e4).collect::<Vec<_>>(),
            run.qe.log.best_epoch
        ),
    )
}

fn measure_recall(row: &AblationRow) -> f64 {
    let (mut correct, mut support) = (0, 0);
    for uom in [UomType::Weight, UomType::Volume] {
        if let Some(p) = row.held_out.per_uom.get(&uom) {
            correct += p.correct;
            support += p.support;
        }
    }
    correct as f64 / support.max(1) as f64
}

fn criterion_6(run: &MainRun) -> Outcome {
    let lex = UnitLexicon::default();
    let tokens = AmbiguityTokens::default();
    let hard: Vec<ProductRecord> = run.test.iter().filter(|r| is_hard(r, &tokens)).cloned().collect();
    let model = predict_extraction(&run.uom.model, &run.qe.model, &hard, &run.config.decode, &lex)
        .and_then(|o| evaluate_extraction(&o, &hard, &lex))
        .map_err(|e| e.to_string())?;
    let baseline_outcomes: Vec<_> = hard
        .iter()
        .map(|r| baseline_row(r, &lex, &BaselineConfig::default()).outcome())
        .collect();
    let baseline = evaluate_extraction(&baseline_outcomes, &hard, &lex).map_err(|e| e.to_string())?;
    let a = model.micro.precision >= baseline.micro.precision;

    let base = run.config.clone();
    let grid = [
        AblationCell {
            name: "short_text+categories f=1".into(),
            config: base.clone(),
        },
        AblationCell {
            name: "short_text+categories f=2".into(),
            config: TrainConfig {
                upsample: 2.0,
                ..base.clone()
            },
        },
        AblationCell {
            name: "short_text".into(),
            config: TrainConfig {
                use_categories: false,
                ..base
            },
        },
    ];
    let rows = run_ablation(&grid, &run.train, &run.test).map_err(|e| e.to_string())?;
    let (r1, r2) = (measure_recall(&rows[0]), measure_recall(&rows[1]));
    let b = r2 >= r1;
    let (with_cats, without) = (rows[0].hard.macro_f1, rows[2].hard.macro_f1);
    let c = with_cats >= without;
    ensure(
        a && b && c,
        format!(
            "(a) {}: hard-slice precision model {:.4} vs baseline {:.4} over {} records; (b) {}: weight+volume recall f=2 {:.4} vs f=1 {:.4}; (c) {}: hard macro-F1 with categories {:.4} vs without {:.4}",
            if a { "ok" } else { "FAIL" },
            model.micro.precision,
            baseline.micro.precision,
            hard.len(),
            if b { "ok" } else { "FAIL" },
            r2,
            r1,
            if c { "ok" } else { "FAIL" },
            with_cats,
            without
        ),
    )
}

fn criterion_7(run: &MainRun) -> Outcome {
    let pipeline = Pipeline::new(run.uom.model.clone(), run.qe.model.clone());
    if !pipeline.classifier.config.short_text {
        return Err("main classifier is not the short-text config".into());
    }
    let report = bench(&pipeline, &run.test, &BenchConfig::default()).map_err(|e| e.to_string())?;
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{} threads mean {:.2} ms p90 {:.2} ms", r.threads, r.mean_ms, r.p90_ms))
        .collect();
    let two = report.rows.iter().find(|r| r.threads == 2).map(|r| r.mean_ms);
    let complete = report.thread_counts == [2, 4, 8]
        && report.rows.len() == 3
        && report.rows.iter().all(|r| r.mean_ms > 0.0 && r.p90_ms > 0.0);
    ensure(complete && two.is_some_and(|m| m < 50.0), rows.join(", "))
}

fn criterion_8() -> Outcome {
    let vocab = CharVocab::new();
    let entries = vocab.entries();
    let distinct: BTreeSet<char> = entries.iter().copied().collect();
    let has = ['ç', 'é', 'ñ'].iter().all(|c| distinct.contains(c));
    if vocab.len() != 128 || VOCAB_SIZE != 128 || distinct.len() != 128 || !has {
        return Err(format!("{} entries, {} distinct, accented present {}", vocab.len(), distinct.len(), has));
    }
    let known: Vec<char> = entries.iter().copied().filter(|&c| vocab.index_of(c) != PAD_INDEX).collect();
    let mut runner = TestRunner::new(PropConfig {
        cases: 512,
        ..PropConfig::default()
    });
    let in_vocab = proptest::collection::vec(proptest::sample::select(known), 0..80)
        .prop_map(|cs| cs.into_iter().collect::<String>());
    runner
        .run(&in_vocab, |s| {
            let (ids, len) = vocab.encode(&s, 1024);
            prop_assert_eq!(len, s.chars().count());
            prop_assert_eq!(vocab.decode(&ids), s);
            Ok(())
        })
        .map_err(|e| format!("in-vocabulary round trip: {}", e))?;
    runner
        .run(&any::<String>(), |s| {
            let (ids, _) = vocab.encode(&s, 1024);
            // Padding characters vanish, characters outside the list become UNK.
            let expected: String = fold_text(&s)
                .chars()
                .filter(|&c| c != PAD_CHAR)
                .map(|c| if distinct.contains(&c) { c } else { UNK_CHAR })
                .collect();
            prop_assert_eq!(vocab.decode(&ids), expected);
            Ok(())
        })
        .map_err(|e| format!("arbitrary-text round trip: {}", e))?;
    Ok("128 entries including ç é ñ; 2 x 512 round-trip cases".into())
}

fn criterion_9(run: &MainRun) -> Outcome {
    let after = run.uom.model.to_checkpoint().and_then(|c| c.digest()).map_err(|e| e.to_string())?;
    ensure(
        run.qe.frozen_hash_before == run.qe.frozen_hash_after && run.qe.frozen_hash_after == after,
        format!("classifier digest {}… before and after phase 2", &after[..16]),
    )
}

// ---------------------------------------------------------------- criterion 10

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    write_jsonl_to(items, &mut out).unwrap();
    out
}

/// Bytes of every stage of a small synth → tag → train → eval run.
fn pipeline_bytes() -> Result<Vec<(&'static str, Vec<u8>)>> {
    let examples = generate_dataset(300, &SPAN_MIX, 0.21, 10)?;
    let (records, _) = split_examples(&examples);
    let (train, test) = records.split_at(240);
    let lex = UnitLexicon::default();
    let (spans, _) = tag_dataset(train, &lex);
    let mut config = TrainConfig {
        epochs: 2,
        batch_size: 16,
        attributes: AttributeSet::ShortText,
        seed: 10,
        ..TrainConfig::default()
    };
    config.qe.depth = 4;
    config.qe.image_channels = 2;
    config.qe.channels = 8;
    let uom = train_uom(&config, train)?;
    let qe_config = TrainConfig {
        phase: Phase::Qe,
        ..config.clone()
    };
    let qe = train_qe(&qe_config, train, &spans, &uom.model)?;
    let uom_eval = evaluate(&uom.model, None, test, EvalMode::Uom, &config.decode)?;
    let qe_eval = evaluate(&uom.model, Some(&qe.model), test, EvalMode::Extraction, &config.decode)?;
    Ok(vec![
        ("synth", jsonl(&records)),
        ("tag", jsonl(&spans)),
        ("uom checkpoint", uom.model.to_checkpoint()?.to_bytes()?),
        ("qe checkpoint", qe.model.to_checkpoint()?.to_bytes()?),
        ("eval", serde_json::to_vec(&(uom_eval, qe_eval))?),
    ])
}

fn criterion_10() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let first = pool.install(pipeline_bytes).map_err(|e| e.to_string())?;
    let second = pool.install(pipeline_bytes).map_err(|e| e.to_string())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0)
        .collect();
    let sizes: Vec<String> = first.iter().map(|(n, b)| format!("{} {} B", n, b.len())).collect();
    ensure(
        differing.is_empty(),
        if differing.is_empty() {
            format!("identical across two runs: {}", sizes.join(", "))
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

// ---------------------------------------------------------------- driver

fn report(number: usize, title: &str, outcome: &Outcome, elapsed: Duration) {
    let (status, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {:>2} {} ({}): {} [{:.1}s]",
        number,
        status,
        title,
        detail,
        elapsed.as_secs_f64()
    );
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |n: usize, title: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let outcome = guarded(f);
        report(n, title, &outcome, start.elapsed());
        results.push((n, title, outcome));
    };
    run(1, "gradient correctness", &criterion_1);
    run(2, "worked examples", &criterion_2);
    run(3, "tagger oracle equivalence", &criterion_3);
    run(4, "span-image invariants", &criterion_4);
    run(8, "vocabulary contract", &criterion_8);
    run(10, "determinism", &criterion_10);

    let main = guarded(main_run);
    let shared = |f: fn(&MainRun) -> Outcome| -> Outcome {
        match &main {
            Ok(m) => f(m),
            Err(e) => Err(format!("training run failed: {}", e)),
        }
    };
    run(5, "desk-scale training", &|| shared(criterion_5));
    run(6, "directional checks", &|| shared(criterion_6));
    run(7, "latency bar", &|| shared(criterion_7));
    run(9, "freeze contract", &|| shared(criterion_9));

    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.2.is_err())
        .map(|r| format!("{} ({})", r.0, r.1))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
