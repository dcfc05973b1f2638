//! Single-record latency under N parallel inference workers sharing one model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::ProductRecord;
use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::train::AttributeSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub threads: Vec<usize>,
    /// Timed calls per worker.
    pub iterations: usize,
    /// Untimed calls per worker before timing starts.
    pub warmup: usize,
    /// Records per call.
    pub batch: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            threads: vec![2, 4, 8],
            iterations: 100,
            warmup: 10,
            batch: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub threads: usize,
    pub mean_ms: f64,
    pub p90_ms: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub thread_counts: Vec<usize>,
    pub batch_size: usize,
    pub attributes: AttributeSet,
    pub rows: Vec<BenchRow>,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Per-record latency in milliseconds, one row per thread count. Each
/// worker cycles through `records` starting at its own offset.
pub fn bench(pipeline: &Pipeline, records: &[ProductRecord], config: &BenchConfig) -> Result<BenchReport> {
    if config.iterations < 100 || config.warmup < 10 {
        return Err(Error::Config("bench needs at least 100 iterations after 10 warmup calls".into()));
    }
    if records.is_empty() || config.batch == 0 || config.threads.is_empty() || config.threads.contains(&0) {
        return Err(Error::Config("bench needs records, a positive batch and positive thread counts".into()));
    }
    let mut rows = Vec::new();
    for &threads in &config.threads {
        let per_worker: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    s.spawn(move || {
                        let mut next = w * 7919;
                        let mut call = || -> Result<f64> {
                            let start = Instant::now();
                            for _ in 0..config.batch {
                                pipeline.predict(&records[next % records.len()])?;
                                next += 1;
                            }
                            Ok(start.elapsed().as_secs_f64() * 1e3 / config.batch as f64)
                        };
                        for _ in 0..config.warmup {
                            call()?;
                        }
                        (0..config.iterations).map(|_| call()).collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
        });
        let mut samples: Vec<f64> = per_worker.into_iter().collect::<Result<Vec<_>>>()?.concat();
        samples.sort_by(f64::total_cmp);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        rows.push(BenchRow {
            threads,
            mean_ms: mean,
            p90_ms: percentile(&samples, 0.9),
            samples: samples.len(),
        });
    }
    Ok(BenchReport {
        thread_counts: config.threads.clone(),
        batch_size: config.batch,
        attributes: if pipeline.classifier.config.short_text {
            AttributeSet::ShortText
        } else {
            AttributeSet::AllText
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_qe::{QeConfig, QuantityExtractor};
    use crate::model_uom::{CategoryVocab, UomClassifier, UomClassifierConfig};

    #[test]
    fn percentile_nearest_rank() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&s, 0.9), 9.0);
        assert_eq!(percentile(&[3.0], 0.9), 3.0);
    }

    #[test]
    fn report_is_well_formed() {
        let cfg = UomClassifierConfig {
            short_text: true,
            ..Default::default()
        };
        let qe = QeConfig {
            depth: 8,
            image_channels: 4,
            ..Default::default()
        };
        let p = Pipeline::new(
            UomClassifier::new(cfg, CategoryVocab::default(), 0).unwrap(),
            QuantityExtractor::new(qe, 0).unwrap(),
        );
        let records = [ProductRecord::new("a").with_attr("title", "Rice 5 kg (Pack of 2)")];
        let config = BenchConfig {
            threads: vec![1, 2],
            ..Default::default()
        };
        let r = bench(&p, &records, &config).unwrap();
        assert_eq!(r.attributes, AttributeSet::ShortText);
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert!(row.mean_ms > 0.0 && row.p90_ms > 0.0);
            assert_eq!(row.samples, row.threads * 100);
        }
        let few = BenchConfig {
            iterations: 99,
            ..config
        };
        assert!(bench(&p, &records, &few).is_err());
    }
}
