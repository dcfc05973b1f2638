//! Classifier ablations over a grid of training configs.

use serde::{Deserialize, Serialize};

use super::{evaluate_uom, predict_uom, train_uom, EvalReport, TrainConfig, TrainLog};
use crate::analyze::{is_hard, AmbiguityTokens};
use crate::corpus::{ProductRecord, UomType};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub held_out: EvalReport,
    /// Same metrics restricted to hard examples of the held-out set.
    pub hard: EvalReport,
    pub log: TrainLog,
}

/// Trains one classifier per cell on `train` and scores it on `test` and on
/// the hard slice of `test`. Each cell uses its own configured seed.
pub fn run_ablation(grid: &[AblationCell], train: &[ProductRecord], test: &[ProductRecord]) -> Result<Vec<AblationRow>> {
    for cell in grid {
        cell.config.validate_hyper().map_err(|e| Error::Config(format!("cell `{}`: {}", cell.name, e)))?;
    }
    let gold = |rs: &[&ProductRecord]| -> Result<Vec<UomType>> {
        rs.iter()
            .map(|r| r.gold_uom.ok_or_else(|| Error::argument("run_ablation", format!("record `{}` lacks a gold UoM", r.id))))
            .collect()
    };
    let tokens = AmbiguityTokens::default();
    let all: Vec<&ProductRecord> = test.iter().collect();
    let hard_mask: Vec<bool> = all.iter().map(|r| is_hard(r, &tokens)).collect();
    let all_gold = gold(&all)?;
    let hard_gold: Vec<UomType> = all_gold.iter().zip(&hard_mask).filter(|(_, &h)| h).map(|(g, _)| *g).collect();
    grid.iter()
        .map(|cell| {
            log::info!("ablation cell `{}`", cell.name);
            let out = train_uom(&cell.config, train)?;
            let preds: Vec<UomType> = predict_uom(&out.model, &all)?.into_iter().map(|p| p.predicted).collect();
            let hard_preds: Vec<UomType> = preds.iter().zip(&hard_mask).filter(|(_, &h)| h).map(|(p, _)| *p).collect();
            Ok(AblationRow {
                name: cell.name.clone(),
                held_out: evaluate_uom(&preds, &all_gold)?,
                hard: evaluate_uom(&hard_preds, &hard_gold)?,
                log: out.log,
            })
        })
        .collect()
}

/// One line per cell: held-out and hard-slice micro/macro F1 plus per-type
/// recall on the held-out set.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(
        "name,held_out_micro_f1,held_out_macro_f1,hard_micro_f1,hard_macro_f1,weight_recall,volume_recall,count_recall,hard_records\n",
    );
    for r in rows {
        let rec = |u: UomType| r.held_out.per_uom[&u].recall;
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.name,
            r.held_out.micro.f1,
            r.held_out.macro_f1,
            r.hard.micro.f1,
            r.hard.macro_f1,
            rec(UomType::Weight),
            rec(UomType::Volume),
            rec(UomType::Count),
            r.hard.records
        ));
    }
    out
}
