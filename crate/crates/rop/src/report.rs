//! Reports: JSON is primary, each with a CSV mirror of its main table.

use std::path::Path;

use rop_core::kbc::MapReport;
use rop_core::pqa::{LengthReport, RankResult};
use rop_core::numerics::GradCheckReport;
use rop_core::verify::CaseReport;
use serde::{Deserialize, Serialize};

use crate::error::{write, AppError, AppResult};

fn csv_string<R: Serialize>(rows: &[R]) -> AppResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| AppError::Data(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Data(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| AppError::Data(format!("csv: {e}")))
}

/// Writes `<stem>.json` and `<stem>.csv`.
pub fn write_report<J: Serialize, R: Serialize>(dir: &Path, stem: &str, json: &J, rows: &[R]) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(json)?;
    text.push('\n');
    write(&dir.join(format!("{stem}.json")), text)?;
    write(&dir.join(format!("{stem}.csv")), csv_string(rows)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub n_triples: usize,
    pub n_entities: usize,
    pub n_relations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhanceSummary {
    pub seed: u64,
    pub n_paths: usize,
    pub n_enhanced: usize,
    pub n_not_found: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub t: usize,
    pub h_at_10: f64,
    pub mq: f64,
    pub inverse_pct: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PqaReport {
    pub h_at_10: f64,
    pub mq: f64,
    pub n_queries: usize,
    pub n_results: usize,
    pub by_length: Vec<BucketRow>,
    pub spearman_inverse_vs_h10: Option<f64>,
}

impl PqaReport {
    pub fn new(h_at_10: f64, mq: f64, n_queries: usize, n_results: usize, lengths: &LengthReport) -> Self {
        PqaReport {
            h_at_10,
            mq,
            n_queries,
            n_results,
            by_length: length_rows(lengths),
            spearman_inverse_vs_h10: lengths.spearman_inverse_vs_h10,
        }
    }
}

pub fn length_rows(r: &LengthReport) -> Vec<BucketRow> {
    r.buckets
        .iter()
        .map(|b| BucketRow {
            t: b.length,
            h_at_10: b.h_at_10,
            mq: b.mq,
            inverse_pct: b.inverse_pct,
            n: b.n,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthOnly {
    pub by_length: Vec<BucketRow>,
    pub spearman_inverse_vs_h10: Option<f64>,
}

/// One line of `results.jsonl`: everything `analyze` needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultLine {
    pub query: usize,
    pub head: String,
    pub relations: Vec<String>,
    pub gold: String,
    pub rank: usize,
    pub candidates: usize,
    pub quantile: f64,
    pub unk: bool,
}

impl ResultLine {
    pub fn to_result(&self) -> RankResult {
        RankResult {
            query: self.query,
            gold: rop_core::EntityId::UNK,
            rank: self.rank,
            candidates: self.candidates,
            quantile: self.quantile,
            length: self.relations.len(),
            unk: self.unk,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationRow {
    pub relation: String,
    /// Absent when the relation has no positive pair.
    pub ap: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbcReport {
    pub per_relation: Vec<RelationRow>,
    pub map: f64,
    pub aggregation: String,
}

impl KbcReport {
    pub fn new(r: &MapReport, aggregation: &str) -> Self {
        KbcReport {
            per_relation: r
                .per_relation
                .iter()
                .map(|x| RelationRow {
                    relation: x.relation.clone(),
                    ap: x.ap,
                    n_pos: x.n_pos,
                    n_neg: x.n_neg,
                })
                .collect(),
            map: r.map,
            aggregation: aggregation.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub case: String,
    pub seed: u64,
    pub param: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub strict_pass: bool,
    pub failing_entries: usize,
    pub unexplained_entries: usize,
    pub worst_extrapolated_rel_err: f64,
    pub per_param: Vec<ParamRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSummary {
    pub step: f64,
    pub tol: f64,
    pub dim: usize,
    pub seeds: u64,
    pub cases: usize,
    pub strict_failures: usize,
    pub unexplained_failures: usize,
    pub max_rel_err: f64,
    pub results: Vec<CaseSummary>,
}

fn case_summary(c: &CaseReport) -> CaseSummary {
    let r: &GradCheckReport = &c.report;
    CaseSummary {
        case: c.name.clone(),
        seed: c.seed,
        max_rel_err: r.max_rel_err,
        strict_pass: r.passed(),
        failing_entries: r.failing.len(),
        unexplained_entries: r.unexplained().count(),
        worst_extrapolated_rel_err: r.failing.iter().map(|f| f.extrapolated_rel_err).fold(0.0, f64::max),
        per_param: r
            .per_param
            .iter()
            .map(|p| ParamRow {
                case: c.name.clone(),
                seed: c.seed,
                param: p.name.clone(),
                entries: p.entries,
                max_rel_err: p.max_rel_err,
                max_abs_err: p.max_abs_err,
            })
            .collect(),
    }
}

impl GradCheckSummary {
    pub fn new(cases: &[CaseReport], dim: usize, seeds: u64) -> Self {
        let results: Vec<CaseSummary> = cases.iter().map(case_summary).collect();
        GradCheckSummary {
            step: rop_core::verify::FD_STEP,
            tol: rop_core::verify::FD_TOL,
            dim,
            seeds,
            cases: results.len(),
            strict_failures: results.iter().filter(|c| !c.strict_pass).count(),
            unexplained_failures: results.iter().filter(|c| c.unexplained_entries > 0).count(),
            max_rel_err: results.iter().map(|c| c.max_rel_err).fold(0.0, f64::max),
            results,
        }
    }

    pub fn param_rows(&self) -> Vec<ParamRow> {
        self.results.iter().flat_map(|c| c.per_param.iter().cloned()).collect()
    }
}
