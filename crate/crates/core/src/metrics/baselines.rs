use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{correlation_summary, CorrelationSummary, PairedSeries, ScoreInput, Scorer};
use crate::dataset::{CaseSet, ImageProvider};
use crate::subjective::AffineMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDumpRow {
    pub scorer: String,
    pub case_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerFailure {
    pub scorer: String,
    pub case_id: String,
    pub message: String,
}

/// One scorer's agreement with MOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub scorer: String,
    /// `None` when correlation is undefined (see `degenerate`).
    pub summary: Option<CorrelationSummary>,
    /// RMSE after mapping both series through the MOS rescale map.
    pub rmse_rescaled: Option<f64>,
    pub n_cases: usize,
    pub n_failed: usize,
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub rows: Vec<BaselineRow>,
    pub scores: Vec<ScoreDumpRow>,
    pub failures: Vec<ScorerFailure>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl BaselineReport {
    pub fn row(&self, scorer: &str) -> Option<&BaselineRow> {
        self.rows.iter().find(|r| r.scorer == scorer)
    }

    /// `scorer,srocc,plcc,krcc,rmse,n_cases,rmse_0_10,status`
    pub fn write_csv(&self, writer: impl Write) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["scorer", "srocc", "plcc", "krcc", "rmse", "n_cases", "rmse_0_10", "status"])?;
        for r in &self.rows {
            let s = r.summary;
            w.write_record([
                r.scorer.clone(),
                fmt_opt(s.map(|s| s.srocc)),
                fmt_opt(s.map(|s| s.plcc)),
                fmt_opt(s.map(|s| s.krcc)),
                fmt_opt(s.map(|s| s.rmse)),
                r.n_cases.to_string(),
                fmt_opt(r.rmse_rescaled),
                r.degenerate.clone().map(|d| format!("degenerate: {d}")).unwrap_or_else(|| "ok".into()),
            ])?;
        }
        w.flush()
    }

    /// Per-case score dump: `scorer,case_id,score`.
    pub fn write_scores_csv(&self, writer: impl Write) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["scorer", "case_id", "score"])?;
        for r in &self.scores {
            w.write_record([r.scorer.clone(), r.case_id.clone(), format!("{}", r.score)])?;
        }
        w.flush()
    }
}

/// Scores every case with every scorer and correlates against `mos`.
///
/// Cases without a MOS value are skipped. A scorer error on a case excludes that
/// case for that scorer only. Rows follow `scorers` order; dumps are sorted by case id.
pub fn run_baselines(
    cases: &CaseSet,
    mos: &BTreeMap<String, f64>,
    scorers: &[Arc<dyn Scorer>],
    images: &dyn ImageProvider,
    rescale: Option<AffineMap>,
) -> BaselineReport {
    let mut per_scorer: Vec<Vec<(String, f64)>> = vec![Vec::new(); scorers.len()];
    let mut failures = Vec::new();

    for case in cases.cases() {
        if !mos.contains_key(&case.case_id) {
            log::warn!("case {} has no MOS; skipped", case.case_id);
            continue;
        }
        let loaded = images.load(&case.source_image).and_then(|s| images.load(&case.edited_image).map(|e| (s, e)));
        let (source, edited) = match loaded {
            Ok(pair) => pair,
            Err(e) => {
                for s in scorers {
                    failures.push(ScorerFailure {
                        scorer: s.handle().name.clone(),
                        case_id: case.case_id.clone(),
                        message: e.to_string(),
                    });
                }
                log::warn!("case {}: {e}", case.case_id);
                continue;
            }
        };
        let input = ScoreInput { case, source: &source, edited: &edited };
        for (i, s) in scorers.iter().enumerate() {
            match s.score(&input) {
                Ok(v) if v.is_finite() => per_scorer[i].push((case.case_id.clone(), v)),
                Ok(v) => failures.push(ScorerFailure {
                    scorer: s.handle().name.clone(),
                    case_id: case.case_id.clone(),
                    message: format!("non-finite score {v}"),
                }),
                Err(e) => {
                    log::warn!("scorer {} failed on {}: {e}", s.handle().name, case.case_id);
                    failures.push(ScorerFailure {
                        scorer: s.handle().name.clone(),
                        case_id: case.case_id.clone(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }

    let mut report = BaselineReport { failures, ..Default::default() };
    for (s, scored) in scorers.iter().zip(per_scorer) {
        let name = s.handle().name.clone();
        let pred: Vec<f64> = scored.iter().map(|(_, v)| *v).collect();
        let target: Vec<f64> = scored.iter().map(|(c, _)| mos[c]).collect();
        let n_failed = report.failures.iter().filter(|f| f.scorer == name).count();
        let (summary, rmse_rescaled, degenerate) = match PairedSeries::new(&pred, &target)
            .and_then(|ps| correlation_summary(&ps))
        {
            Ok(sum) => {
                let rescaled = rescale.map(|m| {
                    let p: Vec<f64> = pred.iter().map(|v| m.apply(*v)).collect();
                    let t: Vec<f64> = target.iter().map(|v| m.apply(*v)).collect();
                    PairedSeries::new(&p, &t).map(|ps| super::rmse(&ps)).unwrap_or(f64::NAN)
                });
                (Some(sum), rescaled, None)
            }
            Err(e) => {
                log::warn!("scorer {name} is degenerate: {e}");
                (None, None, Some(e.to_string()))
            }
        };
        report.rows.push(BaselineRow { scorer: name.clone(), summary, rmse_rescaled, n_cases: pred.len(), n_failed, degenerate });
        report.scores.extend(scored.into_iter().map(|(case_id, score)| ScoreDumpRow { scorer: name.clone(), case_id, score }));
    }
    report
}
