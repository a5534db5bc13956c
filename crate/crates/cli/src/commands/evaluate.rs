use std::collections::BTreeMap;
use std::path::Path;

use editscore_core::dataset::CaseSet;
use editscore_core::metrics::{run_baselines, ScorerRegistry};
use editscore_core::model::Checkpoint;
use editscore_core::subjective::{read_mos_table, AffineMap};
use editscore_core::training::{
    config_fingerprint, config_label, prepare_items, run_ablation, run_cross_validation, AblationVariant,
    CrossValidation, EvalReport, RunConfig, TrainItem,
};

use super::{load_cases, subjective_failure, train_failure};
use crate::rundir::RunDir;
use crate::{AblateArgs, BaselinesArgs, CommandResult, Failure, ReportArgs, TrainArgs, EXIT_OK, EXIT_RUNTIME};

/// MOS column for `dim` restricted to cases in the manifest, plus the map onto [0, 10].
fn mos_column(cases: &CaseSet, mos: &Path, dim: &str) -> Result<(BTreeMap<String, f64>, Option<AffineMap>), Failure> {
    let table = read_mos_table(mos).map_err(subjective_failure)?;
    let column = table.column(dim).map_err(subjective_failure)?;
    let rescale = table.rescale_map(dim, 0.0, 10.0).ok();
    let missing = cases.case_ids().filter(|id| !column.contains_key(*id)).count();
    if missing > 0 {
        log::warn!("{missing} case(s) have no {dim} MOS and are skipped");
    }
    Ok((column, rescale))
}

pub fn baselines(args: &BaselinesArgs) -> Result<CommandResult, Failure> {
    let cases = load_cases(&args.manifest)?;
    let registry = ScorerRegistry::builtin();
    let names: Vec<&str> = if args.scorers.is_empty() {
        registry.names()
    } else {
        args.scorers.iter().map(String::as_str).collect()
    };
    let scorers = registry.select(&names).map_err(|e| {
        Failure::Validation(format!("{e}; available: {}", registry.names().join(", ")))
    })?;
    let (column, rescale) = mos_column(&cases, &args.mos, &args.dim)?;
    let report = run_baselines(&cases, &column, &scorers, &cases.image_provider(), rescale);
    let mut run = RunDir::create(&args.out)?;
    let mut table = Vec::new();
    report.write_csv(&mut table)?;
    let mut scores = Vec::new();
    report.write_scores_csv(&mut scores)?;
    run.write("baselines.csv", &table)?;
    run.write("scores.csv", scores)?;
    let mut summary = String::from_utf8(table).expect("csv is utf-8");
    if !report.failures.is_empty() {
        summary.push_str(&format!("warning: {} scorer failure(s), see scores.csv\n", report.failures.len()));
    }
    let artifacts = run.finish("baselines", None, None)?;
    Ok(CommandResult { exit_code: EXIT_OK, artifacts_written: artifacts, summary: summary.trim_end().to_string() })
}

fn load_run_config(args: &TrainArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml_str(&text).map_err(train_failure)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(k) = args.k {
        cfg.cv.k = k;
    }
    cfg.validate().map_err(train_failure)?;
    Ok(cfg)
}

fn load_items(args: &TrainArgs, cfg: &RunConfig) -> Result<(Vec<TrainItem>, Option<AffineMap>), Failure> {
    let cases = load_cases(&args.manifest)?;
    let (column, rescale) = mos_column(&cases, &args.mos, &cfg.cv.target_dim)?;
    let rated = cases.cases().iter().filter(|c| column.contains_key(&c.case_id));
    let items = prepare_items(rated, &column, &cases.image_provider(), &cfg.model).map_err(train_failure)?;
    Ok((items, rescale))
}

/// Writes report, per-fold checkpoints and histories under `prefix`.
fn write_cv(run: &mut RunDir, prefix: &str, cv: &CrossValidation) -> Result<(), Failure> {
    run.write(&format!("{prefix}report.json"), cv.report.to_json())?;
    for (i, model) in cv.models.iter().enumerate() {
        if let Some(m) = model {
            run.write(&format!("{prefix}checkpoints/fold{i:02}.json"), Checkpoint::from_model(m).to_json())?;
        }
    }
    for (i, history) in cv.histories.iter().enumerate() {
        if let Some(h) = history {
            let text = serde_json::to_string_pretty(h).expect("history serializes") + "\n";
            run.write(&format!("{prefix}histories/fold{i:02}.json"), text)?;
        }
    }
    Ok(())
}

fn report_line(r: &EvalReport) -> String {
    let failed = r.folds.iter().filter(|f| f.error.is_some()).count();
    match &r.mean {
        Some(m) => format!(
            "{}: SROCC {:.4} PLCC {:.4} KRCC {:.4} RMSE {:.4} over {} fold(s){}",
            r.label,
            m.srocc,
            m.plcc,
            m.krcc,
            m.rmse,
            r.folds.len() - failed,
            if failed > 0 { format!(", {failed} failed") } else { String::new() }
        ),
        None => format!("{}: no fold completed", r.label),
    }
}

pub fn train(args: &TrainArgs) -> Result<CommandResult, Failure> {
    let cfg = load_run_config(args)?;
    let (items, rescale) = load_items(args, &cfg)?;
    let cv = run_cross_validation(
        &items,
        &cfg.model,
        &cfg.train,
        &cfg.loss,
        cfg.cv.k,
        rescale,
        &config_label(&cfg.model),
    )
    .map_err(train_failure)?;
    let mut run = RunDir::create(&args.out)?;
    run.write("config.toml", cfg.to_toml_string())?;
    write_cv(&mut run, "", &cv)?;
    let artifacts = run.finish("train", Some(cfg.train.seed), Some(&cv.report.fingerprint))?;
    let exit_code = if cv.report.partial { EXIT_RUNTIME } else { EXIT_OK };
    Ok(CommandResult { exit_code, artifacts_written: artifacts, summary: report_line(&cv.report) })
}

pub fn ablate(args: &AblateArgs) -> Result<CommandResult, Failure> {
    let variants: Vec<AblationVariant> = if args.variant.iter().any(|v| v == "all") {
        AblationVariant::ALL.to_vec()
    } else {
        args.variant.iter().map(|v| v.parse()).collect::<Result<_, _>>().map_err(train_failure)?
    };
    let cfg = load_run_config(&args.train)?;
    let (items, rescale) = load_items(&args.train, &cfg)?;
    let mut run = RunDir::create(&args.train.out)?;
    run.write("config.toml", cfg.to_toml_string())?;
    let mut lines = Vec::new();
    let mut partial = false;
    for v in variants {
        let cv = run_ablation(v, &items, &cfg.model, &cfg.train, &cfg.loss, cfg.cv.k, rescale)
            .map_err(train_failure)?;
        write_cv(&mut run, &format!("{}/", v.as_str()), &cv)?;
        partial |= cv.report.partial;
        lines.push(report_line(&cv.report));
    }
    let fingerprint = config_fingerprint(&cfg.model, &cfg.train, &cfg.loss, cfg.cv.k);
    let artifacts = run.finish("ablate", Some(cfg.train.seed), Some(&fingerprint))?;
    let exit_code = if partial { EXIT_RUNTIME } else { EXIT_OK };
    Ok(CommandResult { exit_code, artifacts_written: artifacts, summary: lines.join("\n") })
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

/// One row per report. Metric values use shortest round-trip formatting so they echo the stored numbers.
pub fn render_table(reports: &[EvalReport]) -> (String, String) {
    let mut md = String::from(
        "| variant | SROCC | PLCC | KRCC | RMSE | RMSE (0-10) | params | folds | partial |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    let mut csv = String::from("label,srocc,plcc,krcc,rmse,rmse_0_10,param_count,folds,partial,fingerprint\n");
    for r in reports {
        let m = r.mean.as_ref();
        let vals = [
            cell(m.map(|m| m.srocc)),
            cell(m.map(|m| m.plcc)),
            cell(m.map(|m| m.krcc)),
            cell(m.map(|m| m.rmse)),
            cell(m.and_then(|m| m.rmse_0_10)),
        ];
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            r.label,
            vals.join(" | "),
            r.param_count,
            r.folds.len(),
            r.partial
        ));
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.label,
            vals.join(","),
            r.param_count,
            r.folds.len(),
            r.partial,
            r.fingerprint
        ));
    }
    (md, csv)
}

pub fn report(args: &ReportArgs) -> Result<CommandResult, Failure> {
    let mut reports = Vec::new();
    for path in &args.reports {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        reports.push(EvalReport::from_json(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?);
    }
    let (md, csv) = render_table(&reports);
    let mut run = RunDir::create(&args.out)?;
    run.write("report.md", &md)?;
    run.write("report.csv", csv)?;
    let artifacts = run.finish("report", None, None)?;
    Ok(CommandResult { exit_code: EXIT_OK, artifacts_written: artifacts, summary: md.trim_end().to_string() })
}
