use editscore_core::dataset::{
    encode_png, manifest_to_string, read_manifest_unvalidated, resize_shorter_side, validate_caseset, CaseSet,
    EditCase, ImageProvider,
};
use editscore_core::subjective::{
    aggregate_mos, bt500_screen, read_score_rows, write_score_rows, zscore_normalize, ScoreMatrix,
};
use editscore_core::synth::{synth_dataset, synth_ratings};
use serde_json::json;

use super::{dataset_failure, subjective_failure};
use crate::rundir::RunDir;
use crate::{CommandResult, Failure, IngestArgs, MosArgs, SynthArgs, EXIT_OK};

/// File stem for a case's images; ids that are not filename-safe fall back to their position.
fn image_stem(case_id: &str, index: usize) -> String {
    let safe = !case_id.is_empty()
        && case_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !case_id.starts_with('.');
    if safe {
        case_id.to_string()
    } else {
        format!("case{index:05}")
    }
}

fn write_store(
    run: &mut RunDir,
    cases: &CaseSet,
    images: &dyn ImageProvider,
    shorter_side: Option<u32>,
) -> Result<CaseSet, Failure> {
    let mut out = Vec::with_capacity(cases.len());
    for (i, case) in cases.cases().iter().enumerate() {
        let stem = image_stem(&case.case_id, i);
        let mut refs = Vec::with_capacity(2);
        for (which, reference) in [("source", &case.source_image), ("edited", &case.edited_image)] {
            let mut img = images.load(reference).map_err(dataset_failure)?;
            if let Some(side) = shorter_side {
                img = resize_shorter_side(&img, side).map_err(dataset_failure)?;
            }
            let rel = format!("images/{stem}_{which}.png");
            run.write(&rel, encode_png(&img).map_err(Failure::runtime)?)?;
            refs.push(rel);
        }
        let edited_image = refs.pop().expect("two refs");
        let source_image = refs.pop().expect("two refs");
        out.push(EditCase { source_image, edited_image, ..case.clone() });
    }
    let store = CaseSet::new(cases.metadata.clone(), out).with_methods(cases.methods.clone());
    run.write("manifest.jsonl", manifest_to_string(&store))?;
    Ok(store)
}

pub fn ingest(args: &IngestArgs) -> Result<CommandResult, Failure> {
    let cases = read_manifest_unvalidated(&args.manifest).map_err(dataset_failure)?;
    let violations = validate_caseset(&cases);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(Failure::Validation(format!("{} violation(s):\n{}", violations.len(), lines.join("\n"))));
    }
    let mut summary = Vec::new();
    if cases.is_empty() {
        log::warn!("manifest has no cases");
        summary.push("warning: manifest has no cases".to_string());
    }
    let mut run = RunDir::create(&args.out)?;
    let store = write_store(&mut run, &cases, &cases.image_provider(), Some(args.shorter_side))?;
    summary.push(format!("ingested {} case(s), shorter side {}", store.len(), args.shorter_side));
    let artifacts = run.finish("ingest", None, None)?;
    Ok(CommandResult { exit_code: EXIT_OK, artifacts_written: artifacts, summary: summary.join("\n") })
}

pub fn mos(args: &MosArgs) -> Result<CommandResult, Failure> {
    let rows = read_score_rows(&args.ratings).map_err(subjective_failure)?;
    let mut sm = ScoreMatrix::from_rows(&rows).map_err(subjective_failure)?;
    if !args.dims.is_empty() {
        let dims: Vec<&str> = args.dims.iter().map(String::as_str).collect();
        sm = sm.select_dims(&dims).map_err(subjective_failure)?;
    }
    let zm = zscore_normalize(&sm).map_err(subjective_failure)?;
    let mut summary = Vec::new();
    for (rater, dim) in zm.degenerate() {
        summary.push(format!("warning: rater {rater} gave one constant score on {dim}; z-scores set to 0"));
    }
    let mut run = RunDir::create(&args.out)?;
    let kept = if sm.raters().len() < 2 {
        summary.push("warning: fewer than two raters, screening skipped".into());
        sm.raters().to_vec()
    } else {
        let rep = bt500_screen(&zm).map_err(subjective_failure)?;
        summary.push(format!(
            "screening: kept {} of {} raters, {} presentation(s) skipped",
            rep.kept.len(),
            rep.observers.len(),
            rep.skipped_presentations
        ));
        for o in &rep.observers {
            summary.push(format!(
                "  {:<16} P={:<4} Q={:<4} N={:<5} {}",
                o.rater_id,
                o.p,
                o.q,
                o.n,
                o.reason().map(|r| format!("rejected: {r}")).unwrap_or_else(|| "kept".into())
            ));
        }
        let observers: Vec<_> = rep
            .observers
            .iter()
            .map(|o| json!({ "rater_id": o.rater_id, "p": o.p, "q": o.q, "n": o.n, "rejected": o.rejected }))
            .collect();
        let screening = json!({
            "kept": rep.kept,
            "rejected": rep.rejected,
            "skipped_presentations": rep.skipped_presentations,
            "observers": observers,
        });
        run.write("screening.json", serde_json::to_string_pretty(&screening).expect("json") + "\n")?;
        rep.kept
    };
    let table = aggregate_mos(&zm, &kept).map_err(subjective_failure)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(subjective_failure)?;
    run.write("mos.csv", buf)?;
    summary.push(format!("MOS for {} case(s) over {} dimension(s)", table.len(), table.dims().len()));
    let artifacts = run.finish("mos", None, None)?;
    Ok(CommandResult { exit_code: EXIT_OK, artifacts_written: artifacts, summary: summary.join("\n") })
}

pub fn synth(args: &SynthArgs) -> Result<CommandResult, Failure> {
    if args.cases == 0 || args.size < 8 {
        return Err(Failure::validation("need at least one case and images of at least 8 pixels"));
    }
    let ds = synth_dataset(args.cases, args.size, args.seed);
    let mut run = RunDir::create(&args.out)?;
    write_store(&mut run, &ds.cases, &ds.images, None)?;
    let rows = synth_ratings(&ds.truth, args.raters, args.adversaries, args.seed.wrapping_add(1));
    let mut buf = Vec::new();
    write_score_rows(&rows, &mut buf).map_err(subjective_failure)?;
    run.write("ratings.csv", buf)?;
    let mut truth = String::from("case_id,text_image,fidelity,overall\n");
    for t in &ds.truth {
        truth.push_str(&format!("{},{},{},{}\n", t.case_id, t.quality[0], t.quality[1], t.quality[2]));
    }
    run.write("truth.csv", truth)?;
    let summary = format!(
        "{} case(s), {} rater(s) + {} adversarial, {} rating rows",
        args.cases,
        args.raters,
        args.adversaries,
        rows.len()
    );
    let artifacts = run.finish("synth", Some(args.seed), None)?;
    Ok(CommandResult { exit_code: EXIT_OK, artifacts_written: artifacts, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_stems_are_filename_safe() {
        assert_eq!(image_stem("case_01-a.b", 3), "case_01-a.b");
        assert_eq!(image_stem("a/b", 3), "case00003");
        assert_eq!(image_stem("..", 4), "case00004");
        assert_eq!(image_stem("", 0), "case00000");
    }
}
