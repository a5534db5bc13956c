mod data;
mod evaluate;

pub use data::{ingest, mos, synth};
pub use evaluate::{ablate, baselines, report, train};

use std::sync::Arc;

use editscore_core::dataset::{load_manifest, CaseSet, DatasetError};
use editscore_core::model::ModelError;
use editscore_core::rating::{RatingService, SystemClock};
use editscore_core::subjective::SubjectiveError;
use editscore_core::training::TrainError;

use crate::{CommandResult, Failure, ServeArgs, EXIT_OK};

pub(crate) fn dataset_failure(e: DatasetError) -> Failure {
    match e {
        DatasetError::Io { .. } => Failure::runtime(e),
        _ => Failure::validation(e),
    }
}

pub(crate) fn subjective_failure(e: SubjectiveError) -> Failure {
    match e {
        SubjectiveError::Io(_) => Failure::runtime(e),
        _ => Failure::validation(e),
    }
}

pub(crate) fn model_failure(e: ModelError) -> Failure {
    match e {
        ModelError::Io { .. } | ModelError::Decode(_) => Failure::runtime(e),
        _ => Failure::validation(e),
    }
}

pub(crate) fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::Model(m) => model_failure(m),
        TrainError::NonFiniteLoss { .. } => Failure::runtime(e),
        _ => Failure::validation(e),
    }
}

pub(crate) fn load_cases(path: &std::path::Path) -> Result<CaseSet, Failure> {
    load_manifest(path).map_err(dataset_failure)
}

pub fn serve(args: &ServeArgs) -> Result<CommandResult, Failure> {
    let cases = load_cases(&args.manifest)?;
    std::fs::create_dir_all(&args.out)?;
    let journal = args.out.join("journal.jsonl");
    let service = RatingService::new(&cases, args.raters.iter().cloned(), Arc::new(SystemClock))
        .and_then(|s| s.with_journal(&journal))
        .map_err(Failure::validation)?;
    let runtime = tokio::runtime::Runtime::new()?;
    log::info!("serving {} cases to {} raters on {}", cases.len(), args.raters.len(), args.addr);
    runtime.block_on(crate::server::serve(Arc::new(service), args.addr))?;
    Ok(CommandResult { exit_code: EXIT_OK, artifacts_written: vec![journal], summary: "server stopped".into() })
}
