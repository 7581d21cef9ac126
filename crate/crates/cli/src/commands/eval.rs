use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use signet_core::data::{build_protocol, load_dataset, PairingMode};
use signet_core::eval::{cross_dataset_matrix, evaluate_pairs, CrossModel, CrossSet};

use super::{arch_config, checkpoint_split, checkpoint_std, init_threads, load_model, out_dir, split_spec, write};
use crate::args::{CrossEvalArgs, EvalArgs};
use crate::error::{CliError, CliResult};

pub fn eval(args: EvalArgs) -> CliResult<ExitCode> {
    init_threads(&args.common)?;
    let (model, ck) = load_model(&args.checkpoint, arch_config(&args.common)?)?;
    let std = checkpoint_std(&ck, &args.checkpoint)?;
    let index = load_dataset(&args.data)?;
    let stored = checkpoint_split(&ck)?;
    let spec = split_spec(&index, &args.split, args.common.seed, stored.as_ref())?;
    let protocol = build_protocol(&index, &spec, PairingMode::Skilled)?;
    if protocol.test.is_empty() {
        return Err(CliError::Usage("the test split has no pairs".into()));
    }

    let (report, records) = evaluate_pairs(&model, &index, &protocol.test, std, args.step)?;
    let dir = out_dir(&args.common, "eval")?;
    write(&dir.join("report.json"), &report.to_json()?)?;
    write(&dir.join("sweep.tsv"), &report.curve_tsv())?;
    let mut distances = String::from("pair\twriter\ty\tdistance\n");
    for r in &records {
        let _ = writeln!(distances, "{}\t{}\t{}\t{}", r.pair, protocol.test[r.pair].writer_id, r.y, r.distance);
    }
    write(&dir.join("distances.tsv"), &distances)?;

    println!("test writers: {}", protocol.test_writers.join(", "));
    println!(
        "accuracy {:.4}  FAR {:.4}  FRR {:.4}  threshold {:.4}  ({} similar, {} dissimilar pairs)",
        report.accuracy, report.far, report.frr, report.threshold, report.similar, report.dissimilar
    );
    Ok(ExitCode::SUCCESS)
}

fn label(path: &Path) -> String {
    let name = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned());
    match name(path).as_deref() {
        Some("latest") | Some("") | None => path.parent().and_then(name).unwrap_or_else(|| path.display().to_string()),
        Some(other) => other.to_owned(),
    }
}

pub fn cross_eval(args: CrossEvalArgs) -> CliResult<ExitCode> {
    init_threads(&args.common)?;
    let arch = arch_config(&args.common)?;
    let mut models = Vec::new();
    for path in &args.checkpoints {
        let (model, ck) = load_model(path, arch.clone())?;
        models.push(CrossModel { name: label(path), std: checkpoint_std(&ck, path)?, model });
    }
    let mut sets = Vec::new();
    for root in &args.datasets {
        let index = load_dataset(root)?;
        let spec = split_spec(&index, &args.split, args.common.seed, None)?;
        let pairs = build_protocol(&index, &spec, PairingMode::Skilled)?.test;
        sets.push(CrossSet { name: label(root), index, pairs });
    }

    let matrix = cross_dataset_matrix(&models, &sets, args.step);
    let dir = out_dir(&args.common, "cross-eval")?;
    let grid = matrix.to_tsv();
    write(&dir.join("cross.tsv"), &grid)?;
    for e in matrix.errors() {
        log::warn!("{e}");
    }
    match (models.len(), sets.len(), matrix.get(0, 0)) {
        (1, 1, Some(acc)) => println!("{acc:.4}"),
        _ => print!("{grid}"),
    }
    Ok(ExitCode::SUCCESS)
}
