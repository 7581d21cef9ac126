use std::process::ExitCode;

use signet_core::synth::{gen_corpus, CorpusSpec, StrokeStyle};

use super::{init_threads, out_dir};
use crate::args::{GenSynthArgs, Style};
use crate::error::CliResult;

pub fn gen_synth(args: GenSynthArgs) -> CliResult<ExitCode> {
    init_threads(&args.common)?;
    let spec = CorpusSpec {
        num_writers: args.writers,
        genuine_per_writer: args.genuine,
        forged_per_writer: args.forged,
        height: args.height,
        width: args.width,
        genuine_jitter: args.genuine_jitter,
        forgery_amplitude: args.forgery_amplitude,
        seed: args.common.seed.unwrap_or(0),
        style: match args.style {
            Style::Default => StrokeStyle::default(),
            Style::Fine => StrokeStyle::fine(),
        },
    };
    spec.validate()?;
    let dir = out_dir(&args.common, "synth")?;
    let summary = gen_corpus(&spec, &dir)?;
    let status =
        if summary.unchanged() { "unchanged".to_owned() } else { format!("{} file(s) written", summary.written) };
    println!(
        "{} writers, {} images ({} genuine, {} forged) in {}: {status}",
        summary.writers,
        summary.files,
        spec.num_writers * spec.genuine_per_writer,
        spec.num_writers * spec.forged_per_writer,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}
