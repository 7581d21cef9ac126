use std::path::Path;
use std::process::ExitCode;

use signet_core::data::{load_image, preprocess, ImageRecord, SignatureKind};
use signet_core::{Model, Tensor};

use super::{arch_config, checkpoint_std, init_threads, load_model};
use crate::args::VerifyArgs;
use crate::error::CliResult;

/// Exit status of a rejected pair.
const REJECT: u8 = 2;

pub fn load_input(path: &Path, model: &Model, std: f64) -> CliResult<Tensor> {
    let record = ImageRecord { path: path.to_owned(), writer_id: String::new(), kind: SignatureKind::Genuine };
    let cfg = model.config();
    Ok(preprocess(&load_image(&record)?, cfg.input_height, cfg.input_width, std)?)
}

pub fn verify(args: VerifyArgs) -> CliResult<ExitCode> {
    init_threads(&args.common)?;
    let (model, ck) = load_model(&args.checkpoint, arch_config(&args.common)?)?;
    let std = checkpoint_std(&ck, &args.checkpoint)?;
    let a = load_input(&args.image_a, &model, std)?;
    let b = load_input(&args.image_b, &model, std)?;
    let emb = model.embed_infer(&Tensor::stack(&[&a, &b])?)?;
    let dim = emb.vector.shape()[1];
    let (ea, eb) = emb.vector.data().split_at(dim);
    let distance = ea.iter().zip(eb).map(|(&p, &q)| (f64::from(p) - f64::from(q)).powi(2)).sum::<f64>().sqrt();
    println!("distance {distance:.6}");
    if distance <= args.threshold {
        println!("ACCEPT");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("REJECT");
        Ok(ExitCode::from(REJECT))
    }
}
