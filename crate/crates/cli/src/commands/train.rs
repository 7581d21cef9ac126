use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use signet_core::data::{build_protocol, load_dataset, write_manifest, PairingMode, ResizedImages};
use signet_core::train::{ContrastiveLossParams, Rmsprop, TrainConfig, TrainData, Trainer};
use signet_core::{ArchitectureConfig, Checkpoint, Model};

use super::{
    checkpoint_split, checkpoint_std, init_threads, out_dir, split_spec, write, SplitMeta, SPLIT_KEY, STD_KEY,
};
use crate::args::{Arch, Pairing, TrainArgs};
use crate::error::{CliError, CliResult};

fn decay_epochs(list: &str) -> CliResult<Vec<usize>> {
    let list = list.trim();
    if list.is_empty() || list == "none" {
        return Ok(Vec::new());
    }
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--lr-decay-epochs: `{s}` is not an epoch number")))
        })
        .collect()
}

pub fn train(args: TrainArgs) -> CliResult<ExitCode> {
    init_threads(&args.common)?;
    if args.epochs == 0 {
        return Err(CliError::Usage("--epochs must be at least 1".into()));
    }
    if args.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be at least 1".into()));
    }
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.common.seed.unwrap_or(0),
        lr_decay_epochs: decay_epochs(&args.lr_decay_epochs)?,
    };
    let loss = ContrastiveLossParams { alpha: args.alpha, beta: args.beta, margin: args.margin };
    loss.validate()?;
    let pairing = match args.pairing {
        Pairing::Skilled => PairingMode::Skilled,
        Pairing::Unskilled => PairingMode::Unskilled,
    };

    let resumed = match &args.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let std = checkpoint_std(&ck, path)?;
            let split = checkpoint_split(&ck)?;
            Some((Trainer::from_checkpoint(&ck)?, std, split))
        }
        None => None,
    };

    let index = load_dataset(&args.data)?;
    let stored_split = resumed.as_ref().and_then(|(_, _, s)| s.clone());
    let spec = split_spec(&index, &args.split, args.common.seed, stored_split.as_ref())?;
    let protocol = build_protocol(&index, &spec, pairing)?;
    log::info!(
        "{} training writers ({} pairs), {} test writers ({} pairs)",
        protocol.train_writers.len(),
        protocol.train.len(),
        protocol.test_writers.len(),
        protocol.test.len()
    );

    let arch = match (&args.arch_file, args.common.arch, &resumed) {
        (_, _, Some((t, _, _))) => t.model.config().clone(),
        (Some(path), _, None) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ArchitectureConfig::from_json(&text)?
        }
        (None, arch, None) => ArchitectureConfig::preset(arch.unwrap_or(Arch::Full).name())?,
    };
    let (h, w) = (arch.input_height, arch.input_width);
    let train_ids = index.images_of(&protocol.train_writers)?;
    let mut ids = train_ids.clone();
    if args.validate {
        ids.extend(index.images_of(&protocol.test_writers)?);
    }
    let resized = ResizedImages::load(&index, &ids, h, w)?;
    let std = match &resumed {
        Some((_, std, _)) => *std,
        None => resized.std_of(&train_ids)?,
    };
    let images = resized.normalize(std)?;
    log::info!("{} images at {h}x{w}, pixel std {std:.4}", images.len());

    let mut trainer = match resumed {
        Some((t, _, _)) => {
            log::info!("resuming after epoch {}", t.epochs_completed());
            t
        }
        None => {
            let model = Model::build(arch, config.seed)?;
            log::info!("{} parameters", model.parameter_count());
            let optimizer = Rmsprop::new(args.learning_rate, args.rho, args.epsilon, args.weight_decay)?;
            Trainer::new(model, optimizer)
        }
    };
    trainer.meta.insert(STD_KEY.into(), serde_json::to_string(&std)?);
    let split_meta =
        SplitMeta { seed: spec.seed, total_writers: spec.total_writers, train_writers: spec.train_writers, pairing };
    trainer.meta.insert(SPLIT_KEY.into(), serde_json::to_string(&split_meta)?);

    let dir = out_dir(&args.common, "run")?;
    write_manifest(&dir.join("train_pairs.tsv"), &index, &protocol.train)?;
    write_manifest(&dir.join("test_pairs.tsv"), &index, &protocol.test)?;

    let started = Instant::now();
    let data = TrainData {
        pairs: &protocol.train,
        images: &images,
        validation: args.validate.then_some(protocol.test.as_slice()),
    };
    trainer.run(&data, &config, &loss, Some(&dir))?;
    write(&dir.join("history.json"), &trainer.history.to_json()?)?;
    log::info!("training took {:.1}s", started.elapsed().as_secs_f64());

    if let Some(last) = trainer.history.epochs.last() {
        println!(
            "trained {} epoch(s); final loss {:.6}; checkpoint {}",
            last.epoch,
            last.mean_loss,
            dir.join("latest.sgnt").display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_lists() {
        assert_eq!(decay_epochs("10").unwrap(), [10]);
        assert_eq!(decay_epochs("5, 15").unwrap(), [5, 15]);
        assert!(decay_epochs("none").unwrap().is_empty());
        assert!(decay_epochs("x").is_err());
    }
}
