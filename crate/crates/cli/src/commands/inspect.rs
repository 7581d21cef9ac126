use std::process::ExitCode;

use image::GrayImage;
use signet_core::Tensor;

use super::verify::load_input;
use super::{arch_config, checkpoint_std, init_threads, load_model, out_dir};
use crate::args::InspectArgs;
use crate::error::{CliError, CliResult};

/// Min-max scaling to 0..=255; a constant map becomes all zeros.
fn to_image(map: &Tensor) -> GrayImage {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let lo = map.data().iter().copied().fold(f32::INFINITY, f32::min);
    let hi = map.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    let px = map.data().iter().map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 }).collect();
    GrayImage::from_raw(w as u32, h as u32, px).expect("map dimensions")
}

pub fn inspect(args: InspectArgs) -> CliResult<ExitCode> {
    init_threads(&args.common)?;
    let (model, ck) = load_model(&args.checkpoint, arch_config(&args.common)?)?;
    let std = checkpoint_std(&ck, &args.checkpoint)?;
    let layer = match args.layer {
        Some(l) => l,
        None => {
            model.last_conv_layer().ok_or_else(|| CliError::Usage("architecture has no convolution layer".into()))?
        }
    };
    let input = load_input(&args.image, &model, std)?;
    let maps = model.activation_maps(&input, layer)?;
    let dir = out_dir(&args.common, "activations")?;
    for (rank, (channel, map)) in maps.top(args.top_k).into_iter().enumerate() {
        let path = dir.join(format!("layer{layer:02}_top{}_channel{channel:03}.png", rank + 1));
        to_image(map)
            .save(&path)
            .map_err(|e| CliError::Core(signet_core::Error::Image { path: path.clone(), source: e }))?;
        println!("{}\tchannel {channel}\tenergy {:.6}", path.display(), maps.energy[channel]);
    }
    Ok(ExitCode::SUCCESS)
}
