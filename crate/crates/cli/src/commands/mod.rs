mod eval;
mod gen_synth;
mod inspect;
mod train;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signet_core::data::{DatasetIndex, PairingMode, SplitSpec};
use signet_core::{ArchitectureConfig, Checkpoint, Model};

use crate::args::{Common, SplitArgs};
use crate::error::{CliError, CliResult};

pub use eval::{cross_eval, eval};
pub use gen_synth::gen_synth;
pub use inspect::inspect;
pub use train::train;
pub use verify::verify;

/// Meta key holding the normalization std frozen at training time.
pub const STD_KEY: &str = "std";
/// Meta key holding the [`SplitMeta`] of the training run.
pub const SPLIT_KEY: &str = "split";
pub const DEFAULT_TEST_WRITERS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub seed: u64,
    pub total_writers: usize,
    pub train_writers: usize,
    pub pairing: PairingMode,
}

fn init_threads(common: &Common) -> CliResult<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn out_dir(common: &Common, default: &str) -> CliResult<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Split of `index` from explicit flags, falling back to `stored` and then
/// to the defaults.
fn split_spec(
    index: &DatasetIndex,
    args: &SplitArgs,
    seed: Option<u64>,
    stored: Option<&SplitMeta>,
) -> CliResult<SplitSpec> {
    let k = index.writer_count();
    let m = match (args.train_writers, args.test_writers, stored) {
        (Some(m), _, _) => m,
        (None, Some(t), _) => k.saturating_sub(t),
        (None, None, Some(s)) if s.total_writers == k => s.train_writers,
        (None, None, _) => k.saturating_sub(DEFAULT_TEST_WRITERS),
    };
    if m == 0 || m >= k {
        return Err(CliError::Usage(format!("dataset has {k} writers; the split needs 0 < train writers ({m}) < {k}")));
    }
    let seed = seed.or(stored.map(|s| s.seed)).unwrap_or(0);
    Ok(SplitSpec { total_writers: k, train_writers: m, seed })
}

/// The checkpoint's model, rebuilt with `arch` instead of the stored
/// architecture when one is given.
fn load_model(path: &Path, arch: Option<ArchitectureConfig>) -> CliResult<(Model, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    let model = match arch {
        Some(config) => Model::from_parts(config, ck.tensors.clone())?,
        None => ck.to_model()?,
    };
    Ok((model, ck))
}

fn checkpoint_std(ck: &Checkpoint, path: &Path) -> CliResult<f64> {
    let text = ck.meta.get(STD_KEY).ok_or_else(|| {
        CliError::Usage(format!("{}: checkpoint has no normalization std; was it written by `train`?", path.display()))
    })?;
    Ok(serde_json::from_str(text)?)
}

fn checkpoint_split(ck: &Checkpoint) -> CliResult<Option<SplitMeta>> {
    ck.meta.get(SPLIT_KEY).map(|t| serde_json::from_str(t)).transpose().map_err(Into::into)
}

fn arch_config(common: &Common) -> CliResult<Option<ArchitectureConfig>> {
    common.arch.map(|a| ArchitectureConfig::preset(a.name()).map_err(Into::into)).transpose()
}
