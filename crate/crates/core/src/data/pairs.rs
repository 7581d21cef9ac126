//! Writer-independent splits and balanced pair sampling.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::index::{DatasetIndex, ImageId};
use crate::error::{Error, Result};

/// Label of a similar (genuine, genuine) pair.
pub const SIMILAR: u8 = 0;
/// Label of a dissimilar (genuine, forged) pair.
pub const DISSIMILAR: u8 = 1;

/// Where the negative member of a dissimilar pair comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingMode {
    /// A forgery of the same writer.
    Skilled,
    /// A genuine signature of a different writer.
    Unskilled,
}

impl std::str::FromStr for PairingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skilled" => Ok(PairingMode::Skilled),
            "unskilled" => Ok(PairingMode::Unskilled),
            other => Err(Error::InvalidArgument(format!("unknown pairing mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSample {
    pub a: ImageId,
    pub b: ImageId,
    /// [`SIMILAR`] or [`DISSIMILAR`].
    pub y: u8,
    pub writer_id: String,
    pub mode: PairingMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    /// K: writers in the dataset.
    pub total_writers: usize,
    /// M: writers used for training.
    pub train_writers: usize,
    pub seed: u64,
}

/// Per-writer generator seed, stable across platforms and independent of
/// the order writers are processed in.
pub fn writer_seed(global_seed: u64, writer_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(writer_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Uniformly picks M of the K writers for training; the rest are test writers.
pub fn split_writers(index: &DatasetIndex, spec: &SplitSpec) -> Result<(Vec<String>, Vec<String>)> {
    let ids = index.writer_ids();
    if ids.len() != spec.total_writers {
        return Err(Error::InvalidArgument(format!(
            "split expects K = {} writers, dataset has {}",
            spec.total_writers,
            ids.len()
        )));
    }
    if spec.train_writers == 0 || spec.train_writers >= spec.total_writers {
        return Err(Error::InvalidArgument(format!(
            "need 0 < M < K, got M = {}, K = {}",
            spec.train_writers, spec.total_writers
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked = index::sample(&mut rng, ids.len(), spec.train_writers).into_vec();
    picked.sort_unstable();
    let mut train = Vec::with_capacity(picked.len());
    let mut test = Vec::with_capacity(ids.len() - picked.len());
    let mut next = picked.iter().peekable();
    for (i, id) in ids.into_iter().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
            train.push(id);
        } else {
            test.push(id);
        }
    }
    Ok((train, test))
}

fn choose(rng: &mut ChaCha8Rng, len: usize, amount: usize) -> Vec<usize> {
    let mut picked = index::sample(rng, len, amount).into_vec();
    picked.sort_unstable();
    picked
}

/// Pairs for one writer, drawing unskilled negatives from every other
/// writer in the index.
pub fn generate_pairs(index: &DatasetIndex, writer_id: &str, mode: PairingMode, seed: u64) -> Result<Vec<PairSample>> {
    generate_pairs_from(index, writer_id, mode, seed, &index.writer_ids())
}

/// All `C(G, 2)` similar pairs plus an equally sized random sample of the
/// dissimilar candidates. When there are fewer candidates than similar
/// pairs, every candidate is used and the similar pairs are subsampled.
///
/// Unskilled negatives come from the genuine images of the writers in
/// `pool` other than `writer_id`. The generator is seeded from
/// `(seed, writer_id)`.
pub fn generate_pairs_from(
    index: &DatasetIndex,
    writer_id: &str,
    mode: PairingMode,
    seed: u64,
    pool: &[String],
) -> Result<Vec<PairSample>> {
    let writer =
        index.writer(writer_id).ok_or_else(|| Error::InvalidArgument(format!("unknown writer `{writer_id}`")))?;
    let genuine = &writer.genuine;
    if genuine.len() < 2 {
        return Err(Error::InvalidArgument(format!("writer `{writer_id}` has fewer than 2 genuine images")));
    }
    let negatives: Vec<ImageId> = match mode {
        PairingMode::Skilled => writer.forged.clone(),
        PairingMode::Unskilled => pool
            .iter()
            .filter(|w| w.as_str() != writer_id)
            .filter_map(|w| index.writer(w))
            .flat_map(|w| w.genuine.iter().copied())
            .collect(),
    };
    if negatives.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "writer `{writer_id}` has no {} negatives",
            match mode {
                PairingMode::Skilled => "forged",
                PairingMode::Unskilled => "other-writer",
            }
        )));
    }

    let g = genuine.len();
    let similar: Vec<(ImageId, ImageId)> =
        (0..g).flat_map(|i| (i + 1..g).map(move |j| (i, j))).map(|(i, j)| (genuine[i], genuine[j])).collect();
    let candidates = g * negatives.len();
    let count = similar.len().min(candidates);

    let mut rng = ChaCha8Rng::seed_from_u64(writer_seed(seed, writer_id));
    let similar: Vec<_> = if count < similar.len() {
        choose(&mut rng, similar.len(), count).into_iter().map(|i| similar[i]).collect()
    } else {
        similar
    };
    let dissimilar = choose(&mut rng, candidates, count)
        .into_iter()
        .map(|c| (genuine[c / negatives.len()], negatives[c % negatives.len()]));

    let pair = |(a, b): (ImageId, ImageId), y: u8| PairSample { a, b, y, writer_id: writer_id.to_owned(), mode };
    Ok(similar.into_iter().map(|p| pair(p, SIMILAR)).chain(dissimilar.map(|p| pair(p, DISSIMILAR))).collect())
}

/// Dissimilar candidates available for one writer: `G·F` skilled, or `G`
/// times the other writers' genuine images for unskilled.
pub fn candidate_count(index: &DatasetIndex, writer_id: &str, mode: PairingMode) -> Option<usize> {
    let w = index.writer(writer_id)?;
    Some(match mode {
        PairingMode::Skilled => w.genuine.len() * w.forged.len(),
        PairingMode::Unskilled => {
            let others = index.genuine_count() - w.genuine.len();
            w.genuine.len() * others
        }
    })
}

#[derive(Clone, Debug)]
pub struct Protocol {
    pub train_writers: Vec<String>,
    pub test_writers: Vec<String>,
    pub train: Vec<PairSample>,
    pub test: Vec<PairSample>,
}

/// Splits writers and generates training pairs in `mode`. Test pairs always
/// use skilled forgeries of the test writers themselves. Unskilled
/// training negatives are drawn from training writers only.
pub fn build_protocol(index: &DatasetIndex, spec: &SplitSpec, mode: PairingMode) -> Result<Protocol> {
    let (train_writers, test_writers) = split_writers(index, spec)?;
    let mut train = Vec::new();
    for w in &train_writers {
        train.extend(generate_pairs_from(index, w, mode, spec.seed, &train_writers)?);
    }
    let mut test = Vec::new();
    for w in &test_writers {
        test.extend(generate_pairs_from(index, w, PairingMode::Skilled, spec.seed, &test_writers)?);
    }
    Ok(Protocol { train_writers, test_writers, train, test })
}

/// Distinct images referenced by `pairs`, in id order.
pub fn pair_image_ids(pairs: &[PairSample]) -> Vec<ImageId> {
    let ids: std::collections::BTreeSet<ImageId> = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    ids.into_iter().collect()
}

/// One `path_a<TAB>path_b<TAB>y<TAB>writer_id` line per pair.
pub fn manifest_text(index: &DatasetIndex, pairs: &[PairSample]) -> String {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            index.image(p.a).path.display(),
            index.image(p.b).path.display(),
            p.y,
            p.writer_id
        );
    }
    out
}

pub fn write_manifest(path: &Path, index: &DatasetIndex, pairs: &[PairSample]) -> Result<()> {
    fs::write(path, manifest_text(index, pairs)).map_err(|e| Error::io(path, e))
}
