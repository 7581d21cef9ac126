//! Whole corpora on disk in the dataset layout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{GrayImage, ImageFormat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{render_sample, MIN_SIDE};
use super::template::{gen_writer_with, StrokeStyle, WriterTemplate};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

pub const GENERATOR_VERSION: u32 = 3;
pub const META_FILE: &str = "corpus.meta";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub num_writers: usize,
    pub genuine_per_writer: usize,
    pub forged_per_writer: usize,
    pub height: usize,
    pub width: usize,
    /// Control-point noise of genuine samples, in unit-square units.
    pub genuine_jitter: f64,
    /// Control-point noise of forgeries; must exceed the genuine jitter.
    pub forgery_amplitude: f64,
    pub seed: u64,
    pub style: StrokeStyle,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            num_writers: 10,
            genuine_per_writer: 24,
            forged_per_writer: 30,
            height: 100,
            width: 150,
            genuine_jitter: 0.008,
            forgery_amplitude: 0.03,
            seed: 0,
            style: StrokeStyle::default(),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        self.style.validate()?;
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.num_writers == 0 {
            return fail("corpus needs at least one writer".into());
        }
        if self.genuine_per_writer < 2 {
            return fail("each writer needs at least 2 genuine samples".into());
        }
        if self.height < MIN_SIDE || self.width < MIN_SIDE {
            return fail(format!("image size must be at least {MIN_SIDE}x{MIN_SIDE}"));
        }
        if !(self.genuine_jitter >= 0.0 && self.forgery_amplitude > self.genuine_jitter) {
            return fail(format!(
                "forgery amplitude {} must exceed genuine jitter {}",
                self.forgery_amplitude, self.genuine_jitter
            ));
        }
        Ok(())
    }

    pub fn writer_id(&self, index: usize) -> String {
        format!("w{index:03}")
    }

    pub fn writer_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, "writer", &[index as u64])
    }

    pub fn file_count(&self) -> usize {
        self.num_writers * (self.genuine_per_writer + self.forged_per_writer)
    }

    /// `key=value` lines describing everything needed to regenerate.
    pub fn meta_text(&self) -> String {
        let s = &self.style;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("generator_version", GENERATOR_VERSION.to_string());
        kv("seed", self.seed.to_string());
        kv("num_writers", self.num_writers.to_string());
        kv("genuine_per_writer", self.genuine_per_writer.to_string());
        kv("forged_per_writer", self.forged_per_writer.to_string());
        kv("height", self.height.to_string());
        kv("width", self.width.to_string());
        kv("genuine_jitter", self.genuine_jitter.to_string());
        kv("forgery_amplitude", self.forgery_amplitude.to_string());
        kv("strokes", format!("{}..{}", s.min_strokes, s.max_strokes));
        kv("segments", format!("{}..{}", s.min_segments, s.max_segments));
        kv("stroke_width", format!("{}..{}", s.min_width, s.max_width));
        kv("max_slant", s.max_slant.to_string());
        kv("stroke_amplitude", s.amplitude.to_string());
        let pen = &s.unsteadiness;
        kv("tremor_gain", pen.tremor_gain.to_string());
        kv("tremor_cycles", format!("{}..{}", pen.tremor_cycles.0, pen.tremor_cycles.1));
        for w in 0..self.num_writers {
            kv(&format!("writer.{}.seed", self.writer_id(w)), self.writer_seed(w).to_string());
        }
        out
    }
}

/// Template, genuine renders and forged renders of writer `index`.
pub struct WriterSamples {
    pub template: WriterTemplate,
    pub genuine: Vec<GrayImage>,
    pub forged: Vec<GrayImage>,
}

/// Renders one writer. Forgeries are strongly perturbed renders of the
/// writer's own template.
pub fn render_writer(spec: &CorpusSpec, index: usize) -> Result<WriterSamples> {
    let seed = spec.writer_seed(index);
    let template = gen_writer_with(seed, &spec.style);
    let render = |kind: &str, i: usize, amplitude: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, kind, &[i as u64]));
        render_sample(&template, amplitude, &mut rng, spec.height, spec.width)
    };
    let genuine =
        (0..spec.genuine_per_writer).map(|i| render("genuine", i, spec.genuine_jitter)).collect::<Result<_>>()?;
    let forged =
        (0..spec.forged_per_writer).map(|i| render("forged", i, spec.forgery_amplitude)).collect::<Result<_>>()?;
    Ok(WriterSamples { template, genuine, forged })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorpusSummary {
    pub writers: usize,
    pub files: usize,
    /// Files created or whose bytes changed.
    pub written: usize,
}

impl CorpusSummary {
    pub fn unchanged(&self) -> bool {
        self.written == 0
    }
}

fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|source| Error::Image { path: "<png encoder>".into(), source })?;
    Ok(buf.into_inner())
}

/// Writes `bytes` unless the file already holds them; returns whether it wrote.
fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool> {
    if fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(false);
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(true)
}

/// Writes `<out>/<writer>/{genuine,forged}/NNN.png` for every writer plus
/// [`META_FILE`]. Identical specs produce byte-identical files.
pub fn gen_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<CorpusSummary> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let written: Vec<usize> = (0..spec.num_writers)
        .into_par_iter()
        .map(|w| {
            let samples = render_writer(spec, w)?;
            let dir = out_dir.join(spec.writer_id(w));
            let mut written = 0;
            for (kind, images) in [("genuine", &samples.genuine), ("forged", &samples.forged)] {
                let sub = dir.join(kind);
                fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                for (i, img) in images.iter().enumerate() {
                    let path = sub.join(format!("{i:03}.png"));
                    written += usize::from(write_if_changed(&path, &encode_png(img)?)?);
                }
            }
            Ok(written)
        })
        .collect::<Result<_>>()?;
    let meta = out_dir.join(META_FILE);
    let meta_written = write_if_changed(&meta, spec.meta_text().as_bytes())?;
    Ok(CorpusSummary {
        writers: spec.num_writers,
        files: spec.file_count(),
        written: written.iter().sum::<usize>() + usize::from(meta_written),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset;

    fn l1(a: &GrayImage, b: &GrayImage) -> f64 {
        a.as_raw().iter().zip(b.as_raw()).map(|(&p, &q)| (f64::from(p) - f64::from(q)).abs()).sum::<f64>()
            / a.as_raw().len() as f64
    }

    #[test]
    fn ten_writers_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec { height: 40, width: 60, ..CorpusSpec::default() };
        let summary = gen_corpus(&spec, dir.path()).unwrap();
        assert_eq!(summary.files, 540);
        assert_eq!(summary.written, 541);
        let index = load_dataset(dir.path()).unwrap();
        assert_eq!((index.writer_count(), index.genuine_count(), index.forged_count()), (10, 240, 300));

        let before = fs::read(dir.path().join("w003/forged/017.png")).unwrap();
        let again = gen_corpus(&spec, dir.path()).unwrap();
        assert!(again.unchanged());
        assert_eq!(fs::read(dir.path().join("w003/forged/017.png")).unwrap(), before);
        let meta = fs::read_to_string(dir.path().join(META_FILE)).unwrap();
        assert!(meta.contains("seed=0\n") && meta.contains("writer.w009.seed="));
    }

    #[test]
    fn genuine_pairs_are_closer_than_forgeries() {
        for style in [StrokeStyle::default(), StrokeStyle::fine()] {
            let spec = CorpusSpec { genuine_per_writer: 6, forged_per_writer: 6, style, ..CorpusSpec::default() };
            let (mut gg, mut gf, mut n_gg, mut n_gf) = (0.0, 0.0, 0, 0);
            for w in 0..spec.num_writers {
                let s = render_writer(&spec, w).unwrap();
                for (i, a) in s.genuine.iter().enumerate() {
                    for b in &s.genuine[i + 1..] {
                        gg += l1(a, b);
                        n_gg += 1;
                    }
                    for f in &s.forged {
                        gf += l1(a, f);
                        n_gf += 1;
                    }
                }
            }
            let (gg, gf) = (gg / n_gg as f64, gf / n_gf as f64);
            assert!(gg < gf, "genuine {gg} vs forged {gf}");
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = CorpusSpec { forgery_amplitude: 0.005, ..CorpusSpec::default() };
        assert!(bad.validate().is_err());
        assert!(CorpusSpec { genuine_per_writer: 1, ..CorpusSpec::default() }.validate().is_err());
        assert!(CorpusSpec { height: 16, ..CorpusSpec::default() }.validate().is_err());
    }

    #[test]
    fn unwritable_target() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, b"x").unwrap();
        let spec = CorpusSpec { num_writers: 1, height: 32, width: 32, ..CorpusSpec::default() };
        let err = gen_corpus(&spec, &file).unwrap_err();
        assert!(err.to_string().contains("occupied"), "{err}");
    }
}
