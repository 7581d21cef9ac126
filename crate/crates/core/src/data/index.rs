//! Dataset discovery: `<root>/<writer>/{genuine,forged}/*.{png,pgm}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureKind {
    Genuine,
    Forged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub writer_id: String,
    pub kind: SignatureKind,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WriterImages {
    pub genuine: Vec<ImageId>,
    pub forged: Vec<ImageId>,
}

/// A decoded grayscale image with values in `0..=255`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
    pub writer_id: String,
    pub kind: SignatureKind,
    pub source_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub name: String,
    images: Vec<ImageRecord>,
    writers: BTreeMap<String, WriterImages>,
}

impl DatasetIndex {
    /// Groups records by writer. Every writer needs two genuine images.
    pub fn from_records(name: impl Into<String>, records: Vec<ImageRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Dataset(vec!["dataset contains no images".into()]));
        }
        let mut writers: BTreeMap<String, WriterImages> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            let w = writers.entry(r.writer_id.clone()).or_default();
            match r.kind {
                SignatureKind::Genuine => w.genuine.push(ImageId(i)),
                SignatureKind::Forged => w.forged.push(ImageId(i)),
            }
        }
        let problems: Vec<String> = writers
            .iter()
            .filter(|(_, w)| w.genuine.len() < 2)
            .map(|(id, w)| format!("writer `{id}` has {} genuine image(s), at least 2 are needed", w.genuine.len()))
            .collect();
        if !problems.is_empty() {
            return Err(Error::Dataset(problems));
        }
        Ok(DatasetIndex { name: name.into(), images: records, writers })
    }

    /// In-memory index with `genuine` and `forged` images per writer and
    /// synthetic paths. Useful for protocol arithmetic without files.
    pub fn synthetic_layout(writers: usize, genuine: usize, forged: usize) -> Result<Self> {
        let mut records = Vec::new();
        for w in 0..writers {
            let writer_id = format!("w{w:04}");
            for (kind, count, dir) in
                [(SignatureKind::Genuine, genuine, "genuine"), (SignatureKind::Forged, forged, "forged")]
            {
                for i in 0..count {
                    records.push(ImageRecord {
                        path: PathBuf::from(format!("{writer_id}/{dir}/{i:03}.png")),
                        writer_id: writer_id.clone(),
                        kind,
                    });
                }
            }
        }
        Self::from_records("layout", records)
    }

    pub fn image(&self, id: ImageId) -> &ImageRecord {
        &self.images[id.0]
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn writer(&self, id: &str) -> Option<&WriterImages> {
        self.writers.get(id)
    }

    /// Writer ids in sorted order.
    pub fn writer_ids(&self) -> Vec<String> {
        self.writers.keys().cloned().collect()
    }

    pub fn writer_count(&self) -> usize {
        self.writers.len()
    }

    pub fn genuine_count(&self) -> usize {
        self.writers.values().map(|w| w.genuine.len()).sum()
    }

    pub fn forged_count(&self) -> usize {
        self.writers.values().map(|w| w.forged.len()).sum()
    }

    /// Every image of the given writers, genuine first.
    pub fn images_of(&self, writers: &[String]) -> Result<Vec<ImageId>> {
        let mut ids = Vec::new();
        for id in writers {
            let w = self.writers.get(id).ok_or_else(|| Error::InvalidArgument(format!("unknown writer `{id}`")))?;
            ids.extend_from_slice(&w.genuine);
            ids.extend_from_slice(&w.forged);
        }
        Ok(ids)
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Scans a dataset directory, validating that every image header decodes.
/// All problems are collected into one [`Error::Dataset`] report.
pub fn load_dataset(root: &Path) -> Result<DatasetIndex> {
    let mut records = Vec::new();
    let mut problems = Vec::new();
    let writer_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if writer_dirs.is_empty() {
        return Err(Error::Dataset(vec![format!("{}: no writer directories", root.display())]));
    }
    for dir in writer_dirs {
        let writer_id = dir.file_name().expect("read_dir entry has a name").to_string_lossy().into_owned();
        let genuine_dir = dir.join("genuine");
        if !genuine_dir.is_dir() {
            problems.push(format!("{}: missing genuine/ directory", dir.display()));
            continue;
        }
        let mut counts = [0usize; 2];
        for (kind, sub) in [(SignatureKind::Genuine, genuine_dir), (SignatureKind::Forged, dir.join("forged"))] {
            if !sub.is_dir() {
                continue;
            }
            for path in sorted_entries(&sub)?.into_iter().filter(|p| is_image(p)) {
                let readable = image::ImageReader::open(&path)
                    .map_err(image::ImageError::IoError)
                    .and_then(|r| r.with_guessed_format().map_err(image::ImageError::IoError))
                    .and_then(|r| r.into_dimensions());
                match readable {
                    Ok((w, h)) if w > 0 && h > 0 => {
                        counts[(kind == SignatureKind::Forged) as usize] += 1;
                        records.push(ImageRecord { path, writer_id: writer_id.clone(), kind });
                    }
                    Ok(_) => problems.push(format!("{}: zero-area image", path.display())),
                    Err(e) => problems.push(format!("{}: {e}", path.display())),
                }
            }
        }
        log::info!("writer {writer_id}: {} genuine, {} forged", counts[0], counts[1]);
        if counts[0] < 2 {
            problems.push(format!("writer `{writer_id}` has {} genuine image(s), at least 2 are needed", counts[0]));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Dataset(problems));
    }
    let name = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    DatasetIndex::from_records(name, records)
}

/// Decodes an image to 8-bit grayscale. Colour inputs use BT.601 luma weights.
pub fn load_image(record: &ImageRecord) -> Result<SignatureImage> {
    let path = &record.path;
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image { path: path.clone(), source })?;
    let (height, width) = (img.height() as usize, img.width() as usize);
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("{}: zero-area image", path.display())));
    }
    let pixels = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(f32::from).collect(),
        other if !other.color().has_color() => other.to_luma8().into_raw().into_iter().map(f32::from).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f64::from);
                (0.299 * r + 0.587 * g + 0.114 * b).round() as f32
            })
            .collect(),
    };
    Ok(SignatureImage {
        height,
        width,
        pixels,
        writer_id: record.writer_id.clone(),
        kind: record.kind,
        source_path: path.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgb, RgbImage};

    fn write_gray(path: &Path, value: u8) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        GrayImage::from_pixel(4, 3, Luma([value])).save(path).unwrap();
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));
    }

    #[test]
    fn single_genuine_writer_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_gray(&dir.path().join("a/genuine/1.png"), 10);
        write_gray(&dir.path().join("a/genuine/2.png"), 10);
        write_gray(&dir.path().join("b/genuine/1.png"), 10);
        match load_dataset(dir.path()) {
            Err(Error::Dataset(p)) => {
                assert_eq!(p.len(), 1);
                assert!(p[0].contains("`b`"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unreadable_images_are_itemized() {
        let dir = tempfile::tempdir().unwrap();
        write_gray(&dir.path().join("a/genuine/1.png"), 10);
        write_gray(&dir.path().join("a/genuine/2.png"), 10);
        fs::write(dir.path().join("a/genuine/3.png"), b"nope").unwrap();
        fs::create_dir_all(dir.path().join("b")).unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Dataset(p)) => assert_eq!(p.len(), 2, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn counts_and_luma() {
        let dir = tempfile::tempdir().unwrap();
        write_gray(&dir.path().join("a/genuine/1.png"), 10);
        write_gray(&dir.path().join("a/genuine/2.pgm"), 20);
        write_gray(&dir.path().join("a/forged/1.png"), 30);
        let rgb = dir.path().join("a/forged/2.png");
        RgbImage::from_pixel(2, 2, Rgb([255, 0, 0])).save(&rgb).unwrap();
        let index = load_dataset(dir.path()).unwrap();
        assert_eq!((index.genuine_count(), index.forged_count()), (2, 2));
        let w = index.writer("a").unwrap();
        let img = load_image(index.image(w.forged[1])).unwrap();
        assert_eq!(img.pixels, vec![76.0; 4]); // round(0.299 * 255)
        let img = load_image(index.image(w.genuine[1])).unwrap();
        assert_eq!((img.height, img.width, img.pixels[0]), (3, 4, 20.0));
    }
}
