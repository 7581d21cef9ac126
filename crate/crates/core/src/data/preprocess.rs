//! Resize, invert and scale signature images.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::index::{load_image, DatasetIndex, ImageId, SignatureImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bilinear resize with half-pixel centres: destination pixel `d` samples
/// source coordinate `(d + 0.5)·(src/dst) − 0.5`, clamped to the edge.
pub fn resize_bilinear(src: &[f32], height: usize, width: usize, out_h: usize, out_w: usize) -> Result<Vec<f32>> {
    if height == 0 || width == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("cannot resize a zero-area image".into()));
    }
    if src.len() != height * width {
        return Err(Error::shape("resize", format!("{} pixels for {height}x{width}", src.len())));
    }
    let axis = |out: usize, src_len: usize| -> Vec<(usize, usize, f64)> {
        let scale = src_len as f64 / out as f64;
        (0..out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
                let lo = s.floor() as usize;
                (lo, (lo + 1).min(src_len - 1), s - lo as f64)
            })
            .collect()
    };
    let rows = axis(out_h, height);
    let cols = axis(out_w, width);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let p = |y: usize, x: usize| f64::from(src[y * width + x]);
            let top = (1.0 - fx) * p(y0, x0) + fx * p(y0, x1);
            let bottom = (1.0 - fx) * p(y1, x0) + fx * p(y1, x1);
            out.push(((1.0 - fy) * top + fy * bottom) as f32);
        }
    }
    Ok(out)
}

/// Resized and inverted pixels (background becomes 0), before scaling.
fn resize_invert(image: &SignatureImage, out_h: usize, out_w: usize) -> Result<Vec<f32>> {
    let mut px = resize_bilinear(&image.pixels, image.height, image.width, out_h, out_w)?;
    px.iter_mut().for_each(|v| *v = 255.0 - *v);
    Ok(px)
}

/// Resize to `out_h × out_w`, invert (`255 − v`) and divide by `std`.
/// Returns a `[1, out_h, out_w]` tensor.
pub fn preprocess(image: &SignatureImage, out_h: usize, out_w: usize, std: f64) -> Result<Tensor<f32>> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::InvalidArgument(format!("normalization std must be positive, got {std}")));
    }
    let px = resize_invert(image, out_h, out_w)?;
    Tensor::from_vec(vec![1, out_h, out_w], px.into_iter().map(|v| (f64::from(v) / std) as f32).collect())
}

/// Running count, mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn of(values: &[f32]) -> Self {
        values.iter().fold(Moments::default(), |mut m, &v| {
            m.n += 1.0;
            let d = f64::from(v) - m.mean;
            m.mean += d / m.n;
            m.m2 += d * (f64::from(v) - m.mean);
            m
        })
    }

    fn merge(self, o: Moments) -> Self {
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }
}

/// Population standard deviation of a set of pixel buffers.
pub fn pixel_std<'a>(images: impl IntoIterator<Item = &'a [f32]>) -> Result<f64> {
    let m = images.into_iter().map(Moments::of).fold(Moments::default(), Moments::merge);
    if m.n == 0.0 {
        return Err(Error::InvalidArgument("no pixels to compute a standard deviation from".into()));
    }
    let std = (m.m2 / m.n).sqrt();
    if std <= 0.0 {
        return Err(Error::InvalidArgument("pixel standard deviation is zero (constant images)".into()));
    }
    Ok(std)
}

/// Resized, inverted images keyed by id; the input to both the dataset
/// statistic and the final scaling.
#[derive(Clone, Debug)]
pub struct ResizedImages {
    pub height: usize,
    pub width: usize,
    pixels: BTreeMap<ImageId, Vec<f32>>,
}

impl ResizedImages {
    pub fn load(index: &DatasetIndex, ids: &[ImageId], height: usize, width: usize) -> Result<Self> {
        let loaded: Vec<(ImageId, Vec<f32>)> = ids
            .par_iter()
            .map(|&id| {
                let img = load_image(index.image(id))?;
                Ok((id, resize_invert(&img, height, width)?))
            })
            .collect::<Result<_>>()?;
        Ok(ResizedImages { height, width, pixels: loaded.into_iter().collect() })
    }

    pub fn std_of(&self, ids: &[ImageId]) -> Result<f64> {
        let bufs = ids
            .iter()
            .map(|id| {
                self.pixels
                    .get(id)
                    .map(Vec::as_slice)
                    .ok_or_else(|| Error::InvalidArgument(format!("image {id:?} not loaded")))
            })
            .collect::<Result<Vec<_>>>()?;
        pixel_std(bufs)
    }

    pub fn normalize(&self, std: f64) -> Result<PreparedImages> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::InvalidArgument(format!("normalization std must be positive, got {std}")));
        }
        let images = self
            .pixels
            .iter()
            .map(|(&id, px)| {
                let data = px.iter().map(|&v| (f64::from(v) / std) as f32).collect();
                Ok((id, Tensor::from_vec(vec![1, self.height, self.width], data)?))
            })
            .collect::<Result<_>>()?;
        Ok(PreparedImages { height: self.height, width: self.width, std, images })
    }
}

/// Population std of all resized, inverted pixels of every image
/// (genuine and forged) of `writers`.
pub fn dataset_std(index: &DatasetIndex, writers: &[String], height: usize, width: usize) -> Result<f64> {
    if writers.is_empty() {
        return Err(Error::InvalidArgument("dataset_std needs at least one writer".into()));
    }
    let ids = index.images_of(writers)?;
    ResizedImages::load(index, &ids, height, width)?.std_of(&ids)
}

/// Loads, resizes and scales `ids` in one go.
pub fn prepare_images(
    index: &DatasetIndex,
    ids: &[ImageId],
    height: usize,
    width: usize,
    std: f64,
) -> Result<PreparedImages> {
    ResizedImages::load(index, ids, height, width)?.normalize(std)
}

/// Network-ready `[1, H, W]` tensors keyed by image id.
#[derive(Clone, Debug)]
pub struct PreparedImages {
    pub height: usize,
    pub width: usize,
    pub std: f64,
    images: BTreeMap<ImageId, Tensor<f32>>,
}

impl PreparedImages {
    pub fn get(&self, id: ImageId) -> Result<&Tensor<f32>> {
        self.images.get(&id).ok_or_else(|| Error::InvalidArgument(format!("image {id:?} was not prepared")))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn insert(&mut self, id: ImageId, t: Tensor<f32>) -> Result<()> {
        if t.shape() != [1, self.height, self.width] {
            return Err(Error::shape("prepared image", format!("{:?}", t.shape())));
        }
        self.images.insert(id, t);
        Ok(())
    }

    pub fn empty(height: usize, width: usize, std: f64) -> Self {
        PreparedImages { height, width, std, images: BTreeMap::new() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::index::SignatureKind;
    use std::path::PathBuf;

    fn image(h: usize, w: usize, pixels: Vec<f32>) -> SignatureImage {
        SignatureImage {
            height: h,
            width: w,
            pixels,
            writer_id: "w".into(),
            kind: SignatureKind::Genuine,
            source_path: PathBuf::new(),
        }
    }

    #[test]
    fn checkerboard_center_sample() {
        let out = resize_bilinear(&[0.0, 255.0, 255.0, 0.0], 2, 2, 1, 1).unwrap();
        assert_eq!(out, vec![127.5]);
    }

    #[test]
    fn same_size_is_identity() {
        let px: Vec<f32> = (0..155 * 220).map(|i| (i % 256) as f32).collect();
        assert_eq!(resize_bilinear(&px, 155, 220, 155, 220).unwrap(), px);
    }

    #[test]
    fn upsampling_clamps_edges() {
        // 1x2 -> 1x4: source x = (d + 0.5)/2 − 0.5 = −0.25, 0.25, 0.75, 1.25
        let out = resize_bilinear(&[0.0, 100.0], 1, 2, 1, 4).unwrap();
        assert_eq!(out, vec![0.0, 25.0, 75.0, 100.0]);
    }

    #[test]
    fn white_background_becomes_zero() {
        let t = preprocess(&image(7, 9, vec![255.0; 63]), 5, 6, 3.7).unwrap();
        assert_eq!(t.shape(), &[1, 5, 6]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inversion_then_scale() {
        let t = preprocess(&image(1, 2, vec![55.0, 255.0]), 1, 2, 2.0).unwrap();
        assert_eq!(t.data(), &[100.0, 0.0]);
        assert!(preprocess(&image(1, 2, vec![0.0, 0.0]), 1, 2, 0.0).is_err());
        assert!(preprocess(&image(0, 0, vec![]), 1, 2, 1.0).is_err());
    }

    #[test]
    fn std_small_cases() {
        let a = [0.0f32];
        let b = [2.0f32];
        assert_eq!(pixel_std([&a[..], &b[..]]).unwrap(), 1.0);
        let c = [5.0f32; 4];
        assert!(pixel_std([&c[..], &c[..]]).is_err());
        assert!(pixel_std(std::iter::empty::<&[f32]>()).is_err());
    }
}
