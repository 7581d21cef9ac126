//! Writer templates: chains of cubic Bézier strokes in the unit square.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranges a writer's stroke statistics are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeStyle {
    pub min_strokes: usize,
    pub max_strokes: usize,
    /// Cubic segments per stroke.
    pub min_segments: usize,
    pub max_segments: usize,
    /// Pen width as a fraction of image height.
    pub min_width: f64,
    pub max_width: f64,
    /// Shear angle range in radians.
    pub max_slant: f64,
    /// Vertical swing of control points around the baseline.
    pub amplitude: f64,
    pub unsteadiness: Unsteadiness,
}

/// How a hand wavers, per unit of a sample's perturbation amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unsteadiness {
    /// Tremor standard deviation.
    pub tremor_gain: f64,
    /// Tremor frequency range, in cycles per unit of arc length.
    pub tremor_cycles: (f64, f64),
}

impl Unsteadiness {
    pub fn validate(&self) -> bool {
        self.tremor_gain >= 0.0 && 0.0 < self.tremor_cycles.0 && self.tremor_cycles.0 < self.tremor_cycles.1
    }
}

impl Default for StrokeStyle {
    fn default() -> Self {
        StrokeStyle {
            min_strokes: 3,
            max_strokes: 5,
            min_segments: 2,
            max_segments: 4,
            min_width: 0.025,
            max_width: 0.045,
            max_slant: 0.35,
            amplitude: 0.3,
            unsteadiness: Unsteadiness { tremor_gain: 1.0, tremor_cycles: (4.0, 9.0) },
        }
    }
}

impl StrokeStyle {
    /// Many short, upright strokes on a flat baseline, with a fainter and
    /// faster tremor than the default.
    pub fn fine() -> Self {
        StrokeStyle {
            min_strokes: 6,
            max_strokes: 8,
            min_segments: 1,
            max_segments: 2,
            min_width: 0.025,
            max_width: 0.045,
            max_slant: 0.05,
            amplitude: 0.15,
            unsteadiness: Unsteadiness { tremor_gain: 0.6, tremor_cycles: (9.0, 14.0) },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(StrokeStyle::default()),
            "fine" => Ok(StrokeStyle::fine()),
            other => Err(Error::InvalidArgument(format!("unknown stroke style `{other}` (default, fine)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.min_strokes >= 3
            && self.min_strokes <= self.max_strokes
            && self.min_segments >= 1
            && self.min_segments <= self.max_segments
            && self.min_width > 0.0
            && self.min_width <= self.max_width
            && self.max_width < 0.2
            && (0.0..1.0).contains(&self.max_slant)
            && (0.0..=0.5).contains(&self.amplitude)
            && self.unsteadiness.validate();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid stroke style {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    /// `3k + 1` control points of `k` joined cubic segments.
    pub points: Vec<(f64, f64)>,
    /// Pen width as a fraction of image height.
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WriterTemplate {
    pub seed: u64,
    pub strokes: Vec<Stroke>,
    /// Shear angle in radians, applied when rendering.
    pub slant: f64,
    pub unsteadiness: Unsteadiness,
}

impl WriterTemplate {
    pub fn control_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.strokes.iter().flat_map(|s| s.points.iter().copied())
    }
}

/// Template from the default stroke style.
pub fn gen_writer(seed: u64) -> WriterTemplate {
    gen_writer_with(seed, &StrokeStyle::default())
}

/// Strokes laid out left to right, each wandering around a shared baseline.
pub fn gen_writer_with(seed: u64, style: &StrokeStyle) -> WriterTemplate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(style.min_strokes..=style.max_strokes);
    let baseline = rng.random_range(0.4..0.6);
    let slot = 1.0 / count as f64;
    let strokes = (0..count)
        .map(|k| {
            let segments = rng.random_range(style.min_segments..=style.max_segments);
            let x0 = k as f64 * slot + rng.random_range(0.0..0.3) * slot;
            let x1 = ((k + 1) as f64 * slot + rng.random_range(0.0..0.4) * slot).min(1.0);
            let n = 3 * segments + 1;
            let points = (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    let x = x0 + t * (x1 - x0) + rng.random_range(-0.5..0.5) * slot / n as f64;
                    let y = baseline + rng.random_range(-style.amplitude..=style.amplitude);
                    (x.clamp(0.0, 1.0), y.clamp(0.0, 1.0))
                })
                .collect();
            Stroke { points, width: rng.random_range(style.min_width..=style.max_width) }
        })
        .collect();
    let slant = rng.random_range(-style.max_slant..=style.max_slant);
    WriterTemplate { seed, strokes, slant, unsteadiness: style.unsteadiness }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_dependent() {
        assert_eq!(gen_writer(7), gen_writer(7));
        let (a, b) = (gen_writer(7), gen_writer(8));
        assert!(a.control_points().ne(b.control_points()));
    }

    #[test]
    fn invariants_hold() {
        for style in [StrokeStyle::default(), StrokeStyle::fine()] {
            style.validate().unwrap();
            for seed in 0..50 {
                let t = gen_writer_with(seed, &style);
                assert!(t.strokes.len() >= 3);
                for s in &t.strokes {
                    assert_eq!(s.points.len() % 3, 1);
                }
                assert!(t.control_points().all(|(x, y)| (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)));
            }
        }
    }

    #[test]
    fn style_validation() {
        assert!(StrokeStyle { min_strokes: 2, ..StrokeStyle::default() }.validate().is_err());
        assert!(StrokeStyle::preset("bold").is_err());
        let flat = Unsteadiness { tremor_gain: 1.0, tremor_cycles: (5.0, 5.0) };
        assert!(StrokeStyle { unsteadiness: flat, ..StrokeStyle::default() }.validate().is_err());
        let negative = Unsteadiness { tremor_gain: -0.1, tremor_cycles: (4.0, 9.0) };
        assert!(StrokeStyle { unsteadiness: negative, ..StrokeStyle::default() }.validate().is_err());
    }
}
