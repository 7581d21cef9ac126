//! Anti-aliased rasterization of jittered templates.

use image::GrayImage;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::template::WriterTemplate;
use crate::error::{Error, Result};

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 32;
/// Blank border around the drawing area, as a fraction of each side.
const MARGIN: f64 = 0.1;
/// Polyline samples per cubic segment.
const SAMPLES_PER_SEGMENT: usize = 24;
/// Sinusoids summed into one tremor signal.
const TREMOR_TERMS: usize = 3;

fn cubic(p: &[(f64, f64)], t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    let (b0, b1, b2, b3) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
    (b0 * p[0].0 + b1 * p[1].0 + b2 * p[2].0 + b3 * p[3].0, b0 * p[0].1 + b1 * p[1].1 + b2 * p[2].1 + b3 * p[3].1)
}

fn segment_distance((px, py): (f64, f64), (ax, ay): (f64, f64), (bx, by): (f64, f64)) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (ax + t * dx - px, ay + t * dy - py);
    (qx * qx + qy * qy).sqrt()
}

/// Offsets each polyline point along its normal by a sum of random sinusoids
/// of arc length with overall standard deviation `amplitude`, each with a
/// frequency drawn from `cycles`.
fn add_tremor<R: Rng + ?Sized>(line: &mut [(f64, f64)], amplitude: f64, cycles: (f64, f64), rng: &mut R) {
    if amplitude <= 0.0 || line.len() < 2 {
        return;
    }
    let terms: Vec<(f64, f64)> = (0..TREMOR_TERMS)
        .map(|_| {
            let f = rng.random_range(cycles.0..cycles.1);
            (std::f64::consts::TAU * f, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let scale = amplitude * (2.0 / TREMOR_TERMS as f64).sqrt();
    let original = line.to_vec();
    let mut arc = 0.0;
    for i in 0..original.len() {
        if i > 0 {
            arc += (original[i].0 - original[i - 1].0).hypot(original[i].1 - original[i - 1].1);
        }
        let (prev, next) = (original[i.saturating_sub(1)], original[(i + 1).min(original.len() - 1)]);
        let (tx, ty) = (next.0 - prev.0, next.1 - prev.1);
        let norm = tx.hypot(ty);
        if norm == 0.0 {
            continue;
        }
        let offset = scale * terms.iter().map(|&(omega, phase)| (omega * arc + phase).sin()).sum::<f64>();
        line[i].0 -= offset * ty / norm;
        line[i].1 += offset * tx / norm;
    }
}

/// Draws `template` with every control point (and the slant) displaced by
/// Gaussian noise of standard deviation `amplitude`, in unit-square units,
/// plus a smooth tremor along each stroke of standard deviation
/// `tremor_gain * amplitude`. White background, ink towards 0.
pub fn render_sample<R: Rng + ?Sized>(
    template: &WriterTemplate,
    amplitude: f64,
    rng: &mut R,
    height: usize,
    width: usize,
) -> Result<GrayImage> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::InvalidArgument(format!("render size {height}x{width} is below {MIN_SIDE}x{MIN_SIDE}")));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidArgument(format!("jitter amplitude must be non-negative, got {amplitude}")));
    }
    let noise = Normal::new(0.0, amplitude).expect("amplitude checked");
    let jitter = |v: f64, rng: &mut R| if amplitude > 0.0 { v + noise.sample(rng) } else { v };
    let shear = jitter(template.slant, rng).tan();

    let (h, w) = (height as f64, width as f64);
    let max_radius = template.strokes.iter().map(|s| 0.5 * s.width * h).fold(0.5, f64::max);
    let (mx, my) = ((MARGIN * w).max(max_radius + 2.0), (MARGIN * h).max(max_radius + 2.0));
    let to_pixels = |(u, v): (f64, f64)| {
        let v = v.clamp(0.0, 1.0);
        let u = (u + (0.5 - v) * shear * (h - 2.0 * my) / (w - 2.0 * mx)).clamp(0.0, 1.0);
        (mx + u * (w - 2.0 * mx), my + v * (h - 2.0 * my))
    };

    let mut ink = vec![0f64; height * width];
    for stroke in &template.strokes {
        let points: Vec<(f64, f64)> = stroke.points.iter().map(|&(x, y)| (jitter(x, rng), jitter(y, rng))).collect();
        let radius = (0.5 * stroke.width * h).max(0.5);
        let mut polyline: Vec<(f64, f64)> = std::iter::once(points[0])
            .chain(points.windows(4).step_by(3).flat_map(|seg| {
                (1..=SAMPLES_PER_SEGMENT).map(move |i| cubic(seg, i as f64 / SAMPLES_PER_SEGMENT as f64))
            }))
            .collect();
        let pen = template.unsteadiness;
        add_tremor(&mut polyline, pen.tremor_gain * amplitude, pen.tremor_cycles, rng);
        let polyline: Vec<(f64, f64)> = polyline.into_iter().map(to_pixels).collect();
        for pair in polyline.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let reach = radius + 1.0;
            let x_lo = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
            let x_hi = ((a.0.max(b.0) + reach).ceil() as usize).min(width);
            let y_lo = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
            let y_hi = ((a.1.max(b.1) + reach).ceil() as usize).min(height);
            for y in y_lo..y_hi {
                for x in x_lo..x_hi {
                    let d = segment_distance((x as f64 + 0.5, y as f64 + 0.5), a, b);
                    let cover = (radius + 0.5 - d).clamp(0.0, 1.0);
                    let cell = &mut ink[y * width + x];
                    *cell = cell.max(cover);
                }
            }
        }
    }
    let pixels = ink.iter().map(|&c| (255.0 * (1.0 - c)).round() as u8).collect();
    Ok(GrayImage::from_raw(width as u32, height as u32, pixels).expect("buffer matches dimensions"))
}

/// Fraction of pixels darker than the background.
pub fn ink_fraction(img: &GrayImage) -> f64 {
    img.pixels().filter(|p| p.0[0] < 255).count() as f64 / (img.width() * img.height()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::template::{gen_writer, gen_writer_with, StrokeStyle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_abs_diff(a: &GrayImage, b: &GrayImage) -> f64 {
        a.as_raw().iter().zip(b.as_raw()).map(|(&p, &q)| (f64::from(p) - f64::from(q)).abs()).sum::<f64>()
            / a.as_raw().len() as f64
    }

    #[test]
    fn zero_amplitude_is_deterministic() {
        let t = gen_writer(3);
        let a = render_sample(&t, 0.0, &mut ChaCha8Rng::seed_from_u64(1), 100, 150).unwrap();
        let b = render_sample(&t, 0.0, &mut ChaCha8Rng::seed_from_u64(2), 100, 150).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ink_fraction_and_corners() {
        for style in [StrokeStyle::default(), StrokeStyle::fine()] {
            for seed in 0..30 {
                let t = gen_writer_with(seed, &style);
                let img = render_sample(&t, 0.05, &mut ChaCha8Rng::seed_from_u64(seed), 100, 150).unwrap();
                let f = ink_fraction(&img);
                assert!((0.01..=0.4).contains(&f), "seed {seed}: ink {f}");
                for (x, y) in [(0, 0), (149, 0), (0, 99), (149, 99)] {
                    assert_eq!(img.get_pixel(x, y).0[0], 255);
                }
                assert!(img.as_raw().iter().any(|&p| p < 64), "dark ink present");
            }
        }
    }

    #[test]
    fn larger_amplitude_moves_further() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut small, mut large) = (0.0, 0.0);
        for seed in 0..10 {
            let t = gen_writer(seed);
            let reference = render_sample(&t, 0.0, &mut rng, 64, 96).unwrap();
            small += mean_abs_diff(&reference, &render_sample(&t, 0.01, &mut rng, 64, 96).unwrap());
            large += mean_abs_diff(&reference, &render_sample(&t, 0.04, &mut rng, 64, 96).unwrap());
        }
        assert!(small < large, "{small} vs {large}");
    }

    #[test]
    fn tremor_is_normal_and_bounded() {
        let line: Vec<(f64, f64)> = (0..200).map(|i| (i as f64 / 199.0, 0.5)).collect();
        let mut shaken = line.clone();
        add_tremor(&mut shaken, 0.0, (4.0, 9.0), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(shaken, line);
        let amplitude = 0.02;
        add_tremor(&mut shaken, amplitude, (4.0, 9.0), &mut ChaCha8Rng::seed_from_u64(0));
        let bound = amplitude * (2.0 * TREMOR_TERMS as f64).sqrt();
        for (a, b) in line.iter().zip(&shaken) {
            assert!((a.0 - b.0).abs() < 1e-12);
            assert!((a.1 - b.1).abs() <= bound + 1e-12);
        }
        let rms = (shaken.iter().map(|p| (p.1 - 0.5).powi(2)).sum::<f64>() / shaken.len() as f64).sqrt();
        assert!(rms > 0.3 * amplitude && rms < 2.0 * amplitude, "rms {rms}");
    }

    #[test]
    fn tremor_follows_the_template() {
        let mut t = gen_writer(4);
        let mut calm = t.clone();
        calm.unsteadiness.tremor_gain = 0.0;
        t.unsteadiness.tremor_gain = 3.0;
        let (mut steady, mut shaky) = (0.0, 0.0);
        for seed in 0..10 {
            let reference = render_sample(&calm, 0.0, &mut ChaCha8Rng::seed_from_u64(seed), 64, 96).unwrap();
            steady += mean_abs_diff(
                &reference,
                &render_sample(&calm, 0.02, &mut ChaCha8Rng::seed_from_u64(seed), 64, 96).unwrap(),
            );
            shaky += mean_abs_diff(
                &reference,
                &render_sample(&t, 0.02, &mut ChaCha8Rng::seed_from_u64(seed), 64, 96).unwrap(),
            );
        }
        assert!(steady < shaky, "{steady} vs {shaky}");
    }

    #[test]
    fn too_small() {
        let t = gen_writer(0);
        assert!(render_sample(&t, 0.0, &mut ChaCha8Rng::seed_from_u64(0), 31, 64).is_err());
    }
}
