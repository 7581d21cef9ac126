//! Threshold sweep, balanced accuracy and error rates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::distances::DistanceRecord;
use crate::data::{DISSIMILAR, SIMILAR};
use crate::error::{Error, Result};

/// Default sweep resolution.
pub const DEFAULT_STEP: f64 = 0.01;
const MAX_SWEEP_POINTS: f64 = 1e7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub d: f64,
    pub tpr: f64,
    pub tnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    /// `max_d ½(TPR(d) + TNR(d))`.
    pub accuracy: f64,
    pub far: f64,
    pub frr: f64,
    pub similar: usize,
    pub dissimilar: usize,
    pub curve: Vec<SweepPoint>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `d<TAB>TPR<TAB>TNR` per sweep point, after a header line.
    pub fn curve_tsv(&self) -> String {
        let mut out = String::from("d\tTPR\tTNR\n");
        for p in &self.curve {
            let _ = writeln!(out, "{}\t{}\t{}", p.d, p.tpr, p.tnr);
        }
        out
    }
}

/// Distances of each class, sorted ascending.
struct Classes {
    similar: Vec<f64>,
    dissimilar: Vec<f64>,
}

impl Classes {
    fn split(records: &[DistanceRecord]) -> Result<Self> {
        let mut similar = Vec::new();
        let mut dissimilar = Vec::new();
        for r in records {
            if !(r.distance >= 0.0 && r.distance.is_finite()) {
                return Err(Error::InvalidArgument(format!("pair {} has invalid distance {}", r.pair, r.distance)));
            }
            match r.y {
                SIMILAR => similar.push(r.distance),
                DISSIMILAR => dissimilar.push(r.distance),
                y => return Err(Error::InvalidArgument(format!("pair {} has label {y}", r.pair))),
            }
        }
        if similar.is_empty() || dissimilar.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "need both classes, got {} similar and {} dissimilar",
                similar.len(),
                dissimilar.len()
            )));
        }
        similar.sort_by(f64::total_cmp);
        dissimilar.sort_by(f64::total_cmp);
        Ok(Classes { similar, dissimilar })
    }

    fn at_or_below(sorted: &[f64], d: f64) -> usize {
        sorted.partition_point(|&v| v <= d)
    }

    fn point(&self, d: f64) -> SweepPoint {
        let tp = Self::at_or_below(&self.similar, d);
        let fp = Self::at_or_below(&self.dissimilar, d);
        SweepPoint {
            d,
            tpr: tp as f64 / self.similar.len() as f64,
            tnr: (self.dissimilar.len() - fp) as f64 / self.dissimilar.len() as f64,
        }
    }
}

/// Rates at threshold `d`, accepting pairs with distance `<= d`.
///
/// FAR is the fraction of dissimilar pairs accepted, FRR the fraction of
/// similar pairs rejected.
pub fn far_frr(records: &[DistanceRecord], d: f64) -> Result<(f64, f64)> {
    let p = Classes::split(records)?.point(d);
    Ok((1.0 - p.tnr, 1.0 - p.tpr))
}

/// Thresholds `min, min + step, …` below the largest distance, then the
/// largest distance itself.
fn grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    let span = (max - min) / step;
    if span > MAX_SWEEP_POINTS {
        return Err(Error::InvalidArgument(format!("sweep from {min} to {max} in steps of {step} is too fine")));
    }
    let mut out: Vec<f64> =
        (0..=span.floor() as usize).map(|i| min + i as f64 * step).take_while(|&d| d < max).collect();
    out.push(max);
    Ok(out)
}

/// Sweeps `d` from the smallest to the largest observed distance and keeps
/// the threshold with the highest balanced accuracy; ties go to the
/// smaller threshold.
pub fn threshold_sweep(records: &[DistanceRecord], step: f64) -> Result<EvalReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("sweep step must be positive, got {step}")));
    }
    let classes = Classes::split(records)?;
    let min = classes.similar[0].min(classes.dissimilar[0]);
    let max = classes.similar[classes.similar.len() - 1].max(classes.dissimilar[classes.dissimilar.len() - 1]);
    let curve: Vec<SweepPoint> = grid(min, max, step)?.into_iter().map(|d| classes.point(d)).collect();

    let mut best = curve[0];
    for p in &curve[1..] {
        if p.tpr + p.tnr > best.tpr + best.tnr {
            best = *p;
        }
    }
    Ok(EvalReport {
        threshold: best.d,
        accuracy: 0.5 * (best.tpr + best.tnr),
        far: 1.0 - best.tnr,
        frr: 1.0 - best.tpr,
        similar: classes.similar.len(),
        dissimilar: classes.dissimilar.len(),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(similar: &[f64], dissimilar: &[f64]) -> Vec<DistanceRecord> {
        let tagged = similar.iter().map(|&d| (SIMILAR, d)).chain(dissimilar.iter().map(|&d| (DISSIMILAR, d)));
        tagged.enumerate().map(|(pair, (y, distance))| DistanceRecord { pair, y, distance }).collect()
    }

    /// Balanced accuracy maximized over every distinct cut of the data.
    fn brute_force(recs: &[DistanceRecord]) -> f64 {
        let mut cuts: Vec<f64> = recs.iter().map(|r| r.distance).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut thresholds = vec![cuts[0] - 1.0];
        thresholds.extend(cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        thresholds.push(cuts[cuts.len() - 1] + 1.0);
        let count = |y: u8| recs.iter().filter(|r| r.y == y).count() as f64;
        thresholds
            .iter()
            .map(|&t| {
                let tp = recs.iter().filter(|r| r.y == SIMILAR && r.distance <= t).count() as f64;
                let tn = recs.iter().filter(|r| r.y == DISSIMILAR && r.distance > t).count() as f64;
                0.5 * (tp / count(SIMILAR) + tn / count(DISSIMILAR))
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn separated_sets() {
        let r = threshold_sweep(&records(&[0.1, 0.2], &[0.8, 0.9]), DEFAULT_STEP).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!((r.threshold - 0.2).abs() < 1e-12, "{}", r.threshold);
        assert_eq!((r.far, r.frr), (0.0, 0.0));
        assert_eq!(far_frr(&records(&[0.1, 0.2], &[0.8, 0.9]), r.threshold).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn coincident_distances() {
        let r = threshold_sweep(&records(&[0.5], &[0.5]), DEFAULT_STEP).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.curve.len(), 1);
    }

    #[test]
    fn inverted_labels() {
        let r = threshold_sweep(&records(&[0.8, 0.9], &[0.1, 0.2]), DEFAULT_STEP).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.accuracy, brute_force(&records(&[0.8, 0.9], &[0.1, 0.2])));
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(threshold_sweep(&records(&[0.1, 0.2], &[]), DEFAULT_STEP).is_err());
        assert!(far_frr(&records(&[], &[0.3]), 0.1).is_err());
        assert!(threshold_sweep(&records(&[0.1], &[0.2]), 0.0).is_err());
    }

    #[test]
    fn extreme_thresholds() {
        let recs = records(&[0.3, 0.4], &[0.6, 0.7]);
        assert_eq!(far_frr(&recs, 0.0).unwrap(), (0.0, 1.0));
        assert_eq!(far_frr(&recs, 10.0).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn grid_includes_both_ends() {
        let r = threshold_sweep(&records(&[0.0], &[0.055]), DEFAULT_STEP).unwrap();
        let ds: Vec<f64> = r.curve.iter().map(|p| p.d).collect();
        assert_eq!(ds.len(), 7);
        assert_eq!(ds[0], 0.0);
        assert_eq!(ds[6], 0.055);
        assert!(r.curve_tsv().starts_with("d\tTPR\tTNR\n0\t1\t1\n"));
    }

    fn record_set() -> impl Strategy<Value = Vec<DistanceRecord>> {
        (1usize..40, 1usize..40, 0.1f64..4.0).prop_flat_map(|(ns, nd, scale)| {
            (prop::collection::vec(0.0..scale, ns), prop::collection::vec(0.0..scale, nd))
                .prop_map(|(s, d)| records(&s, &d))
        })
    }

    proptest! {
        #[test]
        fn never_beats_brute_force(recs in record_set()) {
            let r = threshold_sweep(&recs, DEFAULT_STEP).unwrap();
            prop_assert!(r.accuracy <= brute_force(&recs) + 1e-12);
            prop_assert!(r.accuracy >= 0.5);
            prop_assert!((r.far - (1.0 - r.curve.iter().find(|p| p.d == r.threshold).unwrap().tnr)).abs() < 1e-12);
        }

        #[test]
        fn rates_are_monotone(recs in record_set(), a in 0.0f64..4.0, b in 0.0f64..4.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            let (far_lo, frr_lo) = far_frr(&recs, lo).unwrap();
            let (far_hi, frr_hi) = far_frr(&recs, hi).unwrap();
            prop_assert!(far_lo <= far_hi);
            prop_assert!(frr_lo >= frr_hi);
        }

        #[test]
        fn exact_on_step_aligned_distances(
            s in prop::collection::vec(0u32..300, 1..50),
            d in prop::collection::vec(0u32..300, 1..50),
        ) {
            // Distinct distances at least one step apart leave no cut unvisited.
            let to_d = |v: &Vec<u32>| v.iter().map(|&k| f64::from(k) * 0.02).collect::<Vec<_>>();
            let recs = records(&to_d(&s), &to_d(&d));
            let r = threshold_sweep(&recs, DEFAULT_STEP).unwrap();
            prop_assert!((r.accuracy - brute_force(&recs)).abs() < 1e-12);
        }
    }
}
