//! Factored spatiotemporal weights.
//!
//! The combined saliency volume is split into a per-frame temporal weight and
//! a per-frame-normalized spatial weight. Both are floored so nothing is
//! suppressed entirely, mean-normalized to 1, then multiplied and globally
//! renormalized into `W_intra`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::{
    clamp_floor, global_mean, mean, mean_normalize, minmax_normalize, spatial_mean, Shape,
    TemporalProfile, VideoVolume,
};

pub const DEFAULT_TEMPORAL_FLOOR: f64 = 0.20;
pub const DEFAULT_SPATIAL_FLOOR: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Floors {
    /// `None` when the temporal factor was not applied.
    pub temporal: Option<f64>,
    pub spatial: f64,
}

pub(crate) fn check_floor(key: &str, floor: f64) -> Result<()> {
    if floor > 0.0 && floor <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("{floor} is outside (0, 1]")))
    }
}

/// Composed per-element weight map with both factors retained.
#[derive(Debug, Clone)]
pub struct IntraWeight {
    pub temporal: Vec<f64>,
    pub spatial: VideoVolume,
    pub composed: VideoVolume,
    pub floors: Option<Floors>,
}

impl IntraWeight {
    /// All-ones weights, i.e. plain unweighted distillation.
    pub fn uniform(shape: Shape) -> Result<Self> {
        Ok(Self {
            temporal: vec![1.0; shape.frames],
            spatial: VideoVolume::ones(shape)?,
            composed: VideoVolume::ones(shape)?,
            floors: None,
        })
    }

    pub fn shape(&self) -> Shape {
        self.composed.shape()
    }

    /// Checks the mean-one and positivity invariants at tolerance `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let fail = |what: String| Err(Error::InvalidWeights(what));
        let mt = mean(&self.temporal);
        if (mt - 1.0).abs() > tol {
            return fail(format!("temporal mean {mt} differs from 1"));
        }
        for (f, frame) in self.spatial.frames_iter().enumerate() {
            let m = mean(frame);
            if (m - 1.0).abs() > tol {
                return fail(format!("spatial mean of frame {f} is {m}"));
            }
        }
        let mc = global_mean(&self.composed);
        if (mc - 1.0).abs() > tol {
            return fail(format!("composed mean {mc} differs from 1"));
        }
        let positive = |xs: &[f64]| xs.iter().all(|&x| x > 0.0 && x.is_finite());
        if !(positive(&self.temporal)
            && positive(self.spatial.as_slice())
            && positive(self.composed.as_slice()))
        {
            return fail("weights must be finite and strictly positive".into());
        }
        Ok(())
    }
}

pub fn temporal_weights(profile: &TemporalProfile, floor: f64) -> Result<Vec<f64>> {
    check_floor("tau_min", floor)?;
    let scaled = minmax_normalize(profile.values())?;
    mean_normalize(&clamp_floor(&scaled, floor)?)
}

fn normalize_frame(frame: &[f64], floor: f64) -> Result<Vec<f64>> {
    let scaled = minmax_normalize(frame)?;
    mean_normalize(&clamp_floor(&scaled, floor)?)
}

/// Per-frame min-max, floor and mean-normalization of a saliency volume.
pub fn spatial_weights(saliency: &VideoVolume, floor: f64) -> Result<VideoVolume> {
    check_floor("sigma_min", floor)?;
    let frames: Vec<&[f64]> = saliency.frames_iter().collect();
    let normalized: Vec<Vec<f64>> = frames
        .par_iter()
        .map(|frame| normalize_frame(frame, floor))
        .collect::<Result<_>>()?;
    VideoVolume::new(saliency.shape(), normalized.concat())
}

pub fn compose_intra(temporal: &[f64], spatial: &VideoVolume) -> Result<IntraWeight> {
    if temporal.len() != spatial.frames() {
        return Err(Error::InvalidWeights(format!(
            "temporal length {} does not match {} frames",
            temporal.len(),
            spatial.frames()
        )));
    }
    let n = spatial.shape().frame_len();
    let mut product = spatial.clone();
    for (i, x) in product.as_mut_slice().iter_mut().enumerate() {
        *x *= temporal[i / n];
    }
    let m = global_mean(&product);
    if !(m > 0.0) {
        return Err(Error::InvalidWeights(format!("product mean {m} is not positive")));
    }
    Ok(IntraWeight {
        temporal: temporal.to_vec(),
        spatial: spatial.clone(),
        composed: product.map(|x| x / m),
        floors: None,
    })
}

/// Temporal profile → temporal weights, per-frame spatial weights, composition.
pub fn intra_weight_pipeline(
    combined: &VideoVolume,
    temporal_floor: f64,
    spatial_floor: f64,
) -> Result<IntraWeight> {
    let temporal = temporal_weights(&spatial_mean(combined), temporal_floor)?;
    let spatial = spatial_weights(combined, spatial_floor)?;
    let mut w = compose_intra(&temporal, &spatial)?;
    w.floors = Some(Floors {
        temporal: Some(temporal_floor),
        spatial: spatial_floor,
    });
    Ok(w)
}

/// Spatial factor only: temporal weights held at one.
pub fn spatial_only_pipeline(combined: &VideoVolume, spatial_floor: f64) -> Result<IntraWeight> {
    let spatial = spatial_weights(combined, spatial_floor)?;
    let mut w = compose_intra(&vec![1.0; combined.frames()], &spatial)?;
    w.floors = Some(Floors {
        temporal: None,
        spatial: spatial_floor,
    });
    Ok(w)
}

pub fn population_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn temporal_examples() {
        let p = TemporalProfile::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = temporal_weights(&p, 0.2).unwrap();
        close(&w, &[0.2 / 0.55, (1.0 / 3.0) / 0.55, (2.0 / 3.0) / 0.55, 1.0 / 0.55], 1e-12);
        let c = TemporalProfile::new(vec![0.3; 5]).unwrap();
        assert_eq!(temporal_weights(&c, 0.2).unwrap(), vec![1.0; 5]);
        assert_eq!(temporal_weights(&p, 1.0).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn floors_must_be_positive() {
        let p = TemporalProfile::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(temporal_weights(&p, 0.0), Err(Error::Config { .. })));
        let v = VideoVolume::ones((1, 2, 2)).unwrap();
        assert!(matches!(spatial_weights(&v, 0.0), Err(Error::Config { .. })));
        assert!(spatial_weights(&v, 1.5).is_err());
    }

    #[test]
    fn spatial_examples() {
        let s = VideoVolume::new((1, 2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let w = spatial_weights(&s, 0.15).unwrap();
        let (lo, hi) = (0.15 / 0.575, 1.0 / 0.575);
        close(w.as_slice(), &[lo, hi, hi, lo], 1e-12);

        let c = VideoVolume::filled((2, 3, 3), 4.2).unwrap();
        assert_eq!(spatial_weights(&c, 0.15).unwrap(), VideoVolume::ones((2, 3, 3)).unwrap());
    }

    #[test]
    fn spatial_frames_are_independent() {
        let s = rng::uniform_volume((3, 4, 4).into(), &mut rng::seeded(3), 0.0, 1.0);
        let mut scaled = s.clone();
        for x in scaled.frame_mut(2) {
            *x *= 7.5;
        }
        for x in scaled.frame_mut(0) {
            *x = *x * 0.01 + 3.0;
        }
        let a = spatial_weights(&s, 0.15).unwrap();
        let b = spatial_weights(&scaled, 0.15).unwrap();
        assert_eq!(a.frame(1), b.frame(1));
    }

    #[test]
    fn compose_examples() {
        let ones = VideoVolume::ones((2, 1, 2)).unwrap();
        let w = compose_intra(&[1.0, 1.0], &ones).unwrap();
        assert_eq!(w.composed, ones);

        let w = compose_intra(&[0.5, 1.5], &ones).unwrap();
        assert_eq!(w.composed.as_slice(), &[0.5, 0.5, 1.5, 1.5]);

        let sp = VideoVolume::new((2, 1, 2), vec![0.4, 1.6, 0.8, 1.2]).unwrap();
        let w = compose_intra(&[0.5, 1.5], &sp).unwrap();
        close(w.composed.as_slice(), &[0.2, 0.8, 1.2, 1.8], 1e-12);

        assert!(compose_intra(&[1.0], &sp).is_err());
    }

    #[test]
    fn pipeline_on_constant_volume_is_uniform() {
        let c = VideoVolume::filled((3, 4, 4), 0.25).unwrap();
        let w = intra_weight_pipeline(&c, 0.2, 0.15).unwrap();
        assert_eq!(w.temporal, vec![1.0; 3]);
        assert_eq!(w.spatial, VideoVolume::ones((3, 4, 4)).unwrap());
        assert_eq!(w.composed, VideoVolume::ones((3, 4, 4)).unwrap());
    }

    #[test]
    fn high_saliency_frame_gets_max_temporal_weight() {
        let mut s = rng::uniform_volume((4, 5, 5).into(), &mut rng::seeded(5), 0.0, 0.1);
        for x in s.frame_mut(2) {
            *x += 1.0;
        }
        let w = intra_weight_pipeline(&s, 0.2, 0.15).unwrap();
        let max = w.temporal.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(w.temporal[2], max);
    }

    #[test]
    fn pipeline_invariants_on_seeded_volume() {
        let s = rng::uniform_volume((4, 8, 8).into(), &mut rng::seeded(6), 0.0, 1.0);
        let w = intra_weight_pipeline(&s, DEFAULT_TEMPORAL_FLOOR, DEFAULT_SPATIAL_FLOOR).unwrap();
        w.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn spatial_minimum_lands_on_saliency_minimum() {
        let s = rng::uniform_volume((2, 4, 4).into(), &mut rng::seeded(8), 0.0, 1.0);
        let w = spatial_weights(&s, 0.15).unwrap();
        for f in 0..2 {
            let argmin = |xs: &[f64]| {
                xs.iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap()
            };
            let i = argmin(s.frame(f));
            let wmin = w.frame(f).iter().cloned().fold(f64::MAX, f64::min);
            assert_eq!(w.frame(f)[i], wmin);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn temporal_weights_ignore_profile_scale(v in prop::collection::vec(0.0f64..10.0, 2..12), k in 0.1f64..50.0) {
            let p = TemporalProfile::new(v.clone()).unwrap();
            let q = TemporalProfile::new(v.iter().map(|x| x * k).collect()).unwrap();
            let a = temporal_weights(&p, 0.2).unwrap();
            let b = temporal_weights(&q, 0.2).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn pipeline_weights_are_positive_and_unit_mean(
            data in prop::collection::vec(0.0f64..5.0, 48),
            tau_min in 0.05f64..0.9,
            sigma_min in 0.05f64..0.9,
        ) {
            let s = VideoVolume::new((3, 4, 4), data).unwrap();
            let w = intra_weight_pipeline(&s, tau_min, sigma_min).unwrap();
            prop_assert!(w.check_invariants(1e-9).is_ok());
            prop_assert!(w.composed.as_slice().iter().all(|&x| x > 0.0));
        }

        #[test]
        fn higher_temporal_floor_never_adds_variance(v in prop::collection::vec(0.0f64..1.0, 2..16), lo in 0.05f64..0.5, extra in 0.0f64..0.45) {
            let p = TemporalProfile::new(v).unwrap();
            let a = population_variance(&temporal_weights(&p, lo).unwrap());
            let b = population_variance(&temporal_weights(&p, lo + extra).unwrap());
            prop_assert!(b <= a + 1e-12);
        }
    }
}
