//! Region-blur sweep: blur a growing patch of the lower half frame by frame
//! and watch where the intra weights go.

use serde::Serialize;

use crate::decomposition::{intra_weight_pipeline, IntraWeight};
use crate::error::{Error, Result};
use crate::reward::{apply_region_blur, DegradationSpec, TemplateReward};
use crate::saliency::extract_saliency;
use crate::volume::{Shape, VideoVolume};

/// One spec per frame blurring rows `H/2..H` and the first `⌈W·(f+1)/F⌉` columns.
pub fn growing_lower_half_specs(shape: Shape, radius: usize) -> Vec<DegradationSpec> {
    let (f, h, w) = shape.as_tuple();
    (0..f)
        .map(|i| {
            let cols = (w * (i + 1)).div_ceil(f);
            DegradationSpec::new(i, (h / 2, h), (0, cols), radius)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fig5Frame {
    pub frame: usize,
    pub degraded_area: usize,
    pub temporal_weight: f64,
    /// Saliency summed over rows `H/2..H`.
    pub lower_mass: f64,
    /// Saliency summed over rows `0..H/2`.
    pub upper_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Fig5Report {
    pub frames: Vec<Fig5Frame>,
    pub degraded: VideoVolume,
    pub saliency: VideoVolume,
    pub weights: IntraWeight,
}

impl Fig5Report {
    pub fn temporal(&self) -> &[f64] {
        &self.weights.temporal
    }

    pub const CSV_HEADER: [&'static str; 5] =
        ["frame", "degraded_area", "temporal_weight", "lower_mass", "upper_mass"];

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for f in &self.frames {
            w.write_record([
                f.frame.to_string(),
                f.degraded_area.to_string(),
                f.temporal_weight.to_string(),
                f.lower_mass.to_string(),
                f.upper_mass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn fig5_sweep(
    base: &VideoVolume,
    specs: &[DegradationSpec],
    reward: &TemplateReward,
    temporal_floor: f64,
    spatial_floor: f64,
) -> Result<Fig5Report> {
    if specs.len() != base.frames() {
        return Err(Error::Degradation(format!(
            "{} specs for {} frames",
            specs.len(),
            base.frames()
        )));
    }
    let mut degraded = base.clone();
    let mut prev_area = 0;
    for (i, spec) in specs.iter().enumerate() {
        if spec.frame != i {
            return Err(Error::Degradation(format!("spec {i} targets frame {}", spec.frame)));
        }
        if spec.area() < prev_area {
            return Err(Error::Degradation(format!(
                "degraded area shrinks at frame {i} ({} < {prev_area})",
                spec.area()
            )));
        }
        prev_area = spec.area();
        degraded = apply_region_blur(&degraded, spec)?;
    }

    let (saliency, _) = extract_saliency(reward, &degraded)?;
    let weights = intra_weight_pipeline(&saliency, temporal_floor, spatial_floor)?;
    let (h, w) = (base.height(), base.width());
    let frames = specs
        .iter()
        .enumerate()
        .map(|(f, spec)| {
            let frame = saliency.frame(f);
            let split = (h / 2) * w;
            Fig5Frame {
                frame: f,
                degraded_area: spec.area(),
                temporal_weight: weights.temporal[f],
                lower_mass: frame[split..].iter().sum(),
                upper_mass: frame[..split].iter().sum(),
            }
        })
        .collect();
    Ok(Fig5Report {
        frames,
        degraded,
        saliency,
        weights,
    })
}
