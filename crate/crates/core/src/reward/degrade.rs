use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::VideoVolume;

/// A box blur applied to the rectangle `rows × cols` of one frame.
///
/// Ranges are half-open. An empty rectangle is a valid no-op degradation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub frame: usize,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub radius: usize,
}

impl DegradationSpec {
    pub fn new(frame: usize, rows: (usize, usize), cols: (usize, usize), radius: usize) -> Self {
        Self {
            frame,
            rows,
            cols,
            radius,
        }
    }

    pub fn area(&self) -> usize {
        self.rows.1.saturating_sub(self.rows.0) * self.cols.1.saturating_sub(self.cols.0)
    }

    pub fn validate(&self, v: &VideoVolume) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::Degradation("blur radius must be >= 1".into()));
        }
        if self.frame >= v.frames() {
            return Err(Error::Degradation(format!(
                "frame {} out of range for {} frames",
                self.frame,
                v.frames()
            )));
        }
        let (h0, h1) = self.rows;
        let (w0, w1) = self.cols;
        if h0 > h1 || h1 > v.height() || w0 > w1 || w1 > v.width() {
            return Err(Error::Degradation(format!(
                "region rows {h0}..{h1} cols {w0}..{w1} exceeds {}x{} frame",
                v.height(),
                v.width()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, h: usize, w: usize) -> bool {
        (self.rows.0..self.rows.1).contains(&h) && (self.cols.0..self.cols.1).contains(&w)
    }
}

/// Blurs the region with a normalized box kernel of the given radius.
///
/// The kernel window is clipped to the region and renormalized, so pixels
/// outside the region never leak in and a kernel that spans the whole region
/// replaces it with its mean.
pub fn apply_region_blur(v: &VideoVolume, spec: &DegradationSpec) -> Result<VideoVolume> {
    spec.validate(v)?;
    let mut out = v.clone();
    let (h0, h1) = spec.rows;
    let (w0, w1) = spec.cols;
    let k = spec.radius;
    for h in h0..h1 {
        let (a0, a1) = (h.saturating_sub(k).max(h0), (h + k + 1).min(h1));
        for w in w0..w1 {
            let (b0, b1) = (w.saturating_sub(k).max(w0), (w + k + 1).min(w1));
            let mut sum = 0.0;
            for hh in a0..a1 {
                for ww in b0..b1 {
                    sum += v.get(spec.frame, hh, ww);
                }
            }
            out.set(spec.frame, h, w, sum / ((a1 - a0) * (b1 - b0)) as f64);
        }
    }
    Ok(out)
}
