use crate::error::{Error, Result};
use crate::reward::DifferentiableReward;
use crate::volume::{Shape, VideoVolume};

/// Mean squared 5-point Laplacian over interior points of every frame.
pub fn laplacian_energy(v: &VideoVolume) -> Result<f64> {
    let (energy, _) = laplacian_field(v)?;
    Ok(energy)
}

fn interior_count(shape: Shape) -> Result<usize> {
    if shape.height < 3 || shape.width < 3 {
        return Err(Error::Reward(format!(
            "sharpness needs H >= 3 and W >= 3, got {}x{}",
            shape.height, shape.width
        )));
    }
    Ok(shape.frames * (shape.height - 2) * (shape.width - 2))
}

/// Returns the energy and the Laplacian at each interior point (zero on the border).
fn laplacian_field(v: &VideoVolume) -> Result<(f64, VideoVolume)> {
    let shape = v.shape();
    let n = interior_count(shape)?;
    let mut lap = VideoVolume::zeros(shape)?;
    let mut sum = 0.0;
    for f in 0..shape.frames {
        for h in 1..shape.height - 1 {
            for w in 1..shape.width - 1 {
                let l = v.get(f, h - 1, w) + v.get(f, h + 1, w) + v.get(f, h, w - 1)
                    + v.get(f, h, w + 1)
                    - 4.0 * v.get(f, h, w);
                lap.set(f, h, w, l);
                sum += l * l;
            }
        }
    }
    Ok((sum / n as f64, lap))
}

/// Visual-quality proxy: `1 − exp(−E/s)` with `E` the Laplacian energy.
#[derive(Debug, Clone)]
pub struct SharpnessReward {
    scale: f64,
}

impl SharpnessReward {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("scale", "sharpness scale must be > 0"));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl DifferentiableReward for SharpnessReward {
    fn score(&self, v: &VideoVolume) -> Result<f64> {
        let e = laplacian_energy(v)?;
        Ok(1.0 - (-e / self.scale).exp())
    }

    fn gradient(&self, v: &VideoVolume) -> Result<VideoVolume> {
        let shape = v.shape();
        let n = interior_count(shape)?;
        let (e, lap) = laplacian_field(v)?;
        let outer = (-e / self.scale).exp() / self.scale * 2.0 / n as f64;
        // Transposed stencil: scatter each interior Laplacian to its five taps.
        let mut grad = VideoVolume::zeros(shape)?;
        for f in 0..shape.frames {
            for h in 1..shape.height - 1 {
                for w in 1..shape.width - 1 {
                    let c = outer * lap.get(f, h, w);
                    for (hh, ww) in [(h - 1, w), (h + 1, w), (h, w - 1), (h, w + 1)] {
                        let i = grad.index(f, hh, ww);
                        grad.as_mut_slice()[i] += c;
                    }
                    let i = grad.index(f, h, w);
                    grad.as_mut_slice()[i] -= 4.0 * c;
                }
            }
        }
        Ok(grad)
    }
}

/// Motion-quality proxy: `exp(−(M − m*)² / s²)` where `M` is the mean squared
/// frame-to-frame difference.
#[derive(Debug, Clone)]
pub struct MotionReward {
    target: f64,
    width: f64,
}

impl MotionReward {
    pub fn new(target: f64, width: f64) -> Result<Self> {
        if !(target >= 0.0 && target.is_finite()) {
            return Err(Error::config("target", "motion target must be >= 0"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::config("width", "motion width must be > 0"));
        }
        Ok(Self { target, width })
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Mean squared temporal difference.
    pub fn motion_energy(v: &VideoVolume) -> Result<f64> {
        if v.frames() < 2 {
            return Err(Error::Reward("motion needs at least 2 frames".into()));
        }
        let mut sum = 0.0;
        for f in 0..v.frames() - 1 {
            for (a, b) in v.frame(f).iter().zip(v.frame(f + 1)) {
                let d = b - a;
                sum += d * d;
            }
        }
        Ok(sum / ((v.frames() - 1) * v.shape().frame_len()) as f64)
    }
}

impl DifferentiableReward for MotionReward {
    fn score(&self, v: &VideoVolume) -> Result<f64> {
        let m = Self::motion_energy(v)?;
        let z = (m - self.target) / self.width;
        Ok((-z * z).exp())
    }

    fn gradient(&self, v: &VideoVolume) -> Result<VideoVolume> {
        let m = Self::motion_energy(v)?;
        let r = (-((m - self.target) / self.width).powi(2)).exp();
        let count = ((v.frames() - 1) * v.shape().frame_len()) as f64;
        let outer = r * (-2.0 * (m - self.target) / (self.width * self.width)) * 2.0 / count;
        let mut grad = VideoVolume::zeros(v.shape())?;
        let n = v.shape().frame_len();
        for f in 0..v.frames() - 1 {
            for i in 0..n {
                let d = v.frame(f + 1)[i] - v.frame(f)[i];
                grad.frame_mut(f + 1)[i] += outer * d;
                grad.frame_mut(f)[i] -= outer * d;
            }
        }
        Ok(grad)
    }
}

/// Alignment proxy: `exp(−D/s)` with `D` the mean squared distance to a reference.
#[derive(Debug, Clone)]
pub struct TemplateReward {
    reference: VideoVolume,
    width: f64,
}

impl TemplateReward {
    pub fn new(reference: VideoVolume, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::config("width", "template width must be > 0"));
        }
        Ok(Self { reference, width })
    }

    pub fn reference(&self) -> &VideoVolume {
        &self.reference
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    fn distance(&self, v: &VideoVolume) -> Result<f64> {
        self.reference.ensure_same_shape(v)?;
        let sum: f64 = v
            .as_slice()
            .iter()
            .zip(self.reference.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / v.len() as f64)
    }
}

impl DifferentiableReward for TemplateReward {
    fn score(&self, v: &VideoVolume) -> Result<f64> {
        Ok((-self.distance(v)? / self.width).exp())
    }

    fn gradient(&self, v: &VideoVolume) -> Result<VideoVolume> {
        let r = self.score(v)?;
        let c = r * (-2.0 / (self.width * v.len() as f64));
        v.zip_with(&self.reference, |a, b| c * (a - b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{finite_diff_gradient, max_norm_relative_error};
    use crate::rng;

    fn random(shape: (usize, usize, usize), seed: u64) -> VideoVolume {
        rng::uniform_volume(shape.into(), &mut rng::seeded(seed), 0.0, 1.0)
    }

    #[test]
    fn sharpness_of_constant_is_zero() {
        let r = SharpnessReward::new(1.0).unwrap();
        let v = VideoVolume::filled((2, 5, 5), 0.3).unwrap();
        assert_eq!(r.score(&v).unwrap(), 0.0);
        assert_eq!(r.gradient(&v).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn sharpness_requires_interior() {
        let r = SharpnessReward::new(1.0).unwrap();
        let v = VideoVolume::ones((1, 2, 5)).unwrap();
        assert!(matches!(r.score(&v), Err(Error::Reward(_))));
        assert!(r.gradient(&VideoVolume::ones((1, 5, 2)).unwrap()).is_err());
    }

    #[test]
    fn sharpness_gradient_matches_finite_differences() {
        let r = SharpnessReward::new(1.0).unwrap();
        let v = random((2, 4, 4), 11);
        let fd = finite_diff_gradient(&r, &v, 1e-5).unwrap();
        let err = max_norm_relative_error(&r.gradient(&v).unwrap(), &fd).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn motion_static_video() {
        let v = VideoVolume::filled((3, 4, 4), 0.5).unwrap();
        let at_optimum = MotionReward::new(0.0, 0.3).unwrap();
        assert_eq!(at_optimum.score(&v).unwrap(), 1.0);
        assert_eq!(at_optimum.gradient(&v).unwrap().max_abs(), 0.0);
        let off = MotionReward::new(0.2, 0.3).unwrap();
        let expected = (-(0.2f64 * 0.2) / (0.3 * 0.3)).exp();
        assert!((off.score(&v).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn motion_needs_two_frames() {
        let r = MotionReward::new(0.1, 0.2).unwrap();
        assert!(matches!(
            r.score(&VideoVolume::ones((1, 4, 4)).unwrap()),
            Err(Error::Reward(_))
        ));
    }

    #[test]
    fn motion_gradient_matches_finite_differences() {
        let r = MotionReward::new(0.1, 0.2).unwrap();
        let v = random((3, 4, 4), 12);
        let fd = finite_diff_gradient(&r, &v, 1e-5).unwrap();
        let err = max_norm_relative_error(&r.gradient(&v).unwrap(), &fd).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn template_optimum_and_decay() {
        let t = random((2, 4, 4), 3);
        let r = TemplateReward::new(t.clone(), 0.5).unwrap();
        assert_eq!(r.score(&t).unwrap(), 1.0);
        assert_eq!(r.gradient(&t).unwrap().max_abs(), 0.0);
        let far = t.map(|x| x + 100.0);
        assert!(r.score(&far).unwrap() < 1e-300);
        assert!(r.score(&VideoVolume::ones((2, 4, 3)).unwrap()).is_err());
    }

    #[test]
    fn template_gradient_matches_finite_differences() {
        let r = TemplateReward::new(random((2, 4, 4), 5), 1.0).unwrap();
        let v = random((2, 4, 4), 6);
        let fd = finite_diff_gradient(&r, &v, 1e-5).unwrap();
        let err = max_norm_relative_error(&r.gradient(&v).unwrap(), &fd).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn template_gradient_support() {
        let t = random((1, 3, 3), 8);
        let mut v = t.clone();
        v.set(0, 1, 1, v.get(0, 1, 1) + 0.5);
        v.set(0, 2, 0, v.get(0, 2, 0) - 0.25);
        let g = TemplateReward::new(t.clone(), 1.0).unwrap().gradient(&v).unwrap();
        for i in 0..v.len() {
            assert_eq!(g.as_slice()[i] != 0.0, v.as_slice()[i] != t.as_slice()[i]);
        }
    }

    #[test]
    fn constructors_validate() {
        assert!(SharpnessReward::new(0.0).is_err());
        assert!(MotionReward::new(-1.0, 1.0).is_err());
        assert!(MotionReward::new(0.0, 0.0).is_err());
        assert!(TemplateReward::new(VideoVolume::ones((1, 1, 1)).unwrap(), -2.0).is_err());
    }
}
