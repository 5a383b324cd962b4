//! Dense `frames × height × width` scalar volumes and the normalization
//! primitives shared by the weighting pipeline.
//!
//! Data is stored row-major in `(f, h, w)` order. The `.vvol` dump format is
//! a little-endian header of three `u32` (F, H, W) followed by F·H·W `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this spread a min-max normalization is treated as degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }
}

impl From<(usize, usize, usize)> for Shape {
    fn from((f, h, w): (usize, usize, usize)) -> Self {
        Shape::new(f, h, w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoVolume {
    shape: Shape,
    data: Vec<f64>,
}

impl VideoVolume {
    pub fn new(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.frames == 0 || shape.height == 0 || shape.width == 0 {
            return Err(Error::InvalidVolume(format!(
                "every dimension must be >= 1, got {:?}",
                shape.as_tuple()
            )));
        }
        if data.len() != shape.len() {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                shape.frames,
                shape.height,
                shape.width
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: impl Into<Shape>, value: f64) -> Result<Self> {
        let shape = shape.into();
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn zeros(shape: impl Into<Shape>) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Shape>) -> Result<Self> {
        Self::filled(shape, 1.0)
    }

    pub fn from_fn(
        shape: impl Into<Shape>,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.len());
        for fi in 0..shape.frames {
            for h in 0..shape.height {
                for w in 0..shape.width {
                    data.push(f(fi, h, w));
                }
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn frames(&self) -> usize {
        self.shape.frames
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, f: usize, h: usize, w: usize) -> usize {
        (f * self.shape.height + h) * self.shape.width + w
    }

    #[inline]
    pub fn get(&self, f: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(f, h, w)]
    }

    #[inline]
    pub fn set(&mut self, f: usize, h: usize, w: usize, value: f64) {
        let i = self.index(f, h, w);
        self.data[i] = value;
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let n = self.shape.frame_len();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f64] {
        let n = self.shape.frame_len();
        &mut self.data[f * n..(f + 1) * n]
    }

    pub fn frames_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.shape.frame_len())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.as_tuple(),
                actual: other.shape.as_tuple(),
            });
        }
        Ok(())
    }

    pub fn ensure_shape(&self, shape: Shape) -> Result<()> {
        if self.shape != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.as_tuple(),
                actual: self.shape.as_tuple(),
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn mean_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum::<f64>() / self.data.len() as f64
    }

    /// Euclidean norm over all elements.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn write_vvol<W: Write>(&self, mut out: W) -> Result<()> {
        for dim in [self.shape.frames, self.shape.height, self.shape.width] {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::Format(format!("dimension {dim} exceeds u32")))?;
            out.write_all(&dim.to_le_bytes())?;
        }
        for x in &self.data {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_vvol<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 12];
        input
            .read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated .vvol header: {e}")))?;
        let dim = |i: usize| {
            u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize
        };
        let shape = Shape::new(dim(0), dim(1), dim(2));
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != shape.len() * 8 {
            return Err(Error::Format(format!(
                "expected {} payload bytes for {:?}, found {}",
                shape.len() * 8,
                shape.as_tuple(),
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(shape, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_vvol(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_vvol(std::io::BufReader::new(file))
    }
}

/// One scalar per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProfile {
    values: Vec<f64>,
}

impl TemporalProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::MalformedProfile("profile must have at least one frame".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn global_mean(v: &VideoVolume) -> f64 {
    mean(v.as_slice())
}

pub fn spatial_mean(v: &VideoVolume) -> TemporalProfile {
    TemporalProfile {
        values: v.frames_iter().map(mean).collect(),
    }
}

/// Maps values to `[0, 1]` by min-max scaling; a degenerate spread yields all-ones.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::MalformedProfile("empty vector".into()));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::MalformedProfile("non-finite entry".into()));
    }
    let range = hi - lo;
    if range < DEGENERATE_EPS {
        return Ok(vec![1.0; values.len()]);
    }
    Ok(values.iter().map(|&x| (x - lo) / range).collect())
}

pub fn clamp_floor(values: &[f64], floor: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&floor) {
        return Err(Error::config("floor", format!("{floor} is outside [0, 1]")));
    }
    Ok(values.iter().map(|&x| x.max(floor)).collect())
}

pub fn mean_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidWeights("empty vector".into()));
    }
    let m = mean(values);
    if !(m > DEGENERATE_EPS) {
        return Err(Error::InvalidWeights(format!(
            "mean {m} is not strictly positive"
        )));
    }
    Ok(values.iter().map(|&x| x / m).collect())
}

pub fn hadamard(a: &VideoVolume, b: &VideoVolume) -> Result<VideoVolume> {
    a.zip_with(b, |x, y| x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(shape: (usize, usize, usize), data: &[f64]) -> VideoVolume {
        VideoVolume::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn global_mean_examples() {
        assert_eq!(global_mean(&VideoVolume::zeros((2, 2, 2)).unwrap()), 0.0);
        assert_eq!(global_mean(&VideoVolume::ones((3, 4, 4)).unwrap()), 1.0);
        assert_eq!(global_mean(&vol((1, 1, 4), &[1.0, 2.0, 3.0, 6.0])), 3.0);
    }

    #[test]
    fn spatial_mean_examples() {
        let p = spatial_mean(&vol((2, 1, 2), &[1.0, 3.0, 5.0, 7.0]));
        assert_eq!(p.values(), &[2.0, 6.0]);
        let c = spatial_mean(&VideoVolume::filled((3, 2, 2), 0.7).unwrap());
        assert!(c.values().iter().all(|&x| (x - 0.7).abs() < 1e-15));
        let z = spatial_mean(&VideoVolume::zeros((2, 3, 3)).unwrap());
        assert_eq!(z.values(), &[0.0, 0.0]);
    }

    #[test]
    fn minmax_examples() {
        let out = minmax_normalize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        for (a, b) in out.iter().zip([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(minmax_normalize(&[5.0, 5.0, 5.0]).unwrap(), vec![1.0; 3]);
        assert_eq!(minmax_normalize(&[-2.0, 0.0, 2.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(matches!(minmax_normalize(&[]), Err(Error::MalformedProfile(_))));
    }

    #[test]
    fn clamp_floor_examples() {
        assert_eq!(clamp_floor(&[0.0, 0.5, 1.0], 0.2).unwrap(), vec![0.2, 0.5, 1.0]);
        assert_eq!(clamp_floor(&[0.3, 0.9], 0.0).unwrap(), vec![0.3, 0.9]);
        assert_eq!(clamp_floor(&[0.1, 0.1], 1.0).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(clamp_floor(&[0.1], 1.5), Err(Error::Config { .. })));
        assert!(matches!(clamp_floor(&[0.1], -0.1), Err(Error::Config { .. })));
    }

    #[test]
    fn mean_normalize_examples() {
        assert_eq!(mean_normalize(&[1.0; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(mean_normalize(&[2.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        let out = mean_normalize(&[0.2, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        let expected = [0.2 / 0.55, (1.0 / 3.0) / 0.55, (2.0 / 3.0) / 0.55, 1.0 / 0.55];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(mean_normalize(&[0.0, 0.0]), Err(Error::InvalidWeights(_))));
        assert!(matches!(mean_normalize(&[-1.0, 0.5]), Err(Error::InvalidWeights(_))));
    }

    #[test]
    fn hadamard_examples() {
        let v = vol((1, 2, 2), &[1.0, -2.0, 3.5, 4.0]);
        assert_eq!(hadamard(&v, &VideoVolume::ones((1, 2, 2)).unwrap()).unwrap(), v);
        assert_eq!(
            hadamard(&v, &VideoVolume::zeros((1, 2, 2)).unwrap()).unwrap(),
            VideoVolume::zeros((1, 2, 2)).unwrap()
        );
        let p = hadamard(&vol((1, 1, 2), &[2.0, 3.0]), &vol((1, 1, 2), &[4.0, 5.0])).unwrap();
        assert_eq!(p.as_slice(), &[8.0, 15.0]);
        let err = hadamard(&v, &VideoVolume::ones((2, 2, 1)).unwrap());
        assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn construction_rejects_bad_lengths() {
        assert!(VideoVolume::new((2, 2, 2), vec![0.0; 7]).is_err());
        assert!(VideoVolume::new((0, 2, 2), vec![]).is_err());
    }

    #[test]
    fn vvol_layout_is_fixed() {
        let v = vol((1, 1, 2), &[1.0, -0.5]);
        let mut buf = Vec::new();
        v.write_vvol(&mut buf).unwrap();
        assert_eq!(&buf[..12], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&buf[12..20], &1.0f64.to_le_bytes());
        assert_eq!(VideoVolume::read_vvol(&buf[..]).unwrap(), v);
        assert!(VideoVolume::read_vvol(&buf[..19]).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn positive() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..100.0, 1..32)
    }

    proptest! {
        #[test]
        fn mean_normalize_is_idempotent(v in positive()) {
            let once = mean_normalize(&v).unwrap();
            let twice = mean_normalize(&once).unwrap();
            prop_assert!((mean(&once) - 1.0).abs() < 1e-12);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn minmax_lands_in_unit_interval(v in prop::collection::vec(-50.0f64..50.0, 1..32)) {
            let n = minmax_normalize(&v).unwrap();
            prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn minmax_ignores_affine_maps(v in prop::collection::vec(-5.0f64..5.0, 2..16), a in 0.1f64..10.0, b in -10.0f64..10.0) {
            prop_assume!(v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min) > 1e-3);
            let moved: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            for (x, y) in minmax_normalize(&v).unwrap().iter().zip(minmax_normalize(&moved).unwrap()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn hadamard_commutes(data in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 12)) {
            let (a, b): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
            let a = VideoVolume::new((2, 2, 3), a).unwrap();
            let b = VideoVolume::new((2, 2, 3), b).unwrap();
            prop_assert_eq!(hadamard(&a, &b).unwrap(), hadamard(&b, &a).unwrap());
        }
    }
}
