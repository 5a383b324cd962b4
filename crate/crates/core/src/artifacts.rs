//! Plain-text artifact writers: PGM heatmaps and small CSV tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::volume::{VideoVolume, DEGENERATE_EPS};

/// ASCII P2 image of one frame, min-max scaled to `0..=255`. A constant frame
/// renders as all zeros.
pub fn frame_pgm(v: &VideoVolume, frame: usize) -> String {
    let (h, w) = (v.height(), v.width());
    let data = v.frame(frame);
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    let mut out = format!("P2\n{w} {h}\n255\n");
    for row in data.chunks(w) {
        let line: Vec<String> = row
            .iter()
            .map(|&x| {
                let level = if spread > DEGENERATE_EPS {
                    ((x - lo) / spread * 255.0).round()
                } else {
                    0.0
                };
                (level as u8).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Writes `{prefix}_{f:03}.pgm` for every frame.
pub fn write_frame_pgms(v: &VideoVolume, dir: &Path, prefix: &str) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(v.frames());
    for f in 0..v.frames() {
        let name = format!("{prefix}_{f:03}.pgm");
        fs::write(dir.join(&name), frame_pgm(v, f))?;
        names.push(name);
    }
    Ok(names)
}

pub fn write_temporal_csv<W: Write>(weights: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame", "weight"])?;
    for (f, x) in weights.iter().enumerate() {
        w.write_record([f.to_string(), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_is_scaled_per_frame() {
        let v = VideoVolume::new((2, 1, 3), vec![0.0, 0.5, 1.0, 7.0, 7.0, 7.0]).unwrap();
        assert_eq!(frame_pgm(&v, 0), "P2\n3 1\n255\n0 128 255\n");
        assert_eq!(frame_pgm(&v, 1), "P2\n3 1\n255\n0 0 0\n");
    }

    #[test]
    fn temporal_csv_has_header() {
        let mut buf = Vec::new();
        write_temporal_csv(&[0.5, 1.5], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame,weight\n0,0.5\n1,1.5\n");
    }
}
