//! 8-bit grayscale rendering of feature channels.

use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::FeatureTensor;

/// Row-major gray levels `round((m + 1) / 2 * 255)` of one channel.
pub fn channel_to_gray(t: &FeatureTensor, ch: usize) -> Vec<u8> {
    t.channel(ch).iter().map(|&m| (((m as f64 + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0)) as u8).collect()
}

pub fn write_channel_png(t: &FeatureTensor, ch: usize, path: &Path) -> Result<()> {
    if ch >= t.channels {
        return Err(Error::ShapeMismatch(format!("channel {ch} of a {}-channel tensor", t.channels)));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), t.size as u32, t.size as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let fail = |e: png::EncodingError| Error::Format { path: path.into(), reason: e.to_string() };
    let mut w = enc.write_header().map_err(fail)?;
    w.write_image_data(&channel_to_gray(t, ch)).map_err(fail)?;
    w.finish().map_err(fail)
}
