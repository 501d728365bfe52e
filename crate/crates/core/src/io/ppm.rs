//! Binary PPM (P6, maxval 255) RGB images.

use std::path::Path;

use super::cube::with_path;
use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::raster::RgbImage;

/// Header token and the offset where it starts.
fn token(bytes: &[u8], pos: &mut usize) -> Result<(usize, String)> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format { offset: start, detail: "unexpected end of PPM header".into() });
    }
    Ok((start, String::from_utf8_lossy(&bytes[start..*pos]).into_owned()))
}

fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let (at, tok) = token(bytes, pos)?;
    tok.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::Format { offset: at, detail: format!("invalid {what} {tok:?}") })
}

/// Parses a P6 image into `[3, H, W]` floats `v / 255`.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut pos = 0;
    let (_, magic) = token(bytes, &mut pos)?;
    if magic != "P6" {
        let hint = if magic == "P3" { "; ASCII P3 is not supported, convert to binary P6" } else { "" };
        return Err(Error::Format { offset: 0, detail: format!("expected PPM magic P6, found {magic:?}{hint}") });
    }
    let w = number(bytes, &mut pos, "width")?;
    let h = number(bytes, &mut pos, "height")?;
    let maxval_at = pos;
    let maxval = number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format { offset: maxval_at, detail: format!("maxval {maxval} unsupported (only 255)") });
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format { offset: pos, detail: "missing whitespace after maxval".into() });
    }
    pos += 1;
    let n = w * h;
    let expected = pos + 3 * n;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::Format { offset: expected, detail: format!("{} trailing bytes", bytes.len() - expected) });
    }
    let px = &bytes[pos..];
    let mut data = vec![0.0f32; 3 * n];
    for i in 0..n {
        for c in 0..3 {
            data[c * n + i] = px[3 * i + c] as f32 / 255.0;
        }
    }
    RgbImage::new(3, h, w, data)
}

/// Encodes channels 0..3 of `img`, clamped to [0, 1] and rounded to 8 bits.
pub fn encode_ppm(img: &RgbImage) -> Result<Vec<u8>> {
    if img.channels() != 3 {
        return Err(Error::dimension("encode_ppm", format!("need 3 channels, got {}", img.channels())));
    }
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * n);
    for i in 0..n {
        for c in 0..3 {
            out.push((img.data()[c * n + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    decode_ppm(&read_file(path)?).map_err(|e| with_path(e, path))
}

pub fn write_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_ppm(img)?)
}
