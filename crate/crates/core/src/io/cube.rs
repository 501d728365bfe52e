//! `.hsc` hyperspectral cubes.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HSC1"
//! 4       4     u32 channels C
//! 8       4     u32 height H
//! 12      4     u32 width W
//! 16      1     dtype tag (1 = float32)
//! 17      4CHW  f32 values, channel-major then row-major
//! ```

use std::path::Path;

use super::{put_f32s, put_u32, read_file, to_u32, write_file, Reader};
use crate::error::{Error, Result};
use crate::raster::HyperCube;

pub const CUBE_MAGIC: &[u8; 4] = b"HSC1";
pub const CUBE_DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 17;

pub fn encode_cube(cube: &HyperCube) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * cube.data().len());
    out.extend_from_slice(CUBE_MAGIC);
    for n in cube.shape() {
        put_u32(&mut out, to_u32(n, "cube extent")?);
    }
    out.push(CUBE_DTYPE_F32);
    put_f32s(&mut out, cube.data());
    Ok(out)
}

pub fn decode_cube(bytes: &[u8]) -> Result<HyperCube> {
    let mut r = Reader::new(bytes);
    if r.bytes(4)? != CUBE_MAGIC {
        return Err(r.format_at(0, "bad magic, expected \"HSC1\""));
    }
    let (c, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if c == 0 || h == 0 || w == 0 {
        return Err(r.format_at(4, format!("zero extent {c}x{h}x{w}")));
    }
    let dtype = r.u8()?;
    if dtype != CUBE_DTYPE_F32 {
        return Err(r.format_at(16, format!("unsupported dtype tag {dtype} (only 1 = float32)")));
    }
    let n = c.checked_mul(h).and_then(|v| v.checked_mul(w)).ok_or_else(|| r.format_at(4, "extents overflow"))?;
    let expected = HEADER_LEN + 4 * n;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(r.format_at(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    HyperCube::new(c, h, w, r.f32s(n)?)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    let path = path.as_ref();
    decode_cube(&read_file(path)?).map_err(|e| with_path(e, path))
}

pub fn write_cube(cube: &HyperCube, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_cube(cube)?)
}

pub(crate) fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { offset, detail } => Error::Format { offset, detail: format!("{}: {detail}", path.display()) },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_magic_at_offset_zero() {
        let mut b = encode_cube(&HyperCube::zeros(1, 1, 1)).unwrap();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_cube(&b), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn short_payload() {
        let b = encode_cube(&HyperCube::zeros(31, 4, 4)).unwrap();
        match decode_cube(&b[..b.len() - 3]) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, 17 + 4 * 31 * 16);
                assert_eq!(actual, expected - 3);
            }
            other => panic!("{other:?}"),
        }
    }
}
