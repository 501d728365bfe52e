//! Channel-major float images: 3-channel RGB inputs and 31-band cubes.

use mxr_tensor::{Float, Tensor};

use crate::error::{Error, Result};

/// A `C x H x W` float raster, channel-major and row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Spectral reconstruction target (31 bands in this project's datasets).
pub type HyperCube = Raster;
/// RGB input with values in [0, 1].
pub type RgbImage = Raster;

impl Raster {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::dimension("raster", format!("empty extent {channels}x{height}x{width}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::dimension(
                "raster",
                format!("{} values for shape {channels}x{height}x{width}", data.len()),
            ));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, y, x)]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Same spatial layout with a new value per position.
    fn remap(&self, height: usize, width: usize, src: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            for y in 0..height {
                for x in 0..width {
                    let (sy, sx) = src(y, x);
                    data.push(self.get(c, sy, sx));
                }
            }
        }
        Self { channels: self.channels, height, width, data }
    }

    /// Mirrors left-right.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        self.remap(self.height, w, |y, x| (y, w - 1 - x))
    }

    /// Mirrors top-bottom.
    pub fn flip_vertical(&self) -> Self {
        let h = self.height;
        self.remap(h, self.width, |y, x| (h - 1 - y, x))
    }

    /// Rotates counter-clockwise by `quarter_turns * 90` degrees.
    pub fn rotate90(&self, quarter_turns: usize) -> Self {
        let (h, w) = (self.height, self.width);
        match quarter_turns % 4 {
            0 => self.clone(),
            1 => self.remap(w, h, |y, x| (x, w - 1 - y)),
            2 => self.remap(h, w, |y, x| (h - 1 - y, w - 1 - x)),
            _ => self.remap(w, h, |y, x| (h - 1 - x, y)),
        }
    }

    /// Reflect-pads (no edge repeat) on the bottom and right.
    pub fn pad_reflect(&self, height: usize, width: usize) -> Result<Self> {
        let (h, w) = (self.height, self.width);
        if height < h || width < w || height - h >= h || width - w >= w {
            return Err(Error::dimension(
                "pad_reflect",
                format!("cannot reflect-pad {h}x{w} to {height}x{width}"),
            ));
        }
        let reflect = |i: usize, n: usize| if i < n { i } else { 2 * n - 2 - i };
        Ok(self.remap(height, width, |y, x| (reflect(y, h), reflect(x, w))))
    }

    /// Keeps the top-left `height x width` window.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || height > self.height || width > self.width {
            return Err(Error::dimension(
                "crop",
                format!("cannot crop {}x{} to {height}x{width}", self.height, self.width),
            ));
        }
        Ok(self.remap(height, width, |y, x| (y, x)))
    }

    /// Stacks rasters of identical shape into an `[N, C, H, W]` tensor.
    pub fn batch<T: Float>(items: &[&Raster]) -> Result<Tensor<T>> {
        let first = items.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
        let shape = first.shape();
        let mut data = Vec::with_capacity(items.len() * first.data.len());
        for (i, r) in items.iter().enumerate() {
            if r.shape() != shape {
                return Err(Error::dimension(
                    "batch",
                    format!("item {i} has shape {:?}, expected {shape:?}", r.shape()),
                ));
            }
            data.extend(r.data.iter().map(|&v| T::cast(v as f64)));
        }
        Ok(Tensor::from_vec(data, &[items.len(), shape[0], shape[1], shape[2]])?)
    }

    pub fn to_tensor<T: Float>(&self) -> Result<Tensor<T>> {
        Self::batch(&[self])
    }

    /// Batch element `n` of an `[N, C, H, W]` tensor.
    pub fn from_tensor<T: Float>(t: &Tensor<T>, n: usize) -> Result<Self> {
        let s = t.shape();
        if s.len() != 4 || n >= s[0] {
            return Err(Error::dimension("from_tensor", format!("cannot take item {n} of {s:?}")));
        }
        let len = s[1] * s[2] * s[3];
        let data = t.data()[n * len..(n + 1) * len].iter().map(|v| v.as_f64() as f32).collect();
        Self::new(s[1], s[2], s[3], data)
    }
}

/// An aligned RGB input and cube target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub rgb: RgbImage,
    pub cube: HyperCube,
}

impl Sample {
    pub fn new(name: impl Into<String>, rgb: RgbImage, cube: HyperCube) -> Result<Self> {
        if rgb.height() != cube.height() || rgb.width() != cube.width() {
            return Err(Error::dimension(
                "sample",
                format!("rgb {:?} and cube {:?} differ spatially", rgb.shape(), cube.shape()),
            ));
        }
        Ok(Self { name: name.into(), rgb, cube })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Raster {
        Raster::new(c, h, w, (0..c * h * w).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn rotation_group() {
        let r = ramp(2, 3, 5);
        assert_eq!(r.rotate90(1).rotate90(1), r.rotate90(2));
        assert_eq!(r.rotate90(1).rotate90(3), r);
        assert_eq!(r.rotate90(1).shape(), [2, 5, 3]);
        assert_eq!(r.rotate90(2), r.flip_horizontal().flip_vertical());
    }

    #[test]
    fn quarter_turn_moves_top_right_to_top_left() {
        let r = ramp(1, 2, 3);
        let q = r.rotate90(1);
        assert_eq!(q.get(0, 0, 0), r.get(0, 0, 2));
        assert_eq!(q.get(0, 2, 0), r.get(0, 0, 0));
    }

    #[test]
    fn reflect_pad_then_crop() {
        let r = ramp(1, 3, 3);
        let p = r.pad_reflect(5, 4).unwrap();
        assert_eq!(p.get(0, 3, 0), r.get(0, 1, 0));
        assert_eq!(p.get(0, 4, 3), r.get(0, 0, 1));
        assert_eq!(p.crop(3, 3).unwrap(), r);
        assert!(r.pad_reflect(7, 3).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let r = ramp(3, 2, 2);
        let t = r.to_tensor::<f32>().unwrap();
        assert_eq!(t.shape(), &[1, 3, 2, 2]);
        assert_eq!(Raster::from_tensor(&t, 0).unwrap(), r);
    }
}
