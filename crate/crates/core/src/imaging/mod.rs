//! RGB images, PNG/PPM codecs, and classical resampling.

mod png;
mod ppm;
mod resample;

use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Element, Tensor};

pub use resample::{
    cubic_weight, linear_weight, make_lr_hr_pair, resample, resample_bicubic, resample_bilinear, sample_1d,
    Filter, KEYS_A,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Decoded,
    Generated,
    Resampled,
}

/// Height × width × 3 intensities in `[0, 1]`, stored row-major and
/// channel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
    pub provenance: Provenance,
}

impl Image {
    /// Clamps `data` into `[0, 1]`; rejects non-finite values.
    pub fn new(height: usize, width: usize, mut data: Vec<f32>, provenance: Provenance) -> Result<Self> {
        if height == 0 || width == 0 {
            return shape_err(format!("image must be at least 1x1, got {height}x{width}"));
        }
        if data.len() != height * width * 3 {
            return shape_err(format!("{height}x{width}x3 image needs {} values, got {}", height * width * 3, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image value at index {i}")));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self { height, width, data, provenance })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, data, Provenance::Generated)
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, data, Provenance::Generated)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Image> {
        if y0 + h > self.height || x0 + w > self.width || h == 0 || w == 0 {
            return shape_err(format!(
                "crop {h}x{w} at ({y0},{x0}) outside {}x{} image",
                self.height, self.width
            ));
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for y in y0..y0 + h {
            let row = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[row..row + w * 3]);
        }
        Ok(Image { height: h, width: w, data, provenance: self.provenance })
    }

    /// `[1, 3, H, W]` planar tensor.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let hw = self.height * self.width;
        let mut planar = vec![T::zero(); 3 * hw];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                planar[c * hw + i] = T::c(px[c] as f64);
            }
        }
        Tensor::from_vec(&[1, 3, self.height, self.width], planar).expect("consistent image shape")
    }

    /// Reads batch item `index` of a `[N, 3, H, W]` tensor, clamping into `[0, 1]`.
    pub fn from_tensor<T: Element>(t: &Tensor<T>, index: usize) -> Result<Image> {
        let &[n, 3, h, w] = t.shape() else {
            return shape_err(format!("expected [N, 3, H, W], got {:?}", t.shape()));
        };
        if index >= n {
            return shape_err(format!("batch index {index} out of {n}"));
        }
        let hw = h * w;
        let src = &t.data()[index * 3 * hw..(index + 1) * 3 * hw];
        let mut data = Vec::with_capacity(3 * hw);
        for i in 0..hw {
            for c in 0..3 {
                data.push(src[c * hw + i].f64() as f32);
            }
        }
        Image::new(h, w, data, Provenance::Generated)
    }

    /// Stacks equally sized images into a `[N, 3, H, W]` tensor.
    pub fn batch<T: Element>(images: &[Image]) -> Result<Tensor<T>> {
        let Some(first) = images.first() else {
            return shape_err("empty image batch");
        };
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(images.len() * 3 * h * w);
        for img in images {
            if (img.height, img.width) != (h, w) {
                return shape_err(format!("batch mixes {h}x{w} and {}x{}", img.height, img.width));
            }
            data.extend_from_slice(img.to_tensor::<T>().data());
        }
        Tensor::from_vec(&[images.len(), 3, h, w], data)
    }

    /// BT.601 luma as a `[1, 1, H, W]` tensor.
    pub fn luma_tensor<T: Element>(&self) -> Tensor<T> {
        let y = self
            .data
            .chunks_exact(3)
            .map(|p| T::c(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64))
            .collect();
        Tensor::from_vec(&[1, 1, self.height, self.width], y).expect("consistent image shape")
    }

    /// Values quantized to 8 bits the way the encoders store them.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Image> {
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Image::new(height, width, data, Provenance::Decoded)
    }

    /// Signed difference `self - base`.
    pub fn residual_from(&self, base: &Image) -> Result<ResidualImage> {
        if (self.height, self.width) != (base.height, base.width) {
            return shape_err("residual of differently sized images");
        }
        let data = self.data.iter().zip(&base.data).map(|(a, b)| a - b).collect();
        ResidualImage::new(self.height, self.width, data)
    }

    /// `clamp(self + residual, 0, 1)`.
    pub fn add_residual(&self, r: &ResidualImage) -> Result<Image> {
        if (self.height, self.width) != (r.height, r.width) {
            return shape_err("residual shape differs from base image");
        }
        let data = self.data.iter().zip(&r.data).map(|(a, b)| a + b).collect();
        Image::new(self.height, self.width, data, Provenance::Generated)
    }
}

/// Signed per-pixel difference in `[-1, 1]`, same layout as [`Image`].
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ResidualImage {
    pub fn new(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return shape_err("residual data length");
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("residual image".into()));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        Ok(Self { height, width, data })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(Self::Png),
            "ppm" => Some(Self::Ppm),
            _ => None,
        }
    }
}

/// Decodes PNG or binary PPM, chosen by the leading magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(&png::SIGNATURE) {
        png::decode(bytes)
    } else if bytes.starts_with(b"P6") {
        ppm::decode(bytes)
    } else {
        Err(Error::Decode { offset: 0, message: "unrecognized image signature".into() })
    }
}

pub fn encode_image(img: &Image, format: ImageFormat) -> Vec<u8> {
    match format {
        ImageFormat::Png => png::encode(img),
        ImageFormat::Ppm => ppm::encode(img),
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_image(&std::fs::read(path)?)
}

/// Writes `img` in the format implied by the file extension (PNG otherwise).
pub fn write_image(img: &Image, path: &Path) -> Result<()> {
    let format = ImageFormat::from_path(path).unwrap_or(ImageFormat::Png);
    std::fs::write(path, encode_image(img, format))?;
    Ok(())
}
