//! Planar floating-point images and the resampling primitives the rest of
//! the pipeline is built on.
//!
//! Samples live in `[0, 1]`; 8-bit quantization happens only at the
//! encode/decode boundary. Layout is channel-major, then row-major, so
//! each channel is a contiguous `height * width` plane.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("data length {got} does not match {width}x{height}x{channels}")]
    DataLength {
        got: usize,
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("zero target dimension {0}x{1}")]
    ZeroDimension(usize, usize),
    #[error("dimension mismatch: {0}x{1}x{2} vs {3}x{4}x{5}")]
    DimensionMismatch(usize, usize, usize, usize, usize, usize),
    #[error("decode {path}: {source}")]
    Decode {
        path: String,
        source: image::ImageError,
    },
    #[error("encode {path}: {source}")]
    Encode {
        path: String,
        source: image::ImageError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Gray,
    Rgb,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb => 3,
        }
    }
}

/// Planar image: `data[c * w * h + y * w + x]`.
///
/// Values are nominally in `[0, 1]`, but intermediate results of linear
/// operations may leave that range; operations that promise clamping say so.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    color: ColorSpace,
    data: Vec<f32>,
}

impl Image {
    /// All-zero image. Panics on zero dimensions; use the fallible
    /// constructors for untrusted sizes.
    pub fn new(width: usize, height: usize, color: ColorSpace) -> Image {
        assert!(width > 0 && height > 0, "zero image dimension");
        Image {
            width,
            height,
            color,
            data: vec![0.0; width * height * color.channels()],
        }
    }

    pub fn from_data(
        width: usize,
        height: usize,
        color: ColorSpace,
        data: Vec<f32>,
    ) -> Result<Image, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension(width, height));
        }
        if data.len() != width * height * color.channels() {
            return Err(ImageError::DataLength {
                got: data.len(),
                width,
                height,
                channels: color.channels(),
            });
        }
        Ok(Image {
            width,
            height,
            color,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn color(&self) -> ColorSpace {
        self.color
    }

    pub fn channels(&self) -> usize {
        self.color.channels()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Contiguous `height * width` slice for one channel.
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[c * self.width * self.height + y * self.width + x] = v;
    }

    /// Clamp every sample into `[0, 1]`.
    pub fn clamped(mut self) -> Image {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }
}

/// Decode a PNG or JPEG. Grayscale sources load as one plane, everything
/// else as RGB; samples are 8-bit levels mapped onto `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Image, ImageError> {
    let decode_err = |source| ImageError::Decode {
        path: path.display().to_string(),
        source,
    };
    let dynimg = image::open(path).map_err(decode_err)?;
    let (width, height) = (dynimg.width() as usize, dynimg.height() as usize);
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension(width, height));
    }
    let img = match dynimg {
        image::DynamicImage::ImageLuma8(_)
        | image::DynamicImage::ImageLuma16(_)
        | image::DynamicImage::ImageLumaA8(_)
        | image::DynamicImage::ImageLumaA16(_) => {
            let luma = dynimg.to_luma8();
            let mut out = Image::new(width, height, ColorSpace::Gray);
            for (i, px) in luma.pixels().enumerate() {
                out.data[i] = px.0[0] as f32 / 255.0;
            }
            out
        }
        _ => {
            let rgb = dynimg.to_rgb8();
            let mut out = Image::new(width, height, ColorSpace::Rgb);
            let n = width * height;
            for (i, px) in rgb.pixels().enumerate() {
                out.data[i] = px.0[0] as f32 / 255.0;
                out.data[n + i] = px.0[1] as f32 / 255.0;
                out.data[2 * n + i] = px.0[2] as f32 / 255.0;
            }
            out
        }
    };
    Ok(img)
}

/// Encode as PNG or JPEG (chosen by extension), rounding clamped samples
/// to 8-bit levels.
pub fn save_image(img: &Image, path: &Path) -> Result<(), ImageError> {
    let encode_err = |source| ImageError::Encode {
        path: path.display().to_string(),
        source,
    };
    let quant = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    match img.color {
        ColorSpace::Gray => {
            let buf: Vec<u8> = img.data.iter().map(|&v| quant(v)).collect();
            let gray =
                image::GrayImage::from_raw(img.width as u32, img.height as u32, buf).unwrap();
            gray.save(path).map_err(encode_err)
        }
        ColorSpace::Rgb => {
            let n = img.width * img.height;
            let mut buf = Vec::with_capacity(n * 3);
            for i in 0..n {
                buf.push(quant(img.data[i]));
                buf.push(quant(img.data[n + i]));
                buf.push(quant(img.data[2 * n + i]));
            }
            let rgb = image::RgbImage::from_raw(img.width as u32, img.height as u32, buf).unwrap();
            rgb.save(path).map_err(encode_err)
        }
    }
}

/// BT.601 luma: `0.299 R + 0.587 G + 0.114 B`. Grayscale input passes
/// through unchanged.
pub fn to_gray(img: &Image) -> Image {
    match img.color {
        ColorSpace::Gray => img.clone(),
        ColorSpace::Rgb => {
            let n = img.width * img.height;
            let mut out = Image::new(img.width, img.height, ColorSpace::Gray);
            for i in 0..n {
                let y = 0.299 * img.data[i] as f64
                    + 0.587 * img.data[n + i] as f64
                    + 0.114 * img.data[2 * n + i] as f64;
                out.data[i] = y.clamp(0.0, 1.0) as f32;
            }
            out
        }
    }
}

/// Catmull-Rom cubic kernel (a = -0.5). Zero outside |t| < 2.
#[inline]
fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Bicubic point sample of one channel at continuous coordinates, with
/// source taps clamped to the image border (replicate padding). The value
/// is not clamped.
pub fn sample_bicubic(img: &Image, c: usize, x: f64, y: f64) -> f64 {
    let plane = img.plane(c);
    let (w, h) = (img.width as isize, img.height as isize);
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = x - x0;
    let ty = y - y0;
    let wx = [
        cubic_weight(tx + 1.0),
        cubic_weight(tx),
        cubic_weight(tx - 1.0),
        cubic_weight(tx - 2.0),
    ];
    let wy = [
        cubic_weight(ty + 1.0),
        cubic_weight(ty),
        cubic_weight(ty - 1.0),
        cubic_weight(ty - 2.0),
    ];
    let mut acc = 0.0f64;
    for (j, &wyj) in wy.iter().enumerate() {
        let sy = (y0 as isize + j as isize - 1).clamp(0, h - 1) as usize;
        let row = &plane[sy * img.width..(sy + 1) * img.width];
        let mut racc = 0.0f64;
        for (i, &wxi) in wx.iter().enumerate() {
            let sx = (x0 as isize + i as isize - 1).clamp(0, w - 1) as usize;
            racc += wxi * row[sx] as f64;
        }
        acc += wyj * racc;
    }
    acc
}

/// Bicubic resize without the final clamp; destination pixel centers map
/// to source coordinates via `(dst + 0.5) * src/dst - 0.5`.
pub(crate) fn bicubic_resize_raw(
    img: &Image,
    new_width: usize,
    new_height: usize,
) -> Result<Image, ImageError> {
    if new_width == 0 || new_height == 0 {
        return Err(ImageError::ZeroDimension(new_width, new_height));
    }
    let sx_scale = img.width as f64 / new_width as f64;
    let sy_scale = img.height as f64 / new_height as f64;
    let mut out = Image::new(new_width, new_height, img.color);
    for c in 0..img.channels() {
        for y in 0..new_height {
            let sy = (y as f64 + 0.5) * sy_scale - 0.5;
            for x in 0..new_width {
                let sx = (x as f64 + 0.5) * sx_scale - 0.5;
                out.set(c, x, y, sample_bicubic(img, c, sx, sy) as f32);
            }
        }
    }
    Ok(out)
}

/// Bicubic resize with Catmull-Rom weights and replicate edge handling.
/// Output samples are clamped to `[0, 1]`.
pub fn bicubic_resize(
    img: &Image,
    new_width: usize,
    new_height: usize,
) -> Result<Image, ImageError> {
    Ok(bicubic_resize_raw(img, new_width, new_height)?.clamped())
}

/// Peak signal-to-noise ratio in dB with peak 1.0. Identical images
/// return `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, ImageError> {
    if a.width != b.width || a.height != b.height || a.channels() != b.channels() {
        return Err(ImageError::DimensionMismatch(
            a.width,
            a.height,
            a.channels(),
            b.width,
            b.height,
            b.channels(),
        ));
    }
    let mut sq = 0.0f64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let d = x as f64 - y as f64;
        sq += d * d;
    }
    let mse = sq / a.data.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}
