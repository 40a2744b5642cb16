//! Float images, sRGB transfer, PNG and raw `.f32` I/O.

use std::fs;
use std::path::Path;

use crate::error::{MatError, Result};

/// Row-major H x W x C float image. Interpretation of the values (linear vs
/// sRGB-encoded) is up to the caller and documented per use.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f32>,
}

impl ImageF {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        ImageF {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_data(h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(MatError::Dimension(format!(
                "image {h}x{w}x{c} needs {} values, got {}",
                h * w * c,
                data.len()
            )));
        }
        Ok(ImageF { h, w, c, data })
    }

    pub fn filled(h: usize, w: usize, c: usize, v: f32) -> Self {
        ImageF {
            h,
            w,
            c,
            data: vec![v; h * w * c],
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }
    pub fn width(&self) -> usize {
        self.w
    }
    pub fn channels(&self) -> usize {
        self.c
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn px(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.w + x) * self.c;
        &self.data[i..i + self.c]
    }

    pub fn px_mut(&mut self, y: usize, x: usize) -> &mut [f32] {
        let i = (y * self.w + x) * self.c;
        &mut self.data[i..i + self.c]
    }

    pub fn rgb(&self, y: usize, x: usize) -> [f32; 3] {
        let p = self.px(y, x);
        [p[0], p[1], p[2]]
    }

    /// Bilinear sample with wrap-around addressing; u,v in texture space.
    pub fn sample_wrap(&self, u: f32, v: f32) -> Vec<f32> {
        let fx = (u.rem_euclid(1.0)) * self.w as f32 - 0.5;
        let fy = (v.rem_euclid(1.0)) * self.h as f32 - 0.5;
        let x0 = fx.floor() as i64;
        let y0 = fy.floor() as i64;
        let tx = fx - x0 as f32;
        let ty = fy - y0 as f32;
        let wrap = |v: i64, n: usize| -> usize { v.rem_euclid(n as i64) as usize };
        let (x0w, x1w) = (wrap(x0, self.w), wrap(x0 + 1, self.w));
        let (y0w, y1w) = (wrap(y0, self.h), wrap(y0 + 1, self.h));
        let mut out = vec![0.0f32; self.c];
        for ch in 0..self.c {
            let p00 = self.px(y0w, x0w)[ch];
            let p01 = self.px(y0w, x1w)[ch];
            let p10 = self.px(y1w, x0w)[ch];
            let p11 = self.px(y1w, x1w)[ch];
            out[ch] = p00 * (1.0 - tx) * (1.0 - ty)
                + p01 * tx * (1.0 - ty)
                + p10 * (1.0 - tx) * ty
                + p11 * tx * ty;
        }
        out
    }

    /// Deterministic bilinear resize.
    pub fn resize_bilinear(&self, oh: usize, ow: usize) -> ImageF {
        let mut out = ImageF::new(oh, ow, self.c);
        let sy = self.h as f32 / oh as f32;
        let sx = self.w as f32 / ow as f32;
        for y in 0..oh {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.h - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.h - 1);
            let ty = fy - y0 as f32;
            for x in 0..ow {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.w - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.w - 1);
                let tx = fx - x0 as f32;
                for ch in 0..self.c {
                    let v = self.px(y0, x0)[ch] * (1.0 - tx) * (1.0 - ty)
                        + self.px(y0, x1)[ch] * tx * (1.0 - ty)
                        + self.px(y1, x0)[ch] * (1.0 - tx) * ty
                        + self.px(y1, x1)[ch] * tx * ty;
                    out.px_mut(y, x)[ch] = v;
                }
            }
        }
        out
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> ImageF {
        let mut out = ImageF::new(h, w, self.c);
        for y in 0..h {
            for x in 0..w {
                out.px_mut(y, x).copy_from_slice(self.px(y0 + y, x0 + x));
            }
        }
        out
    }

    pub fn mean(&self) -> f32 {
        let s: f64 = self.data.iter().map(|&v| v as f64).sum();
        (s / self.data.len() as f64) as f32
    }

    pub fn all_in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| (0.0..=1.0).contains(&v))
    }
}

pub fn srgb_encode(v: f32) -> f32 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_decode(v: f32) -> f32 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// LDR tone map: clamp linear radiance to [0,1], then sRGB-encode.
pub fn tonemap(linear: [f32; 3]) -> [f32; 3] {
    [
        srgb_encode(linear[0]),
        srgb_encode(linear[1]),
        srgb_encode(linear[2]),
    ]
}

/// Write an 8-bit PNG; values are taken as already display-encoded in [0,1].
pub fn save_png(img: &ImageF, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let (h, w) = (img.height() as u32, img.width() as u32);
    let quant = |v: f32| -> u8 { (v.clamp(0.0, 1.0) * 255.0).round() as u8 };
    match img.channels() {
        1 => {
            let buf: Vec<u8> = img.data().iter().map(|&v| quant(v)).collect();
            let im = image::GrayImage::from_raw(w, h, buf)
                .ok_or_else(|| MatError::Dimension("png buffer size".to_string()))?;
            im.save(path)?;
        }
        3 => {
            let buf: Vec<u8> = img.data().iter().map(|&v| quant(v)).collect();
            let im = image::RgbImage::from_raw(w, h, buf)
                .ok_or_else(|| MatError::Dimension("png buffer size".to_string()))?;
            im.save(path)?;
        }
        c => {
            return Err(MatError::Dimension(format!(
                "png supports 1 or 3 channels, got {c}"
            )))
        }
    }
    Ok(())
}

pub fn load_png(path: &Path) -> Result<ImageF> {
    let im = image::open(path)?.to_rgb8();
    let (w, h) = im.dimensions();
    let data: Vec<f32> = im.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    ImageF::from_data(h as usize, w as usize, 3, data)
}

const F32_MAGIC: &[u8; 4] = b"MF32";

/// Raw float image: 16-byte header [magic "MF32", H u32, W u32, C u32], then
/// little-endian f32 values.
pub fn save_f32(img: &ImageF, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = Vec::with_capacity(16 + img.data().len() * 4);
    out.extend_from_slice(F32_MAGIC);
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.channels() as u32).to_le_bytes());
    for &v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_f32(path: &Path) -> Result<ImageF> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[0..4] != F32_MAGIC {
        return Err(MatError::CheckpointFormat(format!(
            "bad .f32 header in {}",
            path.display()
        )));
    }
    let rd = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (rd(4), rd(8), rd(12));
    if bytes.len() != 16 + h * w * c * 4 {
        return Err(MatError::CheckpointFormat(format!(
            "truncated .f32 file {}",
            path.display()
        )));
    }
    let data: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ImageF::from_data(h, w, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_roundtrip() {
        let dir = std::env::temp_dir().join("matforge_f32_test");
        let path = dir.join("x.f32");
        let mut img = ImageF::new(3, 5, 2);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f32 * 0.125;
        }
        save_f32(&img, &path).unwrap();
        let back = load_f32(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn srgb_roundtrip() {
        for i in 0..=100 {
            let v = i as f32 / 100.0;
            assert!((srgb_decode(srgb_encode(v)) - v).abs() < 1e-5);
        }
    }

    #[test]
    fn png_bytes_deterministic() {
        let dir = std::env::temp_dir().join("matforge_png_test");
        let p1 = dir.join("a.png");
        let p2 = dir.join("b.png");
        let mut img = ImageF::new(8, 8, 3);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = ((i * 37) % 256) as f32 / 255.0;
        }
        save_png(&img, &p1).unwrap();
        save_png(&img, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
