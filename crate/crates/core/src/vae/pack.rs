//! The unified 5-frame sequence: [RGB, basecolor, normal, roughness, metallic].

use crate::error::{MatError, Result};
use crate::render::image::ImageF;
use crate::render::material::MaterialMaps;
use crate::tensor::Tensor;

/// Frame indices in the packed sequence.
pub const FRAME_RGB: usize = 0;
pub const FRAME_BASECOLOR: usize = 1;
pub const FRAME_NORMAL: usize = 2;
pub const FRAME_ROUGHNESS: usize = 3;
pub const FRAME_METALLIC: usize = 4;

/// A [5, 3, H, W] tensor holding the RGB render followed by the four PBR
/// maps; single-channel maps are replicated across the 3 channels. All
/// values in [0,1].
#[derive(Clone, Debug)]
pub struct FrameSequence {
    frames: Tensor<f32>,
}

impl FrameSequence {
    pub fn from_tensor(frames: Tensor<f32>) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 4 || s[0] != 5 || s[1] != 3 {
            return Err(MatError::Dimension(format!(
                "frame sequence must be [5,3,H,W], got {s:?}"
            )));
        }
        Ok(FrameSequence { frames })
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.frames
    }

    pub fn resolution(&self) -> (usize, usize) {
        let s = self.frames.shape();
        (s[2], s[3])
    }

    fn frame_slice(&self, f: usize) -> &[f32] {
        let (h, w) = self.resolution();
        let n = 3 * h * w;
        &self.frames.data()[f * n..(f + 1) * n]
    }

    /// One frame as a [3, 1, H, W] tensor.
    pub fn frame_chw(&self, f: usize) -> Tensor<f32> {
        let (h, w) = self.resolution();
        Tensor::new(vec![3, 1, h, w], self.frame_slice(f).to_vec()).unwrap()
    }

    /// The four PBR frames as one [3, 4, H, W] tensor (channel-major, frames
    /// stacked on the temporal axis in map order).
    pub fn pbr_chw(&self) -> Tensor<f32> {
        let (h, w) = self.resolution();
        let hw = h * w;
        let mut data = vec![0.0f32; 3 * 4 * hw];
        for (t, f) in [FRAME_BASECOLOR, FRAME_NORMAL, FRAME_ROUGHNESS, FRAME_METALLIC]
            .into_iter()
            .enumerate()
        {
            let src = self.frame_slice(f);
            for c in 0..3 {
                let dst = &mut data[(c * 4 + t) * hw..(c * 4 + t + 1) * hw];
                dst.copy_from_slice(&src[c * hw..(c + 1) * hw]);
            }
        }
        Tensor::new(vec![3, 4, h, w], data).unwrap()
    }

    pub fn rgb_image(&self) -> ImageF {
        frame_to_image(self.frame_slice(FRAME_RGB), self.resolution())
    }

    /// Reverse of [`pack_sequence`]: single-channel maps are reduced by
    /// channel mean.
    pub fn unpack(&self) -> (ImageF, MaterialMaps) {
        let (h, w) = self.resolution();
        let rgb = self.rgb_image();
        let basecolor = frame_to_image(self.frame_slice(FRAME_BASECOLOR), (h, w));
        let normal = frame_to_image(self.frame_slice(FRAME_NORMAL), (h, w));
        let to_single = |f: usize| -> ImageF {
            let src = self.frame_slice(f);
            let hw = h * w;
            let mut img = ImageF::new(h, w, 1);
            for i in 0..hw {
                img.data_mut()[i] = (src[i] + src[hw + i] + src[2 * hw + i]) / 3.0;
            }
            img
        };
        (
            rgb,
            MaterialMaps {
                basecolor,
                normal,
                roughness: to_single(FRAME_ROUGHNESS),
                metallic: to_single(FRAME_METALLIC),
            },
        )
    }
}

fn frame_to_image(chw: &[f32], (h, w): (usize, usize)) -> ImageF {
    let hw = h * w;
    let mut img = ImageF::new(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                img.px_mut(y, x)[c] = chw[c * hw + y * w + x];
            }
        }
    }
    img
}

fn image_into(chw: &mut [f32], img: &ImageF) {
    let (h, w) = (img.height(), img.width());
    let hw = h * w;
    for y in 0..h {
        for x in 0..w {
            let px = img.px(y, x);
            for c in 0..3 {
                chw[c * hw + y * w + x] = px[if img.channels() == 1 { 0 } else { c }];
            }
        }
    }
}

/// Pack a material and its shaded RGB render into the fixed 5-frame order;
/// roughness and metallic are replicated to 3 channels.
pub fn pack_sequence(mat: &MaterialMaps, rgb: &ImageF) -> Result<FrameSequence> {
    let (h, w) = mat.resolution();
    if rgb.height() != h || rgb.width() != w || rgb.channels() != 3 {
        return Err(MatError::shape(
            &[h, w, 3],
            &[rgb.height(), rgb.width(), rgb.channels()],
            "pack_sequence rgb",
        ));
    }
    let hw = h * w;
    let mut data = vec![0.0f32; 5 * 3 * hw];
    let frame = 3 * hw;
    image_into(&mut data[FRAME_RGB * frame..(FRAME_RGB + 1) * frame], rgb);
    image_into(
        &mut data[FRAME_BASECOLOR * frame..(FRAME_BASECOLOR + 1) * frame],
        &mat.basecolor,
    );
    image_into(
        &mut data[FRAME_NORMAL * frame..(FRAME_NORMAL + 1) * frame],
        &mat.normal,
    );
    image_into(
        &mut data[FRAME_ROUGHNESS * frame..(FRAME_ROUGHNESS + 1) * frame],
        &mat.roughness,
    );
    image_into(
        &mut data[FRAME_METALLIC * frame..(FRAME_METALLIC + 1) * frame],
        &mat.metallic,
    );
    FrameSequence::from_tensor(Tensor::new(vec![5, 3, h, w], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_pair() -> (MaterialMaps, ImageF) {
        let mut mat = MaterialMaps::uniform(16, 16, [0.2, 0.4, 0.6], 0.3, 0.7);
        mat.roughness.px_mut(3, 5)[0] = 0.9;
        let mut rgb = ImageF::new(16, 16, 3);
        for (i, v) in rgb.data_mut().iter_mut().enumerate() {
            *v = (i % 17) as f32 / 17.0;
        }
        (mat, rgb)
    }

    #[test]
    fn frame_zero_is_the_rgb_image() {
        let (mat, rgb) = toy_pair();
        let seq = pack_sequence(&mat, &rgb).unwrap();
        assert_eq!(seq.rgb_image(), rgb);
    }

    #[test]
    fn single_channel_maps_replicate() {
        let (mat, rgb) = toy_pair();
        let seq = pack_sequence(&mat, &rgb).unwrap();
        let rough = seq.frame_chw(FRAME_ROUGHNESS);
        let hw = 16 * 16;
        let idx = 3 * 16 + 5;
        for c in 0..3 {
            assert_eq!(rough.data()[c * hw + idx], 0.9);
        }
        // uniform elsewhere
        assert_eq!(rough.data()[0], 0.3);
        assert_eq!(rough.data()[hw], 0.3);
    }

    #[test]
    fn unpack_inverts_pack() {
        let (mat, rgb) = toy_pair();
        let seq = pack_sequence(&mat, &rgb).unwrap();
        let (rgb2, mat2) = seq.unpack();
        assert_eq!(rgb, rgb2);
        assert_eq!(mat.basecolor, mat2.basecolor);
        assert_eq!(mat.normal, mat2.normal);
        assert!(mat
            .roughness
            .data()
            .iter()
            .zip(mat2.roughness.data())
            .all(|(a, b)| (a - b).abs() < 1e-7));
        assert!(mat
            .metallic
            .data()
            .iter()
            .zip(mat2.metallic.data())
            .all(|(a, b)| (a - b).abs() < 1e-7));
    }

    #[test]
    fn resolution_mismatch_rejected() {
        let (mat, _) = toy_pair();
        let rgb = ImageF::new(8, 8, 3);
        assert!(pack_sequence(&mat, &rgb).is_err());
    }
}
