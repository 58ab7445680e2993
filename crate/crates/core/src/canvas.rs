//! Texture images: trajectories of one segment projected onto a canvas of
//! flow magnitudes, resized and stacked into a multi-channel descriptor.

use std::io::{Read, Write};
use std::path::Path;

use crate::advect::Trajectory;
use crate::{Error, Result};

/// Descriptor side length the network consumes.
pub const DESCRIPTOR_SIZE: usize = 165;

const RAW_MAGIC: &[u8; 4] = b"DTC1";

#[derive(Debug, Clone, PartialEq)]
pub struct TextureImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl TextureImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {width}x{height} texture",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidImage(
                "texture values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// 8-bit PGM or PNG (by extension) of `value * 255`, rounded.
    pub fn save_image(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::image::save_gray8(&self.data, self.width, self.height, path.as_ref())
    }

    /// Raw float grid: `DTC1`, `u32` width and height, then `f32` values,
    /// all little-endian.
    pub fn write_raw<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(12 + 4 * self.data.len());
        buf.extend_from_slice(RAW_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_raw<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<canvas>", e))?;
        if bytes.len() < 12 || &bytes[..4] != RAW_MAGIC {
            return Err(Error::Format("missing DTC1 header".into()));
        }
        let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
        let width = u32::from_le_bytes(word(4)) as usize;
        let height = u32::from_le_bytes(word(8)) as usize;
        if bytes.len() != 12 + 4 * width * height {
            return Err(Error::Format("DTC1 payload size".into()));
        }
        let data = (0..width * height)
            .map(|k| f32::from_le_bytes(word(12 + 4 * k)) as f64)
            .collect();
        TextureImage::new(width, height, data)
    }
}

/// Projects every trajectory point onto the canvas at its nearest pixel with
/// value `sqrt(u^2 + v^2)`; overlapping points keep the maximum.
pub fn render_canvas(trajs: &[Trajectory], width: usize, height: usize) -> Result<TextureImage> {
    let mut canvas = TextureImage::zeros(width, height);
    for p in trajs.iter().flat_map(|t| &t.points) {
        let (cx, cy) = (p.x.round(), p.y.round());
        if !(cx >= 0.0 && cy >= 0.0 && cx < width as f64 && cy < height as f64) {
            return Err(Error::TrajectoryOutsideCanvas {
                x: p.x,
                y: p.y,
                width,
                height,
            });
        }
        let i = cy as usize * width + cx as usize;
        canvas.data[i] = canvas.data[i].max(p.magnitude());
    }
    Ok(canvas)
}

/// Corner-aligned bilinear resampling: output corners coincide with input
/// corners.
pub fn resize_bilinear(img: &TextureImage, out_w: usize, out_h: usize) -> TextureImage {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    if img.dims() == (out_w, out_h) {
        return img.clone();
    }
    let axis = |n_in: usize, n_out: usize, i: usize| -> f64 {
        if n_out == 1 {
            (n_in - 1) as f64 / 2.0
        } else {
            i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };
    let mut data = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let sy = axis(img.height, out_h, y);
        for x in 0..out_w {
            let sx = axis(img.width, out_w, x);
            data.push(crate::image::bilinear(&img.data, img.width, img.height, sx, sy));
        }
    }
    TextureImage {
        width: out_w,
        height: out_h,
        data,
    }
}

/// Divides by the global maximum when it is positive.
pub fn normalize(img: &TextureImage) -> TextureImage {
    let max = img.max();
    if max <= 0.0 {
        return img.clone();
    }
    TextureImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|v| v / max).collect(),
    }
}

/// Per-segment texture images stacked as channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureStack {
    channels: Vec<TextureImage>,
}

impl TextureStack {
    pub fn channels(&self) -> &[TextureImage] {
        &self.channels
    }

    pub fn segment_count(&self) -> usize {
        self.channels.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    /// Channel-major `(channels, height, width)` values.
    pub fn to_vec(&self) -> Vec<f64> {
        self.channels
            .iter()
            .flat_map(|c| c.data.iter().copied())
            .collect()
    }

    /// Builds a stack from channel-major values.
    pub fn from_channels(channels: usize, width: usize, height: usize, data: &[f64]) -> Result<Self> {
        if channels == 0 || data.len() != channels * width * height {
            return Err(Error::ShapeMismatch("stack data length".into()));
        }
        let channels = data
            .chunks(width * height)
            .map(|c| TextureImage::new(width, height, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels })
    }
}

/// Stacks `n` equally sized texture images in segment order.
pub fn build_stack(per_segment: Vec<TextureImage>, n: usize) -> Result<TextureStack> {
    if per_segment.len() != n || n == 0 {
        return Err(Error::SegmentCountMismatch {
            expected: n,
            got: per_segment.len(),
        });
    }
    let dims = per_segment[0].dims();
    if let Some(bad) = per_segment.iter().find(|c| c.dims() != dims) {
        return Err(Error::ShapeMismatch(format!(
            "channel {}x{} in a {}x{} stack",
            bad.width, bad.height, dims.0, dims.1
        )));
    }
    Ok(TextureStack {
        channels: per_segment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advect::TrackPoint;
    use proptest::prelude::*;

    fn point(x: f64, y: f64, u: f64, v: f64) -> Trajectory {
        Trajectory {
            points: vec![TrackPoint { t: 0, x, y, u, v }],
        }
    }

    #[test]
    fn empty_and_single_point() {
        assert!(render_canvas(&[], 6, 5).unwrap().data().iter().all(|&v| v == 0.0));
        let c = render_canvas(&[point(2.0, 3.0, 3.0, 4.0)], 6, 5).unwrap();
        assert_eq!(c.get(2, 3), 5.0);
        assert_eq!(c.data().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn overlap_keeps_max_and_rounds() {
        let c = render_canvas(&[point(1.2, 0.8, 2.0, 0.0), point(0.6, 1.4, 0.0, 7.0)], 3, 3).unwrap();
        assert_eq!(c.get(1, 1), 7.0);
    }

    #[test]
    fn outside_point_is_a_bug() {
        let err = render_canvas(&[point(5.6, 0.0, 1.0, 0.0)], 6, 5).unwrap_err();
        assert!(err.to_string().starts_with("trajectory outside canvas"));
    }

    #[test]
    fn resize_cases() {
        let img = TextureImage::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = resize_bilinear(&img, 3, 2);
        assert_eq!(r.data(), &[0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
        assert_eq!(resize_bilinear(&img, 2, 2), img);
        let k = TextureImage::new(4, 3, vec![0.3; 12]).unwrap();
        assert!(resize_bilinear(&k, 165, 165).data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn normalize_cases() {
        let z = TextureImage::zeros(3, 2);
        assert_eq!(normalize(&z), z);
        let t = TextureImage::new(2, 1, vec![10.0, 2.5]).unwrap();
        assert_eq!(normalize(&t).data(), &[1.0, 0.25]);
        let u = TextureImage::new(2, 1, vec![1.0, 0.5]).unwrap();
        assert_eq!(normalize(&u), u);
    }

    #[test]
    fn stack_cases() {
        let imgs: Vec<_> = (0..3)
            .map(|i| TextureImage::new(2, 2, vec![i as f64; 4]).unwrap())
            .collect();
        let s = build_stack(imgs.clone(), 3).unwrap();
        assert_eq!(s.segment_count(), 3);
        assert_eq!(s.channels()[2].get(0, 0), 2.0);
        let err = build_stack(imgs[..2].to_vec(), 3).unwrap_err();
        assert!(err.to_string().starts_with("segment count mismatch"));
        assert_eq!(build_stack(imgs[..1].to_vec(), 1).unwrap().segment_count(), 1);
        let back = TextureStack::from_channels(3, 2, 2, &s.to_vec()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn raw_round_trip() {
        let t = TextureImage::new(3, 2, vec![0.0, 0.25, 1.5, 3.0, 0.125, 7.0]).unwrap();
        let mut buf = Vec::new();
        t.write_raw(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"DTC1");
        assert_eq!(TextureImage::read_raw(&buf[..]).unwrap(), t);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(0.0f64..100.0, 12)) {
            let t = TextureImage::new(4, 3, v).unwrap();
            let once = normalize(&t);
            prop_assert_eq!(normalize(&once), once.clone());
            prop_assert!(once.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn resize_stays_in_range(v in prop::collection::vec(0.0f64..10.0, 20),
                                 ow in 1usize..40, oh in 1usize..40) {
            let t = TextureImage::new(5, 4, v.clone()).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(0.0, f64::max);
            let r = resize_bilinear(&t, ow, oh);
            prop_assert!(r.data().iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));
        }
    }
}
