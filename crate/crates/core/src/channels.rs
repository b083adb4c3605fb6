//! Integral feature channels and the appearance feature templates.
//!
//! An image is rescaled to a fixed size, differentiated with centered
//! `[-1, 0, 1]` filters (replicated borders) and turned into nine maps: the
//! gradient magnitude followed by eight unsigned orientation bins over
//! `[0°, 180°)`, each pixel voting its full magnitude into one bin. Every map
//! is stored as a summed-area table so any rectangle sum costs four reads.
//!
//! Magnitudes are kept in fixed point (1/16 units) so the tables are exact
//! integers and the bins partition channel 0 exactly.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{GrayImage, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::LandmarkFrame;

pub const CHANNEL_COUNT: usize = 9;
pub const ORIENTATION_BINS: usize = 8;
pub const CANONICAL_SIZE: u32 = 250;
/// Fixed-point scale of stored magnitudes.
pub const MAGNITUDE_SCALE: f64 = 16.0;
/// Guard added to the magnitude sum when normalizing a histogram cell.
pub const NORMALIZATION_EPS: f64 = 1e-6;

/// How an input image is brought to the channel resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rescale {
    /// Bilinear resampling to a square of the given side.
    To(u32),
    /// Use the image as is.
    None,
}

impl Default for Rescale {
    fn default() -> Self {
        Rescale::To(CANONICAL_SIZE)
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)` in channel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }
}

#[derive(Debug, Clone)]
pub struct IntegralChannels {
    width: u32,
    height: u32,
    /// Landmark (source image) coordinates to channel coordinates.
    scale_x: f64,
    scale_y: f64,
    /// `CHANNEL_COUNT` tables of `(height + 1) * (width + 1)` entries.
    tables: Vec<u32>,
}

impl IntegralChannels {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn scale(&self) -> (f64, f64) {
        (self.scale_x, self.scale_y)
    }

    fn stride(&self) -> usize {
        self.width as usize + 1
    }

    fn plane_len(&self) -> usize {
        self.stride() * (self.height as usize + 1)
    }

    /// Summed-area table of one channel, row-major with a zero first row and
    /// column.
    pub fn table(&self, ch: usize) -> &[u32] {
        let len = self.plane_len();
        &self.tables[ch * len..(ch + 1) * len]
    }

    pub fn clamp(&self, rect: Rect) -> Rect {
        Rect {
            x0: rect.x0.min(self.width),
            y0: rect.y0.min(self.height),
            x1: rect.x1.min(self.width),
            y1: rect.y1.min(self.height),
        }
    }

    /// Exact fixed-point rectangle sum (1/16 magnitude units).
    #[inline]
    pub fn rect_sum_raw(&self, ch: usize, rect: Rect) -> u32 {
        let r = self.clamp(rect);
        if r.is_empty() {
            return 0;
        }
        let t = self.table(ch);
        let s = self.stride();
        let (x0, y0, x1, y1) = (r.x0 as usize, r.y0 as usize, r.x1 as usize, r.y1 as usize);
        // Partial terms may wrap; the final value is exact.
        t[y1 * s + x1]
            .wrapping_sub(t[y0 * s + x1])
            .wrapping_sub(t[y1 * s + x0])
            .wrapping_add(t[y0 * s + x0])
    }

    /// Rectangle sum in magnitude units.
    #[inline]
    pub fn rect_sum(&self, ch: usize, rect: Rect) -> f64 {
        self.rect_sum_raw(ch, rect) as f64 / MAGNITUDE_SCALE
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }
}

/// Builds channels with the default 250×250 rescale.
pub fn build_channels(image: &GrayImage) -> Result<IntegralChannels> {
    build_channels_with(image, Rescale::default())
}

pub fn build_channels_with(image: &GrayImage, rescale: Rescale) -> Result<IntegralChannels> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::EmptyImage);
    }
    let resized;
    let src = match rescale {
        Rescale::To(side) if side != image.width() || side != image.height() => {
            if side == 0 {
                return Err(Error::EmptyImage);
            }
            resized = resize_bilinear(image, side, side);
            &resized
        }
        _ => image,
    };
    let (w, h) = (src.width() as usize, src.height() as usize);
    let maps = orientation_maps(src);

    let stride = w + 1;
    let plane_len = stride * (h + 1);
    let mut tables = vec![0u32; CHANNEL_COUNT * plane_len];
    for (ch, table) in tables.chunks_exact_mut(plane_len).enumerate() {
        let map = &maps[ch * w * h..(ch + 1) * w * h];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += map[y * w + x];
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
    }

    Ok(IntegralChannels {
        width: w as u32,
        height: h as u32,
        scale_x: w as f64 / image.width() as f64,
        scale_y: h as f64 / image.height() as f64,
        tables,
    })
}

/// Fixed-point magnitude of a gradient and its orientation bin, or `None`
/// for a flat pixel.
#[inline]
pub fn quantize_gradient(gx: i32, gy: i32) -> (u32, Option<usize>) {
    let mag = ((gx * gx + gy * gy) as f64).sqrt();
    let q = (mag * MAGNITUDE_SCALE).round() as u32;
    if q == 0 {
        return (0, None);
    }
    let mut theta = (gy as f64).atan2(gx as f64);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta -= PI;
    }
    let bin = ((theta / (PI / ORIENTATION_BINS as f64)) as usize).min(ORIENTATION_BINS - 1);
    (q, Some(bin))
}

/// Nine per-pixel maps, channel-major.
fn orientation_maps(image: &GrayImage) -> Vec<u32> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let px = |x: usize, y: usize| image.as_raw()[y * w + x] as i32;
    let mut maps = vec![0u32; CHANNEL_COUNT * w * h];
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = px(xp, y) - px(xm, y);
            let gy = px(x, yp) - px(x, ym);
            let (q, bin) = quantize_gradient(gx, gy);
            if let Some(bin) = bin {
                maps[y * w + x] = q;
                maps[(1 + bin) * w * h + y * w + x] = q;
            }
        }
    }
    maps
}

/// Pixel-center aligned bilinear resampling, rounded back to 8 bits.
pub fn resize_bilinear(image: &GrayImage, width: u32, height: u32) -> GrayImage {
    let (sw, sh) = (image.width() as usize, image.height() as usize);
    let src = image.as_raw();
    let fx = sw as f64 / width as f64;
    let fy = sh as f64 / height as f64;
    let mut out = GrayImage::new(width, height);
    for y in 0..height as usize {
        let sy = ((y as f64 + 0.5) * fy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = sy - y0 as f64;
        for x in 0..width as usize {
            let sx = ((x as f64 + 0.5) * fx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = sx - x0 as f64;
            let p = |xx: usize, yy: usize| src[yy * sw + xx] as f64;
            let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
            let bottom = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
            let v = top * (1.0 - ty) + bottom * ty;
            out.as_mut()[y * width as usize + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Parameters of an appearance feature: a histogram cell of side `size` (in
/// inter-ocular units) centered on a barycentric point of a landmark triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HogParams {
    pub triangle: [u16; 3],
    /// Orientation channel, 1..=8.
    pub channel: u8,
    pub size: f64,
    pub barycentric: [f64; 3],
}

impl HogParams {
    /// Window in channel coordinates, or `None` when it is empty after
    /// clamping to the image.
    pub fn window(&self, frame: &LandmarkFrame, channels: &IntegralChannels) -> Option<Rect> {
        let [a, b, c] = self.triangle.map(|i| frame.point(i as usize));
        let [wa, wb, wc] = self.barycentric;
        let cx = wa * a.x + wb * b.x + wc * c.x;
        let cy = wa * a.y + wb * b.y + wc * c.y;
        let (sx, sy) = channels.scale();
        let half = 0.5 * self.size * frame.iod();
        let clampf = |v: f64, hi: u32| v.round().clamp(0.0, hi as f64) as u32;
        let rect = Rect {
            x0: clampf((cx - half) * sx, channels.width()),
            x1: clampf((cx + half) * sx, channels.width()),
            y0: clampf((cy - half) * sy, channels.height()),
            y1: clampf((cy + half) * sy, channels.height()),
        };
        (!rect.is_empty()).then_some(rect)
    }
}

/// Normalized orientation histogram cell on one frame; 0 when the frame has
/// no channels or the window is empty.
pub fn phi3(frame: &LandmarkFrame, params: &HogParams) -> f64 {
    let Some(channels) = frame.channels.as_deref() else {
        return 0.0;
    };
    let Some(rect) = params.window(frame, channels) else {
        return 0.0;
    };
    let cell = channels.rect_sum(params.channel as usize, rect);
    let total = channels.rect_sum(0, rect);
    cell / (total + NORMALIZATION_EPS)
}

/// Temporal derivative of [`phi3`].
pub fn phi6(prev: &LandmarkFrame, cur: &LandmarkFrame, params: &HogParams) -> f64 {
    phi3(cur, params) - phi3(prev, params)
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.into_luma8())
}

/// Writes a binary (P5) graymap.
pub fn save_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            image.as_raw(),
            image.width(),
            image.height(),
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{LandmarkLayout, Point2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_image(rng: &mut impl Rng, w: u32, h: u32) -> GrayImage {
        let data = (0..w * h).map(|_| rng.gen::<u8>()).collect();
        GrayImage::from_raw(w, h, data).unwrap()
    }

    /// Independent per-pixel maps: gradient, magnitude and bin recomputed
    /// from scratch without the fixed-point helpers.
    fn naive_map(image: &GrayImage, ch: usize) -> Vec<Vec<u64>> {
        let (w, h) = (image.width() as i64, image.height() as i64);
        let at = |x: i64, y: i64| {
            let x = x.clamp(0, w - 1);
            let y = y.clamp(0, h - 1);
            image.get_pixel(x as u32, y as u32).0[0] as f64
        };
        let mut out = vec![vec![0u64; w as usize]; h as usize];
        for y in 0..h {
            for x in 0..w {
                let gx = at(x + 1, y) - at(x - 1, y);
                let gy = at(x, y + 1) - at(x, y - 1);
                let q = ((gx * gx + gy * gy).sqrt() * 16.0).round() as u64;
                if q == 0 {
                    continue;
                }
                let deg = gy.atan2(gx).to_degrees().rem_euclid(180.0);
                let bin = ((deg / 22.5).floor() as usize).min(7);
                if ch == 0 || ch == bin + 1 {
                    out[y as usize][x as usize] = q;
                }
            }
        }
        out
    }

    fn naive_sum(map: &[Vec<u64>], r: Rect) -> u64 {
        let mut s = 0;
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                s += map[y as usize][x as usize];
            }
        }
        s
    }

    #[test]
    fn constant_image_has_zero_channels() {
        let img = GrayImage::from_pixel(40, 30, image::Luma([77]));
        let ch = build_channels(&img).unwrap();
        assert_eq!(ch.width(), 250);
        assert!(ch.tables.iter().all(|&v| v == 0));
    }

    #[test]
    fn empty_image_is_rejected() {
        let img = GrayImage::new(0, 0);
        assert!(matches!(build_channels(&img), Err(Error::EmptyImage)));
    }

    #[test]
    fn vertical_edge_votes_into_first_bin() {
        let img = GrayImage::from_fn(20, 20, |x, _| image::Luma([if x < 10 { 10 } else { 200 }]));
        let ch = build_channels_with(&img, Rescale::None).unwrap();
        let full = ch.full_rect();
        let total = ch.rect_sum_raw(0, full);
        assert!(total > 0);
        assert_eq!(ch.rect_sum_raw(1, full), total);
        for c in 2..CHANNEL_COUNT {
            assert_eq!(ch.rect_sum_raw(c, full), 0);
        }
    }

    #[test]
    fn bins_partition_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 33, 21);
        let ch = build_channels(&img).unwrap();
        let full = ch.full_rect();
        let bins: u64 = (1..CHANNEL_COUNT)
            .map(|c| ch.rect_sum_raw(c, full) as u64)
            .sum();
        assert_eq!(bins, ch.rect_sum_raw(0, full) as u64);
    }

    #[test]
    fn tables_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 17, 12);
        let ch = build_channels_with(&img, Rescale::None).unwrap();
        let s = ch.stride();
        for c in 0..CHANNEL_COUNT {
            let t = ch.table(c);
            for y in 0..=ch.height() as usize {
                for x in 0..=ch.width() as usize {
                    if x > 0 {
                        assert!(t[y * s + x] >= t[y * s + x - 1]);
                    }
                    if y > 0 {
                        assert!(t[y * s + x] >= t[(y - 1) * s + x]);
                    }
                }
            }
        }
    }

    #[test]
    fn rect_sums_match_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(&mut rng, 16, 16);
        let ch = build_channels_with(&img, Rescale::None).unwrap();
        let maps: Vec<_> = (0..CHANNEL_COUNT).map(|c| naive_map(&img, c)).collect();
        for _ in 0..200 {
            let (x0, x1) = (rng.gen_range(0..=16), rng.gen_range(0..=16));
            let (y0, y1) = (rng.gen_range(0..=16), rng.gen_range(0..=16));
            let r = Rect::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1));
            for c in 0..CHANNEL_COUNT {
                assert_eq!(ch.rect_sum_raw(c, r) as u64, naive_sum(&maps[c], r));
            }
        }
        assert_eq!(ch.rect_sum(0, Rect::new(3, 3, 3, 9)), 0.0);
    }

    #[test]
    fn determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = random_image(&mut rng, 64, 48);
        let a = build_channels(&img).unwrap();
        let b = build_channels(&img).unwrap();
        assert_eq!(a.tables, b.tables);
    }

    fn edge_frame(channels: IntegralChannels) -> LandmarkFrame {
        let layout = LandmarkLayout {
            count: 3,
            left_eye: 0,
            right_eye: 1,
        };
        let pts = vec![
            Point2::new(5.0, 10.0),
            Point2::new(15.0, 10.0),
            Point2::new(10.0, 4.0),
        ];
        LandmarkFrame::new(&layout, 0, 0, 0, pts)
            .unwrap()
            .with_channels(Some(Arc::new(channels)))
    }

    #[test]
    fn phi3_on_constant_image_is_zero() {
        let img = GrayImage::from_pixel(20, 20, image::Luma([50]));
        let f = edge_frame(build_channels_with(&img, Rescale::None).unwrap());
        let p = HogParams {
            triangle: [0, 1, 2],
            channel: 1,
            size: 0.5,
            barycentric: [0.4, 0.4, 0.2],
        };
        assert_eq!(phi3(&f, &p), 0.0);
        assert_eq!(phi6(&f, &f, &p), 0.0);
    }

    #[test]
    fn phi3_on_edge_is_one() {
        let img = GrayImage::from_fn(20, 20, |x, _| image::Luma([if x < 10 { 10 } else { 200 }]));
        let f = edge_frame(build_channels_with(&img, Rescale::None).unwrap());
        // Center (10, 8.8), side 6 px: straddles the edge.
        let p = HogParams {
            triangle: [0, 1, 2],
            channel: 1,
            size: 0.6,
            barycentric: [0.4, 0.4, 0.2],
        };
        assert!((phi3(&f, &p) - 1.0).abs() < 1e-3);
        let other = HogParams { channel: 5, ..p };
        assert_eq!(phi3(&f, &other), 0.0);
    }

    #[test]
    fn window_outside_image_evaluates_to_zero() {
        let img = GrayImage::from_fn(20, 20, |x, _| image::Luma([(x * 10) as u8]));
        let f = edge_frame(build_channels_with(&img, Rescale::None).unwrap());
        let p = HogParams {
            triangle: [0, 1, 2],
            channel: 1,
            size: 0.2,
            barycentric: [-10.0, 0.0, 11.0],
        };
        assert_eq!(phi3(&f, &p), 0.0);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = random_image(&mut rng, 13, 7);
        save_pgm(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P5");
        assert_eq!(load_pgm(&path).unwrap(), img);
    }
}
