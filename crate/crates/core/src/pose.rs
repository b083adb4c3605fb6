//! Head-pose bins and the pose sampling distribution.
//!
//! The yaw/pitch space is quantized into a grid of bins. Each training
//! sequence is rendered around a bin center with uniform jitter, and at
//! inference time a smoothed, pointwise-normalized per-bin density decides
//! how many trees each bin contributes.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::codec::{self, Reader};
use crate::frame::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseBinTable {
    /// Ascending yaw centers, degrees.
    pub yaw_centers: Vec<f64>,
    /// Ascending pitch centers, degrees.
    pub pitch_centers: Vec<f64>,
    /// Half-width of the uniform yaw jitter around a center.
    pub jitter_yaw: f64,
    pub jitter_pitch: f64,
}

impl PoseBinTable {
    /// 5 yaw × 3 pitch bins, ±5° jitter.
    pub fn fifteen_bins() -> Self {
        PoseBinTable {
            yaw_centers: vec![-35.0, -17.5, 0.0, 17.5, 35.0],
            pitch_centers: vec![-25.0, 0.0, 25.0],
            jitter_yaw: 5.0,
            jitter_pitch: 5.0,
        }
    }

    /// A single frontal bin.
    pub fn frontal() -> Self {
        PoseBinTable {
            yaw_centers: vec![0.0],
            pitch_centers: vec![0.0],
            jitter_yaw: 0.0,
            jitter_pitch: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let strictly_increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.yaw_centers.is_empty() || self.pitch_centers.is_empty() {
            return Err(Error::Config(
                "pose bin table needs at least one center per axis".into(),
            ));
        }
        if !strictly_increasing(&self.yaw_centers) || !strictly_increasing(&self.pitch_centers) {
            return Err(Error::Config(
                "pose bin centers must be distinct and ascending".into(),
            ));
        }
        if self.jitter_yaw < 0.0 || self.jitter_pitch < 0.0 {
            return Err(Error::Config("pose jitter must be non-negative".into()));
        }
        Ok(())
    }

    /// Number of bins, `k = Γ × B`.
    pub fn len(&self) -> usize {
        self.yaw_centers.len() * self.pitch_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bins are numbered yaw-major: `yaw_index * B + pitch_index`.
    pub fn center(&self, bin: usize) -> Pose {
        let b = self.pitch_centers.len();
        Pose::new(self.yaw_centers[bin / b], self.pitch_centers[bin % b])
    }

    pub fn bin_of_indices(&self, yaw_index: usize, pitch_index: usize) -> usize {
        yaw_index * self.pitch_centers.len() + pitch_index
    }

    /// Bin with the nearest center (per axis; ties to the lower center).
    pub fn nearest(&self, pose: Pose) -> usize {
        let near = |centers: &[f64], v: f64| {
            let mut best = 0;
            for (i, &c) in centers.iter().enumerate() {
                if (v - c).abs() < (v - centers[best]).abs() {
                    best = i;
                }
            }
            best
        };
        self.bin_of_indices(
            near(&self.yaw_centers, pose.yaw),
            near(&self.pitch_centers, pose.pitch),
        )
    }

    pub fn central(&self) -> usize {
        self.nearest(Pose::new(0.0, 0.0))
    }

    /// The bin whose center has the opposite yaw, if the table has one.
    pub fn mirror(&self, bin: usize) -> Option<usize> {
        let c = self.center(bin);
        let yi = self.yaw_centers.iter().position(|&y| y == -c.yaw)?;
        Some(self.bin_of_indices(yi, bin % self.pitch_centers.len()))
    }

    fn half_spacing(centers: &[f64], i: usize) -> f64 {
        let mut h = f64::INFINITY;
        if i > 0 {
            h = h.min(0.5 * (centers[i] - centers[i - 1]));
        }
        if i + 1 < centers.len() {
            h = h.min(0.5 * (centers[i + 1] - centers[i]));
        }
        h
    }

    /// Whether `pose` lies within center ± (half-spacing + jitter) of `bin`.
    pub fn envelope_contains(&self, bin: usize, pose: Pose) -> bool {
        let b = self.pitch_centers.len();
        let (yi, pi) = (bin / b, bin % b);
        let c = self.center(bin);
        let yaw_ok =
            (pose.yaw - c.yaw).abs() <= Self::half_spacing(&self.yaw_centers, yi) + self.jitter_yaw;
        let pitch_ok = (pose.pitch - c.pitch).abs()
            <= Self::half_spacing(&self.pitch_centers, pi) + self.jitter_pitch;
        yaw_ok && pitch_ok
    }
}

/// Bin center plus uniform jitter in `[-σ_yaw, σ_yaw] × [-σ_pitch, σ_pitch]`.
pub fn assign_sequence_pose<R: Rng + ?Sized>(
    table: &PoseBinTable,
    bin: usize,
    rng: &mut R,
) -> Pose {
    let c = table.center(bin);
    let jitter = |rng: &mut R, s: f64| if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 };
    let dy = jitter(rng, table.jitter_yaw);
    let dp = jitter(rng, table.jitter_pitch);
    Pose::new(c.yaw + dy, c.pitch + dp)
}

/// Default Gaussian smoothing bandwidth, degrees.
pub const DEFAULT_SMOOTHING: f64 = 5.0;

/// Grid extent of the sampling surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseGrid {
    pub yaw_min: f64,
    pub pitch_min: f64,
    pub step: f64,
    pub yaw_nodes: usize,
    pub pitch_nodes: usize,
}

impl Default for PoseGrid {
    /// 1° resolution over [-45, 45] × [-35, 35].
    fn default() -> Self {
        PoseGrid {
            yaw_min: -45.0,
            pitch_min: -35.0,
            step: 1.0,
            yaw_nodes: 91,
            pitch_nodes: 71,
        }
    }
}

impl PoseGrid {
    fn nodes(&self) -> usize {
        self.yaw_nodes * self.pitch_nodes
    }

    /// Continuous grid coordinates, clamped to the grid.
    fn locate(&self, pose: Pose) -> (f64, f64) {
        let gx = ((pose.yaw - self.yaw_min) / self.step).clamp(0.0, (self.yaw_nodes - 1) as f64);
        let gy =
            ((pose.pitch - self.pitch_min) / self.step).clamp(0.0, (self.pitch_nodes - 1) as f64);
        (gx, gy)
    }

    pub fn node_pose(&self, ix: usize, iy: usize) -> Pose {
        Pose::new(
            self.yaw_min + ix as f64 * self.step,
            self.pitch_min + iy as f64 * self.step,
        )
    }
}

/// Per-bin weight surface `P_i(yaw, pitch)`; at every grid node the bin
/// weights are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSampler {
    grid: PoseGrid,
    bins: usize,
    /// Node-major: `weights[node * bins + bin]`, node = `iy * yaw_nodes + ix`.
    weights: Vec<f64>,
}

/// Kernel density of the training poses of each bin (bilinear splatting on
/// the grid followed by a separable Gaussian of `smoothing` degrees),
/// normalized across bins at every node. Nodes without any mass get uniform
/// weights.
pub fn build_pose_sampler(
    poses: &[(Pose, usize)],
    bins: usize,
    smoothing: f64,
) -> Result<PoseSampler> {
    build_pose_sampler_on(poses, bins, smoothing, PoseGrid::default())
}

pub fn build_pose_sampler_on(
    poses: &[(Pose, usize)],
    bins: usize,
    smoothing: f64,
    grid: PoseGrid,
) -> Result<PoseSampler> {
    if poses.is_empty() {
        return Err(Error::EmptyPoseSet);
    }
    if bins == 0 {
        return Err(Error::Config("pose sampler needs at least one bin".into()));
    }
    let (nx, ny) = (grid.yaw_nodes, grid.pitch_nodes);
    let mut density = vec![vec![0.0f64; grid.nodes()]; bins];
    for &(pose, bin) in poses {
        if bin >= bins {
            return Err(Error::Config(format!(
                "pose bin {bin} out of range ({bins} bins)"
            )));
        }
        let (gx, gy) = grid.locate(pose);
        let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(nx - 1), (y0 + 1).min(ny - 1));
        let (tx, ty) = (gx - x0 as f64, gy - y0 as f64);
        let d = &mut density[bin];
        d[y0 * nx + x0] += (1.0 - tx) * (1.0 - ty);
        d[y0 * nx + x1] += tx * (1.0 - ty);
        d[y1 * nx + x0] += (1.0 - tx) * ty;
        d[y1 * nx + x1] += tx * ty;
    }

    let sigma = smoothing / grid.step;
    if sigma > 0.0 {
        let radius = (4.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
            .collect();
        for d in density.iter_mut() {
            *d = blur(d, nx, ny, &kernel, radius);
        }
    }

    let mut weights = vec![0.0; grid.nodes() * bins];
    for node in 0..grid.nodes() {
        let total: f64 = density.iter().map(|d| d[node]).sum();
        for bin in 0..bins {
            weights[node * bins + bin] = if total > 0.0 {
                density[bin][node] / total
            } else {
                1.0 / bins as f64
            };
        }
    }
    Ok(PoseSampler {
        grid,
        bins,
        weights,
    })
}

/// Separable convolution with zero padding outside the grid.
fn blur(src: &[f64], nx: usize, ny: usize, kernel: &[f64], radius: isize) -> Vec<f64> {
    let mut tmp = vec![0.0; src.len()];
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let xx = x as isize + k as isize - radius;
                if (0..nx as isize).contains(&xx) {
                    acc += w * src[y * nx + xx as usize];
                }
            }
            tmp[y * nx + x] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let yy = y as isize + k as isize - radius;
                if (0..ny as isize).contains(&yy) {
                    acc += w * tmp[yy as usize * nx + x];
                }
            }
            out[y * nx + x] = acc;
        }
    }
    out
}

impl PoseSampler {
    /// A sampler that always returns uniform weights.
    pub fn uniform(bins: usize) -> Self {
        let grid = PoseGrid {
            yaw_min: 0.0,
            pitch_min: 0.0,
            step: 1.0,
            yaw_nodes: 1,
            pitch_nodes: 1,
        };
        PoseSampler {
            grid,
            bins,
            weights: vec![1.0 / bins as f64; bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn grid(&self) -> &PoseGrid {
        &self.grid
    }

    /// Stored weights of grid node `(ix, iy)`.
    pub fn node_weights(&self, ix: usize, iy: usize) -> &[f64] {
        let node = iy * self.grid.yaw_nodes + ix;
        &self.weights[node * self.bins..(node + 1) * self.bins]
    }

    /// Bilinear interpolation of the per-bin weights; poses outside the grid
    /// are clamped to its boundary.
    pub fn sample_weights(&self, pose: Pose) -> Vec<f64> {
        let g = &self.grid;
        let (gx, gy) = g.locate(pose);
        let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
        let (x1, y1) = (
            (x0 + 1).min(g.yaw_nodes - 1),
            (y0 + 1).min(g.pitch_nodes - 1),
        );
        let (tx, ty) = (gx - x0 as f64, gy - y0 as f64);
        let (w00, w10, w01, w11) = (
            self.node_weights(x0, y0),
            self.node_weights(x1, y0),
            self.node_weights(x0, y1),
            self.node_weights(x1, y1),
        );
        (0..self.bins)
            .map(|b| {
                (1.0 - ty) * ((1.0 - tx) * w00[b] + tx * w10[b])
                    + ty * ((1.0 - tx) * w01[b] + tx * w11[b])
            })
            .collect()
    }

    /// CSV surface: `yaw,pitch,bin0,...` per grid node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "yaw,pitch")?;
        for b in 0..self.bins {
            write!(out, ",bin{b}")?;
        }
        writeln!(out)?;
        for iy in 0..self.grid.pitch_nodes {
            for ix in 0..self.grid.yaw_nodes {
                let p = self.grid.node_pose(ix, iy);
                write!(out, "{},{}", p.yaw, p.pitch)?;
                for w in self.node_weights(ix, iy) {
                    write!(out, ",{w}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub(crate) fn encode(&self, out: &mut Vec<u8>) {
        let g = &self.grid;
        codec::put_f64(out, g.yaw_min);
        codec::put_f64(out, g.pitch_min);
        codec::put_f64(out, g.step);
        codec::put_u32(out, g.yaw_nodes as u32);
        codec::put_u32(out, g.pitch_nodes as u32);
        codec::put_u32(out, self.bins as u32);
        for &w in &self.weights {
            codec::put_f64(out, w);
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let grid = PoseGrid {
            yaw_min: r.f64()?,
            pitch_min: r.f64()?,
            step: r.f64()?,
            yaw_nodes: r.u32()? as usize,
            pitch_nodes: r.u32()? as usize,
        };
        let bins = r.u32()? as usize;
        let n = grid.nodes().saturating_mul(bins);
        if grid.nodes() == 0 || bins == 0 || n.saturating_mul(8) > r.remaining() {
            return Err(Error::Format("malformed pose sampler".into()));
        }
        let weights = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Ok(PoseSampler {
            grid,
            bins,
            weights,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::TreeRng;
    use rand::SeedableRng;

    #[test]
    fn default_table_has_fifteen_bins() {
        let t = PoseBinTable::fifteen_bins();
        t.validate().unwrap();
        assert_eq!(t.len(), 15);
        assert_eq!(t.center(t.central()), Pose::new(0.0, 0.0));
        let mut centers: Vec<_> = (0..15).map(|b| t.center(b)).collect();
        centers.dedup();
        assert_eq!(centers.len(), 15);
        for b in 0..15 {
            assert_eq!(t.nearest(t.center(b)), b);
            assert_eq!(t.mirror(t.mirror(b).unwrap()), Some(b));
        }
    }

    #[test]
    fn zero_jitter_returns_center() {
        let mut t = PoseBinTable::fifteen_bins();
        t.jitter_yaw = 0.0;
        t.jitter_pitch = 0.0;
        let mut rng = TreeRng::seed_from_u64(0);
        for b in 0..15 {
            assert_eq!(assign_sequence_pose(&t, b, &mut rng), t.center(b));
        }
    }

    #[test]
    fn jittered_pose_stays_in_box() {
        let t = PoseBinTable::fifteen_bins();
        let bin = t.nearest(Pose::new(17.5, 25.0));
        let mut rng = TreeRng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = assign_sequence_pose(&t, bin, &mut rng);
            assert!((12.5..=22.5).contains(&p.yaw));
            assert!((20.0..=30.0).contains(&p.pitch));
            assert!(t.envelope_contains(bin, p));
        }
    }

    #[test]
    fn jitter_is_uniform() {
        // Chi-square over a 5x5 partition of the jitter box; 24 degrees of
        // freedom, 0.999 quantile is 51.18.
        let t = PoseBinTable::fifteen_bins();
        let mut rng = TreeRng::seed_from_u64(2);
        let n = 10_000;
        let mut cells = [0usize; 25];
        for _ in 0..n {
            let p = assign_sequence_pose(&t, 0, &mut rng);
            let c = t.center(0);
            let ix = (((p.yaw - c.yaw + 5.0) / 2.0) as usize).min(4);
            let iy = (((p.pitch - c.pitch + 5.0) / 2.0) as usize).min(4);
            cells[iy * 5 + ix] += 1;
        }
        let expected = n as f64 / 25.0;
        let chi2: f64 = cells
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 51.18, "chi2 = {chi2}");
    }

    #[test]
    fn empty_pose_set_is_an_error() {
        assert!(matches!(
            build_pose_sampler(&[], 3, 5.0),
            Err(Error::EmptyPoseSet)
        ));
    }

    #[test]
    fn single_bin_has_full_weight_everywhere() {
        let s = build_pose_sampler(&[(Pose::new(3.0, -2.0), 0)], 1, 5.0).unwrap();
        for pose in [
            Pose::new(0.0, 0.0),
            Pose::new(44.0, 30.0),
            Pose::new(-80.0, 90.0),
        ] {
            assert_eq!(s.sample_weights(pose), vec![1.0]);
        }
    }

    #[test]
    fn symmetric_data_splits_evenly_at_midpoint() {
        let poses = [(Pose::new(-10.0, 0.0), 0), (Pose::new(10.0, 0.0), 1)];
        let s = build_pose_sampler(&poses, 2, 5.0).unwrap();
        let w = s.sample_weights(Pose::new(0.0, 0.0));
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        let w = s.sample_weights(Pose::new(-10.0, 0.0));
        assert!(w[0] > 0.9);
    }

    #[test]
    fn grid_nodes_and_clamping() {
        let poses = [
            (Pose::new(-20.0, 5.0), 0),
            (Pose::new(20.0, -5.0), 1),
            (Pose::new(0.0, 20.0), 2),
        ];
        let s = build_pose_sampler(&poses, 3, 5.0).unwrap();
        let node = s.grid().node_pose(30, 40);
        assert_eq!(s.sample_weights(node), s.node_weights(30, 40).to_vec());
        let far = s.sample_weights(Pose::new(1000.0, -1000.0));
        assert_eq!(far, s.node_weights(90, 0).to_vec());
    }

    #[test]
    fn codec_round_trip() {
        let poses = [(Pose::new(-20.0, 5.0), 0), (Pose::new(20.0, -5.0), 1)];
        let s = build_pose_sampler(&poses, 2, 5.0).unwrap();
        let mut buf = Vec::new();
        s.encode(&mut buf);
        let back = PoseSampler::decode(&mut Reader::new(&buf)).unwrap();
        assert_eq!(back, s);
    }
}
