//! Synthetic expression sequences.
//!
//! A 49-point 3D face template is deformed per subject (random affine,
//! expression-like resting shape, per-landmark offsets) and per sequence by
//! one expression field scaled by an onset profile. Shapes are rotated to
//! the sequence head pose and projected orthographically onto a 250×250
//! canvas, then perturbed with landmark noise. Optional images splat a
//! Gaussian blob at every landmark.

use std::f64::consts::PI;

use image::GrayImage;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channels::CANONICAL_SIZE;
use crate::error::{Error, Result};
use crate::forest::{derive_seed, tree_rng, TreeRng};
use crate::frame::{Dataset, LabelSet, LandmarkFrame, LandmarkLayout, Point2, Pose};
use crate::parallel;
use crate::pose::{assign_sequence_pose, PoseBinTable};

pub const LANDMARKS: usize = 49;

/// Template landmark groups.
pub mod groups {
    use std::ops::Range;
    pub const RIGHT_BROW: Range<usize> = 0..5;
    pub const LEFT_BROW: Range<usize> = 5..10;
    pub const NOSE_BRIDGE: Range<usize> = 10..14;
    pub const NOSE_BOTTOM: Range<usize> = 14..19;
    pub const RIGHT_EYE: Range<usize> = 19..25;
    pub const LEFT_EYE: Range<usize> = 25..31;
    pub const OUTER_MOUTH: Range<usize> = 31..43;
    pub const INNER_MOUTH: Range<usize> = 43..49;
}

type Shape = Vec<[f64; 3]>;

/// Mean face in inter-ocular units: x right, y down, z toward the camera.
/// Landmarks 19 and 28 sit at x = ∓0.5.
pub fn template() -> Shape {
    let mut s = Vec::with_capacity(LANDMARKS);
    for side in [-1.0, 1.0] {
        for k in 0..5 {
            let t = k as f64 / 4.0;
            // right brow runs outer to inner, left brow inner to outer
            let u = if side < 0.0 { t } else { 1.0 - t };
            let x = side * (0.62 - 0.5 * u);
            let y = -0.30 - 0.06 * (PI * (0.2 + 0.6 * u)).sin();
            s.push([x, y, 0.05 + 0.08 * u]);
        }
    }
    for k in 0..4 {
        let t = k as f64 / 3.0;
        s.push([0.0, -0.2 + 0.35 * t, 0.15 + 0.2 * t]);
    }
    for (x, y, z) in [
        (-0.16, 0.25, 0.2),
        (-0.08, 0.27, 0.25),
        (0.0, 0.29, 0.3),
        (0.08, 0.27, 0.25),
        (0.16, 0.25, 0.2),
    ] {
        s.push([x, y, z]);
    }
    let right_eye = [
        (-0.5, 0.0),
        (-0.4, -0.06),
        (-0.28, -0.06),
        (-0.18, 0.0),
        (-0.28, 0.05),
        (-0.4, 0.05),
    ];
    let left_eye = [
        (0.18, 0.0),
        (0.28, -0.06),
        (0.4, -0.06),
        (0.5, 0.0),
        (0.4, 0.05),
        (0.28, 0.05),
    ];
    for (x, y) in right_eye.into_iter().chain(left_eye) {
        s.push([x, y, 0.02]);
    }
    for k in 0..12 {
        let th = PI + k as f64 * PI / 6.0;
        s.push([
            0.25 * th.cos(),
            0.5 + 0.1 * th.sin(),
            0.15 + 0.05 * (1.0 - th.cos().abs()),
        ]);
    }
    for k in 0..6 {
        let th = PI + k as f64 * PI / 3.0;
        s.push([0.15 * th.cos(), 0.5 + 0.02 * th.sin(), 0.17]);
    }
    debug_assert_eq!(s.len(), LANDMARKS);
    s
}

fn add(field: &mut Shape, indices: impl IntoIterator<Item = usize>, d: [f64; 3]) {
    for i in indices {
        for a in 0..3 {
            field[i][a] += d[a];
        }
    }
}

/// Mirrored horizontal displacement: `dx` outward on both sides.
fn add_sym(field: &mut Shape, right: usize, left: usize, d: [f64; 3]) {
    add(field, [right], [-d[0], d[1], d[2]]);
    add(field, [left], d);
}

const UPPER_OUTER_LIP: [usize; 5] = [32, 33, 34, 35, 36];
const LOWER_OUTER_LIP: [usize; 5] = [38, 39, 40, 41, 42];
const UPPER_INNER_LIP: [usize; 2] = [44, 45];
const LOWER_INNER_LIP: [usize; 2] = [47, 48];
const UPPER_LIDS: [usize; 4] = [20, 21, 26, 27];
const LOWER_LIDS: [usize; 4] = [23, 24, 29, 30];

/// Apex displacement of one expression of the default label order
/// (0 neutral, 1 anger, 2 disgust, 3 fear, 4 happiness, 5 sadness,
/// 6 surprise). Neutral and unknown labels have no deformation.
pub fn expression_field(label: usize) -> Shape {
    use groups::*;
    let mut f = vec![[0.0; 3]; LANDMARKS];
    match label {
        // anger: lowered, knitted brows, narrowed eyes, pressed lips
        1 => {
            add(&mut f, RIGHT_BROW.chain(LEFT_BROW), [0.0, 0.02, 0.0]);
            add_sym(&mut f, 4, 5, [-0.03, 0.015, 0.01]);
            add(&mut f, UPPER_LIDS, [0.0, 0.015, 0.0]);
            add(
                &mut f,
                UPPER_OUTER_LIP.into_iter().chain(UPPER_INNER_LIP),
                [0.0, 0.012, 0.015],
            );
            add(
                &mut f,
                LOWER_OUTER_LIP.into_iter().chain(LOWER_INNER_LIP),
                [0.0, -0.012, 0.015],
            );
        }
        // disgust: wrinkled nose, raised upper lip
        2 => {
            add(&mut f, NOSE_BOTTOM, [0.0, -0.035, 0.0]);
            add(
                &mut f,
                UPPER_OUTER_LIP.into_iter().chain(UPPER_INNER_LIP),
                [0.0, -0.05, 0.04],
            );
            add_sym(&mut f, 3, 6, [-0.01, 0.03, 0.0]);
            add_sym(&mut f, 4, 5, [-0.015, 0.035, 0.0]);
            add_sym(&mut f, 31, 37, [0.0, 0.02, -0.02]);
            add(&mut f, LOWER_LIDS, [0.0, -0.015, 0.0]);
        }
        // fear: raised inner brows, widened eyes, stretched mouth
        3 => {
            add(&mut f, RIGHT_BROW.chain(LEFT_BROW), [0.0, -0.025, 0.0]);
            add_sym(&mut f, 4, 5, [-0.015, -0.01, 0.0]);
            add(&mut f, UPPER_LIDS, [0.0, -0.02, 0.0]);
            add_sym(&mut f, 31, 37, [0.035, 0.005, -0.03]);
            add_sym(&mut f, 43, 46, [0.03, 0.0, -0.02]);
            add(
                &mut f,
                LOWER_OUTER_LIP.into_iter().chain(LOWER_INNER_LIP),
                [0.0, 0.02, 0.0],
            );
        }
        // happiness: raised, widened mouth corners, raised cheeks
        4 => {
            add_sym(&mut f, 31, 37, [0.1, -0.1, -0.06]);
            add_sym(&mut f, 32, 36, [0.05, -0.05, -0.03]);
            add_sym(&mut f, 43, 46, [0.07, -0.06, -0.04]);
            add(&mut f, UPPER_OUTER_LIP, [0.0, -0.02, 0.0]);
            add(&mut f, LOWER_OUTER_LIP, [0.0, 0.05, 0.0]);
            add(&mut f, LOWER_INNER_LIP, [0.0, 0.04, 0.0]);
            add(&mut f, LOWER_LIDS, [0.0, -0.03, 0.0]);
        }
        // sadness: raised inner brow ends, lowered mouth corners
        5 => {
            add_sym(&mut f, 4, 5, [-0.01, -0.035, 0.0]);
            add_sym(&mut f, 3, 6, [0.0, -0.015, 0.0]);
            add_sym(&mut f, 31, 37, [-0.005, 0.035, 0.0]);
            add_sym(&mut f, 43, 46, [0.0, 0.02, 0.0]);
            add(&mut f, LOWER_OUTER_LIP, [0.0, -0.01, 0.03]);
            add(&mut f, UPPER_LIDS, [0.0, 0.01, 0.0]);
        }
        // surprise: raised brows, opened eyes and jaw
        6 => {
            add(&mut f, RIGHT_BROW.chain(LEFT_BROW), [0.0, -0.06, 0.0]);
            add(&mut f, UPPER_LIDS, [0.0, -0.025, 0.0]);
            add(&mut f, LOWER_OUTER_LIP, [0.0, 0.09, 0.02]);
            add(&mut f, LOWER_INNER_LIP, [0.0, 0.07, 0.02]);
            add_sym(&mut f, 31, 37, [-0.03, 0.03, 0.0]);
            add_sym(&mut f, 43, 46, [-0.02, 0.035, 0.0]);
            add(&mut f, UPPER_OUTER_LIP, [0.0, -0.01, 0.03]);
        }
        _ => {}
    }
    f
}

/// Mean per-landmark displacement magnitude of a field.
pub fn mean_magnitude(field: &[[f64; 3]]) -> f64 {
    field
        .iter()
        .map(|d| (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
        .sum::<f64>()
        / field.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseMode {
    Frontal,
    /// Every sequence is rendered once per bin of the 15-bin table.
    Bins15,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_subjects: usize,
    pub n_sequences_per_subject: usize,
    pub frames_per_sequence: usize,
    pub labels: LabelSet,
    /// Scale of the expression-like resting shape of each subject.
    pub morphology_strength: f64,
    /// Standard deviation of the per-landmark subject offsets (iod units).
    pub landmark_offset: f64,
    /// Apex amplitude range, within (0, 1].
    pub amplitude: (f64, f64),
    /// Landmark noise standard deviation (iod units).
    pub noise: f64,
    pub pose_mode: PoseMode,
    /// Standard deviation of the pose estimate error, degrees.
    pub pose_noise: f64,
    /// Fraction of each sequence spent returning to neutral at the end.
    pub offset_fraction: f64,
    pub render_images: bool,
    pub subject_prefix: String,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_subjects: 40,
            n_sequences_per_subject: 6,
            frames_per_sequence: 60,
            labels: LabelSet::basic_expressions(),
            morphology_strength: 0.05,
            landmark_offset: 0.02,
            amplitude: (0.6, 1.0),
            noise: 0.008,
            pose_mode: PoseMode::Frontal,
            pose_noise: 1.0,
            offset_fraction: 0.0,
            render_images: false,
            subject_prefix: "s".into(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0
            || self.n_sequences_per_subject == 0
            || self.frames_per_sequence == 0
        {
            return Err(Error::Config("generator counts must be at least 1".into()));
        }
        let (lo, hi) = self.amplitude;
        if !(lo >= 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "amplitude range ({lo}, {hi}) must lie within [0, 1]"
            )));
        }
        if self.labels.len() < 2 {
            return Err(Error::Config(
                "generator needs a neutral and at least one expression label".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.offset_fraction) {
            return Err(Error::Config("offset_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Expression labels (all but neutral).
    pub fn expressions(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&l| Some(l) != self.labels.neutral)
            .collect()
    }

    pub fn bin_table(&self) -> PoseBinTable {
        match self.pose_mode {
            PoseMode::Frontal => PoseBinTable::frontal(),
            PoseMode::Bins15 => PoseBinTable::fifteen_bins(),
        }
    }
}

/// Per-subject resting shape and placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Morphology {
    /// Neutral 3D shape of the subject before the affine part.
    pub shape: Shape,
    /// Linear part applied to (x, y).
    pub affine: [[f64; 2]; 2],
    pub iod_px: f64,
    pub center: (f64, f64),
}

impl Morphology {
    /// The template itself, unscaled, centered.
    pub fn mean() -> Self {
        Morphology {
            shape: template(),
            affine: [[1.0, 0.0], [0.0, 1.0]],
            iod_px: 80.0,
            center: (125.0, 115.0),
        }
    }

    pub fn sample(cfg: &GeneratorConfig, rng: &mut TreeRng) -> Self {
        let gauss =
            |rng: &mut TreeRng, s: f64| Normal::new(0.0, s).expect("finite sigma").sample(rng);
        let mut shape = template();
        for l in cfg.expressions() {
            let z = gauss(rng, cfg.morphology_strength);
            let field = expression_field(l);
            for (p, d) in shape.iter_mut().zip(&field) {
                for a in 0..3 {
                    p[a] += z * d[a];
                }
            }
        }
        for p in shape.iter_mut() {
            for a in 0..3 {
                p[a] += gauss(rng, cfg.landmark_offset);
            }
        }
        let affine = [
            [1.0 + gauss(rng, 0.05), gauss(rng, 0.03)],
            [gauss(rng, 0.03), 1.0 + gauss(rng, 0.05)],
        ];
        Morphology {
            shape,
            affine,
            iod_px: rng.gen_range(70.0..90.0),
            center: (
                125.0 + rng.gen_range(-5.0..5.0),
                115.0 + rng.gen_range(-5.0..5.0),
            ),
        }
    }

    /// Mean displacement of the subject's neutral shape from the template,
    /// affine part included.
    pub fn displacement(&self) -> f64 {
        let t = template();
        let mut acc = 0.0;
        for (p, q) in self.shape.iter().zip(&t) {
            let x = self.affine[0][0] * p[0] + self.affine[0][1] * p[1];
            let y = self.affine[1][0] * p[0] + self.affine[1][1] * p[1];
            acc += ((x - q[0]).powi(2) + (y - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        }
        acc / t.len() as f64
    }
}

/// Random draws that define one sequence apart from morphology.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePlan {
    pub label: usize,
    pub apex: f64,
    /// Expression intensity per frame, in [0, 1] of the apex.
    pub profile: Vec<f64>,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Neutral hold, smooth rise, apex hold and an optional return to neutral.
pub fn onset_profile(frames: usize, offset_fraction: f64, rng: &mut TreeRng) -> Vec<f64> {
    let n = frames as f64;
    let hold = (n * rng.gen_range(0.1..0.25)).round();
    let rise = (n * rng.gen_range(0.3..0.5)).round().max(2.0);
    let tail = (n * offset_fraction).round();
    let tail_start = n - tail;
    (0..frames)
        .map(|t| {
            let t = t as f64;
            let up = smoothstep((t - hold) / rise);
            if tail > 0.0 && t >= tail_start {
                up * (1.0 - smoothstep((t - tail_start + 1.0) / tail))
            } else {
                up
            }
        })
        .collect()
}

/// Intensity thresholds (fractions of the apex) for frame labels: below the
/// first the frame is neutral, at or above the second it carries the
/// sequence label, in between it is unlabeled.
pub const NEUTRAL_BELOW: f64 = 0.15;
pub const APEX_FROM: f64 = 0.85;

pub fn frame_label(labels: &LabelSet, sequence_label: usize, intensity: f64) -> Option<usize> {
    if intensity < NEUTRAL_BELOW {
        labels.neutral
    } else if intensity >= APEX_FROM {
        Some(sequence_label)
    } else {
        None
    }
}

/// Landmarks of `shape` rotated to `pose` (degrees) and placed on the canvas.
pub fn project(morph: &Morphology, shape: &[[f64; 3]], pose: Pose) -> Vec<Point2> {
    let (sy, cy) = pose.yaw.to_radians().sin_cos();
    let (sp, cp) = pose.pitch.to_radians().sin_cos();
    shape
        .iter()
        .map(|p| {
            let x = morph.affine[0][0] * p[0] + morph.affine[0][1] * p[1];
            let y = morph.affine[1][0] * p[0] + morph.affine[1][1] * p[1];
            let z = p[2];
            let x1 = x * cy + z * sy;
            let z1 = -x * sy + z * cy;
            let y2 = y * cp - z1 * sp;
            Point2::new(
                morph.center.0 + morph.iod_px * x1,
                morph.center.1 + morph.iod_px * y2,
            )
        })
        .collect()
}

/// Frame landmarks and recorded pose of one rendered sequence.
#[derive(Debug, Clone)]
pub struct RenderedSequence {
    pub label: usize,
    pub pose: Pose,
    pub frames: Vec<(Vec<Point2>, Option<usize>, Pose)>,
}

/// Renders one sequence. `dynamics` fixes the label-independent draws
/// (profile, apex, noise, pose jitter); `plan` fixes label and profile.
pub fn render_sequence(
    cfg: &GeneratorConfig,
    morph: &Morphology,
    plan: &SequencePlan,
    pose: Pose,
    rng: &mut TreeRng,
) -> RenderedSequence {
    let field = expression_field(plan.label);
    let noise = Normal::new(0.0, cfg.noise * morph.iod_px).expect("finite sigma");
    let pose_noise = Normal::new(0.0, cfg.pose_noise.max(0.0)).expect("finite sigma");
    let mut shape = morph.shape.clone();
    let frames = plan
        .profile
        .iter()
        .map(|&a| {
            let amp = a * plan.apex;
            for ((s, m), d) in shape.iter_mut().zip(&morph.shape).zip(&field) {
                for k in 0..3 {
                    s[k] = m[k] + amp * d[k];
                }
            }
            let mut pts = project(morph, &shape, pose);
            for p in pts.iter_mut() {
                p.x += noise.sample(rng);
                p.y += noise.sample(rng);
            }
            let est = Pose::new(
                pose.yaw + pose_noise.sample(rng),
                pose.pitch + pose_noise.sample(rng),
            );
            (pts, frame_label(&cfg.labels, plan.label, a), est)
        })
        .collect();
    RenderedSequence {
        label: plan.label,
        pose,
        frames,
    }
}

/// Plan of a sequence from its dynamics seed.
pub fn plan_sequence(cfg: &GeneratorConfig, label: usize, dynamics_seed: u64) -> SequencePlan {
    let mut rng = tree_rng(dynamics_seed, 0);
    let (lo, hi) = cfg.amplitude;
    let apex = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    SequencePlan {
        label,
        apex,
        profile: onset_profile(cfg.frames_per_sequence, cfg.offset_fraction, &mut rng),
    }
}

/// Renders one sequence for `morph` from a dynamics seed; two subjects with
/// the same seed share label, profile, apex and pose.
pub fn generate_sequence(
    cfg: &GeneratorConfig,
    morph: &Morphology,
    label: usize,
    bin: usize,
    dynamics_seed: u64,
) -> RenderedSequence {
    let plan = plan_sequence(cfg, label, dynamics_seed);
    let mut rng = tree_rng(dynamics_seed, 1 + bin as u64);
    let pose = assign_sequence_pose(&cfg.bin_table(), bin, &mut rng);
    render_sequence(cfg, morph, &plan, pose, &mut rng)
}

fn subject_seed(cfg: &GeneratorConfig, s: usize) -> u64 {
    derive_seed(cfg.seed, s as u64)
}

/// Sequence identity within a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSpec {
    pub subject: usize,
    pub index: usize,
    pub bin: usize,
    pub label: usize,
    pub name: String,
}

/// All sequences of a corpus, in output order. Each subject performs the
/// expressions in a random order, cycling when it has more sequences than
/// expressions.
pub fn corpus_plan(cfg: &GeneratorConfig) -> Vec<SequenceSpec> {
    let expressions = cfg.expressions();
    let bins = cfg.bin_table().len();
    let mut specs = Vec::new();
    for s in 0..cfg.n_subjects {
        let mut rng = tree_rng(subject_seed(cfg, s), 1);
        let mut order = Vec::new();
        while order.len() < cfg.n_sequences_per_subject {
            let mut round = expressions.clone();
            rand::seq::SliceRandom::shuffle(round.as_mut_slice(), &mut rng);
            order.extend(round);
        }
        for (q, &label) in order.iter().take(cfg.n_sequences_per_subject).enumerate() {
            for bin in 0..bins {
                let name = match cfg.pose_mode {
                    PoseMode::Frontal => format!("{}{s:03}_q{q}", cfg.subject_prefix),
                    PoseMode::Bins15 => format!("{}{s:03}_q{q}_b{bin:02}", cfg.subject_prefix),
                };
                specs.push(SequenceSpec {
                    subject: s,
                    index: q,
                    bin,
                    label,
                    name,
                });
            }
        }
    }
    specs
}

pub fn subject_name(cfg: &GeneratorConfig, s: usize) -> String {
    format!("{}{s:03}", cfg.subject_prefix)
}

/// Generates the landmark corpus in memory. Images, when configured, are
/// recorded as relative paths `images/<sequence>/<frame>.pgm` and can be
/// produced with [`render_image`].
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let layout = LandmarkLayout::SDM49;
    let morphs: Vec<Morphology> = parallel::map_indexed(cfg.n_subjects, |s| {
        Morphology::sample(cfg, &mut tree_rng(subject_seed(cfg, s), 0))
    });
    let specs = corpus_plan(cfg);
    let rendered = parallel::map_slice(&specs, |spec| {
        // replicates of a sequence across bins share their dynamics
        let dyn_seed = derive_seed(subject_seed(cfg, spec.subject), 1000 + spec.index as u64);
        generate_sequence(cfg, &morphs[spec.subject], spec.label, spec.bin, dyn_seed)
    });

    let mut ds = Dataset::new(layout, cfg.labels.clone());
    for s in 0..cfg.n_subjects {
        ds.intern_subject(&subject_name(cfg, s));
    }
    for (spec, seq) in specs.iter().zip(rendered) {
        let sequence = ds.intern_sequence(&spec.name);
        for (t, (pts, label, pose)) in seq.frames.into_iter().enumerate() {
            let mut frame = LandmarkFrame::new(&layout, spec.subject, sequence, t as u32, pts)?
                .with_label(label)
                .with_pose(Some(pose));
            if cfg.render_images {
                frame.image = Some(format!("images/{}/{t:03}.pgm", spec.name).into());
            }
            ds.frames.push(frame);
        }
    }
    Ok(ds)
}

/// Blob rendering parameters.
pub const BLOB_SIGMA: f64 = 2.5;
pub const BLOB_AMPLITUDE: f64 = 120.0;
pub const BACKGROUND: f64 = 40.0;

/// 250×250 image with a Gaussian blob at every landmark.
pub fn render_image(landmarks: &[Point2]) -> GrayImage {
    let size = CANONICAL_SIZE;
    let mut acc = vec![BACKGROUND; (size * size) as usize];
    let r = (4.0 * BLOB_SIGMA).ceil() as i64;
    let inv = 1.0 / (2.0 * BLOB_SIGMA * BLOB_SIGMA);
    for p in landmarks {
        let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
        for y in (cy - r).max(0)..=(cy + r).min(size as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(size as i64 - 1) {
                let d2 = (x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2);
                acc[(y as u32 * size + x as u32) as usize] += BLOB_AMPLITUDE * (-d2 * inv).exp();
            }
        }
    }
    GrayImage::from_raw(
        size,
        size,
        acc.into_iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect(),
    )
    .expect("buffer matches dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::inter_ocular_distance;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_subjects: 3,
            n_sequences_per_subject: 2,
            frames_per_sequence: 20,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn template_eyes_are_one_iod_apart() {
        let t = template();
        assert_eq!(t.len(), LANDMARKS);
        let m = Morphology::mean();
        let pts = project(&m, &t, Pose::new(0.0, 0.0));
        let iod = inter_ocular_distance(&pts, &LandmarkLayout::SDM49).unwrap();
        assert!((iod - m.iod_px).abs() < 1e-9);
    }

    #[test]
    fn fields_are_ranked_by_size() {
        let mag: Vec<f64> = (0..7)
            .map(|l| mean_magnitude(&expression_field(l)))
            .collect();
        assert_eq!(mag[0], 0.0);
        for subtle in [1, 3, 5] {
            assert!(mag[subtle] < mag[2], "{mag:?}");
            assert!(mag[2] < mag[4] && mag[2] < mag[6]);
        }
    }

    #[test]
    fn zero_amplitude_gives_neutral_frames() {
        let cfg = GeneratorConfig {
            amplitude: (0.0, 0.0),
            noise: 0.0,
            ..small()
        };
        let morph = Morphology::sample(&cfg, &mut tree_rng(1, 1));
        let seq = generate_sequence(&cfg, &morph, 4, 0, 7);
        let neutral = project(&morph, &morph.shape, seq.pose);
        for (pts, _, _) in &seq.frames {
            assert_eq!(pts, &neutral);
        }
    }

    #[test]
    fn shared_dynamics_across_morphologies() {
        let cfg = small();
        let a = Morphology::sample(&cfg, &mut tree_rng(1, 0));
        let b = Morphology::sample(&cfg, &mut tree_rng(2, 0));
        let sa = generate_sequence(&cfg, &a, 6, 0, 99);
        let sb = generate_sequence(&cfg, &b, 6, 0, 99);
        assert_eq!(sa.pose, sb.pose);
        let labels = |s: &RenderedSequence| s.frames.iter().map(|f| f.1).collect::<Vec<_>>();
        assert_eq!(labels(&sa), labels(&sb));
        assert_ne!(sa.frames[0].0, sb.frames[0].0);
        assert_eq!(plan_sequence(&cfg, 6, 99), plan_sequence(&cfg, 6, 99));
    }

    #[test]
    fn profiles_rise_monotonically() {
        let mut rng = tree_rng(3, 3);
        for _ in 0..20 {
            let p = onset_profile(60, 0.0, &mut rng);
            assert_eq!(p[0], 0.0);
            assert_eq!(*p.last().unwrap(), 1.0);
            assert!(p.windows(2).all(|w| w[0] <= w[1]));
        }
        let p = onset_profile(60, 0.2, &mut rng);
        assert!(*p.last().unwrap() < NEUTRAL_BELOW);
    }

    #[test]
    fn corpus_is_deterministic_and_labeled() {
        let cfg = small();
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.frames.len(), 3 * 2 * 20);
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.landmarks, y.landmarks);
            assert_eq!(x.label, y.label);
        }
        for r in a.sequence_ranges() {
            let label = a.sequence_label(r.clone()).unwrap();
            assert_ne!(Some(label), a.labels.neutral);
            assert_eq!(a.frames[r.start].label, a.labels.neutral);
            assert_eq!(a.frames[r.end - 1].label, Some(label));
        }
    }

    #[test]
    fn subjects_cover_distinct_expressions() {
        let cfg = GeneratorConfig {
            n_subjects: 4,
            ..GeneratorConfig::default()
        };
        for s in 0..4 {
            let mut labels: Vec<usize> = corpus_plan(&cfg)
                .into_iter()
                .filter(|p| p.subject == s)
                .map(|p| p.label)
                .collect();
            labels.sort_unstable();
            assert_eq!(labels, vec![1, 2, 3, 4, 5, 6]);
        }
    }

    #[test]
    fn multiview_poses_stay_in_their_bins() {
        let cfg = GeneratorConfig {
            n_subjects: 2,
            n_sequences_per_subject: 1,
            frames_per_sequence: 5,
            pose_mode: PoseMode::Bins15,
            ..GeneratorConfig::default()
        };
        let table = cfg.bin_table();
        assert_eq!(corpus_plan(&cfg).len(), 30);
        let morph = Morphology::sample(&cfg, &mut tree_rng(0, 0));
        for seed in 0..10 {
            for bin in 0..table.len() {
                let pose = generate_sequence(&cfg, &morph, 1, bin, seed).pose;
                let c = table.center(bin);
                assert!((pose.yaw - c.yaw).abs() <= 5.0 && (pose.pitch - c.pitch).abs() <= 5.0);
            }
        }
    }

    #[test]
    fn morphology_confound_exceeds_apex_motion() {
        let cfg = GeneratorConfig::default();
        let mut rng = tree_rng(5, 5);
        let n = 200;
        let mean_disp = (0..n)
            .map(|_| Morphology::sample(&cfg, &mut rng).displacement())
            .sum::<f64>()
            / n as f64;
        for l in cfg.expressions() {
            assert!(
                mean_disp > mean_magnitude(&expression_field(l)) * cfg.amplitude.1,
                "label {l}"
            );
        }
    }

    #[test]
    fn blobs_mark_landmarks() {
        let img = render_image(&[Point2::new(100.0, 50.0)]);
        assert_eq!(img.dimensions(), (250, 250));
        assert_eq!(img.get_pixel(100, 50)[0], 160);
        assert_eq!(img.get_pixel(0, 0)[0], 40);
    }
}
