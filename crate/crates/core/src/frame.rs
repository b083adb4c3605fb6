//! Observations and datasets.
//!
//! A [`LandmarkFrame`] is one tracked video frame: the aligned facial feature
//! points, an optional expression label, an optional head pose estimate and,
//! when images are available, the integral feature channels of the frame.
//! Frames are grouped into sequences and subjects by the owning [`Dataset`].

use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channels::IntegralChannels;
use crate::error::{Error, Result};
use crate::geometry;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Head pose in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub yaw: f64,
    pub pitch: f64,
}

impl Pose {
    pub const fn new(yaw: f64, pitch: f64) -> Self {
        Pose { yaw, pitch }
    }
}

/// Landmark count and the two landmarks used for scale normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkLayout {
    pub count: usize,
    pub left_eye: usize,
    pub right_eye: usize,
}

impl LandmarkLayout {
    /// 49-point layout: brows 0..10, nose 10..19, eyes 19..31, mouth 31..49.
    /// The eye references are the outer eye corners.
    pub const SDM49: LandmarkLayout = LandmarkLayout {
        count: 49,
        left_eye: 19,
        right_eye: 28,
    };

    pub fn validate(&self) -> Result<()> {
        for index in [self.left_eye, self.right_eye] {
            if index >= self.count {
                return Err(Error::LandmarkIndex {
                    index,
                    count: self.count,
                });
            }
        }
        if self.left_eye == self.right_eye {
            return Err(Error::Config(
                "eye landmark indices must be distinct".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LandmarkLayout {
    fn default() -> Self {
        LandmarkLayout::SDM49
    }
}

/// Expression label vocabulary. Labels are referred to by index everywhere
/// else in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub names: Vec<String>,
    /// Index of the neutral label, if the vocabulary has one.
    pub neutral: Option<usize>,
}

impl LabelSet {
    pub fn new(names: Vec<String>, neutral: Option<usize>) -> Self {
        LabelSet { names, neutral }
    }

    /// Neutral plus the six basic expressions.
    pub fn basic_expressions() -> Self {
        let names = [
            "neutral",
            "anger",
            "disgust",
            "fear",
            "happiness",
            "sadness",
            "surprise",
        ];
        LabelSet {
            names: names.iter().map(|s| s.to_string()).collect(),
            neutral: Some(0),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, label: usize) -> &str {
        &self.names[label]
    }
}

#[derive(Debug, Clone)]
pub struct LandmarkFrame {
    /// Index into [`Dataset::subjects`].
    pub subject: usize,
    /// Index into [`Dataset::sequences`].
    pub sequence: usize,
    pub frame_index: u32,
    pub landmarks: Vec<Point2>,
    pub label: Option<usize>,
    pub pose: Option<Pose>,
    pub image: Option<PathBuf>,
    pub channels: Option<Arc<IntegralChannels>>,
    iod: f64,
}

impl LandmarkFrame {
    /// Builds a frame, rejecting it when the eye landmarks coincide.
    pub fn new(
        layout: &LandmarkLayout,
        subject: usize,
        sequence: usize,
        frame_index: u32,
        landmarks: Vec<Point2>,
    ) -> Result<Self> {
        if landmarks.len() != layout.count {
            return Err(Error::Config(format!(
                "frame has {} landmarks, layout expects {}",
                landmarks.len(),
                layout.count
            )));
        }
        let iod = geometry::inter_ocular_distance(&landmarks, layout)?;
        Ok(LandmarkFrame {
            subject,
            sequence,
            frame_index,
            landmarks,
            label: None,
            pose: None,
            image: None,
            channels: None,
            iod,
        })
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn with_pose(mut self, pose: Option<Pose>) -> Self {
        self.pose = pose;
        self
    }

    pub fn with_channels(mut self, channels: Option<Arc<IntegralChannels>>) -> Self {
        self.channels = channels;
        self
    }

    /// Inter-ocular distance, computed once at construction.
    #[inline]
    pub fn iod(&self) -> f64 {
        self.iod
    }

    #[inline]
    pub fn point(&self, index: usize) -> Point2 {
        self.landmarks[index]
    }
}

/// A validated stream of frames, stored contiguously per sequence in
/// increasing frame order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub layout: LandmarkLayout,
    pub labels: LabelSet,
    pub subjects: Vec<String>,
    pub sequences: Vec<String>,
    pub frames: Vec<LandmarkFrame>,
}

impl Dataset {
    pub fn new(layout: LandmarkLayout, labels: LabelSet) -> Self {
        Dataset {
            layout,
            labels,
            subjects: Vec::new(),
            sequences: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub fn intern_subject(&mut self, name: &str) -> usize {
        match self.subjects.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                self.subjects.push(name.to_string());
                self.subjects.len() - 1
            }
        }
    }

    pub fn intern_sequence(&mut self, name: &str) -> usize {
        // Sequences arrive grouped, so the most recent one is the common hit.
        if let Some(last) = self.sequences.last() {
            if last == name {
                return self.sequences.len() - 1;
            }
        }
        match self.sequences.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                self.sequences.push(name.to_string());
                self.sequences.len() - 1
            }
        }
    }

    /// Frame ranges of each sequence, in storage order.
    pub fn sequence_ranges(&self) -> Vec<Range<usize>> {
        let mut ranges = Vec::new();
        let mut start = 0;
        for i in 1..=self.frames.len() {
            if i == self.frames.len() || self.frames[i].sequence != self.frames[start].sequence {
                if i > start {
                    ranges.push(start..i);
                }
                start = i;
            }
        }
        ranges
    }

    /// Ground-truth label of a sequence: the last non-neutral label among its
    /// frames, else the last label present.
    pub fn sequence_label(&self, range: Range<usize>) -> Option<usize> {
        let frames = &self.frames[range];
        frames
            .iter()
            .rev()
            .filter_map(|f| f.label)
            .find(|&l| Some(l) != self.labels.neutral)
            .or_else(|| frames.iter().rev().find_map(|f| f.label))
    }

    /// Keeps only the frames selected by `keep`, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&LandmarkFrame) -> bool) -> Dataset {
        Dataset {
            layout: self.layout,
            labels: self.labels.clone(),
            subjects: self.subjects.clone(),
            sequences: self.sequences.clone(),
            frames: self.frames.iter().filter(|f| keep(f)).cloned().collect(),
        }
    }

    pub fn has_channels(&self) -> bool {
        !self.frames.is_empty() && self.frames.iter().all(|f| f.channels.is_some())
    }

    /// Distinct labels present among labeled frames.
    pub fn labels_present(&self) -> Vec<usize> {
        let mut seen = vec![false; self.labels.len()];
        for f in &self.frames {
            if let Some(l) = f.label {
                seen[l] = true;
            }
        }
        (0..seen.len()).filter(|&l| seen[l]).collect()
    }
}
