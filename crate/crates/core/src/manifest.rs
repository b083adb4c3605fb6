//! Dataset manifest: a CSV of frames plus a JSON header sidecar.
//!
//! Columns, in order:
//!
//! ```text
//! subject_id,sequence_id,frame_index,label,yaw,pitch,image,x0,y0,...,x{L-1},y{L-1}
//! ```
//!
//! `label`, `yaw`, `pitch` and `image` may be empty. Rows of a sequence are
//! contiguous with strictly increasing `frame_index`. Image paths are
//! relative to the manifest directory. The header lives next to the CSV
//! with a `.json` extension.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channels::{build_channels, load_pgm, save_pgm};
use crate::error::{Error, Result};
use crate::frame::{Dataset, LabelSet, LandmarkFrame, LandmarkLayout, Point2, Pose};
use crate::parallel;
use crate::synth::{generate_corpus, render_image, GeneratorConfig};

pub const MANIFEST_VERSION: u32 = 1;

const FIXED_COLUMNS: [&str; 7] = [
    "subject_id",
    "sequence_id",
    "frame_index",
    "label",
    "yaw",
    "pitch",
    "image",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: u32,
    pub landmark_count: usize,
    pub left_eye: usize,
    pub right_eye: usize,
    pub labels: Vec<String>,
    pub neutral_label: Option<String>,
}

impl ManifestHeader {
    pub fn new(layout: &LandmarkLayout, labels: &LabelSet) -> Self {
        ManifestHeader {
            version: MANIFEST_VERSION,
            landmark_count: layout.count,
            left_eye: layout.left_eye,
            right_eye: layout.right_eye,
            labels: labels.names.clone(),
            neutral_label: labels.neutral.map(|n| labels.names[n].clone()),
        }
    }

    fn layout(&self) -> LandmarkLayout {
        LandmarkLayout {
            count: self.landmark_count,
            left_eye: self.left_eye,
            right_eye: self.right_eye,
        }
    }

    fn label_set(&self, path: &Path) -> Result<LabelSet> {
        let neutral = match &self.neutral_label {
            None => None,
            Some(n) => {
                Some(
                    self.labels
                        .iter()
                        .position(|l| l == n)
                        .ok_or_else(|| Error::Parse {
                            path: path.to_path_buf(),
                            line: 0,
                            message: format!("neutral label {n:?} is not in the label list"),
                        })?,
                )
            }
        };
        Ok(LabelSet::new(self.labels.clone(), neutral))
    }
}

/// Sidecar path of a manifest CSV.
pub fn header_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn column_names(count: usize) -> Vec<String> {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for i in 0..count {
        cols.push(format!("x{i}"));
        cols.push(format!("y{i}"));
    }
    cols
}

/// Writes `ds` as `path` plus its header sidecar.
pub fn write_manifest(path: &Path, ds: &Dataset) -> Result<()> {
    let header = ManifestHeader::new(&ds.layout, &ds.labels);
    fs::write(
        header_path(path),
        serde_json::to_string_pretty(&header)? + "\n",
    )?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(column_names(ds.layout.count))?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for f in &ds.frames {
        let mut row = vec![
            ds.subjects[f.subject].clone(),
            ds.sequences[f.sequence].clone(),
            f.frame_index.to_string(),
            f.label
                .map_or(String::new(), |l| ds.labels.names[l].clone()),
            opt(f.pose.map(|p| p.yaw)),
            opt(f.pose.map(|p| p.pitch)),
            f.image
                .as_ref()
                .map_or(String::new(), |p| p.to_string_lossy().into_owned()),
        ];
        for p in &f.landmarks {
            row.push(p.x.to_string());
            row.push(p.y.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a manifest and its header, validating every row.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let hpath = header_path(path);
    let header: ManifestHeader =
        serde_json::from_str(&fs::read_to_string(&hpath)?).map_err(|e| Error::Parse {
            path: hpath.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
    if header.version != MANIFEST_VERSION {
        return Err(Error::Parse {
            path: hpath,
            line: 0,
            message: format!("unsupported manifest version {}", header.version),
        });
    }
    let layout = header.layout();
    layout.validate()?;
    let labels = header.label_set(&hpath)?;
    let mut ds = Dataset::new(layout, labels);

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let expected = column_names(layout.count);
    let err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message,
    };
    let mut last: Option<(usize, u32)> = None;
    let mut finished_sequences = Vec::new();
    let mut saw_header = false;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 {
            if rec.iter().ne(expected.iter().map(String::as_str)) {
                return Err(err(
                    line,
                    "header row does not match the landmark count".into(),
                ));
            }
            saw_header = true;
            continue;
        }
        if rec.len() != expected.len() {
            return Err(err(
                line,
                format!(
                    "expected {} fields ({} landmarks), found {}",
                    expected.len(),
                    layout.count,
                    rec.len()
                ),
            ));
        }
        let subject = ds.intern_subject(&rec[0]);
        let sequence = ds.intern_sequence(&rec[1]);
        let frame_index: u32 = rec[2]
            .parse()
            .map_err(|_| err(line, format!("bad frame_index {:?}", &rec[2])))?;
        if finished_sequences.len() <= sequence {
            finished_sequences.resize(sequence + 1, false);
        }
        match last {
            Some((seq, idx)) if seq == sequence => {
                if frame_index <= idx {
                    return Err(err(
                        line,
                        format!("frame_index {frame_index} does not increase (previous {idx})"),
                    ));
                }
            }
            _ => {
                if let Some((seq, _)) = last {
                    finished_sequences[seq] = true;
                }
                if finished_sequences[sequence] {
                    return Err(err(
                        line,
                        format!("rows of sequence {:?} are not contiguous", &rec[1]),
                    ));
                }
            }
        }
        if let Some(prev) = ds.frames.last() {
            if prev.sequence == sequence && prev.subject != subject {
                return Err(err(line, format!("sequence {:?} changes subject", &rec[1])));
            }
        }
        last = Some((sequence, frame_index));

        let label = match &rec[3] {
            "" => None,
            name => Some(
                ds.labels
                    .index_of(name)
                    .ok_or_else(|| err(line, format!("unknown label {name:?}")))?,
            ),
        };
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| err(line, format!("bad {what} {s:?}")))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite {what}")));
            }
            Ok(v)
        };
        let pose = match (&rec[4], &rec[5]) {
            ("", "") => None,
            (y, p) => Some(Pose::new(num(y, "yaw")?, num(p, "pitch")?)),
        };
        let image = (!rec[6].is_empty()).then(|| PathBuf::from(&rec[6]));
        let mut landmarks = Vec::with_capacity(layout.count);
        for k in 0..layout.count {
            landmarks.push(Point2::new(
                num(&rec[7 + 2 * k], "coordinate")?,
                num(&rec[8 + 2 * k], "coordinate")?,
            ));
        }
        let mut frame = LandmarkFrame::new(&layout, subject, sequence, frame_index, landmarks)
            .map_err(|e| err(line, e.to_string()))?
            .with_label(label)
            .with_pose(pose);
        frame.image = image;
        ds.frames.push(frame);
    }
    if !saw_header {
        return Err(err(1, "missing header row".into()));
    }
    Ok(ds)
}

/// Frame selection for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// First `k` frames of each sequence as neutral, last `k` as the
    /// sequence label.
    FirstLast(usize),
    /// Every labeled frame.
    AllLabeled,
}

impl SelectionPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "all_labeled" {
            return Some(SelectionPolicy::AllLabeled);
        }
        let k = s
            .strip_prefix("first_last(")?
            .strip_suffix(')')?
            .parse()
            .ok()?;
        Some(SelectionPolicy::FirstLast(k))
    }
}

pub fn select_training_frames(ds: &Dataset, policy: SelectionPolicy) -> Result<Dataset> {
    match policy {
        SelectionPolicy::AllLabeled => Ok(ds.filtered(|f| f.label.is_some())),
        SelectionPolicy::FirstLast(k) => {
            let neutral = ds.labels.neutral.ok_or_else(|| {
                Error::Config("first_last selection needs a neutral label".into())
            })?;
            let mut out = ds.filtered(|_| false);
            for range in ds.sequence_ranges() {
                let Some(label) = ds.sequence_label(range.clone()) else {
                    continue;
                };
                let len = range.len();
                let head = k.min(len.div_ceil(2));
                let tail_start = len.saturating_sub(k).max(head);
                for (i, f) in ds.frames[range].iter().enumerate() {
                    let l = if i < head {
                        neutral
                    } else if i >= tail_start {
                        label
                    } else {
                        continue;
                    };
                    out.frames.push(f.clone().with_label(Some(l)));
                }
            }
            Ok(out)
        }
    }
}

/// Generates a corpus and writes `manifest.csv`, its header, and the
/// images (when configured) under `dir`.
pub fn write_corpus(cfg: &GeneratorConfig, dir: &Path) -> Result<Dataset> {
    let ds = generate_corpus(cfg)?;
    fs::create_dir_all(dir)?;
    if cfg.render_images {
        let results = parallel::map_slice(&ds.frames, |f| -> Result<()> {
            let rel = f.image.as_ref().expect("rendered corpus has image paths");
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            save_pgm(&path, &render_image(&f.landmarks))
        });
        results.into_iter().collect::<Result<Vec<_>>>()?;
    }
    write_manifest(&dir.join("manifest.csv"), &ds)?;
    fs::write(
        dir.join("generator.json"),
        serde_json::to_string_pretty(cfg)? + "\n",
    )?;
    Ok(ds)
}

/// Loads the images of `frames` (relative to `root`) and attaches their
/// integral channels. Frames without an image path are left untouched.
pub fn attach_channels(frames: &mut [LandmarkFrame], root: &Path) -> Result<()> {
    let built = parallel::map_slice(frames, |f| -> Result<Option<_>> {
        match &f.image {
            None => Ok(None),
            Some(rel) => Ok(Some(Arc::new(build_channels(&load_pgm(&root.join(rel))?)?))),
        }
    });
    for (f, c) in frames.iter_mut().zip(built) {
        if let Some(c) = c? {
            f.channels = Some(c);
        }
    }
    Ok(())
}

/// Renders blob images directly from the landmarks and attaches their
/// channels, without touching the filesystem.
pub fn attach_rendered_channels(frames: &mut [LandmarkFrame]) -> Result<()> {
    let built = parallel::map_slice(frames, |f| {
        build_channels(&render_image(&f.landmarks)).map(Arc::new)
    });
    for (f, c) in frames.iter_mut().zip(built) {
        f.channels = Some(c?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::GeneratorConfig;

    fn small_cfg() -> GeneratorConfig {
        GeneratorConfig {
            n_subjects: 2,
            n_sequences_per_subject: 2,
            frames_per_sequence: 12,
            ..GeneratorConfig::default()
        }
    }

    fn same(a: &Dataset, b: &Dataset) {
        assert_eq!(a.layout, b.layout);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.subjects, b.subjects);
        assert_eq!(a.sequences, b.sequences);
        assert_eq!(a.frames.len(), b.frames.len());
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(
                (
                    x.subject,
                    x.sequence,
                    x.frame_index,
                    x.label,
                    x.pose,
                    &x.landmarks,
                    &x.image
                ),
                (
                    y.subject,
                    y.sequence,
                    y.frame_index,
                    y.label,
                    y.pose,
                    &y.landmarks,
                    &y.image
                )
            );
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_corpus(&small_cfg()).unwrap();
        let path = dir.path().join("m.csv");
        write_manifest(&path, &ds).unwrap();
        let back = load_manifest(&path).unwrap();
        same(&ds, &back);
        // absent labels survive
        assert!(back.frames.iter().any(|f| f.label.is_none()));
    }

    fn corrupt(edit: impl Fn(&mut Vec<String>)) -> Error {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_corpus(&small_cfg()).unwrap();
        let path = dir.path().join("m.csv");
        write_manifest(&path, &ds).unwrap();
        let mut lines: Vec<String> = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        edit(&mut lines);
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        load_manifest(&path).unwrap_err()
    }

    fn line_of(e: &Error) -> usize {
        match e {
            Error::Parse { line, .. } => *line,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn short_row_names_its_line() {
        let e = corrupt(|l| {
            let mut fields: Vec<&str> = l[5].split(',').collect();
            fields.truncate(fields.len() - 2);
            l[5] = fields.join(",");
        });
        assert_eq!(line_of(&e), 6);
    }

    #[test]
    fn non_monotone_frames_are_rejected() {
        // file lines 4 and 5 swap; line 5 then goes backwards
        let e = corrupt(|l| l.swap(3, 4));
        assert_eq!(line_of(&e), 5);
    }

    #[test]
    fn interleaved_sequences_are_rejected() {
        // move a row of the first sequence after the second sequence
        let e = corrupt(|l| {
            let row = l.remove(12);
            l.insert(20, row);
        });
        assert!(matches!(e, Error::Parse { .. }));
    }

    #[test]
    fn unknown_label_is_rejected() {
        let e = corrupt(|l| {
            let mut fields: Vec<String> = l[2].split(',').map(String::from).collect();
            fields[3] = "joy".into();
            l[2] = fields.join(",");
        });
        assert_eq!(line_of(&e), 3);
    }

    #[test]
    fn first_last_selection() {
        let cfg = GeneratorConfig {
            n_subjects: 1,
            n_sequences_per_subject: 1,
            frames_per_sequence: 20,
            ..GeneratorConfig::default()
        };
        let ds = generate_corpus(&cfg).unwrap();
        let sel = select_training_frames(&ds, SelectionPolicy::FirstLast(3)).unwrap();
        assert_eq!(sel.frames.len(), 6);
        let seq_label = ds.sequence_label(0..20).unwrap();
        let labels: Vec<_> = sel.frames.iter().map(|f| f.label.unwrap()).collect();
        assert_eq!(labels, vec![0, 0, 0, seq_label, seq_label, seq_label]);
        assert_eq!(sel.frames[3].frame_index, 17);

        let short = ds.filtered(|f| f.frame_index >= 16);
        let sel = select_training_frames(&short, SelectionPolicy::FirstLast(3)).unwrap();
        assert_eq!(sel.frames.len(), 4);
        let idx: Vec<u32> = sel.frames.iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, vec![16, 17, 18, 19]);
    }

    #[test]
    fn all_labeled_is_identity_on_labeled_corpus() {
        let ds = generate_corpus(&small_cfg()).unwrap();
        let labeled = ds.filtered(|f| f.label.is_some());
        let sel = select_training_frames(&labeled, SelectionPolicy::AllLabeled).unwrap();
        same(&labeled, &sel);
        assert_eq!(
            SelectionPolicy::parse("first_last(3)"),
            Some(SelectionPolicy::FirstLast(3))
        );
        assert_eq!(
            SelectionPolicy::parse("all_labeled"),
            Some(SelectionPolicy::AllLabeled)
        );
        assert_eq!(SelectionPolicy::parse("first(3)"), None);
    }

    #[test]
    fn written_corpus_is_byte_identical() {
        let cfg = GeneratorConfig {
            n_subjects: 1,
            n_sequences_per_subject: 1,
            frames_per_sequence: 3,
            render_images: true,
            ..GeneratorConfig::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ds = write_corpus(&cfg, a.path()).unwrap();
        write_corpus(&cfg, b.path()).unwrap();
        for name in ["manifest.csv", "manifest.json"] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap()
            );
        }
        let img = ds.frames[0].image.clone().unwrap();
        assert_eq!(
            fs::read(a.path().join(&img)).unwrap(),
            fs::read(b.path().join(&img)).unwrap()
        );

        let mut loaded = load_manifest(&a.path().join("manifest.csv")).unwrap();
        attach_channels(&mut loaded.frames, a.path()).unwrap();
        assert!(loaded.has_channels());
    }
}
