//! Video records, manifests, temporal segmentation, train/test splits and a
//! synthetic motion dataset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::GrayImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "-",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "-" | "" => Ok(Split::Unassigned),
            other => Err(Error::Format(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub frames_dir: PathBuf,
    pub mask_dir: Option<PathBuf>,
    pub label: String,
    pub split: Split,
}

/// Reads a manifest: one `frames_dir<TAB>mask_dir_or_dash<TAB>label<TAB>split_or_dash`
/// record per line. Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<VideoRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "{}:{}: expected 4 tab-separated fields, found {}",
                path.display(),
                n + 1,
                fields.len()
            )));
        }
        records.push(VideoRecord {
            frames_dir: resolve(fields[0]),
            mask_dir: (fields[1] != "-").then(|| resolve(fields[1])),
            label: fields[2].to_string(),
            split: fields[3].parse()?,
        });
    }
    Ok(records)
}

/// Writes records as manifest lines, with paths made relative to `base`
/// where possible.
pub fn write_manifest(path: impl AsRef<Path>, records: &[VideoRecord], base: &Path) -> Result<()> {
    let path = path.as_ref();
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
    let mut text = String::new();
    for r in records {
        let mask = r.mask_dir.as_deref().map(rel).unwrap_or_else(|| "-".into());
        text.push_str(&format!("{}\t{mask}\t{}\t{}\n", rel(&r.frames_dir), r.label, r.split));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Frames of one video with optional binary foreground masks.
#[derive(Debug, Clone)]
pub struct Video {
    pub frames: Vec<GrayImage>,
    pub masks: Option<Vec<GrayImage>>,
}

fn numbered_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indexed = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("pgm" | "png")) {
            continue;
        }
        let Some(index) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        indexed.push((index, path));
    }
    indexed.sort();
    if indexed.is_empty() {
        return Err(Error::Format(format!("no numbered frames in {}", dir.display())));
    }
    let first = indexed[0].0;
    for (k, (index, _)) in indexed.iter().enumerate() {
        let expected = first + k as u64;
        if *index != expected {
            return Err(Error::NonContiguousSequence {
                dir: dir.to_path_buf(),
                missing: expected,
            });
        }
    }
    Ok(indexed.into_iter().map(|(_, p)| p).collect())
}

/// Loads frames in numeric order and masks binarized at 0.5.
pub fn load_video(record: &VideoRecord) -> Result<Video> {
    let frames = numbered_files(&record.frames_dir)?
        .iter()
        .map(GrayImage::load)
        .collect::<Result<Vec<_>>>()?;
    let masks = match &record.mask_dir {
        None => None,
        Some(dir) => {
            let files = numbered_files(dir)?;
            if files.len() != frames.len() {
                return Err(Error::MaskCountMismatch {
                    frames: frames.len(),
                    masks: files.len(),
                });
            }
            let masks = files
                .iter()
                .map(|p| {
                    let m = GrayImage::load(p)?;
                    Ok(GrayImage::from_fn(m.width(), m.height(), |x, y| {
                        if m.get(x, y) >= 0.5 { 1.0 } else { 0.0 }
                    }))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(masks)
        }
    };
    if let Some(f) = frames.iter().find(|f| f.dims() != frames[0].dims()) {
        let (w, h) = frames[0].dims();
        return Err(Error::FrameSizeMismatch(w, h, f.width(), f.height()));
    }
    Ok(Video { frames, masks })
}

/// Half-open frame intervals covering a video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPlan {
    pub n: usize,
    pub boundaries: Vec<(usize, usize)>,
}

/// `n - 1` segments of `frame_count / n` frames, the last one taking the
/// remainder.
pub fn plan_segments(frame_count: usize, n: usize) -> Result<SegmentPlan> {
    if n == 0 || frame_count < 2 * n {
        return Err(Error::VideoTooShort {
            frames: frame_count,
            segments: n,
        });
    }
    let len = frame_count / n;
    let boundaries = (0..n)
        .map(|i| (i * len, if i + 1 == n { frame_count } else { (i + 1) * len }))
        .collect();
    Ok(SegmentPlan { n, boundaries })
}

/// Labels in lexicographic order.
pub fn class_labels(records: &[VideoRecord]) -> Vec<String> {
    let mut labels: Vec<String> = records.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    labels
}

fn group_by_class(records: &[VideoRecord]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.label.as_str()).or_default().push(i);
    }
    groups
}

/// Marks exactly `per_class_train` seeded random records of every class as
/// training data and the rest as test data.
pub fn split_dataset(records: &[VideoRecord], per_class_train: usize, seed: u64) -> Result<Vec<VideoRecord>> {
    let groups = group_by_class(records);
    for (class, idx) in &groups {
        if idx.len() <= per_class_train {
            return Err(Error::TooFewRecords {
                class: class.to_string(),
                available: idx.len(),
                required: per_class_train,
            });
        }
    }
    Ok(assign(records, groups, seed, |_| per_class_train))
}

/// Fractional variant: `round(fraction * class size)` training records per
/// class, at least one and leaving at least one for testing.
pub fn split_dataset_fraction(records: &[VideoRecord], fraction: f64, seed: u64) -> Result<Vec<VideoRecord>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig("split fraction must lie in (0, 1)".into()));
    }
    let groups = group_by_class(records);
    for (class, idx) in &groups {
        if idx.len() < 2 {
            return Err(Error::TooFewRecords {
                class: class.to_string(),
                available: idx.len(),
                required: 1,
            });
        }
    }
    Ok(assign(records, groups, seed, |n| {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    }))
}

fn assign(
    records: &[VideoRecord],
    groups: BTreeMap<&str, Vec<usize>>,
    seed: u64,
    train_count: impl Fn(usize) -> usize,
) -> Vec<VideoRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = records.to_vec();
    for (_, mut idx) in groups {
        let k = train_count(idx.len());
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            out[i].split = if j < k { Split::Train } else { Split::Test };
        }
    }
    out
}

/// Motion patterns the synthetic generator can give a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionFamily {
    TranslateRight,
    TranslateDown,
    OscillateHorizontal,
    Rotate,
    TranslateLeft,
    TranslateUp,
    OscillateVertical,
}

impl MotionFamily {
    pub const ALL: [MotionFamily; 7] = [
        MotionFamily::TranslateRight,
        MotionFamily::TranslateDown,
        MotionFamily::OscillateHorizontal,
        MotionFamily::Rotate,
        MotionFamily::TranslateLeft,
        MotionFamily::TranslateUp,
        MotionFamily::OscillateVertical,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MotionFamily::TranslateRight => "translate-right",
            MotionFamily::TranslateDown => "translate-down",
            MotionFamily::OscillateHorizontal => "oscillate-horizontal",
            MotionFamily::Rotate => "rotate",
            MotionFamily::TranslateLeft => "translate-left",
            MotionFamily::TranslateUp => "translate-up",
            MotionFamily::OscillateVertical => "oscillate-vertical",
        }
    }
}

/// Synthetic dataset description.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub class_count: usize,
    pub sequences_per_class: usize,
    pub frame_count: usize,
    pub frame_size: (usize, usize),
    /// Translation speed in pixels per frame.
    pub speed: i64,
    /// Rotation speed in radians per frame.
    pub angular_speed: f64,
    pub oscillation_amplitude: f64,
    pub oscillation_period: f64,
    /// Largest deviation of the oscillation's starting phase from zero, in
    /// radians. Reversals that fall inside a segment stop most particles, so
    /// a fully random phase makes segment canvases erratic.
    pub phase_jitter: f64,
    pub blob_radius: f64,
    /// Largest offset, per axis, of a sequence's motion path from the frame
    /// center.
    pub position_jitter: usize,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            class_count: 4,
            sequences_per_class: 20,
            frame_count: 16,
            frame_size: (88, 88),
            speed: 3,
            angular_speed: 0.3,
            oscillation_amplitude: 8.0,
            oscillation_period: 16.0,
            phase_jitter: std::f64::consts::PI / 8.0,
            blob_radius: 12.0,
            position_jitter: 6,
            noise: 0.005,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth: {m}")));
        if self.class_count == 0 || self.class_count > MotionFamily::ALL.len() {
            return bad("class_count must be between 1 and 7");
        }
        if self.sequences_per_class == 0 || self.frame_count < 2 {
            return bad("need sequences and at least two frames");
        }
        if !(self.oscillation_period > 0.0) || !(self.phase_jitter >= 0.0) || !(self.noise >= 0.0) {
            return bad("oscillation_period must be > 0, phase_jitter and noise >= 0");
        }
        let (w, h) = self.frame_size;
        let travel = self.speed.unsigned_abs() as f64 * (self.frame_count - 1) as f64;
        let need = 2.0 * (self.blob_radius + 2.0) + travel.max(2.0 * self.oscillation_amplitude)
            + 2.0 * self.position_jitter as f64;
        if (w.min(h) as f64) < need {
            return bad("frame too small for the blob and its motion");
        }
        Ok(())
    }

    pub fn families(&self) -> &[MotionFamily] {
        &MotionFamily::ALL[..self.class_count]
    }
}

/// Sum of sinusoids; smooth, textured and exactly evaluable anywhere.
struct Waves(Vec<(f64, f64, f64, f64)>);

impl Waves {
    fn random(rng: &mut ChaCha8Rng, count: usize, amp: f64) -> Self {
        Waves(
            (0..count)
                .map(|_| {
                    let f: f64 = rng.random_range(0.2..0.7);
                    let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    let ph = rng.random_range(0.0..std::f64::consts::TAU);
                    (f * a.cos(), f * a.sin(), ph, amp)
                })
                .collect(),
        )
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.0.iter().map(|(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin()).sum()
    }
}

/// One synthetic sequence with its exact foreground masks.
pub struct SynthSequence {
    pub frames: Vec<GrayImage>,
    pub masks: Vec<GrayImage>,
    /// Blob center in every frame.
    pub centers: Vec<(f64, f64)>,
}

/// Renders sequence `index` of a class in memory.
pub fn synth_sequence(spec: &SynthSpec, family: MotionFamily, class: usize, index: usize) -> SynthSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((class * 100_003 + index) as u64 + 1);
    let (w, h) = spec.frame_size;
    let r = spec.blob_radius;
    let travel = spec.speed * (spec.frame_count as i64 - 1);
    let j = spec.position_jitter as i64;
    let mut jitter = || if j > 0 { rng.random_range(-j..=j) } else { 0 };
    // the path is centered in the frame up to the jitter; integer positions
    // keep translated masks shifting by exactly `speed` pixels
    let (px, py) = ((w / 2) as i64 + jitter(), (h / 2) as i64 + jitter());
    let (x0, y0) = match family {
        MotionFamily::TranslateRight => (px - travel / 2, py),
        MotionFamily::TranslateLeft => (px + travel / 2, py),
        MotionFamily::TranslateDown => (px, py - travel / 2),
        MotionFamily::TranslateUp => (px, py + travel / 2),
        _ => (px, py),
    };
    let phase = if spec.phase_jitter > 0.0 {
        rng.random_range(-spec.phase_jitter..=spec.phase_jitter)
    } else {
        0.0
    };
    let blob = Waves::random(&mut rng, 6, 0.12);
    let background = Waves::random(&mut rng, 4, 0.03);
    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("finite noise");

    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut masks = Vec::with_capacity(spec.frame_count);
    let mut centers = Vec::with_capacity(spec.frame_count);
    for t in 0..spec.frame_count {
        let tf = t as f64;
        let osc = spec.oscillation_amplitude * (std::f64::consts::TAU * tf / spec.oscillation_period + phase).sin();
        let s = (spec.speed * t as i64) as f64;
        let (cx, cy, angle) = match family {
            MotionFamily::TranslateRight => (x0 as f64 + s, y0 as f64, 0.0),
            MotionFamily::TranslateLeft => (x0 as f64 - s, y0 as f64, 0.0),
            MotionFamily::TranslateDown => (x0 as f64, y0 as f64 + s, 0.0),
            MotionFamily::TranslateUp => (x0 as f64, y0 as f64 - s, 0.0),
            MotionFamily::OscillateHorizontal => (x0 as f64 + osc, y0 as f64, 0.0),
            MotionFamily::OscillateVertical => (x0 as f64, y0 as f64 + osc, 0.0),
            MotionFamily::Rotate => (x0 as f64, y0 as f64, spec.angular_speed * tf),
        };
        let (sin, cos) = angle.sin_cos();
        let mut frame = GrayImage::zeros(w, h);
        let mut mask = GrayImage::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let value = if dx * dx + dy * dy <= r * r {
                    mask.set(x, y, 1.0);
                    // texture coordinates rotate with the blob
                    let (lx, ly) = (cos * dx + sin * dy, -sin * dx + cos * dy);
                    0.6 + blob.at(lx, ly)
                } else {
                    0.25 + background.at(x as f64, y as f64)
                };
                let n = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                frame.set(x, y, (value + n).clamp(0.0, 1.0));
            }
        }
        frames.push(frame);
        masks.push(mask);
        centers.push((cx, cy));
    }
    SynthSequence {
        frames,
        masks,
        centers,
    }
}

/// Writes every synthetic sequence under `out_dir` as PGM frames and masks,
/// plus `manifest.tsv`, and returns the records.
pub fn synth_generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Vec<VideoRecord>> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let digits = spec.frame_count.to_string().len().max(4);
    let mut records = Vec::new();
    for (class, family) in spec.families().iter().enumerate() {
        for index in 0..spec.sequences_per_class {
            let seq = synth_sequence(spec, *family, class, index);
            let root = out_dir.join(family.name()).join(format!("{:03}", index));
            let frames_dir = root.join("frames");
            let mask_dir = root.join("masks");
            for dir in [&frames_dir, &mask_dir] {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            for (t, (f, m)) in seq.frames.iter().zip(&seq.masks).enumerate() {
                f.save(frames_dir.join(format!("{t:0digits$}.pgm")))?;
                m.save(mask_dir.join(format!("{t:0digits$}.pgm")))?;
            }
            records.push(VideoRecord {
                frames_dir,
                mask_dir: Some(mask_dir),
                label: family.name().to_string(),
                split: Split::Unassigned,
            });
        }
    }
    write_manifest(out_dir.join("manifest.tsv"), &records, out_dir)?;
    Ok(records)
}
