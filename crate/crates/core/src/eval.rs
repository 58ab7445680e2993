//! End-to-end pipeline, evaluation and reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::advect::{extract_trajectories, filter_trajectories, AdvectParams};
use crate::canvas::{build_stack, normalize, render_canvas, resize_bilinear, TextureStack, DESCRIPTOR_SIZE};
use crate::cnn::{CnnModel, ConvSpec, NetworkConfig, PoolSpec};
use crate::dataset::{class_labels, load_video, plan_segments, Split, SynthSpec, VideoRecord};
use crate::flow::{compute_flow, FlowField, FlowParams};
use crate::{Error, Result};

/// Everything needed to go from a video to a prediction.
///
/// `network.input_channels`, `input_size` and `class_count` are placeholders;
/// [`PipelineConfig::network_for`] fills them in from the segment count,
/// canvas size and the labels of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub flow: FlowParams,
    pub advect: AdvectParams,
    pub segments: usize,
    pub canvas_size: usize,
    pub network: NetworkConfig,
    pub per_class_train: usize,
    pub synth: SynthSpec,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            flow: FlowParams::default(),
            advect: AdvectParams::default(),
            segments: 3,
            canvas_size: DESCRIPTOR_SIZE,
            network: NetworkConfig::compact(3, 2),
            per_class_train: 6,
            synth: SynthSpec::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.advect.validate()?;
        if self.segments == 0 || self.canvas_size == 0 {
            return Err(Error::InvalidConfig("segments and canvas_size must be >= 1".into()));
        }
        self.network_for(2).validate()
    }

    /// Network configuration for `class_count` classes, seeded from `seed`.
    pub fn network_for(&self, class_count: usize) -> NetworkConfig {
        let mut net = self.network.clone();
        net.input_channels = self.segments;
        net.input_size = self.canvas_size;
        net.class_count = class_count;
        net.fc[2] = class_count;
        net.seed = self.seed;
        net
    }

    /// Parses `key = value` lines. `#` starts a comment; omitted keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        let net = &mut self.network;
        let stage = |prefix: &str| {
            key.strip_prefix(prefix)
                .and_then(|rest| rest.split_once('.'))
                .and_then(|(i, field)| Some((i.parse::<usize>().ok()?.checked_sub(1)?, field)))
                .filter(|(i, _)| *i < 4)
        };
        match key {
            "seed" => self.seed = p(key, value)?,
            "segments" => self.segments = p(key, value)?,
            "canvas_size" => self.canvas_size = p(key, value)?,
            "per_class_train" => self.per_class_train = p(key, value)?,
            "flow.alpha" => self.flow.alpha = p(key, value)?,
            "flow.gamma" => self.flow.gamma = p(key, value)?,
            "flow.pyramid_factor" => self.flow.pyramid_factor = p(key, value)?,
            "flow.min_level_size" => self.flow.min_level_size = p(key, value)?,
            "flow.outer_iterations" => self.flow.outer_iterations = p(key, value)?,
            "flow.inner_iterations" => self.flow.inner_iterations = p(key, value)?,
            "flow.sor_relaxation" => self.flow.sor_relaxation = p(key, value)?,
            "flow.epsilon" => self.flow.epsilon = p(key, value)?,
            "advect.stride" => self.advect.stride = p(key, value)?,
            "advect.min_extent" => self.advect.min_extent = p(key, value)?,
            "advect.coherence_cos_min" => self.advect.coherence_cos_min = p(key, value)?,
            "advect.magnitude_min" => self.advect.magnitude_min = p(key, value)?,
            "advect.use_foreground_mask" => self.advect.use_foreground_mask = p(key, value)?,
            "net.lrn.depth" => net.lrn.depth = p(key, value)?,
            "net.lrn.k" => net.lrn.k = p(key, value)?,
            "net.lrn.alpha" => net.lrn.alpha = p(key, value)?,
            "net.lrn.beta" => net.lrn.beta = p(key, value)?,
            "net.fc1" => net.fc[0] = p(key, value)?,
            "net.fc2" => net.fc[1] = p(key, value)?,
            "net.learning_rate" => net.learning_rate = p(key, value)?,
            "net.epochs" => net.epochs = p(key, value)?,
            "net.batch_size" => net.batch_size = p(key, value)?,
            "synth.class_count" => self.synth.class_count = p(key, value)?,
            "synth.sequences_per_class" => self.synth.sequences_per_class = p(key, value)?,
            "synth.frame_count" => self.synth.frame_count = p(key, value)?,
            "synth.width" => self.synth.frame_size.0 = p(key, value)?,
            "synth.height" => self.synth.frame_size.1 = p(key, value)?,
            "synth.speed" => self.synth.speed = p(key, value)?,
            "synth.angular_speed" => self.synth.angular_speed = p(key, value)?,
            "synth.oscillation_amplitude" => self.synth.oscillation_amplitude = p(key, value)?,
            "synth.oscillation_period" => self.synth.oscillation_period = p(key, value)?,
            "synth.phase_jitter" => self.synth.phase_jitter = p(key, value)?,
            "synth.blob_radius" => self.synth.blob_radius = p(key, value)?,
            "synth.position_jitter" => self.synth.position_jitter = p(key, value)?,
            "synth.noise" => self.synth.noise = p(key, value)?,
            _ => {
                if let Some((i, field)) = stage("net.conv") {
                    let c: &mut ConvSpec = &mut net.conv[i];
                    match field {
                        "filters" => c.filters = p(key, value)?,
                        "kernel" => c.kernel = p(key, value)?,
                        "stride" => c.stride = p(key, value)?,
                        _ => return Err(format!("unknown key {key:?}")),
                    }
                } else if let Some((i, field)) = stage("net.pool") {
                    let pl: &mut PoolSpec = &mut net.pool[i];
                    match field {
                        "window" => pl.window = p(key, value)?,
                        "stride" => pl.stride = p(key, value)?,
                        _ => return Err(format!("unknown key {key:?}")),
                    }
                } else {
                    return Err(format!("unknown key {key:?}"));
                }
            }
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`PipelineConfig::parse`]
    /// reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", &self.seed);
        kv("segments", &self.segments);
        kv("canvas_size", &self.canvas_size);
        kv("per_class_train", &self.per_class_train);
        let f = &self.flow;
        kv("flow.alpha", &f.alpha);
        kv("flow.gamma", &f.gamma);
        kv("flow.pyramid_factor", &f.pyramid_factor);
        kv("flow.min_level_size", &f.min_level_size);
        kv("flow.outer_iterations", &f.outer_iterations);
        kv("flow.inner_iterations", &f.inner_iterations);
        kv("flow.sor_relaxation", &f.sor_relaxation);
        kv("flow.epsilon", &f.epsilon);
        let a = &self.advect;
        kv("advect.stride", &a.stride);
        kv("advect.min_extent", &a.min_extent);
        kv("advect.coherence_cos_min", &a.coherence_cos_min);
        kv("advect.magnitude_min", &a.magnitude_min);
        kv("advect.use_foreground_mask", &a.use_foreground_mask);
        let n = &self.network;
        for (i, c) in n.conv.iter().enumerate() {
            kv(&format!("net.conv{}.filters", i + 1), &c.filters);
            kv(&format!("net.conv{}.kernel", i + 1), &c.kernel);
            kv(&format!("net.conv{}.stride", i + 1), &c.stride);
        }
        for (i, pl) in n.pool.iter().enumerate() {
            kv(&format!("net.pool{}.window", i + 1), &pl.window);
            kv(&format!("net.pool{}.stride", i + 1), &pl.stride);
        }
        kv("net.lrn.depth", &n.lrn.depth);
        kv("net.lrn.k", &n.lrn.k);
        kv("net.lrn.alpha", &n.lrn.alpha);
        kv("net.lrn.beta", &n.lrn.beta);
        kv("net.fc1", &n.fc[0]);
        kv("net.fc2", &n.fc[1]);
        kv("net.learning_rate", &n.learning_rate);
        kv("net.epochs", &n.epochs);
        kv("net.batch_size", &n.batch_size);
        let y = &self.synth;
        kv("synth.class_count", &y.class_count);
        kv("synth.sequences_per_class", &y.sequences_per_class);
        kv("synth.frame_count", &y.frame_count);
        kv("synth.width", &y.frame_size.0);
        kv("synth.height", &y.frame_size.1);
        kv("synth.speed", &y.speed);
        kv("synth.angular_speed", &y.angular_speed);
        kv("synth.oscillation_amplitude", &y.oscillation_amplitude);
        kv("synth.oscillation_period", &y.oscillation_period);
        kv("synth.phase_jitter", &y.phase_jitter);
        kv("synth.blob_radius", &y.blob_radius);
        kv("synth.position_jitter", &y.position_jitter);
        kv("synth.noise", &y.noise);
        s
    }
}

/// Pairwise flows of `frames`, each masked by the foreground of its first
/// frame when masking is on.
pub fn segment_flows(
    frames: &[crate::image::GrayImage],
    masks: Option<&[crate::image::GrayImage]>,
    cfg: &PipelineConfig,
) -> Result<Vec<FlowField>> {
    frames
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let flow = compute_flow(&pair[0], &pair[1], &cfg.flow)?;
            match masks {
                Some(m) if cfg.advect.use_foreground_mask => flow.masked(&m[k]),
                _ => Ok(flow),
            }
        })
        .collect()
}

/// Video to texture stack: segments, flows, trajectories, canvases.
pub fn run_pipeline(record: &VideoRecord, cfg: &PipelineConfig) -> Result<TextureStack> {
    let video = load_video(record).map_err(|e| e.in_stage("load"))?;
    let plan = plan_segments(video.frames.len(), cfg.segments).map_err(|e| e.in_stage("segment"))?;
    let (w, h) = video.frames[0].dims();
    let mut channels = Vec::with_capacity(plan.n);
    for &(start, end) in &plan.boundaries {
        let frames = &video.frames[start..end];
        let masks = video.masks.as_ref().map(|m| &m[start..end]);
        let flows = segment_flows(frames, masks, cfg).map_err(|e| e.in_stage("flow"))?;
        // one mask per flow: the frame each step starts from
        let step_masks = masks.map(|m| &m[..flows.len()]);
        let trajs = extract_trajectories(&flows, step_masks, &cfg.advect).map_err(|e| e.in_stage("advect"))?;
        let kept = filter_trajectories(trajs, cfg.advect.min_extent);
        let canvas = render_canvas(&kept, w, h).map_err(|e| e.in_stage("canvas"))?;
        channels.push(normalize(&resize_bilinear(&canvas, cfg.canvas_size, cfg.canvas_size)));
    }
    build_stack(channels, plan.n).map_err(|e| e.in_stage("stack"))
}

/// Runs the pipeline on every record and pairs each stack with the index of
/// its label in `classes`.
pub fn prepare_stacks(
    records: &[VideoRecord],
    classes: &[String],
    cfg: &PipelineConfig,
) -> Result<Vec<(TextureStack, usize)>> {
    records
        .iter()
        .map(|r| {
            let label = class_index(classes, &r.label)?;
            Ok((run_pipeline(r, cfg)?, label))
        })
        .collect()
}

fn class_index(classes: &[String], label: &str) -> Result<usize> {
    classes
        .iter()
        .position(|c| c == label)
        .ok_or_else(|| Error::Format(format!("label {label:?} not among the known classes")))
}

/// Per-true-class distribution over predicted classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Number of examples of every true class.
    pub support: Vec<usize>,
}

impl ConfusionMatrix {
    /// Builds a row-normalized matrix from `(true, predicted)` index pairs.
    pub fn from_pairs(classes: Vec<String>, pairs: &[(usize, usize)]) -> Result<Self> {
        let k = classes.len();
        let mut counts = vec![vec![0usize; k]; k];
        for &(t, p) in pairs {
            if t >= k || p >= k {
                return Err(Error::ShapeMismatch(format!("class index out of range for {k} classes")));
            }
            counts[t][p] += 1;
        }
        let support: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
        let rows = counts
            .iter()
            .zip(&support)
            .map(|(r, &n)| {
                r.iter()
                    .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                    .collect()
            })
            .collect();
        Ok(Self { classes, rows, support })
    }

    /// Classes with no test examples; their rows are all zero.
    pub fn unsupported(&self) -> Vec<&str> {
        self.classes
            .iter()
            .zip(&self.support)
            .filter(|(_, &n)| n == 0)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn recall(&self, class: usize) -> f64 {
        self.rows[class][class]
    }

    /// Mean recall over classes that have support.
    pub fn mean_recall(&self) -> f64 {
        let supported: Vec<usize> = (0..self.classes.len()).filter(|&i| self.support[i] > 0).collect();
        if supported.is_empty() {
            return 0.0;
        }
        supported.iter().map(|&i| self.recall(i)).sum::<f64>() / supported.len() as f64
    }

    /// Header row of class names, then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = self.classes.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Parses [`ConfusionMatrix::to_csv`] output. Support is not stored, so
    /// rows that are all zero come back with support 0 and the rest with 1.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty confusion csv".into()))?;
        let classes: Vec<String> = header.split(',').map(str::to_string).collect();
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("bad cell {v:?}"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != classes.len() || rows.iter().any(|r| r.len() != classes.len()) {
            return Err(Error::Format("confusion csv is not square".into()));
        }
        let support = rows.iter().map(|r| usize::from(r.iter().any(|&v| v != 0.0))).collect();
        Ok(Self { classes, rows, support })
    }
}

/// Outcome of scoring a model on a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// `(true, predicted)` per test example, in input order.
    pub pairs: Vec<(usize, usize)>,
}

impl Evaluation {
    pub fn error_rate(&self) -> f64 {
        1.0 - self.accuracy
    }
}

/// Scores prepared stacks.
pub fn evaluate_stacks(model: &CnnModel, test: &[(TextureStack, usize)], classes: &[String]) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if model.config.class_count != classes.len() {
        return Err(Error::ShapeMismatch(format!(
            "model predicts {} classes, dataset has {}",
            model.config.class_count,
            classes.len()
        )));
    }
    let pairs = test
        .iter()
        .map(|(s, y)| Ok((*y, model.predict(s)?.0)))
        .collect::<Result<Vec<_>>>()?;
    from_pairs(classes, pairs)
}

fn from_pairs(classes: &[String], pairs: Vec<(usize, usize)>) -> Result<Evaluation> {
    let correct = pairs.iter().filter(|(t, p)| t == p).count();
    let accuracy = correct as f64 / pairs.len() as f64;
    let confusion = ConfusionMatrix::from_pairs(classes.to_vec(), &pairs)?;
    Ok(Evaluation { accuracy, confusion, pairs })
}

/// Runs the pipeline on `test_records` and scores the model.
pub fn evaluate(
    model: &CnnModel,
    test_records: &[VideoRecord],
    classes: &[String],
    cfg: &PipelineConfig,
) -> Result<Evaluation> {
    if test_records.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let stacks = prepare_stacks(test_records, classes, cfg)?;
    evaluate_stacks(model, &stacks, classes)
}

/// Trains on the `train` records of a split dataset and evaluates on the
/// `test` records. Classes are the sorted labels of all records.
pub fn run_experiment(records: &[VideoRecord], cfg: &PipelineConfig) -> Result<(CnnModel, Evaluation)> {
    cfg.validate()?;
    let classes = class_labels(records);
    let stacks = prepare_stacks(records, &classes, cfg)?;
    let pick = |split| -> Vec<(TextureStack, usize)> {
        records
            .iter()
            .zip(&stacks)
            .filter(|(r, _)| r.split == split)
            .map(|(_, s)| s.clone())
            .collect()
    };
    let (train, test) = (pick(Split::Train), pick(Split::Test));
    let (model, _) = crate::cnn::train(&train, &cfg.network_for(classes.len()))?;
    let eval = evaluate_stacks(&model, &test, &classes)?;
    Ok((model, eval))
}

/// Writes `confusion.csv`, `summary.txt` and `recall.csv` into `out_dir`.
pub fn report(eval: &Evaluation, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cm = &eval.confusion;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("confusion.csv", cm.to_csv())?;

    let mut summary = format!(
        "test examples: {}\naccuracy: {:.6}\nerror rate: {:.6}\nmean recall: {:.6}\n",
        eval.pairs.len(),
        eval.accuracy,
        eval.error_rate(),
        cm.mean_recall()
    );
    for class in cm.unsupported() {
        let _ = writeln!(summary, "no test examples: {class}");
    }
    write("summary.txt", summary)?;

    let mut recall = String::from("class,support,recall\n");
    for (i, class) in cm.classes.iter().enumerate() {
        let _ = writeln!(recall, "{class},{},{:.6}", cm.support[i], cm.recall(i));
    }
    write("recall.csv", recall)
}
