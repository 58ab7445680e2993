//! `deeptraj` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 when the
//! input data cannot be processed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deeptraj::advect::{extract_trajectories, filter_trajectories, write_trajectories_csv};
use deeptraj::cnn::{self, CnnModel};
use deeptraj::dataset::{
    class_labels, load_video, plan_segments, read_manifest, split_dataset, synth_generate, write_manifest, Split,
    VideoRecord,
};
use deeptraj::eval::{evaluate, prepare_stacks, report, run_pipeline, segment_flows, PipelineConfig};
use deeptraj::flow::compute_flow;
use deeptraj::image::GrayImage;
use deeptraj::Error;

#[derive(Parser)]
#[command(name = "deeptraj", version, about = "Trajectory-texture action recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,

    /// Output file or directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Optical flow between two frames, written as .flo
    Flow {
        prev: PathBuf,
        next: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Filtered trajectories of a frame sequence as CSV
    Traj {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Only this segment of the configured segment plan
        #[arg(long)]
        segment: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-segment texture images of a frame sequence
    Canvas {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        masks: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic labeled motion dataset with a manifest
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train the network on the train split of a manifest
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a model on the test split and write reports
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}

fn config(common: &Common) -> deeptraj::Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> deeptraj::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> deeptraj::Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn record(frames: PathBuf, masks: Option<PathBuf>) -> VideoRecord {
    VideoRecord {
        frames_dir: frames,
        mask_dir: masks,
        label: String::new(),
        split: Split::Unassigned,
    }
}

/// Manifest records, with a seeded split assigned when the manifest carries
/// none.
fn assigned_records(manifest: &Path, cfg: &PipelineConfig) -> deeptraj::Result<Vec<VideoRecord>> {
    // resolving against the absolute manifest location keeps record paths
    // valid wherever a derived manifest is written
    let manifest = std::fs::canonicalize(manifest).map_err(|e| Error::io(manifest, e))?;
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if records.iter().all(|r| r.split == Split::Unassigned) {
        return split_dataset(&records, cfg.per_class_train, cfg.seed);
    }
    Ok(records)
}

fn only(records: &[VideoRecord], split: Split) -> Vec<VideoRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}

fn run(command: Command) -> deeptraj::Result<()> {
    match command {
        Command::Flow { prev, next, common } => {
            let cfg = config(&common)?;
            let flow = compute_flow(&GrayImage::load(prev)?, &GrayImage::load(next)?, &cfg.flow)?;
            flow.save_flo(&common.out)
        }
        Command::Traj {
            frames,
            masks,
            segment,
            common,
        } => {
            let cfg = config(&common)?;
            let video = load_video(&record(frames, masks))?;
            let (start, end) = match segment {
                None => (0, video.frames.len()),
                Some(k) => {
                    let plan = plan_segments(video.frames.len(), cfg.segments)?;
                    *plan.boundaries.get(k).ok_or_else(|| {
                        Error::InvalidConfig(format!("segment {k} out of range for {} segments", plan.n))
                    })?
                }
            };
            let seg_masks = video.masks.as_ref().map(|m| &m[start..end]);
            let flows = segment_flows(&video.frames[start..end], seg_masks, &cfg)?;
            let step_masks = seg_masks.map(|m| &m[..flows.len()]);
            let trajs = filter_trajectories(
                extract_trajectories(&flows, step_masks, &cfg.advect)?,
                cfg.advect.min_extent,
            );
            write_trajectories_csv(&trajs, create_file(&common.out)?).map_err(|e| Error::io(&common.out, e))
        }
        Command::Canvas { frames, masks, common } => {
            let cfg = config(&common)?;
            let stack = run_pipeline(&record(frames, masks), &cfg)?;
            create_dir(&common.out)?;
            for (k, channel) in stack.channels().iter().enumerate() {
                channel.save_image(common.out.join(format!("segment_{k}.png")))?;
                let path = common.out.join(format!("segment_{k}.dtc"));
                channel.write_raw(create_file(&path)?).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Synth { common } => {
            let cfg = config(&common)?;
            let mut spec = cfg.synth.clone();
            spec.seed = cfg.seed;
            let records = synth_generate(&spec, &common.out)?;
            println!("{} sequences in {}", records.len(), common.out.display());
            Ok(())
        }
        Command::Train { manifest, common } => {
            let cfg = config(&common)?;
            let records = assigned_records(&manifest, &cfg)?;
            let classes = class_labels(&records);
            let stacks = prepare_stacks(&only(&records, Split::Train), &classes, &cfg)?;
            let (model, trace) = cnn::train(&stacks, &cfg.network_for(classes.len()))?;
            create_dir(&common.out)?;
            model.save(common.out.join("model.dtrj"))?;
            write_manifest(common.out.join("split.tsv"), &records, Path::new(""))?;
            let mut loss = String::from("epoch,loss\n");
            for (i, l) in trace.epoch_loss.iter().enumerate() {
                loss.push_str(&format!("{},{l}\n", i + 1));
            }
            let path = common.out.join("loss.csv");
            std::fs::write(&path, loss).map_err(|e| Error::io(&path, e))?;
            println!(
                "trained on {} sequences, final loss {:.6}",
                stacks.len(),
                trace.epoch_loss.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Eval { manifest, model, common } => {
            let cfg = config(&common)?;
            let model = CnnModel::load(model)?;
            let records = assigned_records(&manifest, &cfg)?;
            let classes = class_labels(&records);
            let eval = evaluate(&model, &only(&records, Split::Test), &classes, &cfg)?;
            report(&eval, &common.out)?;
            println!("accuracy {:.4}, error rate {:.4}", eval.accuracy, eval.error_rate());
            Ok(())
        }
    }
}
