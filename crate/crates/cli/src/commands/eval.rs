use std::path::PathBuf;

use clap::Args;
use poselift::data::load_poses;
use poselift::metrics::{default_auc_grid, pelvis_adjust, retarget, EvalReport};
use poselift::pipeline::load_checkpoint;
use poselift::skeleton::{Frame, Pose3D};

use crate::CliError;

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate (runs the model on the data's 2d poses)
    #[arg(long, conflicts_with = "pred")]
    pub checkpoint: Option<PathBuf>,
    /// Predictions pose file to score instead of running a model
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Labeled pose file with 3d ground truth
    #[arg(long)]
    pub data: PathBuf,
    /// PCK threshold in millimeters
    #[arg(long, default_value_t = 150.0)]
    pub pck_threshold: f64,
    /// Re-target predictions to ground-truth bone lengths before scoring
    #[arg(long)]
    pub retarget: bool,
    /// Move pelvis and hips toward the neck by this ratio before scoring
    /// (0 disables)
    #[arg(long, default_value_t = 0.0)]
    pub pelvis_adjust: f64,
    /// Write the line-delimited report here (the table always prints)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Custom topology (only with --pred; checkpoints embed theirs)
    #[arg(long)]
    pub topology: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    if args.pck_threshold <= 0.0 {
        return Err(CliError::Usage("--pck-threshold must be positive".into()));
    }

    let (topo, mut preds, tags, gts) = match (&args.checkpoint, &args.pred) {
        (Some(ckpt_path), None) => {
            let bundle = load_checkpoint(ckpt_path)?;
            let topo = bundle.topology.clone();
            let data = load_poses(&args.data, &topo)?;
            let mut preds = Vec::with_capacity(data.len());
            let mut tags = Vec::with_capacity(data.len());
            let mut gts = Vec::with_capacity(data.len());
            for (i, s) in data.iter().enumerate() {
                let gt = s.y3d.as_ref().ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: sample {i} has no 3d ground truth to evaluate against",
                        args.data.display()
                    ))
                })?;
                let vis = if s.all_visible() {
                    None
                } else {
                    Some(&s.visibility[..])
                };
                let (p3, _) = bundle.predict(&s.y2d, vis)?;
                preds.push(p3);
                tags.push(s.source_tag.clone());
                gts.push(center(gt, &topo)?);
            }
            (topo, preds, tags, gts)
        }
        (None, Some(pred_path)) => {
            let topo = super::load_topology(args.topology.as_deref())?;
            let data = load_poses(&args.data, &topo)?;
            let pred_samples = load_poses(pred_path, &topo)?;
            if pred_samples.len() != data.len() {
                return Err(CliError::Data(format!(
                    "{} has {} records, {} has {}",
                    pred_path.display(),
                    pred_samples.len(),
                    args.data.display(),
                    data.len()
                )));
            }
            let mut preds = Vec::new();
            let mut tags = Vec::new();
            let mut gts = Vec::new();
            for (i, (p, d)) in pred_samples.iter().zip(&data).enumerate() {
                let pred3 = p.y3d.as_ref().ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: record {i} carries no 3d pose",
                        pred_path.display()
                    ))
                })?;
                let gt3 = d.y3d.as_ref().ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: sample {i} has no 3d ground truth",
                        args.data.display()
                    ))
                })?;
                preds.push(center(pred3, &topo)?);
                tags.push(d.source_tag.clone());
                gts.push(center(gt3, &topo)?);
            }
            (topo, preds, tags, gts)
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --checkpoint or --pred is required".into(),
            ))
        }
    };

    if args.retarget {
        for (p, g) in preds.iter_mut().zip(&gts) {
            let target_lengths = g.bone_lengths(&topo)?;
            *p = retarget(p, &target_lengths, &topo)?;
        }
    }
    if args.pelvis_adjust != 0.0 {
        for p in preds.iter_mut() {
            *p = pelvis_adjust(p, &topo, args.pelvis_adjust)?;
        }
    }

    let report = EvalReport::compute(
        &preds,
        &gts,
        &tags,
        &topo,
        args.pck_threshold,
        &default_auc_grid(),
    )?;
    print!("{}", report.table());
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_jsonl())
            .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
        println!("report: {}", out.display());
    }
    Ok(())
}

fn center(
    pose: &Pose3D,
    topo: &poselift::skeleton::SkeletonTopology,
) -> Result<Pose3D, CliError> {
    Ok(match pose.frame() {
        Frame::Raw => pose.root_center(topo)?,
        Frame::RootCentered => pose.clone(),
        Frame::Normalized => {
            return Err(CliError::Data(
                "normalized poses cannot be evaluated".into(),
            ))
        }
    })
}
