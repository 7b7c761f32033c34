use std::path::PathBuf;

use clap::Args;
use poselift::data::{load_poses, save_poses, Sample};
use poselift::pipeline::load_checkpoint;

use crate::CliError;

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// 2d pose file to lift
    #[arg(long)]
    pub input: PathBuf,
    /// Output pose file with predicted 3d (and the input 2d)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: PredictArgs) -> Result<(), CliError> {
    let bundle = load_checkpoint(&args.checkpoint)?;
    let topo = bundle.topology.clone();
    let samples = load_poses(&args.input, &topo)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no samples to predict",
            args.input.display()
        )));
    }

    let mut out_samples = Vec::with_capacity(samples.len());
    let mut residual_sum = 0.0;
    let mut residual_joints = 0usize;
    for s in &samples {
        let vis = if s.all_visible() {
            None
        } else {
            Some(&s.visibility[..])
        };
        let (p3, reproj) = bundle.predict(&s.y2d, vis)?;

        // Mean 2d residual between the learned re-projection and the input,
        // in root-centered pixel space, visible joints only.
        let input_centered = match s.y2d.frame() {
            poselift::skeleton::Frame::Raw => s.y2d.root_center(&topo)?,
            _ => s.y2d.clone(),
        };
        for (j, (a, b)) in reproj
            .coords()
            .iter()
            .zip(input_centered.coords())
            .enumerate()
        {
            if s.visibility[j] {
                residual_sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                residual_joints += 1;
            }
        }

        out_samples.push(Sample {
            y2d: input_centered,
            y3d: Some(p3),
            visibility: s.visibility.clone(),
            source_tag: s.source_tag.clone(),
        });
    }

    let provenance = serde_json::json!({
        "produced_by": "poselift predict",
        "checkpoint": args.checkpoint.display().to_string(),
        "config": bundle.config_json(),
    });
    save_poses(&args.out, &out_samples, &topo, Some(provenance))?;
    println!(
        "predicted {} poses -> {}",
        out_samples.len(),
        args.out.display()
    );
    println!(
        "mean 2d reprojection residual: {:.3} px over {} visible joints",
        residual_sum / residual_joints.max(1) as f64,
        residual_joints
    );
    Ok(())
}
