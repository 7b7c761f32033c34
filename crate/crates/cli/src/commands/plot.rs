use std::path::PathBuf;

use clap::Args;
use poselift::data::load_poses;
use poselift::pipeline::read_log;

use crate::svg::{line_chart, skeleton, Series};
use crate::CliError;

#[derive(Args)]
pub struct PlotArgs {
    /// Training log to turn into loss-curve SVGs
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Pose file to render as skeleton SVGs
    #[arg(long)]
    pub poses: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Render at most this many poses
    #[arg(long, default_value_t = 8)]
    pub limit: usize,
    /// Custom topology for pose rendering
    #[arg(long)]
    pub topology: Option<PathBuf>,
}

pub fn run(args: PlotArgs) -> Result<(), CliError> {
    if args.log.is_none() && args.poses.is_none() {
        return Err(CliError::Usage(
            "nothing to plot: pass --log and/or --poses".into(),
        ));
    }
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;

    if let Some(log_path) = &args.log {
        let (_, records) = read_log(log_path)?;
        if records.is_empty() {
            return Err(CliError::Data(format!(
                "{}: log contains no epochs",
                log_path.display()
            )));
        }
        let components: [(&str, fn(&poselift::pipeline::EpochLog) -> f64); 4] = [
            ("l3d", |r| r.l3d),
            ("l2d", |r| r.l2d),
            ("lsymm", |r| r.lsymm),
            ("total", |r| r.total),
        ];
        // One chart per loss component; phases become separate series.
        let mut phases: Vec<String> = Vec::new();
        for r in &records {
            if !phases.contains(&r.phase) {
                phases.push(r.phase.clone());
            }
        }
        let colors = ["#2266aa", "#aa3322", "#22aa55", "#886600"];
        for (name, get) in components {
            let series: Vec<Series> = phases
                .iter()
                .enumerate()
                .map(|(pi, phase)| Series {
                    label: phase,
                    color: colors[pi % colors.len()],
                    points: records
                        .iter()
                        .filter(|r| &r.phase == phase)
                        .map(|r| (r.epoch as f64, get(r)))
                        .collect(),
                })
                .collect();
            let path = args.out_dir.join(format!("loss_{name}.svg"));
            std::fs::write(&path, line_chart(&format!("{name} per epoch"), &series))
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            println!("wrote {}", path.display());
        }
    }

    if let Some(pose_path) = &args.poses {
        let topo = super::load_topology(args.topology.as_deref())?;
        let samples = load_poses(pose_path, &topo)?;
        if samples.is_empty() {
            return Err(CliError::Data(format!(
                "{}: no poses to render",
                pose_path.display()
            )));
        }
        let bones: Vec<(usize, usize)> = topo
            .bones()
            .iter()
            .map(|&child| (topo.parent(child).expect("bones have parents"), child))
            .collect();
        for (i, s) in samples.iter().take(args.limit).enumerate() {
            // Orthographic rendering: 3d poses drop depth, 2d poses draw as-is.
            let points: Vec<[f64; 2]> = match &s.y3d {
                Some(p3) => p3.coords().iter().map(|c| [c[0], c[1]]).collect(),
                None => s.y2d.coords().to_vec(),
            };
            let title = format!("{} #{i} ({})", s.source_tag, pose_path.display());
            let path = args.out_dir.join(format!("pose_{i:03}.svg"));
            std::fs::write(&path, skeleton(&points, &bones, &title))
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
