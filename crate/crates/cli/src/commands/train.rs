use std::path::PathBuf;

use clap::Args;
use poselift::data::{augment_2d, load_poses, Sample};
use poselift::pipeline::{
    derive_seed, load_checkpoint, save_checkpoint, train_full, DataSource, ModelBundle, TrainLog,
};
use poselift::Error;

use crate::config::Config;
use crate::CliError;

#[derive(Args)]
pub struct TrainArgs {
    /// 3d-annotated training pose file
    #[arg(long)]
    pub data: PathBuf,
    /// Optional 2d-only pose file mixed into joint training
    #[arg(long)]
    pub data2d: Option<PathBuf>,
    /// Build a 2d-only source by augmenting --data this many times
    /// (mutually exclusive with --data2d)
    #[arg(long)]
    pub augment: Option<usize>,
    /// Checkpoint output path
    #[arg(long)]
    pub out: PathBuf,
    /// Training log path (default: <out>.log)
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Resume from an existing checkpoint
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub phase1_epochs: Option<usize>,
    #[arg(long)]
    pub phase2_epochs: Option<usize>,
    #[arg(long)]
    pub joint_epochs: Option<usize>,
    /// Per-source batch mix for joint training, e.g. 1:1
    #[arg(long)]
    pub mix_ratio: Option<String>,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let mut config = Config::default();
    if let Some(path) = &args.config {
        config.load_file(path)?;
    }
    config.apply_overrides(&args.overrides)?;
    macro_rules! flag {
        ($field:ident, $key:literal) => {
            if let Some(v) = &args.$field {
                config.set($key, &v.to_string())?;
            }
        };
    }
    flag!(seed, "seed");
    flag!(hidden, "hidden");
    flag!(dropout, "dropout");
    flag!(lr, "lr");
    flag!(batch, "batch");
    flag!(alpha, "alpha");
    flag!(beta, "beta");
    flag!(gamma, "gamma");
    flag!(phase1_epochs, "phase1_epochs");
    flag!(phase2_epochs, "phase2_epochs");
    flag!(joint_epochs, "joint_epochs");
    flag!(mix_ratio, "mix_ratio");

    let topo = super::load_topology(args.topology.as_deref())?;
    let train_config = config.train_config()?;
    let effective = config.to_json();

    let data = load_poses(&args.data, &topo)?;
    if let Some(i) = data.iter().position(|s| s.y3d.is_none()) {
        return Err(CliError::Data(format!(
            "{}: sample {i} has no 3d ground truth; supervised pretraining needs full labels",
            args.data.display()
        )));
    }

    let mut sources = vec![DataSource {
        name: "train3d".into(),
        samples: data.clone(),
    }];
    match (&args.data2d, args.augment) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--data2d and --augment are mutually exclusive".into(),
            ))
        }
        (Some(path), None) => {
            let twod = load_poses(path, &topo)?;
            sources.push(DataSource {
                name: "train2d".into(),
                samples: twod,
            });
        }
        (None, Some(copies)) if copies > 0 => {
            let spec = poselift::data::AugmentationSpec {
                copies,
                ..config.augmentation()?
            };
            let mut twod = Vec::with_capacity(data.len() * copies);
            for (i, s) in data.iter().enumerate() {
                let centered = Sample {
                    y2d: match s.y2d.frame() {
                        poselift::skeleton::Frame::Raw => s.y2d.root_center(&topo)?,
                        _ => s.y2d.clone(),
                    },
                    y3d: None,
                    visibility: s.visibility.clone(),
                    source_tag: s.source_tag.clone(),
                };
                let aug_seed = derive_seed(train_config.seed, &[0xa06, i as u64]);
                twod.extend(augment_2d(&centered, &spec, aug_seed)?);
            }
            sources.push(DataSource {
                name: "augment2d".into(),
                samples: twod,
            });
        }
        _ => {}
    }

    let mut train_config = train_config;
    if sources.len() == 1 && train_config.mix_ratio.len() != 1 {
        // A single source needs no mix; collapse the default 1:1.
        train_config.mix_ratio = vec![1];
    }

    let mut bundle = match &args.resume {
        Some(path) => {
            let bundle = load_checkpoint(path)?;
            bundle
                .config
                .compatible_for_resume(&train_config)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let mut bundle = bundle;
            bundle.config = train_config;
            bundle
        }
        None => ModelBundle::init(topo.clone(), train_config, &data)?,
    };

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("log"));
    let mut log = TrainLog::to_file(&log_path, &effective)?;

    println!(
        "run config: {}",
        serde_json::to_string(&effective).expect("config json")
    );
    println!(
        "sources: {}",
        sources
            .iter()
            .map(|s| format!("{} ({} samples)", s.name, s.samples.len()))
            .collect::<Vec<_>>()
            .join(", ")
    );

    match train_full(&mut bundle, &sources, &mut log) {
        Ok(()) => {}
        Err(e @ Error::NonFiniteLoss { .. }) => {
            // The bundle rolled back to the last completed epoch; keep it.
            save_checkpoint(&bundle, &args.out)?;
            eprintln!(
                "training aborted, last-good checkpoint retained at {}",
                args.out.display()
            );
            return Err(CliError::from(e));
        }
        Err(e) => return Err(CliError::from(e)),
    }
    save_checkpoint(&bundle, &args.out)?;

    if let Some(last) = log.records.last() {
        println!(
            "finished {} epochs (phase {}): total {:.6}",
            log.records.len(),
            last.phase,
            last.total
        );
    } else {
        println!("nothing to train (all phase targets already reached)");
    }
    println!("checkpoint: {}", args.out.display());
    println!("log: {}", log_path.display());
    Ok(())
}
