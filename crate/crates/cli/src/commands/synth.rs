use std::path::PathBuf;

use clap::Args;
use poselift::data::{generate_synthetic, save_poses};
use poselift::pipeline::derive_seed;

use crate::config::Config;
use crate::CliError;

#[derive(Args)]
pub struct SynthArgs {
    /// Directory for train.jsonl, val.jsonl, test.jsonl
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Config file with flat dotted keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. --set camera.focal_px=900
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Custom topology description file
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples in the training split
    #[arg(long)]
    pub train: Option<usize>,
    /// Samples in the validation split
    #[arg(long)]
    pub val: Option<usize>,
    /// Samples in the test split
    #[arg(long)]
    pub test: Option<usize>,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let mut config = Config::default();
    if let Some(path) = &args.config {
        config.load_file(path)?;
    }
    config.apply_overrides(&args.overrides)?;
    if let Some(seed) = args.seed {
        config.set("seed", &seed.to_string())?;
    }
    if let Some(n) = args.train {
        config.set("synth.train", &n.to_string())?;
    }
    if let Some(n) = args.val {
        config.set("synth.val", &n.to_string())?;
    }
    if let Some(n) = args.test {
        config.set("synth.test", &n.to_string())?;
    }

    let topo = super::load_topology(args.topology.as_deref())?;
    let camera = config.camera()?;
    let seed: u64 = config.parse("seed")?;
    let provenance = config.to_json();

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;

    // Disjoint seeds per split keep the splits disjoint.
    let splits = [
        ("train", config.parse::<usize>("synth.train")?, 1u64),
        ("val", config.parse::<usize>("synth.val")?, 2),
        ("test", config.parse::<usize>("synth.test")?, 3),
    ];
    for (name, count, tag) in splits {
        if count == 0 {
            continue;
        }
        let split_seed = derive_seed(seed, &[0x5eed, tag]);
        let samples = generate_synthetic(count, split_seed, &camera, &topo)?;
        let path = args.out_dir.join(format!("{name}.jsonl"));
        save_poses(&path, &samples, &topo, Some(provenance.clone()))?;
        println!("{name}: {count} samples -> {}", path.display());
    }
    Ok(())
}
