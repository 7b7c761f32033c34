//! Flat dotted-key configuration: defaults, an optional config file, then
//! command-line overrides, in that order. The effective configuration is
//! echoed into every artifact the commands produce.

use std::collections::BTreeMap;
use std::path::Path;

use poselift::data::{AugmentationSpec, CameraKind, CameraModel};
use poselift::losses::LossWeights;
use poselift::pipeline::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

/// Every known key with its default value.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("hidden", "1024"),
    ("dropout", "0.5"),
    ("lr", "1e-4"),
    ("batch", "64"),
    ("alpha", "0.5"),
    ("beta", "0.5"),
    ("gamma", "1.0"),
    ("phase1_epochs", "50"),
    ("phase2_epochs", "50"),
    ("joint_epochs", "100"),
    ("bn_momentum", "0.1"),
    ("mix_ratio", "1:1"),
    ("camera.kind", "pinhole"),
    ("camera.focal_px", "1100"),
    ("camera.cx", "500"),
    ("camera.cy", "500"),
    ("camera.distance_mm", "3200"),
    ("synth.train", "5000"),
    ("synth.val", "500"),
    ("synth.test", "1000"),
    ("augment.copies", "35"),
    ("augment.rotation_deg", "30"),
    ("augment.scale_min", "0.8"),
    ("augment.scale_max", "1.2"),
    ("eval.pck_threshold", "150"),
    ("eval.retarget", "false"),
    ("eval.pelvis_adjust", "0"),
    ("plot.limit", "8"),
];

impl Default for Config {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

impl Config {
    /// Read `key = value` lines; `#` starts a comment, blank lines ignored.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config {} line {}: expected 'key = value'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one key, rejecting names that are not in the schema.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match DEFAULTS.iter().find(|(k, _)| *k == key) {
            Some((canonical, _)) => {
                self.values.insert(canonical, value.to_string());
                Ok(())
            }
            None => Err(CliError::Usage(format!(
                "unknown config key '{key}' (known keys: {})",
                DEFAULTS
                    .iter()
                    .map(|(k, _)| *k)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }

    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for pair in overrides {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("--set expects key=value, got '{pair}'"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("key '{key}' is in the schema"))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)
            .parse()
            .map_err(|_| CliError::Usage(format!("config key '{key}': bad value '{}'", self.get(key))))
    }

    pub fn parse_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Usage(format!(
                "config key '{key}': expected a boolean, got '{other}'"
            ))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let mix_ratio: Vec<usize> = self
            .get("mix_ratio")
            .split(':')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad mix_ratio '{}'", self.get("mix_ratio"))))
            })
            .collect::<Result<_, _>>()?;
        let weights = LossWeights::new(
            self.parse("alpha")?,
            self.parse("beta")?,
            self.parse("gamma")?,
        )
        .map_err(|e| CliError::Usage(e.to_string()))?;
        let config = TrainConfig {
            weights,
            learning_rate: self.parse("lr")?,
            batch_size: self.parse("batch")?,
            phase1_epochs: self.parse("phase1_epochs")?,
            phase2_epochs: self.parse("phase2_epochs")?,
            joint_epochs: self.parse("joint_epochs")?,
            hidden: self.parse("hidden")?,
            dropout_rate: self.parse("dropout")?,
            bn_momentum: self.parse("bn_momentum")?,
            seed: self.parse("seed")?,
            mix_ratio,
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn camera(&self) -> Result<CameraModel, CliError> {
        let distance: f64 = self.parse("camera.distance_mm")?;
        let cam = match self.get("camera.kind") {
            "orthographic" => CameraModel::orthographic(distance),
            "pinhole" => CameraModel::pinhole(
                self.parse("camera.focal_px")?,
                [self.parse("camera.cx")?, self.parse("camera.cy")?],
                distance,
            ),
            other => {
                return Err(CliError::Usage(format!(
                    "camera.kind must be pinhole or orthographic, got '{other}'"
                )))
            }
        };
        cam.map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn camera_kind_is_pinhole(&self) -> bool {
        matches!(
            self.camera().map(|c| c.kind),
            Ok(CameraKind::Pinhole { .. })
        )
    }

    pub fn augmentation(&self) -> Result<AugmentationSpec, CliError> {
        let spec = AugmentationSpec {
            rotation_deg: self.parse("augment.rotation_deg")?,
            scale_min: self.parse("augment.scale_min")?,
            scale_max: self.parse("augment.scale_max")?,
            copies: self.parse("augment.copies")?,
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }

    /// The effective configuration as JSON, echoed into artifacts.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.values
                .iter()
                .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
                .collect(),
        )
    }
}
