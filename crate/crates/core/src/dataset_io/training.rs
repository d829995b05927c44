//! Detector and baseline-classifier training schedules, emitted as JSON for
//! an external trainer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSchedule {
    pub epochs: u32,
    pub batch_size: u32,
    pub optimizer: String,
    pub lr_initial: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_epochs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSchedule {
    pub epochs: u32,
    pub batch_size: u32,
    pub optimizer: String,
    pub lr_initial: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_epochs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub detector: DetectorSchedule,
    pub classifier_baseline: ClassifierSchedule,
}

impl Default for TrainingManifest {
    fn default() -> Self {
        Self {
            detector: DetectorSchedule {
                epochs: 200,
                batch_size: 32,
                optimizer: "SGD".into(),
                lr_initial: 1e-3,
                lr_decay_factor: 10.0,
                lr_decay_epochs: vec![100, 170, 190],
            },
            classifier_baseline: ClassifierSchedule {
                epochs: 50,
                batch_size: 32,
                optimizer: "SGD".into(),
                lr_initial: 1e-3,
                lr_decay_factor: 10.0,
                lr_decay_epochs: vec![20, 40],
            },
        }
    }
}

fn check_decays(name: &str, epochs: u32, decays: &[u32]) -> Result<()> {
    let increasing = decays.windows(2).all(|w| w[0] < w[1]);
    if !increasing || decays.last().is_some_and(|&d| d >= epochs) {
        return Err(Error::InvalidConfig(format!(
            "{name}: decay epochs {decays:?} must be strictly increasing and below {epochs}"
        )));
    }
    Ok(())
}

impl TrainingManifest {
    pub fn validate(&self) -> Result<()> {
        check_decays(
            "detector",
            self.detector.epochs,
            &self.detector.lr_decay_epochs,
        )?;
        check_decays(
            "classifier_baseline",
            self.classifier_baseline.epochs,
            &self.classifier_baseline.lr_decay_epochs,
        )
    }
}

pub fn export_training_manifest(path: &Path) -> Result<()> {
    let manifest = TrainingManifest::default();
    manifest.validate()?;
    super::write_sorted_json(&manifest, path)
}
