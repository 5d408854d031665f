//! JSON run manifests.
//!
//! Fields serialize in declaration order, so two runs with the same inputs
//! produce byte-identical manifests apart from `wall_time_seconds`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use aitvseg::synthetic::Scene;
use aitvseg::{ChannelRole, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TOOL: &str = "aitvseg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Scene>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            segmentation: None,
            corruption: None,
            scene: None,
            channels: Vec::new(),
            metrics: None,
            wall_time_seconds: 0.0,
        }
    }

    pub fn input(mut self, key: &str, path: &Path) -> Self {
        self.inputs.insert(key.into(), path.display().to_string());
        self
    }

    pub fn output(mut self, key: &str, path: &Path) -> Self {
        self.outputs.insert(key.into(), path.display().to_string());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is serializable")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_json() + "\n").map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub k: usize,
    pub seed: u64,
    pub use_iih: bool,
    pub iih_patch_radius: usize,
    pub blur: String,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionParams {
    pub blur: String,
    pub noise: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub role: ChannelRole,
    pub iterations: usize,
    pub converged: bool,
    pub final_energy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Largest iteration count over the smoothed channels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Sum of the per-channel final energies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wcss: Option<f64>,
    /// PSNR of the region-mean image against the input.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "maybe_inf")]
    pub psnr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dice_mean: Option<f64>,
    /// Mean over truth labels other than label 1 (the background).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dice_foreground: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dice_per_label: Option<Vec<f64>>,
}

/// Formats a metric for tables and CSV; infinity prints as `inf`.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// JSON has no infinity, so `+inf` is written as the string `"inf"`.
pub mod maybe_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Number(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Text(t)) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aitvseg::Regularizer;

    fn sample() -> Manifest {
        let mut m = Manifest::new("segment")
            .input("image", Path::new("in.png"))
            .output("labels", Path::new("out/labels.png"));
        m.segmentation = Some(SegmentationParams {
            k: 3,
            seed: 9,
            use_iih: false,
            iih_patch_radius: 3,
            blur: "motion:5:45".into(),
            solver: SolverConfig::new(2.0, 1.0).with_regularizer(Regularizer::Tvp { p: 0.5 }),
        });
        m.channels.push(ChannelReport {
            role: ChannelRole::Gray,
            iterations: 17,
            converged: true,
            final_energy: 12.5,
        });
        m.metrics = Some(Metrics {
            iterations: Some(17),
            final_energy: Some(12.5),
            wcss: Some(0.25),
            psnr: Some(f64::INFINITY),
            dice_mean: Some(1.0),
            dice_foreground: Some(1.0),
            dice_per_label: Some(vec![1.0, 1.0, 1.0]),
        });
        m.wall_time_seconds = 0.125;
        m
    }

    #[test]
    fn round_trips_through_json() {
        let m = sample();
        let json = m.to_json();
        assert!(json.contains("\"psnr\": \"inf\""));
        let back: Manifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn finite_psnr_is_a_number() {
        let mut m = sample();
        m.metrics.as_mut().unwrap().psnr = Some(31.5);
        let json = m.to_json();
        assert!(json.contains("\"psnr\": 31.5"));
        assert_eq!(serde_json::from_str::<Manifest>(&json).unwrap(), m);
    }

    #[test]
    fn field_order_is_stable() {
        let json = sample().to_json();
        let pos = |k: &str| json.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("tool") < pos("version") && pos("version") < pos("command"));
        assert!(pos("segmentation") < pos("channels") && pos("metrics") < pos("wall_time_seconds"));
    }

    #[test]
    fn metric_formatting() {
        assert_eq!(format_metric(f64::INFINITY), "inf");
        assert_eq!(format_metric(20.0), "20.000000");
    }
}
