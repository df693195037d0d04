//! Resolving command-line settings into networks, hardware and data.

use std::path::{Path, PathBuf};

use cenn_forge::cost::CostParams;
use cenn_forge::netspec::{load_idx_dataset, load_network, load_weights, presets};
use cenn_forge::nonideal::load_ota_curve;
use cenn_forge::{Dataset, ExecMode, ExecOptions, HardwareConfig, NetworkSpec, OtaCurve, Precision};

use crate::{CliError, CliResult};

pub const DEFAULT_COST_PRESET: &str = "paper-4bit-32nm";

/// Everything a `run` needs. Paths are checked when resolved, not here.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Preset name or network file.
    pub network: String,
    pub weights: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Seeded random images instead of an IDX pair.
    pub synthetic: Option<usize>,
    /// `mnist`, `cifar` or a hardware file; sized from the network if unset.
    pub hw: Option<String>,
    pub mode: ExecMode,
    pub bits: Option<u32>,
    /// Two-column OTA curve for nonideal mode.
    pub curve: Option<PathBuf>,
    pub cost_preset: String,
    pub out: PathBuf,
    pub limit: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(network: impl Into<String>) -> Self {
        Self {
            network: network.into(),
            weights: None,
            images: None,
            labels: None,
            synthetic: None,
            hw: None,
            mode: ExecMode::Ideal,
            bits: None,
            curve: None,
            cost_preset: DEFAULT_COST_PRESET.to_string(),
            out: PathBuf::from("reports"),
            limit: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        match (&self.images, &self.labels) {
            (Some(_), None) | (None, Some(_)) => {
                return Err(CliError::Usage("--images and --labels must be given together".into()))
            }
            (Some(_), Some(_)) if self.synthetic.is_some() => {
                return Err(CliError::Usage("--synthetic cannot be combined with --images".into()))
            }
            _ => {}
        }
        if self.bits.is_some() && self.mode == ExecMode::Ideal {
            return Err(CliError::Usage("--bits needs --mode quantized or nonideal".into()));
        }
        if self.curve.is_some() && self.mode != ExecMode::Nonideal {
            return Err(CliError::Usage("--curve needs --mode nonideal".into()));
        }
        if self.limit == Some(0) {
            return Err(CliError::Usage("--limit must be at least 1".into()));
        }
        Ok(())
    }

    pub fn has_dataset(&self) -> bool {
        self.images.is_some() || self.synthetic.is_some()
    }

    /// Network with weights: `--weights`, else the file named by the network,
    /// else seeded random values.
    pub fn load_network(&self) -> CliResult<(NetworkSpec, String)> {
        let net = resolve_network(&self.network)?;
        let file = self.weights.clone().or_else(|| net.weights_file.clone());
        match file {
            Some(p) => Ok((load_weights(&p, &net)?, p.display().to_string())),
            None => {
                let mut net = net;
                net.randomize(self.seed);
                Ok((net, format!("random (seed {})", self.seed)))
            }
        }
    }

    pub fn hardware(&self, net: &NetworkSpec) -> CliResult<HardwareConfig> {
        let mut hw = match &self.hw {
            None => HardwareConfig::for_network(net),
            Some(s) => resolve_hardware(s)?,
        };
        if let Some(b) = self.bits {
            hw.precision = Precision::try_from(b).map_err(CliError::Usage)?;
        }
        Ok(hw)
    }

    pub fn exec_options(&self) -> CliResult<ExecOptions> {
        let mut opts = ExecOptions::with_mode(self.mode);
        opts.bits = self.bits;
        if let Some(p) = &self.curve {
            opts.curve = load_ota_curve(p)?;
        } else if self.mode == ExecMode::Nonideal {
            opts.curve = OtaCurve::default_saturating();
        }
        Ok(opts)
    }

    /// The dataset, truncated to `--limit`, or `None` for a cost-only run.
    pub fn dataset(&self, net: &NetworkSpec) -> CliResult<Option<Dataset>> {
        let mut data = match (&self.images, &self.labels, self.synthetic) {
            (Some(i), Some(l), _) => load_idx_dataset(i, l)?,
            (_, _, Some(n)) => Dataset::synthetic(n, net.input_maps, net.input_shape, net.class_count, self.seed),
            _ => return Ok(None),
        };
        data.check_against(net)?;
        if let Some(n) = self.limit {
            data.truncate(n);
        }
        Ok(Some(data))
    }

    pub fn cost_params(&self) -> CliResult<CostParams> {
        Ok(CostParams::resolve(&self.cost_preset)?)
    }
}

/// A preset name or a path to a network file.
pub fn resolve_network(name_or_path: &str) -> CliResult<NetworkSpec> {
    if let Some(text) = presets::network(name_or_path) {
        return Ok(NetworkSpec::parse(text, name_or_path)?);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        let names: Vec<&str> = presets::NETWORKS.iter().map(|(n, _)| *n).collect();
        return Err(CliError::Usage(format!(
            "'{name_or_path}' is neither a network preset ({}) nor an existing file",
            names.join(", ")
        )));
    }
    Ok(load_network(path)?)
}

pub fn resolve_hardware(name_or_path: &str) -> CliResult<HardwareConfig> {
    match name_or_path {
        "mnist" | "cifar" => Ok(HardwareConfig::preset(name_or_path)?),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(HardwareConfig::parse(&text, path)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_combinations() {
        let mut c = RunConfig::new("mnist_design1");
        assert!(c.validate().is_ok());
        c.images = Some("i".into());
        assert!(c.validate().is_err());
        c.labels = Some("l".into());
        assert!(c.validate().is_ok());
        c.synthetic = Some(3);
        assert!(c.validate().is_err());

        let mut c = RunConfig::new("mnist_design1");
        c.bits = Some(8);
        assert!(c.validate().is_err());
        c.mode = ExecMode::Quantized;
        assert!(c.validate().is_ok());
        c.curve = Some("curve.txt".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn bits_set_hardware_precision() {
        let mut c = RunConfig::new("mnist_design1");
        c.mode = ExecMode::Quantized;
        c.bits = Some(8);
        let (net, weights) = c.load_network().unwrap();
        assert_eq!(weights, "random (seed 0)");
        assert_eq!(c.hardware(&net).unwrap().precision, Precision::Bits(8));
    }

    #[test]
    fn unknown_network_names_the_presets() {
        let e = resolve_network("mnist_design9").unwrap_err().to_string();
        assert!(e.contains("mnist_design1"), "{e}");
    }
}
