use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tspool::{RidgeMode, DEFAULT_LEAKY_SLOPE, DEFAULT_RIDGE_EPS};

/// How squeezed frames enter the 2D head after the last temporal layer.
/// Frame `t`, channel `c` becomes channel `t·C + c`.
pub const FRAME_MERGE: &str = "channel-concat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_kernel() -> usize {
    3
}

fn default_stride() -> usize {
    2
}

/// A temporal layer inserted in front of conv block `block` (`0` is the
/// network input; `conv_blocks.len()` is right before the head).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsPlacement {
    pub block: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TemporalPooling {
    /// Learned least-squares squeeze layers.
    #[default]
    Squeeze,
    /// Baseline: every placement averages the frames into one (`D` ignored).
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Clip length fed to the network.
    pub k: usize,
    #[serde(default = "default_channels")]
    pub in_channels: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub ts_placements: Vec<TsPlacement>,
    pub num_classes: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub pooling: TemporalPooling,
    /// Accept placements whose `D` does not strictly decrease with depth.
    #[serde(default)]
    pub allow_non_pyramidal: bool,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    #[serde(default = "default_ridge")]
    pub ridge_eps: f64,
    #[serde(default)]
    pub ridge_mode: RidgeMode,
}

fn default_channels() -> usize {
    1
}
fn default_beta() -> f64 {
    10.0
}
fn default_lambda() -> f64 {
    4e-5
}
fn default_slope() -> f64 {
    DEFAULT_LEAKY_SLOPE
}
fn default_ridge() -> f64 {
    DEFAULT_RIDGE_EPS
}

impl NetworkConfig {
    /// Small two-block network with a single squeeze layer at the input.
    pub fn toy(k: usize, d: usize, in_channels: usize, num_classes: usize) -> Self {
        Self {
            k,
            in_channels,
            conv_blocks: vec![
                ConvBlock { out_channels: 8, kernel: 3, stride: 2 },
                ConvBlock { out_channels: 16, kernel: 3, stride: 2 },
            ],
            ts_placements: vec![TsPlacement { block: 0, d }],
            num_classes,
            beta: default_beta(),
            lambda: default_lambda(),
            pooling: TemporalPooling::Squeeze,
            allow_non_pyramidal: false,
            leaky_slope: default_slope(),
            ridge_eps: default_ridge(),
            ridge_mode: RidgeMode::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("network config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the configuration. Returns warnings for rule violations that
    /// the override flag downgraded.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.k == 0 || self.in_channels == 0 || self.num_classes == 0 {
            return Err(Error::Config("k, in_channels and num_classes must be >= 1".into()));
        }
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.out_channels == 0 || b.stride == 0 || b.kernel % 2 == 0 {
                return Err(Error::Config(format!(
                    "conv block {i}: need out_channels >= 1, stride >= 1 and an odd kernel"
                )));
            }
        }
        if !(self.beta >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::Config("beta and lambda must be >= 0".into()));
        }
        if !(self.ridge_eps > 0.0) {
            return Err(Error::Config("ridge_eps must be > 0".into()));
        }
        let mut t = self.k;
        let mut prev: Option<TsPlacement> = None;
        for (m, p) in self.ts_placements.iter().enumerate() {
            if p.block > self.conv_blocks.len() {
                return Err(Error::Config(format!(
                    "placement {m}: block {} beyond the {} conv blocks",
                    p.block,
                    self.conv_blocks.len()
                )));
            }
            if p.d == 0 {
                return Err(Error::Config(format!("placement {m}: D must be >= 1")));
            }
            if let Some(q) = prev {
                if p.block < q.block {
                    return Err(Error::Config(format!(
                        "placement {m}: blocks must be listed shallow to deep"
                    )));
                }
                if p.d >= q.d {
                    let msg = format!(
                        "placement {m}: D={} does not decrease from D={} (pyramidal rule)",
                        p.d, q.d
                    );
                    if !self.allow_non_pyramidal {
                        return Err(Error::Config(msg));
                    }
                    warnings.push(msg);
                }
            }
            if self.pooling == TemporalPooling::Squeeze && p.d > t {
                return Err(Error::Config(format!(
                    "placement {m}: D={} exceeds its temporal length {t}",
                    p.d
                )));
            }
            t = self.output_frames(p.d);
            prev = Some(*p);
        }
        Ok(warnings)
    }

    fn output_frames(&self, d: usize) -> usize {
        match self.pooling {
            TemporalPooling::Squeeze => d,
            TemporalPooling::Mean => 1,
        }
    }

    /// Temporal length entering each temporal layer, in placement order.
    pub fn placement_input_lengths(&self) -> Vec<usize> {
        let mut t = self.k;
        self.ts_placements
            .iter()
            .map(|p| {
                let input = t;
                t = self.output_frames(p.d);
                input
            })
            .collect()
    }

    /// Number of frames merged into channels in front of the 2D head.
    pub fn head_frames(&self) -> usize {
        self.ts_placements
            .last()
            .map_or(self.k, |p| self.output_frames(p.d))
    }

    pub fn num_ts_layers(&self) -> usize {
        match self.pooling {
            TemporalPooling::Squeeze => self.ts_placements.len(),
            TemporalPooling::Mean => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, placements: &[(usize, usize)], blocks: usize) -> NetworkConfig {
        let mut c = NetworkConfig::toy(k, 1, 3, 5);
        c.conv_blocks = vec![ConvBlock { out_channels: 4, kernel: 3, stride: 2 }; blocks];
        c.ts_placements = placements.iter().map(|&(block, d)| TsPlacement { block, d }).collect();
        c
    }

    #[test]
    fn temporal_bookkeeping() {
        let c = cfg(10, &[(0, 3)], 4);
        c.validate().unwrap();
        assert_eq!(c.head_frames(), 3);
        let c = cfg(64, &[(0, 16), (3, 4)], 4);
        c.validate().unwrap();
        assert_eq!(c.placement_input_lengths(), vec![64, 16]);
        assert_eq!(c.head_frames(), 4);
    }

    #[test]
    fn pyramidal_rule() {
        let mut c = cfg(10, &[(1, 3), (2, 3)], 4);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.allow_non_pyramidal = true;
        assert_eq!(c.validate().unwrap().len(), 1);
        // growing D past the available length is never allowed
        let mut c = cfg(10, &[(1, 2), (2, 3)], 4);
        c.allow_non_pyramidal = true;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_bad_placements() {
        assert!(cfg(10, &[(5, 3)], 4).validate().is_err());
        assert!(cfg(10, &[(0, 11)], 4).validate().is_err());
        assert!(cfg(10, &[(0, 0)], 4).validate().is_err());
        assert!(cfg(10, &[(2, 3), (1, 1)], 4).validate().is_err());
    }

    #[test]
    fn json_defaults() {
        let c = NetworkConfig::from_json(
            r#"{"k": 8, "conv_blocks": [{"out_channels": 4}], "ts_placements": [{"block": 0, "d": 2}], "num_classes": 2}"#,
        )
        .unwrap();
        assert_eq!(c.beta, 10.0);
        assert_eq!(c.lambda, 4e-5);
        assert_eq!(c.leaky_slope, 0.2);
        assert_eq!(c.conv_blocks[0].kernel, 3);
        assert_eq!(c.conv_blocks[0].stride, 2);
        assert!(NetworkConfig::from_json("{}").is_err());
    }
}
