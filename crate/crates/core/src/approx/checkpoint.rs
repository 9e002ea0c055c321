//! JSON persistence for networks and optimizer state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::mlp::{Activation, Layer, ParamSet};
use crate::error::{Error, Result};

pub const FORMAT: &str = "dirp-mlp/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub activation: Activation,
    /// `outputs` rows of `inputs` columns.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub sizes: Vec<usize>,
    pub layers: Vec<LayerRecord>,
}

impl NetworkRecord {
    pub fn from_net(net: &ParamSet) -> Self {
        NetworkRecord {
            sizes: net.sizes(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerRecord {
                    activation: l.activation,
                    weights: l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    pub fn to_net(&self) -> Result<ParamSet> {
        if self.sizes.len() != self.layers.len() + 1 {
            return Err(Error::Config(format!(
                "checkpoint lists {} sizes for {} layers",
                self.sizes.len(),
                self.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, rec) in self.layers.iter().enumerate() {
            let (inputs, outputs) = (self.sizes[i], self.sizes[i + 1]);
            if rec.weights.len() != outputs || rec.weights.iter().any(|r| r.len() != inputs) {
                return Err(Error::Config(format!(
                    "layer {i}: weight matrix is not {outputs}x{inputs}"
                )));
            }
            layers.push(Layer {
                inputs,
                outputs,
                weights: rec.weights.concat(),
                bias: rec.bias.clone(),
                activation: rec.activation,
            });
        }
        let net = ParamSet { layers };
        net.validate()?;
        Ok(net)
    }
}

/// A named network with optional optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub network: NetworkRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
    pub checksum: String,
}

impl Checkpoint {
    pub fn new(net: &ParamSet, optimizer: Option<&AdamState>) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            network: NetworkRecord::from_net(net),
            optimizer: optimizer.cloned(),
            checksum: net.checksum(),
        }
    }

    /// Rebuilds the network, verifying shapes, format tag and checksum.
    pub fn restore(&self) -> Result<(ParamSet, Option<AdamState>)> {
        if self.format != FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format {:?}",
                self.format
            )));
        }
        let net = self.network.to_net()?;
        if net.checksum() != self.checksum {
            return Err(Error::Config("checkpoint checksum mismatch".into()));
        }
        if let Some(opt) = &self.optimizer {
            let n = net.num_params();
            if opt.m.len() != n || opt.v.len() != n {
                return Err(Error::Config(
                    "optimizer state does not match network".into(),
                ));
            }
        }
        Ok((net, self.optimizer.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::adam::AdamConfig;
    use rand::SeedableRng;

    fn net() -> ParamSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        ParamSet::new(
            &[5, 7, 3],
            Activation::DecoupledSoftmax { groups: 1 },
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = net();
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(1e-3));
        adam.m[3] = 1.0 / 3.0;
        adam.step = 4;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        Checkpoint::new(&net, Some(&adam)).save(&path).unwrap();
        let (back, opt) = Checkpoint::load(&path).unwrap().restore().unwrap();
        assert_eq!(back, net);
        assert_eq!(opt.unwrap(), adam);
        assert_eq!(back.checksum(), net.checksum());
    }

    #[test]
    fn shape_and_checksum_mismatches_rejected() {
        let mut ck = Checkpoint::new(&net(), None);
        ck.network.layers[0].weights[0].pop();
        assert!(ck.restore().is_err());

        let mut ck = Checkpoint::new(&net(), None);
        ck.network.layers[1].bias[0] += 1.0;
        assert!(ck.restore().is_err());

        let mut ck = Checkpoint::new(&net(), None);
        ck.network.sizes[2] = 4;
        assert!(ck.restore().is_err());
    }
}
