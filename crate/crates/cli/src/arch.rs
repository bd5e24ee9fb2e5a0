//! Architecture files.
//!
//! ```toml
//! method = "dapcnn"          # apc | dann | dapcnn
//! layers = [3, 3, 1]         # nodes per layer
//! degrees = [3, 3, 2]        # expansion degree per layer
//! activation = "normalized"  # one name, or one per layer
//! loss = "mse+msw"
//! ```

use dapcnn::benchmarks::Method;
use dapcnn::{Activation, BasisMode, Error, LayerSpec, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Activations {
    One(String),
    PerLayer(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureFile {
    pub method: String,
    pub layers: Vec<usize>,
    pub degrees: Vec<usize>,
    pub activation: Option<Activations>,
    #[serde(default = "default_loss")]
    pub loss: String,
}

fn default_loss() -> String {
    "mse+msw".into()
}

/// Fully resolved architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub method: Method,
    pub specs: Vec<LayerSpec>,
    pub mode: BasisMode,
}

impl ArchitectureFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("architecture file: {e}")))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let method: Method = self.method.parse()?;
        if self.loss.to_ascii_lowercase().replace(' ', "") != "mse+msw" {
            return Err(Error::InvalidConfig(format!("unsupported loss '{}'", self.loss)));
        }
        if self.layers.len() != self.degrees.len() {
            return Err(Error::InvalidArchitecture(format!(
                "{} layers but {} degrees",
                self.layers.len(),
                self.degrees.len()
            )));
        }
        let default = match method {
            Method::Apc => "identity",
            Method::Dann => "tanh",
            Method::Dapcnn => "normalized",
        };
        let names: Vec<String> = match &self.activation {
            None => vec![default.to_string(); self.layers.len()],
            Some(Activations::One(a)) => vec![a.clone(); self.layers.len()],
            Some(Activations::PerLayer(v)) if v.len() == self.layers.len() => v.clone(),
            Some(Activations::PerLayer(v)) => {
                return Err(Error::InvalidArchitecture(format!(
                    "{} activations for {} layers",
                    v.len(),
                    self.layers.len()
                )))
            }
        };
        let specs = self
            .layers
            .iter()
            .zip(&self.degrees)
            .zip(&names)
            .map(|((&n, &d), a)| Ok(LayerSpec::new(n, d, a.parse::<Activation>()?)))
            .collect::<Result<Vec<_>>>()?;
        if method == Method::Apc && specs.len() != 1 {
            return Err(Error::InvalidArchitecture("an aPC architecture has exactly one layer".into()));
        }
        let mode = match method {
            Method::Dann => BasisMode::FixedGaussianMonomial,
            _ => BasisMode::Adaptive,
        };
        Ok(Resolved { method, specs, mode })
    }
}
