//! Model configuration files (TOML).
//!
//! ```toml
//! K = 5
//! rho = 0.5                       # or a list of K values
//!
//! [offspring]
//! family = "bernoulli"            # bernoulli | poisson | geometric
//! param = 0.5                     # or a list of K values
//!
//! [immigration]
//! family = "poisson"
//! param = [12.5, 55, 105, 75, 20]
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use pgfad::model::{DistSpec, Family, ModelParams};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn expand(&self, k: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            OneOrMany::One(v) => Ok(vec![*v; k]),
            OneOrMany::Many(v) if v.len() == k => Ok(v.clone()),
            OneOrMany::Many(v) => bail!("{what} has {} entries but K = {k}", v.len()),
        }
    }

    fn collapse(v: &[f64]) -> OneOrMany {
        if v.windows(2).all(|w| w[0] == w[1]) {
            OneOrMany::One(v[0])
        } else {
            OneOrMany::Many(v.to_vec())
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DistConfig {
    pub family: String,
    pub param: OneOrMany,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: OneOrMany,
    pub offspring: DistConfig,
    pub immigration: DistConfig,
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<ModelConfig> {
        toml::from_str(text).context("invalid model configuration")
    }

    pub fn load(path: &Path) -> Result<ModelConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ModelConfig::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        let k = self.k;
        let dists = |d: &DistConfig, what: &str| -> Result<Vec<DistSpec>> {
            let family: Family = d.family.parse()?;
            Ok(d.param
                .expand(k, what)?
                .into_iter()
                .map(|p| DistSpec::new(family, p))
                .collect())
        };
        let params = ModelParams::new(
            self.rho.expand(k, "rho")?,
            dists(&self.offspring, "offspring.param")?,
            dists(&self.immigration, "immigration.param")?,
        )?;
        Ok(params)
    }

    /// Config describing `params`; requires one family per distribution.
    pub fn from_params(params: &ModelParams) -> Result<ModelConfig> {
        let side = |specs: &[DistSpec], what: &str| -> Result<DistConfig> {
            let family = specs[0].family;
            if specs.iter().any(|d| d.family != family) {
                bail!("{what} mixes families across steps");
            }
            let p: Vec<f64> = specs.iter().map(|d| d.param).collect();
            Ok(DistConfig {
                family: family.name().into(),
                param: OneOrMany::collapse(&p),
            })
        };
        Ok(ModelConfig {
            k: params.k(),
            rho: OneOrMany::collapse(&params.rho),
            offspring: side(&params.offspring, "offspring")?,
            immigration: side(&params.immigration, "immigration")?,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing configuration")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG: &str = r#"
K = 5
rho = 0.5

[offspring]
family = "bernoulli"
param = 0.5

[immigration]
family = "poisson"
param = [12.5, 55, 105, 75, 20]
"#;

    #[test]
    fn parses_scalar_and_list_fields() {
        let m = ModelConfig::parse(FIG).unwrap().to_params().unwrap();
        assert_eq!(m.k(), 5);
        assert_eq!(m.rho, vec![0.5; 5]);
        assert_eq!(m.immigration[2], DistSpec::poisson(105.0));
        assert_eq!(m.offspring[4], DistSpec::bernoulli(0.5));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_lengths() {
        assert!(ModelConfig::parse(&format!("{FIG}\nextra = 1\n")).is_err());
        let bad = FIG.replace("[12.5, 55, 105, 75, 20]", "[1, 2]");
        assert!(ModelConfig::parse(&bad).unwrap().to_params().is_err());
        let fam = FIG.replace("\"bernoulli\"", "\"binomial\"");
        assert!(ModelConfig::parse(&fam).unwrap().to_params().is_err());
        let dom = FIG.replace("rho = 0.5", "rho = 1.5");
        assert!(ModelConfig::parse(&dom).unwrap().to_params().is_err());
    }

    #[test]
    fn round_trips() {
        let c = ModelConfig::parse(FIG).unwrap();
        let m = c.to_params().unwrap();
        let back = ModelConfig::from_params(&m).unwrap();
        assert_eq!(back, c);
        let again = ModelConfig::parse(&back.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }
}
