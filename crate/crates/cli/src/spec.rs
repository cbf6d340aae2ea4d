//! TOML chain specification.
//!
//! ```toml
//! labels = ["idle", "busy"]
//! kernel = [[0.5, 0.5], [0.25, 0.75]]
//!
//! [functions]
//! f = [1.0, 0.0]
//! v1 = [1.0, 4.0]
//! v2 = [1.0, 5.0]
//!
//! [distributions]
//! phi = [0.5, 0.5]
//!
//! [small_set]
//! states = ["idle"]
//! lag = 1
//! lambda = 1.0
//! phi = "phi"
//! ```
//!
//! States are referenced by index or by label. `lambda` and `phi` are
//! optional; without them the maximal minorization is computed.

use std::collections::BTreeMap;

use poisson_core::drift::{verify_bundle, verify_potential};
use poisson_core::{
    CertificateBundle, Distribution, FiniteChain, PotentialCertificate, StateFunction, StateSet,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub kernel: Vec<Vec<f64>>,
    #[serde(default)]
    pub functions: Functions,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub distributions: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_set: Option<SmallSetSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Functions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v3: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v4: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateRef {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallSetSpec {
    pub states: Vec<StateRef>,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Name of an entry in `[distributions]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
}

fn default_lag() -> usize {
    1
}

impl ChainSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn chain(&self) -> Result<FiniteChain, CliError> {
        let chain = FiniteChain::new(self.kernel.clone())?;
        Ok(match &self.labels {
            Some(labels) => chain.with_labels(labels.clone())?,
            None => chain,
        })
    }

    pub fn resolve(&self, state: &StateRef) -> Result<usize, CliError> {
        let n = self.kernel.len();
        match state {
            StateRef::Index(i) if *i < n => Ok(*i),
            StateRef::Index(i) => Err(poisson_core::Error::StateOutOfRange { state: *i, n }.into()),
            StateRef::Label(l) => self
                .labels
                .as_ref()
                .and_then(|ls| ls.iter().position(|x| x == l))
                .or_else(|| l.parse::<usize>().ok().filter(|&i| i < n))
                .ok_or_else(|| CliError::UnknownState(l.clone())),
        }
    }

    fn small(&self) -> Result<&SmallSetSpec, CliError> {
        self.small_set.as_ref().ok_or(CliError::Missing("small_set"))
    }

    pub fn small_set(&self) -> Result<StateSet, CliError> {
        let members = self
            .small()?
            .states
            .iter()
            .map(|s| self.resolve(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StateSet::new(self.kernel.len(), &members)?)
    }

    pub fn function(&self, name: &'static str) -> Result<StateFunction, CliError> {
        let values = match name {
            "f" => &self.functions.f,
            "v1" => &self.functions.v1,
            "v2" => &self.functions.v2,
            "v3" => &self.functions.v3,
            "v4" => &self.functions.v4,
            _ => &None,
        };
        let values = values.as_ref().ok_or(CliError::Missing(name))?;
        if values.len() != self.kernel.len() {
            return Err(poisson_core::Error::DimensionMismatch {
                expected: self.kernel.len(),
                found: values.len(),
            }
            .into());
        }
        let sf = if name == "f" {
            StateFunction::new(values.clone())?
        } else {
            StateFunction::nonnegative(values.clone())?
        };
        Ok(sf)
    }

    pub fn has_potential_functions(&self) -> bool {
        self.functions.v3.is_some() && self.functions.v4.is_some()
    }

    fn declared_minorization(&self) -> Result<Option<(f64, Distribution)>, CliError> {
        let small = self.small()?;
        match (small.lambda, &small.phi) {
            (None, None) => Ok(None),
            (Some(lambda), Some(name)) => {
                let mass = self
                    .distributions
                    .get(name)
                    .ok_or_else(|| CliError::UnknownDistribution(name.clone()))?;
                Ok(Some((lambda, Distribution::new(mass.clone())?)))
            }
            (Some(_), None) => Err(CliError::Missing("small_set.phi")),
            (None, Some(_)) => Err(CliError::Missing("small_set.lambda")),
        }
    }

    pub fn bundle(&self, chain: &FiniteChain) -> Result<CertificateBundle, CliError> {
        let declared = self.declared_minorization()?;
        Ok(verify_bundle(
            chain,
            &self.function("f")?,
            &self.function("v1")?,
            &self.function("v2")?,
            &self.small_set()?,
            self.small()?.lag,
            declared.as_ref().map(|(l, phi)| (*l, phi)),
        )?)
    }

    pub fn potential(
        &self,
        chain: &FiniteChain,
        bundle: &CertificateBundle,
    ) -> Result<Option<PotentialCertificate>, CliError> {
        if !self.has_potential_functions() {
            return Ok(None);
        }
        Ok(Some(verify_potential(
            chain,
            bundle,
            &self.function("v3")?,
            &self.function("v4")?,
        )?))
    }
}
