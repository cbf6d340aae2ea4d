//! JSON reports. Every number is written in shortest round-trip form, so a
//! report read back yields bit-identical values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands::Gig1Params;
use crate::spec::ChainSpec;
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ChainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gig1: Option<Gig1Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub inputs: Inputs,
    pub results: BTreeMap<String, Value>,
    pub assertions: Vec<Assertion>,
    pub error: Option<ReportError>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, inputs: Inputs) -> Self {
        Self {
            command: command.into(),
            inputs,
            results: BTreeMap::new(),
            assertions: Vec::new(),
            error: None,
            passed: false,
        }
    }

    pub fn result<T: Serialize>(&mut self, key: &str, value: &T) -> Result<(), CliError> {
        let v = serde_json::to_value(value).map_err(|e| CliError::Serialize(e.to_string()))?;
        self.results.insert(key.into(), v);
        Ok(())
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.assertions.push(Assertion {
            name: name.into(),
            passed,
            detail,
        });
    }

    /// Records the outcome of the command body and settles `passed`.
    pub fn finish(mut self, outcome: Result<(), CliError>) -> Self {
        if let Err(e) = outcome {
            self.error = Some(ReportError {
                code: e.code().into(),
                message: e.to_string(),
            });
        }
        self.passed = self.error.is_none() && self.assertions.iter().all(|a| a.passed);
        self
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Serialize(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }
}
