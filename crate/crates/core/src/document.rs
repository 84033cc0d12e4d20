//! JSON documents describing a system.
//!
//! ```json
//! {
//!   "format_version": "1",
//!   "factors": [{"name": "alpha", "levels": ["1", "2"]}],
//!   "variables": [{"name": "A", "outcomes": ["1", "2"]}],
//!   "treatments": [{"alpha": "1"}, {"alpha": "2"}],
//!   "distributions": [
//!     [{"outcome": ["1"], "p": "0.5"}, {"outcome": ["2"], "p": 0.5}],
//!     [{"outcome": ["1"], "p": "1/3"}, {"outcome": ["2"], "p": "2/3"}]
//!   ]
//! }
//! ```
//!
//! Without a `diagram`, variable `i` is the one selectively influenced by
//! factor `i`. With one, the system is rearranged into bijective form.
//! Unlisted cells are zero. Probabilities are numbers or decimal/fraction
//! strings; strings are kept verbatim and read exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{parse_rational, rational_to_string};
use crate::model::{
    canonical_rearrangement, validate_parts, Diagram, Factor, FactorPoint, JointPmf, ModelError, SelectiveSystem,
    Treatment, ValidationError, Variable, DEFAULT_EPS_PROB,
};
use crate::quadtests::CorrelationSource;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {0:?}")]
    Version(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Probability {
    Number(serde_json::Number),
    Text(String),
}

impl Probability {
    pub fn text(&self) -> String {
        match self {
            Probability::Number(n) => n.to_string(),
            Probability::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub outcome: Vec<String>,
    pub p: Probability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlation {
    pub x: String,
    pub y: String,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub format_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub factors: Vec<Factor>,
    pub variables: Vec<Variable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagram: Option<BTreeMap<String, Vec<String>>>,
    pub treatments: Vec<Treatment>,
    pub distributions: Vec<Vec<Cell>>,
    /// Correlations to use instead of those of the tables, per point pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Vec<Correlation>>,
}

/// Everything a document says, ready for validation.
#[derive(Clone, Debug)]
pub struct Parts {
    pub factors: Vec<Factor>,
    pub variables: Vec<Variable>,
    pub diagram: Option<Diagram>,
    pub treatments: Vec<Treatment>,
    pub distributions: Vec<JointPmf>,
}

impl SystemDocument {
    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let doc: SystemDocument = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(DocumentError::Version(doc.format_version));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialize")
    }

    /// Tables in exact form where possible, plus every cell-level problem.
    pub fn parts(&self) -> (Parts, Vec<ValidationError>) {
        let mut errors = Vec::new();
        let names: Vec<String> = self.variables.iter().map(|v| v.name.clone()).collect();
        let dims: Vec<usize> = self.variables.iter().map(|v| v.outcomes.len()).collect();
        let size: usize = dims.iter().product();
        let mut distributions = Vec::with_capacity(self.distributions.len());
        for (t, cells) in self.distributions.iter().enumerate() {
            let mut exact = vec![num_rational::BigRational::from_integer(0.into()); size];
            let mut listed = vec![false; size];
            for cell in cells {
                if cell.outcome.len() != dims.len() {
                    errors.push(ValidationError::TupleArity {
                        treatment: t,
                        outcome: cell.outcome.clone(),
                        expected: dims.len(),
                        got: cell.outcome.len(),
                    });
                    continue;
                }
                let mut flat = 0;
                let mut known = true;
                for (v, label) in self.variables.iter().zip(&cell.outcome) {
                    match v.outcome_index(label) {
                        Some(i) => flat = flat * v.outcomes.len() + i,
                        None => {
                            known = false;
                            errors.push(ValidationError::UnknownOutcome {
                                treatment: t,
                                variable: v.name.clone(),
                                outcome: label.clone(),
                            });
                        }
                    }
                }
                let text = cell.p.text();
                let value = match parse_rational(&text) {
                    Ok(r) => r,
                    Err(e) => {
                        errors.push(ValidationError::BadProbability {
                            treatment: t,
                            text,
                            reason: e.to_string(),
                        });
                        continue;
                    }
                };
                if !known {
                    continue;
                }
                if listed[flat] {
                    errors.push(ValidationError::DuplicateCell {
                        treatment: t,
                        outcome: cell.outcome.clone(),
                    });
                    continue;
                }
                listed[flat] = true;
                exact[flat] = value;
            }
            distributions
                .push(JointPmf::from_exact(names.clone(), dims.clone(), exact).expect("shape follows the variables"));
        }
        let diagram = self.diagram.as_ref().map(|d| Diagram {
            influences: d
                .iter()
                .map(|(v, fs)| (v.clone(), fs.iter().cloned().collect()))
                .collect(),
        });
        let parts = Parts {
            factors: self.factors.clone(),
            variables: self.variables.clone(),
            diagram,
            treatments: self.treatments.clone(),
            distributions,
        };
        (parts, errors)
    }

    /// Every problem found in the document; empty means it loads.
    pub fn validate(&self, eps_prob: f64) -> Vec<ValidationError> {
        let (parts, mut errors) = self.parts();
        if !errors.is_empty() {
            return errors;
        }
        match &parts.diagram {
            None => errors.extend(validate_parts(
                &parts.factors,
                &parts.variables,
                &parts.treatments,
                &parts.distributions,
                eps_prob,
            )),
            Some(d) => {
                if let Err(e) = canonical_rearrangement(
                    &parts.factors,
                    &parts.variables,
                    d,
                    &parts.treatments,
                    &parts.distributions,
                ) {
                    match e {
                        ModelError::Invalid(list) => errors.extend(list),
                        other => errors.push(ValidationError::BadDiagram {
                            reason: other.to_string(),
                        }),
                    }
                }
            }
        }
        errors
    }

    pub fn to_system(&self) -> Result<SelectiveSystem, ModelError> {
        let (parts, errors) = self.parts();
        if !errors.is_empty() {
            return Err(ModelError::Invalid(errors));
        }
        match &parts.diagram {
            None => SelectiveSystem::new(parts.factors, parts.variables, parts.treatments, parts.distributions),
            Some(d) => canonical_rearrangement(
                &parts.factors,
                &parts.variables,
                d,
                &parts.treatments,
                &parts.distributions,
            ),
        }
    }

    pub fn correlation_source(&self) -> Result<Option<CorrelationSource>, ModelError> {
        let Some(list) = &self.correlations else {
            return Ok(None);
        };
        let entries = list
            .iter()
            .map(|c| Ok((c.x.parse::<FactorPoint>()?, c.y.parse::<FactorPoint>()?, c.rho)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Some(CorrelationSource::supplied(entries)))
    }

    /// A bijective document for `system`; every cell is listed, probabilities
    /// as exact strings.
    pub fn from_system(system: &SelectiveSystem) -> Self {
        let distributions = system
            .distributions()
            .iter()
            .map(|pmf| {
                pmf.exact_or_decimal()
                    .iter()
                    .enumerate()
                    .map(|(k, p)| Cell {
                        outcome: pmf
                            .tuple_of(k)
                            .iter()
                            .zip(system.variables())
                            .map(|(&o, v)| v.outcomes[o].clone())
                            .collect(),
                        p: Probability::Text(rational_to_string(p)),
                    })
                    .collect()
            })
            .collect();
        SystemDocument {
            format_version: FORMAT_VERSION.to_string(),
            name: None,
            factors: system.factors().to_vec(),
            variables: system.variables().to_vec(),
            diagram: None,
            treatments: system.treatments(),
            distributions,
            correlations: None,
        }
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn with_correlations(mut self, source: &CorrelationSource) -> Self {
        if let CorrelationSource::Supplied(map) = source {
            self.correlations = Some(
                map.iter()
                    .map(|((x, y), &rho)| Correlation {
                        x: x.to_string(),
                        y: y.to_string(),
                        rho,
                    })
                    .collect(),
            );
        }
        self
    }
}

pub fn load_system(text: &str) -> Result<(SelectiveSystem, Option<CorrelationSource>), DocumentError> {
    let doc = SystemDocument::from_json(text)?;
    let system = doc.to_system()?;
    Ok((system, doc.correlation_source()?))
}

/// Default normalization tolerance for [`SystemDocument::validate`].
pub const EPS_PROB: f64 = DEFAULT_EPS_PROB;
