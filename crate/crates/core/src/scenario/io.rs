//! Plain-text TOML format for scenario sets and sequential models.
//!
//! ```toml
//! atoms = ["lo", "mid", "hi"]
//! measures = [[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]]
//!
//! [[vectors]]
//! name = "X"
//! values = [[-1.0], [0.0], [1.0]]   # one row per atom
//!
//! [[events]]
//! name = "A"
//! atoms = ["hi"]
//!
//! [model]
//! horizon = 4
//! step = { kind = "maximal", lo = -1.0, hi = 1.0 }
//! map = { kind = "bilinear", a = -2.0, b = 0.0, c = -1.0 }
//! ```
//!
//! Every section is optional except that `measures` and `vectors` need
//! `atoms`. Unknown keys are rejected.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DiscreteMeasure, RandomVector, SampleSpace, ScenarioSet};
use crate::dp::SequentialModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorTable {
    pub name: String,
    pub values: Vec<Vec<f64>>,
}

/// Named set of atoms, used as an event or indicator observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventTable {
    pub name: String,
    pub atoms: Vec<String>,
}

/// Raw document as it appears on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measures: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vectors: Vec<VectorTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<SequentialModel>,
}

/// Validated contents of a [`ScenarioFile`].
#[derive(Debug, Clone)]
pub struct ScenarioDocument {
    pub set: Option<ScenarioSet>,
    pub vectors: Vec<(String, RandomVector)>,
    /// Events as membership flags per atom.
    pub events: Vec<(String, Vec<bool>)>,
    pub model: Option<SequentialModel>,
}

impl ScenarioDocument {
    pub fn vector(&self, name: &str) -> Option<&RandomVector> {
        self.vectors.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioDocument> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    file.validate()
}

pub fn read_scenario(path: &std::path::Path) -> Result<ScenarioDocument> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

impl ScenarioFile {
    pub fn validate(self) -> Result<ScenarioDocument> {
        let needs_space = !self.measures.is_empty() || !self.vectors.is_empty() || !self.events.is_empty();
        let space: Option<Arc<SampleSpace>> = if self.atoms.is_empty() {
            if needs_space {
                return Err(Error::Format("`atoms` is required by measures, vectors and events".into()));
            }
            None
        } else {
            Some(SampleSpace::new(self.atoms)?)
        };
        let set = match (&space, self.measures.is_empty()) {
            (Some(space), false) => {
                let measures = self
                    .measures
                    .into_iter()
                    .enumerate()
                    .map(|(i, w)| {
                        DiscreteMeasure::new(w)
                            .map_err(|e| Error::Format(format!("measures[{i}]: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(ScenarioSet::new(space.clone(), measures)?)
            }
            _ => None,
        };
        let mut vectors = Vec::new();
        for table in self.vectors {
            let space = space.as_ref().expect("checked above");
            if table.values.len() != space.len() {
                return Err(Error::Format(format!(
                    "vector `{}` has {} rows for {} atoms",
                    table.name,
                    table.values.len(),
                    space.len()
                )));
            }
            let dim = table.values.first().map_or(0, Vec::len);
            if table.values.iter().any(|r| r.len() != dim) {
                return Err(Error::Format(format!("vector `{}` has ragged rows", table.name)));
            }
            let flat = table.values.into_iter().flatten().collect();
            let v = RandomVector::new(space.clone(), dim, flat)
                .map_err(|e| Error::Format(format!("vector `{}`: {e}", table.name)))?;
            vectors.push((table.name, v));
        }
        let mut events = Vec::new();
        for ev in self.events {
            let space = space.as_ref().expect("checked above");
            let mut flags = vec![false; space.len()];
            for a in &ev.atoms {
                match space.index_of(a) {
                    Some(i) => flags[i] = true,
                    None => {
                        return Err(Error::Format(format!(
                            "event `{}` names unknown atom `{a}`",
                            ev.name
                        )))
                    }
                }
            }
            events.push((ev.name, flags));
        }
        let model = match self.model {
            Some(m) => Some(SequentialModel::new(m.horizon, m.step, m.map)?),
            None => None,
        };
        Ok(ScenarioDocument {
            set,
            vectors,
            events,
            model,
        })
    }
}

/// Serialize a scenario set and named vectors back to the text format.
pub fn write_scenario(set: &ScenarioSet, vectors: &[(&str, &RandomVector)]) -> Result<String> {
    let file = ScenarioFile {
        atoms: set.space().atoms().to_vec(),
        measures: set.measures().iter().map(|m| m.weights().to_vec()).collect(),
        vectors: vectors
            .iter()
            .map(|(name, v)| VectorTable {
                name: name.to_string(),
                values: v.points().map(<[f64]>::to_vec).collect(),
            })
            .collect(),
        events: Vec::new(),
        model: None,
    };
    toml::to_string(&file).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::StateMap;

    const DOC: &str = r#"
atoms = ["lo", "mid", "hi"]
measures = [[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]]

[[vectors]]
name = "X"
values = [[-1.0], [0.0], [1.0]]

[[events]]
name = "A"
atoms = ["hi"]

[model]
horizon = 4
step = { kind = "maximal", lo = -1.0, hi = 1.0 }
map = { kind = "bilinear", a = -2.0, b = 0.0, c = -1.0 }
"#;

    #[test]
    fn parses_full_document() {
        let doc = parse_scenario(DOC).unwrap();
        let set = doc.set.as_ref().unwrap();
        let x = doc.vector("X").unwrap();
        assert_eq!(set.eval(x).unwrap().value, 0.5);
        assert_eq!(doc.events, vec![("A".to_string(), vec![false, false, true])]);
        let m = doc.model.unwrap();
        assert_eq!(m.horizon, 4);
        assert!(matches!(m.map, StateMap::Bilinear { .. }));
    }

    #[test]
    fn round_trip() {
        let doc = parse_scenario(DOC).unwrap();
        let set = doc.set.unwrap();
        let x = doc.vectors[0].1.clone();
        let text = write_scenario(&set, &[("X", &x)]).unwrap();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(back.set.as_ref().unwrap().measures(), set.measures());
        assert_eq!(back.vector("X").unwrap().values(), x.values());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse_scenario("atomz = []"), Err(Error::Format(_))));
        assert!(parse_scenario("measures = [[1.0]]").is_err());
        let bad_weights = "atoms = [\"a\", \"b\"]\nmeasures = [[0.7, 0.7]]";
        assert!(parse_scenario(bad_weights).is_err());
        let ragged = "atoms = [\"a\", \"b\"]\n[[vectors]]\nname = \"X\"\nvalues = [[1.0], [1.0, 2.0]]";
        assert!(parse_scenario(ragged).is_err());
        let bad_event = "atoms = [\"a\"]\n[[events]]\nname = \"E\"\natoms = [\"z\"]";
        assert!(parse_scenario(bad_event).is_err());
        let bad_law = "[model]\nhorizon = 2\nstep = { kind = \"g_normal\", var_low = 4.0, var_high = 1.0 }\nmap = { kind = \"identity\" }";
        assert!(parse_scenario(bad_law).is_err());
    }
}
