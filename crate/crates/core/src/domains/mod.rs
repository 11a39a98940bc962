//! Decision packs: serialized bundles of index, model and indicator services.
//!
//! A pack document is JSON with the keys `name`, `version`, `indices`,
//! `models`, `indicators` and, optionally, `values`. Formulas are stored as
//! source text and parsed when the pack is applied to a catalog.

mod evm;
mod turc;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse, ParseError};
use crate::registry::{
    Catalog, IndexDefinition, IndexValue, IndicatorDefinition, ModelDefinition, RegistryError,
};
use crate::viz::{GaugeBounds, Mode, Rule};

pub use evm::evm_pack;
pub use turc::turc_pack;

/// Current pack document version.
pub const PACK_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub label: String,
    pub expression: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorEntry {
    pub id: String,
    pub label: String,
    pub expression: String,
    pub unit: String,
    pub default_mode: Mode,
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeBounds>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("formula of '{id}': {source}")]
pub struct FormulaError {
    pub id: String,
    pub source: ParseError,
}

impl ModelEntry {
    pub fn to_definition(&self) -> Result<ModelDefinition, FormulaError> {
        Ok(ModelDefinition {
            id: self.id.clone(),
            label: self.label.clone(),
            expression: parse(&self.expression).map_err(|source| FormulaError {
                id: self.id.clone(),
                source,
            })?,
            unit: self.unit.clone(),
        })
    }
}

impl From<&ModelDefinition> for ModelEntry {
    fn from(d: &ModelDefinition) -> Self {
        ModelEntry {
            id: d.id.clone(),
            label: d.label.clone(),
            expression: d.expression.to_string(),
            unit: d.unit.clone(),
        }
    }
}

impl IndicatorEntry {
    pub fn to_definition(&self) -> Result<IndicatorDefinition, FormulaError> {
        Ok(IndicatorDefinition {
            id: self.id.clone(),
            label: self.label.clone(),
            expression: parse(&self.expression).map_err(|source| FormulaError {
                id: self.id.clone(),
                source,
            })?,
            unit: self.unit.clone(),
            default_mode: self.default_mode,
            rules: self.rules.clone(),
            gauge: self.gauge,
        })
    }
}

impl From<&IndicatorDefinition> for IndicatorEntry {
    fn from(d: &IndicatorDefinition) -> Self {
        IndicatorEntry {
            id: d.id.clone(),
            label: d.label.clone(),
            expression: d.expression.to_string(),
            unit: d.unit.clone(),
            default_mode: d.default_mode,
            rules: d.rules.clone(),
            gauge: d.gauge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pack {
    pub name: String,
    pub version: String,
    #[serde(default)]
    pub indices: Vec<IndexDefinition>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub indicators: Vec<IndicatorEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<IndexValue>,
}

impl Pack {
    pub fn empty(name: impl Into<String>) -> Self {
        Pack {
            name: name.into(),
            version: PACK_VERSION.to_string(),
            indices: Vec::new(),
            models: Vec::new(),
            indicators: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Snapshot of a catalog, models listed in dependency order.
    pub fn from_catalog(catalog: &Catalog, name: impl Into<String>) -> Self {
        let order = catalog.topological_order();
        Pack {
            name: name.into(),
            version: PACK_VERSION.to_string(),
            indices: catalog.indices().cloned().collect(),
            models: order
                .iter()
                .filter_map(|id| catalog.model(id))
                .map(ModelEntry::from)
                .collect(),
            indicators: catalog.indicators().map(IndicatorEntry::from).collect(),
            values: catalog.values().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pack serializes")
    }

    pub fn from_json(text: &str) -> Result<Pack, PackError> {
        serde_json::from_str(text).map_err(|e| PackError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("pack parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub fn load_pack(path: impl AsRef<Path>) -> Result<Pack, PackError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PackError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Pack::from_json(&text)
}

pub fn save_pack(pack: &Pack, path: impl AsRef<Path>) -> Result<(), PackError> {
    let path = path.as_ref();
    fs::write(path, pack.to_json() + "\n").map_err(|source| PackError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Index,
    Model,
    Indicator,
    Value,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntryError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryOutcome {
    pub section: Section,
    /// Service id, or `index@period` for values.
    pub id: String,
    pub result: Result<(), EntryError>,
}

/// Register every entry of `pack` into `catalog`.
///
/// Indices go first, then models in an order that satisfies their
/// dependencies on each other whatever their order in the file, then
/// indicators, then values. Models left over on a dependency cycle are
/// rejected with [`RegistryError::CycleDetected`]; every other entry gets the
/// outcome of its registry call. Failed entries leave the catalog untouched.
pub fn apply_pack(catalog: &mut Catalog, pack: &Pack) -> Vec<EntryOutcome> {
    let mut out = Vec::new();
    for def in &pack.indices {
        out.push(EntryOutcome {
            section: Section::Index,
            id: def.id.clone(),
            result: catalog.register_index(def.clone()).map_err(Into::into),
        });
    }

    let mut pending: Vec<ModelDefinition> = Vec::new();
    for entry in &pack.models {
        match entry.to_definition() {
            Ok(def) => pending.push(def),
            Err(e) => out.push(EntryOutcome {
                section: Section::Model,
                id: entry.id.clone(),
                result: Err(e.into()),
            }),
        }
    }
    loop {
        let ready: Vec<usize> = pending
            .iter()
            .enumerate()
            .filter(|(_, d)| {
                d.expression
                    .free_variables()
                    .iter()
                    .all(|s| catalog.index(s).is_some() || catalog.model(s).is_some())
            })
            .map(|(i, _)| i)
            .collect();
        if ready.is_empty() {
            break;
        }
        for i in ready.into_iter().rev() {
            let def = pending.remove(i);
            out.push(EntryOutcome {
                section: Section::Model,
                id: def.id.clone(),
                result: catalog.register_model(def).map_err(Into::into),
            });
        }
    }
    for def in &pending {
        let result = match pending_cycle(&pending, &def.id) {
            Some(path) => Err(RegistryError::CycleDetected { path }.into()),
            None => catalog.register_model(def.clone()).map_err(Into::into),
        };
        out.push(EntryOutcome {
            section: Section::Model,
            id: def.id.clone(),
            result,
        });
    }

    for entry in &pack.indicators {
        let result = entry
            .to_definition()
            .map_err(EntryError::from)
            .and_then(|d| catalog.register_indicator(d).map_err(Into::into));
        out.push(EntryOutcome {
            section: Section::Indicator,
            id: entry.id.clone(),
            result,
        });
    }

    for v in &pack.values {
        out.push(EntryOutcome {
            section: Section::Value,
            id: format!("{}@{}", v.index_id, v.period),
            result: catalog.set_index_value(v.clone()).map_err(Into::into),
        });
    }
    out
}

/// A cycle through `id` among the unregistered models, smallest id first.
fn pending_cycle(pending: &[ModelDefinition], id: &str) -> Option<Vec<String>> {
    fn deps<'a>(pending: &'a [ModelDefinition], id: &str) -> Vec<&'a str> {
        pending
            .iter()
            .find(|d| d.id == id)
            .map(|d| d.expression.symbols_in_order())
            .unwrap_or_default()
    }
    fn dfs<'a>(
        pending: &'a [ModelDefinition],
        target: &str,
        node: &'a str,
        path: &mut Vec<&'a str>,
        seen: &mut Vec<&'a str>,
    ) -> bool {
        if seen.contains(&node) {
            return false;
        }
        seen.push(node);
        path.push(node);
        for dep in deps(pending, node) {
            if dep == target || (pending.iter().any(|d| d.id == dep) && dfs(pending, target, dep, path, seen)) {
                return true;
            }
        }
        path.pop();
        false
    }
    let start = pending.iter().find(|d| d.id == id)?;
    let mut seen = Vec::new();
    for dep in start.expression.symbols_in_order() {
        let mut path = vec![start.id.as_str()];
        if dep == id || (pending.iter().any(|d| d.id == dep) && dfs(pending, id, dep, &mut path, &mut seen)) {
            let mut cycle: Vec<String> = path.into_iter().map(String::from).collect();
            let lead = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap_or(0);
            cycle.rotate_left(lead);
            cycle.push(cycle[0].clone());
            return Some(cycle);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::TierFilter;

    fn two_index_pack() -> Pack {
        let mut p = Pack::empty("test");
        for id in ["X", "Y"] {
            p.indices.push(IndexDefinition {
                id: id.into(),
                label: id.into(),
                unit: "u".into(),
                description: String::new(),
                default: None,
            });
        }
        p
    }

    fn model(id: &str, src: &str) -> ModelEntry {
        ModelEntry {
            id: id.into(),
            label: id.into(),
            expression: src.into(),
            unit: "u".into(),
        }
    }

    #[test]
    fn empty_pack_applies_cleanly() {
        let mut c = Catalog::new();
        assert!(apply_pack(&mut c, &Pack::empty("nothing")).is_empty());
        assert!(c.is_empty());
    }

    #[test]
    fn models_in_any_order() {
        let mut p = two_index_pack();
        p.models = vec![model("C", "B * 2"), model("B", "A + 1"), model("A", "X + Y")];
        let mut c = Catalog::new();
        let out = apply_pack(&mut c, &p);
        assert!(out.iter().all(|o| o.result.is_ok()), "{out:?}");
        assert_eq!(c.list_services(TierFilter::All).len(), 5);
    }

    #[test]
    fn cyclic_pair_is_reported_per_entry() {
        let mut p = two_index_pack();
        p.models = vec![model("A", "B + 1"), model("B", "A + 1"), model("OK", "X"), model("D", "A")];
        let mut c = Catalog::new();
        let out = apply_pack(&mut c, &p);
        let by_id = |id: &str| out.iter().find(|o| o.id == id).unwrap().result.clone();
        assert_eq!(by_id("OK"), Ok(()));
        let cycle = RegistryError::CycleDetected {
            path: ["A", "B", "A"].map(String::from).to_vec(),
        };
        assert_eq!(by_id("A"), Err(cycle.clone().into()));
        assert_eq!(by_id("B"), Err(cycle.into()));
        assert!(matches!(
            by_id("D"),
            Err(EntryError::Registry(RegistryError::UnknownDependency { .. }))
        ));
        assert!(c.model("OK").is_some() && c.model("A").is_none());
    }

    #[test]
    fn bad_formula_is_an_entry_error() {
        let mut p = two_index_pack();
        p.models = vec![model("A", "X +")];
        let mut c = Catalog::new();
        let out = apply_pack(&mut c, &p);
        assert!(matches!(out[2].result, Err(EntryError::Formula(_))));
    }

    #[test]
    fn from_catalog_reapplies() {
        let mut p = two_index_pack();
        p.models = vec![model("B", "A + 1"), model("A", "X + Y")];
        p.values = vec![IndexValue {
            index_id: "X".into(),
            period: "2024-01".parse().unwrap(),
            value: 2.0,
        }];
        let mut c = Catalog::new();
        apply_pack(&mut c, &p);
        let exported = Pack::from_catalog(&c, "export");
        assert_eq!(exported.models[0].id, "A");
        let mut again = Catalog::new();
        assert!(apply_pack(&mut again, &exported).iter().all(|o| o.result.is_ok()));
        assert_eq!(again, c);
    }

    #[test]
    fn parse_error_has_location() {
        match Pack::from_json("{\n  \"name\": 3\n}") {
            Err(PackError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
