//! The service catalog: index, model and indicator services plus stored index values.
//!
//! Indices are leaf inputs, models are formulas over indices and other models,
//! indicators are formulas over indices and models that carry interpretation
//! rules and a visualization mode. All three tiers share one id namespace and
//! the dependency graph stays acyclic. Every mutating operation validates fully
//! before touching the catalog, so a failed call leaves it unchanged.

pub mod csv;
mod period;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::{is_identifier, is_reserved, Expr};
use crate::viz::{GaugeBounds, Mode, Rule};

pub use period::{PeriodError, PeriodKey, PeriodKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Index,
    Model,
    Indicator,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Index => "index",
            Tier::Model => "model",
            Tier::Indicator => "indicator",
        })
    }
}

/// Tier selector for [`Catalog::list_services`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TierFilter {
    Only(Tier),
    #[default]
    All,
}

impl FromStr for TierFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "index" => TierFilter::Only(Tier::Index),
            "model" => TierFilter::Only(Tier::Model),
            "indicator" => TierFilter::Only(Tier::Indicator),
            "all" => TierFilter::All,
            other => return Err(format!("unknown tier '{other}' (index|model|indicator|all)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDefinition {
    pub id: String,
    pub label: String,
    pub unit: String,
    #[serde(default)]
    pub description: String,
    /// Value used for periods that have no stored value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDefinition {
    pub id: String,
    pub label: String,
    pub expression: Expr,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorDefinition {
    pub id: String,
    pub label: String,
    pub expression: Expr,
    pub unit: String,
    pub default_mode: Mode,
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeBounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexValue {
    pub index_id: String,
    pub period: PeriodKey,
    pub value: f64,
}

/// A definition of any tier, used by [`Catalog::replace_definition`].
#[derive(Debug, Clone, PartialEq)]
pub enum Definition {
    Index(IndexDefinition),
    Model(ModelDefinition),
    Indicator(IndicatorDefinition),
}

impl Definition {
    pub fn id(&self) -> &str {
        match self {
            Definition::Index(d) => &d.id,
            Definition::Model(d) => &d.id,
            Definition::Indicator(d) => &d.id,
        }
    }

    pub fn tier(&self) -> Tier {
        match self {
            Definition::Index(_) => Tier::Index,
            Definition::Model(_) => Tier::Model,
            Definition::Indicator(_) => Tier::Indicator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServiceEntry {
    pub tier: Tier,
    pub id: String,
    pub label: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("'{id}' references unknown service(s): {}", missing.join(", "))]
    UnknownDependency { id: String, missing: Vec<String> },
    #[error("dependency cycle: {}", path.join(" -> "))]
    CycleDetected { path: Vec<String> },
    #[error("unknown id '{0}'")]
    UnknownId(String),
    #[error("unknown index '{0}'")]
    UnknownIndex(String),
    #[error("value for '{0}' must be finite")]
    NonFiniteValue(String),
    #[error("'{id}' is a {found} service, not a {expected} service")]
    TierMismatch { id: String, expected: Tier, found: Tier },
    #[error("invalid definition '{id}': {reason}")]
    Invalid { id: String, reason: String },
}

impl RegistryError {
    /// Service ids the error is about.
    pub fn offending_ids(&self) -> Vec<String> {
        match self {
            RegistryError::DuplicateId(id)
            | RegistryError::UnknownId(id)
            | RegistryError::UnknownIndex(id)
            | RegistryError::NonFiniteValue(id)
            | RegistryError::TierMismatch { id, .. }
            | RegistryError::Invalid { id, .. } => vec![id.clone()],
            RegistryError::UnknownDependency { missing, .. } => missing.clone(),
            RegistryError::CycleDetected { path } => {
                path.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    indices: BTreeMap<String, IndexDefinition>,
    models: BTreeMap<String, ModelDefinition>,
    indicators: BTreeMap<String, IndicatorDefinition>,
    values: BTreeMap<(String, PeriodKey), f64>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty() && self.models.is_empty() && self.indicators.is_empty()
    }

    pub fn tier_of(&self, id: &str) -> Option<Tier> {
        if self.indices.contains_key(id) {
            Some(Tier::Index)
        } else if self.models.contains_key(id) {
            Some(Tier::Model)
        } else if self.indicators.contains_key(id) {
            Some(Tier::Indicator)
        } else {
            None
        }
    }

    pub fn index(&self, id: &str) -> Option<&IndexDefinition> {
        self.indices.get(id)
    }

    pub fn model(&self, id: &str) -> Option<&ModelDefinition> {
        self.models.get(id)
    }

    pub fn indicator(&self, id: &str) -> Option<&IndicatorDefinition> {
        self.indicators.get(id)
    }

    pub fn indices(&self) -> impl Iterator<Item = &IndexDefinition> {
        self.indices.values()
    }

    pub fn models(&self) -> impl Iterator<Item = &ModelDefinition> {
        self.models.values()
    }

    pub fn indicators(&self) -> impl Iterator<Item = &IndicatorDefinition> {
        self.indicators.values()
    }

    /// Stored values in (index id, period) order.
    pub fn values(&self) -> impl Iterator<Item = IndexValue> + '_ {
        self.values.iter().map(|((id, period), v)| IndexValue {
            index_id: id.clone(),
            period: period.clone(),
            value: *v,
        })
    }

    /// The stored value, without falling back to the index default.
    pub fn stored_value(&self, index_id: &str, period: &PeriodKey) -> Option<f64> {
        self.values.get(&(index_id.to_string(), period.clone())).copied()
    }

    /// The stored value, or the index default when nothing is stored for `period`.
    pub fn value(&self, index_id: &str, period: &PeriodKey) -> Option<f64> {
        self.stored_value(index_id, period)
            .or_else(|| self.indices.get(index_id).and_then(|d| d.default))
    }

    /// Distinct periods for which any of `index_ids` has a stored value.
    pub fn periods_for<'a>(&self, index_ids: impl IntoIterator<Item = &'a str>) -> BTreeSet<PeriodKey> {
        let wanted: BTreeSet<&str> = index_ids.into_iter().collect();
        self.values
            .keys()
            .filter(|(id, _)| wanted.contains(id.as_str()))
            .map(|(_, p)| p.clone())
            .collect()
    }

    /// Direct dependencies of a model or indicator; empty for indices.
    pub fn dependencies(&self, id: &str) -> Option<Vec<&str>> {
        if self.indices.contains_key(id) {
            return Some(Vec::new());
        }
        self.expression(id).map(|e| e.symbols_in_order())
    }

    pub fn expression(&self, id: &str) -> Option<&Expr> {
        self.models
            .get(id)
            .map(|m| &m.expression)
            .or_else(|| self.indicators.get(id).map(|i| &i.expression))
    }

    pub fn register_index(&mut self, def: IndexDefinition) -> Result<(), RegistryError> {
        self.check_new_id(&def.id)?;
        validate_index(&def)?;
        self.indices.insert(def.id.clone(), def);
        Ok(())
    }

    pub fn register_model(&mut self, def: ModelDefinition) -> Result<(), RegistryError> {
        self.check_new_id(&def.id)?;
        self.check_formula(&def.id, &def.expression, None)?;
        self.models.insert(def.id.clone(), def);
        Ok(())
    }

    pub fn register_indicator(&mut self, def: IndicatorDefinition) -> Result<(), RegistryError> {
        self.check_new_id(&def.id)?;
        validate_indicator(&def)?;
        self.check_formula(&def.id, &def.expression, None)?;
        self.indicators.insert(def.id.clone(), def);
        Ok(())
    }

    /// Upsert: the latest value for (index, period) wins.
    pub fn set_index_value(&mut self, v: IndexValue) -> Result<(), RegistryError> {
        if !self.indices.contains_key(&v.index_id) {
            return Err(RegistryError::UnknownIndex(v.index_id));
        }
        if !v.value.is_finite() {
            return Err(RegistryError::NonFiniteValue(v.index_id));
        }
        self.values.insert((v.index_id, v.period), v.value);
        Ok(())
    }

    /// Replace the definition registered under `id` with one of the same tier.
    ///
    /// Dependents reference the replaced service by id, so the only checks
    /// needed are the new formula's own dependencies and cycle freedom.
    pub fn replace_definition(&mut self, id: &str, def: Definition) -> Result<(), RegistryError> {
        let found = self
            .tier_of(id)
            .ok_or_else(|| RegistryError::UnknownId(id.to_string()))?;
        if found != def.tier() {
            return Err(RegistryError::TierMismatch {
                id: id.to_string(),
                expected: def.tier(),
                found,
            });
        }
        if def.id() != id {
            return Err(RegistryError::Invalid {
                id: id.to_string(),
                reason: format!("body id '{}' does not match '{id}'", def.id()),
            });
        }
        match def {
            Definition::Index(d) => {
                validate_index(&d)?;
                self.indices.insert(d.id.clone(), d);
            }
            Definition::Model(d) => {
                self.check_formula(&d.id, &d.expression, Some(&d.expression))?;
                self.models.insert(d.id.clone(), d);
            }
            Definition::Indicator(d) => {
                validate_indicator(&d)?;
                self.check_formula(&d.id, &d.expression, None)?;
                self.indicators.insert(d.id.clone(), d);
            }
        }
        Ok(())
    }

    /// Services of the selected tier(s), sorted by id.
    pub fn list_services(&self, filter: TierFilter) -> Vec<ServiceEntry> {
        let want = |t: Tier| matches!(filter, TierFilter::All) || filter == TierFilter::Only(t);
        let mut out = Vec::new();
        if want(Tier::Index) {
            out.extend(self.indices.values().map(|d| entry(Tier::Index, &d.id, &d.label, &d.unit)));
        }
        if want(Tier::Model) {
            out.extend(self.models.values().map(|d| entry(Tier::Model, &d.id, &d.label, &d.unit)));
        }
        if want(Tier::Indicator) {
            out.extend(
                self.indicators
                    .values()
                    .map(|d| entry(Tier::Indicator, &d.id, &d.label, &d.unit)),
            );
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Model and indicator ids in a dependency-respecting order (ties by id).
    pub fn topological_order(&self) -> Vec<&str> {
        let nodes: Vec<&str> = self
            .models
            .keys()
            .chain(self.indicators.keys())
            .map(String::as_str)
            .collect();
        let mut pending: BTreeMap<&str, BTreeSet<&str>> = nodes
            .iter()
            .map(|id| {
                let deps = self
                    .dependencies(id)
                    .unwrap_or_default()
                    .into_iter()
                    .filter(|d| !self.indices.contains_key(*d))
                    .collect();
                (*id, deps)
            })
            .collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(next) = pending
            .iter()
            .find(|(_, deps)| deps.is_empty())
            .map(|(id, _)| *id)
        {
            pending.remove(next);
            for deps in pending.values_mut() {
                deps.remove(next);
            }
            order.push(next);
        }
        debug_assert!(pending.is_empty(), "catalog dependency graph has a cycle");
        order
    }

    /// SHA-256 over a canonical rendering of definitions and values.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            indices: Vec<&'a IndexDefinition>,
            models: Vec<&'a ModelDefinition>,
            indicators: Vec<&'a IndicatorDefinition>,
            values: Vec<(&'a str, &'a str, u64)>,
        }
        let doc = Canonical {
            indices: self.indices.values().collect(),
            models: self.models.values().collect(),
            indicators: self.indicators.values().collect(),
            values: self
                .values
                .iter()
                .map(|((id, p), v)| (id.as_str(), p.label(), v.to_bits()))
                .collect(),
        };
        let bytes = serde_json::to_vec(&doc).expect("catalog serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn check_new_id(&self, id: &str) -> Result<(), RegistryError> {
        if !is_identifier(id) || is_reserved(id) {
            return Err(RegistryError::Invalid {
                id: id.to_string(),
                reason: "id must match [A-Za-z_][A-Za-z0-9_]* and not be a reserved name".into(),
            });
        }
        if self.tier_of(id).is_some() {
            return Err(RegistryError::DuplicateId(id.to_string()));
        }
        Ok(())
    }

    /// Dependency checks for a formula owned by `id`. `model_override` is the
    /// replacement expression when `id` is an existing model being replaced.
    fn check_formula(
        &self,
        id: &str,
        expr: &Expr,
        model_override: Option<&Expr>,
    ) -> Result<(), RegistryError> {
        let deps = expr.free_variables();
        if deps.contains(id) {
            return Err(RegistryError::CycleDetected {
                path: vec![id.to_string(), id.to_string()],
            });
        }
        let missing: Vec<String> = deps
            .iter()
            .filter(|d| !self.indices.contains_key(*d) && !self.models.contains_key(*d))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(RegistryError::UnknownDependency {
                id: id.to_string(),
                missing,
            });
        }
        if model_override.is_some() {
            if let Some(path) = self.cycle_through(id, expr) {
                return Err(RegistryError::CycleDetected { path });
            }
        }
        Ok(())
    }

    /// Looks for a model path from `id` (using `replacement` as its formula)
    /// back to `id`. The graph is acyclic before the change, so any new cycle
    /// passes through `id`.
    fn cycle_through(&self, id: &str, replacement: &Expr) -> Option<Vec<String>> {
        fn dfs<'a>(
            cat: &'a Catalog,
            target: &str,
            node: &'a str,
            path: &mut Vec<&'a str>,
            seen: &mut BTreeSet<&'a str>,
        ) -> bool {
            if !seen.insert(node) {
                return false;
            }
            path.push(node);
            let deps = cat
                .models
                .get(node)
                .map(|m| m.expression.symbols_in_order())
                .unwrap_or_default();
            for dep in deps {
                if dep == target {
                    return true;
                }
                if cat.models.contains_key(dep) && dfs(cat, target, dep, path, seen) {
                    return true;
                }
            }
            path.pop();
            false
        }

        let mut seen = BTreeSet::new();
        for start in replacement.symbols_in_order() {
            if !self.models.contains_key(start) {
                continue;
            }
            let mut path = Vec::new();
            if dfs(self, id, start, &mut path, &mut seen) {
                let mut cycle: Vec<String> = std::iter::once(id)
                    .chain(path)
                    .map(str::to_string)
                    .collect();
                // rotate so the smallest id leads, then close the loop
                let lead = cycle
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                cycle.rotate_left(lead);
                cycle.push(cycle[0].clone());
                return Some(cycle);
            }
        }
        None
    }
}

fn entry(tier: Tier, id: &str, label: &str, unit: &str) -> ServiceEntry {
    ServiceEntry {
        tier,
        id: id.to_string(),
        label: label.to_string(),
        unit: unit.to_string(),
    }
}

fn validate_index(def: &IndexDefinition) -> Result<(), RegistryError> {
    let invalid = |reason: &str| RegistryError::Invalid {
        id: def.id.clone(),
        reason: reason.to_string(),
    };
    if def.unit.trim().is_empty() {
        return Err(invalid("unit must not be empty"));
    }
    if def.default.is_some_and(|v| !v.is_finite()) {
        return Err(invalid("default value must be finite"));
    }
    Ok(())
}

fn validate_indicator(def: &IndicatorDefinition) -> Result<(), RegistryError> {
    let invalid = |reason: String| RegistryError::Invalid {
        id: def.id.clone(),
        reason,
    };
    if let Some(rule) = def.rules.iter().find(|r| !r.threshold.is_finite()) {
        return Err(invalid(format!("rule '{}' has a non-finite threshold", rule.label)));
    }
    if let Some(g) = &def.gauge {
        if !(g.min.is_finite() && g.max.is_finite() && g.min < g.max) {
            return Err(invalid("gauge bounds must be finite with min < max".into()));
        }
    }
    Ok(())
}
