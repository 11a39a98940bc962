//! Indicator evaluation: dependency closure, topological plan, execution.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::expr::{evaluate, EvalError};
use crate::registry::{Catalog, PeriodKey, Tier};
use crate::viz::{interpret, make_descriptor, Interpretation, Mode, VisualizationDescriptor, VizError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComputeError {
    #[error("unknown indicator '{0}'")]
    UnknownIndicator(String),
    #[error("unknown service '{0}'")]
    UnknownService(String),
    #[error("missing value: {index}@{period}")]
    MissingIndexValue { index: String, period: PeriodKey },
    #[error("evaluation of '{node}' failed: {source}")]
    Evaluation { node: String, source: EvalError },
    #[error("invalid period range {from}..{to}")]
    InvalidRange { from: PeriodKey, to: PeriodKey },
    #[error(transparent)]
    Visualization(#[from] VizError),
}

impl ComputeError {
    pub fn offending_ids(&self) -> Vec<String> {
        match self {
            ComputeError::UnknownIndicator(id) | ComputeError::UnknownService(id) => vec![id.clone()],
            ComputeError::MissingIndexValue { index, .. } => vec![index.clone()],
            ComputeError::Evaluation { node, .. } => vec![node.clone()],
            ComputeError::InvalidRange { .. } => Vec::new(),
            ComputeError::Visualization(VizError::EmptySeries(id)) => vec![id.clone()],
        }
    }
}

/// Nodes to evaluate for one target: indices first (by id), then models in
/// dependency order (ties by id), the target last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvaluationPlan {
    pub target: String,
    pub nodes: Vec<String>,
}

/// Plan for an indicator.
pub fn plan(catalog: &Catalog, indicator_id: &str) -> Result<EvaluationPlan, ComputeError> {
    if catalog.indicator(indicator_id).is_none() {
        return Err(ComputeError::UnknownIndicator(indicator_id.to_string()));
    }
    plan_node(catalog, indicator_id)
}

/// Plan for any service: index, model or indicator.
pub fn plan_node(catalog: &Catalog, id: &str) -> Result<EvaluationPlan, ComputeError> {
    if catalog.tier_of(id).is_none() {
        return Err(ComputeError::UnknownService(id.to_string()));
    }
    let mut closure = BTreeSet::new();
    let mut stack = vec![id];
    while let Some(node) = stack.pop() {
        if closure.insert(node) {
            stack.extend(catalog.dependencies(node).unwrap_or_default());
        }
    }

    let mut nodes: Vec<String> = closure
        .iter()
        .filter(|n| catalog.tier_of(n) == Some(Tier::Index))
        .map(|n| n.to_string())
        .collect();
    let mut pending: BTreeMap<&str, BTreeSet<&str>> = closure
        .iter()
        .filter(|n| catalog.tier_of(n) != Some(Tier::Index))
        .map(|n| {
            let deps = catalog
                .dependencies(n)
                .unwrap_or_default()
                .into_iter()
                .filter(|d| catalog.tier_of(d) != Some(Tier::Index))
                .collect();
            (*n, deps)
        })
        .collect();
    while let Some(next) = pending.iter().find(|(_, d)| d.is_empty()).map(|(n, _)| *n) {
        pending.remove(next);
        pending.values_mut().for_each(|d| {
            d.remove(next);
        });
        nodes.push(next.to_string());
    }
    debug_assert!(pending.is_empty());
    Ok(EvaluationPlan {
        target: id.to_string(),
        nodes,
    })
}

/// Per-call cache of node values for one period.
#[derive(Debug, Default)]
pub struct Memo {
    values: HashMap<String, Result<f64, ComputeError>>,
}

impl Memo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A node's value together with the values of every node in its plan.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeValue {
    pub value: f64,
    pub intermediates: BTreeMap<String, f64>,
}

/// The first index without a value, in evaluation order: a depth-first,
/// left-to-right walk of the target's formula.
fn first_missing(catalog: &Catalog, id: &str, period: &PeriodKey) -> Option<String> {
    fn walk<'a>(
        catalog: &'a Catalog,
        id: &'a str,
        period: &PeriodKey,
        seen: &mut BTreeSet<&'a str>,
    ) -> Option<String> {
        if !seen.insert(id) {
            return None;
        }
        if catalog.index(id).is_some() {
            return catalog.value(id, period).is_none().then(|| id.to_string());
        }
        catalog
            .dependencies(id)
            .unwrap_or_default()
            .into_iter()
            .find_map(|dep| walk(catalog, dep, period, seen))
    }
    walk(catalog, id, period, &mut BTreeSet::new())
}

/// Evaluate any service at `period`, reusing and filling `memo`.
pub fn compute_node(
    catalog: &Catalog,
    id: &str,
    period: &PeriodKey,
    memo: &mut Memo,
) -> Result<NodeValue, ComputeError> {
    let plan = plan_node(catalog, id)?;
    if let Some(index) = first_missing(catalog, id, period) {
        return Err(ComputeError::MissingIndexValue {
            index,
            period: period.clone(),
        });
    }
    let mut env: BTreeMap<String, f64> = BTreeMap::new();
    for node in &plan.nodes {
        let result = match memo.values.get(node) {
            Some(r) => r.clone(),
            None => {
                let r = match catalog.expression(node) {
                    None => catalog.value(node, period).ok_or_else(|| ComputeError::MissingIndexValue {
                        index: node.clone(),
                        period: period.clone(),
                    }),
                    Some(expr) => evaluate(expr, &env).map_err(|source| ComputeError::Evaluation {
                        node: node.clone(),
                        source,
                    }),
                };
                memo.values.insert(node.clone(), r.clone());
                r
            }
        };
        env.insert(node.clone(), result?);
    }
    Ok(NodeValue {
        value: env[&plan.target],
        intermediates: env,
    })
}

/// Evaluate any service at `period` without sharing a cache.
pub fn compute_value(catalog: &Catalog, id: &str, period: &PeriodKey) -> Result<NodeValue, ComputeError> {
    compute_node(catalog, id, period, &mut Memo::new())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorReport {
    pub indicator: String,
    pub label: String,
    pub period: PeriodKey,
    pub value: f64,
    pub unit: String,
    pub interpretation: Option<Interpretation>,
    pub descriptor: VisualizationDescriptor,
    pub intermediates: BTreeMap<String, f64>,
}

fn report_with(
    catalog: &Catalog,
    indicator_id: &str,
    period: &PeriodKey,
    mode: Option<Mode>,
    memo: &mut Memo,
) -> Result<IndicatorReport, ComputeError> {
    let def = catalog
        .indicator(indicator_id)
        .ok_or_else(|| ComputeError::UnknownIndicator(indicator_id.to_string()))?;
    let nv = compute_node(catalog, indicator_id, period, memo)?;
    let descriptor = make_descriptor(
        def,
        &[(period.clone(), nv.value)],
        mode.unwrap_or(def.default_mode),
        None,
    )?;
    Ok(IndicatorReport {
        indicator: def.id.clone(),
        label: def.label.clone(),
        period: period.clone(),
        value: nv.value,
        unit: def.unit.clone(),
        interpretation: interpret(&def.rules, nv.value),
        descriptor,
        intermediates: nv.intermediates,
    })
}

/// One indicator at one period, in its default mode.
pub fn compute_indicator(
    catalog: &Catalog,
    indicator_id: &str,
    period: &PeriodKey,
) -> Result<IndicatorReport, ComputeError> {
    report_with(catalog, indicator_id, period, None, &mut Memo::new())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub id: String,
    pub outcome: Result<IndicatorReport, ComputeError>,
}

/// One entry per requested id, in request order. Shared dependencies are
/// evaluated once; a failing entry does not affect its siblings.
pub fn compute_report(
    catalog: &Catalog,
    ids: &[String],
    period: &PeriodKey,
    mode: Option<Mode>,
) -> Vec<ReportEntry> {
    let mut memo = Memo::new();
    ids.iter()
        .map(|id| ReportEntry {
            id: id.clone(),
            outcome: report_with(catalog, id, period, mode, &mut memo),
        })
        .collect()
}

/// Histogram of one indicator over the stored periods within `[from, to]`.
///
/// Periods where an input is missing are skipped; any other failure aborts.
pub fn compute_series(
    catalog: &Catalog,
    indicator_id: &str,
    from: &PeriodKey,
    to: &PeriodKey,
) -> Result<VisualizationDescriptor, ComputeError> {
    let def = catalog
        .indicator(indicator_id)
        .ok_or_else(|| ComputeError::UnknownIndicator(indicator_id.to_string()))?;
    if from.kind() != to.kind() || from > to {
        return Err(ComputeError::InvalidRange {
            from: from.clone(),
            to: to.clone(),
        });
    }
    let plan = plan(catalog, indicator_id)?;
    let inputs = plan
        .nodes
        .iter()
        .filter(|n| catalog.tier_of(n) == Some(Tier::Index))
        .map(String::as_str);
    let mut points = Vec::new();
    for period in catalog.periods_for(inputs) {
        if !period.within(from, to) {
            continue;
        }
        match compute_value(catalog, indicator_id, &period) {
            Ok(nv) => points.push((period, nv.value)),
            Err(ComputeError::MissingIndexValue { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(make_descriptor(def, &points, Mode::Histogram, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::registry::{IndexDefinition, IndexValue, IndicatorDefinition, ModelDefinition};
    use crate::viz::{Comparison, Rule, Severity};

    fn p(s: &str) -> PeriodKey {
        s.parse().unwrap()
    }

    fn catalog() -> Catalog {
        let mut c = Catalog::new();
        for id in ["PV", "EV", "AC", "BAC"] {
            c.register_index(IndexDefinition {
                id: id.into(),
                label: id.into(),
                unit: "currency".into(),
                description: String::new(),
                default: None,
            })
            .unwrap();
        }
        for (id, src) in [("CPI", "EV / AC"), ("SPI", "EV / PV"), ("EAC", "BAC / CPI")] {
            c.register_model(ModelDefinition {
                id: id.into(),
                label: id.into(),
                expression: parse(src).unwrap(),
                unit: "ratio".into(),
            })
            .unwrap();
        }
        let rules = vec![
            Rule::new(Comparison::Lt, 0.0, "over budget", Severity::Bad),
            Rule::new(Comparison::Gt, 0.0, "under budget", Severity::Good),
        ];
        for (id, src, rules) in [
            ("CV", "EV - AC", rules),
            ("CPI_I", "CPI", vec![]),
            ("SPI_I", "SPI", vec![]),
            ("EAC_I", "EAC", vec![]),
            ("BAC_I", "BAC", vec![]),
        ] {
            c.register_indicator(IndicatorDefinition {
                id: id.into(),
                label: id.into(),
                expression: parse(src).unwrap(),
                unit: "currency".into(),
                default_mode: Mode::Text,
                rules,
                gauge: None,
            })
            .unwrap();
        }
        c
    }

    fn set(c: &mut Catalog, period: &str, pairs: &[(&str, f64)]) {
        for (id, v) in pairs {
            c.set_index_value(IndexValue {
                index_id: id.to_string(),
                period: p(period),
                value: *v,
            })
            .unwrap();
        }
    }

    #[test]
    fn plans() {
        let c = catalog();
        assert_eq!(plan(&c, "CV").unwrap().nodes, ["AC", "EV", "CV"]);
        assert_eq!(plan(&c, "EAC_I").unwrap().nodes, ["AC", "BAC", "EV", "CPI", "EAC", "EAC_I"]);
        assert_eq!(plan(&c, "BAC_I").unwrap().nodes.len(), 2);
        assert_eq!(plan(&c, "CPI"), Err(ComputeError::UnknownIndicator("CPI".into())));
        assert_eq!(plan_node(&c, "CPI").unwrap().nodes, ["AC", "EV", "CPI"]);
        assert_eq!(plan_node(&c, "EV").unwrap().nodes, ["EV"]);
    }

    #[test]
    fn cost_variance_report() {
        let mut c = catalog();
        set(&mut c, "2024-03", &[("EV", 400.0), ("AC", 450.0)]);
        let r = compute_indicator(&c, "CV", &p("2024-03")).unwrap();
        assert_eq!(r.value, -50.0);
        let i = r.interpretation.unwrap();
        assert_eq!((i.label.as_str(), i.severity), ("over budget", Severity::Bad));
        assert_eq!(r.intermediates.keys().collect::<Vec<_>>(), ["AC", "CV", "EV"]);
        assert_eq!(r.descriptor.mode(), Mode::Text);
    }

    #[test]
    fn equal_ratio_is_one() {
        let mut c = catalog();
        set(&mut c, "2024-03", &[("EV", 400.0), ("PV", 400.0)]);
        let r = compute_indicator(&c, "SPI_I", &p("2024-03")).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(r.interpretation.is_none());
    }

    #[test]
    fn zero_actual_cost_is_an_evaluation_error() {
        let mut c = catalog();
        set(&mut c, "2024-03", &[("EV", 400.0), ("AC", 0.0)]);
        match compute_indicator(&c, "CPI_I", &p("2024-03")) {
            Err(ComputeError::Evaluation { node, source: EvalError::DivisionByZero { .. } }) => {
                assert_eq!(node, "CPI")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_value_reports_first_in_evaluation_order() {
        let c = catalog();
        let err = compute_indicator(&c, "CV", &p("2099-01")).unwrap_err();
        assert_eq!(err.to_string(), "missing value: EV@2099-01");
        let mut c = catalog();
        set(&mut c, "2024-03", &[("EV", 1.0)]);
        let err = compute_indicator(&c, "CV", &p("2024-03")).unwrap_err();
        assert_eq!(err.to_string(), "missing value: AC@2024-03");
    }

    #[test]
    fn batch_report() {
        let mut c = catalog();
        set(&mut c, "2024-03", &[("EV", 400.0), ("AC", 450.0), ("PV", 500.0)]);
        let ids: Vec<String> = ["CV", "BadId", "CPI_I"].map(String::from).to_vec();
        let entries = compute_report(&c, &ids, &p("2024-03"), Some(Mode::Gauge));
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].outcome.as_ref().unwrap().value, -50.0);
        assert_eq!(entries[1].outcome, Err(ComputeError::UnknownIndicator("BadId".into())));
        assert_eq!(entries[2].outcome.as_ref().unwrap().descriptor.mode(), Mode::Gauge);
        assert!(compute_report(&c, &[], &p("2024-03"), None).is_empty());
    }

    #[test]
    fn memo_is_shared_and_transparent() {
        let mut c = catalog();
        set(&mut c, "2024-03", &[("EV", 400.0), ("AC", 450.0), ("BAC", 1000.0)]);
        let mut memo = Memo::new();
        let a = compute_node(&c, "EAC_I", &p("2024-03"), &mut memo).unwrap();
        let filled = memo.len();
        let b = compute_node(&c, "CPI_I", &p("2024-03"), &mut memo).unwrap();
        assert_eq!(memo.len(), filled + 1);
        assert_eq!(a, compute_value(&c, "EAC_I", &p("2024-03")).unwrap());
        assert_eq!(b, compute_value(&c, "CPI_I", &p("2024-03")).unwrap());
        assert_eq!(a.value, 1000.0 / (400.0 / 450.0));
    }

    #[test]
    fn closure_is_minimal() {
        let mut c = catalog();
        set(&mut c, "2024-03", &[("EV", 400.0), ("AC", 450.0), ("BAC", 1000.0)]);
        let plan = plan(&c, "EAC_I").unwrap();
        let full = compute_value(&c, "EAC_I", &p("2024-03")).unwrap();
        for skip in &plan.nodes[..plan.nodes.len() - 1] {
            // evaluating the plan without `skip` leaves a formula unbound
            let mut env: BTreeMap<String, f64> = BTreeMap::new();
            let mut failed = false;
            for node in plan.nodes.iter().filter(|n| *n != skip) {
                match c.expression(node) {
                    None => {
                        env.insert(node.clone(), full.intermediates[node]);
                    }
                    Some(e) => match evaluate(e, &env) {
                        Ok(v) => {
                            env.insert(node.clone(), v);
                        }
                        Err(EvalError::UnboundSymbol(_)) => {
                            failed = true;
                            break;
                        }
                        Err(other) => panic!("{other}"),
                    },
                }
            }
            assert!(failed, "plan without {skip} still evaluated");
        }
    }

    #[test]
    fn series_skips_missing_periods() {
        let mut c = catalog();
        set(&mut c, "2024-01", &[("EV", 100.0), ("AC", 90.0)]);
        set(&mut c, "2024-02", &[("EV", 200.0)]);
        set(&mut c, "2024-03", &[("EV", 300.0), ("AC", 350.0)]);
        set(&mut c, "2024-04", &[("EV", 1.0), ("AC", 1.0)]);
        let d = compute_series(&c, "CV", &p("2024-01"), &p("2024-03")).unwrap();
        let VisualizationDescriptor::Histogram(h) = d else { panic!() };
        let got: Vec<_> = h.bars.iter().map(|b| (b.period.label().to_string(), b.value)).collect();
        assert_eq!(got, [("2024-01".to_string(), 10.0), ("2024-03".to_string(), -50.0)]);

        assert!(matches!(
            compute_series(&c, "CV", &p("2024-03"), &p("2024-01")),
            Err(ComputeError::InvalidRange { .. })
        ));
        assert!(matches!(
            compute_series(&c, "CV", &p("2024-01-01"), &p("2024-03")),
            Err(ComputeError::InvalidRange { .. })
        ));
        assert_eq!(
            compute_series(&c, "CV", &p("2030-01"), &p("2030-03")),
            Err(ComputeError::Visualization(VizError::EmptySeries("CV".into())))
        );
    }
}
