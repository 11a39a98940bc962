//! Earned value project control.

use super::{IndicatorEntry, ModelEntry, Pack, PACK_VERSION};
use crate::registry::IndexDefinition;
use crate::viz::{Comparison, GaugeBounds, Mode, Rule, Severity};

const CURRENCY: &str = "currency";
const RATIO: &str = "ratio";

fn index(id: &str, label: &str, description: &str) -> IndexDefinition {
    IndexDefinition {
        id: id.into(),
        label: label.into(),
        unit: CURRENCY.into(),
        description: description.into(),
        default: None,
    }
}

fn model(id: &str, label: &str, expression: &str, unit: &str) -> ModelEntry {
    ModelEntry {
        id: id.into(),
        label: label.into(),
        expression: expression.into(),
        unit: unit.into(),
    }
}

fn indicator(id: &str, label: &str, expression: &str, unit: &str, mode: Mode, rules: Vec<Rule>) -> IndicatorEntry {
    IndicatorEntry {
        id: id.into(),
        label: label.into(),
        expression: expression.into(),
        unit: unit.into(),
        default_mode: mode,
        rules,
        gauge: None,
    }
}

fn signed(negative: &str, positive: &str) -> Vec<Rule> {
    vec![
        Rule::new(Comparison::Lt, 0.0, negative, Severity::Bad),
        Rule::new(Comparison::Gt, 0.0, positive, Severity::Good),
    ]
}

fn index_of_one(below: &str, at_or_above: &str) -> Vec<Rule> {
    vec![
        Rule::new(Comparison::Lt, 1.0, below, Severity::Warning),
        Rule::new(Comparison::Ge, 1.0, at_or_above, Severity::Good),
    ]
}

pub fn evm_pack() -> Pack {
    let unit_gauge = Some(GaugeBounds { min: 0.0, max: 2.0 });
    let mut cpi = indicator(
        "CPI_I",
        "Cost performance index",
        "CPI",
        RATIO,
        Mode::Gauge,
        index_of_one("cost overrun", "on or under cost"),
    );
    cpi.gauge = unit_gauge;
    let mut spi = indicator(
        "SPI_I",
        "Schedule performance index",
        "SPI",
        RATIO,
        Mode::Gauge,
        index_of_one("behind plan", "on or ahead of plan"),
    );
    spi.gauge = unit_gauge;

    Pack {
        name: "evm".into(),
        version: PACK_VERSION.into(),
        indices: vec![
            index("PV", "Planned value", "Budgeted cost of the work scheduled to date (BCWS)"),
            index("EV", "Earned value", "Budgeted cost of the work actually performed (BCWP)"),
            index("AC", "Actual cost", "Cost actually incurred for the work performed (ACWP)"),
            index("BAC", "Budget at completion", "Total budget of the project"),
            index("ETC_INPUT", "Estimate to complete", "Bottom-up re-estimate of the remaining cost"),
        ],
        models: vec![
            model("CPI", "Cost performance index", "EV / AC", RATIO),
            model("SPI", "Schedule performance index", "EV / PV", RATIO),
            model("EAC_CPI", "Estimate at completion (current CPI)", "BAC / CPI", CURRENCY),
            model("EAC_REESTIMATE", "Estimate at completion (re-estimate)", "AC + ETC_INPUT", CURRENCY),
            model("EAC_ATYPICAL", "Estimate at completion (atypical variances)", "AC + BAC - EV", CURRENCY),
            model("EAC_TYPICAL", "Estimate at completion (typical variances)", "AC + (BAC - EV) / CPI", CURRENCY),
        ],
        indicators: vec![
            indicator("CV", "Cost variance", "EV - AC", CURRENCY, Mode::Text, signed("over budget", "under budget")),
            indicator(
                "SV",
                "Schedule variance",
                "EV - PV",
                CURRENCY,
                Mode::Text,
                signed("behind schedule", "ahead of schedule"),
            ),
            cpi,
            spi,
            indicator("EAC_I", "Estimate at completion", "EAC_CPI", CURRENCY, Mode::Text, Vec::new()),
            indicator("ETC", "Estimate to complete", "EAC_CPI - AC", CURRENCY, Mode::Text, Vec::new()),
            indicator(
                "VAC",
                "Variance at completion",
                "BAC - EAC_CPI",
                CURRENCY,
                Mode::Text,
                vec![
                    Rule::new(Comparison::Lt, 0.0, "over budget at completion", Severity::Bad),
                    Rule::new(Comparison::Gt, 0.0, "under budget at completion", Severity::Good),
                ],
            ),
            indicator(
                "EAC_REESTIMATE_I",
                "Estimate at completion (re-estimate)",
                "EAC_REESTIMATE",
                CURRENCY,
                Mode::Text,
                Vec::new(),
            ),
            indicator(
                "EAC_ATYPICAL_I",
                "Estimate at completion (atypical variances)",
                "EAC_ATYPICAL",
                CURRENCY,
                Mode::Text,
                Vec::new(),
            ),
            indicator(
                "EAC_TYPICAL_I",
                "Estimate at completion (typical variances)",
                "EAC_TYPICAL",
                CURRENCY,
                Mode::Text,
                Vec::new(),
            ),
        ],
        values: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::compute_value;
    use crate::domains::apply_pack;
    use crate::registry::{Catalog, IndexValue, PeriodKey, TierFilter};

    fn loaded(values: &[(&str, f64)]) -> (Catalog, PeriodKey) {
        let mut c = Catalog::new();
        assert!(apply_pack(&mut c, &evm_pack()).iter().all(|o| o.result.is_ok()));
        let period: PeriodKey = "2024-03".parse().unwrap();
        for (id, v) in values {
            c.set_index_value(IndexValue {
                index_id: id.to_string(),
                period: period.clone(),
                value: *v,
            })
            .unwrap();
        }
        (c, period)
    }

    #[test]
    fn formulas() {
        let p = evm_pack();
        let cv = p.indicators.iter().find(|i| i.id == "CV").unwrap();
        assert_eq!(cv.expression, "EV - AC");
        let eac = p.models.iter().find(|m| m.id == "EAC_CPI").unwrap();
        assert_eq!(eac.expression, "BAC / CPI");
    }

    #[test]
    fn listing() {
        let (c, _) = loaded(&[]);
        let ids: Vec<_> = c.list_services(TierFilter::Only(crate::registry::Tier::Index))
            .into_iter()
            .map(|e| e.id)
            .collect();
        assert_eq!(ids, ["AC", "BAC", "ETC_INPUT", "EV", "PV"]);
    }

    #[test]
    fn worked_example() {
        let (c, p) = loaded(&[("BAC", 1000.0), ("PV", 500.0), ("EV", 400.0), ("AC", 450.0)]);
        let v = |id: &str| compute_value(&c, id, &p).unwrap().value;
        assert_eq!(v("CV"), -50.0);
        assert_eq!(v("SV"), -100.0);
        assert!((v("CPI_I") - 8.0 / 9.0).abs() < 1e-12);
        assert!((v("SPI_I") - 0.8).abs() < 1e-12);
        assert!((v("EAC_I") - 1125.0).abs() < 1e-9);
        assert!((v("ETC") - 675.0).abs() < 1e-9);
        assert!((v("VAC") + 125.0).abs() < 1e-9);
        assert_eq!(v("EAC_ATYPICAL_I"), 1050.0);
        assert!((v("EAC_TYPICAL_I") - 1125.0).abs() < 1e-9);
    }
}
