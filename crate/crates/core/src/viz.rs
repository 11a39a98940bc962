//! Interpretation rules and render-ready visualization descriptors.
//!
//! Descriptors serialize as `{"mode": ..., "payload": {...}}` with
//! lower_snake_case keys; that shape is what the HTTP API returns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{IndicatorDefinition, PeriodKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Gauge,
    Text,
    Histogram,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gauge" => Ok(Mode::Gauge),
            "text" => Ok(Mode::Text),
            "histogram" => Ok(Mode::Histogram),
            other => Err(format!("unknown mode '{other}' (gauge|text|histogram)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Gauge => "gauge",
            Mode::Text => "text",
            Mode::Histogram => "histogram",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Good,
    Warning,
    Bad,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Good => "good",
            Severity::Warning => "warning",
            Severity::Bad => "bad",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparison {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::Lt => value < threshold,
            Comparison::Le => value <= threshold,
            Comparison::Gt => value > threshold,
            Comparison::Ge => value >= threshold,
            Comparison::Eq => value == threshold,
        }
    }
}

/// `value <op> threshold` → (label, severity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub op: Comparison,
    pub threshold: f64,
    pub label: String,
    pub severity: Severity,
}

impl Rule {
    pub fn new(op: Comparison, threshold: f64, label: impl Into<String>, severity: Severity) -> Self {
        Rule {
            op,
            threshold,
            label: label.into(),
            severity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interpretation {
    pub label: String,
    pub severity: Severity,
}

/// The first rule whose predicate holds, if any.
pub fn interpret(rules: &[Rule], value: f64) -> Option<Interpretation> {
    rules
        .iter()
        .find(|r| r.op.holds(value, r.threshold))
        .map(|r| Interpretation {
            label: r.label.clone(),
            severity: r.severity,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeBounds {
    pub min: f64,
    pub max: f64,
}

/// Default gauge scale: symmetric around the midpoint of the rule thresholds
/// (0 without rules), half-width twice the largest distance from that centre
/// to a threshold or the value, rounded up to 1, 2 or 5 × 10ⁿ.
pub fn default_bounds(rules: &[Rule], value: f64) -> GaugeBounds {
    let (lo, hi) = rules.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.threshold), hi.max(r.threshold))
    });
    let centre = if rules.is_empty() { 0.0 } else { (lo + hi) / 2.0 };
    let spread = rules
        .iter()
        .map(|r| (r.threshold - centre).abs())
        .fold((value - centre).abs(), f64::max);
    let half = if spread > 0.0 && spread.is_finite() {
        nice_ceil(2.0 * spread)
    } else {
        1.0
    };
    GaugeBounds {
        min: centre - half,
        max: centre + half,
    }
}

fn nice_ceil(x: f64) -> f64 {
    let magnitude = 10f64.powf(x.log10().floor());
    let fraction = x / magnitude;
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .find(|s| fraction <= s * (1.0 + 1e-12))
        .unwrap_or(10.0);
    step * magnitude
}

/// A contiguous range of gauge values sharing one interpretation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    pub lower_inclusive: bool,
    pub upper_inclusive: bool,
    pub label: String,
    pub severity: Severity,
}

impl Band {
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lower_inclusive { v >= self.lower } else { v > self.lower };
        let below = if self.upper_inclusive { v <= self.upper } else { v < self.upper };
        above && below
    }
}

/// Split `[min, max]` into non-overlapping bands following `rules`.
///
/// Rules only change outcome at their thresholds, so the range is cut at every
/// threshold inside it; each cut point and each open gap between cuts gets the
/// first-match interpretation, and equal neighbours are merged. Values matching
/// no rule fall in the gaps between bands.
pub fn bands(rules: &[Rule], bounds: GaugeBounds) -> Vec<Band> {
    let mut cuts: Vec<f64> = rules
        .iter()
        .map(|r| r.threshold)
        .filter(|t| *t > bounds.min && *t < bounds.max)
        .collect();
    cuts.push(bounds.min);
    cuts.push(bounds.max);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    // (start, end, is_point, interpretation)
    let mut pieces: Vec<(f64, f64, bool, Option<Interpretation>)> = Vec::new();
    for (i, &p) in cuts.iter().enumerate() {
        pieces.push((p, p, true, interpret(rules, p)));
        if let Some(&next) = cuts.get(i + 1) {
            pieces.push((p, next, false, interpret(rules, p + (next - p) / 2.0)));
        }
    }

    let mut out: Vec<Band> = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    let flush = |run: (usize, usize), out: &mut Vec<Band>| {
        let (first, last) = (&pieces[run.0], &pieces[run.1]);
        if let Some(interp) = &first.3 {
            out.push(Band {
                lower: first.0,
                upper: last.1,
                lower_inclusive: first.2,
                upper_inclusive: last.2,
                label: interp.label.clone(),
                severity: interp.severity,
            });
        }
    };
    for i in 0..pieces.len() {
        run = match run {
            Some((start, _)) if pieces[start].3 == pieces[i].3 => Some((start, i)),
            Some(done) => {
                flush(done, &mut out);
                Some((i, i))
            }
            None => Some((i, i)),
        };
    }
    if let Some(done) = run {
        flush(done, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugePayload {
    pub indicator: String,
    pub unit: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
    /// The value clamped into `[min, max]`.
    pub needle: f64,
    /// True when `value` lies outside `[min, max]`.
    pub clamped: bool,
    pub bands: Vec<Band>,
    pub interpretation: Option<Interpretation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPayload {
    pub indicator: String,
    pub unit: String,
    pub value: f64,
    pub interpretation: Option<Interpretation>,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub period: PeriodKey,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPayload {
    pub indicator: String,
    pub unit: String,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "payload", rename_all = "snake_case")]
pub enum VisualizationDescriptor {
    Gauge(GaugePayload),
    Text(TextPayload),
    Histogram(HistogramPayload),
}

impl VisualizationDescriptor {
    pub fn mode(&self) -> Mode {
        match self {
            VisualizationDescriptor::Gauge(_) => Mode::Gauge,
            VisualizationDescriptor::Text(_) => Mode::Text,
            VisualizationDescriptor::Histogram(_) => Mode::Histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VizError {
    #[error("no data points for '{0}'")]
    EmptySeries(String),
}

/// Build a descriptor for `indicator` from `points` (period, value).
///
/// Gauge and text use the latest point; histogram uses all of them, sorted by
/// period. `bounds` overrides the indicator's own gauge bounds.
pub fn make_descriptor(
    indicator: &IndicatorDefinition,
    points: &[(PeriodKey, f64)],
    mode: Mode,
    bounds: Option<GaugeBounds>,
) -> Result<VisualizationDescriptor, VizError> {
    let mut sorted: Vec<(PeriodKey, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let Some((_, value)) = sorted.last().cloned() else {
        return Err(VizError::EmptySeries(indicator.id.clone()));
    };
    let interpretation = interpret(&indicator.rules, value);
    Ok(match mode {
        Mode::Text => VisualizationDescriptor::Text(TextPayload {
            sentence: sentence(&indicator.id, value, &indicator.unit, interpretation.as_ref()),
            indicator: indicator.id.clone(),
            unit: indicator.unit.clone(),
            value,
            interpretation,
        }),
        Mode::Gauge => {
            let b = bounds
                .or(indicator.gauge)
                .unwrap_or_else(|| default_bounds(&indicator.rules, value));
            let needle = value.clamp(b.min, b.max);
            VisualizationDescriptor::Gauge(GaugePayload {
                indicator: indicator.id.clone(),
                unit: indicator.unit.clone(),
                value,
                min: b.min,
                max: b.max,
                needle,
                clamped: needle != value,
                bands: bands(&indicator.rules, b),
                interpretation,
            })
        }
        Mode::Histogram => VisualizationDescriptor::Histogram(HistogramPayload {
            indicator: indicator.id.clone(),
            unit: indicator.unit.clone(),
            bars: sorted
                .into_iter()
                .map(|(period, value)| Bar { period, value })
                .collect(),
        }),
    })
}

fn sentence(id: &str, value: f64, unit: &str, interp: Option<&Interpretation>) -> String {
    let mut s = format!("{id} = {value}");
    if !unit.is_empty() {
        s.push(' ');
        s.push_str(unit);
    }
    if let Some(i) = interp {
        s.push_str("  [");
        s.push_str(&i.label);
        s.push(']');
    }
    s
}

pub const GAUGE_WIDTH: usize = 41;
pub const HISTOGRAM_WIDTH: usize = 40;

/// Monospace rendering for terminals.
///
/// Gauge cells show `+` good, `~` warning, `-` bad and `.` unbanded, with the
/// needle as `|`. Histogram bars use `#` for positive and `=` for negative
/// values, scaled to the largest magnitude.
pub fn render_text(descriptor: &VisualizationDescriptor) -> Vec<String> {
    match descriptor {
        VisualizationDescriptor::Text(t) => vec![t.sentence.clone()],
        VisualizationDescriptor::Gauge(g) => {
            let head = sentence(&g.indicator, g.value, &g.unit, g.interpretation.as_ref());
            let span = g.max - g.min;
            let needle_cell =
                (((g.needle - g.min) / span) * (GAUGE_WIDTH - 1) as f64).round() as usize;
            let cells: String = (0..GAUGE_WIDTH)
                .map(|i| {
                    if i == needle_cell {
                        return '|';
                    }
                    let v = g.min + span * i as f64 / (GAUGE_WIDTH - 1) as f64;
                    match g.bands.iter().find(|b| b.contains(v)).map(|b| b.severity) {
                        Some(Severity::Good) => '+',
                        Some(Severity::Warning) => '~',
                        Some(Severity::Bad) => '-',
                        None => '.',
                    }
                })
                .collect();
            let mut scale = format!("{} [{}] {}", g.min, cells, g.max);
            if g.clamped {
                scale.push_str(" (out of range)");
            }
            vec![head, scale]
        }
        VisualizationDescriptor::Histogram(h) => {
            let mut lines = vec![if h.unit.is_empty() {
                h.indicator.clone()
            } else {
                format!("{} ({})", h.indicator, h.unit)
            }];
            let peak = h.bars.iter().map(|b| b.value.abs()).fold(0.0, f64::max);
            let label_width = h.bars.iter().map(|b| b.period.label().len()).max().unwrap_or(0);
            for bar in &h.bars {
                let len = if peak > 0.0 {
                    ((bar.value.abs() / peak) * HISTOGRAM_WIDTH as f64).round() as usize
                } else {
                    0
                };
                let ch = if bar.value < 0.0 { "=" } else { "#" };
                lines.push(format!(
                    "{:<label_width$} |{} {}",
                    bar.period.label(),
                    ch.repeat(len),
                    bar.value
                ));
            }
            lines
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use proptest::prelude::*;

    fn sign_rules(neg: &str, pos: &str) -> Vec<Rule> {
        vec![
            Rule::new(Comparison::Lt, 0.0, neg, Severity::Bad),
            Rule::new(Comparison::Gt, 0.0, pos, Severity::Good),
        ]
    }

    fn indicator(id: &str, unit: &str, rules: Vec<Rule>) -> IndicatorDefinition {
        IndicatorDefinition {
            id: id.into(),
            label: id.into(),
            expression: parse("x").unwrap(),
            unit: unit.into(),
            default_mode: Mode::Text,
            rules,
            gauge: None,
        }
    }

    fn p(s: &str) -> PeriodKey {
        s.parse().unwrap()
    }

    #[test]
    fn interpret_examples() {
        let sv = sign_rules("behind schedule", "ahead of schedule");
        assert_eq!(
            interpret(&sv, -100.0),
            Some(Interpretation {
                label: "behind schedule".into(),
                severity: Severity::Bad
            })
        );
        let cv = sign_rules("over budget", "under budget");
        assert_eq!(interpret(&cv, 0.0), None);
        let vac = vec![Rule::new(Comparison::Lt, 0.0, "over budget at completion", Severity::Bad)];
        assert_eq!(interpret(&vac, 1000.0 - 1125.0).unwrap().label, "over budget at completion");
        assert_eq!(interpret(&[], 1.0), None);
    }

    #[test]
    fn first_match_wins_on_overlap() {
        let rules = vec![
            Rule::new(Comparison::Lt, 10.0, "low", Severity::Warning),
            Rule::new(Comparison::Lt, 0.0, "negative", Severity::Bad),
        ];
        assert_eq!(interpret(&rules, -5.0).unwrap().label, "low");
        let reversed: Vec<Rule> = rules.into_iter().rev().collect();
        assert_eq!(interpret(&reversed, -5.0).unwrap().label, "negative");
    }

    #[test]
    fn boundaries_need_inclusive_ops() {
        let strict = sign_rules("n", "p");
        assert!(interpret(&strict, 0.0).is_none());
        let inclusive = vec![Rule::new(Comparison::Ge, 1.0, "ok", Severity::Good)];
        assert!(interpret(&inclusive, 1.0).is_some());
        let eq = vec![Rule::new(Comparison::Eq, 1.0, "par", Severity::Good)];
        assert!(interpret(&eq, 1.0).is_some());
        assert!(interpret(&eq, 1.0 + f64::EPSILON).is_none());
    }

    #[test]
    fn default_bounds_cover_value() {
        let b = default_bounds(&sign_rules("a", "b"), -50.0);
        assert_eq!(b, GaugeBounds { min: -100.0, max: 100.0 });
        let cpi = vec![
            Rule::new(Comparison::Lt, 1.0, "w", Severity::Warning),
            Rule::new(Comparison::Ge, 1.0, "g", Severity::Good),
        ];
        let b = default_bounds(&cpi, 0.8);
        assert!((b.min - 0.5).abs() < 1e-12 && (b.max - 1.5).abs() < 1e-12);
        assert_eq!(default_bounds(&[], 0.0), GaugeBounds { min: -1.0, max: 1.0 });
        assert_eq!(default_bounds(&[], 30.0), GaugeBounds { min: -100.0, max: 100.0 });
        assert_eq!(nice_ceil(100.0), 100.0);
        assert_eq!(nice_ceil(101.0), 200.0);
        assert_eq!(nice_ceil(0.3), 0.5);
    }

    #[test]
    fn cpi_gauge() {
        let rules = vec![
            Rule::new(Comparison::Lt, 1.0, "cost overrun", Severity::Bad),
            Rule::new(Comparison::Gt, 1.0, "under cost", Severity::Good),
        ];
        let def = indicator("CPI", "ratio", rules);
        let d = make_descriptor(
            &def,
            &[(p("2024-03"), 0.8888)],
            Mode::Gauge,
            Some(GaugeBounds { min: 0.0, max: 2.0 }),
        )
        .unwrap();
        let VisualizationDescriptor::Gauge(g) = d else { panic!("not a gauge") };
        assert_eq!(g.needle, 0.8888);
        assert!(!g.clamped);
        assert_eq!(g.interpretation.unwrap().severity, Severity::Bad);
        assert_eq!(g.bands.len(), 2);
        assert_eq!((g.bands[0].lower, g.bands[0].upper), (0.0, 1.0));
        assert!(g.bands[0].lower_inclusive && !g.bands[0].upper_inclusive);
        assert!(!g.bands[1].lower_inclusive && g.bands[1].upper_inclusive);
        let hit: Vec<_> = g.bands.iter().filter(|b| b.contains(0.8888)).collect();
        assert_eq!(hit.len(), 1);
        assert_eq!(hit[0].severity, Severity::Bad);
    }

    #[test]
    fn gauge_clamps_out_of_range() {
        let def = indicator("X", "", vec![]);
        let d = make_descriptor(&def, &[(p("2024-01"), 5.0)], Mode::Gauge, Some(GaugeBounds { min: 0.0, max: 2.0 }))
            .unwrap();
        let VisualizationDescriptor::Gauge(g) = d else { panic!() };
        assert!(g.clamped);
        assert_eq!(g.needle, 2.0);
        assert!(g.bands.is_empty());
    }

    #[test]
    fn text_descriptor_echoes_value() {
        let def = indicator("CV", "currency", sign_rules("over budget", "under budget"));
        let d = make_descriptor(&def, &[(p("2024-03"), -50.0)], Mode::Text, None).unwrap();
        assert_eq!(render_text(&d), vec!["CV = -50 currency  [over budget]".to_string()]);
        let VisualizationDescriptor::Text(t) = d else { panic!() };
        assert_eq!(t.value, -50.0);
        assert_eq!(t.unit, "currency");
    }

    #[test]
    fn histogram_sorts_and_requires_data() {
        let def = indicator("ET_monthly", "mm", vec![]);
        let pts = [(p("2024-03"), 30.0), (p("2024-01"), 10.0), (p("2024-02"), 20.0)];
        let d = make_descriptor(&def, &pts, Mode::Histogram, None).unwrap();
        let VisualizationDescriptor::Histogram(h) = &d else { panic!() };
        let labels: Vec<_> = h.bars.iter().map(|b| b.period.label().to_string()).collect();
        assert_eq!(labels, ["2024-01", "2024-02", "2024-03"]);
        assert_eq!(
            make_descriptor(&def, &[], Mode::Histogram, None),
            Err(VizError::EmptySeries("ET_monthly".into()))
        );
    }

    #[test]
    fn gauge_needle_at_min_is_leftmost() {
        let def = indicator("G", "", vec![]);
        let d = make_descriptor(&def, &[(p("2024-01"), 0.0)], Mode::Gauge, Some(GaugeBounds { min: 0.0, max: 1.0 }))
            .unwrap();
        let lines = render_text(&d);
        assert!(lines[1].starts_with("0 [|"), "{}", lines[1]);
    }

    #[test]
    fn equal_histogram_values_have_equal_bars() {
        let def = indicator("H", "", vec![]);
        let pts = [(p("2024-01"), 7.0), (p("2024-02"), 7.0)];
        let lines = render_text(&make_descriptor(&def, &pts, Mode::Histogram, None).unwrap());
        assert_eq!(lines[1].replace("2024-01", ""), lines[2].replace("2024-02", ""));
        assert_eq!(lines[1].matches('#').count(), HISTOGRAM_WIDTH);
    }

    #[test]
    fn descriptor_serialization_shape() {
        let def = indicator("CV", "currency", sign_rules("over budget", "under budget"));
        let d = make_descriptor(&def, &[(p("2024-03"), -50.0)], Mode::Gauge, None).unwrap();
        let json = serde_json::to_value(&d).unwrap();
        assert_eq!(json["mode"], "gauge");
        assert_eq!(json["payload"]["value"], -50.0);
        assert_eq!(json["payload"]["interpretation"]["severity"], "bad");
        assert_eq!(json["payload"]["bands"][0]["lower_inclusive"], true);
        let back: VisualizationDescriptor = serde_json::from_value(json).unwrap();
        assert_eq!(back, d);
    }

    fn arb_rules() -> impl Strategy<Value = Vec<Rule>> {
        let op = prop::sample::select(vec![
            Comparison::Lt,
            Comparison::Le,
            Comparison::Gt,
            Comparison::Ge,
            Comparison::Eq,
        ]);
        let sev = prop::sample::select(vec![Severity::Good, Severity::Warning, Severity::Bad]);
        prop::collection::vec(
            (op, -4i32..=4, sev).prop_map(|(op, t, sev)| Rule::new(op, t as f64 / 2.0, format!("{op:?}{t}"), sev)),
            0..5,
        )
    }

    proptest! {
        #[test]
        fn bands_partition_the_gauge(rules in arb_rules(), v in -3.0f64..3.0, grid in -6i32..=6) {
            let bounds = GaugeBounds { min: -3.0, max: 3.0 };
            let bs = bands(&rules, bounds);
            for w in bs.windows(2) {
                prop_assert!(w[0].upper <= w[1].lower);
            }
            // sample a random value plus the exact thresholds grid
            for x in [v, grid as f64 / 2.0] {
                let hits: Vec<&Band> = bs.iter().filter(|b| b.contains(x)).collect();
                prop_assert!(hits.len() <= 1);
                match interpret(&rules, x) {
                    Some(i) => {
                        prop_assert_eq!(hits.len(), 1);
                        prop_assert_eq!(hits[0].severity, i.severity);
                        prop_assert_eq!(&hits[0].label, &i.label);
                    }
                    None => prop_assert!(hits.is_empty()),
                }
            }
        }

        #[test]
        fn reordering_disjoint_rules_is_harmless(v in -10.0f64..10.0) {
            let rules = vec![
                Rule::new(Comparison::Lt, -1.0, "low", Severity::Bad),
                Rule::new(Comparison::Gt, 1.0, "high", Severity::Good),
                Rule::new(Comparison::Eq, 0.0, "zero", Severity::Warning),
            ];
            let mut reversed = rules.clone();
            reversed.reverse();
            prop_assert_eq!(interpret(&rules, v), interpret(&reversed, v));
        }
    }
}
