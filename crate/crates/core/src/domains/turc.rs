//! Turc potential evapotranspiration for a moderate climate.
//!
//! The Angström coefficients `a_coef` and `b_coef` carry the usual defaults
//! (0.25 and 0.50) so the solar radiation model is usable before they are set.

use super::{IndicatorEntry, ModelEntry, Pack, PACK_VERSION};
use crate::registry::IndexDefinition;
use crate::viz::Mode;

const RADIATION: &str = "calcm-2 J";

fn index(id: &str, label: &str, unit: &str, default: Option<f64>) -> IndexDefinition {
    IndexDefinition {
        id: id.into(),
        label: label.into(),
        unit: unit.into(),
        description: String::new(),
        default,
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

fn indicator(id: &str, label: &str, expression: &str, unit: &str, mode: Mode) -> IndicatorEntry {
    IndicatorEntry {
        id: id.into(),
        label: label.into(),
        expression: expression.into(),
        unit: unit.into(),
        default_mode: mode,
        rules: Vec::new(),
        gauge: None,
    }
}

pub fn turc_pack() -> Pack {
    Pack {
        name: "turc".into(),
        version: PACK_VERSION.into(),
        indices: vec![
            index("T", "Average temperature of the period", "°C", None),
            index("Ra", "Extraterrestrial radiation", RADIATION, None),
            index("n", "Duration of effective insolation", "hours", None),
            index("N", "Possible astronomical duration of insolation", "hours", None),
            index("J", "Day of year (1..365)", "day-of-year", None),
            index("lat", "Latitude", "degrees", None),
            index("a_coef", "Angström coefficient a", "dimensionless", Some(0.25)),
            index("b_coef", "Angström coefficient b", "dimensionless", Some(0.50)),
        ],
        models: vec![
            model("phi", "Latitude in radians", "lat * pi / 180", "rad"),
            model("dr", "Inverse relative Earth-Sun distance", "1 + 0.033 * cos(2 * pi / 365 * J)", "dimensionless"),
            model("delta", "Solar declination", "0.409 * sin(2 * pi / 365 * J - 1.39)", "rad"),
            model("omega_s", "Sunset hour angle", "arccos(-tan(phi) * tan(delta))", "rad"),
            model("Rs", "Solar radiation", "Ra * (a_coef + b_coef * n / N)", RADIATION),
        ],
        indicators: vec![
            indicator("Rs_daily", "Daily solar radiation", "Rs", RADIATION, Mode::Text),
            indicator("Rs_decadal", "Decadal total solar radiation", "Rs", RADIATION, Mode::Text),
            indicator("T_decadal", "Decadal average temperature", "T", "°C", Mode::Text),
            indicator(
                "ET_decadal",
                "Potential evapotranspiration (decadal)",
                "0.13 * (Rs + 50) * T / (T + 15)",
                "mm",
                Mode::Histogram,
            ),
            indicator(
                "ET_monthly",
                "Potential evapotranspiration (monthly)",
                "0.4 * (Rs + 50) * T / (T + 15)",
                "mm",
                Mode::Histogram,
            ),
        ],
        values: Vec::new(),
    }
}
