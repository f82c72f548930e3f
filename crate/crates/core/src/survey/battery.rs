//! The assessment battery: an ordered set of instrument specs loaded from a
//! TOML document, with the default battery embedded in the crate.

use std::path::Path;
use std::sync::LazyLock;

use serde::Deserialize;

use super::{InstrumentKind, InstrumentSpec, SurveyError};

const DEFAULT_BATTERY_TOML: &str = include_str!("../../config/instruments.toml");

static DEFAULT_BATTERY: LazyLock<Battery> = LazyLock::new(|| {
    Battery::from_toml_str(DEFAULT_BATTERY_TOML).expect("embedded battery config is valid")
});

#[derive(Deserialize)]
struct BatteryFile {
    instrument: Vec<InstrumentSpec>,
}

/// Ordered collection of instruments; instrument order defines feature order
/// in every scored matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    instruments: Vec<InstrumentSpec>,
}

impl Battery {
    pub fn new(instruments: Vec<InstrumentSpec>) -> Result<Self, SurveyError> {
        let battery = Self { instruments };
        battery.validate()?;
        Ok(battery)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SurveyError> {
        let parsed: BatteryFile = toml::from_str(text)?;
        Self::new(parsed.instrument)
    }

    pub fn from_path(path: &Path) -> Result<Self, SurveyError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// The battery shipped with the crate (also available as a plain file in
    /// the repository under `crates/core/config/instruments.toml`).
    pub fn default_battery() -> &'static Battery {
        &DEFAULT_BATTERY
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let mut seen: std::collections::BTreeMap<String, &str> = Default::default();
        for spec in &self.instruments {
            spec.validate()?;
            if let Some(other) = self
                .instruments
                .iter()
                .filter(|s| s.name == spec.name)
                .nth(1)
            {
                return Err(SurveyError::BadInstrument {
                    instrument: other.name.clone(),
                    reason: "duplicate instrument name".to_string(),
                });
            }
            for feature in spec.feature_names() {
                if let Some(first) = seen.insert(feature.clone(), &spec.name) {
                    return Err(SurveyError::DuplicateFeature {
                        feature,
                        first: first.to_string(),
                        second: spec.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn instruments(&self) -> &[InstrumentSpec] {
        &self.instruments
    }

    pub fn instrument(&self, name: &str) -> Option<&InstrumentSpec> {
        self.instruments.iter().find(|s| s.name == name)
    }

    pub fn subjective(&self) -> Vec<InstrumentSpec> {
        self.of_kind(InstrumentKind::Subjective)
    }

    pub fn objective(&self) -> Vec<InstrumentSpec> {
        self.of_kind(InstrumentKind::Objective)
    }

    fn of_kind(&self, kind: InstrumentKind) -> Vec<InstrumentSpec> {
        self.instruments
            .iter()
            .filter(|s| s.kind == kind)
            .cloned()
            .collect()
    }
}
