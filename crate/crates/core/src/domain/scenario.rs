//! Pest scenarios and their on-disk JSON shape.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::units::{parse_quantity, Quantity, UnitRegistry};
use crate::error::{Error, Result};

/// One identified pest situation.
///
/// `ground_truth_pmd` is present only in evaluation datasets and is stripped
/// before anything is shown to an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PestScenario {
    pub pest: String,
    pub severity: Quantity,
    /// Original severity statement as written in the source file.
    pub severity_raw: String,
    pub crop_name: String,
    pub crop_growth_stage: String,
    pub temperature_c: f64,
    pub weather: String,
    pub humidity_pct: f64,
    pub precipitation_mm: f64,
    pub time: String,
    pub location: String,
    pub ground_truth_pmd: Option<bool>,
}

impl PestScenario {
    pub fn validate(&self) -> Result<()> {
        if self.pest.trim().is_empty() {
            return Err(Error::ScenarioInvalid("pest is empty".into()));
        }
        if self.crop_name.trim().is_empty() {
            return Err(Error::ScenarioInvalid("crop name is empty".into()));
        }
        if !(0.0..=100.0).contains(&self.humidity_pct) {
            return Err(Error::ScenarioInvalid(format!(
                "humidity {} outside [0,100]",
                self.humidity_pct
            )));
        }
        if self.precipitation_mm < 0.0 || !self.precipitation_mm.is_finite() {
            return Err(Error::ScenarioInvalid(format!(
                "precipitation {} must be a finite non-negative number",
                self.precipitation_mm
            )));
        }
        if !self.temperature_c.is_finite() {
            return Err(Error::ScenarioInvalid("temperature must be finite".into()));
        }
        Ok(())
    }

    /// Copy with the evaluation label removed.
    pub fn strip_ground_truth(&self) -> PestScenario {
        PestScenario {
            ground_truth_pmd: None,
            ..self.clone()
        }
    }

    pub fn from_json(registry: &UnitRegistry, text: &str) -> Result<PestScenario> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        PestScenario::from_file_repr(registry, file)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_file_repr())
            .expect("scenario serialization is infallible");
        out.push('\n');
        out
    }

    pub fn from_file_repr(registry: &UnitRegistry, file: ScenarioFile) -> Result<PestScenario> {
        let severity = parse_quantity(registry, &file.infestation_severity)?;
        let scenario = PestScenario {
            pest: file.pest,
            severity,
            severity_raw: file.infestation_severity,
            crop_name: file.crop_name,
            crop_growth_stage: file.crop_growth_stage,
            temperature_c: file.temperature.0,
            weather: file.weather,
            humidity_pct: file.humidity.0,
            precipitation_mm: file.precipitation.0,
            time: file.time,
            location: file.location,
            ground_truth_pmd: file.pest_management_decision.map(|b| b.0),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_file_repr(&self) -> ScenarioFile {
        ScenarioFile {
            pest: self.pest.clone(),
            infestation_severity: self.severity_raw.clone(),
            crop_name: self.crop_name.clone(),
            crop_growth_stage: self.crop_growth_stage.clone(),
            temperature: Num(self.temperature_c),
            weather: self.weather.clone(),
            humidity: Num(self.humidity_pct),
            precipitation: Num(self.precipitation_mm),
            time: self.time.clone(),
            location: self.location.clone(),
            pest_management_decision: self.ground_truth_pmd.map(Flag),
        }
    }
}

/// The scenario file schema: one JSON object per scenario with these exact
/// field names. Numeric fields also accept strings carrying a unit suffix
/// ("15°C", "75%", "20mm"), as scenario files transcribed from reports often
/// do.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "Pest")]
    pub pest: String,
    #[serde(rename = "InfestationSeverity")]
    pub infestation_severity: String,
    #[serde(rename = "CropName")]
    pub crop_name: String,
    #[serde(rename = "CropGrowthStage")]
    pub crop_growth_stage: String,
    #[serde(rename = "Temperature")]
    pub temperature: Num,
    #[serde(rename = "Weather")]
    pub weather: String,
    #[serde(rename = "Humidity")]
    pub humidity: Num,
    #[serde(rename = "Precipitation")]
    pub precipitation: Num,
    #[serde(rename = "Time")]
    pub time: String,
    #[serde(rename = "Location")]
    pub location: String,
    #[serde(
        rename = "PestManagementDecision",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub pest_management_decision: Option<Flag>,
}

/// Number that deserializes from a JSON number or a suffixed string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Num)
                .ok_or_else(|| D::Error::custom("number out of f64 range")),
            serde_json::Value::String(s) => {
                let cleaned: String = s
                    .chars()
                    .take_while(|c| c.is_ascii_digit() || *c == '.' || *c == '-')
                    .collect();
                cleaned
                    .parse::<f64>()
                    .map(Num)
                    .map_err(|_| D::Error::custom(format!("cannot parse number from {s:?}")))
            }
            other => Err(D::Error::custom(format!(
                "expected number or string, got {other}"
            ))),
        }
    }
}

/// Boolean that also accepts "True"/"False" strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flag(pub bool);

impl Serialize for Flag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_bool(self.0)
    }
}

impl<'de> Deserialize<'de> for Flag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Bool(b) => Ok(Flag(b)),
            serde_json::Value::String(s) => match s.to_lowercase().as_str() {
                "true" => Ok(Flag(true)),
                "false" => Ok(Flag(false)),
                _ => Err(D::Error::custom(format!("cannot parse boolean from {s:?}"))),
            },
            other => Err(D::Error::custom(format!(
                "expected bool or string, got {other}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "Pest": "Beet Cyst Nematode",
        "InfestationSeverity": "1 egg and larvae per gram of soil",
        "CropName": "Sugar Beet",
        "CropGrowthStage": "Seedling",
        "Temperature": 15,
        "Weather": "Overcast",
        "Humidity": 75,
        "Precipitation": 20,
        "Time": "April",
        "Location": "Lincolnshire",
        "PestManagementDecision": false
    }"#;

    #[test]
    fn parses_sample_scenario() {
        let s = PestScenario::from_json(&UnitRegistry::default(), SAMPLE).unwrap();
        assert_eq!(s.pest, "Beet Cyst Nematode");
        assert_eq!(s.severity.value, 1.0);
        assert_eq!(s.severity.unit.as_str(), "eggs-and-larvae/gram-soil");
        assert_eq!(s.temperature_c, 15.0);
        assert_eq!(s.ground_truth_pmd, Some(false));
    }

    #[test]
    fn accepts_suffixed_numeric_strings() {
        let text = SAMPLE
            .replace(": 15,", ": \"15°C\",")
            .replace(": 75,", ": \"75%\",")
            .replace(": 20,", ": \"20mm\",");
        let s = PestScenario::from_json(&UnitRegistry::default(), &text).unwrap();
        assert_eq!(s.temperature_c, 15.0);
        assert_eq!(s.humidity_pct, 75.0);
        assert_eq!(s.precipitation_mm, 20.0);
    }

    #[test]
    fn strip_removes_label_and_round_trips() {
        let reg = UnitRegistry::default();
        let s = PestScenario::from_json(&reg, SAMPLE).unwrap();
        let stripped = s.strip_ground_truth();
        assert_eq!(stripped.ground_truth_pmd, None);
        let json = stripped.to_json_pretty();
        assert!(!json.contains("PestManagementDecision"));
        let back = PestScenario::from_json(&reg, &json).unwrap();
        assert_eq!(back, stripped);
    }

    #[test]
    fn rejects_out_of_range_humidity() {
        let text = SAMPLE.replace(": 75,", ": 130,");
        let err = PestScenario::from_json(&UnitRegistry::default(), &text).unwrap_err();
        assert!(matches!(err, Error::ScenarioInvalid(_)), "{err}");
    }

    #[test]
    fn rejects_empty_pest() {
        let text = SAMPLE.replace("Beet Cyst Nematode", "");
        let err = PestScenario::from_json(&UnitRegistry::default(), &text).unwrap_err();
        assert!(matches!(err, Error::ScenarioInvalid(_)), "{err}");
    }
}
