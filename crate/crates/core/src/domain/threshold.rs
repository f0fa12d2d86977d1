//! Action thresholds and the binary pest management decision.

use serde::{Deserialize, Serialize};

use crate::domain::units::{normalize_units, Quantity, UnitRegistry};
use crate::error::{Error, Result};
use crate::util::format_value;

/// Where a fact came from: a publisher plus a document identifier or URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub publisher: String,
    pub reference: String,
}

/// A cited link, as attached to findings and advice documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub url: String,
    pub publisher: String,
}

/// Action threshold for a (pest, crop) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub pest: String,
    pub crop_name: String,
    pub threshold: Quantity,
    pub source: Source,
    /// The statement as published, e.g. "2 eggs and larvae per relevant soil volume".
    pub raw_text: String,
}

impl ThresholdRecord {
    pub fn validate(&self) -> Result<()> {
        if self.threshold.value <= 0.0 || !self.threshold.value.is_finite() {
            return Err(Error::SchemaViolation {
                field: "threshold.value".into(),
                cause: format!("must be > 0, got {}", self.threshold.value),
            });
        }
        if self.source.publisher.trim().is_empty() {
            return Err(Error::SchemaViolation {
                field: "source.publisher".into(),
                cause: "must be non-empty".into(),
            });
        }
        if self.pest.trim().is_empty() || self.crop_name.trim().is_empty() {
            return Err(Error::SchemaViolation {
                field: "pest/crop_name".into(),
                cause: "must be non-empty".into(),
            });
        }
        Ok(())
    }
}

/// How a decision was grounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Confidence {
    #[serde(rename = "corpus-backed")]
    CorpusBacked,
    #[serde(rename = "model-estimated")]
    ModelEstimated,
}

/// The binary pest management decision together with what it was based on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmdDecision {
    pub action_required: bool,
    pub severity_used: Quantity,
    pub threshold_used: Option<ThresholdRecord>,
    pub rationale: String,
    pub confidence: Confidence,
}

impl PmdDecision {
    /// Decision made without a published threshold, from intrinsic judgement.
    pub fn model_estimated(severity: Quantity, action_required: bool, rationale: String) -> Self {
        PmdDecision {
            action_required,
            severity_used: severity,
            threshold_used: None,
            rationale,
            confidence: Confidence::ModelEstimated,
        }
    }

    /// Structural consistency: confidence must reflect whether a threshold
    /// backs the decision. Does NOT recheck the comparison itself — documents
    /// may carry erroneous decisions that the validator later corrects.
    pub fn check_structure(&self) -> Result<()> {
        let backed = self.threshold_used.is_some();
        let ok = match self.confidence {
            Confidence::CorpusBacked => backed,
            Confidence::ModelEstimated => !backed,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::SchemaViolation {
                field: "confidence".into(),
                cause: "corpus-backed iff a threshold is cited".into(),
            })
        }
    }
}

/// Applies the strict-exceeds rule: action is required iff the measured
/// severity is strictly greater than the published threshold. Equality means
/// no action.
pub fn decide_pmd(
    registry: &UnitRegistry,
    severity: &Quantity,
    threshold: &ThresholdRecord,
) -> Result<PmdDecision> {
    threshold.validate()?;
    let (unit, _) = normalize_units(
        registry,
        severity.unit.as_str(),
        threshold.threshold.unit.as_str(),
    )?;
    let action_required = severity.value > threshold.threshold.value;
    let rationale = format!(
        "Measured severity {sev} {unit} against the action threshold of {thr} {unit} \
         ({publisher}, {reference}): severity {verdict} the threshold, so immediate action \
         is {action}.",
        sev = format_value(severity.value),
        thr = format_value(threshold.threshold.value),
        unit = unit,
        publisher = threshold.source.publisher,
        reference = threshold.source.reference,
        verdict = if action_required {
            "exceeds"
        } else {
            "does not exceed"
        },
        action = if action_required {
            "required"
        } else {
            "not required"
        },
    );
    Ok(PmdDecision {
        action_required,
        severity_used: Quantity::new(severity.value, unit.clone())?,
        threshold_used: Some(threshold.clone()),
        rationale,
        confidence: Confidence::CorpusBacked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::units::parse_quantity;

    fn reg() -> UnitRegistry {
        UnitRegistry::default()
    }

    fn record(value: f64, unit: &str) -> ThresholdRecord {
        let r = reg();
        ThresholdRecord {
            pest: "Beet Cyst Nematode".into(),
            crop_name: "Sugar Beet".into(),
            threshold: Quantity::new(value, r.token(unit).unwrap()).unwrap(),
            source: Source {
                publisher: "AHDB".into(),
                reference: "https://ahdb.org.uk/knowledge-library/beet-cyst-nematode".into(),
            },
            raw_text: format!("{value} per relevant soil volume"),
        }
    }

    #[test]
    fn below_threshold_is_false() {
        let sev = parse_quantity(&reg(), "1 egg and larvae per gram of soil").unwrap();
        let d = decide_pmd(&reg(), &sev, &record(2.0, "eggs-and-larvae/gram-soil")).unwrap();
        assert!(!d.action_required);
        assert_eq!(d.confidence, Confidence::CorpusBacked);
        assert!(d.rationale.contains("AHDB"));
        assert!(d.rationale.contains('1') && d.rationale.contains('2'));
    }

    #[test]
    fn eight_hundred_under_thousand_is_false() {
        let r = reg();
        let sev = parse_quantity(&r, "800 Trichodorus nematodes per litre of soil").unwrap();
        let mut t = record(1000.0, "nematodes/litre-soil");
        t.pest = "Free-Living Nematodes".into();
        let d = decide_pmd(&r, &sev, &t).unwrap();
        assert!(!d.action_required);
    }

    #[test]
    fn equality_is_false() {
        let r = reg();
        let sev = Quantity::new(2.0, r.token("eggs-and-larvae/gram-soil").unwrap()).unwrap();
        let d = decide_pmd(&r, &sev, &record(2.0, "eggs-and-larvae/gram-soil")).unwrap();
        assert!(!d.action_required);
    }

    #[test]
    fn above_threshold_is_true() {
        let r = reg();
        let sev = Quantity::new(3.0, r.token("eggs-and-larvae/gram-soil").unwrap()).unwrap();
        let d = decide_pmd(&r, &sev, &record(2.0, "eggs-and-larvae/gram-soil")).unwrap();
        assert!(d.action_required);
    }

    #[test]
    fn boundary_epsilon_is_true() {
        let r = reg();
        let t = record(2.0, "eggs-and-larvae/gram-soil");
        let unit = r.token("eggs-and-larvae/gram-soil").unwrap();
        let eq = Quantity::new(2.0, unit.clone()).unwrap();
        let above = Quantity::new(2.0 + 1e-9, unit).unwrap();
        assert!(!decide_pmd(&r, &eq, &t).unwrap().action_required);
        assert!(decide_pmd(&r, &above, &t).unwrap().action_required);
    }

    #[test]
    fn incomparable_units_rejected() {
        let r = reg();
        let sev = Quantity::new(3.0, r.token("nematodes/litre-soil").unwrap()).unwrap();
        let err = decide_pmd(&r, &sev, &record(2.0, "eggs-and-larvae/gram-soil")).unwrap_err();
        assert!(matches!(err, Error::UnitMismatch { .. }), "{err}");
    }

    #[test]
    fn zero_threshold_rejected() {
        let r = reg();
        let sev = Quantity::new(3.0, r.token("eggs-and-larvae/gram-soil").unwrap()).unwrap();
        let mut t = record(2.0, "eggs-and-larvae/gram-soil");
        t.threshold.value = 0.0;
        assert!(decide_pmd(&r, &sev, &t).is_err());
    }
}
