//! Core domain types: quantities with units, scenarios, thresholds, the
//! strict-exceeds decision rule, and the advice document schema.

pub mod document;
pub mod scenario;
pub mod threshold;
pub mod units;

pub use document::{
    decision_marker, parse_pma_markdown, render_pma_markdown, DocStage, PmaDocument, Section,
    DECISION_SECTION, REQUIRED_SECTIONS,
};
pub use scenario::{PestScenario, ScenarioFile};
pub use threshold::{decide_pmd, Citation, Confidence, PmdDecision, Source, ThresholdRecord};
pub use units::{normalize_units, parse_quantity, ParsedUnit, Quantity, UnitRegistry, UnitToken};
