//! Editorial multi-agent pipeline for evidence-based pest management advice.
//!
//! Three agent roles collaborate over file-based artifacts in a run
//! workspace: an editor synthesises the advice document, a retriever plans
//! and executes external lookups against a local guidance corpus, and a
//! validator cross-checks the binary pest management decision against the
//! published action threshold. A deterministic scripted backend executes
//! every task by rule, so the whole pipeline — including the two-stage
//! accuracy evaluation — runs offline and reproducibly; a remote
//! chat-completions backend slots in behind the same trait.

pub mod agents;
pub mod domain;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod knowledge;
pub mod pipeline;
pub(crate) mod util;

pub use error::{Error, Result};

/// Deterministic generators for fuzz- and round-trip tests. Not part of the
/// public API surface.
#[doc(hidden)]
pub mod testkit {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::domain::{
        decision_marker, Citation, DocStage, PestScenario, PmaDocument, PmdDecision, Quantity,
        Section, Source, ThresholdRecord, UnitRegistry, REQUIRED_SECTIONS,
    };
    use crate::util::format_value;

    const WORDS: [&str; 16] = [
        "rotation", "sampling", "monitor", "field", "soil", "count", "drilling", "guidance",
        "variety", "pressure", "treatment", "records", "laboratory", "hygiene", "headland",
        "assessment",
    ];

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
        (0..n)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn random_scenario(rng: &mut ChaCha8Rng, registry: &UnitRegistry) -> PestScenario {
        let units = [
            "eggs-and-larvae/gram-soil",
            "nematodes/litre-soil",
            "larvae/litre-soil",
            "cysts/gram-soil",
            "juveniles/litre-soil",
        ];
        let unit = registry.token(units[rng.random_range(0..units.len())]).unwrap();
        let value = rng.random_range(0..500) as f64 + if rng.random() { 0.5 } else { 0.0 };
        let severity = Quantity::new(value, unit.clone()).unwrap();
        let severity_raw = format!("{} {}", format_value(value), registry.natural_phrase(&unit));
        PestScenario {
            pest: format!("Pest {}", rng.random_range(0..50)),
            severity,
            severity_raw,
            crop_name: format!("Crop {}", rng.random_range(0..9)),
            crop_growth_stage: "Seedling".into(),
            temperature_c: rng.random_range(-5..35) as f64,
            weather: words(rng, 1),
            humidity_pct: rng.random_range(0..=100) as f64,
            precipitation_mm: rng.random_range(0..80) as f64,
            time: "April".into(),
            location: format!("Region {}", rng.random_range(0..12)),
            ground_truth_pmd: None,
        }
    }

    pub fn random_document(rng: &mut ChaCha8Rng, registry: &UnitRegistry) -> PmaDocument {
        let scenario = random_scenario(rng, registry);
        let action: bool = rng.random();
        let decision = if rng.random() {
            let threshold = ThresholdRecord {
                pest: scenario.pest.clone(),
                crop_name: scenario.crop_name.clone(),
                threshold: Quantity::new(
                    rng.random_range(1..400) as f64,
                    scenario.severity.unit.clone(),
                )
                .unwrap(),
                source: Source {
                    publisher: "AHDB".into(),
                    reference: format!("https://example.org/doc-{}", rng.random_range(0..99)),
                },
                raw_text: words(rng, 4),
            };
            // Documents may carry erroneous corpus-backed decisions (that is
            // what the validator corrects), so the boolean is free here.
            PmdDecision {
                action_required: action,
                severity_used: scenario.severity.clone(),
                threshold_used: Some(threshold),
                rationale: words(rng, 8),
                confidence: crate::domain::Confidence::CorpusBacked,
            }
        } else {
            PmdDecision::model_estimated(scenario.severity.clone(), action, words(rng, 8))
        };

        let mut sections: Vec<Section> = REQUIRED_SECTIONS
            .iter()
            .map(|name| Section {
                name: name.to_string(),
                body: if *name == "Threshold Exceeded" {
                    format!("{}\n\n{}", decision_marker(action), words(rng, 10))
                } else {
                    // Multi-line bodies exercise the section splitter.
                    let first_len = rng.random_range(3..12);
                    let first = words(rng, first_len);
                    let second = words(rng, 5);
                    format!("{first}\n{second}")
                },
            })
            .collect();
        if rng.random() {
            sections.push(Section {
                name: "Notes".into(),
                body: words(rng, 6),
            });
        }
        // Vary section order a little: rotate the list.
        let rot = rng.random_range(0..sections.len());
        sections.rotate_left(rot);

        let citations = (0..rng.random_range(0..3))
            .map(|i| Citation {
                url: format!("https://example.org/cite-{i}"),
                publisher: "BCPC".into(),
            })
            .collect();
        let stage = match rng.random_range(0..3) {
            0 => DocStage::Initial,
            1 => DocStage::Customised,
            _ => DocStage::Validated,
        };
        PmaDocument::new(scenario, sections, decision, stage, citations)
            .expect("generated documents are valid")
    }
}
