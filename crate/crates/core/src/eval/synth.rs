//! Synthetic dataset and matching corpus generator.
//!
//! Every generated scenario is labeled by the strict-exceeds rule against the
//! threshold its corpus document carries, and severities are sampled away
//! from the band where the scripted editor's intrinsic estimate would
//! disagree with that label. The two measurement points then behave exactly
//! like the controlled experiments the harness needs: stage 1 is correct
//! unless a fault is injected, and the validator corrects precisely the
//! corpus-backed flips.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{parse_quantity, PestScenario, UnitRegistry};
use crate::error::{Error, Result};
use crate::eval::Dataset;
use crate::gateway::scripted::intrinsic_pivot;
use crate::knowledge::{Corpus, KnowledgeDoc, ThresholdFact};
use crate::util::format_value;

/// Built-in pool of UK soil pests with the unit their counts use.
pub const PEST_POOL: [(&str, &str); 40] = [
    ("Beet Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Free-Living Nematodes", "nematodes/litre-soil"),
    ("Potato Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Cereal Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Stem Nematode", "nematodes/litre-soil"),
    ("Root-Knot Nematode", "juveniles/litre-soil"),
    ("Root-Lesion Nematode", "nematodes/litre-soil"),
    ("Stubby-Root Nematode", "nematodes/litre-soil"),
    ("Needle Nematode", "nematodes/litre-soil"),
    ("Dagger Nematode", "nematodes/litre-soil"),
    ("Pea Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Wireworm", "larvae/litre-soil"),
    ("Leatherjacket", "larvae/litre-soil"),
    ("Chafer Grub", "larvae/litre-soil"),
    ("Cutworm", "larvae/litre-soil"),
    ("Bean Seed Fly", "larvae/litre-soil"),
    ("Cabbage Root Fly", "larvae/litre-soil"),
    ("Carrot Fly", "larvae/litre-soil"),
    ("Onion Fly", "larvae/litre-soil"),
    ("Wheat Bulb Fly", "larvae/litre-soil"),
    ("Frit Fly", "larvae/litre-soil"),
    ("Swift Moth", "larvae/litre-soil"),
    ("Springtail", "larvae/litre-soil"),
    ("Symphylid", "larvae/litre-soil"),
    ("Millipede", "larvae/litre-soil"),
    ("Field Slug", "juveniles/litre-soil"),
    ("Spiral Nematode", "nematodes/litre-soil"),
    ("Pin Nematode", "nematodes/litre-soil"),
    ("Ring Nematode", "nematodes/litre-soil"),
    ("Sheath Nematode", "nematodes/litre-soil"),
    ("Lance Nematode", "nematodes/litre-soil"),
    ("Sting Nematode", "nematodes/litre-soil"),
    ("Bulb and Stem Nematode", "nematodes/litre-soil"),
    ("Clover Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Carrot Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Hop Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Oat Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Brassica Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("Grass Cyst Nematode", "eggs-and-larvae/gram-soil"),
    ("False Root-Knot Nematode", "juveniles/litre-soil"),
];

const CROP_POOL: [&str; 10] = [
    "Sugar Beet",
    "Winter Wheat",
    "Potato",
    "Oilseed Rape",
    "Spring Barley",
    "Carrot",
    "Vining Pea",
    "Field Bean",
    "Onion",
    "Maize",
];

const WEATHER_POOL: [&str; 7] = [
    "Overcast",
    "Partly cloudy",
    "Sunny",
    "Light rain",
    "Showers",
    "Fog",
    "Dry",
];

const MONTH_POOL: [&str; 8] = [
    "March", "April", "May", "June", "July", "August", "September", "October",
];

const LOCATION_POOL: [&str; 10] = [
    "Lincolnshire",
    "Norfolk",
    "Suffolk",
    "Yorkshire",
    "Kent",
    "Cambridgeshire",
    "Shropshire",
    "Somerset",
    "Essex",
    "Herefordshire",
];

const PUBLISHERS: [&str; 3] = ["AHDB", "BCPC", "EU-FarmBook"];

/// Counts and pools driving generation.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub n_scenarios: usize,
    pub n_pests: usize,
    /// Crop names to cycle through; the built-in pool when `None`.
    pub crops: Option<Vec<String>>,
}

impl GeneratorSpec {
    pub fn new(n_scenarios: usize, n_pests: usize) -> Self {
        GeneratorSpec {
            n_scenarios,
            n_pests,
            crops: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_scenarios == 0 {
            return Err(Error::SpecInvalid("n_scenarios must be at least 1".into()));
        }
        if self.n_pests == 0 {
            return Err(Error::SpecInvalid("n_pests must be at least 1".into()));
        }
        if self.n_pests > PEST_POOL.len() {
            return Err(Error::SpecInvalid(format!(
                "n_pests {} exceeds the pest pool size {}",
                self.n_pests,
                PEST_POOL.len()
            )));
        }
        if let Some(crops) = &self.crops {
            if crops.is_empty() {
                return Err(Error::SpecInvalid("crop pool must be non-empty".into()));
            }
        }
        Ok(())
    }
}

/// One generated (pest, crop) guidance entry.
#[derive(Debug, Clone)]
pub struct SynthEntry {
    pub pest: String,
    pub crop: String,
    pub unit: String,
    pub threshold_value: f64,
    pub publisher: String,
    pub doc_id: String,
}

/// Generated dataset plus the knowledge entries its labels were derived from.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub dataset: Dataset,
    pub entries: Vec<SynthEntry>,
    registry: UnitRegistry,
}

impl SyntheticWorld {
    /// Full corpus: one document per (pest, crop) entry.
    pub fn corpus(&self) -> Arc<Corpus> {
        self.corpus_excluding(&BTreeSet::new())
    }

    /// Corpus with the threshold facts removed for the (pest, crop) pairs of
    /// the named scenarios. Docs remain; only the structured facts and their
    /// threshold statements disappear, so those scenarios become
    /// unverifiable rather than unsearchable.
    pub fn corpus_without(&self, scenario_ids: &BTreeSet<String>) -> Arc<Corpus> {
        let excluded = self.pairs_for(scenario_ids);
        self.corpus_excluding(&excluded)
    }

    /// (pest, crop) pairs used by the given scenario ids.
    pub fn pairs_for(&self, scenario_ids: &BTreeSet<String>) -> BTreeSet<(String, String)> {
        self.dataset
            .scenarios
            .iter()
            .enumerate()
            .filter(|(i, _)| scenario_ids.contains(&Dataset::scenario_id(*i)))
            .map(|(_, s)| (s.pest.clone(), s.crop_name.clone()))
            .collect()
    }

    fn corpus_excluding(&self, excluded: &BTreeSet<(String, String)>) -> Arc<Corpus> {
        let docs: Vec<KnowledgeDoc> = self
            .entries
            .iter()
            .map(|entry| {
                let with_fact = !excluded.contains(&(entry.pest.clone(), entry.crop.clone()));
                build_doc(&self.registry, entry, with_fact)
            })
            .collect();
        Arc::new(
            Corpus::from_docs(docs, self.registry.clone()).expect("generated docs are valid"),
        )
    }
}

/// Integer threshold ranges per unit, scaled to each unit's typical counts.
fn sample_threshold(rng: &mut ChaCha8Rng, unit: &str) -> f64 {
    match unit {
        "eggs-and-larvae/gram-soil" => rng.random_range(2..=20) as f64,
        "cysts/gram-soil" => rng.random_range(4..=30) as f64,
        "nematodes/litre-soil" => (rng.random_range(4..=40) * 50) as f64,
        "larvae/litre-soil" => (rng.random_range(4..=30) * 10) as f64,
        "juveniles/litre-soil" => (rng.random_range(5..=45) * 20) as f64,
        other => panic!("no threshold range for unit {other}"),
    }
}

/// Generates the dataset and its matching knowledge entries.
///
/// Severities avoid the open interval between the corpus threshold and the
/// intrinsic pivot (and equality with either), so the editor's intrinsic
/// estimate always agrees with the label. Strict-exceeds boundary behavior is
/// covered by the decision-rule oracle tests, not the generator.
pub fn generate_world(spec: &GeneratorSpec, seed: u64) -> Result<SyntheticWorld> {
    spec.validate()?;
    let registry = UnitRegistry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let crops: Vec<String> = spec
        .crops
        .clone()
        .unwrap_or_else(|| CROP_POOL.iter().map(|c| c.to_string()).collect());

    let mut entries = Vec::with_capacity(spec.n_pests);
    for (i, (pest, unit)) in PEST_POOL.iter().take(spec.n_pests).enumerate() {
        let crop = crops[i % crops.len()].clone();
        let threshold_value = sample_threshold(&mut rng, unit);
        entries.push(SynthEntry {
            pest: pest.to_string(),
            crop,
            unit: unit.to_string(),
            threshold_value,
            publisher: PUBLISHERS[i % PUBLISHERS.len()].to_string(),
            doc_id: format!("synth-{i:03}-{}", slug(pest)),
        });
    }

    let mut scenarios = Vec::with_capacity(spec.n_scenarios);
    for i in 0..spec.n_scenarios {
        let entry = &entries[i % entries.len()];
        let unit = registry.token(&entry.unit)?;
        let pivot = intrinsic_pivot(&unit);
        let threshold = entry.threshold_value;
        let label: bool = rng.random();

        let severity_value = if label {
            let base = threshold.max(pivot) as u64;
            (base + rng.random_range(1..=base.max(1))) as f64
        } else {
            let cap = (threshold.min(pivot) as u64).saturating_sub(1);
            rng.random_range(0..=cap) as f64
        };
        debug_assert_eq!(severity_value > threshold, label);
        debug_assert_eq!(severity_value > pivot, label);

        let severity_raw = format!(
            "{} {}",
            format_value(severity_value),
            registry.natural_phrase(&unit)
        );
        let severity = parse_quantity(&registry, &severity_raw)?;
        debug_assert_eq!(severity.value, severity_value);

        scenarios.push(PestScenario {
            pest: entry.pest.clone(),
            severity,
            severity_raw,
            crop_name: entry.crop.clone(),
            crop_growth_stage: if i % 2 == 0 { "Seedling" } else { "Establishment" }.to_string(),
            temperature_c: rng.random_range(5..=25) as f64,
            weather: WEATHER_POOL[rng.random_range(0..WEATHER_POOL.len())].to_string(),
            humidity_pct: rng.random_range(40..=95) as f64,
            precipitation_mm: rng.random_range(0..=60) as f64,
            time: MONTH_POOL[rng.random_range(0..MONTH_POOL.len())].to_string(),
            location: LOCATION_POOL[rng.random_range(0..LOCATION_POOL.len())].to_string(),
            ground_truth_pmd: Some(label),
        });
    }

    Ok(SyntheticWorld {
        dataset: Dataset {
            name: format!("synthetic-{}x{}-seed{seed}", spec.n_scenarios, spec.n_pests),
            source_note: "generated; labels follow the strict-exceeds rule against the \
                          generated corpus thresholds"
                .to_string(),
            scenarios,
        },
        entries,
        registry,
    })
}

/// The dataset alone, for callers that bring their own corpus.
pub fn generate_synthetic_dataset(spec: &GeneratorSpec, seed: u64) -> Result<Dataset> {
    Ok(generate_world(spec, seed)?.dataset)
}

fn build_doc(registry: &UnitRegistry, entry: &SynthEntry, with_fact: bool) -> KnowledgeDoc {
    let unit = registry.token(&entry.unit).expect("pool units are registry tokens");
    let natural = registry.natural_phrase(&unit);
    let mut body = format!(
        "{publisher} guidance for {pest} in {crop}. Sample fields before establishment and \
         record laboratory counts for {pest}.",
        publisher = entry.publisher,
        pest = entry.pest,
        crop = entry.crop,
    );
    let raw_text = format!("{} {natural}", format_value(entry.threshold_value));
    if with_fact {
        body.push_str(&format!(
            " The action threshold is {raw_text}: counts above this level justify immediate \
             treatment in {crop}, lower counts call for monitoring.",
            crop = entry.crop,
        ));
    } else {
        body.push_str(&format!(
            " Current guidance gives no numeric action threshold for {pest} in {crop}; \
             monitor and seek local advice.",
            pest = entry.pest,
            crop = entry.crop,
        ));
    }
    KnowledgeDoc {
        doc_id: entry.doc_id.clone(),
        publisher: entry.publisher.clone(),
        title: format!("{} management in {}", entry.pest, entry.crop),
        url: format!("https://guidance.example.org/{}", entry.doc_id),
        body,
        thresholds: if with_fact {
            vec![ThresholdFact {
                pest: entry.pest.clone(),
                crop: entry.crop.clone(),
                value: entry.threshold_value,
                unit: entry.unit.clone(),
                raw_text,
            }]
        } else {
            vec![]
        },
    }
}

fn slug(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '-' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::decide_pmd;

    #[test]
    fn paper_shaped_world() {
        let world = generate_world(&GeneratorSpec::new(68, 39), 0).unwrap();
        assert_eq!(world.dataset.scenarios.len(), 68);
        let pests: BTreeSet<&str> = world
            .dataset
            .scenarios
            .iter()
            .map(|s| s.pest.as_str())
            .collect();
        assert_eq!(pests.len(), 39, "68 scenarios cover 39 pest species");
        world.dataset.validate().unwrap();
    }

    #[test]
    fn labels_match_strict_exceeds_against_corpus() {
        let world = generate_world(&GeneratorSpec::new(40, 20), 3).unwrap();
        let corpus = world.corpus();
        for s in &world.dataset.scenarios {
            let record = corpus
                .lookup_threshold(&s.pest, &s.crop_name)
                .expect("every generated pair has a threshold");
            let decision = decide_pmd(corpus.registry(), &s.severity, &record).unwrap();
            assert_eq!(Some(decision.action_required), s.ground_truth_pmd);
        }
    }

    #[test]
    fn intrinsic_estimate_agrees_with_labels() {
        let world = generate_world(&GeneratorSpec::new(50, 25), 9).unwrap();
        for s in &world.dataset.scenarios {
            let estimate = crate::gateway::scripted::intrinsic_decision(s);
            assert_eq!(Some(estimate.action_required), s.ground_truth_pmd, "{}", s.pest);
        }
    }

    #[test]
    fn dataset_only_generator_matches_world() {
        let spec = GeneratorSpec::new(20, 8);
        let dataset = generate_synthetic_dataset(&spec, 4).unwrap();
        let world = generate_world(&spec, 4).unwrap();
        assert_eq!(dataset, world.dataset);
    }

    #[test]
    fn zero_scenarios_is_spec_invalid() {
        assert!(matches!(
            generate_world(&GeneratorSpec::new(0, 5), 0).unwrap_err(),
            Error::SpecInvalid(_)
        ));
        assert!(matches!(
            generate_world(&GeneratorSpec::new(5, 0), 0).unwrap_err(),
            Error::SpecInvalid(_)
        ));
    }

    #[test]
    fn same_seed_is_identical() {
        let a = generate_world(&GeneratorSpec::new(30, 10), 7).unwrap();
        let b = generate_world(&GeneratorSpec::new(30, 10), 7).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.corpus().digest(), b.corpus().digest());
        let c = generate_world(&GeneratorSpec::new(30, 10), 8).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn removed_thresholds_keep_docs_but_drop_facts() {
        let world = generate_world(&GeneratorSpec::new(10, 10), 1).unwrap();
        let removed: BTreeSet<String> = [Dataset::scenario_id(0)].into_iter().collect();
        let corpus = world.corpus_without(&removed);
        let s0 = &world.dataset.scenarios[0];
        assert!(corpus.lookup_threshold(&s0.pest, &s0.crop_name).is_none());
        assert_eq!(corpus.len(), 10, "document itself remains");
        let s1 = &world.dataset.scenarios[1];
        assert!(corpus.lookup_threshold(&s1.pest, &s1.crop_name).is_some());
    }
}
