//! Unit registry, quantity parsing, and unit reconciliation.
//!
//! Infestation severities and action thresholds are counts per amount of
//! soil (e.g. `eggs-and-larvae/gram-soil`, `nematodes/litre-soil`). The
//! registry is closed: free-text unit phrases must normalize onto one of its
//! tokens before a [`Quantity`] can exist. Guidance documents sometimes give
//! a threshold "per relevant soil volume"; that phrase resolves to the
//! counterpart unit's denominator when the count kinds match, and is the only
//! wildcard the registry accepts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::format_value;

/// Normalized unit token of the form `count-kind/denominator`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitToken(String);

impl UnitToken {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn count_kind(&self) -> &str {
        self.0.split('/').next().unwrap_or("")
    }

    pub fn denominator(&self) -> &str {
        self.0.split('/').nth(1).unwrap_or("")
    }
}

impl fmt::Display for UnitToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A non-negative measured count per amount of soil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: UnitToken,
}

impl Quantity {
    pub fn new(value: f64, unit: UnitToken) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::UnparsableQuantity {
                raw: format!("{value}"),
                reason: "value must be a finite non-negative number".into(),
            });
        }
        Ok(Quantity { value, unit })
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", format_value(self.value), self.unit)
    }
}

/// Result of parsing a unit phrase: either a registry token or the wildcard
/// denominator awaiting resolution against a counterpart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedUnit {
    Concrete(UnitToken),
    Wildcard { count_kind: String },
}

/// Closed, file-configurable table of unit tokens and alias phrases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitRegistry {
    tokens: BTreeSet<String>,
    /// lowercase count phrase -> count kind
    count_aliases: BTreeMap<String, String>,
    /// lowercase denominator phrase -> denominator
    denominator_aliases: BTreeMap<String, String>,
    /// denominator phrases that defer to the counterpart unit
    wildcard_denominators: Vec<String>,
}

impl Default for UnitRegistry {
    fn default() -> Self {
        let mut tokens = BTreeSet::new();
        for t in [
            "eggs-and-larvae/gram-soil",
            "nematodes/litre-soil",
            "larvae/litre-soil",
            "cysts/gram-soil",
            "juveniles/litre-soil",
        ] {
            tokens.insert(t.to_string());
        }
        let mut count_aliases = BTreeMap::new();
        for (phrase, kind) in [
            ("eggs and larvae", "eggs-and-larvae"),
            ("egg and larvae", "eggs-and-larvae"),
            ("eggs and larva", "eggs-and-larvae"),
            ("nematodes", "nematodes"),
            ("nematode", "nematodes"),
            ("larvae", "larvae"),
            ("larva", "larvae"),
            ("cysts", "cysts"),
            ("cyst", "cysts"),
            ("juveniles", "juveniles"),
            ("juvenile", "juveniles"),
        ] {
            count_aliases.insert(phrase.to_string(), kind.to_string());
        }
        let mut denominator_aliases = BTreeMap::new();
        for (phrase, denom) in [
            ("gram of soil", "gram-soil"),
            ("gram soil", "gram-soil"),
            ("g of soil", "gram-soil"),
            ("gram", "gram-soil"),
            ("litre of soil", "litre-soil"),
            ("liter of soil", "litre-soil"),
            ("litre soil", "litre-soil"),
            ("litre", "litre-soil"),
            ("liter", "litre-soil"),
        ] {
            denominator_aliases.insert(phrase.to_string(), denom.to_string());
        }
        UnitRegistry {
            tokens,
            count_aliases,
            denominator_aliases,
            wildcard_denominators: vec!["relevant soil volume".to_string()],
        }
    }
}

impl UnitRegistry {
    /// Loads an alias table from a JSON file, replacing the built-in one.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let reg: UnitRegistry = serde_json::from_str(&text)?;
        if reg.tokens.is_empty() {
            return Err(Error::Config(format!(
                "unit registry at {} defines no tokens",
                path.display()
            )));
        }
        Ok(reg)
    }

    /// Resolves a canonical token string, rejecting anything outside the registry.
    pub fn token(&self, s: &str) -> Result<UnitToken> {
        if self.tokens.contains(s) {
            Ok(UnitToken(s.to_string()))
        } else {
            Err(Error::UnknownUnit {
                raw: s.to_string(),
                reason: "not a registry token".into(),
            })
        }
    }

    pub fn is_token(&self, s: &str) -> bool {
        self.tokens.contains(s)
    }

    /// Natural-language rendering of a token, e.g. `eggs-and-larvae/gram-soil`
    /// -> "eggs and larvae per gram of soil".
    pub fn natural_phrase(&self, unit: &UnitToken) -> String {
        let kind = unit.count_kind().replace('-', " ");
        let denom = match unit.denominator().split_once('-') {
            Some((a, b)) => format!("{a} of {b}"),
            None => unit.denominator().to_string(),
        };
        format!("{kind} per {denom}")
    }

    /// Parses a unit expression: either a registry token or a natural phrase
    /// like "eggs and larvae per gram of soil", optionally preceded by a
    /// number (threshold statements often embed one).
    pub fn parse_unit_phrase(&self, raw: &str) -> Result<ParsedUnit> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(Error::UnknownUnit {
                raw: raw.to_string(),
                reason: "empty unit".into(),
            });
        }
        if self.tokens.contains(trimmed) {
            return Ok(ParsedUnit::Concrete(UnitToken(trimmed.to_string())));
        }

        // Drop a leading numeric token so raw threshold statements parse.
        let without_number = match split_leading_number(trimmed) {
            Some((_, rest)) => rest,
            None => trimmed,
        };
        let lowered = crate::util::normalize_ws(without_number);
        let lowered = lowered.trim_matches(|c: char| c == '.' || c == ',').to_string();

        let (count_part, denom_part) = lowered.split_once(" per ").ok_or(Error::UnknownUnit {
            raw: raw.to_string(),
            reason: "expected '<count> per <denominator>'".into(),
        })?;

        let kind = self.resolve_count_kind(count_part).ok_or(Error::UnknownUnit {
            raw: raw.to_string(),
            reason: format!("unknown count kind {count_part:?}"),
        })?;

        let denom_part = denom_part.trim();
        if self
            .wildcard_denominators
            .iter()
            .any(|w| denom_part == w.as_str())
        {
            return Ok(ParsedUnit::Wildcard { count_kind: kind });
        }
        let denom = self
            .denominator_aliases
            .get(denom_part)
            .ok_or(Error::UnknownUnit {
                raw: raw.to_string(),
                reason: format!("unknown denominator {denom_part:?}"),
            })?;
        self.token(&format!("{kind}/{denom}")).map(ParsedUnit::Concrete)
    }

    /// Matches a count phrase, dropping leading qualifier words until an
    /// alias fits ("Trichodorus nematodes" -> "nematodes").
    fn resolve_count_kind(&self, phrase: &str) -> Option<String> {
        let words: Vec<&str> = phrase.split_whitespace().collect();
        for start in 0..words.len() {
            let candidate = words[start..].join(" ");
            if let Some(kind) = self.count_aliases.get(&candidate) {
                return Some(kind.clone());
            }
        }
        None
    }
}

/// Splits a leading number token (digits, commas, decimal point) off a string.
/// Returns `(value, rest)`; `None` when the string does not start with a digit.
fn split_leading_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim_start();
    let end = s
        .char_indices()
        .take_while(|(_, c)| c.is_ascii_digit() || *c == ',' || *c == '.')
        .map(|(i, c)| i + c.len_utf8())
        .last()?;
    let head = &s[..end];
    if !head.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    let cleaned = head.trim_end_matches(['.', ',']).replace(',', "");
    let value: f64 = cleaned.parse().ok()?;
    Some((value, &s[end..]))
}

/// Parses a severity or threshold statement like
/// "1 egg and larvae per gram of soil" into a [`Quantity`].
pub fn parse_quantity(registry: &UnitRegistry, raw: &str) -> Result<Quantity> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::UnparsableQuantity {
            raw: raw.to_string(),
            reason: "empty input".into(),
        });
    }
    let (value, rest) = split_leading_number(trimmed).ok_or(Error::UnparsableQuantity {
        raw: raw.to_string(),
        reason: "no leading number".into(),
    })?;
    match registry.parse_unit_phrase(rest)? {
        ParsedUnit::Concrete(unit) => Quantity::new(value, unit),
        ParsedUnit::Wildcard { .. } => Err(Error::UnknownUnit {
            raw: raw.to_string(),
            reason: "denominator is context-dependent; resolve against a counterpart unit".into(),
        }),
    }
}

/// Reconciles two unit expressions (tokens or raw phrases) onto one canonical
/// pair. "Per relevant soil volume" adopts the counterpart's denominator when
/// the count kinds match; anything else incomparable is a mismatch.
pub fn normalize_units(
    registry: &UnitRegistry,
    left: &str,
    right: &str,
) -> Result<(UnitToken, UnitToken)> {
    let a = registry.parse_unit_phrase(left)?;
    let b = registry.parse_unit_phrase(right)?;
    match (a, b) {
        (ParsedUnit::Concrete(x), ParsedUnit::Concrete(y)) => {
            if x == y {
                Ok((x, y))
            } else {
                Err(Error::UnitMismatch {
                    left: x.to_string(),
                    right: y.to_string(),
                })
            }
        }
        (ParsedUnit::Concrete(x), ParsedUnit::Wildcard { count_kind }) => {
            if x.count_kind() == count_kind {
                Ok((x.clone(), x))
            } else {
                Err(Error::UnitMismatch {
                    left: x.to_string(),
                    right: format!("{count_kind}/<relevant soil volume>"),
                })
            }
        }
        (ParsedUnit::Wildcard { count_kind }, ParsedUnit::Concrete(y)) => {
            if y.count_kind() == count_kind {
                Ok((y.clone(), y))
            } else {
                Err(Error::UnitMismatch {
                    left: format!("{count_kind}/<relevant soil volume>"),
                    right: y.to_string(),
                })
            }
        }
        (ParsedUnit::Wildcard { count_kind: a }, ParsedUnit::Wildcard { count_kind: b }) => {
            Err(Error::UnitMismatch {
                left: format!("{a}/<relevant soil volume>"),
                right: format!("{b}/<relevant soil volume>"),
            })
        }
    }
}
