//! Small shared helpers.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `data`.
pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Formats a non-negative decimal without a trailing `.0` for whole numbers.
///
/// `2.0` renders as `"2"`, `2.5` as `"2.5"`. Used everywhere a quantity value
/// appears in rendered text so that leakage scans and golden files agree on
/// one spelling.
pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_value_drops_trailing_zero() {
        assert_eq!(format_value(2.0), "2");
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(2.5), "2.5");
        assert_eq!(format_value(1000.0), "1000");
    }

    #[test]
    fn normalize_ws_collapses() {
        assert_eq!(normalize_ws("  Beet   Cyst\tNematode "), "beet cyst nematode");
    }
}
