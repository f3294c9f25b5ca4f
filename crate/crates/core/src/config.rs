//! Flat `key = value` configuration support.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A configuration section that reads and writes flat key-value pairs.
pub trait KeyValueConfig {
    /// Applies one setting. Returns `Ok(false)` for keys this section does
    /// not own.
    fn set(&mut self, key: &str, value: &str) -> Result<bool>;

    /// Every key with its current value, in a stable order.
    fn entries(&self) -> Vec<(&'static str, String)>;
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Usage(format!("invalid value {value:?} for `{key}`: {e}")))
}

/// Parses `true`/`false`/`1`/`0`/`yes`/`no`.
pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Usage(format!("invalid boolean {value:?} for `{key}`"))),
    }
}

/// Parses `lo..hi` or `lo-hi` (inclusive) or a single value.
pub fn parse_range(key: &str, value: &str) -> Result<(usize, usize)> {
    let v = value.trim();
    let (lo, hi) = match v.split_once("..").or_else(|| v.split_once('-')) {
        Some((a, b)) => (parse_value(key, a)?, parse_value(key, b.trim_start_matches('='))?),
        None => {
            let x = parse_value(key, v)?;
            (x, x)
        }
    };
    if lo > hi {
        return Err(Error::Usage(format!("empty range {value:?} for `{key}`")));
    }
    Ok((lo, hi))
}

pub fn format_range((lo, hi): (usize, usize)) -> String {
    format!("{lo}..{hi}")
}

/// Parses flat config text into `(line number, key, value)` triples.
/// Blank lines and `#` comments are skipped.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Usage(format!("line {}: expected `key = value`", i + 1)));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Usage(format!("line {}: missing key", i + 1)));
        }
        out.push((i + 1, key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Renders entries as `key = value` lines.
pub fn render(entries: &[(&'static str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_and_comments() {
        let parsed = parse_lines("# header\n\na = 1\n b=two  # note\n").unwrap();
        assert_eq!(
            parsed,
            vec![(3, "a".into(), "1".into()), (4, "b".into(), "two".into())]
        );
        let err = parse_lines("a = 1\noops\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("k", "2..6").unwrap(), (2, 6));
        assert_eq!(parse_range("k", "2-6").unwrap(), (2, 6));
        assert_eq!(parse_range("k", "4").unwrap(), (4, 4));
        assert!(parse_range("k", "6..2").is_err());
        assert_eq!(parse_range("k", &format_range((3, 9))).unwrap(), (3, 9));
    }

    #[test]
    fn booleans() {
        assert!(parse_bool("k", "TRUE").unwrap());
        assert!(!parse_bool("k", "0").unwrap());
        assert!(parse_bool("k", "maybe").is_err());
    }
}
